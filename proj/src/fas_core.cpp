#include "fasw/fas_core.hpp"

#include <cmath>

#include "fasw/error.hpp"
#include "fasw/ops.hpp"

namespace fasw {

void validate(const ModelConfig& cfg) {
    require(cfg.levels >= 2, ErrorKind::config, "model needs at least 2 pyramid levels, got " + std::to_string(cfg.levels));
    require(static_cast<int>(cfg.channels.size()) == cfg.levels, ErrorKind::config,
            "channels list has " + std::to_string(cfg.channels.size()) + " entries for " + std::to_string(cfg.levels) +
                " levels");
    for (int c : cfg.channels) require(c > 0, ErrorKind::config, "channel counts must be positive");
    const int stride = 1 << cfg.levels;
    require(cfg.height > 0 && cfg.width > 0 && cfg.height % stride == 0 && cfg.width % stride == 0, ErrorKind::config,
            "input size " + std::to_string(cfg.height) + "x" + std::to_string(cfg.width) +
                " is not divisible by the total stride " + std::to_string(stride));
    require(cfg.height % 4 == 0 && cfg.width % 4 == 0, ErrorKind::config, "input size must be divisible by 4");
}

std::vector<Shape> pyramid_shapes(const ModelConfig& cfg, int batch) {
    std::vector<Shape> out;
    for (int t = 0; t < cfg.levels; ++t) {
        out.push_back({batch, cfg.channels[static_cast<std::size_t>(t)], cfg.height >> (t + 1), cfg.width >> (t + 1)});
    }
    return out;
}

const char* to_string(ModelRole r) {
    switch (r) {
        case ModelRole::source_teacher: return "source_teacher";
        case ModelRole::target_teacher: return "target_teacher";
        case ModelRole::student: return "student";
    }
    return "student";
}

namespace {
int channel_total(const ModelConfig& cfg) {
    int n = 0;
    for (int c : cfg.channels) n += c;
    return n;
}
}  // namespace

FasModel::FasModel(const ModelConfig& cfg, ModelRole role) : cfg_(cfg), role_(role) {
    validate(cfg_);
    nn::Rng rng(cfg_.seed);
    int in = 3;
    for (int c : cfg_.channels) {
        levels_.emplace_back(in, c, 3, 2, rng);
        in = c;
    }
    depth_conv_ = nn::Conv2d(channel_total(cfg_), 1, 3, 1, rng);
    logit_ = nn::Linear(channel_total(cfg_), 1, rng);
}

FeaturePyramid FasModel::extract(const ad::Var& images) const {
    const Shape& s = images.shape();
    require(s.size() == 4 && s[1] == 3 && s[2] == cfg_.height && s[3] == cfg_.width, ErrorKind::input,
            "expected images N x 3 x " + std::to_string(cfg_.height) + " x " + std::to_string(cfg_.width) + ", got " +
                shape_string(s));
    FeaturePyramid out;
    ad::Var x = images;
    for (const auto& conv : levels_) {
        x = ad::leaky_relu(conv(x), cfg_.leaky_slope);
        out.push_back(x);
    }
    return out;
}

SceOutputs FasModel::sce(const FeaturePyramid& pyramid) const {
    require(static_cast<int>(pyramid.size()) == cfg_.levels, ErrorKind::input, "pyramid depth does not match model");
    const int hd = cfg_.depth_height(), wd = cfg_.depth_width();
    std::vector<ad::Var> resized, pooled;
    for (const auto& level : pyramid) {
        resized.push_back(ad::resize_to(level, hd, wd));
        pooled.push_back(ad::global_avg_pool(level));
    }
    SceOutputs out;
    out.depth = ad::sigmoid(depth_conv_(ad::concat_channels(resized)));
    // global_avg_pool yields N x C; stack per-level vectors along features.
    std::vector<ad::Var> as_maps;
    for (const auto& p : pooled) as_maps.push_back(ad::reshape(p, {p.shape()[0], p.shape()[1], 1, 1}));
    ad::Var feats = ad::concat_channels(as_maps);
    feats = ad::reshape(feats, {feats.shape()[0], feats.shape()[1]});
    out.live_logit = logit_(feats);
    return out;
}

nn::ParamSet FasModel::extractor_params() const {
    nn::ParamSet set;
    for (std::size_t i = 0; i < levels_.size(); ++i) levels_[i].register_params(set, "extractor.level" + std::to_string(i + 1));
    return set;
}

nn::ParamSet FasModel::sce_params() const {
    nn::ParamSet set;
    depth_conv_.register_params(set, "sce.depth");
    logit_.register_params(set, "sce.logit");
    return set;
}

nn::ParamSet FasModel::params() const {
    nn::ParamSet set = extractor_params();
    set.append(sce_params());
    return set;
}

FasModel FasModel::clone() const {
    FasModel copy(cfg_, role_);
    copy.params().copy_values_from(params());
    // Carry over frozen/trainable flags.
    const auto src = params().entries();
    const auto dst = copy.params().entries();
    for (std::size_t i = 0; i < src.size(); ++i) {
        ad::Var v = dst[i].second;
        v.set_requires_grad(src[i].second.requires_grad());
    }
    return copy;
}

FasModel build_toy_fas_model(const ModelConfig& cfg) { return FasModel(cfg); }

Tensor live_depth_target(int height, int width) {
    Tensor t({1, height, width});
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double u = ((x + 0.5) / width - 0.5) / 0.4;
            const double v = ((y + 0.5) / height - 0.5) / 0.45;
            t[static_cast<std::size_t>(y) * width + x] = std::max(0.0, 1.0 - (u * u + v * v));
        }
    }
    return t;
}

Tensor depth_targets(const std::vector<Label>& labels, int height, int width) {
    const Tensor bump = live_depth_target(height, width);
    const int n = static_cast<int>(labels.size());
    Tensor out({n, 1, height, width});
    const std::size_t plane = bump.size();
    for (int i = 0; i < n; ++i) {
        if (labels[static_cast<std::size_t>(i)] != Label::live) continue;
        std::copy(bump.data(), bump.data() + plane, out.data() + static_cast<std::size_t>(i) * plane);
    }
    return out;
}

ad::Var original_loss(const SceOutputs& out, const Tensor& depth_target, const Tensor& live_target) {
    require(all_finite(out.depth.value()) && all_finite(out.live_logit.value()), ErrorKind::numerical,
            "non-finite model outputs in original loss");
    require(out.depth.shape() == depth_target.shape(), ErrorKind::input,
            "depth target shape " + shape_string(depth_target.shape()) + " does not match output " +
                shape_string(out.depth.shape()));
    require(out.live_logit.shape() == live_target.shape(), ErrorKind::input, "live target shape mismatch");
    return ad::add(ad::mean_squared_diff(out.depth, ad::Var(depth_target)),
                   ad::bce_with_logits(out.live_logit, ad::Var(live_target)));
}

ad::Var original_loss(const SceOutputs& out, const std::vector<Label>& labels) {
    const Shape& ds = out.depth.shape();
    Tensor live({static_cast<int>(labels.size()), 1});
    for (std::size_t i = 0; i < labels.size(); ++i) live[i] = labels[i] == Label::live ? 1.0 : 0.0;
    return original_loss(out, depth_targets(labels, ds[2], ds[3]), live);
}

BinaryHead::BinaryHead(int in_features, std::uint64_t seed) {
    nn::Rng rng(seed);
    fc_ = nn::Linear(in_features, 2, rng);
}

ad::Var BinaryHead::logits(const FeaturePyramid& pyramid) const {
    require(!pyramid.empty(), ErrorKind::input, "empty pyramid");
    return fc_(ad::global_avg_pool(pyramid.back()));
}

ad::Var BinaryHead::probabilities(const FeaturePyramid& pyramid) const { return ad::softmax_rows(logits(pyramid)); }

nn::ParamSet BinaryHead::params() const {
    nn::ParamSet set;
    fc_.register_params(set, "head.fc");
    return set;
}

BinaryHead BinaryHead::clone() const {
    BinaryHead copy;
    copy.fc_.weight = ad::Var(fc_.weight.value(), fc_.weight.requires_grad());
    copy.fc_.bias = ad::Var(fc_.bias.value(), fc_.bias.requires_grad());
    return copy;
}

BinaryHead attach_binary_head(FasModel& model, std::uint64_t seed) {
    model.params().set_trainable(false);
    return BinaryHead(model.config().channels.back(), seed);
}

std::vector<int> class_indices(const std::vector<Label>& labels) {
    std::vector<int> out;
    out.reserve(labels.size());
    for (Label l : labels) out.push_back(l == Label::live ? 0 : 1);
    return out;
}

ad::Var head_cross_entropy(const ad::Var& logits, const std::vector<int>& classes) {
    const Shape& s = logits.shape();
    require(s.size() == 2 && s[0] == static_cast<int>(classes.size()), ErrorKind::input, "class count mismatch");
    Tensor onehot({s[0], s[1]}, 0.0);
    for (int i = 0; i < s[0]; ++i) {
        const int c = classes[static_cast<std::size_t>(i)];
        require(c >= 0 && c < s[1], ErrorKind::input, "class index out of range");
        onehot[static_cast<std::size_t>(i) * s[1] + c] = 1.0;
    }
    // -(1/N) sum_i log p_i[c_i]
    return ad::scale(ad::sum(ad::mul(ad::log_softmax_rows(logits), ad::Var(onehot))), -1.0 / s[0]);
}

std::vector<double> spoof_scores(const ad::Var& live_logit) {
    std::vector<double> out;
    for (double z : live_logit.value().storage()) {
        const double p_live = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        out.push_back(1.0 - p_live);
    }
    return out;
}

LossHistory train_original(FasModel& model, const BatchSampler& next, std::size_t epoch_size,
                           const TrainSchedule& schedule) {
    validate(schedule);
    nn::ParamSet params = model.params();
    params.set_trainable(true);
    nn::Adam opt(params, schedule.lr);
    Rng rng(schedule.seed);
    const int steps = batches_per_epoch(schedule, epoch_size);
    LossHistory history;
    double lr = schedule.lr;
    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        opt.set_lr(lr);
        EpochMeter meter;
        for (int step = 0; step < steps; ++step) {
            const Batch batch = next(rng);
            params.zero_grad();
            const ad::Var loss = original_loss(model.sce(model.extract(batch.images)), batch.labels);
            guard_finite(loss.item(), "L_Orig at epoch " + std::to_string(epoch), params, schedule);
            meter.add("orig", loss.item());
            ad::backward(loss);
            opt.step();
        }
        history.push_back(meter.finish(epoch, lr));
        lr *= schedule.lr_decay;
    }
    params.zero_grad();
    return history;
}

FasModel pretrain_source(const ModelConfig& cfg, const DatasetManifest& source_train, const TrainSchedule& schedule,
                         LossHistory* history) {
    FasModel model(cfg, ModelRole::source_teacher);
    LossHistory h = train_original(model, manifest_sampler(source_train, schedule.batch_size, schedule.live_fraction),
                                   source_train.samples.size(), schedule);
    if (history) *history = std::move(h);
    return model;
}

LossHistory train_binary_head(const FasModel& backbone, BinaryHead& head, const DatasetManifest& train,
                              const TrainSchedule& schedule) {
    validate(schedule);
    nn::ParamSet params = head.params();
    params.set_trainable(true);
    nn::Adam opt(params, schedule.lr);
    Rng rng(schedule.seed);
    const BatchSampler next = manifest_sampler(train, schedule.batch_size, schedule.live_fraction);
    const int steps = batches_per_epoch(schedule, train.samples.size());
    LossHistory history;
    double lr = schedule.lr;
    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        opt.set_lr(lr);
        EpochMeter meter;
        for (int step = 0; step < steps; ++step) {
            const Batch batch = next(rng);
            FeaturePyramid pyramid;
            {
                ad::NoGradGuard no_grad;
                pyramid = backbone.extract(batch.images);
            }
            params.zero_grad();
            const ad::Var loss = head_cross_entropy(head.logits(pyramid), class_indices(batch.labels));
            guard_finite(loss.item(), "head loss at epoch " + std::to_string(epoch), params, schedule);
            meter.add("head_ce", loss.item());
            ad::backward(loss);
            opt.step();
        }
        history.push_back(meter.finish(epoch, lr));
        lr *= schedule.lr_decay;
    }
    params.zero_grad();
    return history;
}

}  // namespace fasw
