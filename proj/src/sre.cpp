#include "fasw/sre.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "fasw/error.hpp"
#include "fasw/ops.hpp"

namespace fasw {

Sre::Sre(const ModelConfig& model_cfg, int hidden, std::uint64_t seed)
    : channels_(model_cfg.channels), height_(model_cfg.height), width_(model_cfg.width), hidden_(hidden),
      slope_(model_cfg.leaky_slope) {
    validate(model_cfg);
    require(hidden > 0, ErrorKind::config, "SRE hidden width must be positive");
    nn::Rng rng(seed);
    int total = 0;
    for (int c : channels_) total += c;
    conv1_ = nn::Conv2d(total, hidden, 3, 1, rng);
    conv2_ = nn::Conv2d(hidden, 1, 3, 1, rng);
    gate_ = ad::Var(Tensor({1}, 0.0), true);
}

ad::Var Sre::forward(const FeaturePyramid& pyramid) const {
    require(pyramid.size() == channels_.size(), ErrorKind::input,
            "SRE expects " + std::to_string(channels_.size()) + " pyramid levels, got " + std::to_string(pyramid.size()));
    std::vector<ad::Var> up;
    for (std::size_t i = 0; i < pyramid.size(); ++i) {
        const Shape& s = pyramid[i].shape();
        require(s.size() == 4 && s[1] == channels_[i], ErrorKind::input,
                "SRE level " + std::to_string(i + 1) + " has shape " + shape_string(s));
        // Centre each channel over space. Leaky features are mostly positive on
        // every pixel, and the l1 mask gradient through a sigmoid then drives
        // all weights down together when spoof pixels are a minority; the
        // estimate collapses to an all-zero mask and never recovers.
        const ad::Var spatial_mean = ad::reshape(ad::global_avg_pool(pyramid[i]), {s[0], s[1], 1, 1});
        const ad::Var centred = ad::sub(pyramid[i], ad::resize_to(spatial_mean, s[2], s[3]));
        up.push_back(ad::resize_to(centred, height_, width_));
    }
    ad::Var h = ad::leaky_relu(conv1_(ad::concat_channels(up)), slope_);
    return ad::sigmoid(conv2_(h));
}

nn::ParamSet Sre::params() const {
    nn::ParamSet set;
    conv1_.register_params(set, "sre.conv1");
    conv2_.register_params(set, "sre.conv2");
    set.add("sre.gate", gate_);
    return set;
}

Sre Sre::clone() const {
    Sre copy = *this;
    auto fresh = [](const ad::Var& v) { return ad::Var(v.value(), v.requires_grad()); };
    copy.conv1_.weight = fresh(conv1_.weight);
    copy.conv1_.bias = fresh(conv1_.bias);
    copy.conv2_.weight = fresh(conv2_.weight);
    copy.conv2_.bias = fresh(conv2_.bias);
    copy.gate_ = fresh(gate_);
    return copy;
}

Tensor binary_view(const Tensor& soft) {
    Tensor out = soft;
    for (double& v : out.values()) v = v >= 0.5 ? 1.0 : 0.0;
    return out;
}

ad::Var coupled_live_logit(const SceOutputs& out, const Sre* sre, const ad::Var& mask) {
    if (sre == nullptr) return out.live_logit;
    return ad::add(out.live_logit, ad::mul_scalar_var(ad::global_avg_pool(mask), sre->gate()));
}

ScoredForward scored_forward(const FasModel& model, const Sre* sre, const ad::Var& images) {
    ScoredForward f;
    f.pyramid = model.extract(images);
    f.sce = model.sce(f.pyramid);
    if (sre != nullptr) {
        f.mask = sre->forward(f.pyramid);
        f.sce.live_logit = coupled_live_logit(f.sce, sre, f.mask);
    }
    return f;
}

Tensor OracleReconstructor::reconstruct(const ImageSample& sample) const {
    require(sample.base_live.has_value(), ErrorKind::pipeline,
            "oracle reconstructor needs the base live image of " + sample.sample_id);
    return *sample.base_live;
}

LiveSubspaceReconstructor::LiveSubspaceReconstructor(const DatasetManifest& live_source, int components) {
    std::vector<const Tensor*> live;
    for (const auto& s : live_source.samples) {
        if (s.label == Label::live && !s.image.empty()) live.push_back(&s.image);
    }
    require(!live.empty(), ErrorKind::data, "live-subspace reconstructor needs loaded live images");
    require(components >= 0, ErrorKind::config, "component count must be >= 0");
    shape_ = live.front()->shape();
    const Eigen::Index n = static_cast<Eigen::Index>(live.size());
    const Eigen::Index d = static_cast<Eigen::Index>(live.front()->size());
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        require(live[static_cast<std::size_t>(i)]->shape() == shape_, ErrorKind::data, "live images differ in size");
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = (*live[static_cast<std::size_t>(i)])[static_cast<std::size_t>(j)];
    }
    const Eigen::RowVectorXd mu = x.colwise().mean();
    x.rowwise() -= mu;
    mean_.assign(mu.data(), mu.data() + d);
    const int k = static_cast<int>(std::min<Eigen::Index>(components, std::min(n, d)));
    if (k == 0) return;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
    for (int c = 0; c < k; ++c) {
        const Eigen::VectorXd v = svd.matrixV().col(c);
        basis_.emplace_back(v.data(), v.data() + d);
    }
}

Tensor LiveSubspaceReconstructor::reconstruct(const ImageSample& sample) const {
    require(sample.image.shape() == shape_, ErrorKind::pipeline,
            "image " + shape_string(sample.image.shape()) + " does not match reconstructor " + shape_string(shape_));
    std::vector<double> centered(mean_.size());
    for (std::size_t j = 0; j < mean_.size(); ++j) centered[j] = sample.image[j] - mean_[j];
    Tensor out(shape_);
    for (std::size_t j = 0; j < mean_.size(); ++j) out[j] = mean_[j];
    for (const auto& v : basis_) {
        double dot = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j) dot += centered[j] * v[j];
        for (std::size_t j = 0; j < v.size(); ++j) out[j] += dot * v[j];
    }
    for (double& p : out.values()) p = std::clamp(p, 0.0, 1.0);
    return out;
}

Tensor difference_gray(const Tensor& spoof, const Tensor& live) {
    require(spoof.shape() == live.shape() && spoof.rank() == 3, ErrorKind::pipeline,
            "reconstruction shape " + shape_string(live.shape()) + " does not match input " + shape_string(spoof.shape()));
    const int c = spoof.dim(0), h = spoof.dim(1), w = spoof.dim(2);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor out({1, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) out[i] += std::fabs(spoof[ch * plane + i] - live[ch * plane + i]);
    return out;
}

Tensor threshold_mask(const Tensor& gray, double threshold) {
    Tensor out = gray;
    for (double& v : out.values()) v = v >= threshold ? 1.0 : 0.0;
    return out;
}

PreliminaryMask compute_preliminary_mask(const ImageSample& sample, const Reconstructor& rec, double threshold) {
    require(sample.image.rank() == 3, ErrorKind::input, sample.sample_id + ": image not loaded");
    const double channel_max = sample.image.dim(0);
    require(threshold > 0.0 && threshold < channel_max, ErrorKind::config,
            "threshold must lie in (0, " + std::to_string(channel_max) + ")");
    PreliminaryMask pm;
    pm.threshold_used = threshold;
    pm.provenance = rec.provenance();
    if (sample.label == Label::live) {
        pm.mask = Tensor({1, sample.image.dim(1), sample.image.dim(2)}, 0.0);
        return pm;
    }
    pm.mask = threshold_mask(difference_gray(sample.image, rec.reconstruct(sample)), threshold);
    return pm;
}

Tensor resample_nearest(const Tensor& t, int out_h, int out_w) {
    require(t.rank() == 3 || t.rank() == 4, ErrorKind::input, "resample_nearest expects CHW or NCHW");
    const bool batched = t.rank() == 4;
    const int n = batched ? t.dim(0) : 1;
    const int c = t.dim(batched ? 1 : 0), h = t.dim(batched ? 2 : 1), w = t.dim(batched ? 3 : 2);
    if (h == out_h && w == out_w) return t;
    Tensor out(batched ? Shape{n, c, out_h, out_w} : Shape{c, out_h, out_w});
    for (int p = 0; p < n * c; ++p)
        for (int y = 0; y < out_h; ++y) {
            const int sy = std::min(h - 1, static_cast<int>((y + 0.5) * h / out_h));
            for (int x = 0; x < out_w; ++x) {
                const int sx = std::min(w - 1, static_cast<int>((x + 0.5) * w / out_w));
                out[(static_cast<std::size_t>(p) * out_h + y) * out_w + x] =
                    t[(static_cast<std::size_t>(p) * h + sy) * w + sx];
            }
        }
    return out;
}

ad::Var mask_loss(const ad::Var& soft, const Tensor& preliminary) {
    const Shape& s = soft.shape();
    require(s.size() == 4 && preliminary.rank() == 4 && preliminary.dim(0) == s[0] && preliminary.dim(1) == s[1],
            ErrorKind::input,
            "mask shapes " + shape_string(s) + " and " + shape_string(preliminary.shape()) + " are incompatible");
    return ad::mean_abs_diff(soft, ad::Var(resample_nearest(preliminary, s[2], s[3])));
}

double soft_iou(const Tensor& soft, const Tensor& gt) {
    require(soft.size() == gt.size(), ErrorKind::input, "IoU operands differ in size");
    double inter = 0.0, uni = 0.0;
    for (std::size_t i = 0; i < soft.size(); ++i) {
        inter += soft[i] * gt[i];
        uni += soft[i] + gt[i] - soft[i] * gt[i];
    }
    return uni == 0.0 ? 1.0 : inter / uni;
}

Stage1Result finetune_stage1(const FasModel& source, const Sre& sre_init, const DatasetManifest& target_train,
                             const Reconstructor& rec, const Stage1Schedule& schedule) {
    validate(schedule.train);
    require(schedule.mask_epochs >= 0 && schedule.mask_epochs <= schedule.train.epochs, ErrorKind::config,
            "mask_epochs must lie in [0, epochs]");
    require(schedule.mask_weight >= 0.0, ErrorKind::config, "mask weight must be >= 0");

    Stage1Result r{source.clone(), sre_init.clone(), {}};
    r.target.set_role(ModelRole::target_teacher);
    r.target.params().set_trainable(true);
    r.sre.params().set_trainable(true);

    std::vector<Tensor> prelim;
    if (schedule.mask_epochs > 0) {
        for (const auto& s : target_train.samples) prelim.push_back(compute_preliminary_mask(s, rec, schedule.threshold).mask);
    }

    nn::ParamSet trainable = r.target.params();
    trainable.append(r.sre.params());
    nn::Adam opt(trainable, schedule.train.lr);
    Rng rng(schedule.train.seed);
    const BatchSampler next = manifest_sampler(target_train, schedule.train.batch_size, schedule.train.live_fraction);
    const int steps = batches_per_epoch(schedule.train, target_train.samples.size());
    double lr = schedule.train.lr;

    for (int epoch = 0; epoch < schedule.train.epochs; ++epoch) {
        const bool supervise = epoch < schedule.mask_epochs;
        opt.set_lr(lr);
        EpochMeter meter;
        for (int step = 0; step < steps; ++step) {
            const Batch batch = next(rng);
            trainable.zero_grad();
            const ScoredForward f = scored_forward(r.target, &r.sre, ad::Var(batch.images));
            ad::Var l_orig = original_loss(f.sce, batch.labels);
            ad::Var loss = l_orig;
            if (supervise) {
                std::vector<Tensor> rows;
                for (std::size_t idx : batch.indices) rows.push_back(prelim[idx]);
                ad::Var l_mask = mask_loss(f.mask, stack(rows));
                meter.add("mask", l_mask.item());
                loss = ad::add(l_orig, ad::scale(l_mask, schedule.mask_weight));
            }
            guard_finite(loss.item(), "stage-1 loss at epoch " + std::to_string(epoch), trainable, schedule.train);
            meter.add("orig", l_orig.item());
            meter.add("total", loss.item());
            ad::backward(loss);
            opt.step();
        }
        r.history.push_back(meter.finish(epoch, lr));
        lr *= schedule.train.lr_decay;
    }
    trainable.zero_grad();
    return r;
}

double mean_spoof_iou(const FasModel& model, const Sre& sre, const DatasetManifest& m) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
        if (m.samples[i].label == Label::spoof && m.samples[i].gt_mask) rows.push_back(i);
    }
    require(!rows.empty(), ErrorKind::data, "no spoof samples with ground-truth masks");
    ad::NoGradGuard no_grad;
    double total = 0.0;
    constexpr std::size_t kChunk = 16;
    for (std::size_t b = 0; b < rows.size(); b += kChunk) {
        const std::vector<std::size_t> part(rows.begin() + static_cast<std::ptrdiff_t>(b),
                                            rows.begin() + static_cast<std::ptrdiff_t>(std::min(rows.size(), b + kChunk)));
        const Batch batch = make_batch(m, part);
        const Tensor soft = sre.forward(model.extract(batch.images)).value();
        const std::size_t plane = soft.size() / part.size();
        for (std::size_t i = 0; i < part.size(); ++i) {
            const Tensor one({1, static_cast<int>(plane)},
                             std::vector<double>(soft.data() + i * plane, soft.data() + (i + 1) * plane));
            const Tensor gt({1, static_cast<int>(plane)},
                            std::vector<double>(batch.masks.data() + i * plane, batch.masks.data() + (i + 1) * plane));
            total += soft_iou(one, gt);
        }
    }
    return total / static_cast<double>(rows.size());
}

}  // namespace fasw
