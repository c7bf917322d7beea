#include "fasw/wrapper.hpp"

#include <cmath>
#include <set>

#include "fasw/checkpoint.hpp"
#include "fasw/error.hpp"
#include "fasw/io.hpp"
#include "fasw/model_io.hpp"
#include "fasw/ops.hpp"

namespace fasw {

const char* to_string(DiscMode m) {
    switch (m) {
        case DiscMode::chained: return "chained";
        case DiscMode::shared: return "shared";
        case DiscMode::single_concat: return "single_concat";
    }
    return "chained";
}

DiscMode parse_disc_mode(const std::string& s) {
    for (DiscMode m : {DiscMode::chained, DiscMode::shared, DiscMode::single_concat}) {
        if (s == to_string(m)) return m;
    }
    fail(ErrorKind::config, "unknown disc_mode '" + s + "' (expected chained, shared or single_concat)");
}

MultiScaleDiscriminator::MultiScaleDiscriminator(std::vector<int> level_channels, int hidden, DiscMode mode,
                                                 std::uint64_t seed, double leaky_slope)
    : channels_(std::move(level_channels)), hidden_(hidden), mode_(mode), slope_(leaky_slope) {
    require(!channels_.empty(), ErrorKind::config, "discriminator needs at least one level");
    require(hidden > 0, ErrorKind::config, "discriminator width must be positive");
    nn::Rng rng(seed);
    if (mode_ == DiscMode::single_concat) {
        int total = 0;
        for (int c : channels_) total += c;
        blocks_.emplace_back(total, hidden, 3, 2, rng);
    } else {
        for (std::size_t l = 0; l < channels_.size(); ++l) {
            blocks_.emplace_back(channels_[l] + (l == 0 ? 0 : hidden), hidden, 3, 2, rng);
        }
    }
    out_ = nn::Linear(hidden, 1, rng);
}

DiscriminatorOutputs MultiScaleDiscriminator::forward(const FeaturePyramid& pyramid) const {
    require(pyramid.size() == channels_.size(), ErrorKind::config,
            "discriminator chain has " + std::to_string(channels_.size()) + " levels, pyramid has " +
                std::to_string(pyramid.size()));
    for (std::size_t l = 0; l < pyramid.size(); ++l) {
        require(pyramid[l].shape().size() == 4 && pyramid[l].shape()[1] == channels_[l], ErrorKind::config,
                "discriminator level " + std::to_string(l + 1) + " expects " + std::to_string(channels_[l]) +
                    " channels, got " + shape_string(pyramid[l].shape()));
    }
    DiscriminatorOutputs out;
    if (mode_ == DiscMode::single_concat) {
        const int h = pyramid[0].shape()[2], w = pyramid[0].shape()[3];
        std::vector<ad::Var> parts;
        for (const auto& level : pyramid) parts.push_back(ad::resize_to(level, h, w));
        out.levels.push_back(ad::leaky_relu(blocks_[0](ad::concat_channels(parts)), slope_));
    } else {
        for (std::size_t l = 0; l < pyramid.size(); ++l) {
            ad::Var in = pyramid[l];
            if (l > 0) {
                const Shape& s = pyramid[l].shape();
                const std::vector<ad::Var> parts{in, ad::resize_to(out.levels.back(), s[2], s[3])};
                in = ad::concat_channels(parts);
            }
            out.levels.push_back(ad::leaky_relu(blocks_[l](in), slope_));
        }
    }
    ad::Var logit = out_(ad::global_avg_pool(out.levels.back()));
    out.final_prob = ad::clamp(ad::sigmoid(logit), kProbEpsilon, 1.0 - kProbEpsilon);
    return out;
}

nn::ParamSet MultiScaleDiscriminator::params(const std::string& prefix) const {
    nn::ParamSet set;
    for (std::size_t l = 0; l < blocks_.size(); ++l) blocks_[l].register_params(set, prefix + ".level" + std::to_string(l + 1));
    out_.register_params(set, prefix + ".out");
    return set;
}

nn::ParamSet DiscriminatorPair::params() const {
    if (source == target) return source->params("disc_shared");
    nn::ParamSet set = source->params("disc_S");
    set.append(target->params("disc_T"));
    return set;
}

DiscriminatorPair make_discriminators(const ModelConfig& cfg, DiscMode mode, int hidden, std::uint64_t seed) {
    DiscriminatorPair p;
    p.source = std::make_shared<MultiScaleDiscriminator>(cfg.channels, hidden, mode, derive_seed(seed, 1),
                                                         cfg.leaky_slope);
    p.target = mode == DiscMode::shared ? p.source
                                        : std::make_shared<MultiScaleDiscriminator>(cfg.channels, hidden, mode,
                                                                                    derive_seed(seed, 2), cfg.leaky_slope);
    return p;
}

namespace {

void check_probabilities(const ad::Var& p, const char* what) {
    for (double v : p.value().storage()) {
        require(std::isfinite(v) && v >= kProbEpsilon && v <= 1.0 - kProbEpsilon, ErrorKind::numerical,
                std::string(what) + " probability " + std::to_string(v) + " outside [eps, 1-eps]");
    }
}

ad::Var neg_mean_log(const ad::Var& p) { return ad::scale(ad::mean(ad::log(p)), -1.0); }
ad::Var neg_mean_log_complement(const ad::Var& p) {
    return ad::scale(ad::mean(ad::log(ad::add_scalar(ad::scale(p, -1.0), 1.0))), -1.0);
}

/// Sets requires_grad on a parameter set and restores the previous flags on exit.
class TrainableScope {
public:
    TrainableScope(nn::ParamSet set, bool on) : set_(std::move(set)) {
        for (const auto& e : set_.entries()) previous_.push_back(e.second.requires_grad());
        set_.set_trainable(on);
    }
    ~TrainableScope() {
        std::size_t i = 0;
        for (const auto& e : set_.entries()) {
            ad::Var v = e.second;
            v.set_requires_grad(previous_[i++]);
        }
    }
    TrainableScope(const TrainableScope&) = delete;
    TrainableScope& operator=(const TrainableScope&) = delete;

private:
    nn::ParamSet set_;
    std::vector<bool> previous_;
};

FeaturePyramid detached(const FeaturePyramid& p) {
    FeaturePyramid out;
    for (const auto& v : p) out.push_back(v.detach());
    return out;
}

FeaturePyramid teacher_pyramid(const FasModel& teacher, const Tensor& images) {
    ad::NoGradGuard no_grad;
    return teacher.extract(images);
}

}  // namespace

AdversarialLosses adversarial_losses(const ad::Var& d_teacher, const ad::Var& d_student) {
    check_probabilities(d_teacher, "teacher");
    check_probabilities(d_student, "student");
    AdversarialLosses out;
    out.generator = ad::add(neg_mean_log(d_teacher.detach()), neg_mean_log_complement(d_student));
    out.discriminator = ad::add(neg_mean_log_complement(d_teacher), neg_mean_log(d_student));
    return out;
}

ad::Var spoof_consistency_loss(const ad::Var& mask_new, const ad::Var& mask_src) {
    require(mask_new.shape() == mask_src.shape(), ErrorKind::config,
            "mask resolutions differ: " + shape_string(mask_new.shape()) + " vs " + shape_string(mask_src.shape()));
    return ad::mean_abs_diff(mask_new, mask_src.detach());
}

void validate(const LossWeights& w) {
    for (double v : {w.orig, w.spoof, w.src, w.tgt}) {
        require(std::isfinite(v) && v >= 0.0, ErrorKind::config, "loss weights must be finite and >= 0");
    }
}

LossWeights parse_lambdas(const std::string& csv) {
    const auto parts = io::split(csv, ',');
    require(parts.size() == 4, ErrorKind::config, "expected four comma-separated loss weights, got '" + csv + "'");
    double v[4];
    for (std::size_t i = 0; i < 4; ++i) {
        try {
            std::size_t used = 0;
            v[i] = std::stod(io::trim(parts[i]), &used);
            require(used == io::trim(parts[i]).size(), ErrorKind::config, "bad loss weight '" + parts[i] + "'");
        } catch (const std::logic_error&) {
            fail(ErrorKind::config, "bad loss weight '" + parts[i] + "'");
        }
    }
    LossWeights w{v[0], v[1], v[2], v[3]};
    validate(w);
    return w;
}

ad::Var total_loss(const ad::Var& l_orig, const ad::Var& l_spoof, const ad::Var& l_s, const ad::Var& l_t,
                   const LossWeights& w) {
    validate(w);
    std::vector<ad::Var> terms;
    std::vector<double> weights;
    const std::pair<const ad::Var*, double> items[] = {{&l_orig, w.orig}, {&l_spoof, w.spoof}, {&l_s, w.src}, {&l_t, w.tgt}};
    for (const auto& [term, weight] : items) {
        if (weight == 0.0) continue;
        require(term->defined(), ErrorKind::config, "loss term with nonzero weight is missing");
        require(std::isfinite(term->item()), ErrorKind::numerical, "non-finite loss component");
        terms.push_back(*term);
        weights.push_back(weight);
    }
    if (terms.empty()) return ad::Var(Tensor({1}, 0.0));
    return ad::weighted_sum(terms, weights);
}

Stage2Result train_stage2(const FasModel& source, const FasModel& target, const Sre* sre, FasModel& student,
                          DiscriminatorPair& discs, const DatasetManifest& target_train, const LossWeights& w,
                          const Stage2Options& opt) {
    validate(w);
    validate(opt.train);
    require(w.spoof == 0.0 || sre != nullptr, ErrorKind::config, "lambda2 > 0 requires a trained SRE");
    require(discs.source && discs.target, ErrorKind::config, "discriminators missing");
    require(std::isfinite(opt.disc_lr) && opt.disc_lr >= 0.0, ErrorKind::config, "disc_lr must be finite and >= 0");

    TrainableScope frozen_src(source.params(), false);
    TrainableScope frozen_tgt(target.params(), false);
    std::optional<TrainableScope> frozen_sre;
    if (sre) frozen_sre.emplace(sre->params(), false);

    nn::ParamSet student_params = student.params();
    nn::ParamSet disc_params = discs.params();
    student_params.set_trainable(true);
    disc_params.set_trainable(true);
    nn::Adam student_opt(student_params, opt.train.lr);
    nn::Adam disc_opt(disc_params, opt.disc_lr);

    Rng rng(opt.train.seed);
    const BatchSampler next = manifest_sampler(target_train, opt.train.batch_size, opt.train.live_fraction);
    const int steps = batches_per_epoch(opt.train, target_train.samples.size());
    Stage2Result result;
    double lr = opt.train.lr;

    for (int epoch = 0; epoch < opt.train.epochs; ++epoch) {
        student_opt.set_lr(lr);
        EpochMeter meter;
        for (int step = 0; step < steps; ++step) {
            const Batch batch = next(rng);
            const FeaturePyramid p_src = teacher_pyramid(source, batch.images);
            const FeaturePyramid p_tgt = teacher_pyramid(target, batch.images);
            const FeaturePyramid p_new = student.extract(batch.images);

            // (i) discriminator step with the student detached.
            {
                disc_params.zero_grad();
                const FeaturePyramid p_new_fixed = detached(p_new);
                const ad::Var ds = adversarial_losses(discs.source->forward(p_src).final_prob,
                                                      discs.source->forward(p_new_fixed).final_prob)
                                       .discriminator;
                const ad::Var dt = adversarial_losses(discs.target->forward(p_tgt).final_prob,
                                                      discs.target->forward(p_new_fixed).final_prob)
                                       .discriminator;
                const ad::Var d_total = ad::add(ds, dt);
                guard_finite(d_total.item(), "discriminator loss at epoch " + std::to_string(epoch), disc_params, opt.train);
                ad::backward(d_total);
                disc_opt.step();
                meter.add("disc_S", ds.item());
                meter.add("disc_T", dt.item());
            }

            // (ii) student step with the discriminators frozen.
            TrainableScope frozen_discs(disc_params, false);
            student_params.zero_grad();
            ad::Var mask_new;
            ad::Var l_spoof;
            SceOutputs out = student.sce(p_new);
            if (sre) {
                mask_new = sre->forward(p_new);
                out.live_logit = coupled_live_logit(out, sre, mask_new);
                if (w.spoof != 0.0) {
                    ad::Var mask_src;
                    {
                        ad::NoGradGuard no_grad;
                        mask_src = sre->forward(p_src);
                    }
                    l_spoof = spoof_consistency_loss(mask_new, mask_src);
                }
            }
            const ad::Var l_orig = original_loss(out, batch.labels);
            ad::Var d_src_teacher, d_tgt_teacher;
            {
                ad::NoGradGuard no_grad;
                d_src_teacher = discs.source->forward(p_src).final_prob;
                d_tgt_teacher = discs.target->forward(p_tgt).final_prob;
            }
            const ad::Var l_s = adversarial_losses(d_src_teacher, discs.source->forward(p_new).final_prob).generator;
            const ad::Var l_t = adversarial_losses(d_tgt_teacher, discs.target->forward(p_new).final_prob).generator;
            const ad::Var total = total_loss(l_orig, l_spoof, l_s, l_t, w);
            guard_finite(total.item(), "stage-2 loss at epoch " + std::to_string(epoch), student_params, opt.train);
            ad::backward(total);
            student_opt.step();

            meter.add("orig", l_orig.item());
            if (l_spoof.defined()) meter.add("spoof", l_spoof.item());
            meter.add("L_S", l_s.item());
            meter.add("L_T", l_t.item());
            meter.add("total", total.item());
        }
        result.history.push_back(meter.finish(epoch, lr));
        lr *= opt.train.lr_decay;
    }
    student_params.zero_grad();
    disc_params.zero_grad();
    return result;
}

Stage2Result train_cross_dataset(const std::vector<const FasModel*>& teachers, FasModel& student,
                                 std::vector<MultiScaleDiscriminator*> discs, const DatasetManifest& mixed_train,
                                 const CrossDatasetOptions& opt) {
    validate(opt.train);
    require(opt.allow_any_teacher_count || teachers.size() == 3, ErrorKind::config,
            "cross-dataset training expects exactly 3 teachers, got " + std::to_string(teachers.size()));
    require(!teachers.empty(), ErrorKind::config, "at least one teacher is required");
    require(discs.size() == teachers.size(), ErrorKind::config, "need one discriminator per teacher");
    require(std::isfinite(opt.orig_weight) && opt.orig_weight >= 0.0 && std::isfinite(opt.adv_weight) &&
                opt.adv_weight >= 0.0,
            ErrorKind::config, "loss weights must be finite and >= 0");

    std::vector<std::unique_ptr<TrainableScope>> frozen;
    for (const FasModel* t : teachers) frozen.push_back(std::make_unique<TrainableScope>(t->params(), false));

    nn::ParamSet student_params = student.params();
    nn::ParamSet disc_params;
    for (std::size_t k = 0; k < discs.size(); ++k) disc_params.append(discs[k]->params("disc_" + std::to_string(k + 1)));
    student_params.set_trainable(true);
    disc_params.set_trainable(true);
    nn::Adam student_opt(student_params, opt.train.lr);
    nn::Adam disc_opt(disc_params, opt.disc_lr);

    Rng rng(opt.train.seed);
    const BatchSampler next = manifest_sampler(mixed_train, opt.train.batch_size, opt.train.live_fraction);
    const int steps = batches_per_epoch(opt.train, mixed_train.samples.size());
    Stage2Result result;
    double lr = opt.train.lr;

    for (int epoch = 0; epoch < opt.train.epochs; ++epoch) {
        student_opt.set_lr(lr);
        EpochMeter meter;
        for (int step = 0; step < steps; ++step) {
            const Batch batch = next(rng);
            std::vector<FeaturePyramid> p_teach;
            for (const FasModel* t : teachers) p_teach.push_back(teacher_pyramid(*t, batch.images));
            const FeaturePyramid p_new = student.extract(batch.images);
            {
                disc_params.zero_grad();
                const FeaturePyramid fixed = detached(p_new);
                std::vector<ad::Var> terms;
                for (std::size_t k = 0; k < discs.size(); ++k) {
                    terms.push_back(adversarial_losses(discs[k]->forward(p_teach[k]).final_prob,
                                                       discs[k]->forward(fixed).final_prob)
                                        .discriminator);
                }
                const std::vector<double> ones(terms.size(), 1.0);
                const ad::Var d_total = ad::weighted_sum(terms, ones);
                guard_finite(d_total.item(), "discriminator loss at epoch " + std::to_string(epoch), disc_params, opt.train);
                ad::backward(d_total);
                disc_opt.step();
                meter.add("disc", d_total.item());
            }
            TrainableScope frozen_discs(disc_params, false);
            student_params.zero_grad();
            std::vector<ad::Var> terms{original_loss(student.sce(p_new), batch.labels)};
            std::vector<double> weights{opt.orig_weight};
            meter.add("orig", terms.front().item());
            for (std::size_t k = 0; k < discs.size(); ++k) {
                ad::Var d_teacher;
                {
                    ad::NoGradGuard no_grad;
                    d_teacher = discs[k]->forward(p_teach[k]).final_prob;
                }
                terms.push_back(adversarial_losses(d_teacher, discs[k]->forward(p_new).final_prob).generator);
                weights.push_back(opt.adv_weight);
                meter.add("gen_" + std::to_string(k + 1), terms.back().item());
            }
            const ad::Var total = ad::weighted_sum(terms, weights);
            guard_finite(total.item(), "cross-dataset loss at epoch " + std::to_string(epoch), student_params, opt.train);
            ad::backward(total);
            student_opt.step();
            meter.add("total", total.item());
        }
        result.history.push_back(meter.finish(epoch, lr));
        lr *= opt.train.lr_decay;
    }
    student_params.zero_grad();
    disc_params.zero_grad();
    return result;
}

nn::ParamSet InferenceModel::params() const {
    nn::ParamSet set = model.params();
    if (sre) set.append(sre->params());
    return set;
}

InferenceModel export_inference(const FasModel& student, const Sre* sre) {
    InferenceModel m{student.clone(), std::nullopt};
    m.model.set_role(ModelRole::student);
    if (sre) m.sre = sre->clone();
    return m;
}

namespace {
constexpr const char* kInferenceFormat = "fasw-inference-1";
}  // namespace

void save_inference(const std::filesystem::path& path, const InferenceModel& m) {
    ArchiveData a;
    a.meta = model_config_meta(m.model.config());
    a.meta["format"] = kInferenceFormat;
    a.meta["sre_hidden"] = m.sre ? std::to_string(m.sre->hidden()) : "none";
    a.arrays = m.params().snapshot();
    save_archive(path, a);
}

InferenceModel load_inference(const std::filesystem::path& path) {
    const ArchiveData a = load_archive(path);
    auto meta = [&](const std::string& key) {
        auto it = a.meta.find(key);
        require(it != a.meta.end(), ErrorKind::schema, path.string() + ": missing metadata '" + key + "'");
        return it->second;
    };
    require(meta("format") == kInferenceFormat, ErrorKind::schema, path.string() + ": not an inference model");
    const ModelConfig cfg = model_config_from_meta(a.meta, path.string());
    InferenceModel m{FasModel(cfg), std::nullopt};
    const std::string hidden = meta("sre_hidden");
    if (hidden != "none") m.sre = Sre(cfg, std::stoi(hidden), 0);
    nn::ParamSet set = m.params();
    std::set<std::string> expected;
    for (const auto& n : set.names()) expected.insert(n);
    for (const auto& [name, _] : a.arrays) {
        require(expected.count(name), ErrorKind::schema, path.string() + ": unexpected parameter '" + name + "'");
    }
    set.load(a.arrays);
    set.set_trainable(false);
    return m;
}

Prediction predict(const InferenceModel& m, const Tensor& images) {
    Tensor batch = images;
    if (batch.rank() == 3) batch = batch.reshaped({1, batch.dim(0), batch.dim(1), batch.dim(2)});
    ad::NoGradGuard no_grad;
    const ScoredForward f = scored_forward(m.model, m.sre ? &*m.sre : nullptr, ad::Var(batch));
    Prediction p;
    p.scores = spoof_scores(f.sce.live_logit);
    if (f.mask.defined()) p.masks = f.mask.value();
    return p;
}

}  // namespace fasw
