#include "fasw/baselines.hpp"

#include <cmath>

#include "fasw/error.hpp"
#include "fasw/ops.hpp"

namespace fasw {

BaselineResult naive_finetune(const FasModel& source, const DatasetManifest& target_train, const TrainSchedule& schedule) {
    BaselineResult r{source.clone(), std::nullopt, {}};
    r.model.set_role(ModelRole::student);
    r.history = train_original(r.model, manifest_sampler(target_train, schedule.batch_size, schedule.live_fraction),
                               target_train.samples.size(), schedule);
    return r;
}

BaselineResult joint_train(const ModelConfig& cfg, const DatasetManifest& source_train,
                           const DatasetManifest& target_train, const TrainSchedule& schedule) {
    require(!source_train.samples.empty(), ErrorKind::config, "joint training needs source data");
    BaselineResult r{FasModel(cfg), std::nullopt, {}};
    const BatchSampler next = mixed_sampler({&source_train, &target_train}, schedule.batch_size, schedule.live_fraction);
    r.history = train_original(r.model, next, source_train.samples.size() + target_train.samples.size(), schedule);
    return r;
}

ad::Var distillation_kl(const ad::Var& teacher_logits, const ad::Var& student_logits, double temperature) {
    require(temperature > 0.0 && std::isfinite(temperature), ErrorKind::config, "temperature must be > 0");
    require(teacher_logits.shape() == student_logits.shape() && teacher_logits.shape().size() == 2, ErrorKind::input,
            "logit shapes differ");
    const ad::Var t_log = ad::log_softmax_rows(ad::scale(teacher_logits.detach(), 1.0 / temperature));
    const ad::Var s_log = ad::log_softmax_rows(ad::scale(student_logits, 1.0 / temperature));
    const ad::Var t_prob = ad::Var(ad::softmax_rows(t_log).value());
    const double rows = teacher_logits.shape()[0];
    return ad::scale(ad::sum(ad::mul(t_prob, ad::sub(t_log, s_log))), 1.0 / rows);
}

BaselineResult lwf_distill(const FasModel& source, const BinaryHead& source_head, const DatasetManifest& target_train,
                           const LwfOptions& opt) {
    validate(opt.train);
    require(opt.temperature > 0.0 && std::isfinite(opt.temperature), ErrorKind::config, "temperature must be > 0");
    require(opt.distill_weight >= 0.0 && std::isfinite(opt.distill_weight), ErrorKind::config,
            "distill_weight must be >= 0");
    BaselineResult r{source.clone(), source_head.clone(), {}};
    r.model.set_role(ModelRole::student);
    nn::ParamSet params = r.model.params();
    params.append(r.head->params());
    params.set_trainable(true);
    nn::Adam adam(params, opt.train.lr);
    Rng rng(opt.train.seed);
    const BatchSampler next = manifest_sampler(target_train, opt.train.batch_size, opt.train.live_fraction);
    const int steps = batches_per_epoch(opt.train, target_train.samples.size());
    double lr = opt.train.lr;
    for (int epoch = 0; epoch < opt.train.epochs; ++epoch) {
        adam.set_lr(lr);
        EpochMeter meter;
        for (int step = 0; step < steps; ++step) {
            const Batch batch = next(rng);
            params.zero_grad();
            const ad::Var logits = r.head->logits(r.model.extract(batch.images));
            const ad::Var ce = head_cross_entropy(logits, class_indices(batch.labels));
            ad::Var loss = ce;
            if (opt.distill_weight != 0.0) {
                ad::Var teacher;
                {
                    ad::NoGradGuard no_grad;
                    teacher = source_head.logits(source.extract(batch.images));
                }
                const ad::Var kl = distillation_kl(teacher, logits, opt.temperature);
                meter.add("distill_kl", kl.item());
                loss = ad::add(ce, ad::scale(kl, opt.distill_weight));
            }
            guard_finite(loss.item(), "LwF loss at epoch " + std::to_string(epoch), params, opt.train);
            meter.add("head_ce", ce.item());
            meter.add("total", loss.item());
            ad::backward(loss);
            adam.step();
        }
        r.history.push_back(meter.finish(epoch, lr));
        lr *= opt.train.lr_decay;
    }
    params.zero_grad();
    return r;
}

MethodRegistry::MethodRegistry() {
    add(
        "naive_ft",
        [](const MethodContext& c) {
            require(c.source && c.target_train, ErrorKind::config, "naive_ft needs a source model and target data");
            return naive_finetune(*c.source, *c.target_train, c.schedule);
        },
        true);
    add(
        "joint",
        [](const MethodContext& c) {
            require(c.source && c.source_train && c.target_train, ErrorKind::config,
                    "joint needs the source model config, source data and target data");
            return joint_train(c.source->config(), *c.source_train, *c.target_train, c.schedule);
        },
        false);
    add(
        "lwf",
        [](const MethodContext& c) {
            require(c.source && c.source_head && c.target_train, ErrorKind::config,
                    "lwf needs a source model with a trained head and target data");
            LwfOptions o;
            o.train = c.schedule;
            if (auto it = c.params.find("temperature"); it != c.params.end()) o.temperature = it->second;
            if (auto it = c.params.find("distill_weight"); it != c.params.end()) o.distill_weight = it->second;
            return lwf_distill(*c.source, *c.source_head, *c.target_train, o);
        },
        true);
}

void MethodRegistry::add(const std::string& name, MethodFn fn, bool source_free) {
    require(!name.empty() && fn, ErrorKind::config, "method needs a name and a function");
    methods_[name] = Entry{std::move(fn), source_free};
}

bool MethodRegistry::has(const std::string& name) const { return methods_.count(name) > 0; }

bool MethodRegistry::source_free(const std::string& name) const {
    auto it = methods_.find(name);
    require(it != methods_.end(), ErrorKind::config, "unknown method '" + name + "'");
    return it->second.source_free;
}

BaselineResult MethodRegistry::run(const std::string& name, const MethodContext& ctx) const {
    auto it = methods_.find(name);
    require(it != methods_.end(), ErrorKind::config, "unknown method '" + name + "'");
    if (it->second.source_free) {
        MethodContext c = ctx;
        c.source_train = nullptr;  // source-free methods never see source data
        return it->second.fn(c);
    }
    return it->second.fn(ctx);
}

std::vector<std::string> MethodRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : methods_) out.push_back(name);
    return out;
}

}  // namespace fasw
