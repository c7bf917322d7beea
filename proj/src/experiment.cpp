#include "fasw/experiment.hpp"

#include <charconv>
#include <functional>

#include "fasw/checkpoint.hpp"
#include "fasw/error.hpp"
#include "fasw/io.hpp"

namespace fasw {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
    const std::string t = io::trim(v);
    double out = 0.0;
    auto r = std::from_chars(t.data(), t.data() + t.size(), out);
    require(r.ec == std::errc() && r.ptr == t.data() + t.size() && !t.empty(), ErrorKind::config,
            "config key '" + key + "': not a number: '" + v + "'");
    return out;
}

long long parse_integer(const std::string& key, const std::string& v) {
    const std::string t = io::trim(v);
    long long out = 0;
    auto r = std::from_chars(t.data(), t.data() + t.size(), out);
    require(r.ec == std::errc() && r.ptr == t.data() + t.size() && !t.empty(), ErrorKind::config,
            "config key '" + key + "': not an integer: '" + v + "'");
    return out;
}

std::vector<std::string> parse_list(const std::string& v) {
    std::vector<std::string> out;
    for (const auto& part : io::split(v, ',')) {
        const std::string t = io::trim(part);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

template <class T, class F>
std::string join_with(const std::vector<T>& v, F f) {
    std::vector<std::string> parts;
    for (const auto& x : v) parts.push_back(f(x));
    return io::join(parts, ',');
}

struct Field {
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string& key, const std::string&)> set;
};

using FieldTable = std::map<std::string, Field>;

template <class Member>
Field int_field(Member m) {
    return {[m](const ExperimentConfig& c) { return std::to_string(m(const_cast<ExperimentConfig&>(c))); },
            [m](ExperimentConfig& c, const std::string& k, const std::string& v) {
                m(c) = static_cast<std::remove_reference_t<decltype(m(c))>>(parse_integer(k, v));
            }};
}

template <class Member>
Field double_field(Member m) {
    return {[m](const ExperimentConfig& c) { return fmt_double(m(const_cast<ExperimentConfig&>(c))); },
            [m](ExperimentConfig& c, const std::string& k, const std::string& v) { m(c) = parse_double(k, v); }};
}

template <class Member>
Field list_field(Member m) {
    return {[m](const ExperimentConfig& c) { return io::join(m(const_cast<ExperimentConfig&>(c)), ','); },
            [m](ExperimentConfig& c, const std::string&, const std::string& v) { m(c) = parse_list(v); }};
}

void add_schedule(FieldTable& t, const std::string& prefix, TrainSchedule ExperimentConfig::*s) {
    t[prefix + ".epochs"] = int_field([s](ExperimentConfig& c) -> int& { return (c.*s).epochs; });
    t[prefix + ".lr"] = double_field([s](ExperimentConfig& c) -> double& { return (c.*s).lr; });
    t[prefix + ".lr_decay"] = double_field([s](ExperimentConfig& c) -> double& { return (c.*s).lr_decay; });
    t[prefix + ".batch_size"] = int_field([s](ExperimentConfig& c) -> int& { return (c.*s).batch_size; });
    t[prefix + ".live_fraction"] = double_field([s](ExperimentConfig& c) -> double& { return (c.*s).live_fraction; });
    t[prefix + ".batches_per_epoch"] =
        int_field([s](ExperimentConfig& c) -> int& { return (c.*s).batches_per_epoch; });
}

const FieldTable& fields() {
    static const FieldTable table = [] {
        FieldTable t;
        t["preset"] = {[](const ExperimentConfig& c) { return c.preset; },
                       [](ExperimentConfig& c, const std::string&, const std::string& v) { c.preset = io::trim(v); }};
        t["seed"] = int_field([](ExperimentConfig& c) -> std::uint64_t& { return c.seed; });

        t["data.image_size"] = int_field([](ExperimentConfig& c) -> int& { return c.data.image_size; });
        t["data.n_live"] = int_field([](ExperimentConfig& c) -> int& { return c.data.n_live; });
        t["data.n_spoof"] = int_field([](ExperimentConfig& c) -> int& { return c.data.n_spoof; });
        t["data.n_subjects"] = int_field([](ExperimentConfig& c) -> int& { return c.data.n_subjects; });
        t["data.test_fraction"] = double_field([](ExperimentConfig& c) -> double& { return c.data.test_fraction; });
        t["data.subsets"] = list_field([](ExperimentConfig& c) -> std::vector<std::string>& { return c.data.subsets; });
        t["data.source_types"] =
            list_field([](ExperimentConfig& c) -> std::vector<std::string>& { return c.data.source_types; });
        t["data.holdout_types"] =
            list_field([](ExperimentConfig& c) -> std::vector<std::string>& { return c.data.holdout_types; });
        t["data.target_tint"] = {
            [](const ExperimentConfig& c) {
                return join_with(std::vector<double>(c.data.target_tint.begin(), c.data.target_tint.end()), fmt_double);
            },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                const auto parts = parse_list(v);
                require(parts.size() == 3, ErrorKind::config, "config key '" + k + "': expected three values");
                for (int i = 0; i < 3; ++i) c.data.target_tint[i] = parse_double(k, parts[i]);
            }};
        t["data.minority_share"] = double_field([](ExperimentConfig& c) -> double& { return c.data.minority_share; });
        t["data.older_age_min"] = int_field([](ExperimentConfig& c) -> int& { return c.data.older_age_min; });
        t["data.older_age_max"] = int_field([](ExperimentConfig& c) -> int& { return c.data.older_age_max; });
        t["data.older_blur"] = double_field([](ExperimentConfig& c) -> double& { return c.data.older_blur; });
        t["data.brightness_shift"] =
            double_field([](ExperimentConfig& c) -> double& { return c.data.brightness_shift; });

        t["model.levels"] = int_field([](ExperimentConfig& c) -> int& { return c.model.levels; });
        t["model.channels"] = {[](const ExperimentConfig& c) {
                                   return join_with(c.model.channels, [](int x) { return std::to_string(x); });
                               },
                               [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                   c.model.channels.clear();
                                   for (const auto& p : parse_list(v))
                                       c.model.channels.push_back(static_cast<int>(parse_integer(k, p)));
                               }};
        t["model.leaky_slope"] = double_field([](ExperimentConfig& c) -> double& { return c.model.leaky_slope; });

        t["sre.hidden"] = int_field([](ExperimentConfig& c) -> int& { return c.sre_hidden; });

        add_schedule(t, "pretrain", &ExperimentConfig::pretrain);
        add_schedule(t, "stage1", &ExperimentConfig::stage1);
        t["stage1.mask_epochs"] = int_field([](ExperimentConfig& c) -> int& { return c.mask_epochs; });
        t["stage1.threshold"] = double_field([](ExperimentConfig& c) -> double& { return c.threshold; });
        t["stage1.mask_weight"] = double_field([](ExperimentConfig& c) -> double& { return c.mask_weight; });

        add_schedule(t, "stage2", &ExperimentConfig::stage2);
        t["stage2.disc_lr"] = double_field([](ExperimentConfig& c) -> double& { return c.disc_lr; });
        t["stage2.lambdas"] = {[](const ExperimentConfig& c) {
                                   const auto& w = c.lambdas;
                                   return join_with(std::vector<double>{w.orig, w.spoof, w.src, w.tgt}, fmt_double);
                               },
                               [](ExperimentConfig& c, const std::string&, const std::string& v) {
                                   c.lambdas = parse_lambdas(v);
                               }};
        t["stage2.disc_mode"] = {[](const ExperimentConfig& c) { return std::string(to_string(c.disc_mode)); },
                                 [](ExperimentConfig& c, const std::string&, const std::string& v) {
                                     c.disc_mode = parse_disc_mode(io::trim(v));
                                 }};
        t["stage2.disc_hidden"] = int_field([](ExperimentConfig& c) -> int& { return c.disc_hidden; });

        t["baseline.lwf_temperature"] = double_field([](ExperimentConfig& c) -> double& { return c.lwf_temperature; });
        t["baseline.lwf_distill_weight"] =
            double_field([](ExperimentConfig& c) -> double& { return c.lwf_distill_weight; });
        t["baseline.head_epochs"] = int_field([](ExperimentConfig& c) -> int& { return c.head_epochs; });

        t["eval.fpr_targets"] = {[](const ExperimentConfig& c) { return join_with(c.fpr_targets, fmt_double); },
                                 [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                     c.fpr_targets.clear();
                                     for (const auto& p : parse_list(v)) c.fpr_targets.push_back(parse_double(k, p));
                                 }};
        t["eval.operating_fpr"] = double_field([](ExperimentConfig& c) -> double& { return c.operating_fpr; });
        return t;
    }();
    return table;
}

void desk_schedules(ExperimentConfig& c) {
    c.pretrain.epochs = 30;
    c.pretrain.lr = 3e-3;
    c.pretrain.lr_decay = 0.99;
    c.stage1.epochs = 15;
    c.stage1.lr = 1e-3;
    c.mask_epochs = 10;
    c.stage2.epochs = 40;
    c.stage2.lr = 3e-4;
    c.disc_lr = 3e-4;
}

}  // namespace

void ExperimentConfig::validate() const {
    require(data.image_size >= 8, ErrorKind::config, "data.image_size must be at least 8");
    require(data.n_live >= 0 && data.n_spoof >= 0, ErrorKind::config, "sample counts must be non-negative");
    require(data.n_subjects >= 1, ErrorKind::config, "data.n_subjects must be at least 1");
    require(data.minority_share >= 0.0 && data.minority_share <= 1.0, ErrorKind::config,
            "data.minority_share must lie in [0,1]");
    require(data.older_age_min <= data.older_age_max, ErrorKind::config, "data.older_age_min exceeds older_age_max");
    require(!data.subsets.empty() && data.subsets.front() == "A", ErrorKind::config,
            "data.subsets must start with A");
    fasw::validate(model_config(*this));
    require(sre_hidden >= 1, ErrorKind::config, "sre.hidden must be positive");
    require(disc_hidden >= 1, ErrorKind::config, "stage2.disc_hidden must be positive");
    fasw::validate(pretrain);
    fasw::validate(stage1);
    fasw::validate(stage2);
    require(mask_epochs >= 0 && mask_epochs <= stage1.epochs, ErrorKind::config,
            "stage1.mask_epochs must lie in [0, stage1.epochs]");
    require(threshold >= 0.0, ErrorKind::config, "stage1.threshold must be non-negative");
    require(disc_lr > 0.0, ErrorKind::config, "stage2.disc_lr must be positive");
    fasw::validate(lambdas);
    require(lwf_temperature > 0.0, ErrorKind::config, "baseline.lwf_temperature must be positive");
    require(head_epochs >= 1, ErrorKind::config, "baseline.head_epochs must be positive");
    require(!fpr_targets.empty(), ErrorKind::config, "eval.fpr_targets is empty");
    for (double f : fpr_targets) require(f > 0.0 && f < 1.0, ErrorKind::config, "eval.fpr_targets must lie in (0,1)");
    require(operating_fpr > 0.0 && operating_fpr < 1.0, ErrorKind::config, "eval.operating_fpr must lie in (0,1)");
}

std::vector<std::string> preset_names() { return {"desk", "quick", "full"}; }

ExperimentConfig preset_config(const std::string& name) {
    ExperimentConfig c;
    c.preset = name;
    if (name == "desk") {
        desk_schedules(c);
    } else if (name == "quick") {
        desk_schedules(c);
        c.data.image_size = 32;
        c.data.n_live = 150;
        c.data.n_spoof = 150;
        // Half of each subset is held out so source-domain AUC is measured on
        // ~150 samples instead of ~90.
        c.data.test_fraction = 0.5;
        c.stage2.epochs = 30;
    } else if (name == "full") {
        // Full-scale optimiser settings; each phase keeps the pre-train schedule
        // and only changes the learning rate.
        for (TrainSchedule* s : {&c.pretrain, &c.stage1, &c.stage2}) {
            s->epochs = 180;
            s->lr_decay = 0.99;
            s->batch_size = 8;
            s->live_fraction = 0.5;
        }
        c.pretrain.lr = 3e-4;
        c.stage1.lr = 1e-5;
        c.stage2.lr = 1e-6;
        c.mask_epochs = 5;
        c.disc_lr = 1e-6;
    } else {
        fail(ErrorKind::config, "unknown preset '" + name + "' (known: desk, quick, full)");
    }
    return c;
}

std::map<std::string, std::string> to_key_values(const ExperimentConfig& cfg) {
    std::map<std::string, std::string> kv;
    for (const auto& [key, f] : fields()) kv[key] = f.get(cfg);
    return kv;
}

void apply_key_values(ExperimentConfig& cfg, const std::map<std::string, std::string>& kv) {
    for (const auto& [key, value] : kv) {
        auto it = fields().find(key);
        require(it != fields().end(), ErrorKind::config, "unknown config key '" + key + "'");
        if (key == "preset") continue;
        it->second.set(cfg, key, value);
    }
}

ExperimentConfig from_key_values(const std::map<std::string, std::string>& kv) {
    auto it = kv.find("preset");
    ExperimentConfig cfg = preset_config(it == kv.end() ? "desk" : io::trim(it->second));
    apply_key_values(cfg, kv);
    return cfg;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), ErrorKind::input, path.string() + ": config file not found");
    return from_key_values(parse_key_values(io::read_text(path)));
}

std::string config_text(const ExperimentConfig& cfg) { return format_key_values(to_key_values(cfg)); }

SpoofType spoof_type_for(const std::string& micro) {
    static const std::map<std::string, std::string> generator{
        {"print", "fullframe_tint"},           {"replay", "fullframe_moire"},
        {"full_mask", "ellipse_full_mask"},    {"obfuscation", "stroke_obfuscation"},
        {"paper_glasses", "rect_glasses"},     {"mannequin", "ellipse_face"},
        {"cosmetic", "stroke_eyes_lips"},      {"funny_eyes", "rect_eyes"}};
    auto it = generator.find(micro);
    require(it != generator.end(), ErrorKind::config, "unknown spoof micro type '" + micro + "'");
    return {default_macro_for(micro), micro, it->second};
}

std::uint64_t phase_seed(const ExperimentConfig& cfg, Phase p) {
    return derive_seed(cfg.seed, static_cast<std::uint64_t>(p));
}

std::map<std::string, SyntheticDomainSpec> synthetic_specs(const ExperimentConfig& cfg) {
    const auto& d = cfg.data;
    SyntheticDomainSpec base;
    base.n_live = d.n_live;
    base.n_spoof = d.n_spoof;
    base.height = base.width = d.image_size;
    base.n_subjects = d.n_subjects;
    base.test_fraction = d.test_fraction;
    for (const auto& m : d.source_types) base.spoof_types.push_back(spoof_type_for(m));

    std::map<std::string, SyntheticDomainSpec> specs;
    std::uint64_t index = 0;
    for (const auto& id : d.subsets) {
        SyntheticDomainSpec s = base;
        s.seed = derive_seed(phase_seed(cfg, Phase::data), ++index);
        if (id == "B") {
            s.spoof_types.clear();
            for (const auto& m : d.holdout_types) s.spoof_types.push_back(spoof_type_for(m));
            s.tint = d.target_tint;
        } else if (id == "C") {
            s.ethnicity_mix = {{"eth_a", 1.0 - d.minority_share}, {"eth_b", d.minority_share}};
        } else if (id == "D") {
            s.age_min = d.older_age_min;
            s.age_max = d.older_age_max;
            s.blur_sigma = d.older_blur;
        } else if (id == "E") {
            s.brightness = d.brightness_shift;
        } else {
            require(id == "A", ErrorKind::config, "unknown subset '" + id + "' (known: A-E)");
        }
        specs[id] = s;
    }
    return specs;
}

ModelConfig model_config(const ExperimentConfig& cfg) {
    ModelConfig m = cfg.model;
    m.height = m.width = cfg.data.image_size;
    m.seed = phase_seed(cfg, Phase::pretrain);
    return m;
}

TrainSchedule pretrain_schedule(const ExperimentConfig& cfg) {
    TrainSchedule s = cfg.pretrain;
    s.seed = phase_seed(cfg, Phase::pretrain);
    return s;
}

Stage1Schedule stage1_schedule(const ExperimentConfig& cfg) {
    Stage1Schedule s;
    s.train = cfg.stage1;
    s.train.seed = phase_seed(cfg, Phase::stage1);
    s.mask_epochs = cfg.mask_epochs;
    s.threshold = cfg.threshold;
    s.mask_weight = cfg.mask_weight;
    return s;
}

Stage2Options stage2_options(const ExperimentConfig& cfg) {
    Stage2Options o;
    o.train = cfg.stage2;
    o.train.seed = phase_seed(cfg, Phase::stage2);
    o.disc_lr = cfg.disc_lr;
    return o;
}

TrainSchedule baseline_schedule(const ExperimentConfig& cfg) {
    // Baselines fine-tune on the target with the stage-1 optimiser settings.
    TrainSchedule s = cfg.stage1;
    s.seed = phase_seed(cfg, Phase::baseline);
    return s;
}

}  // namespace fasw
