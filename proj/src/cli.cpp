#include "fasw/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fasw/baselines.hpp"
#include "fasw/checkpoint.hpp"
#include "fasw/error.hpp"
#include "fasw/evaluation.hpp"
#include "fasw/experiment.hpp"
#include "fasw/io.hpp"
#include "fasw/model_io.hpp"
#include "fasw/protocols.hpp"
#include "fasw/report.hpp"

namespace fasw {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path resolve_data_path(const fs::path& p) {
    const char* root = std::getenv("FASW_DATA_ROOT");
    if (p.empty() || p.is_absolute() || root == nullptr || *root == '\0') return p;
    return fs::path(root) / p;
}

namespace {

using Overrides = std::map<std::string, std::string>;

// Options shared by every subcommand.
struct Common {
    std::string config_file;
    std::string preset;
    std::vector<std::string> sets;
    bool quiet = false;
    Overrides flags;  // subcommand flags mapped onto config keys
};

// Run directory of the command in progress, so failures can leave error.json.
std::optional<RunDirectory> g_active_run;

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_file, "Flat key = value config file");
    sub->add_option("--preset", c.preset, "Named preset: desk, quick or full");
    sub->add_option("--set", c.sets, "Config override key=value (repeatable)");
    sub->add_flag("--quiet", c.quiet, "Do not echo progress to stderr");
    sub->add_option_function<std::string>(
        "--seed", [&c](const std::string& v) { c.flags["seed"] = v; }, "Master seed");
}

// Flag whose value is stored under a config key when given.
void bind(CLI::App* sub, Common& c, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(
        flag, [&c, key](const std::string& v) { c.flags[key] = v; }, help + " (" + key + ")");
}

ExperimentConfig build_config(const Common& c) {
    Overrides kv;
    if (!c.config_file.empty()) kv = parse_key_values(io::read_text(c.config_file));
    if (!c.preset.empty()) kv["preset"] = c.preset;
    for (const auto& s : c.sets) {
        const auto eq = s.find('=');
        require(eq != std::string::npos && eq > 0, ErrorKind::usage, "--set expects key=value, got '" + s + "'");
        kv[io::trim(s.substr(0, eq))] = s.substr(eq + 1);
    }
    for (const auto& [k, v] : c.flags) kv[k] = v;
    ExperimentConfig cfg = from_key_values(kv);
    cfg.validate();
    return cfg;
}

std::vector<std::string> csv_list(const std::string& s) {
    std::vector<std::string> out;
    for (const auto& p : io::split(s, ',')) {
        const std::string t = io::trim(p);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

DatasetManifest load_data(const std::string& path, bool with_base = false) {
    const fs::path p = resolve_data_path(path);
    require(fs::exists(p), ErrorKind::input, p.string() + ": manifest not found");
    DatasetManifest m = load_manifest(p);
    load_images(m);
    if (with_base) load_base_faces(m);
    return m;
}

void require_image_size(const DatasetManifest& m, const ModelConfig& cfg, const std::string& what) {
    for (const auto& s : m.samples) {
        require(s.image.dim(1) == cfg.height && s.image.dim(2) == cfg.width, ErrorKind::input,
                what + ": sample " + s.sample_id + " is " + std::to_string(s.image.dim(1)) + "x" +
                    std::to_string(s.image.dim(2)) + ", the model expects " + std::to_string(cfg.height) + "x" +
                    std::to_string(cfg.width));
    }
}

// Evaluation set given as NAME=PATH or PATH (named after its subset directory).
struct EvalSet {
    std::string name;
    std::string path;
};

std::vector<EvalSet> parse_eval_sets(const std::vector<std::string>& specs) {
    std::vector<EvalSet> out;
    std::set<std::string> names;
    for (const auto& s : specs) {
        EvalSet e;
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            e.path = s;
            e.name = fs::path(s).parent_path().filename().string();
            if (e.name.empty()) e.name = fs::path(s).stem().string();
        } else {
            e.name = s.substr(0, eq);
            e.path = s.substr(eq + 1);
        }
        require(!e.name.empty() && !e.path.empty(), ErrorKind::usage, "bad evaluation set '" + s + "'");
        require(names.insert(e.name).second, ErrorKind::usage, "evaluation set name '" + e.name + "' used twice");
        out.push_back(e);
    }
    return out;
}

// Scores every evaluation set, fills report["metrics"] and writes ROC
// artifacts next to `out_dir`.
void evaluate_sets(json& report, const Scorer& scorer, const std::vector<EvalSet>& sets, const ExperimentConfig& cfg,
                   const ModelConfig& mc, const fs::path& out_dir, const std::string& prefix,
                   const std::function<void(const std::string&)>& log) {
    std::vector<std::pair<std::string, RocAnalysis>> curves;
    for (const auto& e : sets) {
        DatasetManifest m = load_data(e.path);
        require_image_size(m, mc, e.path);
        const ScoreSet scores = score_manifest(scorer, m);
        const MetricsReport r = compute_metrics(scores, cfg.fpr_targets, cfg.operating_fpr);
        json mj = metrics_json(r);
        mj["manifest"] = resolve_data_path(e.path).string();
        report["metrics"][e.name] = mj;
        const RocAnalysis roc = roc_analysis(scores, cfg.fpr_targets);
        const std::string csv = prefix + "roc_" + e.name + ".csv";
        write_roc_csv(out_dir / csv, roc);
        report["artifacts"]["roc_csv"][e.name] = csv;
        curves.emplace_back(e.name, roc);
        char line[256];
        std::snprintf(line, sizeof line, "eval %s: AUC %.4f ACER %.2f%% (n_live %zu, n_spoof %zu)", e.name.c_str(),
                      r.auc, r.rates.acer, r.n_live, r.n_spoof);
        log(line);
    }
    if (!curves.empty()) {
        const std::string png = prefix + "roc.png";
        save_roc_plot(out_dir / png, curves, "ROC");
        report["artifacts"]["roc_png"] = png;
    }
}

// Shared skeleton of the training commands: run directory, report, loss
// artifacts, final status.
struct RunSession {
    RunDirectory run;
    ExperimentConfig cfg;
    json report;

    RunSession(const fs::path& out, const std::string& command, const std::vector<std::string>& argv,
               const ExperimentConfig& c, bool quiet)
        : run(RunDirectory::create(out, command, argv, c)), cfg(c) {
        run.set_quiet(quiet);
        g_active_run = run;
        report = report_skeleton(run.id(), command, cfg);
        run.log(command + " run " + run.id() + " in " + out.string());
    }

    std::function<void(const std::string&)> logger() const {
        return [this](const std::string& l) { run.log(l); };
    }

    void save_losses(const LossHistory& h, const std::string& title) {
        write_loss_csv(run.path() / "loss.csv", h);
        report["artifacts"]["loss_csv"] = "loss.csv";
        if (!h.empty()) {
            save_loss_plot(run.path() / "loss.png", h, title);
            report["artifacts"]["loss_png"] = "loss.png";
        }
    }

    void finish() {
        write_report(run.path() / "report.json", report);
        run.finish("ok");
        run.log("done");
        g_active_run.reset();
    }
};

// ---- generate-synthetic ---------------------------------------------------

struct GenerateArgs {
    Common common;
    std::string out;
};

void cmd_generate(const GenerateArgs& a, const std::vector<std::string>& argv) {
    const ExperimentConfig cfg = build_config(a.common);
    RunSession s(a.out, "generate-synthetic", argv, cfg, a.common.quiet);
    Benchmark bench = generate_synthetic_benchmark(synthetic_specs(cfg));
    write_benchmark(s.run.path(), bench);

    // Pool of every subset and split, the input of build-protocols.
    DatasetManifest pool;
    pool.root = s.run.path();
    pool.subset_id = "pool";
    json counts = json::object();
    for (const auto& [id, splits] : bench) {
        for (const DatasetManifest* m : {&splits.train, &splits.test}) {
            counts[id][to_string(m->split)] = {{"live", m->count(Label::live)}, {"spoof", m->count(Label::spoof)}};
            for (ImageSample smp : m->samples) {
                smp.path = id + "/" + smp.path;
                if (!smp.gt_mask_path.empty()) smp.gt_mask_path = id + "/" + smp.gt_mask_path;
                pool.samples.push_back(std::move(smp));
            }
        }
    }
    write_manifest(s.run.path() / "pool.csv", pool);
    s.report["data"] = {{"subsets", counts}, {"pool", "pool.csv"}};
    s.run.log("wrote " + std::to_string(pool.samples.size()) + " samples");
    s.finish();
}

// ---- build-protocols -------------------------------------------------------

struct ProtocolArgs {
    Common common;
    std::string manifest, holdout = "mannequin,cosmetic,funny_eyes", out;
    int kmax = 8;
    int restarts = 10;
    double tolerance_pp = 2.0;
    std::vector<std::string> targets{"C=ethnicity:eth_b:0.52", "D=age_min:50:0.5", "E=illum_cluster:0:0.5"};
};

AttributeTarget parse_target(const std::string& spec, std::string& subset) {
    const auto eq = spec.find('=');
    require(eq != std::string::npos, ErrorKind::usage, "--target expects ID=attribute:value:fraction[:size]");
    subset = spec.substr(0, eq);
    const auto parts = io::split(spec.substr(eq + 1), ':');
    require(parts.size() == 3 || parts.size() == 4, ErrorKind::usage,
            "--target expects ID=attribute:value:fraction[:size], got '" + spec + "'");
    AttributeTarget t;
    t.attribute = parts[0];
    t.value = parts[1];
    try {
        t.fraction = std::stod(parts[2]);
        if (parts.size() == 4) t.size = std::stoi(parts[3]);
    } catch (const std::logic_error&) {
        fail(ErrorKind::usage, "--target: malformed number in '" + spec + "'");
    }
    return t;
}

void cmd_protocols(const ProtocolArgs& a, const std::vector<std::string>& argv) {
    const ExperimentConfig cfg = build_config(a.common);
    require(a.kmax >= 1, ErrorKind::usage, "--kmax must be at least 1");
    ProtocolConfig pc;
    pc.holdout_micro_types = csv_list(a.holdout);
    pc.tolerance_pp = a.tolerance_pp;
    pc.test_fraction = cfg.data.test_fraction;
    pc.seed = phase_seed(cfg, Phase::protocol);
    for (const auto& t : a.targets) {
        std::string id;
        AttributeTarget target = parse_target(t, id);
        pc.targets[id] = target;
    }
    DatasetManifest pool = load_data(a.manifest);
    RunSession s(a.out, "build-protocols", argv, cfg, a.common.quiet);
    const IlluminationClustering clustering =
        assign_illumination_clusters(pool, a.kmax, derive_seed(pc.seed, 1), a.restarts);
    s.run.log("illumination clusters: K = " + std::to_string(clustering.k));
    const ProtocolSpec spec = build_protocol_splits(pool, pc);
    write_protocol(s.run.path(), spec, &clustering);
    json achieved = json::object();
    for (const auto& [id, v] : spec.achieved) achieved[id] = v;
    s.report["protocol"] = {{"illumination_k", clustering.k},
                            {"sse_curve", clustering.sse_curve},
                            {"achieved_marginals", achieved},
                            {"kinds", spec.kinds}};
    s.report["artifacts"]["distribution_report"] = "distribution_report.json";
    s.report["artifacts"]["sse_curve"] = "sse_curve.csv";
    s.finish();
}

// ---- pretrain-source -------------------------------------------------------

struct PretrainArgs {
    Common common;
    std::string train_manifest, out;
    std::vector<std::string> evals;
};

void cmd_pretrain(const PretrainArgs& a, const std::vector<std::string>& argv) {
    DatasetManifest train = load_data(a.train_manifest);
    require(!train.samples.empty(), ErrorKind::input, a.train_manifest + ": no samples");
    Common common = a.common;
    const Tensor& first = train.samples.front().image;
    require(first.dim(1) == first.dim(2), ErrorKind::input, "pretrain-source needs square images");
    common.flags.try_emplace("data.image_size", std::to_string(first.dim(1)));
    const ExperimentConfig cfg = build_config(common);
    const ModelConfig mc = model_config(cfg);
    require_image_size(train, mc, a.train_manifest);
    RunSession s(a.out, "pretrain-source", argv, cfg, a.common.quiet);

    LossHistory history;
    FasModel source = pretrain_source(mc, train, pretrain_schedule(cfg), &history);
    s.run.log("pre-trained source model on " + std::to_string(train.samples.size()) + " samples");

    // The binary head is only needed by the distillation baseline, but it
    // must be trained here because later phases never see source data.
    FasModel frozen = source.clone();
    BinaryHead head = attach_binary_head(frozen, derive_seed(phase_seed(cfg, Phase::pretrain), 2));
    TrainSchedule head_sched = pretrain_schedule(cfg);
    head_sched.epochs = cfg.head_epochs;
    head_sched.seed = derive_seed(head_sched.seed, 3);
    train_binary_head(frozen, head, train, head_sched);

    save_model_checkpoint(s.run.checkpoint("source"), source, &head);
    s.report["inputs"] = {{"train_manifest", resolve_data_path(a.train_manifest).string()}};
    s.report["artifacts"]["checkpoints"] = {{"source", "checkpoints/source"}};
    s.save_losses(history, "source pre-train");
    evaluate_sets(s.report, model_scorer(source), parse_eval_sets(a.evals), cfg, mc, s.run.path(), "", s.logger());
    s.finish();
}

// ---- finetune-sre ------------------------------------------------------------

struct FinetuneArgs {
    Common common;
    std::string source_ckpt, target_manifest, out, reconstructor = "oracle";
    int components = 16;
    std::vector<std::string> evals;
};

void cmd_finetune(const FinetuneArgs& a, const std::vector<std::string>& argv) {
    const ModelCheckpoint src = load_model_checkpoint(a.source_ckpt);
    const ModelConfig& mc = src.model.config();
    Common common = a.common;
    common.flags.try_emplace("data.image_size", std::to_string(mc.height));
    const ExperimentConfig cfg = build_config(common);
    DatasetManifest target = load_data(a.target_manifest, a.reconstructor == "oracle");
    require_image_size(target, mc, a.target_manifest);

    std::unique_ptr<Reconstructor> rec;
    if (a.reconstructor == "oracle") {
        for (const auto& smp : target.samples) {
            require(smp.label == Label::live || smp.base_live.has_value(), ErrorKind::data,
                    smp.sample_id + ": no base face for the oracle reconstructor; use --reconstructor subspace");
        }
        rec = std::make_unique<OracleReconstructor>();
    } else if (a.reconstructor == "subspace") {
        DatasetManifest live;
        live.root = target.root;
        for (const auto& smp : target.samples)
            if (smp.label == Label::live) live.samples.push_back(smp);
        rec = std::make_unique<LiveSubspaceReconstructor>(live, a.components);
    } else {
        fail(ErrorKind::usage, "--reconstructor must be oracle or subspace");
    }

    RunSession s(a.out, "finetune-sre", argv, cfg, a.common.quiet);
    const Sre sre_init(mc, cfg.sre_hidden, phase_seed(cfg, Phase::sre_init));
    Stage1Result r = finetune_stage1(src.model, sre_init, target, *rec, stage1_schedule(cfg));
    save_model_checkpoint(s.run.checkpoint("target"), r.target);
    save_sre_checkpoint(s.run.checkpoint("sre"), r.sre, mc);
    s.report["inputs"] = {{"source_ckpt", fs::absolute(a.source_ckpt).string()},
                          {"target_manifest", resolve_data_path(a.target_manifest).string()},
                          {"reconstructor", a.reconstructor}};
    s.report["artifacts"]["checkpoints"] = {{"target", "checkpoints/target"}, {"sre", "checkpoints/sre"}};
    s.save_losses(r.history, "stage 1");
    if (target.count(Label::spoof) > 0) {
        const double iou = mean_spoof_iou(r.target, r.sre, target);
        s.report["sre"]["train_mask_iou"] = iou;
        s.run.log("mask IoU on the target training set: " + std::to_string(iou));
        save_mask_grid(s.run.path() / "masks.png", target,
                       {{"M from f^S", &src.model, &r.sre}, {"M from f^T", &r.target, &r.sre}});
        s.report["artifacts"]["mask_grid"] = "masks.png";
    }
    const auto sets = parse_eval_sets(a.evals);
    for (const auto& e : sets) {
        DatasetManifest m = load_data(e.path);
        if (m.count(Label::spoof) > 0) s.report["sre"]["mask_iou"][e.name] = mean_spoof_iou(r.target, r.sre, m);
    }
    evaluate_sets(s.report, model_scorer(r.target, &r.sre), sets, cfg, mc, s.run.path(), "", s.logger());
    s.finish();
}

// ---- train-wrapper -----------------------------------------------------------

struct WrapperArgs {
    Common common;
    std::string source_ckpt, target_ckpt, sre_ckpt, target_manifest, out;
    std::vector<std::string> evals;
};

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void cmd_wrapper(const WrapperArgs& a, const std::vector<std::string>& argv) {
    const ModelCheckpoint src = load_model_checkpoint(a.source_ckpt);
    const ModelCheckpoint tgt = load_model_checkpoint(a.target_ckpt);
    const ModelConfig& mc = src.model.config();
    require(tgt.model.params().names() == src.model.params().names(), ErrorKind::config,
            "source and target checkpoints have different architectures");
    std::optional<Sre> sre;
    if (!a.sre_ckpt.empty()) sre = load_sre_checkpoint(a.sre_ckpt);
    Common common = a.common;
    common.flags.try_emplace("data.image_size", std::to_string(mc.height));
    const ExperimentConfig cfg = build_config(common);
    require(sre || cfg.lambdas.spoof == 0.0, ErrorKind::config,
            "lambda2 > 0 needs an SRE checkpoint (--sre-ckpt) or --lambdas with lambda2 = 0");
    DatasetManifest target = load_data(a.target_manifest);
    require_image_size(target, mc, a.target_manifest);

    RunSession s(a.out, "train-wrapper", argv, cfg, a.common.quiet);
    const Sre* sre_ptr = sre ? &*sre : nullptr;
    const std::uint64_t h_src = src.model.params().hash();
    const std::uint64_t h_tgt = tgt.model.params().hash();
    const std::uint64_t h_sre = sre ? sre->params().hash() : 0;

    FasModel student = src.model.clone();
    student.set_role(ModelRole::student);
    DiscriminatorPair discs = make_discriminators(mc, cfg.disc_mode, cfg.disc_hidden, phase_seed(cfg, Phase::disc_init));
    const Stage2Result r =
        train_stage2(src.model, tgt.model, sre_ptr, student, discs, target, cfg.lambdas, stage2_options(cfg));

    const bool unchanged = src.model.params().hash() == h_src && tgt.model.params().hash() == h_tgt &&
                           (!sre || sre->params().hash() == h_sre);
    require(unchanged, ErrorKind::pipeline, "a frozen teacher or the SRE changed during stage 2");
    s.report["freeze_check"] = {{"source_hash", hex(h_src)},
                                {"target_hash", hex(h_tgt)},
                                {"sre_hash", sre ? json(hex(h_sre)) : json(nullptr)},
                                {"unchanged", unchanged}};

    save_model_checkpoint(s.run.checkpoint("student"), student);
    if (sre) save_sre_checkpoint(s.run.checkpoint("sre"), *sre, mc);
    save_discriminator_checkpoint(s.run.checkpoint("discriminators"), discs, mc, cfg.disc_mode, cfg.disc_hidden);
    s.report["inputs"] = {{"source_ckpt", fs::absolute(a.source_ckpt).string()},
                          {"target_ckpt", fs::absolute(a.target_ckpt).string()},
                          {"sre_ckpt", a.sre_ckpt.empty() ? json(nullptr) : json(fs::absolute(a.sre_ckpt).string())},
                          {"target_manifest", resolve_data_path(a.target_manifest).string()}};
    json ck = {{"student", "checkpoints/student"}, {"discriminators", "checkpoints/discriminators"}};
    if (sre) ck["sre"] = "checkpoints/sre";
    s.report["artifacts"]["checkpoints"] = ck;
    s.save_losses(r.history, "stage 2");
    if (sre && target.count(Label::spoof) > 0) {
        save_mask_grid(s.run.path() / "masks.png", target,
                       {{"M from f^S", &src.model, sre_ptr},
                        {"M from f^T", &tgt.model, sre_ptr},
                        {"M from f^new", &student, sre_ptr}});
        s.report["artifacts"]["mask_grid"] = "masks.png";
    }
    evaluate_sets(s.report, model_scorer(student, sre_ptr), parse_eval_sets(a.evals), cfg, mc, s.run.path(), "",
                  s.logger());
    s.finish();
}

// ---- run-baseline ------------------------------------------------------------

struct BaselineArgs {
    Common common;
    std::string method, source_ckpt, target_manifest, source_manifest, out;
    std::vector<std::string> evals;
};

void cmd_baseline(const BaselineArgs& a, const std::vector<std::string>& argv) {
    MethodRegistry registry;
    require(registry.has(a.method), ErrorKind::usage,
            "unknown method '" + a.method + "' (known: " + io::join(registry.names(), ',') + ")");
    const ModelCheckpoint src = load_model_checkpoint(a.source_ckpt);
    const ModelConfig& mc = src.model.config();
    Common common = a.common;
    common.flags.try_emplace("data.image_size", std::to_string(mc.height));
    const ExperimentConfig cfg = build_config(common);
    DatasetManifest target = load_data(a.target_manifest);
    require_image_size(target, mc, a.target_manifest);
    std::optional<DatasetManifest> source_train;
    if (!registry.source_free(a.method)) {
        require(!a.source_manifest.empty(), ErrorKind::config, a.method + " needs --source-manifest");
        source_train = load_data(a.source_manifest);
        require_image_size(*source_train, mc, a.source_manifest);
    }

    RunSession s(a.out, "run-baseline", argv, cfg, a.common.quiet);
    MethodContext ctx;
    ctx.source = &src.model;
    ctx.source_head = src.head ? &*src.head : nullptr;
    ctx.source_train = source_train ? &*source_train : nullptr;
    ctx.target_train = &target;
    ctx.schedule = baseline_schedule(cfg);
    ctx.params = {{"temperature", cfg.lwf_temperature}, {"distill_weight", cfg.lwf_distill_weight}};
    const BaselineResult r = registry.run(a.method, ctx);
    save_model_checkpoint(s.run.checkpoint("model"), r.model, r.head ? &*r.head : nullptr);
    s.report["method"] = a.method;
    s.report["inputs"] = {{"source_ckpt", fs::absolute(a.source_ckpt).string()},
                          {"target_manifest", resolve_data_path(a.target_manifest).string()}};
    if (source_train) s.report["inputs"]["source_manifest"] = resolve_data_path(a.source_manifest).string();
    s.report["artifacts"]["checkpoints"] = {{"model", "checkpoints/model"}};
    s.save_losses(r.history, a.method);
    evaluate_sets(s.report, baseline_scorer(r), parse_eval_sets(a.evals), cfg, mc, s.run.path(), "", s.logger());
    s.finish();
}

// ---- evaluate ----------------------------------------------------------------

// Scorer of a completed run directory, picked from its checkpoints.
struct RunModel {
    std::optional<InferenceModel> inference;
    std::optional<BaselineResult> baseline;
    ModelConfig config;
    std::string kind;
};

RunModel load_run_model(const fs::path& run) {
    const fs::path ck = run / "checkpoints";
    RunModel out;
    auto with_sre = [&](FasModel m) {
        std::optional<Sre> sre;
        if (fs::exists(ck / "sre")) sre = load_sre_checkpoint(ck / "sre");
        return InferenceModel{std::move(m), std::move(sre)};
    };
    if (fs::exists(ck / "student")) {
        out.inference = with_sre(load_model_checkpoint(ck / "student").model);
        out.kind = "student";
    } else if (fs::exists(ck / "model")) {
        ModelCheckpoint m = load_model_checkpoint(ck / "model");
        out.baseline = BaselineResult{std::move(m.model), std::move(m.head), {}};
        out.kind = "baseline";
    } else if (fs::exists(ck / "target")) {
        out.inference = with_sre(load_model_checkpoint(ck / "target").model);
        out.kind = "target";
    } else if (fs::exists(ck / "source")) {
        out.inference = InferenceModel{load_model_checkpoint(ck / "source").model, std::nullopt};
        out.kind = "source";
    } else {
        fail(ErrorKind::input, run.string() + ": no model checkpoint found");
    }
    out.config = out.inference ? out.inference->model.config() : out.baseline->model.config();
    return out;
}

struct EvaluateArgs {
    Common common;
    std::string model, run, out = "report.json", fpr_targets;
    std::vector<std::string> manifests;
};

void cmd_evaluate(const EvaluateArgs& a, const std::vector<std::string>& argv) {
    require(a.model.empty() != a.run.empty(), ErrorKind::usage, "evaluate needs exactly one of --model or --run");
    Common common = a.common;
    if (!a.run.empty() && common.config_file.empty() && fs::exists(fs::path(a.run) / "config.txt"))
        common.config_file = (fs::path(a.run) / "config.txt").string();
    if (!a.fpr_targets.empty()) common.flags["eval.fpr_targets"] = a.fpr_targets;

    Scorer scorer;
    ModelConfig mc;
    std::optional<RunModel> rm;
    std::optional<InferenceModel> im;
    if (!a.model.empty()) {
        im = load_inference(a.model);
        scorer = inference_scorer(*im);
        mc = im->model.config();
    } else {
        rm = load_run_model(a.run);
        scorer = rm->inference ? inference_scorer(*rm->inference) : baseline_scorer(*rm->baseline);
        mc = rm->config;
    }
    common.flags["data.image_size"] = std::to_string(mc.height);
    const ExperimentConfig cfg = build_config(common);

    const fs::path out = a.out;
    const fs::path dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
    fs::create_directories(dir);
    const std::string id = short_hash(io::join(argv, ' ') + config_text(cfg));
    json report = report_skeleton(id, "evaluate", cfg);
    report["inputs"] = {{"model", a.model.empty() ? json(nullptr) : json(fs::absolute(a.model).string())},
                        {"run", a.run.empty() ? json(nullptr) : json(fs::absolute(a.run).string())}};
    const std::string prefix = out.stem().string() + "_";
    evaluate_sets(report, scorer, parse_eval_sets(a.manifests), cfg, mc, dir, prefix,
                  [&](const std::string& l) {
                      if (!a.common.quiet) std::cerr << l << "\n";
                  });
    write_report(out, report);
}

// ---- export / predict --------------------------------------------------------

struct ExportArgs {
    std::string run, out;
};

void cmd_export(const ExportArgs& a) {
    const fs::path ck = fs::path(a.run) / "checkpoints";
    require(fs::exists(ck / "student"), ErrorKind::input, a.run + ": not a train-wrapper run (no student checkpoint)");
    const ModelCheckpoint student = load_model_checkpoint(ck / "student");
    std::optional<Sre> sre;
    if (fs::exists(ck / "sre")) sre = load_sre_checkpoint(ck / "sre");
    const InferenceModel m = export_inference(student.model, sre ? &*sre : nullptr);
    const fs::path out = a.out;
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_inference(out, m);
}

struct PredictArgs {
    std::string model, images, out, masks;
};

void cmd_predict(const PredictArgs& a) {
    const InferenceModel m = load_inference(a.model);
    const fs::path dir = resolve_data_path(a.images);
    require(fs::is_directory(dir), ErrorKind::input, dir.string() + ": image directory not found");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    require(!files.empty(), ErrorKind::input, dir.string() + ": no .png images");
    const ModelConfig& mc = m.model.config();
    if (!a.masks.empty()) fs::create_directories(a.masks);

    std::ostringstream csv;
    csv.precision(17);
    csv << "file,score\n";
    constexpr std::size_t kChunk = 32;
    for (std::size_t begin = 0; begin < files.size(); begin += kChunk) {
        const std::size_t n = std::min(kChunk, files.size() - begin);
        Tensor batch({static_cast<int>(n), 3, mc.height, mc.width});
        const std::size_t per = static_cast<std::size_t>(3 * mc.height * mc.width);
        for (std::size_t i = 0; i < n; ++i) {
            Tensor img = io::read_png(files[begin + i]);
            require(img.rank() == 3 && img.dim(0) == 3 && img.dim(1) == mc.height && img.dim(2) == mc.width,
                    ErrorKind::input,
                    files[begin + i].string() + ": expected an RGB image of " + std::to_string(mc.height) + "x" +
                        std::to_string(mc.width));
            std::copy(img.storage().begin(), img.storage().end(), batch.data() + i * per);
        }
        const Prediction p = predict(m, batch);
        for (std::size_t i = 0; i < n; ++i) {
            csv << files[begin + i].filename().string() << ',' << p.scores[i] << '\n';
            if (!a.masks.empty() && !p.masks.empty()) {
                const Tensor& mk = p.masks;
                const Tensor one = mk.slice_batch(static_cast<int>(i), 1);
                io::write_png(fs::path(a.masks) / files[begin + i].filename(),
                              one.reshaped({1, mk.dim(2), mk.dim(3)}));
            }
        }
    }
    const fs::path out = a.out;
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    io::write_text(out, csv.str());
}

// ---- report ------------------------------------------------------------------

struct ReportArgs {
    std::vector<std::string> runs;
    std::string out;
    bool quiet = false;
};

// Renders ROC overlays, loss curves and mask grids from run directories.
// Missing artifacts are listed and skipped; fails only when nothing renders.
void cmd_report(const ReportArgs& a) {
    fs::create_directories(a.out);
    std::vector<std::string> rendered, skipped;
    std::map<std::string, std::vector<std::pair<std::string, RocAnalysis>>> roc_by_domain;
    for (const auto& run_str : a.runs) {
        const fs::path run = run_str;
        const std::string label = run.filename().empty() ? run.parent_path().filename().string()
                                                         : run.filename().string();
        if (!fs::exists(run / "report.json")) {
            skipped.push_back(run_str + ": no report.json");
            continue;
        }
        const json rep = read_report(run / "report.json");
        const json arts = rep.value("artifacts", json::object());
        if (arts.contains("roc_csv")) {
            for (const auto& [domain, file] : arts["roc_csv"].items()) {
                const fs::path p = run / file.get<std::string>();
                if (!fs::exists(p)) {
                    skipped.push_back(p.string() + ": missing");
                    continue;
                }
                RocAnalysis roc;
                roc.points = read_roc_csv(p);
                if (rep["metrics"].contains(domain)) roc.auc = rep["metrics"][domain].value("auc", 0.0);
                roc_by_domain[domain].emplace_back(label, roc);
            }
        } else {
            skipped.push_back(run_str + ": no ROC data");
        }
        if (arts.contains("loss_csv") && fs::exists(run / arts["loss_csv"].get<std::string>())) {
            const LossHistory h = read_loss_csv(run / arts["loss_csv"].get<std::string>());
            if (!h.empty()) {
                const fs::path png = fs::path(a.out) / ("loss_" + label + ".png");
                save_loss_plot(png, h, label);
                rendered.push_back(png.string());
            }
        } else {
            skipped.push_back(run_str + ": no loss curve");
        }
        // Mask panels need the teachers, the student and an SRE.
        const json in = rep.value("inputs", json::object());
        const fs::path ck = run / "checkpoints";
        const bool has_masks = fs::exists(ck / "student") && fs::exists(ck / "sre") && in.contains("source_ckpt") &&
                               in.contains("target_ckpt") && in.contains("target_manifest");
        if (has_masks) {
            const ModelCheckpoint s = load_model_checkpoint(in["source_ckpt"].get<std::string>());
            const ModelCheckpoint t = load_model_checkpoint(in["target_ckpt"].get<std::string>());
            const ModelCheckpoint n = load_model_checkpoint(ck / "student");
            const Sre sre = load_sre_checkpoint(ck / "sre");
            DatasetManifest m = load_data(in["target_manifest"].get<std::string>());
            const fs::path png = fs::path(a.out) / ("masks_" + label + ".png");
            save_mask_grid(png, m,
                           {{"M from f^S", &s.model, &sre}, {"M from f^T", &t.model, &sre}, {"M from f^new", &n.model, &sre}});
            rendered.push_back(png.string());
        } else {
            skipped.push_back(run_str + ": no mask panels (needs student, SRE and teacher checkpoints)");
        }
    }
    for (const auto& [domain, curves] : roc_by_domain) {
        const fs::path png = fs::path(a.out) / ("roc_" + domain + ".png");
        save_roc_plot(png, curves, "ROC " + domain);
        rendered.push_back(png.string());
    }
    if (!a.quiet) {
        for (const auto& r : rendered) std::cerr << "rendered " << r << "\n";
        for (const auto& s : skipped) std::cerr << "skipped " << s << "\n";
    }
    require(!rendered.empty(), ErrorKind::input, "report: nothing to render");
}

// ---- dispatch ----------------------------------------------------------------

void print_error_record(const Error& e, const std::string& command) {
    json rec = {{"error", to_string(e.kind())}, {"message", e.what()}, {"command", command}};
    std::cerr << rec.dump() << "\n";
    if (g_active_run) {
        try {
            io::write_text(g_active_run->path() / "error.json", rec.dump(2) + "\n");
            g_active_run->set_quiet(true);
            g_active_run->log(std::string("error: ") + e.what());
            g_active_run->finish("failed");
        } catch (...) {
        }
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"fasw: continual face anti-spoofing experiments on synthetic benchmarks", "fasw"};
    app.require_subcommand(1);
    app.fallthrough(false);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate-synthetic", "Write synthetic subsets A-E plus pool.csv");
    add_common(g, gen.common);
    g->add_option("--out", gen.out, "Output directory")->required();
    bind(g, gen.common, "--subsets", "data.subsets", "Comma list of subsets");
    bind(g, gen.common, "--image-size", "data.image_size", "Image side length");
    bind(g, gen.common, "--n-live", "data.n_live", "Live samples per subset");
    bind(g, gen.common, "--n-spoof", "data.n_spoof", "Spoof samples per subset");
    bind(g, gen.common, "--n-subjects", "data.n_subjects", "Subjects per subset");

    ProtocolArgs prot;
    auto* p = app.add_subcommand("build-protocols", "Split an annotated pool into subsets A-E");
    add_common(p, prot.common);
    p->add_option("--manifest", prot.manifest, "Pool manifest CSV")->required();
    p->add_option("--holdout", prot.holdout, "Spoof micro types held out into subset B")->capture_default_str();
    p->add_option("--kmax", prot.kmax, "Largest K for the illumination elbow")->capture_default_str();
    p->add_option("--restarts", prot.restarts, "K-means restarts")->capture_default_str();
    p->add_option("--tolerance-pp", prot.tolerance_pp, "Allowed marginal error in points")->capture_default_str();
    p->add_option("--target", prot.targets, "ID=attribute:value:fraction[:size] (repeatable)");
    p->add_option("--out", prot.out, "Output directory")->required();

    PretrainArgs pre;
    auto* ps = app.add_subcommand("pretrain-source", "Pre-train the source model f^S");
    add_common(ps, pre.common);
    ps->add_option("--train-manifest", pre.train_manifest, "Source training manifest")->required();
    ps->add_option("--out", pre.out, "Run directory")->required();
    ps->add_option("--eval", pre.evals, "Evaluation set NAME=manifest (repeatable)");
    bind(ps, pre.common, "--lr", "pretrain.lr", "Learning rate");
    bind(ps, pre.common, "--lr-decay", "pretrain.lr_decay", "Per-epoch decay");
    bind(ps, pre.common, "--epochs", "pretrain.epochs", "Epochs");
    bind(ps, pre.common, "--batch-size", "pretrain.batch_size", "Batch size");
    bind(ps, pre.common, "--head-epochs", "baseline.head_epochs", "Epochs of the binary head");

    FinetuneArgs ft;
    auto* f = app.add_subcommand("finetune-sre", "Stage 1: fine-tune f^T with the spoof region estimator");
    add_common(f, ft.common);
    f->add_option("--source-ckpt", ft.source_ckpt, "Source checkpoint directory")->required();
    f->add_option("--target-manifest", ft.target_manifest, "Target training manifest")->required();
    f->add_option("--out", ft.out, "Run directory")->required();
    f->add_option("--reconstructor", ft.reconstructor, "oracle or subspace")->capture_default_str();
    f->add_option("--components", ft.components, "Subspace reconstructor components")->capture_default_str();
    f->add_option("--eval", ft.evals, "Evaluation set NAME=manifest (repeatable)");
    bind(f, ft.common, "--mask-epochs", "stage1.mask_epochs", "Epochs with mask supervision");
    bind(f, ft.common, "--epochs", "stage1.epochs", "Epochs");
    bind(f, ft.common, "--lr", "stage1.lr", "Learning rate");
    bind(f, ft.common, "--threshold-T", "stage1.threshold", "Preliminary mask threshold");
    bind(f, ft.common, "--sre-hidden", "sre.hidden", "SRE hidden channels");

    WrapperArgs wr;
    auto* w = app.add_subcommand("train-wrapper", "Stage 2: train the student against both teachers");
    add_common(w, wr.common);
    w->add_option("--source-ckpt", wr.source_ckpt, "f^S checkpoint")->required();
    w->add_option("--target-ckpt", wr.target_ckpt, "f^T checkpoint")->required();
    w->add_option("--sre-ckpt", wr.sre_ckpt, "SRE checkpoint");
    w->add_option("--target-manifest", wr.target_manifest, "Target training manifest")->required();
    w->add_option("--out", wr.out, "Run directory")->required();
    w->add_option("--eval", wr.evals, "Evaluation set NAME=manifest (repeatable)");
    bind(w, wr.common, "--lambdas", "stage2.lambdas", "Four loss weights");
    bind(w, wr.common, "--disc-mode", "stage2.disc_mode", "chained, shared or single_concat");
    bind(w, wr.common, "--disc-hidden", "stage2.disc_hidden", "Discriminator width");
    bind(w, wr.common, "--lr", "stage2.lr", "Student learning rate");
    bind(w, wr.common, "--disc-lr", "stage2.disc_lr", "Discriminator learning rate");
    bind(w, wr.common, "--epochs", "stage2.epochs", "Epochs");

    BaselineArgs bl;
    auto* b = app.add_subcommand("run-baseline", "Train a comparison method");
    add_common(b, bl.common);
    b->add_option("--method", bl.method, "naive_ft, joint or lwf")->required();
    b->add_option("--source-ckpt", bl.source_ckpt, "Source checkpoint directory")->required();
    b->add_option("--target-manifest", bl.target_manifest, "Target training manifest")->required();
    b->add_option("--source-manifest", bl.source_manifest, "Source training manifest (joint only)");
    b->add_option("--out", bl.out, "Run directory")->required();
    b->add_option("--eval", bl.evals, "Evaluation set NAME=manifest (repeatable)");
    bind(b, bl.common, "--lr", "stage1.lr", "Learning rate");
    bind(b, bl.common, "--epochs", "stage1.epochs", "Epochs");
    bind(b, bl.common, "--temperature", "baseline.lwf_temperature", "Distillation temperature");
    bind(b, bl.common, "--distill-weight", "baseline.lwf_distill_weight", "Distillation weight");

    EvaluateArgs ev;
    auto* e = app.add_subcommand("evaluate", "Score manifests and write report.json plus ROC curves");
    add_common(e, ev.common);
    e->add_option("--model", ev.model, "Exported inference model");
    e->add_option("--run", ev.run, "Completed run directory");
    e->add_option("--manifest", ev.manifests, "Manifest, optionally NAME=manifest (repeatable)")->required();
    e->add_option("--fpr-targets", ev.fpr_targets, "Comma list of FPR targets");
    e->add_option("--out", ev.out, "Report path")->capture_default_str();

    ExportArgs ex;
    auto* x = app.add_subcommand("export", "Export student (+ SRE) of a wrapper run");
    x->add_option("--wrapper-run", ex.run, "train-wrapper run directory")->required();
    x->add_option("--out", ex.out, "Output model file")->required();

    PredictArgs pr;
    auto* pd = app.add_subcommand("predict", "Score a directory of PNG images");
    pd->add_option("--model", pr.model, "Exported inference model")->required();
    pd->add_option("--images", pr.images, "Directory of PNG images")->required();
    pd->add_option("--out", pr.out, "Scores CSV")->required();
    pd->add_option("--masks", pr.masks, "Directory for predicted mask PNGs");

    ReportArgs rp;
    auto* r = app.add_subcommand("report", "Render ROC overlays, loss curves and mask grids");
    r->add_option("--runs", rp.runs, "Run directories")->required();
    r->add_option("--out", rp.out, "Output directory")->required();
    r->add_flag("--quiet", rp.quiet, "Do not list rendered files");

    if (args.empty()) {
        std::cerr << app.help();
        return 2;
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& err) {
        std::cerr << "error: " << err.what() << "\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.front()->help());
        return 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    std::vector<std::string> argv{"fasw"};
    argv.insert(argv.end(), args.begin(), args.end());
    g_active_run.reset();
    try {
        if (command == "generate-synthetic") cmd_generate(gen, argv);
        else if (command == "build-protocols") cmd_protocols(prot, argv);
        else if (command == "pretrain-source") cmd_pretrain(pre, argv);
        else if (command == "finetune-sre") cmd_finetune(ft, argv);
        else if (command == "train-wrapper") cmd_wrapper(wr, argv);
        else if (command == "run-baseline") cmd_baseline(bl, argv);
        else if (command == "evaluate") cmd_evaluate(ev, argv);
        else if (command == "export") cmd_export(ex);
        else if (command == "predict") cmd_predict(pr);
        else if (command == "report") cmd_report(rp);
    } catch (const Error& err) {
        print_error_record(err, command);
        return err.kind() == ErrorKind::usage ? 2 : 1;
    } catch (const std::exception& err) {
        print_error_record(Error(ErrorKind::pipeline, err.what()), command);
        return 1;
    }
    return 0;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args);
}

}  // namespace fasw
