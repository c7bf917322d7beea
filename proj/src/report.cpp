#include "fasw/report.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <iostream>

#include "fasw/error.hpp"
#include "fasw/io.hpp"
#include "fasw/plot.hpp"

namespace fasw {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string fpr_key(double f) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", f);
    return buf;
}

double round_to(double v, int decimals) { return round_report(v, decimals); }

}  // namespace

std::string short_hash(const std::string& material) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : material) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf, 12);
}

RunDirectory RunDirectory::create(const fs::path& dir, const std::string& command, const std::vector<std::string>& argv,
                                  const ExperimentConfig& cfg) {
    if (fs::exists(dir)) {
        require(fs::is_directory(dir) && fs::is_empty(dir), ErrorKind::io,
                dir.string() + ": run directory already exists and is not empty");
    }
    fs::create_directories(dir);
    RunDirectory r;
    r.dir_ = dir;
    r.command_ = command;
    r.argv_ = argv;
    r.seed_ = cfg.seed;
    r.started_ = utc_now();
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    r.id_ = short_hash(config_text(cfg) + "\n" + command + "\n" + io::join(argv, ' ') + "\n" + r.started_ + "\n" +
                       std::to_string(stamp));
    io::write_text(dir / "config.txt", config_text(cfg));
    io::write_text(dir / "log.txt", "");
    r.write_run_json("running", "");
    return r;
}

void RunDirectory::log(const std::string& line) const {
    std::ofstream out(dir_ / "log.txt", std::ios::app);
    out << "[" << utc_now() << "] " << line << "\n";
    if (!quiet_) std::cerr << line << "\n";
}

void RunDirectory::finish(const std::string& status) const { write_run_json(status, utc_now()); }

void RunDirectory::write_run_json(const std::string& status, const std::string& finished) const {
    json j;
    j["run_id"] = id_;
    j["command"] = command_;
    j["argv"] = argv_;
    j["seed"] = seed_;
    j["started_utc"] = started_;
    j["finished_utc"] = finished.empty() ? json(nullptr) : json(finished);
    j["status"] = status;
    io::write_text(dir_ / "run.json", j.dump(2) + "\n");
}

json metrics_json(const MetricsReport& m) {
    json j;
    j["n_live"] = m.n_live;
    j["n_spoof"] = m.n_spoof;
    j["threshold"] = m.threshold;
    j["apcer"] = m.rates.apcer;
    j["bpcer"] = m.rates.bpcer;
    j["acer"] = m.rates.acer;
    j["auc"] = m.auc;
    j["eer"] = m.eer;
    j["hter"] = m.hter;
    json tpr = json::object();
    for (const auto& [f, t] : m.tpr_at_fpr) tpr[fpr_key(f)] = t;
    j["tpr_at_fpr"] = tpr;
    json per_attack = json::object();
    for (const auto& [a, v] : m.apcer_per_attack) per_attack[a] = v;
    j["apcer_per_attack"] = per_attack;

    json r;
    r["apcer"] = round_to(m.rates.apcer, 1);
    r["bpcer"] = round_to(m.rates.bpcer, 1);
    r["acer"] = round_to(m.rates.acer, 1);
    r["hter"] = round_to(m.hter, 1);
    r["eer"] = round_to(100.0 * m.eer, 1);
    r["auc"] = round_to(m.auc, 4);
    json rtpr = json::object();
    for (const auto& [f, t] : m.tpr_at_fpr) rtpr[fpr_key(f)] = round_to(100.0 * t, 1);
    r["tpr_at_fpr_pct"] = rtpr;
    j["rounded"] = r;
    return j;
}

json report_skeleton(const std::string& run_id, const std::string& command, const ExperimentConfig& cfg) {
    json j;
    j["schema_version"] = kReportSchemaVersion;
    j["run_id"] = run_id;
    j["command"] = command;
    j["seed"] = cfg.seed;
    json c = json::object();
    for (const auto& [k, v] : to_key_values(cfg)) c[k] = v;
    j["config"] = c;
    j["metrics"] = json::object();
    j["artifacts"] = json::object();
    return j;
}

void write_report(const fs::path& path, const json& report) {
    try {
        io::write_text(path, report.dump(2) + "\n");
    } catch (const json::exception& e) {
        fail(ErrorKind::export_error, path.string() + ": " + e.what());
    }
}

json read_report(const fs::path& path) {
    try {
        json j = json::parse(io::read_text(path));
        require(j.is_object() && j.contains("schema_version"), ErrorKind::schema,
                path.string() + ": not a report (no schema_version)");
        require(j["schema_version"] == kReportSchemaVersion, ErrorKind::schema,
                path.string() + ": unsupported report schema version");
        return j;
    } catch (const json::exception& e) {
        fail(ErrorKind::schema, path.string() + ": " + e.what());
    }
}

void write_roc_csv(const fs::path& path, const RocAnalysis& roc) {
    std::string out = "threshold,fpr,tpr\n";
    char buf[128];
    for (const auto& p : roc.points) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.threshold, p.fpr, p.tpr);
        out += buf;
    }
    io::write_text(path, out);
}

std::vector<RocPoint> read_roc_csv(const fs::path& path) {
    const auto lines = io::split(io::read_text(path), '\n');
    require(!lines.empty() && io::trim(lines[0]) == "threshold,fpr,tpr", ErrorKind::schema,
            path.string() + ": bad ROC header");
    std::vector<RocPoint> pts;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (io::trim(lines[i]).empty()) continue;
        const auto f = io::split(lines[i], ',');
        require(f.size() == 3, ErrorKind::schema, path.string() + ": row " + std::to_string(i) + " needs 3 fields");
        try {
            pts.push_back({std::stod(f[0]), std::stod(f[1]), std::stod(f[2])});
        } catch (const std::logic_error&) {
            fail(ErrorKind::schema, path.string() + ": row " + std::to_string(i) + " is not numeric");
        }
    }
    return pts;
}

void save_roc_plot(const fs::path& path, const std::vector<std::pair<std::string, RocAnalysis>>& curves,
                   const std::string& title) {
    plot::LinePlot p;
    p.title = title;
    p.x_label = "FPR";
    p.y_label = "TPR";
    p.fixed_range = true;
    p.range = {0.0, 1.0, 0.0, 1.0};
    p.legend_bottom = true;
    for (const auto& [name, roc] : curves) {
        plot::Series s;
        char label[160];
        std::snprintf(label, sizeof label, "%s AUC %.4f", name.c_str(), roc.auc);
        s.name = label;
        for (const auto& pt : roc.points) {
            s.x.push_back(pt.fpr);
            s.y.push_back(pt.tpr);
        }
        p.series.push_back(std::move(s));
    }
    plot::save_line_plot(path, p);
}

void save_loss_plot(const fs::path& path, const LossHistory& history, const std::string& title) {
    plot::LinePlot p;
    p.title = title;
    p.x_label = "epoch";
    p.y_label = "loss";
    std::map<std::string, plot::Series> by_name;
    for (const auto& rec : history) {
        for (const auto& [name, v] : rec.losses) {
            auto& s = by_name[name];
            s.name = name;
            s.x.push_back(rec.epoch);
            s.y.push_back(v);
        }
    }
    for (auto& [_, s] : by_name) p.series.push_back(std::move(s));
    plot::save_line_plot(path, p);
}

void save_mask_grid(const fs::path& path, const DatasetManifest& m, const std::vector<MaskSource>& sources, int rows) {
    std::vector<std::string> titles{"input"};
    for (const auto& s : sources) titles.push_back(s.title);
    titles.push_back("ground truth");
    std::vector<std::vector<Tensor>> grid;
    for (const auto& sample : m.samples) {
        if (static_cast<int>(grid.size()) >= rows) break;
        if (sample.label != Label::spoof) continue;
        require(!sample.image.empty(), ErrorKind::data, sample.sample_id + ": image not loaded");
        const Tensor batch = sample.image.reshaped({1, sample.image.dim(0), sample.image.dim(1), sample.image.dim(2)});
        std::vector<Tensor> row{sample.image};
        for (const auto& src : sources) {
            require(src.model && src.sre, ErrorKind::input, "mask grid column '" + src.title + "' needs a model and SRE");
            ad::NoGradGuard no_grad;
            const ScoredForward f = scored_forward(*src.model, src.sre, ad::Var(batch));
            const Tensor& mask = f.mask.value();
            row.push_back(mask.reshaped({1, mask.dim(2), mask.dim(3)}));
        }
        row.push_back(sample.gt_mask ? *sample.gt_mask
                                     : Tensor({1, sample.image.dim(1), sample.image.dim(2)}, 0.0));
        grid.push_back(std::move(row));
    }
    require(!grid.empty(), ErrorKind::data, "mask grid: manifest has no spoof samples");
    plot::save_image_grid(path, titles, grid);
}

}  // namespace fasw
