#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fasw/experiment.hpp"
#include "fasw/metrics.hpp"
#include "fasw/sre.hpp"
#include "fasw/training.hpp"

namespace fasw {

inline constexpr int kReportSchemaVersion = 1;

/// Twelve hex digits of a 64-bit FNV-1a digest.
std::string short_hash(const std::string& material);

/// An isolated, write-once run directory:
///   config.txt     full config snapshot (re-loadable with --config)
///   run.json       run id, command, argv, seed, start/end time, status
///   log.txt        progress lines
///   checkpoints/   model, SRE and discriminator checkpoints (created on first save)
///   report.json    metrics (see docs/report_schema.md)
class RunDirectory {
public:
    /// Fails with an io error when `dir` exists and is not empty.
    static RunDirectory create(const std::filesystem::path& dir, const std::string& command,
                               const std::vector<std::string>& argv, const ExperimentConfig& cfg);

    const std::filesystem::path& path() const { return dir_; }
    const std::string& id() const { return id_; }
    const std::string& command() const { return command_; }
    std::filesystem::path checkpoint(const std::string& name) const { return dir_ / "checkpoints" / name; }

    /// Appends a line to log.txt and echoes it to stderr unless quiet.
    void log(const std::string& line) const;
    void set_quiet(bool q) { quiet_ = q; }
    /// Rewrites run.json with the final status.
    void finish(const std::string& status) const;

private:
    std::filesystem::path dir_;
    std::string id_, command_;
    std::vector<std::string> argv_;
    std::uint64_t seed_ = 0;
    std::string started_;
    bool quiet_ = false;

    void write_run_json(const std::string& status, const std::string& finished) const;
};

/// Raw metric values plus a "rounded" sub-object: percentages (APCER, BPCER,
/// ACER, HTER, EER, TPR) at one decimal, half away from zero; AUC at four.
nlohmann::json metrics_json(const MetricsReport& m);

/// Skeleton of report.json for a run: schema_version, run_id, command, seed,
/// config, empty metrics and artifacts objects.
nlohmann::json report_skeleton(const std::string& run_id, const std::string& command, const ExperimentConfig& cfg);
void write_report(const std::filesystem::path& path, const nlohmann::json& report);
nlohmann::json read_report(const std::filesystem::path& path);

/// Columns threshold,fpr,tpr.
void write_roc_csv(const std::filesystem::path& path, const RocAnalysis& roc);
std::vector<RocPoint> read_roc_csv(const std::filesystem::path& path);

/// ROC curves of several score sets overlaid on [0,1]^2.
void save_roc_plot(const std::filesystem::path& path, const std::vector<std::pair<std::string, RocAnalysis>>& curves,
                   const std::string& title);
/// One curve per loss column, x = epoch.
void save_loss_plot(const std::filesystem::path& path, const LossHistory& history, const std::string& title);

/// Mask comparison panel: column 0 is the input image, then one column per
/// (title, model, sre) triple showing the SRE mask of that model; the last
/// column is the ground-truth mask. Uses the first `rows` spoof samples.
struct MaskSource {
    std::string title;
    const FasModel* model = nullptr;
    const Sre* sre = nullptr;
};
void save_mask_grid(const std::filesystem::path& path, const DatasetManifest& m, const std::vector<MaskSource>& sources,
                    int rows = 4);

}  // namespace fasw
