#include "fasw/training.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "fasw/checkpoint.hpp"
#include "fasw/error.hpp"
#include "fasw/io.hpp"

namespace fasw {

void validate(const TrainSchedule& s) {
    require(s.epochs >= 0, ErrorKind::config, "epochs must be >= 0");
    require(std::isfinite(s.lr) && s.lr >= 0.0, ErrorKind::config, "lr must be finite and >= 0");
    require(std::isfinite(s.lr_decay) && s.lr_decay > 0.0, ErrorKind::config, "lr_decay must be > 0");
    require(s.batch_size > 0, ErrorKind::config, "batch_size must be positive");
    require(s.live_fraction >= 0.0 && s.live_fraction <= 1.0, ErrorKind::config, "live_fraction must be in [0,1]");
    require(s.batches_per_epoch >= 0, ErrorKind::config, "batches_per_epoch must be >= 0");
}

void write_loss_csv(const std::filesystem::path& path, const LossHistory& history) {
    std::set<std::string> names;
    for (const auto& r : history)
        for (const auto& [k, _] : r.losses) names.insert(k);
    std::ostringstream out;
    out.precision(17);
    out << "epoch,lr";
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    for (const auto& r : history) {
        out << r.epoch << ',' << r.lr;
        for (const auto& n : names) {
            out << ',';
            if (auto it = r.losses.find(n); it != r.losses.end()) out << it->second;
        }
        out << '\n';
    }
    io::write_text(path, out.str());
}

LossHistory read_loss_csv(const std::filesystem::path& path) {
    const auto lines = io::split(io::read_text(path), '\n');
    require(!lines.empty(), ErrorKind::schema, path.string() + ": empty loss file");
    const auto header = io::split(io::trim(lines[0]), ',');
    require(header.size() >= 2 && header[0] == "epoch" && header[1] == "lr", ErrorKind::schema,
            path.string() + ": bad loss header");
    LossHistory out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::string line = io::trim(lines[i]);
        if (line.empty()) continue;
        const auto f = io::split(line, ',');
        require(f.size() == header.size(), ErrorKind::schema, path.string() + ": bad row " + std::to_string(i));
        EpochRecord r;
        r.epoch = std::stoi(f[0]);
        r.lr = std::stod(f[1]);
        for (std::size_t c = 2; c < f.size(); ++c) {
            if (!f[c].empty()) r.losses[header[c]] = std::stod(f[c]);
        }
        out.push_back(std::move(r));
    }
    return out;
}

BatchSampler manifest_sampler(const DatasetManifest& m, int batch_size, double live_fraction) {
    return [&m, batch_size, live_fraction](Rng& rng) { return sample_batch(m, batch_size, live_fraction, rng); };
}

BatchSampler mixed_sampler(std::vector<const DatasetManifest*> parts, int batch_size, double live_fraction) {
    std::erase_if(parts, [](const DatasetManifest* m) { return m == nullptr || m->samples.empty(); });
    require(!parts.empty(), ErrorKind::data, "no samples to draw batches from");
    require(batch_size >= static_cast<int>(parts.size()), ErrorKind::config,
            "batch_size smaller than the number of mixed manifests");
    return [parts, batch_size, live_fraction](Rng& rng) {
        const int k = static_cast<int>(parts.size());
        std::vector<Tensor> images, masks;
        Batch out;
        for (int i = 0; i < k; ++i) {
            const int n = batch_size / k + (i < batch_size % k ? 1 : 0);
            Batch b = sample_batch(*parts[static_cast<std::size_t>(i)], n, live_fraction, rng);
            for (int j = 0; j < b.size(); ++j) {
                images.push_back(b.images.slice_batch(j, 1).reshaped({b.images.dim(1), b.images.dim(2), b.images.dim(3)}));
                masks.push_back(b.masks.slice_batch(j, 1).reshaped({1, b.masks.dim(2), b.masks.dim(3)}));
            }
            out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
            out.indices.insert(out.indices.end(), b.indices.begin(), b.indices.end());
            out.sample_ids.insert(out.sample_ids.end(), b.sample_ids.begin(), b.sample_ids.end());
        }
        out.images = stack(images);
        out.masks = stack(masks);
        return out;
    };
}

int batches_per_epoch(const TrainSchedule& s, std::size_t manifest_size) {
    if (s.batches_per_epoch > 0) return s.batches_per_epoch;
    return std::max(1, static_cast<int>((manifest_size + static_cast<std::size_t>(s.batch_size) - 1) /
                                        static_cast<std::size_t>(s.batch_size)));
}

void EpochMeter::add(const std::string& name, double value) {
    auto& [sum, n] = acc_[name];
    sum += value;
    ++n;
}

EpochRecord EpochMeter::finish(int epoch, double lr) {
    EpochRecord r;
    r.epoch = epoch;
    r.lr = lr;
    for (const auto& [name, sn] : acc_) r.losses[name] = sn.first / sn.second;
    acc_.clear();
    return r;
}

void guard_finite(double value, const std::string& what, const nn::ParamSet& state, const TrainSchedule& s) {
    if (std::isfinite(value)) return;
    std::string where;
    if (s.diagnostics_dir) {
        ArchiveData diag;
        diag.meta["reason"] = "non-finite " + what;
        diag.arrays = state.snapshot();
        const auto path = *s.diagnostics_dir / "diagnostics.ckpt";
        save_archive(path, diag);
        where = "; parameters saved to " + path.string();
    }
    fail(ErrorKind::numerical, "non-finite " + what + where);
}

}  // namespace fasw
