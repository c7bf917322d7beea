#include "fasw/model_io.hpp"

#include <cstdio>
#include <set>

#include "fasw/checkpoint.hpp"
#include "fasw/error.hpp"
#include "fasw/io.hpp"

namespace fasw {

namespace {

namespace fs = std::filesystem;

constexpr const char* kParamsFile = "params.fasw";
constexpr const char* kSidecarFile = "config.txt";

std::string join_ints(const std::vector<int>& v) {
    std::vector<std::string> parts;
    for (int x : v) parts.push_back(std::to_string(x));
    return io::join(parts, ',');
}

std::string lookup(const std::map<std::string, std::string>& meta, const std::string& key, const std::string& where) {
    auto it = meta.find(key);
    require(it != meta.end(), ErrorKind::schema, where + ": missing key '" + key + "'");
    return it->second;
}

int lookup_int(const std::map<std::string, std::string>& meta, const std::string& key, const std::string& where) {
    const std::string v = lookup(meta, key, where);
    try {
        std::size_t used = 0;
        const int out = std::stoi(v, &used);
        if (used == v.size()) return out;
    } catch (const std::logic_error&) {
    }
    fail(ErrorKind::schema, where + ": key '" + key + "' is not an integer: '" + v + "'");
}

ModelRole parse_role(const std::string& s, const std::string& where) {
    for (ModelRole r : {ModelRole::source_teacher, ModelRole::target_teacher, ModelRole::student}) {
        if (s == to_string(r)) return r;
    }
    fail(ErrorKind::schema, where + ": unknown model role '" + s + "'");
}

void write_checkpoint(const fs::path& dir, std::map<std::string, std::string> sidecar, const nn::ParamSet& params) {
    fs::create_directories(dir);
    ArchiveData a;
    a.meta = sidecar;
    a.arrays = params.snapshot();
    save_archive(dir / kParamsFile, a);
    io::write_text(dir / kSidecarFile, format_key_values(sidecar));
}

// Loads every array of the archive into `params`; names must match exactly.
void load_params(const fs::path& dir, nn::ParamSet params) {
    const fs::path file = dir / kParamsFile;
    const ArchiveData a = load_archive(file);
    std::set<std::string> expected;
    for (const auto& n : params.names()) expected.insert(n);
    for (const auto& [name, _] : a.arrays) {
        require(expected.count(name), ErrorKind::schema, file.string() + ": unexpected parameter '" + name + "'");
    }
    params.load(a.arrays);
}

void require_kind(const std::map<std::string, std::string>& meta, const std::string& kind, const fs::path& dir) {
    const std::string got = lookup(meta, "kind", dir.string());
    require(got == kind, ErrorKind::schema, dir.string() + ": expected a " + kind + " checkpoint, found '" + got + "'");
}

}  // namespace

std::map<std::string, std::string> model_config_meta(const ModelConfig& cfg) {
    std::map<std::string, std::string> m;
    m["levels"] = std::to_string(cfg.levels);
    m["channels"] = join_ints(cfg.channels);
    m["height"] = std::to_string(cfg.height);
    m["width"] = std::to_string(cfg.width);
    char slope[64];
    std::snprintf(slope, sizeof slope, "%.17g", cfg.leaky_slope);
    m["leaky_slope"] = slope;
    return m;
}

ModelConfig model_config_from_meta(const std::map<std::string, std::string>& meta, const std::string& where) {
    ModelConfig cfg;
    cfg.levels = lookup_int(meta, "levels", where);
    cfg.channels.clear();
    for (const auto& c : io::split(lookup(meta, "channels", where), ',')) {
        try {
            cfg.channels.push_back(std::stoi(c));
        } catch (const std::logic_error&) {
            fail(ErrorKind::schema, where + ": malformed channel list");
        }
    }
    cfg.height = lookup_int(meta, "height", where);
    cfg.width = lookup_int(meta, "width", where);
    try {
        cfg.leaky_slope = std::stod(lookup(meta, "leaky_slope", where));
    } catch (const std::logic_error&) {
        fail(ErrorKind::schema, where + ": malformed leaky_slope");
    }
    require(cfg.levels > 0 && static_cast<int>(cfg.channels.size()) == cfg.levels, ErrorKind::schema,
            where + ": channel list does not match the level count");
    return cfg;
}

std::map<std::string, std::string> read_checkpoint_sidecar(const fs::path& dir) {
    require(fs::is_directory(dir), ErrorKind::input, dir.string() + ": checkpoint directory not found");
    const fs::path file = dir / kSidecarFile;
    require(fs::exists(file), ErrorKind::schema, file.string() + ": missing checkpoint sidecar");
    return parse_key_values(io::read_text(file));
}

void save_model_checkpoint(const fs::path& dir, const FasModel& model, const BinaryHead* head) {
    auto meta = model_config_meta(model.config());
    meta["kind"] = "model";
    meta["role"] = to_string(model.role());
    meta["has_head"] = head ? "1" : "0";
    nn::ParamSet params = model.params();
    if (head) params.append(head->params());
    write_checkpoint(dir, meta, params);
}

ModelCheckpoint load_model_checkpoint(const fs::path& dir) {
    const auto meta = read_checkpoint_sidecar(dir);
    require_kind(meta, "model", dir);
    const ModelConfig cfg = model_config_from_meta(meta, dir.string());
    ModelCheckpoint ck{FasModel(cfg, parse_role(lookup(meta, "role", dir.string()), dir.string())), std::nullopt};
    nn::ParamSet params = ck.model.params();
    if (lookup(meta, "has_head", dir.string()) == "1") {
        ck.head = BinaryHead(cfg.channels.back(), 0);
        params.append(ck.head->params());
    }
    load_params(dir, params);
    return ck;
}

void save_sre_checkpoint(const fs::path& dir, const Sre& sre, const ModelConfig& cfg) {
    auto meta = model_config_meta(cfg);
    meta["kind"] = "sre";
    meta["sre_hidden"] = std::to_string(sre.hidden());
    write_checkpoint(dir, meta, sre.params());
}

Sre load_sre_checkpoint(const fs::path& dir) {
    const auto meta = read_checkpoint_sidecar(dir);
    require_kind(meta, "sre", dir);
    const ModelConfig cfg = model_config_from_meta(meta, dir.string());
    Sre sre(cfg, lookup_int(meta, "sre_hidden", dir.string()), 0);
    load_params(dir, sre.params());
    return sre;
}

void save_discriminator_checkpoint(const fs::path& dir, const DiscriminatorPair& discs, const ModelConfig& cfg,
                                   DiscMode mode, int hidden) {
    auto meta = model_config_meta(cfg);
    meta["kind"] = "discriminator";
    meta["disc_mode"] = to_string(mode);
    meta["disc_hidden"] = std::to_string(hidden);
    write_checkpoint(dir, meta, discs.params());
}

DiscriminatorPair load_discriminator_checkpoint(const fs::path& dir) {
    const auto meta = read_checkpoint_sidecar(dir);
    require_kind(meta, "discriminator", dir);
    const ModelConfig cfg = model_config_from_meta(meta, dir.string());
    DiscriminatorPair d = make_discriminators(cfg, parse_disc_mode(lookup(meta, "disc_mode", dir.string())),
                                              lookup_int(meta, "disc_hidden", dir.string()), 0);
    load_params(dir, d.params());
    return d;
}

}  // namespace fasw
