#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "fasw/fas_core.hpp"
#include "fasw/sre.hpp"
#include "fasw/wrapper.hpp"

namespace fasw {

// A checkpoint is a directory holding `params.fasw` (flat named arrays) and a
// `config.txt` sidecar with everything needed to rebuild the network.

/// Keys: levels, channels, height, width, leaky_slope.
std::map<std::string, std::string> model_config_meta(const ModelConfig& cfg);
/// Throws a schema error naming `where` on missing or malformed keys.
ModelConfig model_config_from_meta(const std::map<std::string, std::string>& meta, const std::string& where);

struct ModelCheckpoint {
    FasModel model;
    std::optional<BinaryHead> head;
};

void save_model_checkpoint(const std::filesystem::path& dir, const FasModel& model, const BinaryHead* head = nullptr);
ModelCheckpoint load_model_checkpoint(const std::filesystem::path& dir);

void save_sre_checkpoint(const std::filesystem::path& dir, const Sre& sre, const ModelConfig& cfg);
Sre load_sre_checkpoint(const std::filesystem::path& dir);

void save_discriminator_checkpoint(const std::filesystem::path& dir, const DiscriminatorPair& discs,
                                   const ModelConfig& cfg, DiscMode mode, int hidden);
DiscriminatorPair load_discriminator_checkpoint(const std::filesystem::path& dir);

/// Sidecar of any checkpoint directory.
std::map<std::string, std::string> read_checkpoint_sidecar(const std::filesystem::path& dir);

}  // namespace fasw
