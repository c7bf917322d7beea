#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "fasw/tensor.hpp"

namespace fasw {

/// Flat named-array container. Binary layout (little-endian):
///   "FASWCKPT" | u32 version | u32 n_meta | {u32 len, key, u32 len, value}*
///   | u32 n_arrays | {u32 len, name, u32 rank, i32 dims[rank], f64 data[]}*
/// Arrays are written in name order so identical contents give identical bytes.
struct ArchiveData {
    std::map<std::string, std::string> meta;
    std::map<std::string, Tensor> arrays;

    std::size_t scalar_count() const;
};

void save_archive(const std::filesystem::path& path, const ArchiveData& data);
ArchiveData load_archive(const std::filesystem::path& path);

/// Flat `key = value` text, one entry per line, `#` starts a comment.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::string format_key_values(const std::map<std::string, std::string>& kv);

}  // namespace fasw
