#pragma once

#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "fasw/tensor.hpp"

namespace fasw::io {

namespace fs = std::filesystem;

/// Records every path the library reads while at least one guard is alive.
/// Used to audit that source-free training never touches source data.
class AccessRecorder {
public:
    AccessRecorder();
    ~AccessRecorder();
    AccessRecorder(const AccessRecorder&) = delete;
    AccessRecorder& operator=(const AccessRecorder&) = delete;

    std::vector<fs::path> paths() const;
    /// Paths that lie at or below `root`.
    std::vector<fs::path> under(const fs::path& root) const;

    static void note_read(const fs::path& p);

private:
    mutable std::mutex mu_;
    std::vector<fs::path> paths_;
};

std::string read_text(const fs::path& p);
void write_text(const fs::path& p, const std::string& text);
std::vector<char> read_bytes(const fs::path& p);
void write_bytes(const fs::path& p, const std::vector<char>& bytes);

/// 8-bit lossless PNG. Images are C x H x W with values in [0,1]; C is 1 or 3.
Tensor read_png(const fs::path& p);
void write_png(const fs::path& p, const Tensor& image);

/// Rounds to the nearest 1/255 step, the precision stored by `write_png`.
double quantize8(double v);

std::vector<std::string> split(const std::string& s, char delim);
std::string join(const std::vector<std::string>& parts, char delim);
std::string trim(const std::string& s);

}  // namespace fasw::io
