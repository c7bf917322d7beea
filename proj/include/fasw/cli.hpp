#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fasw {

/// Entry point of the `fasw` tool. `args` excludes the program name.
/// Returns 0 on success, 2 on usage errors and 1 on runtime failures; a
/// runtime failure also prints a one-line JSON error record to stderr and,
/// when a run directory was created, writes it to `<run>/error.json`.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

/// Relative dataset paths resolve against $FASW_DATA_ROOT when it is set.
std::filesystem::path resolve_data_path(const std::filesystem::path& p);

}  // namespace fasw
