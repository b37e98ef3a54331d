#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "minconv/data.hpp"

namespace minconv::cli {

inline constexpr const char* kDataDirEnv = "MINCONV_DATA_DIR";

/// Process exit codes.
enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2 };

/// Entry point of the `minconv` tool. Writes results to `out` and one-line
/// diagnostics to `err`; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Loads "mnist" or "cifar10" from `dir`, or from `dir/<name>` when the files
/// are not directly inside it.
data::DatasetPair load_dataset(const std::string& name, const std::filesystem::path& dir);

}  // namespace minconv::cli
