#pragma once

#include <string>
#include <utility>
#include <vector>

namespace cfb::cli {

inline constexpr const char* kVersion = "0.1.0";

//! Parses a flat `key=value` file. Blank lines and `#` comments are skipped.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

//! Splices config-file entries into an argument list as `--key value` pairs,
//! skipping keys already given on the command line. `--config` itself is
//! consumed.
std::vector<std::string> merge_config(const std::vector<std::string>& args);

//! Runs the command line and returns the process exit code:
//! 0 success, 1 runtime failure, 2 usage or configuration error.
int run(int argc, char** argv);

} // namespace cfb::cli
