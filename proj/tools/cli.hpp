#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pnc::cli {

/// Entry point of the `pnc` tool. Exit codes: 0 ok, 1 unexpected failure,
/// 2 usage error, 3 data error, 4 numeric failure.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

/// key=value lines; '#' starts a comment. Throws std::invalid_argument on a
/// malformed line or a repeated key.
std::map<std::string, std::string> parse_config(const std::string& text);

/// Dataset lookup: $PNC_DATA_DIR/path, then path, then the data directory
/// of the source tree. Returns the first that exists, else path.
std::filesystem::path locate_input(const std::filesystem::path& path);

}  // namespace pnc::cli
