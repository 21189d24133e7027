#pragma once

// The `pricer` command line: generate, split, train, eval, bench-iv,
// size-study, lr-range, search, surface, chain and replay.
//
// Exit codes: 0 ok, 2 configuration error, 3 IO error, 4 numerical failure.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace pricer {

inline constexpr const char* kToolVersion = "1.0.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumeric = 4;

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

// "runs/bs.csv" -> "runs/bs.manifest.json"
std::filesystem::path manifest_path(const std::filesystem::path& primary_output);

}  // namespace pricer
