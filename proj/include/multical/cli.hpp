#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace multical {

inline constexpr const char* kVersion = "0.1.0";

// Entry point of the `multical` command. `args[0]` is the program name.
// Returns 0 on success, 1 for invalid input or flags, 2 for runtime and
// convergence failures.
int run_cli(const std::vector<std::string>& args);

// Hex SHA-256 of a byte string / file.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace multical
