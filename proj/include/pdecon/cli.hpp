#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pdecon {

/// Seed used when neither the config nor --seed provides one.
inline constexpr std::uint64_t kDefaultSeed = 20240101;

/// Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace pdecon
