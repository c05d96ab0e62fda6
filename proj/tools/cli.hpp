#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace crnsynth::cli {

enum ExitCode { kOk = 0, kConfigError = 2, kNumericalFailure = 3 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 64-bit FNV-1a
std::uint64_t fnv1a(const std::string& s);

// Validates the JSON config against the schema in README.md (unknown keys are errors)
// and fills defaults. Throws ConfigError.
nlohmann::json normalize_config(const std::string& command, nlohmann::json cfg);

// Entry point shared by the executable and the tests.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace crnsynth::cli
