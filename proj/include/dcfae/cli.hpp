#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace dcfae::cli {

/// Stable process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,          // bad arguments, missing or invalid config
  kDataMissing = 3,    // dataset, checkpoint file or training log cannot be read
  kNumericAbort = 4,   // non-finite loss during training
  kMismatch = 5,       // checkpoint does not fit the configuration
};

/// Applies one dotted-path override "a.b.c=value" in place. The value is
/// parsed as JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// First of path, path-1, path-2, ... that does not exist yet (an existing
/// empty directory is reused). The directory is created.
std::filesystem::path fresh_output_dir(const std::filesystem::path& base);

/// Runs `dcfae <command> ...`; diagnostics go to `err`, results to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dcfae::cli
