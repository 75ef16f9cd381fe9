#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace bpim2col::cli {

enum ExitCode : int { kOk = 0, kVerifyFailed = 1, kUsage = 2, kIo = 3 };

struct RunManifest {
  std::string command;
  std::string config_digest;  // FNV-1a of the canonical configuration JSON
  std::uint64_t seed = 0;
  std::string timestamp;      // UTC, ISO 8601
  std::string version;

  nlohmann::json to_json() const;
};

std::string digest(const nlohmann::json& canonical);

// Parses argv and runs one subcommand. Normal output goes to `out`,
// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bpim2col::cli
