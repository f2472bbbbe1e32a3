#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace rbo {

inline constexpr int kTraceSchemaVersion = 1;

struct EvaluationRecord {
  std::size_t eval_index = 0;  // 1-based; the first n_init entries are the random initial set
  std::size_t id = 0;
  double raw_target = 0.0;
  double frac_top_k = 0.0;
};

struct RoundRecord {
  std::size_t round = 0;  // 1-based
  double test_tau = 0.0;
  std::optional<double> test_r2;  // unset when the test targets have no variance
  nlohmann::json diagnostics = nlohmann::json::object();
};

// Full record of one campaign. `config` echoes the CampaignConfig that produced it.
struct CampaignTrace {
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::string dataset;
  std::vector<EvaluationRecord> evaluations;
  std::vector<RoundRecord> rounds;
  std::string status = "ok";  // "ok" or "failed"
  std::string error;

  bool valid() const { return status == "ok"; }
  std::size_t n_init() const;
  std::size_t budget() const;
};

nlohmann::json to_json(const CampaignTrace& trace);
CampaignTrace trace_from_json(const nlohmann::json& j);

// Serialised with 2-space indentation and a trailing newline.
std::string dump_trace(const CampaignTrace& trace);
void write_trace(const CampaignTrace& trace, const std::filesystem::path& path);
CampaignTrace read_trace(const std::filesystem::path& path);

}  // namespace rbo
