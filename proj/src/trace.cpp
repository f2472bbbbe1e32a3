#include "rbo/trace.hpp"

#include <fstream>
#include <sstream>

#include "rbo/error.hpp"

namespace rbo {

using nlohmann::json;

std::size_t CampaignTrace::n_init() const { return config.at("n_init").get<std::size_t>(); }
std::size_t CampaignTrace::budget() const { return config.at("budget").get<std::size_t>(); }

json to_json(const CampaignTrace& trace) {
  json evals = json::array();
  for (const auto& e : trace.evaluations) {
    evals.push_back({{"eval_index", e.eval_index},
                     {"id", e.id},
                     {"raw_target", e.raw_target},
                     {"frac_top_k", e.frac_top_k}});
  }
  json rounds = json::array();
  for (const auto& r : trace.rounds) {
    json row = {{"round", r.round}, {"test_tau", r.test_tau}};
    row["test_r2"] = r.test_r2 ? json(*r.test_r2) : json(nullptr);
    row["diagnostics"] = r.diagnostics;
    rounds.push_back(std::move(row));
  }
  json j = {{"schema_version", kTraceSchemaVersion},
            {"config", trace.config},
            {"seed", trace.seed},
            {"dataset", trace.dataset},
            {"evaluations", std::move(evals)},
            {"rounds", std::move(rounds)},
            {"status", trace.status}};
  if (!trace.error.empty()) j["error"] = trace.error;
  return j;
}

CampaignTrace trace_from_json(const json& j) {
  try {
    const int version = j.value("schema_version", -1);
    if (version != kTraceSchemaVersion) {
      throw DataError("trace schema version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kTraceSchemaVersion) + ")");
    }
    CampaignTrace t;
    t.config = j.at("config");
    t.seed = j.at("seed").get<std::uint64_t>();
    t.dataset = j.at("dataset").get<std::string>();
    for (const auto& e : j.at("evaluations")) {
      t.evaluations.push_back({e.at("eval_index").get<std::size_t>(), e.at("id").get<std::size_t>(),
                               e.at("raw_target").get<double>(), e.at("frac_top_k").get<double>()});
    }
    for (const auto& r : j.at("rounds")) {
      RoundRecord rec;
      rec.round = r.at("round").get<std::size_t>();
      rec.test_tau = r.at("test_tau").get<double>();
      if (r.contains("test_r2") && !r.at("test_r2").is_null()) rec.test_r2 = r.at("test_r2").get<double>();
      if (r.contains("diagnostics")) rec.diagnostics = r.at("diagnostics");
      t.rounds.push_back(std::move(rec));
    }
    t.status = j.at("status").get<std::string>();
    t.error = j.value("error", std::string{});
    return t;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed trace: ") + e.what());
  }
}

std::string dump_trace(const CampaignTrace& trace) { return to_json(trace).dump(2) + "\n"; }

void write_trace(const CampaignTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << dump_trace(trace);
}

CampaignTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  try {
    return trace_from_json(j);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace rbo
