#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rbo/analytics.hpp"
#include "rbo/bayesopt.hpp"
#include "rbo/data.hpp"

namespace rbo::experiment {

// Where the candidates come from: a CSV file, or the synthetic generator when
// no path is given.
struct DatasetSource {
  std::optional<std::filesystem::path> csv;
  data::CsvOptions csv_options;
  data::SyntheticParams synthetic;
  std::string name;  // overrides the dataset's own name when set

  data::Dataset load(bool permissive) const;
};

struct ExperimentConfig {
  DatasetSource dataset;
  std::vector<surrogate::Kind> kinds = {surrogate::Kind::kBnn};
  std::vector<surrogate::Mode> modes = {surrogate::Mode::kRanking};
  std::vector<bayesopt::Acquisition> acquisitions = {bayesopt::Acquisition::kUcb};
  bayesopt::CampaignConfig campaign;  // kind, mode, acquisition and seed are filled per campaign
  std::size_t n_seeds = 20;
  std::uint64_t base_seed = 0;
  std::filesystem::path output_dir = "traces";

  void validate() const;
  nlohmann::json to_json() const;
};

// Flat `key = value` lines; `#` starts a comment; lists are comma separated.
// Relative paths are resolved against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

struct CampaignSpec {
  surrogate::Kind kind = surrogate::Kind::kBnn;
  surrogate::Mode mode = surrogate::Mode::kRanking;
  bayesopt::Acquisition acquisition = bayesopt::Acquisition::kUcb;
  std::uint64_t seed = 0;
  std::string file;  // {dataset}_{kind}_{mode}_{acq}_{seed}.json
};

// Replaces characters that are awkward in file names.
std::string file_safe(const std::string& name);

// Grid x seeds, sorted by file name.
std::vector<CampaignSpec> expand_grid(const ExperimentConfig& config, const std::string& dataset_name);

struct ManifestEntry {
  CampaignSpec spec;
  std::string status;  // "ok" or "failed"
  std::string error;
};

struct Manifest {
  std::string dataset;
  nlohmann::json config;
  std::vector<ManifestEntry> entries;  // sorted by file name

  std::size_t n_ok() const;
  nlohmann::json to_json() const;
};

using Progress = std::function<void(const ManifestEntry&, std::size_t done, std::size_t total)>;

// Runs every campaign with `jobs` workers, writes one trace per successful
// campaign plus manifest.json into config.output_dir. Failed campaigns are
// listed in the manifest and get no trace file.
Manifest run_experiment(const ExperimentConfig& config, const data::Dataset& dataset, std::size_t jobs,
                        const Progress& progress = {});

// ---------------------------------------------------------------------------
// Reporting

struct ConfigKey {
  std::string dataset;
  std::string kind;
  std::string mode;
  std::string acquisition;

  auto operator<=>(const ConfigKey&) const = default;
};

ConfigKey key_of(const CampaignTrace& trace);

struct SummaryRow {
  ConfigKey key;
  analytics::AucSummary auc;
  std::size_t n_failed = 0;
};

struct ComparisonRow {
  ConfigKey key;  // mode left empty
  double ranking_mean = 0.0;
  double regression_mean = 0.0;
  analytics::TTest test;
  std::string verdict;  // better / similar / worse, from the ranking side
};

struct CorrelationRow {
  std::string scope;  // "all" or a dataset name
  std::size_t n = 0;
  std::optional<analytics::Correlation> correlation;  // unset when undefined
};

struct CurveRow {
  ConfigKey key;
  std::size_t eval_index = 0;
  double mean_fraction = 0.0;
  std::size_t n = 0;
};

struct Report {
  std::vector<SummaryRow> summary;
  std::vector<ComparisonRow> comparison;
  std::vector<CorrelationRow> correlation;
  std::vector<CurveRow> curves;
};

// "better" / "worse" need p < alpha and a mean difference in that direction.
std::string verdict(double ranking_mean, double regression_mean, double p, double alpha = 0.05);

// Every *.json except manifest.json, sorted by file name.
std::vector<CampaignTrace> load_traces(const std::filesystem::path& dir);

Report build_report(const std::vector<CampaignTrace>& traces);

// summary.csv, comparison.csv, correlation.csv, curves.csv
void write_report(const Report& report, const std::filesystem::path& dir);
std::string summary_csv(const Report& report);
std::string comparison_csv(const Report& report);
std::string correlation_csv(const Report& report);
std::string curves_csv(const Report& report);

// ---------------------------------------------------------------------------
// Command bodies shared by the executable and the Python module.

// One "id,fingerprint" line per row after a header.
std::string fingerprint_table(const data::Dataset& dataset);

// "dataset,n,rogi" header and row, a blank line, then "threshold,dispersion" rows.
std::string rogi_table(const data::Dataset& dataset);

}  // namespace rbo::experiment
