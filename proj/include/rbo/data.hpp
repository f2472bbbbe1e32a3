#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rbo/chem.hpp"

namespace rbo::data {

enum class Direction { kMaximize, kMinimize };

std::string to_string(Direction d);
Direction direction_from_string(const std::string& s);

struct Record {
  std::size_t id = 0;
  std::string smiles;  // "synthetic:<hex>" for generated candidates
  chem::Fingerprint features;
  double raw_target = 0.0;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string name, Direction direction, std::vector<Record> records);

  const std::string& name() const noexcept { return name_; }
  Direction direction() const noexcept { return direction_; }
  std::size_t size() const noexcept { return records_.size(); }
  std::size_t nbits() const noexcept { return records_.empty() ? 0 : records_.front().features.nbits(); }
  const std::vector<Record>& records() const noexcept { return records_; }
  const Record& operator[](std::size_t id) const { return records_.at(id); }

  // The only place raw targets become maximisation targets: minimisation
  // datasets are negated here and nowhere else.
  double optimization_target(std::size_t id) const;
  std::vector<double> optimization_targets(std::span<const std::size_t> ids) const;
  std::vector<double> raw_targets(std::span<const std::size_t> ids) const;
  std::vector<chem::Fingerprint> features(std::span<const std::size_t> ids) const;

 private:
  std::string name_;
  Direction direction_ = Direction::kMaximize;
  std::vector<Record> records_;
};

// Maps a raw target of a dataset with the given direction into the maximisation convention.
double to_optimization(double raw, Direction direction);

struct CsvOptions {
  std::string smiles_column = "smiles";
  std::string target_column = "target";
  Direction direction = Direction::kMaximize;
  bool permissive = false;
  int radius = chem::kDefaultRadius;
  std::size_t nbits = chem::kDefaultBits;
};

struct LoadReport {
  Dataset dataset;
  std::size_t skipped = 0;
  std::vector<std::string> messages;  // one "row N: reason" entry per skipped row
};

// Rows are numbered from 1 after the header. A "synthetic:<hex>" SMILES cell
// is decoded directly into the fingerprint.
LoadReport load_csv(const std::filesystem::path& path, const CsvOptions& options);

// Writes the smiles/target schema read by load_csv.
void write_csv(const Dataset& dataset, const std::filesystem::path& path,
               const std::string& smiles_column = "smiles",
               const std::string& target_column = "target");

// Splits one CSV line into cells; supports double-quoted cells.
std::vector<std::string> split_csv_line(const std::string& line);

struct ScalingParams {
  double median = 0.0;
  double iqr = 0.0;
  bool fallback_scale_used = false;

  double scale() const noexcept { return fallback_scale_used ? 1.0 : iqr; }
  double apply(double v) const noexcept { return (v - median) / scale(); }
  double invert(double s) const noexcept { return s * scale() + median; }
};

// Linear interpolation between order statistics at position q*(n-1).
double quantile(std::span<const double> values, double q);

struct Scaled {
  std::vector<double> values;
  ScalingParams params;
};

Scaled robust_scale(std::span<const double> values);

struct Split {
  std::vector<std::size_t> pool;
  std::vector<std::size_t> test;
};

// Uniform random partition; |test| = round(n * test_fraction). Both lists ascending.
Split split(std::size_t n, double test_fraction, std::uint64_t seed);
inline Split split(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
  return split(dataset.size(), test_fraction, seed);
}

struct Pair {
  std::size_t i = 0;
  std::size_t j = 0;
  friend bool operator==(const Pair&, const Pair&) = default;
};

// multiplier*N distinct unordered pairs over `indices`, or every unique pair
// when that is no more than the request.
std::vector<Pair> sample_pairs(std::span<const std::size_t> indices, std::size_t multiplier,
                               std::uint64_t seed);

struct SyntheticParams {
  std::size_t n = 500;
  std::size_t n_anchors = 20;
  std::size_t cliff_count = 0;
  std::size_t nbits = chem::kDefaultBits;
  std::uint64_t seed = 0;
  std::size_t expected_popcount = 40;
  double mutation_rate = 0.25;
  std::string name;  // defaults to synth_n{n}_a{anchors}_c{cliffs}_s{seed}
};

// Fingerprints grow as a random tree: a few independent roots, then each new
// candidate is a mutated copy of a uniformly chosen earlier one (expected
// popcount preserved). Targets are Tanimoto-weighted means of anchor values,
// then `cliff_count` random candidates are flipped to 1 - y.
Dataset generate_synthetic(const SyntheticParams& params);

}  // namespace rbo::data
