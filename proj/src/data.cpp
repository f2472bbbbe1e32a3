#include "rbo/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include "rbo/error.hpp"
#include "rbo/random.hpp"

namespace rbo::data {

namespace {

constexpr std::string_view kSyntheticPrefix = "synthetic:";

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                         const std::filesystem::path& path) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw DataError(path.string() + ": missing column '" + name + "'");
  }
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

std::string to_string(Direction d) { return d == Direction::kMaximize ? "maximize" : "minimize"; }

Direction direction_from_string(const std::string& s) {
  if (s == "maximize" || s == "max") return Direction::kMaximize;
  if (s == "minimize" || s == "min") return Direction::kMinimize;
  throw ConfigError("unknown direction '" + s + "' (expected maximize or minimize)");
}

double to_optimization(double raw, Direction direction) {
  return direction == Direction::kMinimize ? -raw : raw;
}

Dataset::Dataset(std::string name, Direction direction, std::vector<Record> records)
    : name_(std::move(name)), direction_(direction), records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].id != i) throw DataError("dataset ids must be dense 0..N-1");
    if (records_[i].features.nbits() != records_.front().features.nbits()) {
      throw DataError("all fingerprints in a dataset must share one width");
    }
  }
}

double Dataset::optimization_target(std::size_t id) const {
  return to_optimization(records_.at(id).raw_target, direction_);
}

std::vector<double> Dataset::optimization_targets(std::span<const std::size_t> ids) const {
  std::vector<double> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) out.push_back(optimization_target(id));
  return out;
}

std::vector<double> Dataset::raw_targets(std::span<const std::size_t> ids) const {
  std::vector<double> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) out.push_back(records_.at(id).raw_target);
  return out;
}

std::vector<chem::Fingerprint> Dataset::features(std::span<const std::size_t> ids) const {
  std::vector<chem::Fingerprint> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) out.push_back(records_.at(id).features);
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

LoadReport load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
  const auto header = split_csv_line(line);
  const std::size_t smiles_col = column_index(header, options.smiles_column, path);
  const std::size_t target_col = column_index(header, options.target_column, path);

  LoadReport report;
  std::vector<Record> records;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    const auto where = path.string() + ": row " + std::to_string(row);
    if (cells.size() <= std::max(smiles_col, target_col)) {
      throw DataError(where + ": too few columns");
    }
    const std::string& target_text = cells[target_col];
    double target = 0.0;
    std::size_t consumed = 0;
    try {
      target = std::stod(target_text, &consumed);
    } catch (const std::exception&) {
      consumed = 0;
    }
    if (consumed == 0 || consumed != target_text.size() || !std::isfinite(target)) {
      throw DataError(where + ": target '" + target_text + "' is not a finite number");
    }

    const std::string& smiles = cells[smiles_col];
    chem::Fingerprint fp;
    try {
      if (smiles.starts_with(kSyntheticPrefix)) {
        fp = chem::Fingerprint::from_hex(std::string_view(smiles).substr(kSyntheticPrefix.size()));
      } else {
        fp = chem::morgan_fingerprint(chem::parse_smiles(smiles), options.radius, options.nbits);
      }
    } catch (const DataError& e) {
      const std::string message = "row " + std::to_string(row) + ": " + e.what();
      if (!options.permissive) throw DataError(path.string() + ": " + message);
      report.messages.push_back(message);
      ++report.skipped;
      continue;
    }
    if (!records.empty() && fp.nbits() != records.front().features.nbits()) {
      throw DataError(where + ": fingerprint width differs from earlier rows");
    }
    records.push_back({records.size(), smiles, std::move(fp), target});
  }
  if (records.empty()) throw DataError(path.string() + ": dataset is empty");
  report.dataset = Dataset(path.stem().string(), options.direction, std::move(records));
  return report;
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path,
               const std::string& smiles_column, const std::string& target_column) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << smiles_column << ',' << target_column << '\n';
  out << std::setprecision(17);
  for (const Record& r : dataset.records()) out << r.smiles << ',' << r.raw_target << '\n';
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw DataError("quantile of an empty sequence");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Scaled robust_scale(std::span<const double> values) {
  if (values.empty()) throw DataError("robust_scale: empty input");
  for (double v : values) {
    if (!std::isfinite(v)) throw DataError("robust_scale: non-finite input");
  }
  Scaled out;
  out.params.median = quantile(values, 0.5);
  out.params.iqr = quantile(values, 0.75) - quantile(values, 0.25);
  out.params.fallback_scale_used = !(out.params.iqr > 0.0);
  if (out.params.fallback_scale_used) out.params.iqr = 0.0;
  out.values.reserve(values.size());
  for (double v : values) out.values.push_back(out.params.apply(v));
  return out;
}

Split split(std::size_t n, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie strictly between 0 and 1");
  }
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  if (n_test < 1 || n_test >= n) {
    throw ConfigError("test fraction " + std::to_string(test_fraction) + " is degenerate for " +
                      std::to_string(n) + " records");
  }
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  Rng rng = make_rng(seed);
  shuffle(ids, rng);
  Split out;
  out.test.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.pool.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_test), ids.end());
  std::sort(out.test.begin(), out.test.end());
  std::sort(out.pool.begin(), out.pool.end());
  return out;
}

std::vector<Pair> sample_pairs(std::span<const std::size_t> indices, std::size_t multiplier,
                               std::uint64_t seed) {
  const std::size_t n = indices.size();
  if (n < 2) throw DataError("sample_pairs needs at least two indices");
  const std::size_t unique = n * (n - 1) / 2;
  const std::size_t target = multiplier * n;
  std::vector<Pair> pairs;
  if (target >= unique) {
    pairs.reserve(unique);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) pairs.push_back({indices[a], indices[b]});
    }
    return pairs;
  }
  Rng rng = make_rng(seed);
  std::unordered_set<std::uint64_t> taken;
  pairs.reserve(target);
  while (pairs.size() < target) {
    const std::size_t a = uniform_index(rng, n);
    const std::size_t b = uniform_index(rng, n);
    if (a == b) continue;
    const std::uint64_t key = static_cast<std::uint64_t>(std::min(a, b)) * n + std::max(a, b);
    if (!taken.insert(key).second) continue;
    pairs.push_back({indices[a], indices[b]});
  }
  return pairs;
}

Dataset generate_synthetic(const SyntheticParams& p) {
  if (p.n < 10) throw ConfigError("synthetic dataset needs n >= 10");
  if (p.n_anchors < 1 || p.n_anchors > p.n) throw ConfigError("need 1 <= n_anchors <= n");
  if (p.cliff_count > p.n) throw ConfigError("cliff_count cannot exceed n");
  if (p.nbits == 0 || p.expected_popcount == 0 || p.expected_popcount >= p.nbits) {
    throw ConfigError("need 0 < expected_popcount < nbits");
  }
  if (!(p.mutation_rate >= 0.0 && p.mutation_rate <= 1.0)) {
    throw ConfigError("mutation_rate must lie in [0, 1]");
  }

  Rng rng = make_rng(p.seed);
  const double on_prob = static_cast<double>(p.expected_popcount) / static_cast<double>(p.nbits);
  // Off->on rate that keeps the expected popcount stationary under mutation.
  const double gain_prob = p.mutation_rate * on_prob / (1.0 - on_prob);
  const std::size_t n_roots = std::max<std::size_t>(1, p.n / 50);

  std::vector<chem::Fingerprint> fps;
  fps.reserve(p.n);
  for (std::size_t i = 0; i < p.n; ++i) {
    chem::Fingerprint fp(p.nbits);
    if (i < n_roots) {
      for (std::size_t b = 0; b < p.nbits; ++b) {
        if (uniform01(rng) < on_prob) fp.set(b);
      }
    } else {
      const chem::Fingerprint& parent = fps[uniform_index(rng, i)];
      for (std::size_t b = 0; b < p.nbits; ++b) {
        const bool on = parent.test(b);
        const double u = uniform01(rng);
        if (on ? u >= p.mutation_rate : u < gain_prob) fp.set(b);
      }
    }
    fps.push_back(std::move(fp));
  }

  std::vector<std::size_t> order(p.n);
  for (std::size_t i = 0; i < p.n; ++i) order[i] = i;
  shuffle(order, rng);
  std::vector<std::size_t> anchors(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(p.n_anchors));
  std::vector<double> anchor_values(p.n_anchors);
  for (double& v : anchor_values) v = uniform01(rng);
  double anchor_mean = 0.0;
  for (double v : anchor_values) anchor_mean += v;
  anchor_mean /= static_cast<double>(p.n_anchors);

  std::vector<double> targets(p.n);
  for (std::size_t i = 0; i < p.n; ++i) {
    double num = 0.0, den = 0.0;
    for (std::size_t a = 0; a < p.n_anchors; ++a) {
      const double w = chem::tanimoto(fps[i], fps[anchors[a]]);
      num += w * anchor_values[a];
      den += w;
    }
    targets[i] = den > 0.0 ? num / den : anchor_mean;
  }

  shuffle(order, rng);
  for (std::size_t c = 0; c < p.cliff_count; ++c) targets[order[c]] = 1.0 - targets[order[c]];

  std::vector<Record> records;
  records.reserve(p.n);
  for (std::size_t i = 0; i < p.n; ++i) {
    records.push_back({i, std::string(kSyntheticPrefix) + fps[i].to_hex(), fps[i], targets[i]});
  }
  std::string name = p.name;
  if (name.empty()) {
    std::ostringstream os;
    os << "synth_n" << p.n << "_a" << p.n_anchors << "_c" << p.cliff_count << "_s" << p.seed;
    name = os.str();
  }
  return Dataset(std::move(name), Direction::kMaximize, std::move(records));
}

}  // namespace rbo::data
