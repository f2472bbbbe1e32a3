#include "rbo/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "rbo/error.hpp"

namespace rbo::experiment {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  std::size_t lo = 0, hi = s.size();
  while (lo < hi && std::isspace(static_cast<unsigned char>(s[lo]))) ++lo;
  while (hi > lo && std::isspace(static_cast<unsigned char>(s[hi - 1]))) --hi;
  return std::string(s.substr(lo, hi - lo));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + value + "'");
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string key_csv(const ConfigKey& k, bool with_mode = true) {
  std::string s = k.dataset + ',' + k.kind;
  if (with_mode) s += ',' + k.mode;
  return s + ',' + k.acquisition;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

// ---------------------------------------------------------------------------

data::Dataset DatasetSource::load(bool permissive) const {
  data::Dataset ds;
  if (csv) {
    data::CsvOptions opts = csv_options;
    opts.permissive = opts.permissive || permissive;
    ds = data::load_csv(*csv, opts).dataset;
  } else {
    ds = data::generate_synthetic(synthetic);
  }
  if (!name.empty()) ds = data::Dataset(name, ds.direction(), ds.records());
  return ds;
}

void ExperimentConfig::validate() const {
  if (kinds.empty() || modes.empty() || acquisitions.empty()) {
    throw ConfigError("the campaign grid needs at least one kind, mode and acquisition");
  }
  if (n_seeds == 0) throw ConfigError("n_seeds must be at least 1");
  for (auto kind : kinds) {
    for (auto mode : modes) {
      if (kind == surrogate::Kind::kGp && mode == surrogate::Mode::kRanking) {
        throw ConfigError("grid contains gp x ranking, which is not supported");
      }
      for (auto acq : acquisitions) {
        bayesopt::CampaignConfig c = campaign;
        c.surrogate.kind = kind;
        c.surrogate.mode = mode;
        c.acquisition = acq;
        c.validate();
      }
    }
  }
}

json ExperimentConfig::to_json() const {
  json ds;
  if (dataset.csv) {
    ds = {{"csv", dataset.csv->string()},
          {"smiles_column", dataset.csv_options.smiles_column},
          {"target_column", dataset.csv_options.target_column},
          {"direction", data::to_string(dataset.csv_options.direction)}};
  } else {
    const auto& s = dataset.synthetic;
    ds = {{"synthetic_n", s.n},         {"synthetic_anchors", s.n_anchors},
          {"synthetic_cliffs", s.cliff_count}, {"synthetic_seed", s.seed},
          {"synthetic_nbits", s.nbits}, {"synthetic_popcount", s.expected_popcount}};
  }
  if (!dataset.name.empty()) ds["name"] = dataset.name;
  json k = json::array(), m = json::array(), a = json::array();
  for (auto v : kinds) k.push_back(surrogate::to_string(v));
  for (auto v : modes) m.push_back(surrogate::to_string(v));
  for (auto v : acquisitions) a.push_back(bayesopt::to_string(v));
  json c = campaign.to_json();
  c.erase("seed");
  c.erase("acquisition");
  c["surrogate"].erase("kind");
  c["surrogate"].erase("mode");
  return {{"dataset", ds}, {"kinds", k},         {"modes", m},
          {"acquisitions", a}, {"campaign", c},   {"n_seeds", n_seeds},
          {"base_seed", base_seed}};
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  // Neural defaults apply to every kind; kind-specific keys simply go unused.
  auto& sc = cfg.campaign.surrogate;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' given twice");
    auto size = [&] { return parse_number<std::size_t>(key, value); };
    auto real = [&] { return parse_number<double>(key, value); };

    if (key == "csv") {
      std::filesystem::path p = value;
      cfg.dataset.csv = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    } else if (key == "smiles_column") {
      cfg.dataset.csv_options.smiles_column = value;
    } else if (key == "target_column") {
      cfg.dataset.csv_options.target_column = value;
    } else if (key == "direction") {
      cfg.dataset.csv_options.direction = data::direction_from_string(value);
    } else if (key == "permissive") {
      cfg.dataset.csv_options.permissive = parse_bool(key, value);
    } else if (key == "name") {
      cfg.dataset.name = value;
    } else if (key == "synthetic_n") {
      cfg.dataset.synthetic.n = size();
    } else if (key == "synthetic_anchors") {
      cfg.dataset.synthetic.n_anchors = size();
    } else if (key == "synthetic_cliffs") {
      cfg.dataset.synthetic.cliff_count = size();
    } else if (key == "synthetic_seed") {
      cfg.dataset.synthetic.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "synthetic_nbits") {
      cfg.dataset.synthetic.nbits = size();
    } else if (key == "synthetic_popcount") {
      cfg.dataset.synthetic.expected_popcount = size();
    } else if (key == "kinds") {
      cfg.kinds.clear();
      for (const auto& v : split_list(value)) cfg.kinds.push_back(surrogate::kind_from_string(v));
    } else if (key == "modes") {
      cfg.modes.clear();
      for (const auto& v : split_list(value)) cfg.modes.push_back(surrogate::mode_from_string(v));
    } else if (key == "acquisitions") {
      cfg.acquisitions.clear();
      for (const auto& v : split_list(value)) cfg.acquisitions.push_back(bayesopt::acquisition_from_string(v));
    } else if (key == "n_seeds") {
      cfg.n_seeds = size();
    } else if (key == "base_seed") {
      cfg.base_seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "output_dir") {
      std::filesystem::path p = value;
      cfg.output_dir = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    } else if (key == "n_init") {
      cfg.campaign.n_init = size();
    } else if (key == "budget") {
      cfg.campaign.budget = size();
    } else if (key == "batch_size") {
      cfg.campaign.batch_size = size();
    } else if (key == "test_fraction") {
      cfg.campaign.test_fraction = real();
    } else if (key == "top_k") {
      cfg.campaign.top_k = size();
    } else if (key == "beta") {
      cfg.campaign.beta = real();
    } else if (key == "hidden") {
      sc.hidden.clear();
      for (const auto& v : split_list(value)) sc.hidden.push_back(parse_number<std::size_t>(key, v));
    } else if (key == "learning_rate") {
      sc.train.learning_rate = real();
    } else if (key == "max_epochs") {
      sc.train.max_epochs = size();
    } else if (key == "patience") {
      sc.train.patience = size();
    } else if (key == "validation_fraction") {
      sc.train.validation_fraction = real();
    } else if (key == "margin") {
      sc.train.margin = real();
    } else if (key == "train_batch_size") {
      sc.train.batch_size = size();
    } else if (key == "pair_multiplier") {
      sc.train.pair_multiplier = size();
    } else if (key == "resample_pairs_each_epoch") {
      sc.train.resample_pairs_each_epoch = parse_bool(key, value);
    } else if (key == "kl_weight") {
      sc.train.kl_weight = real();
    } else if (key == "mc_samples_train") {
      sc.train.mc_samples_train = size();
    } else if (key == "mc_samples") {
      sc.mc_samples = size();
    } else if (key == "init_sigma") {
      sc.init_sigma = real();
    } else if (key == "gp_learning_rate") {
      sc.gp.learning_rate = real();
    } else if (key == "gp_steps") {
      sc.gp.steps = size();
    } else if (key == "gp_include_noise") {
      sc.gp_include_noise = parse_bool(key, value);
    } else {
      throw ConfigError("unknown config key '" + key + "' on line " + std::to_string(line_no));
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string file_safe(const std::string& name) {
  std::string out = name;
  for (char& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.') c = '-';
  }
  return out.empty() ? "dataset" : out;
}

std::vector<CampaignSpec> expand_grid(const ExperimentConfig& config, const std::string& dataset_name) {
  std::vector<CampaignSpec> specs;
  const std::string ds = file_safe(dataset_name);
  for (auto kind : config.kinds) {
    for (auto mode : config.modes) {
      for (auto acq : config.acquisitions) {
        for (std::size_t i = 0; i < config.n_seeds; ++i) {
          CampaignSpec s{kind, mode, acq, config.base_seed + i, {}};
          s.file = ds + '_' + surrogate::to_string(kind) + '_' + surrogate::to_string(mode) + '_' +
                   bayesopt::to_string(acq) + '_' + std::to_string(s.seed) + ".json";
          specs.push_back(std::move(s));
        }
      }
    }
  }
  std::sort(specs.begin(), specs.end(), [](const auto& a, const auto& b) { return a.file < b.file; });
  return specs;
}

std::size_t Manifest::n_ok() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.status == "ok"; }));
}

json Manifest::to_json() const {
  json traces = json::array(), failures = json::array();
  for (const auto& e : entries) {
    json row = {{"kind", surrogate::to_string(e.spec.kind)},
                {"mode", surrogate::to_string(e.spec.mode)},
                {"acquisition", bayesopt::to_string(e.spec.acquisition)},
                {"seed", e.spec.seed},
                {"status", e.status}};
    if (e.status == "ok") {
      row["file"] = e.spec.file;
      traces.push_back(std::move(row));
    } else {
      row["error"] = e.error;
      failures.push_back(std::move(row));
    }
  }
  return {{"schema_version", kTraceSchemaVersion},
          {"dataset", dataset},
          {"config", config},
          {"n_campaigns", entries.size()},
          {"n_ok", n_ok()},
          {"traces", std::move(traces)},
          {"failures", std::move(failures)}};
}

Manifest run_experiment(const ExperimentConfig& config, const data::Dataset& dataset, std::size_t jobs,
                        const Progress& progress) {
  config.validate();
  const auto specs = expand_grid(config, dataset.name());
  std::vector<bayesopt::CampaignConfig> campaigns;
  for (const auto& s : specs) {
    bayesopt::CampaignConfig c = config.campaign;
    c.surrogate.kind = s.kind;
    c.surrogate.mode = s.mode;
    c.acquisition = s.acquisition;
    c.seed = s.seed;
    c.validate_for(dataset.size());  // every campaign is checked before any runs
    campaigns.push_back(std::move(c));
  }
  std::error_code ec;
  std::filesystem::create_directories(config.output_dir, ec);
  if (ec) throw DataError("cannot create output directory '" + config.output_dir.string() + "': " + ec.message());

  Manifest manifest;
  manifest.dataset = dataset.name();
  manifest.config = config.to_json();
  manifest.entries.resize(specs.size());

  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      ManifestEntry entry{specs[i], "ok", {}};
      try {
        const CampaignTrace trace = bayesopt::run_campaign(dataset, campaigns[i]);
        if (trace.valid()) {
          write_trace(trace, config.output_dir / specs[i].file);
        } else {
          entry.status = "failed";
          entry.error = trace.error;
        }
      } catch (const std::exception& e) {
        entry.status = "failed";
        entry.error = e.what();
      }
      manifest.entries[i] = entry;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(entry, ++done, specs.size());
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(jobs, specs.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  write_file(config.output_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
  return manifest;
}

// ---------------------------------------------------------------------------

ConfigKey key_of(const CampaignTrace& trace) {
  try {
    const auto& c = trace.config;
    return {trace.dataset, c.at("surrogate").at("kind").get<std::string>(),
            c.at("surrogate").at("mode").get<std::string>(), c.at("acquisition").get<std::string>()};
  } catch (const json::exception& e) {
    throw DataError(std::string("trace config lacks kind/mode/acquisition: ") + e.what());
  }
}

std::string verdict(double ranking_mean, double regression_mean, double p, double alpha) {
  if (!(p < alpha) || ranking_mean == regression_mean) return "similar";
  return ranking_mean > regression_mean ? "better" : "worse";
}

std::vector<CampaignTrace> load_traces(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto& p = entry.path();
    if (entry.is_regular_file() && p.extension() == ".json" && p.filename() != "manifest.json") files.push_back(p);
  }
  if (files.empty()) throw DataError("no trace files in '" + dir.string() + "'");
  std::sort(files.begin(), files.end());
  std::vector<CampaignTrace> traces;
  for (const auto& f : files) {
    try {
      traces.push_back(read_trace(f));
    } catch (const DataError& e) {
      throw DataError(f.filename().string() + ": " + e.what());
    }
  }
  return traces;
}

Report build_report(const std::vector<CampaignTrace>& traces) {
  if (traces.empty()) throw DataError("report needs at least one trace");
  struct Group {
    std::vector<double> auc;
    std::size_t failed = 0;
    std::vector<std::vector<double>> curves;
  };
  std::map<ConfigKey, Group> groups;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> tau_frac;
  for (const auto& t : traces) {
    Group& g = groups[key_of(t)];
    if (!t.valid()) {
      ++g.failed;
      continue;
    }
    g.auc.push_back(analytics::bo_auc(t));
    std::vector<double> curve;
    for (const auto& e : t.evaluations) curve.push_back(e.frac_top_k);
    g.curves.push_back(std::move(curve));
    if (!t.rounds.empty() && !t.evaluations.empty()) {
      for (const std::string& scope : {std::string("all"), t.dataset}) {
        tau_frac[scope].first.push_back(t.rounds.back().test_tau);
        tau_frac[scope].second.push_back(t.evaluations.back().frac_top_k);
      }
    }
  }

  Report report;
  for (const auto& [key, g] : groups) {
    report.summary.push_back({key, analytics::summarize_auc(g.auc), g.failed});
    if (g.curves.empty()) continue;
    std::size_t len = g.curves.front().size();
    for (const auto& c : g.curves) len = std::min(len, c.size());
    for (std::size_t e = 0; e < len; ++e) {
      double sum = 0.0;
      for (const auto& c : g.curves) sum += c[e];
      report.curves.push_back({key, e + 1, sum / static_cast<double>(g.curves.size()), g.curves.size()});
    }
  }

  for (const auto& [key, g] : groups) {
    if (key.mode != "ranking") continue;
    ConfigKey other = key;
    other.mode = "regression";
    const auto it = groups.find(other);
    if (it == groups.end() || g.auc.size() < 2 || it->second.auc.size() < 2) continue;
    ComparisonRow row;
    row.key = key;
    row.key.mode.clear();
    row.test = analytics::t_test(g.auc, it->second.auc);
    row.ranking_mean = analytics::summarize_auc(g.auc).mean;
    row.regression_mean = analytics::summarize_auc(it->second.auc).mean;
    row.verdict = verdict(row.ranking_mean, row.regression_mean, row.test.p);
    report.comparison.push_back(std::move(row));
  }

  // "all" first, then datasets alphabetically.
  std::vector<std::string> scopes;
  if (tau_frac.count("all")) scopes.push_back("all");
  for (const auto& [scope, _] : tau_frac) {
    if (scope != "all") scopes.push_back(scope);
  }
  for (const auto& scope : scopes) {
    const auto& [tau, frac] = tau_frac.at(scope);
    CorrelationRow row{scope, tau.size(), std::nullopt};
    try {
      row.correlation = analytics::pearson_r(tau, frac);
    } catch (const DataError&) {
      // too few traces or a constant column
    }
    report.correlation.push_back(std::move(row));
  }
  return report;
}

std::string summary_csv(const Report& report) {
  std::string out = "dataset,kind,mode,acquisition,n_seeds,n_failed,auc_mean,ci95_half_width,ci95_low,ci95_high\n";
  for (const auto& r : report.summary) {
    out += key_csv(r.key) + ',' + std::to_string(r.auc.n_seeds) + ',' + std::to_string(r.n_failed) + ',' +
           fmt(r.auc.mean) + ',' + fmt(r.auc.ci_half_width) + ',' + fmt(r.auc.mean - r.auc.ci_half_width) + ',' +
           fmt(r.auc.mean + r.auc.ci_half_width) + '\n';
  }
  return out;
}

std::string comparison_csv(const Report& report) {
  std::string out = "dataset,kind,acquisition,ranking_mean,regression_mean,t,p_value,verdict\n";
  for (const auto& r : report.comparison) {
    out += key_csv(r.key, false) + ',' + fmt(r.ranking_mean) + ',' + fmt(r.regression_mean) + ',' + fmt(r.test.t) +
           ',' + fmt(r.test.p) + ',' + r.verdict + '\n';
  }
  return out;
}

std::string correlation_csv(const Report& report) {
  std::string out = "scope,n,pearson_r,p_value\n";
  for (const auto& r : report.correlation) {
    out += r.scope + ',' + std::to_string(r.n) + ',';
    out += r.correlation ? fmt(r.correlation->r) + ',' + fmt(r.correlation->p) : std::string(",");
    out += '\n';
  }
  return out;
}

std::string curves_csv(const Report& report) {
  std::string out = "dataset,kind,mode,acquisition,eval_index,mean_frac_top_k,n_traces\n";
  for (const auto& r : report.curves) {
    out += key_csv(r.key) + ',' + std::to_string(r.eval_index) + ',' + fmt(r.mean_fraction) + ',' +
           std::to_string(r.n) + '\n';
  }
  return out;
}

void write_report(const Report& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create '" + dir.string() + "': " + ec.message());
  write_file(dir / "summary.csv", summary_csv(report));
  write_file(dir / "comparison.csv", comparison_csv(report));
  write_file(dir / "correlation.csv", correlation_csv(report));
  write_file(dir / "curves.csv", curves_csv(report));
}

// ---------------------------------------------------------------------------

std::string fingerprint_table(const data::Dataset& dataset) {
  std::string out = "id,fingerprint\n";
  for (const auto& r : dataset.records()) out += std::to_string(r.id) + ',' + r.features.to_hex() + '\n';
  return out;
}

std::string rogi_table(const data::Dataset& dataset) {
  std::vector<chem::Fingerprint> features;
  std::vector<double> targets;
  for (const auto& r : dataset.records()) {
    features.push_back(r.features);
    targets.push_back(r.raw_target);
  }
  const auto report = analytics::rogi(features, targets);
  std::string out = "dataset,n,rogi\n" + dataset.name() + ',' + std::to_string(report.n) + ',' + fmt(report.rogi) +
                    "\n\nthreshold,dispersion\n";
  for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
    out += fmt(report.thresholds[i]) + ',' + fmt(report.dispersion[i]) + '\n';
  }
  return out;
}

}  // namespace rbo::experiment
