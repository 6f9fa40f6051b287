#include "mtsk/run_config.hpp"

#include "mtsk/common.hpp"

#include <json.hpp>

#include <fstream>
#include <functional>
#include <map>
#include <set>

namespace mtsk {

namespace {

using nlohmann::json;

// Collects every problem in a config before failing.
class Reader {
 public:
  explicit Reader(std::vector<std::string>& problems) : problems_(problems) {}

  void require_object(const json& j, const std::string& where) {
    if (!j.is_object()) problems_.push_back(where + ": expected an object");
  }

  void reject_unknown(const json& j, const std::string& where,
                      const std::set<std::string>& known) {
    if (!j.is_object()) return;
    for (const auto& [key, _] : j.items())
      if (!known.count(key)) problems_.push_back(where + ": unknown key '" + key + "'");
  }

  template <class T>
  std::optional<T> get(const json& j, const std::string& key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) return std::nullopt;
    const json& v = j.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("expected true/false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("expected a string");
      } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned()) throw std::invalid_argument("expected a nonnegative integer");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw std::invalid_argument("expected a number");
      }
      return v.get<T>();
    } catch (const std::exception& e) {
      problems_.push_back(where + "." + key + ": " + e.what());
      return std::nullopt;
    }
  }

  void check(bool ok, const std::string& message) {
    if (!ok) problems_.push_back(message);
  }

  std::vector<std::string>& problems() { return problems_; }

 private:
  std::vector<std::string>& problems_;
};

void parse_synthetic(const json& j, Reader& r, RunConfig& cfg) {
  const std::string w = "synthetic";
  r.require_object(j, w);
  r.reject_unknown(j, w, {"cases", "controls", "attributes", "days", "effect", "missing", "rate",
                          "seed", "signal_attributes"});
  SyntheticSource src;
  auto& s = src.cohort;
  if (auto v = r.get<int>(j, "cases", w)) s.n_cases = *v;
  if (auto v = r.get<int>(j, "controls", w)) s.n_controls = *v;
  if (auto v = r.get<int>(j, "attributes", w)) s.attributes = *v;
  if (auto v = r.get<int>(j, "days", w)) s.days = *v;
  if (auto v = r.get<double>(j, "effect", w)) s.effect_size = *v;
  if (auto v = r.get<std::uint64_t>(j, "seed", w)) s.seed = *v;
  if (auto v = r.get<int>(j, "signal_attributes", w)) s.signal_attributes = *v;
  r.check(s.n_cases >= 0 && s.n_controls >= 0 && s.n_cases + s.n_controls >= 2,
          "synthetic: need at least two samples");
  r.check(s.attributes >= 1, "synthetic.attributes must be >= 1");
  r.check(s.days >= 1, "synthetic.days must be >= 1");

  auto mech = r.get<std::string>(j, "missing", w);
  auto rate = r.get<double>(j, "rate", w);
  if (mech || rate) {
    MissingnessSpec m;
    if (mech) {
      try {
        m.mechanism = parse_mechanism(*mech);
      } catch (const std::exception& e) {
        r.check(false, std::string("synthetic.missing: ") + e.what());
      }
    }
    m.rate = rate.value_or(0.0);
    r.check(m.rate >= 0.0 && m.rate < 1.0, "synthetic.rate must lie in [0, 1)");
    m.seed = missingness_seed(s.seed);
    if (m.rate > 0.0) src.missingness = m;
  }
  cfg.synthetic = src;
}

void parse_tck(const json& j, Reader& r, TckOptions& opt) {
  const std::string w = "tck";
  r.require_object(j, w);
  r.reject_unknown(j, w, {"Q", "C", "max_iter", "tol"});
  if (auto v = r.get<int>(j, "Q", w)) opt.Q = *v;
  if (auto v = r.get<int>(j, "C", w)) opt.C = *v;
  if (auto v = r.get<int>(j, "max_iter", w)) opt.fit.max_iter = *v;
  if (auto v = r.get<double>(j, "tol", w)) opt.fit.tol = *v;
  r.check(opt.Q >= 1, "tck.Q must be >= 1");
  r.check(!opt.C || *opt.C >= 2, "tck.C must be >= 2");
  r.check(opt.fit.max_iter >= 1, "tck.max_iter must be >= 1");
  r.check(opt.fit.tol > 0, "tck.tol must be > 0");
}

void parse_lps(const json& j, Reader& r, LpsOptions& opt) {
  const std::string w = "lps";
  r.require_object(j, w);
  r.reject_unknown(j, w, {"trees", "depth"});
  if (auto v = r.get<int>(j, "trees", w)) opt.trees = *v;
  if (auto v = r.get<int>(j, "depth", w)) opt.max_depth = *v;
  r.check(opt.trees >= 1, "lps.trees must be >= 1");
  r.check(opt.max_depth >= 1, "lps.depth must be >= 1");
}

}  // namespace

std::uint64_t missingness_seed(std::uint64_t cohort_seed) {
  return derive_seed(cohort_seed, {0x6d697373});
}

RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(std::string("run config is not valid JSON: ") + e.what());
  }

  std::vector<std::string> problems;
  Reader r(problems);
  const std::string w = "config";
  r.require_object(doc, w);
  r.reject_unknown(doc, w,
                   {"input", "synthetic", "output_dir", "methods", "windows", "runs", "seed",
                    "train_fraction", "stratify", "embedding_dim", "clusters", "knn",
                    "kmeans_restarts", "supervised_baseline", "manual_features",
                    "manual_imputation", "paper_literal_f1", "embedding_dumps", "tck", "lps"});

  RunConfig cfg;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };

  if (auto v = r.get<std::string>(doc, "input", w)) cfg.input = resolve(*v);
  if (doc.is_object() && doc.contains("synthetic")) parse_synthetic(doc["synthetic"], r, cfg);
  r.check(cfg.input.has_value() != cfg.synthetic.has_value(),
          "config: set exactly one of 'input' or 'synthetic'");
  if (auto v = r.get<std::string>(doc, "output_dir", w)) cfg.output_dir = resolve(*v);

  auto& e = cfg.experiment;
  if (doc.is_object() && doc.contains("methods")) {
    const json& m = doc["methods"];
    if (m.is_string() && m.get<std::string>() == "paper") {
      e.methods = paper_method_grid();
    } else if (m.is_array()) {
      for (const auto& item : m) {
        if (!item.is_string()) {
          problems.push_back("config.methods: entries must be strings");
          continue;
        }
        try {
          e.methods.push_back(parse_method(item.get<std::string>()));
        } catch (const std::exception& ex) {
          problems.push_back(std::string("config.methods: ") + ex.what());
        }
      }
    } else {
      problems.push_back("config.methods: expected a list of method names or \"paper\"");
    }
  } else {
    e.methods = paper_method_grid();
  }

  if (doc.is_object() && doc.contains("windows")) {
    const json& ws = doc["windows"];
    if (!ws.is_array() || ws.empty()) {
      problems.push_back("config.windows: expected a nonempty list of integers");
    } else {
      for (const auto& item : ws) {
        if (!item.is_number_integer()) {
          problems.push_back("config.windows: entries must be integers");
          continue;
        }
        e.windows.push_back(item.get<int>());
      }
    }
  }

  if (auto v = r.get<int>(doc, "runs", w)) e.runs = *v;
  if (auto v = r.get<std::uint64_t>(doc, "seed", w)) e.seed = *v;
  if (auto v = r.get<double>(doc, "train_fraction", w)) e.train_fraction = *v;
  if (auto v = r.get<bool>(doc, "stratify", w)) e.stratify = *v;
  if (auto v = r.get<int>(doc, "embedding_dim", w)) e.pipeline.embedding_dim = *v;
  if (auto v = r.get<int>(doc, "clusters", w)) e.pipeline.clusters = *v;
  if (auto v = r.get<int>(doc, "knn", w)) e.pipeline.knn = *v;
  if (auto v = r.get<int>(doc, "kmeans_restarts", w)) e.pipeline.kmeans_restarts = *v;
  if (auto v = r.get<bool>(doc, "supervised_baseline", w)) e.pipeline.supervised_baseline = *v;
  if (auto v = r.get<bool>(doc, "manual_features", w)) e.manual_features = *v;
  if (auto v = r.get<std::string>(doc, "manual_imputation", w)) {
    try {
      e.manual_imputation = parse_imputation(*v);
    } catch (const std::exception& ex) {
      problems.push_back(std::string("config.manual_imputation: ") + ex.what());
    }
  }
  if (auto v = r.get<bool>(doc, "paper_literal_f1", w)) e.paper_literal_f1 = *v;
  if (auto v = r.get<bool>(doc, "embedding_dumps", w)) e.embedding_dumps = *v;
  if (doc.is_object() && doc.contains("tck")) parse_tck(doc["tck"], r, e.pipeline.tck);
  if (doc.is_object() && doc.contains("lps")) parse_lps(doc["lps"], r, e.pipeline.lps);

  r.check(e.runs >= 1, "config.runs must be >= 1");
  r.check(e.train_fraction > 0 && e.train_fraction < 1, "config.train_fraction must lie in (0, 1)");
  r.check(e.pipeline.embedding_dim >= 1, "config.embedding_dim must be >= 1");
  r.check(e.pipeline.clusters == 2, "config.clusters must be 2");
  r.check(e.pipeline.knn >= 1, "config.knn must be >= 1");
  r.check(e.pipeline.kmeans_restarts >= 1, "config.kmeans_restarts must be >= 1");
  for (int win : e.windows) r.check(win >= 1, "config.windows: entries must be >= 1");

  if (!problems.empty()) {
    std::string msg = "invalid run config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw Error(msg);
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open run config " + path.string());
  return parse_run_config(in, path.parent_path());
}

Cohort materialize_cohort(const RunConfig& config) {
  if (config.input) {
    if (!std::filesystem::exists(*config.input))
      throw Error("input file not found: " + config.input->string());
    return load_cohort(*config.input).cohort;
  }
  if (!config.synthetic) throw Error("run config has no cohort source");
  Cohort c = generate_synthetic_cohort(config.synthetic->cohort);
  if (config.synthetic->missingness) c = apply_missingness(c, *config.synthetic->missingness);
  return c;
}

}  // namespace mtsk
