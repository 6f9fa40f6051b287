#include "mtsk/cohort.hpp"

#include "mtsk/common.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace mtsk {

std::size_t MTSample::observed_count() const {
  return static_cast<std::size_t>((mask != 0).count());
}

bool MTSample::complete() const { return (mask != 0).all(); }

Cohort::Cohort(std::vector<std::string> attribute_names, int window_length,
               std::vector<MTSample> samples)
    : attribute_names_(std::move(attribute_names)),
      window_length_(window_length),
      samples_(std::move(samples)) {
  if (window_length_ < 0) throw Error("window length must be nonnegative");
  const auto V = static_cast<Eigen::Index>(attribute_names_.size());
  std::unordered_set<std::string> ids;
  for (const auto& s : samples_) {
    if (s.values.rows() != V || s.values.cols() != window_length_)
      throw Error("sample '" + s.id + "' has shape " +
                  std::to_string(s.values.rows()) + "x" +
                  std::to_string(s.values.cols()) + ", cohort expects " +
                  std::to_string(V) + "x" + std::to_string(window_length_));
    if (s.mask.rows() != V || s.mask.cols() != window_length_)
      throw Error("sample '" + s.id + "' mask shape differs from values");
    if ((s.mask > 1).any())
      throw Error("sample '" + s.id + "' mask must be binary");
    if (s.label && *s.label != 0 && *s.label != 1)
      throw Error("sample '" + s.id + "' label must be 0 or 1");
    if (!ids.insert(s.id).second) throw Error("duplicate sample id '" + s.id + "'");
  }
}

double Cohort::missing_fraction() const {
  double cells = 0, missing = 0;
  for (const auto& s : samples_) {
    cells += static_cast<double>(s.mask.size());
    missing += static_cast<double>((s.mask == 0).count());
  }
  return cells == 0 ? 0.0 : missing / cells;
}

bool Cohort::complete() const {
  return std::all_of(samples_.begin(), samples_.end(),
                     [](const MTSample& s) { return s.complete(); });
}

Cohort Cohort::select(std::span<const std::size_t> indices) const {
  std::vector<MTSample> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(samples_.at(i));
  return Cohort(attribute_names_, window_length_, std::move(out));
}

// ---------------------------------------------------------------------------
// CSV

namespace {

constexpr std::string_view kHeader = "patient_id,label,day,attribute,value";

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

struct Row {
  std::string id;
  std::optional<int> label;
  int day;
  std::string attribute;
  double value;
  std::size_t line;
};

Row parse_row(std::string_view line, std::size_t line_no) {
  auto f = split_fields(line);
  if (f.size() != 5)
    throw ParseError(line_no, "expected 5 fields, found " + std::to_string(f.size()));
  for (auto& x : f) x = trim(x);
  Row row;
  row.line = line_no;
  if (f[0].empty()) throw ParseError(line_no, "empty patient_id");
  row.id = std::string(f[0]);

  if (f[1] == "NA" || f[1].empty()) {
    row.label = std::nullopt;
  } else if (f[1] == "0" || f[1] == "1") {
    row.label = f[1] == "1" ? 1 : 0;
  } else {
    throw ParseError(line_no, "label must be 0, 1 or NA, got '" + std::string(f[1]) + "'");
  }

  auto [pd, ecd] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), row.day);
  if (ecd != std::errc{} || pd != f[2].data() + f[2].size())
    throw ParseError(line_no, "day must be an integer, got '" + std::string(f[2]) + "'");

  if (f[3].empty()) throw ParseError(line_no, "empty attribute name");
  row.attribute = std::string(f[3]);

  const char* vb = f[4].data();
  const char* ve = vb + f[4].size();
  if (vb != ve && *vb == '+') ++vb;
  auto [pv, ecv] = std::from_chars(vb, ve, row.value);
  if (ecv != std::errc{} || pv != ve || !std::isfinite(row.value))
    throw ParseError(line_no, "value must be a finite decimal, got '" + std::string(f[4]) + "'");
  return row;
}

}  // namespace

LoadResult read_cohort(std::istream& in, const LoadOptions& options) {
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = trim(line);
    if (view.empty()) continue;
    if (!header_seen) {
      if (view != kHeader)
        throw ParseError(line_no, "expected header '" + std::string(kHeader) + "'");
      header_seen = true;
      continue;
    }
    rows.push_back(parse_row(view, line_no));
  }

  std::vector<std::string> names;
  std::unordered_map<std::string, int> attr_index;
  if (options.attribute_names) {
    names = *options.attribute_names;
    for (std::size_t i = 0; i < names.size(); ++i) attr_index[names[i]] = static_cast<int>(i);
  }
  int max_day = 0;
  for (const auto& r : rows) {
    if (r.day < 1) throw ParseError(r.line, "day must be >= 1");
    max_day = std::max(max_day, r.day);
    if (!attr_index.contains(r.attribute)) {
      if (options.attribute_names)
        throw ParseError(r.line, "unknown attribute '" + r.attribute + "'");
      attr_index[r.attribute] = static_cast<int>(names.size());
      names.push_back(r.attribute);
    }
  }
  const int T = options.window_length.value_or(max_day);
  const auto V = static_cast<Eigen::Index>(names.size());

  std::vector<MTSample> samples;
  std::unordered_map<std::string, std::size_t> sample_index;
  for (const auto& r : rows) {
    if (r.day > T)
      throw ParseError(r.line, "day " + std::to_string(r.day) + " outside window [1, " +
                                   std::to_string(T) + "]");
    auto [it, inserted] = sample_index.try_emplace(r.id, samples.size());
    if (inserted) {
      MTSample s;
      s.id = r.id;
      s.values = Matrix::Constant(V, T, std::numeric_limits<double>::quiet_NaN());
      s.mask = Mask::Zero(V, T);
      s.label = r.label;
      samples.push_back(std::move(s));
    }
    auto& s = samples[it->second];
    if (s.label != r.label)
      throw ParseError(r.line, "inconsistent label for patient '" + r.id + "'");
    const int v = attr_index.at(r.attribute);
    const int t = r.day - 1;
    if (s.mask(v, t))
      throw ParseError(r.line, "duplicate observation (" + r.id + ", day " +
                                   std::to_string(r.day) + ", " + r.attribute + ")");
    s.mask(v, t) = 1;
    s.values(v, t) = r.value;
  }

  LoadResult result;
  std::vector<MTSample> kept;
  kept.reserve(samples.size());
  for (auto& s : samples) {
    if (s.observed_count() < kMinObservedCells) {
      ++result.excluded;
      continue;
    }
    kept.push_back(std::move(s));
  }
  if (result.excluded > 0)
    spdlog::warn("excluded {} patient(s) with fewer than {} observations", result.excluded,
                 kMinObservedCells);
  result.cohort = Cohort(std::move(names), T, std::move(kept));
  return result;
}

LoadResult load_cohort(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open cohort file " + path.string());
  return read_cohort(in, options);
}

void write_cohort(const Cohort& cohort, std::ostream& out) {
  out << kHeader << '\n';
  const auto& names = cohort.attribute_names();
  for (const auto& s : cohort.samples()) {
    const std::string label = s.label ? std::to_string(*s.label) : "NA";
    for (Eigen::Index t = 0; t < s.length(); ++t)
      for (Eigen::Index v = 0; v < s.attributes(); ++v)
        if (s.observed(v, t))
          out << s.id << ',' << label << ',' << (t + 1) << ',' << names[v] << ','
              << format_double(s.values(v, t)) << '\n';
  }
}

void save_cohort(const Cohort& cohort, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write cohort file " + path.string());
  write_cohort(cohort, out);
  if (!out) throw Error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Synthetic generator

namespace {

// Postoperative blood-test panel: responders first so the default signal
// subset is clinically plausible.
const std::array<AttributeProfile, 11> kPanel{{
    {"CRP", 40.0, 20.0, +1.0},
    {"leukocytes", 9.0, 3.0, +1.0},
    {"albumin", 32.0, 4.0, -1.0},
    {"hemoglobin", 11.0, 1.5, -1.0},
    {"glucose", 7.0, 1.5, +1.0},
    {"thrombocytes", 280.0, 80.0, +1.0},
    {"carbamide", 6.0, 2.0, +1.0},
    {"creatinine", 80.0, 20.0, +1.0},
    {"sodium", 139.0, 3.0, -1.0},
    {"potassium", 4.0, 0.4, -1.0},
    {"amylase", 60.0, 25.0, +1.0},
}};

constexpr double kArCoefficient = 0.5;
constexpr int kRampDays = 3;

int signal_count(const SyntheticSpec& spec) {
  return spec.signal_attributes.value_or((spec.attributes + 1) / 2);
}

double ramp(int day, int onset) {
  return std::clamp(static_cast<double>(day - onset + 1) / kRampDays, 0.0, 1.0);
}

int max_onset(int days) { return std::max(3, days / 2); }

}  // namespace

AttributeProfile synthetic_attribute(int v) {
  if (v < 0) throw Error("attribute index must be nonnegative");
  if (v < static_cast<int>(kPanel.size())) return kPanel[v];
  const auto& base = kPanel[v % kPanel.size()];
  char name[32];
  std::snprintf(name, sizeof(name), "attr%02d", v + 1);
  return {name, base.mean, base.sd, base.direction};
}

double synthetic_case_mean(const SyntheticSpec& spec, int v, int day, int onset) {
  const auto p = synthetic_attribute(v);
  if (v >= signal_count(spec)) return p.mean;
  return p.mean + spec.effect_size * p.sd * p.direction * ramp(day, onset);
}

Cohort generate_synthetic_cohort(const SyntheticSpec& spec) {
  if (spec.n_cases < 1 || spec.n_controls < 1 || spec.attributes < 1 || spec.days < 1)
    throw Error("synthetic cohort counts must be positive");
  if (!(spec.effect_size >= 0)) throw Error("effect_size must be >= 0");
  const int n = spec.n_cases + spec.n_controls;
  const int V = spec.attributes;
  const int T = spec.days;
  const int n_signal = std::clamp(signal_count(spec), 0, V);

  std::vector<int> labels(n, 0);
  std::fill_n(labels.begin(), spec.n_cases, 1);
  Rng label_rng(derive_seed(spec.seed, {0x1abe1}));
  std::shuffle(labels.begin(), labels.end(), label_rng);

  std::vector<AttributeProfile> profiles;
  for (int v = 0; v < V; ++v) profiles.push_back(synthetic_attribute(v));

  const int width = n >= 100000 ? 6 : 5;
  std::vector<MTSample> samples(n);
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(i) + 1}));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> onset_dist(3, max_onset(T));
    const int onset = onset_dist(rng);
    const bool is_case = labels[i] == 1;

    MTSample& s = samples[i];
    char id[32];
    std::snprintf(id, sizeof(id), "p%0*d", width, i + 1);
    s.id = id;
    s.label = labels[i];
    s.values.resize(V, T);
    s.mask = Mask::Ones(V, T);
    const double innovation = std::sqrt(1.0 - kArCoefficient * kArCoefficient);
    for (int v = 0; v < V; ++v) {
      const auto& p = profiles[v];
      double e = normal(rng);
      for (int t = 0; t < T; ++t) {
        if (t > 0) e = kArCoefficient * e + innovation * normal(rng);
        double x = p.mean + p.sd * e;
        if (is_case && v < n_signal)
          x += spec.effect_size * p.sd * p.direction * ramp(t + 1, onset);
        s.values(v, t) = x;
      }
    }
  }

  std::vector<std::string> names;
  for (const auto& p : profiles) names.push_back(p.name);
  return Cohort(std::move(names), T, std::move(samples));
}

// ---------------------------------------------------------------------------
// Missingness

Mechanism parse_mechanism(const std::string& text) {
  std::string t;
  for (char c : text) t += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (t == "mcar") return Mechanism::MCAR;
  if (t == "mar") return Mechanism::MAR;
  if (t == "mnar") return Mechanism::MNAR;
  throw Error("unknown missingness mechanism '" + text + "' (expected mcar, mar or mnar)");
}

std::string to_string(Mechanism mechanism) {
  switch (mechanism) {
    case Mechanism::MCAR: return "mcar";
    case Mechanism::MAR: return "mar";
    case Mechanism::MNAR: return "mnar";
  }
  return "?";
}

namespace {

constexpr double kMissingnessSlope = 1.5;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Intercept such that mean_i sigmoid(a + scores_i) == rate.
double calibrate_intercept(const std::vector<double>& scores, double rate) {
  auto mean_rate = [&](double a) {
    double acc = 0;
    for (double s : scores) acc += sigmoid(a + s);
    return acc / static_cast<double>(scores.size());
  };
  double lo = -60.0, hi = 60.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    double mid = 0.5 * (lo + hi);
    (mean_rate(mid) < rate ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

Cohort apply_missingness(const Cohort& cohort, const MissingnessSpec& spec) {
  if (!(spec.rate >= 0.0 && spec.rate <= 1.0))
    throw Error("missingness rate must lie in [0, 1]");
  if (spec.rate >= 1.0) throw Error("missingness rate 1 would leave an empty cohort");
  if (!cohort.complete()) throw Error("apply_missingness expects a fully observed cohort");
  if (spec.rate == 0.0 || cohort.empty()) return cohort;

  const int V = cohort.attributes();
  const int T = cohort.window_length();

  // Per-attribute z-score statistics over the whole cohort.
  Vector mean = Vector::Zero(V), sd = Vector::Ones(V);
  for (int v = 0; v < V; ++v) {
    double s = 0, s2 = 0, n = 0;
    for (const auto& x : cohort.samples())
      for (int t = 0; t < T; ++t) {
        s += x.values(v, t);
        s2 += x.values(v, t) * x.values(v, t);
        n += 1;
      }
    mean(v) = s / n;
    double var = s2 / n - mean(v) * mean(v);
    sd(v) = var > 1e-300 ? std::sqrt(var) : 1.0;
  }

  auto score = [&](const MTSample& x, int v, int t) -> double {
    switch (spec.mechanism) {
      case Mechanism::MCAR: return 0.0;
      case Mechanism::MAR: {
        if (V < 2) return 0.0;
        double acc = 0;
        for (int u = 0; u < V; ++u)
          if (u != v) acc += (x.values(u, t) - mean(u)) / sd(u);
        return -kMissingnessSlope * acc / (V - 1);
      }
      case Mechanism::MNAR: return -kMissingnessSlope * (x.values(v, t) - mean(v)) / sd(v);
    }
    return 0.0;
  };

  std::vector<double> scores;
  scores.reserve(cohort.size() * V * T);
  for (const auto& x : cohort.samples())
    for (int t = 0; t < T; ++t)
      for (int v = 0; v < V; ++v) scores.push_back(score(x, v, t));
  const double intercept = spec.mechanism == Mechanism::MCAR
                               ? std::log(spec.rate / (1.0 - spec.rate))
                               : calibrate_intercept(scores, spec.rate);

  std::vector<MTSample> kept;
  std::size_t dropped = 0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    MTSample x = cohort[i];
    Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(i), 0x3a5c}));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int t = 0; t < T; ++t)
      for (int v = 0; v < V; ++v)
        if (unif(rng) < sigmoid(intercept + scores[k++])) x.mask(v, t) = 0;
    if (x.observed_count() < kMinObservedCells) {
      ++dropped;
      continue;
    }
    kept.push_back(std::move(x));
  }
  if (dropped > 0)
    spdlog::warn("missingness left {} sample(s) with fewer than {} observations; dropped",
                 dropped, kMinObservedCells);
  return Cohort(cohort.attribute_names(), T, std::move(kept));
}

// ---------------------------------------------------------------------------
// Splits and windows

std::pair<Cohort, Cohort> train_test_split(const Cohort& cohort, double train_fraction,
                                           std::uint64_t seed, bool stratify) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error("train_fraction must lie in (0, 1)");
  Rng rng(derive_seed(seed, {0x5b117}));
  std::vector<std::size_t> train_idx, test_idx;

  auto split_group = [&](std::vector<std::size_t> group) {
    std::shuffle(group.begin(), group.end(), rng);
    auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(group.size())));
    train_idx.insert(train_idx.end(), group.begin(), group.begin() + n_train);
    test_idx.insert(test_idx.end(), group.begin() + n_train, group.end());
  };

  if (stratify) {
    std::array<std::vector<std::size_t>, 3> groups;  // controls, cases, unlabeled
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      const auto& l = cohort[i].label;
      groups[l ? *l : 2].push_back(i);
    }
    for (auto& g : groups) split_group(std::move(g));
  } else {
    std::vector<std::size_t> all(cohort.size());
    std::iota(all.begin(), all.end(), 0);
    split_group(std::move(all));
  }
  if (train_idx.empty() || test_idx.empty())
    throw Error("train/test split of " + std::to_string(cohort.size()) +
                " samples leaves an empty side");
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {cohort.select(train_idx), cohort.select(test_idx)};
}

Cohort truncate_window(const Cohort& cohort, int days) {
  if (days < 1 || days > cohort.window_length())
    throw Error("window of " + std::to_string(days) + " days outside [1, " +
                std::to_string(cohort.window_length()) + "]");
  if (days == cohort.window_length()) return cohort;
  std::vector<MTSample> kept;
  for (const auto& s : cohort.samples()) {
    MTSample x{s.id, s.values.leftCols(days), s.mask.leftCols(days), s.label};
    if (x.observed_count() >= kMinObservedCells) kept.push_back(std::move(x));
  }
  return Cohort(cohort.attribute_names(), days, std::move(kept));
}

}  // namespace mtsk
