// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include "oracles.hpp"
#include "support.hpp"

#include <cli.hpp>
#include <mtsk/baseline_kernels.hpp>
#include <mtsk/cluster.hpp>
#include <mtsk/common.hpp>
#include <mtsk/experiment.hpp>
#include <mtsk/impute.hpp>
#include <mtsk/kernel_matrix.hpp>
#include <mtsk/lps.hpp>
#include <mtsk/metrics.hpp>
#include <mtsk/run_config.hpp>
#include <mtsk/tck.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

using namespace mtsk;
using namespace mtsk::testing;
namespace fs = std::filesystem;

namespace {

// Tolerances and thresholds.
constexpr double kSymmetryTol = 1e-12;
constexpr double kPsdRelTol = 1e-8;
constexpr double kKernelSeconds = 120;
constexpr double kGakTol = 1e-9;
constexpr double kMonotoneTol = 1e-10;
constexpr double kClosedFormTol = 1e-8;
constexpr double kKpcaTol = 1e-8;
constexpr double kMinF1 = 0.80;
constexpr double kDetectionSeconds = 600;
constexpr double kMinSpearman = 0.7;
constexpr double kRobustnessGap = 0.10;
constexpr double kParityGap = 0.05;

// Cohort used by the detection, trend, robustness and parity checks.
constexpr std::uint64_t kCohortSeed = 1;
constexpr std::uint64_t kSplitSeed = 1;
constexpr int kRuns = 5;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail
            << std::endl;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

SyntheticSpec detection_spec() {
  SyntheticSpec s;
  s.n_cases = 50;
  s.n_controls = 150;
  s.attributes = 5;
  s.days = 20;
  s.effect_size = 1.5;
  s.seed = kCohortSeed;
  return s;
}

Cohort detection_cohort(Mechanism mech, double rate) {
  return apply_missingness(generate_synthetic_cohort(detection_spec()),
                           {mech, rate, missingness_seed(kCohortSeed)});
}

// Mean test F1 per (method label, window).
std::map<std::pair<std::string, int>, double> test_means(const ExperimentReport& r) {
  std::map<std::pair<std::string, int>, double> out;
  for (const auto& a : r.aggregates) {
    if (a.split != "test") continue;
    const std::string label = a.imputation == "none" ? a.method : a.method + ":" + a.imputation;
    out[{label, a.window}] = a.mean_f1;
  }
  return out;
}

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = (i + j) / 2.0 + 1;
    i = j + 1;
  }
  return rank;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += ra[i] / n, mb += rb[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// --- criteria ---------------------------------------------------------------

Outcome kernel_validity() {
  const auto t0 = Clock::now();
  const Cohort c = synthetic(25, 75, 5, 20, 0.3, 11);
  std::vector<std::pair<std::string, Matrix>> grams;
  const auto zero = fit_imputer(c, ImputeMethod::Zero, false);
  const Cohort filled = impute(zero, c);
  grams.emplace_back("linear+zero", linear_gram(filled, nullptr).gram);
  grams.emplace_back("gak+zero", gak_gram(filled, nullptr, fit_gak_params(filled)).gram);
  TckOptions tck;
  tck.seed = 1;
  grams.emplace_back("tck", tck_train(c, tck).kernel.gram);
  LpsOptions lps;
  lps.seed = 1;
  grams.emplace_back("lps", lps_gram(lps_train(c, lps), c, nullptr).gram);
  const double elapsed = seconds_since(t0);

  bool ok = elapsed < kKernelSeconds;
  std::string detail;
  for (const auto& [name, K] : grams) {
    const double asym = (K - K.transpose()).cwiseAbs().maxCoeff();
    const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(K, Eigen::EigenvaluesOnly)
                               .eigenvalues()
                               .minCoeff();
    const bool good = asym <= kSymmetryTol && min_eig >= -kPsdRelTol * K.trace();
    ok = ok && good;
    detail += name + " asym=" + fmt(asym, 2) + " min_eig=" + fmt(min_eig, 3) + "; ";
  }
  return {ok, detail + "time=" + fmt(elapsed, 3) + "s"};
}

Outcome gak_oracle() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> len(1, 4), dim(1, 2), band(1, 4);
  std::uniform_real_distribution<double> sig(0.2, 4.0);
  double worst = 0;
  for (int pair = 0; pair < 50; ++pair) {
    const int V = dim(rng), T = len(rng);
    const Matrix x = random_matrix(V, T, rng), y = random_matrix(V, T, rng);
    const GakParams p{sig(rng), band(rng)};
    worst = std::max(worst, std::abs(log_gak(x, y, p) - gak_by_enumeration(x, y, p.sigma,
                                                                           p.triangular)));
  }
  return {worst <= kGakTol, "50 pairs, max abs error " + fmt(worst, 3)};
}

Outcome em_correctness() {
  // Every member of 20 random ensembles is fitted with the ascent check armed,
  // so a drop beyond tolerance throws.
  std::size_t members = 0;
  for (int fit = 0; fit < 20; ++fit) {
    const Cohort c = synthetic(8 + fit % 5, 20, 3 + fit % 3, 12, 0.1 * (fit % 5), 100 + fit);
    TckOptions opt;
    opt.Q = 3;
    opt.seed = fit;
    opt.fit.verify_monotone = true;
    opt.fit.tol = 1e-9;
    members += tck_train(c, opt).model.members.size();
  }

  // Independent trace check on raw fits with matching shapes.
  std::mt19937_64 rng(3);
  std::bernoulli_distribution drop(0.25);
  int traces = 0;
  double worst_drop = 0;
  for (int fit = 0; fit < 20; ++fit) {
    GmmBatch b;
    for (int n = 0; n < 30; ++n) {
      b.values.push_back(random_matrix(3, 8, rng));
      Mask m(3, 8);
      for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = !drop(rng);
      b.masks.push_back(m);
    }
    GmmPrior prior;
    prior.strength = 1.0 + fit % 3;
    prior.smoothing_width = 1 + fit % 3;
    prior.a0 = 0.4;
    prior.b0 = Vector::Constant(3, 0.05);
    prior.variance_floor = Vector::Constant(3, 1e-4);
    FitOptions fo;
    fo.verify_monotone = false;
    fo.tol = 1e-12;
    const GmmFit g = fit_diaggmm(b, 2 + fit % 4, prior, Vector::Zero(3), Vector::Ones(3), fit, fo);
    for (std::size_t i = 1; i < g.objective.size(); ++i) {
      if (std::find(g.reseeded.begin(), g.reseeded.end(), static_cast<int>(i) - 1) !=
          g.reseeded.end())
        continue;
      const double prev = g.objective[i - 1];
      worst_drop = std::max(worst_drop, (prev - g.objective[i]) / std::max(1.0, std::abs(prev)));
    }
    ++traces;
  }

  // G = 1 against the closed form.
  double worst_closed = 0;
  for (int trial = 0; trial < 10; ++trial) {
    GmmBatch b;
    for (int n = 0; n < 15; ++n) {
      b.values.push_back(random_matrix(3, 8, rng));
      Mask m(3, 8);
      for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = trial == 0 || !drop(rng);
      b.masks.push_back(m);
    }
    GmmPrior prior;
    prior.strength = 0.5 + trial;
    prior.smoothing_width = 1 + trial % 3;
    prior.a0 = 0.3;
    prior.b0 = Vector::Constant(3, 0.05);
    prior.variance_floor = Vector::Constant(3, 1e-4);
    const GmmFit g = fit_diaggmm(b, 1, prior, Vector::Zero(3), Vector::Ones(3), trial);
    const Matrix m = smoothed_mean_oracle(b, prior.smoothing_width, Vector::Zero(3));
    const auto oracle = single_component_map(b, prior, m);
    worst_closed = std::max({worst_closed, (g.params.means[0] - oracle.mean).cwiseAbs().maxCoeff(),
                             (g.params.variances.row(0).transpose() - oracle.variance)
                                 .cwiseAbs()
                                 .maxCoeff()});
  }
  const bool ok = worst_drop <= kMonotoneTol && worst_closed <= kClosedFormTol;
  return {ok, std::to_string(members) + " ensemble members ascended; " + std::to_string(traces) +
                  " traces, worst relative drop " + fmt(worst_drop, 3) +
                  "; G=1 closed-form error " + fmt(worst_closed, 3)};
}

Outcome kpca_oracle_check() {
  std::mt19937_64 rng(11);
  double worst = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix a = random_matrix(10, 10, rng);
    const Matrix K = a * a.transpose();
    for (int d : {2, 5, 9}) {
      const Matrix emb = kpca_fit(K, d).second;
      const Matrix ref = kpca_oracle(K, d);
      for (Eigen::Index j = 0; j < d; ++j)
        worst = std::max(worst, std::min((emb.col(j) - ref.col(j)).cwiseAbs().maxCoeff(),
                                         (emb.col(j) + ref.col(j)).cwiseAbs().maxCoeff()));
    }
  }
  return {worst <= kKpcaTol, "max abs error up to sign " + fmt(worst, 3)};
}

ExperimentReport detection_report;
double detection_seconds = 0;

const ExperimentReport& detection() {
  static bool done = false;
  if (!done) {
    ExperimentConfig cfg;
    cfg.methods = {parse_method("tck"), parse_method("lps")};
    cfg.windows = {7, 10, 14, 20};
    cfg.runs = kRuns;
    cfg.seed = kSplitSeed;
    cfg.pipeline.supervised_baseline = true;
    const auto t0 = Clock::now();
    detection_report = run_experiment(detection_cohort(Mechanism::MAR, 0.3), cfg,
                                      default_workers());
    detection_seconds = seconds_since(t0);
    done = true;
  }
  if (!detection_report.errors.empty())
    throw Error("detection experiment had failing cells: " +
                detection_report.errors.front().message);
  return detection_report;
}

Outcome end_to_end() {
  const auto means = test_means(detection());
  const double tck = means.at({"tck", 20}), lps = means.at({"lps", 20});
  const bool ok = tck >= kMinF1 && lps >= kMinF1 && detection_seconds < kDetectionSeconds;
  return {ok, "window 20 test F1 tck=" + fmt(tck) + " lps=" + fmt(lps) + " (" +
                  std::to_string(kRuns) + " runs, " + fmt(detection_seconds, 3) +
                  "s for the window sweep incl. supervised rows)"};
}

Outcome window_trend() {
  const auto means = test_means(detection());
  const std::vector<double> windows{7, 10, 14, 20};
  bool ok = true;
  std::string detail;
  for (const char* m : {"tck", "lps"}) {
    std::vector<double> f;
    for (double w : windows) f.push_back(means.at({m, static_cast<int>(w)}));
    const double rho = spearman(windows, f);
    const bool monotone = std::is_sorted(f.begin(), f.end());
    ok = ok && rho >= kMinSpearman;
    detail += std::string(m) + " F1=";
    for (double v : f) detail += fmt(v, 3) + "/";
    detail.back() = ' ';
    detail += "rho=" + fmt(rho, 3) + (monotone ? " monotone; " : " not strictly monotone; ");
  }
  return {ok, detail};
}

Outcome robustness() {
  ExperimentConfig cfg;
  cfg.methods = {parse_method("tck"), parse_method("linear:mean")};
  cfg.windows = {20};
  cfg.runs = kRuns;
  cfg.seed = kSplitSeed;
  std::map<double, std::map<std::pair<std::string, int>, double>> by_rate;
  for (double rate : {0.2, 0.5}) {
    const auto r = run_experiment(detection_cohort(Mechanism::MCAR, rate), cfg, default_workers());
    if (!r.errors.empty()) throw Error(r.errors.front().message);
    by_rate[rate] = test_means(r);
  }
  const double t20 = by_rate[0.2].at({"tck", 20}), t50 = by_rate[0.5].at({"tck", 20});
  const double l20 = by_rate[0.2].at({"linear:mean", 20});
  const double l50 = by_rate[0.5].at({"linear:mean", 20});
  const double tck_drop = t20 - t50, lin_drop = l20 - l50;
  const bool ok = std::abs(t50 - t20) <= kRobustnessGap && lin_drop > tck_drop;
  return {ok, "tck " + fmt(t20) + " -> " + fmt(t50) + " (drop " + fmt(tck_drop, 3) +
                  "); linear:mean " + fmt(l20) + " -> " + fmt(l50) + " (drop " +
                  fmt(lin_drop, 3) + ")"};
}

Outcome supervised_parity() {
  const auto means = test_means(detection());
  const double unsup = means.at({"tck", 20}), sup = means.at({"supervised-tck", 20});
  const double lps_gap = std::abs(means.at({"lps", 20}) - means.at({"supervised-lps", 20}));
  const double gap = std::abs(unsup - sup);
  return {gap <= kParityGap, "tck unsupervised=" + fmt(unsup) + " supervised=" + fmt(sup) +
                                 " gap=" + fmt(gap, 3) + " (lps gap " + fmt(lps_gap, 3) + ")"};
}

Outcome metric_units() {
  bool ok = true;
  auto expect = [&](bool c) { ok = ok && c; };
  {
    const std::vector<int> pred{1, 1, 1, 1}, truth{1, 0, 1, 0};
    const auto pr = precision_recall(pred, truth);
    expect(pr.precision == 0.5 && pr.recall == 1.0);
  }
  {
    const std::vector<int> y{1, 0, 0, 1, 1};
    const auto pr = precision_recall(y, y);
    expect(pr.precision == 1.0 && pr.recall == 1.0 && f1(y, y) == 1.0);
  }
  {
    const std::vector<int> pred{0, 0, 0, 0}, truth{1, 0, 1, 0};
    const auto pr = precision_recall(pred, truth);
    expect(pr.precision == 0.0 && pr.recall == 0.0);
  }
  expect(f1_from({0.5, 0.5}) == 0.5);
  expect(f1_from({0.5, 1.0}) == 2.0 / 3.0);
  {
    const std::vector<int> truth{1, 0, 0, 1, 0}, complement{0, 1, 1, 0, 1};
    expect(clustering_f1(complement, truth) == 1.0);
  }
  std::mt19937_64 rng(2718);
  std::bernoulli_distribution coin(0.5);
  int symmetric = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + trial % 50;
    std::vector<int> a(n), flip(n), y(n);
    for (int i = 0; i < n; ++i) {
      a[i] = coin(rng);
      flip[i] = 1 - a[i];
      y[i] = coin(rng);
    }
    y[trial % n] = 1;
    symmetric += clustering_f1(a, y) == clustering_f1(flip, y);
  }
  const bool trivial = ok;
  expect(symmetric == 1000);
  return {ok, std::string("trivial examples ") + (trivial ? "ok" : "MISMATCH") +
                  ", flip symmetry " + std::to_string(symmetric) + "/1000"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

Outcome determinism() {
  TempDir dir;
  const char* body =
      R"({"synthetic": {"cases": 8, "controls": 16, "attributes": 3, "days": 10,
                        "missing": "mar", "rate": 0.3, "seed": 5},
          "methods": ["tck", "lps", "gak:mean+bc", "linear:locf"], "windows": [7, 10],
          "runs": 2, "seed": 3, "supervised_baseline": true, "manual_features": true,
          "embedding_dumps": true, "tck": {"Q": 3}, "lps": {"trees": 30},
          "output_dir": "OUT"})";
  std::vector<std::map<std::string, std::string>> outputs;
  for (const char* workers : {"1", "1", "8"}) {
    const std::string name = "run" + std::to_string(outputs.size());
    std::string cfg = body;
    cfg.replace(cfg.find("OUT"), 3, name);
    const fs::path cfg_path = dir / (name + ".json");
    std::ofstream(cfg_path) << cfg;
    std::ostringstream out, err;
    const int code = cli::run({"run", cfg_path.string(), "--workers", workers}, out, err);
    if (code != cli::kOk) return {false, "run exited " + std::to_string(code) + ": " + err.str()};
    outputs.push_back(tree_contents(dir / name));
  }
  const bool repeat = outputs[0] == outputs[1];
  const bool workers = outputs[0] == outputs[2];
  return {repeat && workers && outputs[0].size() >= 4,
          std::to_string(outputs[0].size()) + " files; repeat " +
              (repeat ? "identical" : "DIFFERENT") + ", workers 1 vs 8 " +
              (workers ? "identical" : "DIFFERENT")};
}

Outcome grid_bookkeeping() {
  std::istringstream in(
      R"({"synthetic": {"cases": 12, "controls": 18, "attributes": 3, "days": 20, "seed": 2,
                        "missing": "mcar", "rate": 0.2},
          "methods": "paper", "runs": 10, "stratify": true,
          "tck": {"Q": 2}, "lps": {"trees": 20}})");
  const RunConfig cfg = parse_run_config(in);
  const Cohort c = materialize_cohort(cfg);
  const auto r = run_experiment(c, cfg.experiment, default_workers());
  const std::size_t expected = (2 + 6 + 6) * 14 * 10 * 2;
  std::map<std::string, std::size_t> per_split;
  for (const auto& a : r.aggregates) ++per_split[a.split];
  const bool ok = r.errors.empty() && r.rows.size() == expected &&
                  per_split["train"] == 14 * 14 && per_split["test"] == 14 * 14;
  return {ok, std::to_string(r.rows.size()) + " metric rows (expected " +
                  std::to_string(expected) + "), aggregates train=" +
                  std::to_string(per_split["train"]) + " test=" +
                  std::to_string(per_split["test"]) + ", errors=" +
                  std::to_string(r.errors.size())};
}

}  // namespace

int main() {
  configure_logging();
  report(1, "kernel validity", kernel_validity);
  report(2, "GAK enumeration oracle", gak_oracle);
  report(3, "EM ascent and closed form", em_correctness);
  report(4, "kPCA eigendecomposition oracle", kpca_oracle_check);
  report(5, "unsupervised detection at window 20", end_to_end);
  report(6, "window trend", window_trend);
  report(7, "missing-data robustness", robustness);
  report(8, "supervised parity", supervised_parity);
  report(9, "metric units", metric_units);
  report(10, "run determinism", determinism);
  report(11, "method grid bookkeeping", grid_bookkeeping);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
