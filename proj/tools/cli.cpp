#include "cli.hpp"

#include <mtsk/baseline_kernels.hpp>
#include <mtsk/common.hpp>
#include <mtsk/experiment.hpp>
#include <mtsk/impute.hpp>
#include <mtsk/kernel_matrix.hpp>
#include <mtsk/lps.hpp>
#include <mtsk/run_config.hpp>
#include <mtsk/tck.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>

namespace fs = std::filesystem;

namespace mtsk::cli {

namespace {

// Thrown for problems the user can fix by changing flags or inputs.
struct UsageError : Error {
  using Error::Error;
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  int cases = 50;
  int controls = 150;
  int attrs = 11;
  int days = 20;
  double effect = 1.5;
  std::string missing;
  double rate = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  if (a.rate < 0.0 || a.rate >= 1.0) throw UsageError("--rate must lie in [0, 1)");
  if (a.rate > 0.0 && a.missing.empty())
    throw UsageError("--rate needs --missing {mcar|mar|mnar}");
  if (a.cases < 0 || a.controls < 0 || a.cases + a.controls < 2)
    throw UsageError("need at least two samples (--cases + --controls)");
  if (a.attrs < 1 || a.days < 1) throw UsageError("--attrs and --days must be >= 1");

  SyntheticSpec spec;
  spec.n_cases = a.cases;
  spec.n_controls = a.controls;
  spec.attributes = a.attrs;
  spec.days = a.days;
  spec.effect_size = a.effect;
  spec.seed = a.seed;
  Cohort cohort = generate_synthetic_cohort(spec);
  const std::size_t generated = cohort.size();
  if (a.rate > 0.0) {
    MissingnessSpec m;
    m.mechanism = parse_mechanism(a.missing);
    m.rate = a.rate;
    m.seed = missingness_seed(a.seed);
    cohort = apply_missingness(cohort, m);
  }
  save_cohort(cohort, a.out);
  out << "wrote " << a.out << ": N=" << cohort.size() << " V=" << cohort.attributes()
      << " T=" << cohort.window_length() << " missing_fraction=" << std::fixed
      << std::setprecision(4) << cohort.missing_fraction() << std::defaultfloat;
  if (cohort.size() < generated) out << " dropped=" << generated - cohort.size();
  out << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// kernel

struct KernelArgs {
  std::string method;
  std::string impute = "none";
  std::string train;
  std::string test;
  std::string out_prefix;
  std::uint64_t seed = 0;
  int workers = 0;
  std::optional<int> days;
  std::optional<int> q;
  std::optional<int> trees;
};

Cohort load_checked(const std::string& path, const LoadOptions& opt, std::ostream& out) {
  if (!fs::exists(path)) throw UsageError("input file not found: " + path);
  auto loaded = load_cohort(path, opt);
  if (loaded.excluded > 0)
    out << path << ": excluded " << loaded.excluded << " samples with < 2 observations\n";
  return std::move(loaded.cohort);
}

int cmd_kernel(const KernelArgs& a, std::ostream& out) {
  KernelKind kind;
  try {
    kind = parse_kernel(a.method);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (kind == KernelKind::Manual) throw UsageError("--method must be linear, gak, tck or lps");
  std::optional<ImputationChoice> imputation;
  if (a.impute != "none") {
    try {
      imputation = parse_imputation(a.impute);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  if (!imputation && !handles_missing(kind))
    throw UsageError("the " + to_string(kind) +
                     " kernel requires complete data; pass --impute mean|locf|zero (optionally "
                     "with +bc)");
  const MethodSpec method{kind, imputation};
  const int workers = a.workers > 0 ? a.workers : default_workers();

  LoadOptions train_opt;
  train_opt.window_length = a.days;
  Cohort train = load_checked(a.train, train_opt, out);
  std::optional<Cohort> test;
  if (!a.test.empty()) {
    LoadOptions test_opt;
    test_opt.window_length = train.window_length();
    test_opt.attribute_names = train.attribute_names();
    test = load_checked(a.test, test_opt, out);
  }

  nlohmann::json pre = {{"format", "mtsk-preprocess"}, {"version", 1}, {"method", method.label()}};
  if (imputation) {
    const auto spec = fit_imputer(train, imputation->method, imputation->bias_correct);
    pre["imputation"] = {{"scheme", spec.name()},
                         {"attributes", spec.attributes},
                         {"train_attribute_means", spec.train_attribute_means}};
    train = impute(spec, train);
    if (test) test = impute(spec, *test);
  }

  KernelMatrix k;
  const fs::path prefix(a.out_prefix);
  const fs::path model_path = prefix.string() + ".model.json";
  switch (kind) {
    case KernelKind::Linear: k = linear_gram(train, test ? &*test : nullptr, 0.0); break;
    case KernelKind::Gak: {
      const GakParams p = fit_gak_params(train);
      pre["gak"] = {{"sigma", p.sigma}, {"triangular", p.triangular}};
      k = gak_gram(train, test ? &*test : nullptr, p, workers);
      break;
    }
    case KernelKind::Tck: {
      TckOptions opt;
      opt.seed = a.seed;
      opt.workers = workers;
      if (a.q) opt.Q = *a.q;
      auto trained = tck_train(train, opt);
      k = std::move(trained.kernel);
      if (test) k.cross = tck_test(trained.model, *test, workers);
      save_tck_model(model_path, trained.model);
      break;
    }
    case KernelKind::Lps: {
      LpsOptions opt;
      opt.seed = a.seed;
      opt.workers = workers;
      if (a.trees) opt.trees = *a.trees;
      const LpsForest forest = lps_train(train, opt);
      k = lps_gram(forest, train, test ? &*test : nullptr, workers);
      save_lps_forest(model_path, forest);
      break;
    }
    case KernelKind::Manual: break;
  }
  const std::string tag = method.label();
  save_matrix(prefix.string() + ".gram.csv", k.gram, tag);
  if (k.cross) save_matrix(prefix.string() + ".cross.csv", *k.cross, tag);
  if (imputation || kind == KernelKind::Gak) {
    auto f = open_out(prefix.string() + ".preprocess.json");
    f << pre.dump(1) << '\n';
  }
  const KernelCheck check = check_kernel(k.gram);
  out << tag << ": gram " << k.gram.rows() << "x" << k.gram.cols();
  if (k.cross) out << ", cross " << k.cross->rows() << "x" << k.cross->cols();
  out << ", min eigenvalue " << check.min_eigenvalue << (check.ok() ? "" : " (CHECK FAILED)")
      << '\n';
  return check.ok() ? kOk : kFailure;
}

// ---------------------------------------------------------------------------
// run

struct RunArgs {
  std::string config;
  bool dry_run = false;
  int workers = 0;
};

std::string dump_name(const EmbeddingDump& d) {
  std::string name = d.method;
  if (d.imputation != "none") name += "_" + d.imputation;
  std::replace(name.begin(), name.end(), '+', '-');
  return name + "_w" + std::to_string(d.window) + ".csv";
}

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  Cohort cohort;
  std::vector<PlannedCell> cells;
  try {
    if (!fs::exists(a.config)) throw Error("config file not found: " + a.config);
    cfg = load_run_config(a.config);
    cohort = materialize_cohort(cfg);
    cells = plan_experiment(cohort, cfg.experiment);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  if (a.dry_run) {
    out << "cohort: N=" << cohort.size() << " V=" << cohort.attributes()
        << " T=" << cohort.window_length() << '\n';
    out << "planned cells: " << cells.size() << '\n';
    for (const auto& c : cells)
      out << "  run " << c.run << " window " << c.window << ' ' << c.method.label() << '\n';
    out << "output_dir: " << cfg.output_dir.string() << '\n';
    return kOk;
  }

  fs::create_directories(cfg.output_dir);
  const int workers = a.workers > 0 ? a.workers : default_workers();
  const ExperimentReport report = run_experiment(cohort, cfg.experiment, workers);

  {
    auto f = open_out(cfg.output_dir / "report.csv");
    write_report_csv(f, report.rows);
  }
  {
    auto f = open_out(cfg.output_dir / "aggregates.csv");
    write_aggregate_csv(f, report.aggregates);
  }
  {
    auto f = open_out(cfg.output_dir / "report.json");
    write_report_json(f, report);
  }
  {
    auto f = open_out(cfg.output_dir / "errors.csv");
    write_errors_csv(f, report.errors);
  }
  for (const auto& d : report.embeddings) {
    auto f = open_out(cfg.output_dir / "embeddings" / dump_name(d));
    write_embedding_csv(f, d);
  }

  out << "cells: " << cells.size() << ", failed: " << report.errors.size()
      << ", metric rows: " << report.rows.size() << ", output: " << cfg.output_dir.string()
      << '\n';
  if (report.errors.empty()) return kOk;
  for (const auto& e : report.errors)
    err << "failed: " << e.method << ':' << e.imputation << " window " << e.window << " run "
        << e.run << ": " << e.message << '\n';
  return kFailure;
}

// ---------------------------------------------------------------------------
// report / check

struct ReportArgs {
  std::string input;
  std::string out;
  std::string json;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  if (!fs::exists(a.input)) throw UsageError("report file not found: " + a.input);
  std::ifstream in(a.input);
  ExperimentReport report;
  report.rows = read_report_csv(in);
  report.aggregates = aggregate(report.rows);
  if (a.out.empty()) {
    write_aggregate_csv(out, report.aggregates);
  } else {
    auto f = open_out(a.out);
    write_aggregate_csv(f, report.aggregates);
  }
  if (!a.json.empty()) {
    auto f = open_out(a.json);
    write_report_json(f, report);
  }
  return kOk;
}

int cmd_check(const std::string& path, std::ostream& out) {
  if (!fs::exists(path)) throw UsageError("matrix file not found: " + path);
  std::string tag;
  const Matrix m = load_matrix(path, &tag);
  if (m.rows() != m.cols()) throw Error("not a square Gram matrix: " + path);
  const KernelCheck c = check_kernel(m);
  out << tag << ' ' << m.rows() << 'x' << m.cols() << ": asymmetry " << c.asymmetry
      << ", min eigenvalue " << c.min_eigenvalue << ", trace " << c.trace << " -> "
      << (c.ok() ? "ok" : "FAILED") << '\n';
  return c.ok() ? kOk : kFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Kernel-based clustering of incomplete multivariate time series"};
  app.name("mtsk");
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic cohort as long CSV");
  s->add_option("--cases", synth.cases, "number of positive samples")->capture_default_str();
  s->add_option("--controls", synth.controls, "number of negative samples")->capture_default_str();
  s->add_option("--attrs", synth.attrs, "attributes per sample")->capture_default_str();
  s->add_option("--days", synth.days, "window length")->capture_default_str();
  s->add_option("--effect", synth.effect, "case effect size in SD units")->capture_default_str();
  s->add_option("--missing", synth.missing, "missingness mechanism")
      ->check(CLI::IsMember({"mcar", "mar", "mnar"}, CLI::ignore_case));
  s->add_option("--rate", synth.rate, "target fraction of missing cells")->capture_default_str();
  s->add_option("--seed", synth.seed, "random seed")->capture_default_str();
  s->add_option("--out", synth.out, "output CSV")->required();

  KernelArgs kern;
  auto* k = app.add_subcommand("kernel", "compute Gram and cross-kernel matrices");
  k->add_option("--method", kern.method, "linear | gak | tck | lps")->required();
  k->add_option("--impute", kern.impute, "none | mean | locf | zero, optionally +bc")
      ->capture_default_str();
  k->add_option("--train", kern.train, "training cohort CSV")->required();
  k->add_option("--test", kern.test, "test cohort CSV");
  k->add_option("--out-prefix", kern.out_prefix, "prefix for output files")->required();
  k->add_option("--seed", kern.seed, "random seed")->capture_default_str();
  k->add_option("--workers", kern.workers, "worker threads (default MTSK_WORKERS or 1)");
  k->add_option("--days", kern.days, "window length (default: last day in the train file)");
  k->add_option("--Q", kern.q, "TCK initializations");
  k->add_option("--trees", kern.trees, "LPS trees");

  RunArgs runa;
  auto* r = app.add_subcommand("run", "run the split x window x method experiment");
  r->add_option("config", runa.config, "JSON run config")->required();
  r->add_flag("--dry-run", runa.dry_run, "print the planned grid and exit");
  r->add_option("--workers", runa.workers, "worker threads (default MTSK_WORKERS or 1)");

  ReportArgs rep;
  auto* p = app.add_subcommand("report", "re-aggregate a metric report CSV");
  p->add_option("report", rep.input, "report.csv written by `run`")->required();
  p->add_option("--out", rep.out, "aggregate CSV (default stdout)");
  p->add_option("--json", rep.json, "also write a JSON report");

  std::string matrix;
  auto* c = app.add_subcommand("check", "symmetry and PSD check of a matrix file");
  c->add_option("matrix", matrix, "matrix CSV")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (k->parsed()) return cmd_kernel(kern, out);
    if (r->parsed()) return cmd_run(runa, out, err);
    if (p->parsed()) return cmd_report(rep, out);
    if (c->parsed()) return cmd_check(matrix, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace mtsk::cli
