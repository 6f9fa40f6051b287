#include "mtsk/experiment.hpp"

#include "mtsk/common.hpp"
#include "mtsk/metrics.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>
#include <tuple>

namespace mtsk {

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::Linear: return "linear";
    case KernelKind::Gak: return "gak";
    case KernelKind::Tck: return "tck";
    case KernelKind::Lps: return "lps";
    case KernelKind::Manual: return "manual";
  }
  return "?";
}

KernelKind parse_kernel(const std::string& text) {
  std::string t;
  for (char c : text) t += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (t == "linear") return KernelKind::Linear;
  if (t == "gak") return KernelKind::Gak;
  if (t == "tck") return KernelKind::Tck;
  if (t == "lps") return KernelKind::Lps;
  if (t == "manual") return KernelKind::Manual;
  throw Error("unknown kernel '" + text + "' (expected linear, gak, tck, lps or manual)");
}

bool handles_missing(KernelKind kind) { return kind == KernelKind::Tck || kind == KernelKind::Lps; }

std::string MethodSpec::imputation_name() const {
  return imputation ? mtsk::imputation_name(*imputation) : "none";
}

std::string MethodSpec::label() const {
  return imputation ? kernel_name() + ":" + imputation_name() : kernel_name();
}

MethodSpec parse_method(const std::string& text) {
  MethodSpec m;
  const auto colon = text.find(':');
  m.kernel = parse_kernel(text.substr(0, colon));
  if (colon != std::string::npos) {
    const std::string imp = text.substr(colon + 1);
    if (imp != "none") m.imputation = parse_imputation(imp);
  }
  if (!m.imputation && !handles_missing(m.kernel))
    throw Error("kernel '" + m.kernel_name() +
                "' needs complete data; choose an imputation (e.g. " + m.kernel_name() +
                ":mean)");
  return m;
}

std::vector<MethodSpec> paper_method_grid() {
  std::vector<MethodSpec> out{{KernelKind::Tck, std::nullopt}, {KernelKind::Lps, std::nullopt}};
  for (auto k : {KernelKind::Gak, KernelKind::Linear})
    for (const auto& imp : all_imputations()) out.push_back({k, imp});
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

PipelineOutcome run_pipeline(const Cohort& train, const Cohort& test, const MethodSpec& method,
                             const PipelineParams& params, std::uint64_t seed) {
  PipelineOutcome out;
  if (train.size() < 3) throw Error("pipeline needs at least three training samples");
  if (test.empty()) throw Error("pipeline needs a nonempty test set");

  Cohort tr = train, te = test;
  if (method.imputation) {
    out.imputation =
        fit_imputer(train, method.imputation->method, method.imputation->bias_correct);
    tr = impute(*out.imputation, train);
    te = impute(*out.imputation, test);
  } else if (!handles_missing(method.kernel)) {
    throw Error(method.kernel_name() + " kernel needs an imputation step");
  }

  switch (method.kernel) {
    case KernelKind::Linear: out.kernel = linear_gram(tr, &te, params.linear_constant); break;
    case KernelKind::Gak:
      out.gak = fit_gak_params(tr);
      out.kernel = gak_gram(tr, &te, *out.gak);
      break;
    case KernelKind::Tck: {
      TckOptions opt = params.tck;
      opt.seed = seed;
      opt.workers = 1;
      auto trained = tck_train(tr, opt);
      out.kernel = std::move(trained.kernel);
      out.kernel.cross = tck_test(trained.model, te);
      break;
    }
    case KernelKind::Lps: {
      LpsOptions opt = params.lps;
      opt.seed = seed;
      opt.workers = 1;
      out.kernel = lps_gram(lps_train(tr, opt), tr, &te);
      break;
    }
    case KernelKind::Manual: {
      const Matrix ftr = manual_features(tr), fte = manual_features(te);
      out.kernel = linear_gram(ftr, &fte, params.linear_constant);
      out.kernel.method_tag = "manual";
      break;
    }
  }

  const int n = static_cast<int>(tr.size());
  const int dim = std::min(params.embedding_dim, n - 1);
  auto [model, embedding] = kpca_fit(out.kernel.gram, dim);
  out.kpca = std::move(model);
  out.train_embedding = std::move(embedding);
  out.clusters = kmeans(out.train_embedding, params.clusters, params.kmeans_restarts,
                        derive_seed(seed, {0x6b6d}));
  out.test_embedding = kpca_project(out.kpca, *out.kernel.cross);
  out.test_clusters = knn_assign(out.train_embedding, out.clusters.labels, out.test_embedding,
                                 std::min(params.knn, n));

  if (params.supervised_baseline) {
    std::vector<Eigen::Index> labeled;
    std::vector<int> labels;
    for (std::size_t i = 0; i < tr.size(); ++i)
      if (tr[i].label) {
        labeled.push_back(static_cast<Eigen::Index>(i));
        labels.push_back(*tr[i].label);
      }
    if (labeled.empty()) throw Error("supervised baseline needs labeled training samples");
    Matrix ref(static_cast<Eigen::Index>(labeled.size()), out.train_embedding.cols());
    for (std::size_t i = 0; i < labeled.size(); ++i)
      ref.row(static_cast<Eigen::Index>(i)) = out.train_embedding.row(labeled[i]);
    out.supervised_test = knn_assign(ref, labels, out.test_embedding,
                                     std::min<int>(params.knn, static_cast<int>(labeled.size())));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment grid

namespace {

std::vector<MethodSpec> effective_methods(const ExperimentConfig& config) {
  std::vector<MethodSpec> methods = config.methods;
  if (config.manual_features) {
    MethodSpec manual{KernelKind::Manual, config.manual_imputation};
    const bool present = std::any_of(methods.begin(), methods.end(), [&](const MethodSpec& m) {
      return m.label() == manual.label();
    });
    if (!present) methods.push_back(manual);
  }
  return methods;
}

struct Scored {
  PrecisionRecall pr;
  double f1;
};

// Restricts to labeled samples and scores predictions against the labels.
std::optional<Scored> score(const Cohort& cohort, const std::vector<int>& predicted,
                            bool clustering, bool literal) {
  std::vector<int> p, t;
  for (std::size_t i = 0; i < cohort.size(); ++i)
    if (cohort[i].label) {
      p.push_back(predicted[i]);
      t.push_back(*cohort[i].label);
    }
  if (t.empty()) return std::nullopt;
  if (clustering) {
    auto s = clustering_score(p, t, literal);
    return Scored{s.pr, s.f1};
  }
  auto pr = precision_recall(p, t);
  return Scored{pr, f1_from(pr, literal)};
}

struct CellResult {
  std::vector<MetricRow> rows;
  std::optional<CellError> error;
  std::optional<EmbeddingDump> dump;
};

}  // namespace

std::vector<PlannedCell> plan_experiment(const Cohort& cohort, const ExperimentConfig& config) {
  std::vector<std::string> problems;
  if (config.runs < 1) problems.push_back("runs must be >= 1");
  if (!(config.train_fraction > 0 && config.train_fraction < 1))
    problems.push_back("train_fraction must lie in (0, 1)");
  const auto methods = effective_methods(config);
  if (methods.empty()) problems.push_back("no methods configured");
  std::vector<int> windows = config.windows;
  if (windows.empty())
    for (int w = 7; w <= std::min(20, cohort.window_length()); ++w) windows.push_back(w);
  if (windows.empty()) problems.push_back("no windows configured");
  for (int w : windows)
    if (w < 1 || w > cohort.window_length())
      problems.push_back("window " + std::to_string(w) + " outside [1, " +
                         std::to_string(cohort.window_length()) + "]");
  if (config.pipeline.embedding_dim < 1) problems.push_back("embedding_dim must be >= 1");
  if (config.pipeline.clusters != 2) problems.push_back("clusters must be 2 (binary F1)");
  if (config.pipeline.knn < 1) problems.push_back("knn must be >= 1");
  if (config.pipeline.kmeans_restarts < 1) problems.push_back("kmeans_restarts must be >= 1");
  if (!problems.empty()) {
    std::string msg = "invalid experiment configuration:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw Error(msg);
  }

  std::vector<PlannedCell> cells;
  for (int r = 0; r < config.runs; ++r)
    for (int w : windows)
      for (const auto& m : methods) cells.push_back({r, w, m});
  return cells;
}

ExperimentReport run_experiment(const Cohort& cohort, const ExperimentConfig& config,
                                int workers) {
  const auto cells = plan_experiment(cohort, config);

  std::vector<std::pair<Cohort, Cohort>> splits;
  std::vector<std::string> split_errors(config.runs);
  splits.resize(config.runs);
  for (int r = 0; r < config.runs; ++r) {
    try {
      splits[r] = train_test_split(cohort, config.train_fraction,
                                   derive_seed(config.seed, {static_cast<std::uint64_t>(r)}),
                                   config.stratify);
    } catch (const std::exception& e) {
      split_errors[r] = e.what();
    }
  }

  const bool literal = config.paper_literal_f1;
  std::vector<CellResult> results(cells.size());
  parallel_for(cells.size(), workers, [&](std::size_t i) {
    const PlannedCell& cell = cells[i];
    const std::string method = cell.method.kernel_name();
    const std::string imputation = cell.method.imputation_name();
    CellResult& res = results[i];
    try {
      if (!split_errors[cell.run].empty()) throw Error(split_errors[cell.run]);
      const Cohort train = truncate_window(splits[cell.run].first, cell.window);
      const Cohort test = truncate_window(splits[cell.run].second, cell.window);
      const auto seed = derive_seed(config.seed, {static_cast<std::uint64_t>(cell.run),
                                                  static_cast<std::uint64_t>(cell.window),
                                                  hash_string(cell.method.label())});
      const PipelineOutcome out = run_pipeline(train, test, cell.method, config.pipeline, seed);

      auto push = [&](const std::string& m, const std::string& split,
                      const std::optional<Scored>& s) {
        if (!s) throw Error("no labeled samples in the " + split + " split");
        res.rows.push_back({m, imputation, cell.window, cell.run, split, s->pr.precision,
                            s->pr.recall, s->f1});
      };
      push(method, "train", score(train, out.clusters.labels, true, literal));
      push(method, "test", score(test, out.test_clusters, true, literal));
      if (config.pipeline.supervised_baseline)
        push("supervised-" + method, "test", score(test, out.supervised_test, false, literal));

      if (config.embedding_dumps && cell.run == 0) {
        EmbeddingDump d;
        d.method = method;
        d.imputation = imputation;
        d.window = cell.window;
        for (const auto& s : train.samples()) {
          d.ids.push_back(s.id);
          d.labels.push_back(s.label);
        }
        d.clusters = out.clusters.labels;
        d.points = out.train_embedding;
        res.dump = std::move(d);
      }
    } catch (const std::exception& e) {
      res.rows.clear();
      res.error = CellError{method, imputation, cell.window, cell.run, e.what()};
    }
  });

  ExperimentReport report;
  for (auto& r : results) {
    for (auto& row : r.rows) report.rows.push_back(std::move(row));
    if (r.error) {
      spdlog::warn("cell {}:{} window {} run {} failed: {}", r.error->method,
                   r.error->imputation, r.error->window, r.error->run, r.error->message);
      report.errors.push_back(std::move(*r.error));
    }
    if (r.dump) report.embeddings.push_back(std::move(*r.dump));
  }
  report.aggregates = aggregate(report.rows);
  return report;
}

std::vector<AggregateRow> aggregate(const std::vector<MetricRow>& rows) {
  // Groups keep the order in which (method, imputation) first appears.
  std::map<std::pair<std::string, std::string>, std::size_t> method_rank;
  for (const auto& r : rows) method_rank.try_emplace({r.method, r.imputation}, method_rank.size());
  using Key = std::tuple<std::size_t, int, int>;  // method rank, window, split rank
  std::map<Key, std::vector<const MetricRow*>> groups;
  for (const auto& r : rows) {
    const int split_rank = r.split == "train" ? 0 : r.split == "test" ? 1 : 2;
    groups[{method_rank.at({r.method, r.imputation}), r.window, split_rank}].push_back(&r);
  }
  std::vector<AggregateRow> out;
  for (const auto& [key, members] : groups) {
    AggregateRow a;
    a.method = members.front()->method;
    a.imputation = members.front()->imputation;
    a.window = members.front()->window;
    a.split = members.front()->split;
    a.count = static_cast<int>(members.size());
    double sum = 0;
    for (const auto* m : members) sum += m->f1;
    a.mean_f1 = sum / a.count;
    if (a.count > 1) {
      double ss = 0;
      for (const auto* m : members) ss += (m->f1 - a.mean_f1) * (m->f1 - a.mean_f1);
      a.se_f1 = std::sqrt(ss / (a.count - 1)) / std::sqrt(static_cast<double>(a.count));
    }
    out.push_back(std::move(a));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output

void write_report_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "method,imputation,window,run,split,precision,recall,f1\n";
  for (const auto& r : rows)
    out << r.method << ',' << r.imputation << ',' << r.window << ',' << r.run << ',' << r.split
        << ',' << format_double(r.precision) << ',' << format_double(r.recall) << ','
        << format_double(r.f1) << '\n';
}

void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
  out << "method,imputation,window,split,mean_f1,se_f1\n";
  for (const auto& r : rows)
    out << r.method << ',' << r.imputation << ',' << r.window << ',' << r.split << ','
        << format_double(r.mean_f1) << ',' << (r.se_f1 ? format_double(*r.se_f1) : "NA")
        << '\n';
}

void write_errors_csv(std::ostream& out, const std::vector<CellError>& errors) {
  out << "method,imputation,window,run,error\n";
  for (const auto& e : errors) {
    std::string msg = e.message;
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::replace(msg.begin(), msg.end(), ',', ';');
    out << e.method << ',' << e.imputation << ',' << e.window << ',' << e.run << ',' << msg
        << '\n';
  }
}

void write_report_json(std::ostream& out, const ExperimentReport& report) {
  using nlohmann::json;
  json rows = json::array(), aggs = json::array(), errs = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"method", r.method}, {"imputation", r.imputation}, {"window", r.window},
                    {"run", r.run}, {"split", r.split}, {"precision", r.precision},
                    {"recall", r.recall}, {"f1", r.f1}});
  for (const auto& a : report.aggregates)
    aggs.push_back({{"method", a.method}, {"imputation", a.imputation}, {"window", a.window},
                    {"split", a.split}, {"mean_f1", a.mean_f1},
                    {"se_f1", a.se_f1 ? json(*a.se_f1) : json(nullptr)}, {"runs", a.count}});
  for (const auto& e : report.errors)
    errs.push_back({{"method", e.method}, {"imputation", e.imputation}, {"window", e.window},
                    {"run", e.run}, {"error", e.message}});
  json doc = {{"rows", std::move(rows)}, {"aggregates", std::move(aggs)}, {"errors", std::move(errs)}};
  out << doc.dump(1) << '\n';
}

void write_embedding_csv(std::ostream& out, const EmbeddingDump& dump) {
  out << "id,label,cluster";
  for (Eigen::Index j = 0; j < dump.points.cols(); ++j) out << ",e" << (j + 1);
  out << '\n';
  for (std::size_t i = 0; i < dump.ids.size(); ++i) {
    out << dump.ids[i] << ',' << (dump.labels[i] ? std::to_string(*dump.labels[i]) : "NA")
        << ',' << dump.clusters[i];
    for (Eigen::Index j = 0; j < dump.points.cols(); ++j)
      out << ',' << format_double(dump.points(static_cast<Eigen::Index>(i), j));
    out << '\n';
  }
}

std::vector<MetricRow> read_report_csv(std::istream& in) {
  std::vector<MetricRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "method,imputation,window,run,split,precision,recall,f1")
        throw ParseError(1, "not a metric report (unexpected header)");
      continue;
    }
    std::stringstream ss(line);
    std::vector<std::string> f;
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 8) throw ParseError(line_no, "expected 8 fields");
    try {
      rows.push_back({f[0], f[1], std::stoi(f[2]), std::stoi(f[3]), f[4], std::stod(f[5]),
                      std::stod(f[6]), std::stod(f[7])});
    } catch (const std::exception&) {
      throw ParseError(line_no, "malformed numeric field");
    }
  }
  return rows;
}

}  // namespace mtsk
