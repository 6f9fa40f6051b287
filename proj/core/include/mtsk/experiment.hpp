#pragma once

#include "mtsk/baseline_kernels.hpp"
#include "mtsk/cluster.hpp"
#include "mtsk/cohort.hpp"
#include "mtsk/impute.hpp"
#include "mtsk/kernel_matrix.hpp"
#include "mtsk/lps.hpp"
#include "mtsk/tck.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mtsk {

enum class KernelKind { Linear, Gak, Tck, Lps, Manual };

std::string to_string(KernelKind kind);
KernelKind parse_kernel(const std::string& text);

/// Whether the kernel can run on incomplete data.
bool handles_missing(KernelKind kind);

/// A kernel plus the imputation applied before it (none for TCK/LPS).
struct MethodSpec {
  KernelKind kernel = KernelKind::Tck;
  std::optional<ImputationChoice> imputation;

  std::string kernel_name() const { return to_string(kernel); }
  std::string imputation_name() const;  // "none" when absent
  std::string label() const;            // e.g. "tck", "gak:zero+bc"
};

/// Parses "tck", "lps", "linear:mean", "gak:zero+bc", "manual:locf".
MethodSpec parse_method(const std::string& text);

/// tck, lps, gak x 6 imputations, linear x 6 imputations.
std::vector<MethodSpec> paper_method_grid();

/// Settings shared by every cell of the pipeline.
struct PipelineParams {
  int embedding_dim = 10;
  int clusters = 2;
  int knn = 5;
  int kmeans_restarts = 20;
  double linear_constant = 0.0;
  bool supervised_baseline = false;
  TckOptions tck;
  LpsOptions lps;
};

/// Output of one train/test pass. Everything except the test-side members is
/// fitted on the training cohort only.
struct PipelineOutcome {
  std::optional<ImputationSpec> imputation;
  std::optional<GakParams> gak;
  KernelMatrix kernel;
  KpcaModel kpca;
  Matrix train_embedding;
  ClusterAssignment clusters;
  Matrix test_embedding;
  std::vector<int> test_clusters;
  std::vector<int> supervised_test;  // only with supervised_baseline
};

/// impute (if any) -> kernel -> kPCA -> k-means on train -> kNN for test.
PipelineOutcome run_pipeline(const Cohort& train, const Cohort& test, const MethodSpec& method,
                             const PipelineParams& params, std::uint64_t seed);

struct ExperimentConfig {
  std::vector<MethodSpec> methods;
  std::vector<int> windows;  // defaults to 7..20
  int runs = 10;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  bool stratify = false;
  PipelineParams pipeline;
  bool manual_features = false;
  ImputationChoice manual_imputation{ImputeMethod::Mean, false};
  bool paper_literal_f1 = false;
  bool embedding_dumps = false;
};

struct MetricRow {
  std::string method;
  std::string imputation;
  int window = 0;
  int run = 0;
  std::string split;  // train | test
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct AggregateRow {
  std::string method;
  std::string imputation;
  int window = 0;
  std::string split;
  double mean_f1 = 0.0;
  std::optional<double> se_f1;  // absent for a single run
  int count = 0;
};

struct CellError {
  std::string method;
  std::string imputation;
  int window = 0;
  int run = 0;
  std::string message;
};

/// Training-set kPCA coordinates of one (method, window) from the first run.
struct EmbeddingDump {
  std::string method;
  std::string imputation;
  int window = 0;
  std::vector<std::string> ids;
  std::vector<std::optional<int>> labels;
  std::vector<int> clusters;
  Matrix points;
};

struct ExperimentReport {
  std::vector<MetricRow> rows;
  std::vector<AggregateRow> aggregates;
  std::vector<CellError> errors;
  std::vector<EmbeddingDump> embeddings;
};

/// One planned (run, window, method) cell.
struct PlannedCell {
  int run;
  int window;
  MethodSpec method;
};

/// Validates the config against the cohort and lists cells in report order.
std::vector<PlannedCell> plan_experiment(const Cohort& cohort, const ExperimentConfig& config);

/// Repeated random splits x window sweep x methods. Failed cells are recorded
/// in `errors` and skipped; output order is independent of `workers`.
ExperimentReport run_experiment(const Cohort& cohort, const ExperimentConfig& config,
                                int workers = 1);

/// Mean and standard error of F1 per (method, imputation, window, split).
std::vector<AggregateRow> aggregate(const std::vector<MetricRow>& rows);

void write_report_csv(std::ostream& out, const std::vector<MetricRow>& rows);
void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows);
void write_errors_csv(std::ostream& out, const std::vector<CellError>& errors);
void write_report_json(std::ostream& out, const ExperimentReport& report);
void write_embedding_csv(std::ostream& out, const EmbeddingDump& dump);
std::vector<MetricRow> read_report_csv(std::istream& in);

}  // namespace mtsk
