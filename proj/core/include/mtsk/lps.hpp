#pragma once

#include "mtsk/cohort.hpp"
#include "mtsk/kernel_matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace mtsk {

/// Segment rows of one sample: for every start t, the predictor window
/// x[v_pred](t .. t+l-1) and the target x[v_tgt](t+l+p-1). Absent cells have
/// their observed flag cleared and hold NaN.
struct SegmentMatrix {
  int rows = 0;
  int segment_length = 0;
  std::vector<double> predictors;  // rows x segment_length, row-major
  std::vector<std::uint8_t> predictor_observed;
  std::vector<double> target;
  std::vector<std::uint8_t> target_observed;

  double predictor(int row, int j) const { return predictors[row * segment_length + j]; }
  bool predictor_present(int row, int j) const {
    return predictor_observed[row * segment_length + j] != 0;
  }
};

SegmentMatrix build_segment_matrix(const MTSample& x, int segment_length, int lag,
                                   int predictor_attribute, int target_attribute);

struct LpsNode {
  int feature = -1;  // -1 marks a terminal node
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  bool missing_goes_left = true;
  int leaf = -1;  // terminal index within the tree
};

struct LpsTree {
  int segment_length = 1;
  int lag = 1;
  int predictor_attribute = 0;
  int target_attribute = 0;
  std::vector<LpsNode> nodes;  // nodes[0] is the root
  int leaves = 1;

  int depth() const;
  /// Terminal index reached by segment row `row`.
  int route(const SegmentMatrix& segments, int row) const;
};

struct LpsForest {
  std::vector<LpsTree> trees;
  int attributes = 0;
  int window_length = 0;

  /// Sum of terminal counts over trees.
  std::size_t representation_size() const;
};

struct LpsOptions {
  int trees = 200;
  int max_depth = 6;
  double min_segment_fraction = 0.15;
  double max_segment_fraction = 0.5;
  double max_lag_fraction = 0.2;
  int threshold_candidates = 20;
  int min_split_rows = 8;
  std::uint64_t seed = 0;
  int workers = 1;
};

/// Random regression trees on pooled segment rows. Rows with an absent target
/// are left out of training; rows with an absent split feature follow the
/// child that received more training rows.
LpsForest lps_train(const Cohort& train, const LpsOptions& options = {});

/// Terminal-node counts, concatenated over trees.
using BagRepresentation = Eigen::VectorXi;

BagRepresentation lps_represent(const LpsForest& forest, const MTSample& x);

/// Histogram intersection normalized by the total terminal count.
double lps_kernel(const BagRepresentation& a, const BagRepresentation& b,
                  std::size_t total_terminals);

/// Gram over train (and cross against test when given).
KernelMatrix lps_gram(const LpsForest& forest, const Cohort& train, const Cohort* test,
                      int workers = 1);

void write_lps_forest(std::ostream& out, const LpsForest& forest);
LpsForest read_lps_forest(std::istream& in);
void save_lps_forest(const std::filesystem::path& path, const LpsForest& forest);
LpsForest load_lps_forest(const std::filesystem::path& path);

}  // namespace mtsk
