#pragma once

#include <cstddef>
#include <span>

namespace mtsk {

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
};

Confusion confusion(std::span<const int> predicted, std::span<const int> truth);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

/// precision = tp / (tp + fp), defined as 0 (with a warning) when nothing is
/// predicted positive; recall = tp / (tp + fn). Truth needs a positive.
PrecisionRecall precision_recall(std::span<const int> predicted, std::span<const int> truth);

/// 2PR / (P + R), or PR / (P + R) when `literal_form` is set. 0 if P + R = 0.
double f1_from(PrecisionRecall pr, bool literal_form = false);
double f1(std::span<const int> predicted, std::span<const int> truth, bool literal_form = false);

struct ClusteringScore {
  PrecisionRecall pr;
  double f1 = 0.0;
  bool flipped = false;  // true if the complement labelling scored higher
};

/// Best F1 over the two ways of mapping cluster ids {0, 1} to classes.
ClusteringScore clustering_score(std::span<const int> assignment, std::span<const int> truth,
                                 bool literal_form = false);
double clustering_f1(std::span<const int> assignment, std::span<const int> truth,
                     bool literal_form = false);

}  // namespace mtsk
