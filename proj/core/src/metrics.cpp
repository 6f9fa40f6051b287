#include "mtsk/metrics.hpp"

#include "mtsk/common.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <vector>

namespace mtsk {

Confusion confusion(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size())
    throw Error("prediction and truth lengths differ (" + std::to_string(predicted.size()) +
                " vs " + std::to_string(truth.size()) + ")");
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == 1, t = truth[i] == 1;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

PrecisionRecall precision_recall(std::span<const int> predicted, std::span<const int> truth) {
  const Confusion c = confusion(predicted, truth);
  if (c.tp + c.fn == 0) throw Error("precision/recall need at least one positive in the truth");
  PrecisionRecall pr;
  if (c.tp + c.fp == 0) {
    static std::atomic<bool> warned{false};
    spdlog::log(warned.exchange(true) ? spdlog::level::debug : spdlog::level::warn,
                "no predicted positives; precision defined as 0");
    pr.precision = 0.0;
  } else {
    pr.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  }
  pr.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return pr;
}

double f1_from(PrecisionRecall pr, bool literal_form) {
  const double s = pr.precision + pr.recall;
  if (s == 0.0) return 0.0;
  return (literal_form ? 1.0 : 2.0) * pr.precision * pr.recall / s;
}

double f1(std::span<const int> predicted, std::span<const int> truth, bool literal_form) {
  return f1_from(precision_recall(predicted, truth), literal_form);
}

ClusteringScore clustering_score(std::span<const int> assignment, std::span<const int> truth,
                                 bool literal_form) {
  std::vector<int> flipped(assignment.size());
  for (std::size_t i = 0; i < assignment.size(); ++i) flipped[i] = assignment[i] == 1 ? 0 : 1;
  ClusteringScore a, b;
  a.pr = precision_recall(assignment, truth);
  a.f1 = f1_from(a.pr, literal_form);
  b.pr = precision_recall(flipped, truth);
  b.f1 = f1_from(b.pr, literal_form);
  b.flipped = true;
  return b.f1 > a.f1 ? b : a;
}

double clustering_f1(std::span<const int> assignment, std::span<const int> truth,
                     bool literal_form) {
  return clustering_score(assignment, truth, literal_form).f1;
}

}  // namespace mtsk
