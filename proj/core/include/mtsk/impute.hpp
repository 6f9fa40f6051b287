#pragma once

#include "mtsk/cohort.hpp"

#include <string>
#include <vector>

namespace mtsk {

enum class ImputeMethod { Mean, Locf, Zero };

/// A fitted single-imputation scheme. Means come from training cells only.
struct ImputationSpec {
  ImputeMethod method = ImputeMethod::Mean;
  /// Stack the observation mask as V extra attributes (1 = observed).
  bool bias_correct = false;
  /// Attribute count seen when fitting.
  int attributes = 0;
  /// Per-attribute mean over observed training cells. Empty for Zero.
  std::vector<double> train_attribute_means;

  /// One of mean, mean+bc, locf, locf+bc, zero, zero+bc.
  std::string name() const;
};

struct ImputationChoice {
  ImputeMethod method;
  bool bias_correct;
};

/// Parses "mean", "locf+bc", ... (case-insensitive).
ImputationChoice parse_imputation(const std::string& text);
std::string imputation_name(ImputationChoice choice);

/// The six complete-data schemes in legend order.
std::vector<ImputationChoice> all_imputations();

ImputationSpec fit_imputer(const Cohort& train, ImputeMethod method, bool bias_correct);

/// Fills every missing cell; output masks are all ones. Observed cells keep
/// their values. LOCF carries the last observed value forward and falls back
/// to the training mean before the first observation. With bias correction
/// the output has 2V attributes, the second block being the input mask.
Cohort impute(const ImputationSpec& spec, const Cohort& cohort);

}  // namespace mtsk
