#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mtsk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// One patient: a V x T grid of values with an observation mask.
///
/// Cells with mask 0 are absent. Their stored value is meaningless and must
/// not be read; the loader stores NaN there.
struct MTSample {
  std::string id;
  Matrix values;
  Mask mask;
  std::optional<int> label;

  Eigen::Index attributes() const { return values.rows(); }
  Eigen::Index length() const { return values.cols(); }
  bool observed(Eigen::Index v, Eigen::Index t) const { return mask(v, t) != 0; }
  std::size_t observed_count() const;
  bool complete() const;
};

/// Minimum number of observed cells a sample needs to stay in a cohort.
inline constexpr std::size_t kMinObservedCells = 2;

/// An immutable set of samples sharing attribute names and window length.
class Cohort {
 public:
  Cohort() = default;
  /// Validates shapes, mask/values agreement and id uniqueness.
  Cohort(std::vector<std::string> attribute_names, int window_length,
         std::vector<MTSample> samples);

  const std::vector<MTSample>& samples() const { return samples_; }
  const MTSample& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<std::string>& attribute_names() const { return attribute_names_; }
  int window_length() const { return window_length_; }
  int attributes() const { return static_cast<int>(attribute_names_.size()); }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

  /// Fraction of masked cells over the whole cohort.
  double missing_fraction() const;
  /// True when every cell of every sample is observed.
  bool complete() const;

  /// Subset in the given order.
  Cohort select(std::span<const std::size_t> indices) const;

 private:
  std::vector<std::string> attribute_names_;
  int window_length_ = 0;
  std::vector<MTSample> samples_;
};

// ---------------------------------------------------------------------------
// Long CSV I/O: header `patient_id,label,day,attribute,value`, one row per
// observation, day 1-based, label in {0,1,NA}.

struct LoadOptions {
  /// Defaults to the largest day present in the file.
  std::optional<int> window_length;
  /// When set, rows naming any other attribute are rejected and the cohort
  /// uses this attribute order. Otherwise order of first appearance.
  std::optional<std::vector<std::string>> attribute_names;
};

struct LoadResult {
  Cohort cohort;
  /// Patients dropped for having fewer than two observations.
  std::size_t excluded = 0;
};

LoadResult read_cohort(std::istream& in, const LoadOptions& options = {});
LoadResult load_cohort(const std::filesystem::path& path,
                       const LoadOptions& options = {});

void write_cohort(const Cohort& cohort, std::ostream& out);
void save_cohort(const Cohort& cohort, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic cohorts

struct SyntheticSpec {
  int n_cases = 50;
  int n_controls = 150;
  int attributes = 11;
  int days = 20;
  double effect_size = 1.5;
  std::uint64_t seed = 0;
  /// Number of leading attributes carrying the case response; defaults to
  /// ceil(attributes / 2).
  std::optional<int> signal_attributes;
};

/// Baseline level and spread of attribute v in the synthetic generator.
struct AttributeProfile {
  std::string name;
  double mean;
  double sd;
  /// Direction of the case response (+1 rises, -1 falls).
  double direction;
};

AttributeProfile synthetic_attribute(int v);

/// Fully observed cohort. Controls follow a stationary AR(1) process around
/// each attribute's baseline mean; cases add a ramp-then-plateau response of height
/// effect_size * sd on the signal attributes, starting at a random onset day
/// in [3, days/2]. Labels are 1 for cases.
Cohort generate_synthetic_cohort(const SyntheticSpec& spec);

/// Expected value of attribute v at day t (1-based) for a case with the given
/// onset, under the generator above.
double synthetic_case_mean(const SyntheticSpec& spec, int v, int day, int onset);

// ---------------------------------------------------------------------------
// Missingness

enum class Mechanism { MCAR, MAR, MNAR };

Mechanism parse_mechanism(const std::string& text);
std::string to_string(Mechanism mechanism);

struct MissingnessSpec {
  Mechanism mechanism = Mechanism::MCAR;
  double rate = 0.0;
  std::uint64_t seed = 0;
};

/// Masks cells of a fully observed cohort. Values are left untouched.
///
/// MCAR masks each cell with probability `rate`. MAR uses a logistic model in
/// the mean z-score of the other attributes on the same day (higher values,
/// fewer gaps). MNAR uses a logistic model in the cell's own z-score (lower
/// values, more gaps). The logistic intercept is found by bisection so the
/// expected masked fraction equals `rate`. Samples left with fewer than two
/// observed cells are dropped.
Cohort apply_missingness(const Cohort& cohort, const MissingnessSpec& spec);

// ---------------------------------------------------------------------------
// Splits and windows

/// Seeded shuffle, |train| = round(fraction * N). With `stratify`, cases and
/// controls are split separately.
std::pair<Cohort, Cohort> train_test_split(const Cohort& cohort,
                                           double train_fraction,
                                           std::uint64_t seed,
                                           bool stratify = false);

/// Keeps the first `days` columns and drops samples left with fewer than two
/// observed cells.
Cohort truncate_window(const Cohort& cohort, int days);

}  // namespace mtsk
