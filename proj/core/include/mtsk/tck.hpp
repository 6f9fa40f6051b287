#pragma once

#include "mtsk/cohort.hpp"
#include "mtsk/kernel_matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace mtsk {

// ---------------------------------------------------------------------------
// Diagonal-covariance GMM over incomplete MTS.
//
// Each component g has a mean curve mu_g (V x T) and one variance per
// attribute. Missing cells drop out of the likelihood, so nothing is imputed.

struct DiagGmmParams {
  Vector weights;             // G, on the simplex
  std::vector<Matrix> means;  // G entries, each V x T
  Matrix variances;           // G x V

  int components() const { return static_cast<int>(weights.size()); }
};

/// Prior hyperparameters of one ensemble member.
///
/// Mean curves are shrunk towards a Gaussian-smoothed population mean curve
/// with strength `strength` (in units of pseudo-observations); variances get
/// an inverse-gamma style penalty sigma^(-2 a0) exp(-b0 / sigma^2).
struct GmmPrior {
  double strength = 1.0;
  int smoothing_width = 1;
  double a0 = 0.5;
  Vector b0;              // per attribute
  Vector variance_floor;  // per attribute, > 0
};

/// Samples restricted to one member's time segment and attribute subset.
struct GmmBatch {
  std::vector<Matrix> values;
  std::vector<Mask> masks;

  std::size_t size() const { return values.size(); }
};

/// Population mean curve smoothed in time with a Gaussian window of the given
/// width, using observed cells only. Attributes without any observation fall
/// back to `fallback`.
Matrix smoothed_mean_curve(const GmmBatch& batch, int width, const Vector& fallback);

/// Per-component log of theta_g * prod N(x | mu, sigma)^r.
Vector diaggmm_log_joint(const DiagGmmParams& params, const Matrix& values, const Mask& mask);

/// Posterior over components, computed in the log domain. Falls back to the
/// uniform distribution (with a warning) if every component underflows.
Vector diaggmm_posterior(const DiagGmmParams& params, const Matrix& values, const Mask& mask);

/// Penalized log-likelihood maximized by fit_diaggmm.
double map_objective(const DiagGmmParams& params, const GmmBatch& batch,
                     const GmmPrior& prior, const Matrix& prior_mean);

struct FitOptions {
  int max_iter = 50;
  /// Stop once the objective improves by less than tol * max(1, |objective|).
  double tol = 1e-6;
  /// Throw if the objective ever drops (beyond round-off) between iterations.
  bool verify_monotone =
#ifdef NDEBUG
      false;
#else
      true;
#endif
};

struct GmmFit {
  DiagGmmParams params;
  Matrix posteriors;              // batch size x G, under the final params
  Matrix prior_mean;              // V x T smoothed population curve
  std::vector<double> objective;  // one entry per E-step
  std::vector<int> reseeded;      // iterations at which a component was re-seeded
  bool converged = false;
};

/// MAP-EM. Initial means are prior-shrunk curves of randomly chosen samples;
/// initial variances are the attribute variances.
GmmFit fit_diaggmm(const GmmBatch& batch, int components, const GmmPrior& prior,
                   const Vector& attribute_mean, const Vector& attribute_variance,
                   std::uint64_t seed, const FitOptions& options = {});

// ---------------------------------------------------------------------------
// Time series cluster kernel ensemble.

struct TckMember {
  int init_index = 0;   // q1, 1-based
  int components = 2;   // q2
  int segment_start = 0;
  int segment_length = 0;
  std::vector<int> attributes;
  std::vector<int> train_subset;
  GmmPrior prior;
  DiagGmmParams params;
  Matrix train_posteriors;  // N x q2, rows sum to one
};

struct TckModel {
  std::vector<TckMember> members;
  int Q = 0;
  int C = 0;
  int attributes = 0;
  int window_length = 0;
  std::size_t train_size = 0;
};

struct TckOptions {
  int Q = 30;
  /// Defaults to min(40, max(2, ceil(N / 25) + 2)).
  std::optional<int> C;
  int min_segment_length = 6;
  int min_attributes = 2;
  double min_subset_fraction = 0.8;
  FitOptions fit;
  std::uint64_t seed = 0;
  int workers = 1;
};

int default_tck_components(std::size_t n);

struct TckTrainResult {
  KernelMatrix kernel;
  TckModel model;
};

/// Fits Q * (C - 1) members and averages the cosine similarities of their
/// posterior vectors. The Gram has unit diagonal.
TckTrainResult tck_train(const Cohort& train, const TckOptions& options = {});

/// Train x test kernel: the same cosine averages against stored train
/// posteriors.
Matrix tck_test(const TckModel& model, const Cohort& test, int workers = 1);

/// Extracts the member's (segment, attributes) block of a sample.
void restrict_sample(const MTSample& sample, const TckMember& member, Matrix& values,
                     Mask& mask);

void write_tck_model(std::ostream& out, const TckModel& model);
TckModel read_tck_model(std::istream& in);
void save_tck_model(const std::filesystem::path& path, const TckModel& model);
TckModel load_tck_model(const std::filesystem::path& path);

}  // namespace mtsk
