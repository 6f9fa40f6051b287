#pragma once

#include "mtsk/cohort.hpp"
#include "mtsk/kernel_matrix.hpp"

namespace mtsk {

/// <vec(x), vec(y)> + c. Both samples must be complete and of equal shape.
double linear_kernel(const MTSample& x, const MTSample& y, double c = 0.0);

/// Global alignment kernel hyperparameters.
struct GakParams {
  double sigma = 1.0;  // bandwidth
  int triangular = 1;  // band half-width in time steps
};

/// sigma = 2 * median pairwise Frobenius distance * sqrt(median length),
/// triangular = max(1, round(0.2 * median length)).
GakParams fit_gak_params(const Cohort& train);

/// Same heuristic from precomputed pairwise distances and a common length.
GakParams gak_params_from_distances(std::vector<double> distances, int length);

/// Log of the global alignment kernel between two V x T frames sequences
/// (columns are time steps). Local similarity is k/(2-k) with
/// k = exp(-|x_s - y_t|^2 / (2 sigma^2)), weighted by the triangular factor
/// 1 - |s - t| / (triangular + 1); cells with |s - t| > triangular contribute
/// nothing.
double log_gak(const Matrix& x, const Matrix& y, const GakParams& params);
double log_gak(const MTSample& x, const MTSample& y, const GakParams& params);

/// Raw linear Gram (and cross when `test` is given).
KernelMatrix linear_gram(const Cohort& train, const Cohort* test, double c = 0.0);

/// Linear Gram on row feature vectors.
KernelMatrix linear_gram(const Matrix& train_features, const Matrix* test_features,
                         double c = 0.0);

/// GAK Gram normalized per pair:
/// exp(log k(x,y) - log k(x,x)/2 - log k(y,y)/2).
KernelMatrix gak_gram(const Cohort& train, const Cohort* test, const GakParams& params,
                      int workers = 1);

}  // namespace mtsk
