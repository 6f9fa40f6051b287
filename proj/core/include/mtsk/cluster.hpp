#pragma once

#include "mtsk/cohort.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace mtsk {

/// Everything needed to embed new kernel columns after a kPCA fit.
struct KpcaModel {
  int dim = 0;
  Vector eigenvalues;     // dim, descending, >= 0
  Matrix eigenvectors;    // N x dim, unit columns (zero for null directions)
  Vector train_row_means; // row means of the uncentered Gram
  double train_grand_mean = 0.0;
};

/// Points in embedding space, one row per sample.
struct Embedding {
  Matrix points;
  std::vector<std::string> ids;
};

/// Centers the Gram, keeps the top `dim` eigenpairs and returns the training
/// embedding (eigenvectors scaled by sqrt(eigenvalue)). Directions whose
/// eigenvalue falls below 1e-10 * trace are zeroed. Each column's sign makes
/// its largest-magnitude entry positive.
std::pair<KpcaModel, Matrix> kpca_fit(const Matrix& gram, int dim);

/// Embeds the columns of a train x test cross-kernel.
Matrix kpca_project(const KpcaModel& model, const Matrix& cross);

struct ClusterAssignment {
  std::vector<int> labels;
  Matrix centroids;  // k x d
  double inertia = 0.0;
};

/// k-means++ seeding and Lloyd iterations (assignment fixpoint or 300
/// iterations), best of `restarts` runs by within-cluster sum of squares.
/// An empty cluster takes the point farthest from its centroid.
ClusterAssignment kmeans(const Matrix& points, int k = 2, int restarts = 20,
                         std::uint64_t seed = 0);

/// Majority vote among the k nearest training points (Euclidean). Ties go to
/// the single nearest neighbor's label.
std::vector<int> knn_assign(const Matrix& train_points, const std::vector<int>& train_labels,
                            const Matrix& test_points, int k = 5);

/// Mean, max and min of each attribute over the window: N x 3V, grouped per
/// attribute. Requires complete samples.
Matrix manual_features(const Cohort& cohort);

}  // namespace mtsk
