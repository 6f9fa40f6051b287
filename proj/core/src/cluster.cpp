#include "mtsk/cluster.hpp"

#include "mtsk/common.hpp"

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <limits>
#include <numeric>

namespace mtsk {

std::pair<KpcaModel, Matrix> kpca_fit(const Matrix& gram, int dim) {
  const Eigen::Index N = gram.rows();
  if (gram.cols() != N) throw Error("kPCA needs a square Gram matrix");
  if (N < 2) throw Error("kPCA needs at least two samples");
  if (dim < 1 || dim > N - 1)
    throw Error("kPCA dimension " + std::to_string(dim) + " outside [1, " +
                std::to_string(N - 1) + "]");

  KpcaModel model;
  model.dim = dim;
  model.train_row_means = gram.rowwise().mean();
  model.train_grand_mean = gram.mean();
  Matrix centered = gram;
  centered.colwise() -= model.train_row_means;
  centered.rowwise() -= model.train_row_means.transpose();
  centered.array() += model.train_grand_mean;
  centered = 0.5 * (centered + centered.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> es(centered);
  if (es.info() != Eigen::Success) throw Error("kPCA eigendecomposition failed");
  const double cutoff = 1e-10 * std::max(0.0, centered.trace());

  model.eigenvalues = Vector::Zero(dim);
  model.eigenvectors = Matrix::Zero(N, dim);
  int rank = 0;
  for (int i = 0; i < dim; ++i) {
    const Eigen::Index src = N - 1 - i;  // ascending order from the solver
    const double lambda = es.eigenvalues()(src);
    if (!(lambda > cutoff) || !(lambda > 0)) continue;
    Vector u = es.eigenvectors().col(src);
    Eigen::Index arg;
    u.cwiseAbs().maxCoeff(&arg);
    if (u(arg) < 0) u = -u;
    model.eigenvalues(i) = lambda;
    model.eigenvectors.col(i) = u;
    ++rank;
  }
  if (rank < dim) {
    // Common in window sweeps; loud only once per process.
    static std::atomic<bool> warned{false};
    spdlog::log(warned.exchange(true) ? spdlog::level::debug : spdlog::level::warn,
                "kPCA: numerical rank {} below requested dimension {}; padding with zeros", rank,
                dim);
  }

  Matrix embedding = model.eigenvectors * model.eigenvalues.cwiseSqrt().asDiagonal();
  return {std::move(model), std::move(embedding)};
}

Matrix kpca_project(const KpcaModel& model, const Matrix& cross) {
  if (cross.rows() != model.eigenvectors.rows())
    throw Error("kPCA projection: cross-kernel has " + std::to_string(cross.rows()) +
                " rows, model expects " + std::to_string(model.eigenvectors.rows()));
  Matrix centered = cross;
  const Vector col_means = cross.colwise().mean().transpose();
  centered.colwise() -= model.train_row_means;
  centered.rowwise() -= col_means.transpose();
  centered.array() += model.train_grand_mean;

  Vector scale(model.dim);
  for (int i = 0; i < model.dim; ++i)
    scale(i) = model.eigenvalues(i) > 0 ? 1.0 / std::sqrt(model.eigenvalues(i)) : 0.0;
  return centered.transpose() * model.eigenvectors * scale.asDiagonal();
}

namespace {

struct LloydResult {
  std::vector<int> labels;
  Matrix centroids;
  double inertia;
};

Matrix compute_centroids(const Matrix& x, const std::vector<int>& labels, int k) {
  Matrix c = Matrix::Zero(k, x.cols());
  Vector count = Vector::Zero(k);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    c.row(labels[i]) += x.row(i);
    count(labels[i]) += 1;
  }
  for (int j = 0; j < k; ++j)
    if (count(j) > 0) c.row(j) /= count(j);
  return c;
}

LloydResult lloyd(const Matrix& x, int k, Rng& rng) {
  const Eigen::Index N = x.rows();
  // k-means++ seeding.
  Matrix centroids(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, N - 1);
  centroids.row(0) = x.row(first(rng));
  Vector d2 = (x.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (chosen = 0; chosen < N - 1; ++chosen) {
        u -= d2(chosen);
        if (u < 0) break;
      }
    } else {
      chosen = first(rng);
    }
    centroids.row(j) = x.row(chosen);
    d2 = d2.cwiseMin((x.rowwise() - centroids.row(j)).rowwise().squaredNorm());
  }

  std::vector<int> labels(N, -1);
  for (int it = 0; it < 300; ++it) {
    std::vector<int> next(N);
    for (Eigen::Index i = 0; i < N; ++i) {
      Eigen::Index best;
      (centroids.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
      next[i] = static_cast<int>(best);
    }
    // Empty clusters take the point farthest from its own centroid.
    for (int j = 0; j < k; ++j) {
      std::vector<int> sizes(k, 0);
      for (int l : next) ++sizes[l];
      if (sizes[j] > 0) continue;
      double far = -1;
      Eigen::Index arg = -1;
      for (Eigen::Index i = 0; i < N; ++i) {
        if (sizes[next[i]] < 2) continue;
        const double d = (x.row(i) - centroids.row(next[i])).squaredNorm();
        if (d > far) {
          far = d;
          arg = i;
        }
      }
      if (arg >= 0) next[arg] = j;
    }
    const bool fixpoint = next == labels;
    labels = std::move(next);
    centroids = compute_centroids(x, labels, k);
    if (fixpoint) break;
  }
  double inertia = 0;
  for (Eigen::Index i = 0; i < N; ++i) inertia += (x.row(i) - centroids.row(labels[i])).squaredNorm();
  return {std::move(labels), std::move(centroids), inertia};
}

}  // namespace

ClusterAssignment kmeans(const Matrix& points, int k, int restarts, std::uint64_t seed) {
  if (k < 1) throw Error("k-means needs k >= 1");
  if (points.rows() < k) throw Error("k-means needs at least k points");
  if (restarts < 1) throw Error("k-means needs at least one restart");
  ClusterAssignment best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(r)}));
    LloydResult res = lloyd(points, k, rng);
    if (res.inertia < best.inertia) {
      best.labels = std::move(res.labels);
      best.centroids = std::move(res.centroids);
      best.inertia = res.inertia;
    }
  }
  return best;
}

std::vector<int> knn_assign(const Matrix& train_points, const std::vector<int>& train_labels,
                            const Matrix& test_points, int k) {
  const Eigen::Index N = train_points.rows();
  if (N == 0) throw Error("kNN needs a nonempty training set");
  if (static_cast<Eigen::Index>(train_labels.size()) != N)
    throw Error("kNN: label count does not match training points");
  if (k < 1 || k > N) throw Error("kNN: k must lie in [1, N_train]");
  if (test_points.cols() != train_points.cols()) throw Error("kNN: dimension mismatch");

  std::vector<int> out(test_points.rows());
  std::vector<Eigen::Index> order(N);
  for (Eigen::Index m = 0; m < test_points.rows(); ++m) {
    const Vector d = (train_points.rowwise() - test_points.row(m)).rowwise().squaredNorm();
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        return d(a) < d(b) || (d(a) == d(b) && a < b);
                      });
    std::vector<int> votes;
    int max_label = 0;
    for (int i = 0; i < k; ++i) max_label = std::max(max_label, train_labels[order[i]]);
    votes.assign(max_label + 1, 0);
    for (int i = 0; i < k; ++i) ++votes[train_labels[order[i]]];
    const int top = *std::max_element(votes.begin(), votes.end());
    const bool tie = std::count(votes.begin(), votes.end(), top) > 1;
    out[m] = tie ? train_labels[order[0]]
                 : static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return out;
}

Matrix manual_features(const Cohort& cohort) {
  const int V = cohort.attributes();
  Matrix f(static_cast<Eigen::Index>(cohort.size()), 3 * V);
  for (std::size_t n = 0; n < cohort.size(); ++n) {
    const auto& s = cohort[n];
    if (!s.complete())
      throw Error("manual features need complete data; sample '" + s.id + "' has gaps");
    for (int v = 0; v < V; ++v) {
      const auto row = s.values.row(v);
      f(static_cast<Eigen::Index>(n), 3 * v) = row.mean();
      f(static_cast<Eigen::Index>(n), 3 * v + 1) = row.maxCoeff();
      f(static_cast<Eigen::Index>(n), 3 * v + 2) = row.minCoeff();
    }
  }
  return f;
}

}  // namespace mtsk
