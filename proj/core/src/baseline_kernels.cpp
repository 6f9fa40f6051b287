#include "mtsk/baseline_kernels.hpp"

#include "mtsk/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mtsk {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_complete(const MTSample& x, const char* kernel) {
  if (!x.complete())
    throw Error(std::string(kernel) + " kernel requires complete data; sample '" + x.id +
                "' has missing cells (impute first)");
}

void require_complete(const Cohort& c, const char* kernel) {
  for (const auto& s : c.samples()) require_complete(s, kernel);
}

double median(std::vector<double> v) {
  if (v.empty()) throw Error("median of empty set");
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double hi = *mid;
  if (v.size() % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

double logsumexp3(double a, double b, double c) {
  double m = std::max({a, b, c});
  if (m == kNegInf) return kNegInf;
  return m + std::log(std::exp(a - m) + std::exp(b - m) + std::exp(c - m));
}

}  // namespace

double linear_kernel(const MTSample& x, const MTSample& y, double c) {
  require_complete(x, "linear");
  require_complete(y, "linear");
  if (x.values.rows() != y.values.rows() || x.values.cols() != y.values.cols())
    throw Error("linear kernel needs samples of equal shape");
  return x.values.cwiseProduct(y.values).sum() + c;
}

GakParams gak_params_from_distances(std::vector<double> distances, int length) {
  if (distances.empty()) throw Error("GAK heuristic needs at least two training samples");
  const double med = median(std::move(distances));
  if (!(med > 0)) throw Error("GAK heuristic: median pairwise distance is zero");
  GakParams p;
  p.sigma = 2.0 * med * std::sqrt(static_cast<double>(length));
  p.triangular = std::max(1, static_cast<int>(std::lround(0.2 * length)));
  return p;
}

GakParams fit_gak_params(const Cohort& train) {
  if (train.size() < 2) throw Error("GAK heuristic needs at least two training samples");
  require_complete(train, "GAK");
  std::vector<double> d;
  d.reserve(train.size() * (train.size() - 1) / 2);
  for (std::size_t i = 0; i < train.size(); ++i)
    for (std::size_t j = i + 1; j < train.size(); ++j)
      d.push_back((train[i].values - train[j].values).norm());
  return gak_params_from_distances(std::move(d), train.window_length());
}

double log_gak(const Matrix& x, const Matrix& y, const GakParams& params) {
  if (x.rows() != y.rows()) throw Error("GAK needs equal attribute counts");
  if (!(params.sigma > 0) || params.triangular < 1) throw Error("invalid GAK parameters");
  const Eigen::Index n = x.cols(), m = y.cols();
  if (n == 0 || m == 0) throw Error("GAK needs nonempty series");
  if (std::abs(n - m) > params.triangular)
    throw Error("GAK band excludes the final alignment cell");

  const double inv_two_sigma2 = 1.0 / (2.0 * params.sigma * params.sigma);
  // Triangular weight 1 - |i-j| / (triangular + 1) inside the band.
  std::vector<double> log_band(params.triangular + 1);
  for (int k = 0; k <= params.triangular; ++k)
    log_band[k] = std::log1p(-static_cast<double>(k) / (params.triangular + 1));
  // prev/cur hold row i-1 and i of the (n+1) x (m+1) log-lattice.
  std::vector<double> prev(m + 1, kNegInf), cur(m + 1, kNegInf);
  prev[0] = 0.0;
  for (Eigen::Index i = 1; i <= n; ++i) {
    std::fill(cur.begin(), cur.end(), kNegInf);
    const Eigen::Index lo = std::max<Eigen::Index>(1, i - params.triangular);
    const Eigen::Index hi = std::min<Eigen::Index>(m, i + params.triangular);
    for (Eigen::Index j = lo; j <= hi; ++j) {
      const double d2 = (x.col(i - 1) - y.col(j - 1)).squaredNorm() * inv_two_sigma2;
      const double local = -d2 - std::log(2.0 - std::exp(-d2)) + log_band[std::abs(i - j)];
      cur[j] = local + logsumexp3(prev[j], cur[j - 1], prev[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double log_gak(const MTSample& x, const MTSample& y, const GakParams& params) {
  require_complete(x, "GAK");
  require_complete(y, "GAK");
  return log_gak(x.values, y.values, params);
}

KernelMatrix linear_gram(const Cohort& train, const Cohort* test, double c) {
  require_complete(train, "linear");
  if (test) require_complete(*test, "linear");
  auto flatten = [](const Cohort& cohort) {
    const Eigen::Index dim =
        static_cast<Eigen::Index>(cohort.attributes()) * cohort.window_length();
    Matrix f(static_cast<Eigen::Index>(cohort.size()), dim);
    for (std::size_t i = 0; i < cohort.size(); ++i)
      f.row(static_cast<Eigen::Index>(i)) =
          Eigen::Map<const Vector>(cohort[i].values.data(), dim).transpose();
    return f;
  };
  if (test && (test->attributes() != train.attributes() ||
               test->window_length() != train.window_length()))
    throw Error("linear kernel: train and test shapes differ");
  Matrix ftrain = flatten(train);
  if (!test) return linear_gram(ftrain, nullptr, c);
  Matrix ftest = flatten(*test);
  return linear_gram(ftrain, &ftest, c);
}

KernelMatrix linear_gram(const Matrix& train_features, const Matrix* test_features, double c) {
  KernelMatrix k;
  k.method_tag = "linear";
  k.gram = train_features * train_features.transpose();
  k.gram.array() += c;
  // Exact symmetry.
  k.gram = k.gram.triangularView<Eigen::Upper>().toDenseMatrix().selfadjointView<Eigen::Upper>();
  if (test_features) {
    if (test_features->cols() != train_features.cols())
      throw Error("linear kernel: feature dimensions differ");
    k.cross = train_features * test_features->transpose();
    k.cross->array() += c;
  }
  return k;
}

KernelMatrix gak_gram(const Cohort& train, const Cohort* test, const GakParams& params,
                      int workers) {
  require_complete(train, "GAK");
  if (test) require_complete(*test, "GAK");
  const auto N = static_cast<Eigen::Index>(train.size());
  const auto M = test ? static_cast<Eigen::Index>(test->size()) : 0;

  Vector self_train(N), self_test(M);
  parallel_for(N, workers, [&](std::size_t i) {
    self_train(i) = log_gak(train[i].values, train[i].values, params);
  });
  if (test)
    parallel_for(M, workers, [&](std::size_t i) {
      self_test(i) = log_gak((*test)[i].values, (*test)[i].values, params);
    });

  KernelMatrix k;
  k.method_tag = "gak";
  k.gram = Matrix::Ones(N, N);
  parallel_for(N, workers, [&](std::size_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    for (Eigen::Index j = i + 1; j < N; ++j) {
      const double l = log_gak(train[i].values, train[j].values, params);
      k.gram(i, j) = std::exp(l - 0.5 * self_train(i) - 0.5 * self_train(j));
    }
  });
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = i + 1; j < N; ++j) k.gram(j, i) = k.gram(i, j);

  if (test) {
    Matrix cross(N, M);
    parallel_for(N, workers, [&](std::size_t ii) {
      const auto i = static_cast<Eigen::Index>(ii);
      for (Eigen::Index j = 0; j < M; ++j) {
        const double l = log_gak(train[i].values, (*test)[j].values, params);
        cross(i, j) = std::exp(l - 0.5 * self_train(i) - 0.5 * self_test(j));
      }
    });
    k.cross = std::move(cross);
  }
  return k;
}

}  // namespace mtsk
