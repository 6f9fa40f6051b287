#include "oracles.hpp"
#include "support.hpp"

#include <mtsk/baseline_kernels.hpp>
#include <mtsk/common.hpp>
#include <mtsk/impute.hpp>
#include <mtsk/kernel_matrix.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace mtsk;
using namespace mtsk::testing;

TEST(LinearKernel, SmallExamples) {
  const Matrix x = (Matrix(2, 2) << 1, 2, 0, 1).finished();
  const Matrix y = (Matrix(2, 2) << 1, 0, 1, 1).finished();
  EXPECT_DOUBLE_EQ(linear_kernel(make_sample("x", x), make_sample("y", y), 0.0), 2.0);
  EXPECT_DOUBLE_EQ(linear_kernel(make_sample("x", x), make_sample("x", x), 0.0),
                   x.squaredNorm());
  const Matrix z = Matrix::Zero(2, 3);
  EXPECT_DOUBLE_EQ(linear_kernel(make_sample("a", z), make_sample("b", z), 5.0), 5.0);
}

TEST(LinearKernel, IncompleteInputIsRejected) {
  const Matrix x = Matrix::Ones(1, 3);
  Mask m = Mask::Ones(1, 3);
  m(0, 1) = 0;
  EXPECT_THROW(linear_kernel(make_sample("x", x, {}, &m), make_sample("y", x), 0.0), Error);
}

TEST(LinearGram, OneHotSamplesGiveIdentity) {
  std::vector<Matrix> xs;
  for (int i = 0; i < 4; ++i) {
    Matrix m = Matrix::Zero(2, 2);
    m(i) = 1.0;
    xs.push_back(m);
  }
  const auto k = linear_gram(make_cohort(xs), nullptr);
  EXPECT_TRUE(k.gram == Matrix::Identity(4, 4));
}

TEST(LinearGram, BiasCorrectionAddsMaskInnerProducts) {
  const Cohort c = synthetic(4, 4, 3, 6, 0.3, 3);
  const auto spec_bc = fit_imputer(c, ImputeMethod::Mean, true);
  const auto spec = fit_imputer(c, ImputeMethod::Mean, false);
  const Matrix with = linear_gram(impute(spec_bc, c), nullptr).gram;
  const Matrix without = linear_gram(impute(spec, c), nullptr).gram;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j) {
      const double masks = (c[i].mask.cast<double>() * c[j].mask.cast<double>()).sum();
      EXPECT_NEAR(with(i, j), without(i, j) + masks, 1e-9 * std::abs(with(i, j)));
    }
}

TEST(GakParams, MedianHeuristic) {
  const auto p = gak_params_from_distances({1, 2, 3}, 4);
  EXPECT_DOUBLE_EQ(p.sigma, 8.0);
  EXPECT_EQ(p.triangular, 1);
  EXPECT_EQ(gak_params_from_distances({1, 2, 3}, 20).triangular, 4);
  EXPECT_THROW(gak_params_from_distances({0, 0, 0}, 5), Error);
}

TEST(GakParams, FittedFromFrobeniusDistances) {
  // Three univariate series of length 4 with distances 1, 2, 3.
  const Matrix a = Matrix::Zero(1, 4);
  Matrix b = Matrix::Zero(1, 4), c = Matrix::Zero(1, 4);
  b(0, 0) = 1;
  c(0, 0) = 3;
  const auto p = fit_gak_params(make_cohort({a, b, c}));
  EXPECT_DOUBLE_EQ(p.sigma, 8.0);
  EXPECT_THROW(fit_gak_params(make_cohort({a, a})), Error);
}

TEST(Gak, SingleFrameIsTheLocalSimilarity) {
  const Matrix x = (Matrix(2, 1) << 1, 2).finished();
  const Matrix y = (Matrix(2, 1) << 0, 1).finished();
  const GakParams p{1.5, 1};
  const double k = std::exp(-2.0 / (2 * 1.5 * 1.5));
  EXPECT_NEAR(log_gak(x, y, p), std::log(k / (2 - k)), 1e-14);
}

TEST(Gak, MatchesExhaustiveAlignmentEnumeration) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> len(1, 4), dim(1, 2), band(1, 3);
  std::uniform_real_distribution<double> sig(0.3, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int V = dim(rng), T = len(rng);
    const Matrix x = random_matrix(V, T, rng), y = random_matrix(V, T, rng);
    const GakParams p{sig(rng), band(rng)};
    EXPECT_NEAR(log_gak(x, y, p), gak_by_enumeration(x, y, p.sigma, p.triangular), 1e-9)
        << "trial " << trial;
  }
}

TEST(Gak, SymmetricAndAttributePermutationInvariant) {
  std::mt19937_64 rng(5);
  const Matrix x = random_matrix(3, 10, rng), y = random_matrix(3, 10, rng);
  const GakParams p{2.0, 3};
  EXPECT_NEAR(log_gak(x, y, p), log_gak(y, x, p), 1e-12);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(3);
  perm.indices() << 2, 0, 1;
  EXPECT_NEAR(log_gak(perm * x, perm * y, p), log_gak(x, y, p), 1e-12);
}

TEST(Gak, NarrowerBandNeverIncreasesTheValue) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(2, 12, rng), y = random_matrix(2, 12, rng);
    double prev = log_gak(x, y, {1.0, 12});
    for (int b = 11; b >= 1; --b) {
      const double cur = log_gak(x, y, {1.0, b});
      EXPECT_LE(cur, prev + 1e-12);
      prev = cur;
    }
  }
}

TEST(Gak, LongSeriesStayFinite) {
  std::mt19937_64 rng(8);
  const Matrix x = random_matrix(22, 20, rng) * 50, y = random_matrix(22, 20, rng) * 50;
  EXPECT_TRUE(std::isfinite(log_gak(x, y, {0.5, 4})));
}

TEST(GakGram, NormalizedDiagonalIsMaximal) {
  const Cohort raw = synthetic(5, 15, 4, 12, 0.3, 4);
  const Cohort c = impute(fit_imputer(raw, ImputeMethod::Zero, false), raw);
  const auto k = gak_gram(c, &c, fit_gak_params(c));
  for (Eigen::Index i = 0; i < k.gram.rows(); ++i) {
    EXPECT_NEAR(k.gram(i, i), 1.0, 1e-12);
    for (Eigen::Index j = 0; j < k.gram.cols(); ++j) EXPECT_LE(k.gram(i, j), 1.0 + 1e-12);
  }
  EXPECT_TRUE(k.gram == k.gram.transpose());
  EXPECT_LT((*k.cross - k.gram).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BaselineGrams, PassTheKernelCheckOnSyntheticCohorts) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Cohort raw = synthetic(25, 75, 5, 20, 0.3, seed);
    for (const auto& choice : all_imputations()) {
      const Cohort c = impute(fit_imputer(raw, choice.method, choice.bias_correct), raw);
      const auto lin = check_kernel(linear_gram(c, nullptr).gram);
      EXPECT_TRUE(lin.ok()) << imputation_name(choice) << " linear " << lin.min_eigenvalue;
      const auto gak = check_kernel(gak_gram(c, nullptr, fit_gak_params(c)).gram);
      EXPECT_TRUE(gak.ok()) << imputation_name(choice) << " gak " << gak.min_eigenvalue;
    }
  }
}

TEST(KernelMatrixIo, RoundTripsExactly) {
  std::mt19937_64 rng(3);
  const Matrix m = random_matrix(4, 3, rng);
  std::stringstream buf;
  write_matrix(buf, m, "gak:zero");
  std::string tag;
  const Matrix back = read_matrix(buf, &tag);
  EXPECT_EQ(tag, "gak:zero");
  EXPECT_TRUE(back == m);
  std::istringstream bad("gak,2,2\n1,2\n");
  EXPECT_THROW(read_matrix(bad), ParseError);
}

TEST(KernelCheck, DetectsAsymmetryAndNegativeEigenvalues) {
  Matrix k = Matrix::Identity(3, 3);
  EXPECT_TRUE(check_kernel(k).ok());
  k(0, 1) = 0.5;
  EXPECT_FALSE(check_kernel(k).symmetric);
  Matrix neg = Matrix::Identity(2, 2);
  neg(0, 1) = neg(1, 0) = 2.0;
  EXPECT_FALSE(check_kernel(neg).psd);
}
