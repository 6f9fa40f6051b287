#include "oracles.hpp"
#include "support.hpp"

#include <mtsk/common.hpp>
#include <mtsk/kernel_matrix.hpp>
#include <mtsk/tck.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace mtsk;
using namespace mtsk::testing;

namespace {

GmmPrior make_prior(Eigen::Index V, double strength = 1.0, int width = 2) {
  GmmPrior p;
  p.strength = strength;
  p.smoothing_width = width;
  p.a0 = 0.3;
  p.b0 = Vector::Constant(V, 0.05);
  p.variance_floor = Vector::Constant(V, 1e-4);
  return p;
}

GmmBatch random_batch(int N, int V, int T, double missing, std::mt19937_64& rng) {
  GmmBatch b;
  std::bernoulli_distribution drop(missing);
  for (int n = 0; n < N; ++n) {
    b.values.push_back(random_matrix(V, T, rng));
    Mask m(V, T);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = !drop(rng);
    b.masks.push_back(m);
  }
  return b;
}

DiagGmmParams two_components(int V, int T) {
  DiagGmmParams p;
  p.weights = (Vector(2) << 0.3, 0.7).finished();
  p.means = {Matrix::Zero(V, T), Matrix::Zero(V, T)};
  p.variances = Matrix::Ones(2, V);
  return p;
}

}  // namespace

TEST(DiagGmmPosterior, SingleComponentIsCertain) {
  DiagGmmParams p;
  p.weights = Vector::Ones(1);
  p.means = {Matrix::Zero(2, 3)};
  p.variances = Matrix::Ones(1, 2);
  std::mt19937_64 rng(1);
  const Vector post = diaggmm_posterior(p, random_matrix(2, 3, rng), Mask::Ones(2, 3));
  EXPECT_DOUBLE_EQ(post(0), 1.0);
}

TEST(DiagGmmPosterior, FullyMissingReturnsWeights) {
  DiagGmmParams p = two_components(2, 3);
  p.means[1].setConstant(5.0);
  std::mt19937_64 rng(2);
  const Vector post = diaggmm_posterior(p, random_matrix(2, 3, rng) * 100, Mask::Zero(2, 3));
  EXPECT_NEAR(post(0), 0.3, 1e-15);
  EXPECT_NEAR(post(1), 0.7, 1e-15);
}

TEST(DiagGmmPosterior, IdenticalComponentsReturnWeights) {
  const DiagGmmParams p = two_components(2, 4);
  std::mt19937_64 rng(3);
  const Vector post = diaggmm_posterior(p, random_matrix(2, 4, rng), Mask::Ones(2, 4));
  EXPECT_NEAR(post(0), 0.3, 1e-12);
  EXPECT_NEAR(post(1), 0.7, 1e-12);
}

TEST(DiagGmmPosterior, MissingCellValuesAreIgnored) {
  DiagGmmParams p = two_components(1, 3);
  p.means[1].setConstant(1.0);
  Matrix x = (Matrix(1, 3) << 0.2, 0.0, 0.9).finished();
  Mask m = Mask::Ones(1, 3);
  m(0, 1) = 0;
  const Vector a = diaggmm_posterior(p, x, m);
  x(0, 1) = 1e6;
  EXPECT_TRUE(a == diaggmm_posterior(p, x, m));
}

TEST(SmoothedMean, MatchesDirectSum) {
  std::mt19937_64 rng(4);
  const GmmBatch b = random_batch(12, 3, 9, 0.4, rng);
  const Vector fb = Vector::Constant(3, 7.0);
  for (int w : {1, 2, 3})
    EXPECT_LT((smoothed_mean_curve(b, w, fb) - smoothed_mean_oracle(b, w, fb)).cwiseAbs().maxCoeff(),
              1e-12);
}

TEST(FitDiagGmm, SingleComponentMatchesClosedForm) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const GmmBatch b = random_batch(15, 3, 8, trial == 0 ? 0.0 : 0.3, rng);
    const GmmPrior prior = make_prior(3, 0.5 + trial, 1 + trial % 3);
    const Vector mean = Vector::Zero(3), var = Vector::Ones(3);
    const GmmFit fit = fit_diaggmm(b, 1, prior, mean, var, 11);
    const Matrix m = smoothed_mean_oracle(b, prior.smoothing_width, mean);
    const auto oracle = single_component_map(b, prior, m);
    EXPECT_LT((fit.params.means[0] - oracle.mean).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((fit.params.variances.row(0).transpose() - oracle.variance).cwiseAbs().maxCoeff(),
              1e-8);
    EXPECT_NEAR(fit.params.weights(0), 1.0, 1e-15);
  }
}

TEST(FitDiagGmm, ObjectiveNeverDecreases) {
  std::mt19937_64 rng(6);
  FitOptions opt;
  opt.verify_monotone = false;
  opt.tol = 1e-12;
  for (int trial = 0; trial < 20; ++trial) {
    const GmmBatch b = random_batch(30, 2, 6, 0.3, rng);
    const GmmFit fit = fit_diaggmm(b, 2 + trial % 4, make_prior(2, 1.0 + trial % 3), Vector::Zero(2),
                                   Vector::Ones(2), 100 + trial, opt);
    for (std::size_t i = 1; i < fit.objective.size(); ++i) {
      if (std::find(fit.reseeded.begin(), fit.reseeded.end(), static_cast<int>(i) - 1) !=
          fit.reseeded.end())
        continue;
      const double prev = fit.objective[i - 1];
      EXPECT_GE(fit.objective[i], prev - 1e-10 * std::max(1.0, std::abs(prev)))
          << "trial " << trial << " iteration " << i;
    }
    EXPECT_NEAR(fit.params.weights.sum(), 1.0, 1e-12);
    EXPECT_TRUE((fit.params.variances.array() >= 1e-4).all());
  }
}

TEST(FitDiagGmm, RecoversSeparatedClustersUnderMissingness) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise;
  std::bernoulli_distribution drop(0.5), coin(0.5);
  GmmBatch b;
  std::vector<int> truth;
  for (int n = 0; n < 200; ++n) {
    const int z = coin(rng);
    Matrix x(3, 10);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = (z ? 3.0 : -3.0) + noise(rng);
    Mask m(3, 10);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = !drop(rng);
    m(0, 0) = 1;
    b.values.push_back(x);
    b.masks.push_back(m);
    truth.push_back(z);
  }
  const GmmFit fit = fit_diaggmm(b, 2, make_prior(3), Vector::Zero(3), Vector::Constant(3, 10.0), 3);
  int agree = 0;
  for (int n = 0; n < 200; ++n) agree += (fit.posteriors(n, 1) > 0.5) == (truth[n] == 1);
  const double acc = std::max(agree, 200 - agree) / 200.0;
  EXPECT_GE(acc, 0.95);
}

TEST(FitDiagGmm, ReseedsEmptyComponents) {
  // All samples identical: extra components end up empty at some point or
  // mirror the first; the fit must still finish with a valid simplex.
  GmmBatch b;
  for (int n = 0; n < 10; ++n) {
    b.values.push_back(Matrix::Constant(1, 4, 2.0));
    b.masks.push_back(Mask::Ones(1, 4));
  }
  const GmmFit fit = fit_diaggmm(b, 3, make_prior(1), Vector::Constant(1, 2.0), Vector::Ones(1), 1);
  EXPECT_NEAR(fit.params.weights.sum(), 1.0, 1e-12);
  EXPECT_TRUE(fit.posteriors.allFinite());
}

TEST(TckTrain, GramProperties) {
  const Cohort c = synthetic(10, 30, 4, 12, 0.3, 8);
  TckOptions opt;
  opt.Q = 4;
  opt.seed = 3;
  const auto r = tck_train(c, opt);
  const Matrix& K = r.kernel.gram;
  EXPECT_EQ(static_cast<int>(r.model.members.size()), opt.Q * (r.model.C - 1));
  EXPECT_EQ(r.model.C, default_tck_components(c.size()));
  for (Eigen::Index i = 0; i < K.rows(); ++i) EXPECT_EQ(K(i, i), 1.0);
  EXPECT_GE(K.minCoeff(), 0.0);
  EXPECT_LE(K.maxCoeff(), 1.0);
  EXPECT_TRUE(check_kernel(K).ok());
  for (const auto& m : r.model.members) {
    EXPECT_GE(m.segment_length, 6);
    EXPECT_LE(m.segment_length, 12);
    EXPECT_GE(m.attributes.size(), 2u);
    EXPECT_GE(m.train_subset.size(), 32u);
    EXPECT_NEAR(m.params.weights.sum(), 1.0, 1e-12);
    for (Eigen::Index n = 0; n < m.train_posteriors.rows(); ++n)
      EXPECT_NEAR(m.train_posteriors.row(n).sum(), 1.0, 1e-9);
  }
}

TEST(TckTrain, DefaultComponentCount) {
  EXPECT_EQ(default_tck_components(10), 3);
  EXPECT_EQ(default_tck_components(160), 9);
  EXPECT_EQ(default_tck_components(5000), 40);
}

TEST(TckTrain, IdenticalSamplesGiveAllOnes) {
  std::vector<Matrix> xs(6, Matrix::Constant(2, 8, 1.0));
  for (int i = 0; i < 6; ++i) xs[i](0, 0) = 1.0;
  std::vector<MTSample> samples;
  for (int i = 0; i < 6; ++i) samples.push_back(make_sample("s" + std::to_string(i), xs[i]));
  const Cohort c({"a", "b"}, 8, std::move(samples));
  TckOptions opt;
  opt.Q = 1;
  opt.C = 2;
  const auto r = tck_train(c, opt);
  EXPECT_LT((r.kernel.gram - Matrix::Ones(6, 6)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TckTrain, DeterministicAcrossWorkerCounts) {
  const Cohort c = synthetic(8, 22, 3, 10, 0.3, 9);
  TckOptions opt;
  opt.Q = 3;
  opt.seed = 77;
  opt.workers = 1;
  const auto a = tck_train(c, opt);
  opt.workers = 4;
  const auto b = tck_train(c, opt);
  EXPECT_TRUE(a.kernel.gram == b.kernel.gram);
}

TEST(TckTest, TrainAsTestReproducesTheGram) {
  const Cohort c = synthetic(8, 22, 3, 10, 0.4, 10);
  TckOptions opt;
  opt.Q = 3;
  const auto r = tck_train(c, opt);
  const Matrix cross = tck_test(r.model, c);
  EXPECT_LT((cross - r.kernel.gram).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TckTest, FullyMissingTestSampleIsWellDefined) {
  const Cohort train = synthetic(8, 22, 3, 10, 0.2, 11);
  TckOptions opt;
  opt.Q = 3;
  const auto r = tck_train(train, opt);
  // Only the last two days observed: most members see nothing of it.
  Matrix v = Matrix::Zero(3, 10);
  Mask m = Mask::Zero(3, 10);
  m(0, 9) = m(1, 9) = 1;
  const Cohort test(train.attribute_names(), 10, {make_sample("x", v, 0, &m)});
  const Matrix cross = tck_test(r.model, test);
  EXPECT_TRUE(cross.allFinite());
  EXPECT_GE(cross.minCoeff(), 0.0);
  EXPECT_LE(cross.maxCoeff(), 1.0 + 1e-12);
}

TEST(TckTest, ShapeMismatchIsAnError) {
  const Cohort train = synthetic(8, 22, 3, 10, 0.0, 12);
  TckOptions opt;
  opt.Q = 1;
  const auto r = tck_train(train, opt);
  EXPECT_THROW(tck_test(r.model, synthetic(2, 2, 4, 10, 0.0, 1)), Error);
}

TEST(TckModelIo, RoundTripGivesIdenticalCrossKernel) {
  const Cohort c = synthetic(8, 22, 3, 10, 0.3, 13);
  const auto [train, test] = train_test_split(c, 0.8, 1);
  TckOptions opt;
  opt.Q = 2;
  const auto r = tck_train(train, opt);
  std::stringstream buf;
  write_tck_model(buf, r.model);
  const TckModel back = read_tck_model(buf);
  EXPECT_TRUE(tck_test(back, test) == tck_test(r.model, test));
  std::istringstream bad(R"({"format":"something-else","version":1})");
  EXPECT_THROW(read_tck_model(bad), Error);
}
