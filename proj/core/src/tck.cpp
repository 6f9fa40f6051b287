#include "mtsk/tck.hpp"

#include "mtsk/common.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

namespace mtsk {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kEmptyComponent = 1e-8;
constexpr int kMemberAttempts = 3;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  if (m == kNegInf || std::isnan(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

Matrix smoothed_mean_curve(const GmmBatch& batch, int width, const Vector& fallback) {
  if (batch.size() == 0) throw Error("smoothed_mean_curve: empty batch");
  if (width < 1) throw Error("smoothing width must be >= 1");
  const Eigen::Index V = batch.values[0].rows(), T = batch.values[0].cols();
  Matrix sum = Matrix::Zero(V, T), count = Matrix::Zero(V, T);
  for (std::size_t n = 0; n < batch.size(); ++n)
    for (Eigen::Index t = 0; t < T; ++t)
      for (Eigen::Index v = 0; v < V; ++v)
        if (batch.masks[n](v, t)) {
          sum(v, t) += batch.values[n](v, t);
          count(v, t) += 1;
        }
  Matrix out(V, T);
  const double inv = 1.0 / (2.0 * width * width);
  for (Eigen::Index v = 0; v < V; ++v)
    for (Eigen::Index t = 0; t < T; ++t) {
      double num = 0, den = 0;
      for (Eigen::Index s = 0; s < T; ++s) {
        const double w = std::exp(-static_cast<double>((t - s) * (t - s)) * inv);
        num += w * sum(v, s);
        den += w * count(v, s);
      }
      out(v, t) = den > 0 ? num / den : fallback(v);
    }
  return out;
}

Vector diaggmm_log_joint(const DiagGmmParams& params, const Matrix& values, const Mask& mask) {
  const int G = params.components();
  const Eigen::Index V = values.rows(), T = values.cols();
  Vector out(G);
  for (int g = 0; g < G; ++g) {
    const Matrix& mu = params.means[g];
    if (mu.rows() != V || mu.cols() != T) throw Error("GMM mean shape mismatch");
    double acc = std::log(params.weights(g));
    for (Eigen::Index v = 0; v < V; ++v) {
      const double var = params.variances(g, v);
      const double log_norm = -0.5 * (kLog2Pi + std::log(var));
      const double inv2 = 0.5 / var;
      for (Eigen::Index t = 0; t < T; ++t)
        if (mask(v, t)) {
          const double d = values(v, t) - mu(v, t);
          acc += log_norm - d * d * inv2;
        }
    }
    out(g) = acc;
  }
  return out;
}

Vector diaggmm_posterior(const DiagGmmParams& params, const Matrix& values, const Mask& mask) {
  Vector lj = diaggmm_log_joint(params, values, mask);
  const double lse = log_sum_exp(lj);
  if (!std::isfinite(lse)) {
    spdlog::warn("all mixture components underflow; using a uniform posterior");
    return Vector::Constant(lj.size(), 1.0 / static_cast<double>(lj.size()));
  }
  return (lj.array() - lse).exp();
}

namespace {

double log_prior(const DiagGmmParams& params, const GmmPrior& prior, const Matrix& prior_mean) {
  double acc = 0;
  for (int g = 0; g < params.components(); ++g)
    for (Eigen::Index v = 0; v < params.variances.cols(); ++v) {
      const double var = params.variances(g, v);
      const double dev = (params.means[g].row(v) - prior_mean.row(v)).squaredNorm();
      acc += -prior.a0 * std::log(var) - (prior.b0(v) + 0.5 * prior.strength * dev) / var;
    }
  return acc;
}

void validate_batch(const GmmBatch& batch) {
  if (batch.size() == 0) throw Error("GMM fit needs at least one sample");
  if (batch.masks.size() != batch.values.size()) throw Error("GMM batch size mismatch");
  const auto V = batch.values[0].rows(), T = batch.values[0].cols();
  for (std::size_t n = 0; n < batch.size(); ++n)
    if (batch.values[n].rows() != V || batch.values[n].cols() != T ||
        batch.masks[n].rows() != V || batch.masks[n].cols() != T)
      throw Error("GMM batch samples differ in shape");
}

Matrix shrunk_curve(const Matrix& x, const Mask& r, const Matrix& prior_mean, double strength) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index v = 0; v < x.rows(); ++v)
    for (Eigen::Index t = 0; t < x.cols(); ++t)
      out(v, t) = r(v, t) ? (x(v, t) + strength * prior_mean(v, t)) / (1.0 + strength)
                          : prior_mean(v, t);
  return out;
}

}  // namespace

double map_objective(const DiagGmmParams& params, const GmmBatch& batch, const GmmPrior& prior,
                     const Matrix& prior_mean) {
  double ll = 0;
  for (std::size_t n = 0; n < batch.size(); ++n)
    ll += log_sum_exp(diaggmm_log_joint(params, batch.values[n], batch.masks[n]));
  return ll + log_prior(params, prior, prior_mean);
}

GmmFit fit_diaggmm(const GmmBatch& batch, int components, const GmmPrior& prior,
                   const Vector& attribute_mean, const Vector& attribute_variance,
                   std::uint64_t seed, const FitOptions& options) {
  validate_batch(batch);
  if (components < 1) throw Error("GMM needs at least one component");
  const int G = components;
  const auto N = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index V = batch.values[0].rows(), T = batch.values[0].cols();
  if (prior.b0.size() != V || prior.variance_floor.size() != V ||
      attribute_mean.size() != V || attribute_variance.size() != V)
    throw Error("GMM prior dimensions do not match the batch");
  if (!(prior.strength > 0) || !(prior.a0 > 0) || (prior.variance_floor.array() <= 0).any())
    throw Error("invalid GMM prior hyperparameters");

  Rng rng(seed);
  GmmFit fit;
  fit.prior_mean = smoothed_mean_curve(batch, prior.smoothing_width, attribute_mean);
  const Matrix& m = fit.prior_mean;
  const double lambda = prior.strength;

  // Initialization.
  DiagGmmParams& p = fit.params;
  p.weights = Vector::Constant(G, 1.0 / G);
  p.means.resize(G);
  p.variances.resize(G, V);
  std::vector<Eigen::Index> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (int g = 0; g < G; ++g) {
    const auto n = order[g % N];
    p.means[g] = shrunk_curve(batch.values[n], batch.masks[n], m, lambda);
    for (Eigen::Index v = 0; v < V; ++v)
      p.variances(g, v) = std::max(attribute_variance(v), prior.variance_floor(v));
  }

  std::vector<bool> reseeded_once(G, false);
  bool reseed_last_mstep = false;
  Matrix& post = fit.posteriors;
  post.resize(N, G);
  std::uniform_int_distribution<Eigen::Index> pick(0, N - 1);

  for (int it = 0;; ++it) {
    // E-step.
    double ll = 0;
    for (Eigen::Index n = 0; n < N; ++n) {
      Vector lj = diaggmm_log_joint(p, batch.values[n], batch.masks[n]);
      const double lse = log_sum_exp(lj);
      if (!std::isfinite(lse)) throw Error("GMM likelihood is not finite");
      ll += lse;
      post.row(n) = (lj.array() - lse).exp().transpose();
    }
    const double obj = ll + log_prior(p, prior, m);
    if (!std::isfinite(obj)) throw Error("GMM objective is not finite");

    if (!fit.objective.empty()) {
      const double prev = fit.objective.back();
      const double scale = std::max(1.0, std::abs(prev));
      if (options.verify_monotone && !reseed_last_mstep && obj < prev - 1e-10 * scale)
        throw Error("MAP-EM objective decreased");
      fit.objective.push_back(obj);
      if (!reseed_last_mstep && obj - prev < options.tol * scale) {
        fit.converged = true;
        break;
      }
    } else {
      fit.objective.push_back(obj);
    }
    if (it >= options.max_iter) break;

    // M-step.
    reseed_last_mstep = false;
    const Vector nk = post.colwise().sum().transpose();
    p.weights = nk / static_cast<double>(N);
    for (int g = 0; g < G; ++g) {
      if (nk(g) < kEmptyComponent && G > 1) {
        if (!reseeded_once[g]) {
          reseeded_once[g] = true;
          reseed_last_mstep = true;
          fit.reseeded.push_back(it);
          const auto n = pick(rng);
          p.means[g] = shrunk_curve(batch.values[n], batch.masks[n], m, lambda);
          for (Eigen::Index v = 0; v < V; ++v)
            p.variances(g, v) = std::max(attribute_variance(v), prior.variance_floor(v));
          p.weights(g) = 1.0 / G;
          continue;
        }
        spdlog::debug("GMM component {} empty again after re-seeding; keeping it", g);
      }
      Matrix num = Matrix::Zero(V, T), den = Matrix::Zero(V, T);
      for (Eigen::Index n = 0; n < N; ++n) {
        const double w = post(n, g);
        const Matrix& x = batch.values[n];
        const Mask& r = batch.masks[n];
        for (Eigen::Index t = 0; t < T; ++t)
          for (Eigen::Index v = 0; v < V; ++v)
            if (r(v, t)) {
              num(v, t) += w * x(v, t);
              den(v, t) += w;
            }
      }
      Matrix& mu = p.means[g];
      mu = (num + lambda * m).cwiseQuotient((den.array() + lambda).matrix());

      Vector sse = Vector::Zero(V), cnt = Vector::Zero(V);
      for (Eigen::Index n = 0; n < N; ++n) {
        const double w = post(n, g);
        const Matrix& x = batch.values[n];
        const Mask& r = batch.masks[n];
        for (Eigen::Index t = 0; t < T; ++t)
          for (Eigen::Index v = 0; v < V; ++v)
            if (r(v, t)) {
              const double d = x(v, t) - mu(v, t);
              sse(v) += w * d * d;
              cnt(v) += w;
            }
      }
      for (Eigen::Index v = 0; v < V; ++v) {
        const double dev = (mu.row(v) - m.row(v)).squaredNorm();
        const double var = (sse(v) + lambda * dev + 2.0 * prior.b0(v)) / (cnt(v) + 2.0 * prior.a0);
        p.variances(g, v) = std::max(var, prior.variance_floor(v));
      }
    }
    if (reseed_last_mstep) p.weights /= p.weights.sum();
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Ensemble

int default_tck_components(std::size_t n) {
  const int c = static_cast<int>((n + 24) / 25) + 2;
  return std::min(40, std::max(2, c));
}

void restrict_sample(const MTSample& sample, const TckMember& member, Matrix& values,
                     Mask& mask) {
  const auto nv = static_cast<Eigen::Index>(member.attributes.size());
  values.resize(nv, member.segment_length);
  mask.resize(nv, member.segment_length);
  for (Eigen::Index i = 0; i < nv; ++i) {
    const int v = member.attributes[i];
    values.row(i) = sample.values.row(v).segment(member.segment_start, member.segment_length);
    mask.row(i) = sample.mask.row(v).segment(member.segment_start, member.segment_length);
  }
}

namespace {

struct AttributeStats {
  Vector mean;
  Vector variance;
};

AttributeStats attribute_stats(const Cohort& c) {
  const int V = c.attributes();
  AttributeStats s{Vector::Zero(V), Vector::Ones(V)};
  for (int v = 0; v < V; ++v) {
    double sum = 0, sum2 = 0, n = 0;
    for (const auto& x : c.samples())
      for (Eigen::Index t = 0; t < x.length(); ++t)
        if (x.observed(v, t)) {
          sum += x.values(v, t);
          sum2 += x.values(v, t) * x.values(v, t);
          n += 1;
        }
    if (n > 0) s.mean(v) = sum / n;
    if (n > 1) {
      const double var = (sum2 - n * s.mean(v) * s.mean(v)) / (n - 1);
      if (var > 1e-12 * (1.0 + s.mean(v) * s.mean(v))) s.variance(v) = var;
    }
  }
  return s;
}

std::vector<int> random_subset(int n, int k, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

TckMember build_member(const Cohort& train, const AttributeStats& stats, const TckOptions& opt,
                       int q1, int q2, std::uint64_t seed) {
  Rng rng(seed);
  const int N = static_cast<int>(train.size());
  const int V = train.attributes();
  const int T = train.window_length();
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  TckMember m;
  m.init_index = q1;
  m.components = q2;

  // Prior hyperparameters.
  m.prior.strength = std::exp(uniform(std::log(0.1), std::log(10.0)));
  m.prior.smoothing_width = uniform_int(1, 3);
  m.prior.a0 = uniform(0.01, 1.0);
  const double b0_factor = uniform(0.01, 0.1);

  // Time segment, attributes, samples.
  const int t_min = std::min(opt.min_segment_length, T);
  m.segment_length = uniform_int(t_min, T);
  m.segment_start = uniform_int(0, T - m.segment_length);
  const int v_min = std::min(opt.min_attributes, V);
  m.attributes = random_subset(V, uniform_int(v_min, V), rng);
  const int n_min = std::min(N, static_cast<int>(std::ceil(opt.min_subset_fraction * N)));
  m.train_subset = random_subset(N, uniform_int(n_min, N), rng);

  const auto nv = static_cast<Eigen::Index>(m.attributes.size());
  Vector mean(nv), var(nv);
  m.prior.b0.resize(nv);
  m.prior.variance_floor.resize(nv);
  for (Eigen::Index i = 0; i < nv; ++i) {
    mean(i) = stats.mean(m.attributes[i]);
    var(i) = stats.variance(m.attributes[i]);
    m.prior.b0(i) = b0_factor * var(i);
    m.prior.variance_floor(i) = 1e-4 * var(i);
  }

  GmmBatch batch;
  batch.values.resize(m.train_subset.size());
  batch.masks.resize(m.train_subset.size());
  for (std::size_t i = 0; i < m.train_subset.size(); ++i)
    restrict_sample(train[m.train_subset[i]], m, batch.values[i], batch.masks[i]);

  GmmFit fit = fit_diaggmm(batch, q2, m.prior, mean, var, rng(), opt.fit);
  m.params = std::move(fit.params);

  m.train_posteriors.resize(N, q2);
  Matrix x;
  Mask r;
  for (int n = 0; n < N; ++n) {
    restrict_sample(train[n], m, x, r);
    m.train_posteriors.row(n) = diaggmm_posterior(m.params, x, r).transpose();
  }
  if (!m.train_posteriors.allFinite()) throw Error("non-finite posteriors");
  return m;
}

Matrix normalized_rows(const Matrix& p) {
  Matrix out = p;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm > 0) out.row(i) /= norm;
  }
  return out;
}

}  // namespace

TckTrainResult tck_train(const Cohort& train, const TckOptions& options) {
  const std::size_t N = train.size();
  if (N < 2) throw Error("TCK needs at least two training samples");
  if (options.Q < 1) throw Error("TCK needs Q >= 1");
  const int C = options.C.value_or(default_tck_components(N));
  if (C < 2) throw Error("TCK needs C >= 2");
  if (train.window_length() < 1 || train.attributes() < 1) throw Error("TCK: empty samples");

  const AttributeStats stats = attribute_stats(train);
  struct Slot {
    int q1, q2;
    std::optional<TckMember> member;
  };
  std::vector<Slot> slots;
  for (int q1 = 1; q1 <= options.Q; ++q1)
    for (int q2 = 2; q2 <= C; ++q2) slots.push_back({q1, q2, std::nullopt});

  parallel_for(slots.size(), options.workers, [&](std::size_t i) {
    Slot& s = slots[i];
    for (int attempt = 0; attempt < kMemberAttempts; ++attempt) {
      try {
        const auto seed = derive_seed(options.seed, {static_cast<std::uint64_t>(s.q1),
                                                     static_cast<std::uint64_t>(s.q2),
                                                     static_cast<std::uint64_t>(attempt)});
        s.member = build_member(train, stats, options, s.q1, s.q2, seed);
        return;
      } catch (const Error& e) {
        spdlog::warn("TCK member ({}, {}) attempt {} failed: {}", s.q1, s.q2, attempt + 1,
                     e.what());
      }
    }
  });

  TckTrainResult result;
  TckModel& model = result.model;
  model.Q = options.Q;
  model.C = C;
  model.attributes = train.attributes();
  model.window_length = train.window_length();
  model.train_size = N;

  const auto n = static_cast<Eigen::Index>(N);
  Matrix K = Matrix::Zero(n, n);
  for (auto& s : slots) {
    if (!s.member) {
      spdlog::warn("TCK member ({}, {}) skipped", s.q1, s.q2);
      continue;
    }
    K.selfadjointView<Eigen::Lower>().rankUpdate(normalized_rows(s.member->train_posteriors));
    model.members.push_back(std::move(*s.member));
  }
  if (model.members.empty()) throw Error("every TCK member failed");
  K /= static_cast<double>(model.members.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    K(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      K(i, j) = std::clamp(K(i, j), 0.0, 1.0);
      K(j, i) = K(i, j);
    }
  }
  result.kernel.gram = std::move(K);
  result.kernel.method_tag = "tck";
  return result;
}

Matrix tck_test(const TckModel& model, const Cohort& test, int workers) {
  if (test.attributes() != model.attributes || test.window_length() != model.window_length)
    throw Error("TCK test cohort is " + std::to_string(test.attributes()) + "x" +
                std::to_string(test.window_length()) + ", model expects " +
                std::to_string(model.attributes) + "x" + std::to_string(model.window_length));
  if (model.members.empty()) throw Error("TCK model has no members");
  const auto N = static_cast<Eigen::Index>(model.train_size);
  const auto M = static_cast<Eigen::Index>(test.size());

  std::vector<Matrix> test_post(model.members.size());
  parallel_for(model.members.size(), workers, [&](std::size_t q) {
    const TckMember& member = model.members[q];
    Matrix p(M, member.components);
    Matrix x;
    Mask r;
    for (Eigen::Index m = 0; m < M; ++m) {
      restrict_sample(test[m], member, x, r);
      p.row(m) = diaggmm_posterior(member.params, x, r).transpose();
    }
    test_post[q] = normalized_rows(p);
  });

  Matrix K = Matrix::Zero(N, M);
  for (std::size_t q = 0; q < model.members.size(); ++q)
    K.noalias() += normalized_rows(model.members[q].train_posteriors) * test_post[q].transpose();
  K /= static_cast<double>(model.members.size());
  return K.cwiseMax(0.0).cwiseMin(1.0);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

using nlohmann::json;

constexpr const char* kTckFormat = "mtsk-tck-model";
constexpr int kTckVersion = 1;

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const auto& data = j.at("data");
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) = data.at(i).at(k).get<double>();
  return m;
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.begin(), v.end()); }

Vector vector_from_json(const json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void write_tck_model(std::ostream& out, const TckModel& model) {
  json members = json::array();
  for (const auto& m : model.members) {
    json means = json::array();
    for (const auto& mu : m.params.means) means.push_back(matrix_to_json(mu));
    members.push_back({
        {"q1", m.init_index},
        {"q2", m.components},
        {"segment_start", m.segment_start},
        {"segment_length", m.segment_length},
        {"attributes", m.attributes},
        {"train_subset", m.train_subset},
        {"prior",
         {{"strength", m.prior.strength},
          {"smoothing_width", m.prior.smoothing_width},
          {"a0", m.prior.a0},
          {"b0", vector_to_json(m.prior.b0)},
          {"variance_floor", vector_to_json(m.prior.variance_floor)}}},
        {"weights", vector_to_json(m.params.weights)},
        {"means", std::move(means)},
        {"variances", matrix_to_json(m.params.variances)},
        {"train_posteriors", matrix_to_json(m.train_posteriors)},
    });
  }
  json doc = {{"format", kTckFormat},         {"version", kTckVersion},
              {"Q", model.Q},                 {"C", model.C},
              {"attributes", model.attributes}, {"window_length", model.window_length},
              {"train_size", model.train_size}, {"members", std::move(members)}};
  out << doc.dump() << '\n';
}

TckModel read_tck_model(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(std::string("invalid TCK model file: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kTckFormat)
      throw Error("not a TCK model file");
    if (doc.at("version").get<int>() != kTckVersion)
      throw Error("unsupported TCK model version " + doc.at("version").dump());
    TckModel model;
    model.Q = doc.at("Q");
    model.C = doc.at("C");
    model.attributes = doc.at("attributes");
    model.window_length = doc.at("window_length");
    model.train_size = doc.at("train_size");
    for (const auto& j : doc.at("members")) {
      TckMember m;
      m.init_index = j.at("q1");
      m.components = j.at("q2");
      m.segment_start = j.at("segment_start");
      m.segment_length = j.at("segment_length");
      m.attributes = j.at("attributes").get<std::vector<int>>();
      m.train_subset = j.at("train_subset").get<std::vector<int>>();
      const auto& pr = j.at("prior");
      m.prior.strength = pr.at("strength");
      m.prior.smoothing_width = pr.at("smoothing_width");
      m.prior.a0 = pr.at("a0");
      m.prior.b0 = vector_from_json(pr.at("b0"));
      m.prior.variance_floor = vector_from_json(pr.at("variance_floor"));
      m.params.weights = vector_from_json(j.at("weights"));
      for (const auto& mu : j.at("means")) m.params.means.push_back(matrix_from_json(mu));
      m.params.variances = matrix_from_json(j.at("variances"));
      m.train_posteriors = matrix_from_json(j.at("train_posteriors"));
      model.members.push_back(std::move(m));
    }
    return model;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed TCK model file: ") + e.what());
  }
}

void save_tck_model(const std::filesystem::path& path, const TckModel& model) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_tck_model(out, model);
}

TckModel load_tck_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_tck_model(in);
}

}  // namespace mtsk
