#include "mtsk/lps.hpp"

#include "mtsk/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace mtsk {

SegmentMatrix build_segment_matrix(const MTSample& x, int segment_length, int lag,
                                   int predictor_attribute, int target_attribute) {
  const int T = static_cast<int>(x.length());
  if (segment_length < 1 || lag < 1) throw Error("segment length and lag must be >= 1");
  if (segment_length + lag > T)
    throw Error("segment length " + std::to_string(segment_length) + " plus lag " +
                std::to_string(lag) + " exceeds series length " + std::to_string(T));
  if (predictor_attribute < 0 || predictor_attribute >= x.attributes() ||
      target_attribute < 0 || target_attribute >= x.attributes())
    throw Error("segment attribute out of range");

  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  SegmentMatrix s;
  s.rows = T - segment_length - lag + 1;
  s.segment_length = segment_length;
  s.predictors.resize(static_cast<std::size_t>(s.rows) * segment_length);
  s.predictor_observed.resize(s.predictors.size());
  s.target.resize(s.rows);
  s.target_observed.resize(s.rows);
  for (int t = 0; t < s.rows; ++t) {
    for (int j = 0; j < segment_length; ++j) {
      const bool obs = x.observed(predictor_attribute, t + j);
      s.predictor_observed[t * segment_length + j] = obs;
      s.predictors[t * segment_length + j] = obs ? x.values(predictor_attribute, t + j) : nan;
    }
    const int tt = t + segment_length + lag - 1;
    const bool obs = x.observed(target_attribute, tt);
    s.target_observed[t] = obs;
    s.target[t] = obs ? x.values(target_attribute, tt) : nan;
  }
  return s;
}

int LpsTree::depth() const {
  // Iterative depth over the implicit tree.
  int best = 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [node, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (nodes[node].feature >= 0) {
      stack.push_back({nodes[node].left, d + 1});
      stack.push_back({nodes[node].right, d + 1});
    }
  }
  return best;
}

int LpsTree::route(const SegmentMatrix& segments, int row) const {
  int node = 0;
  while (nodes[node].feature >= 0) {
    const LpsNode& n = nodes[node];
    bool go_left;
    if (segments.predictor_present(row, n.feature))
      go_left = segments.predictor(row, n.feature) <= n.threshold;
    else
      go_left = n.missing_goes_left;
    node = go_left ? n.left : n.right;
  }
  return nodes[node].leaf;
}

std::size_t LpsForest::representation_size() const {
  std::size_t total = 0;
  for (const auto& t : trees) total += static_cast<std::size_t>(t.leaves);
  return total;
}

namespace {

struct RowRef {
  int sample;
  int row;
};

class TreeGrower {
 public:
  TreeGrower(LpsTree& tree, const std::vector<SegmentMatrix>& segments,
             const LpsOptions& options, Rng& rng)
      : tree_(tree), segments_(segments), options_(options), rng_(rng) {}

  void grow(std::vector<RowRef> rows) {
    tree_.nodes.clear();
    tree_.leaves = 0;
    grow_node(std::move(rows), 0);
  }

 private:
  double value(const RowRef& r, int j) const { return segments_[r.sample].predictor(r.row, j); }
  bool present(const RowRef& r, int j) const {
    return segments_[r.sample].predictor_present(r.row, j);
  }
  double target(const RowRef& r) const { return segments_[r.sample].target[r.row]; }

  int make_leaf(int index) {
    tree_.nodes[index].feature = -1;
    tree_.nodes[index].leaf = tree_.leaves++;
    return index;
  }

  int grow_node(std::vector<RowRef> rows, int depth) {
    const int index = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    if (depth >= options_.max_depth ||
        static_cast<int>(rows.size()) < options_.min_split_rows)
      return make_leaf(index);

    const int feature =
        std::uniform_int_distribution<int>(0, tree_.segment_length - 1)(rng_);
    std::vector<std::pair<double, double>> obs;  // (feature value, target)
    std::vector<RowRef> missing;
    for (const auto& r : rows) {
      if (present(r, feature)) obs.emplace_back(value(r, feature), target(r));
      else missing.push_back(r);
    }
    if (obs.size() < 2) return make_leaf(index);
    std::sort(obs.begin(), obs.end());

    const std::size_t n = obs.size();
    std::vector<double> csum(n + 1, 0.0), csum2(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      csum[i + 1] = csum[i] + obs[i].second;
      csum2[i + 1] = csum2[i] + obs[i].second * obs[i].second;
    }
    auto sse = [&](std::size_t lo, std::size_t hi) {
      const double k = static_cast<double>(hi - lo);
      if (k == 0) return 0.0;
      const double s = csum[hi] - csum[lo];
      return std::max(0.0, (csum2[hi] - csum2[lo]) - s * s / k);
    };
    const double parent = sse(0, n);

    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    double best_gain = 0.0, best_threshold = 0.0;
    std::size_t best_split = 0;
    for (int c = 0; c < options_.threshold_candidates; ++c) {
      const double thr = obs[pick(rng_)].first;
      const auto split = static_cast<std::size_t>(
          std::upper_bound(obs.begin(), obs.end(), thr,
                           [](double v, const auto& p) { return v < p.first; }) -
          obs.begin());
      if (split == 0 || split == n) continue;
      const double gain = parent - sse(0, split) - sse(split, n);
      if (gain > best_gain) {
        best_gain = gain;
        best_threshold = thr;
        best_split = split;
      }
    }
    if (!(best_gain > 1e-12 * std::max(1.0, parent))) return make_leaf(index);

    const bool missing_left = best_split >= n - best_split;
    std::vector<RowRef> left, right;
    for (const auto& r : rows) {
      const bool go_left = present(r, feature) ? value(r, feature) <= best_threshold : missing_left;
      (go_left ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    tree_.nodes[index].feature = feature;
    tree_.nodes[index].threshold = best_threshold;
    tree_.nodes[index].missing_goes_left = missing_left;
    const int l = grow_node(std::move(left), depth + 1);
    const int r = grow_node(std::move(right), depth + 1);
    tree_.nodes[index].left = l;
    tree_.nodes[index].right = r;
    return index;
  }

  LpsTree& tree_;
  const std::vector<SegmentMatrix>& segments_;
  const LpsOptions& options_;
  Rng& rng_;
};

}  // namespace

LpsForest lps_train(const Cohort& train, const LpsOptions& options) {
  if (options.trees < 1) throw Error("LPS needs at least one tree");
  if (train.size() < 2) throw Error("LPS needs at least two training samples");
  if (options.max_depth < 0) throw Error("LPS max depth must be >= 0");
  const int T = train.window_length();
  const int V = train.attributes();
  if (T < 2) throw Error("LPS needs series of length >= 2");

  const int l_min = std::max(1, static_cast<int>(std::ceil(options.min_segment_fraction * T)));
  const int l_max = std::max(l_min, static_cast<int>(std::ceil(options.max_segment_fraction * T)));
  const int p_max = std::max(1, static_cast<int>(std::ceil(options.max_lag_fraction * T)));

  LpsForest forest;
  forest.attributes = V;
  forest.window_length = T;
  forest.trees.resize(options.trees);

  parallel_for(forest.trees.size(), options.workers, [&](std::size_t j) {
    Rng rng(derive_seed(options.seed, {static_cast<std::uint64_t>(j)}));
    LpsTree& tree = forest.trees[j];
    tree.segment_length = std::uniform_int_distribution<int>(l_min, l_max)(rng);
    tree.lag = std::uniform_int_distribution<int>(1, p_max)(rng);
    if (tree.segment_length + tree.lag > T) tree.segment_length = T - tree.lag;
    tree.predictor_attribute = std::uniform_int_distribution<int>(0, V - 1)(rng);
    tree.target_attribute = std::uniform_int_distribution<int>(0, V - 1)(rng);

    std::vector<SegmentMatrix> segments;
    segments.reserve(train.size());
    std::vector<RowRef> rows;
    for (std::size_t n = 0; n < train.size(); ++n) {
      segments.push_back(build_segment_matrix(train[n], tree.segment_length, tree.lag,
                                              tree.predictor_attribute,
                                              tree.target_attribute));
      for (int r = 0; r < segments.back().rows; ++r)
        if (segments.back().target_observed[r]) rows.push_back({static_cast<int>(n), r});
    }
    TreeGrower(tree, segments, options, rng).grow(std::move(rows));
  });
  return forest;
}

BagRepresentation lps_represent(const LpsForest& forest, const MTSample& x) {
  if (x.attributes() != forest.attributes || x.length() != forest.window_length)
    throw Error("LPS: sample shape does not match the forest");
  BagRepresentation h = BagRepresentation::Zero(
      static_cast<Eigen::Index>(forest.representation_size()));
  Eigen::Index offset = 0;
  for (const auto& tree : forest.trees) {
    const SegmentMatrix s = build_segment_matrix(x, tree.segment_length, tree.lag,
                                                 tree.predictor_attribute,
                                                 tree.target_attribute);
    if (s.rows < 1) throw Error("LPS: no segment rows; use a longer window");
    for (int r = 0; r < s.rows; ++r) ++h(offset + tree.route(s, r));
    offset += tree.leaves;
  }
  return h;
}

double lps_kernel(const BagRepresentation& a, const BagRepresentation& b,
                  std::size_t total_terminals) {
  if (a.size() != b.size()) throw Error("LPS representations differ in length");
  if (total_terminals == 0) throw Error("LPS normalizer must be positive");
  return static_cast<double>(a.cwiseMin(b).sum()) / static_cast<double>(total_terminals);
}

KernelMatrix lps_gram(const LpsForest& forest, const Cohort& train, const Cohort* test,
                      int workers) {
  const auto N = static_cast<Eigen::Index>(train.size());
  const auto M = test ? static_cast<Eigen::Index>(test->size()) : 0;
  const std::size_t R = forest.representation_size();
  std::vector<BagRepresentation> htrain(N), htest(M);
  parallel_for(N, workers, [&](std::size_t i) { htrain[i] = lps_represent(forest, train[i]); });
  if (test)
    parallel_for(M, workers, [&](std::size_t i) { htest[i] = lps_represent(forest, (*test)[i]); });

  KernelMatrix k;
  k.method_tag = "lps";
  k.gram.resize(N, N);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = i; j < N; ++j) k.gram(i, j) = k.gram(j, i) = lps_kernel(htrain[i], htrain[j], R);
  if (test) {
    Matrix cross(N, M);
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index j = 0; j < M; ++j) cross(i, j) = lps_kernel(htrain[i], htest[j], R);
    k.cross = std::move(cross);
  }
  return k;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

using nlohmann::json;
constexpr const char* kLpsFormat = "mtsk-lps-forest";
constexpr int kLpsVersion = 1;

}  // namespace

void write_lps_forest(std::ostream& out, const LpsForest& forest) {
  json trees = json::array();
  for (const auto& t : forest.trees) {
    json nodes = json::array();
    for (const auto& n : t.nodes)
      nodes.push_back({n.feature, n.threshold, n.left, n.right, n.missing_goes_left, n.leaf});
    trees.push_back({{"segment_length", t.segment_length},
                     {"lag", t.lag},
                     {"predictor_attribute", t.predictor_attribute},
                     {"target_attribute", t.target_attribute},
                     {"leaves", t.leaves},
                     {"nodes", std::move(nodes)}});
  }
  json doc = {{"format", kLpsFormat},
              {"version", kLpsVersion},
              {"attributes", forest.attributes},
              {"window_length", forest.window_length},
              {"trees", std::move(trees)}};
  out << doc.dump() << '\n';
}

LpsForest read_lps_forest(std::istream& in) {
  try {
    json doc = json::parse(in);
    if (doc.at("format").get<std::string>() != kLpsFormat) throw Error("not an LPS forest file");
    if (doc.at("version").get<int>() != kLpsVersion)
      throw Error("unsupported LPS forest version " + doc.at("version").dump());
    LpsForest forest;
    forest.attributes = doc.at("attributes");
    forest.window_length = doc.at("window_length");
    for (const auto& j : doc.at("trees")) {
      LpsTree t;
      t.segment_length = j.at("segment_length");
      t.lag = j.at("lag");
      t.predictor_attribute = j.at("predictor_attribute");
      t.target_attribute = j.at("target_attribute");
      t.leaves = j.at("leaves");
      for (const auto& n : j.at("nodes"))
        t.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                           n.at(3).get<int>(), n.at(4).get<bool>(), n.at(5).get<int>()});
      forest.trees.push_back(std::move(t));
    }
    return forest;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed LPS forest file: ") + e.what());
  }
}

void save_lps_forest(const std::filesystem::path& path, const LpsForest& forest) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_lps_forest(out, forest);
}

LpsForest load_lps_forest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_lps_forest(in);
}

}  // namespace mtsk
