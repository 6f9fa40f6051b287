#pragma once

#include <mtsk/cohort.hpp>

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace mtsk::testing {

inline MTSample make_sample(std::string id, const Matrix& values, std::optional<int> label = {},
                            const Mask* mask = nullptr) {
  MTSample s;
  s.id = std::move(id);
  s.values = values;
  s.mask = mask ? *mask : Mask::Ones(values.rows(), values.cols());
  s.label = label;
  return s;
}

inline Cohort make_cohort(const std::vector<Matrix>& values, const std::vector<int>& labels = {}) {
  std::vector<MTSample> samples;
  for (std::size_t i = 0; i < values.size(); ++i)
    samples.push_back(make_sample("s" + std::to_string(i), values[i],
                                  labels.empty() ? std::nullopt : std::optional<int>(labels[i])));
  std::vector<std::string> names;
  for (Eigen::Index v = 0; v < values.at(0).rows(); ++v) names.push_back("a" + std::to_string(v));
  return Cohort(names, static_cast<int>(values.at(0).cols()), std::move(samples));
}

/// Synthetic cohort with optional MCAR/MAR/MNAR masking.
inline Cohort synthetic(int cases, int controls, int attrs, int days, double rate,
                        std::uint64_t seed, Mechanism mech = Mechanism::MCAR,
                        double effect = 1.5) {
  SyntheticSpec spec;
  spec.n_cases = cases;
  spec.n_controls = controls;
  spec.attributes = attrs;
  spec.days = days;
  spec.effect_size = effect;
  spec.seed = seed;
  Cohort c = generate_synthetic_cohort(spec);
  if (rate > 0) c = apply_missingness(c, {mech, rate, seed + 1000});
  return c;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = normal(rng);
  return m;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mtsk_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace mtsk::testing
