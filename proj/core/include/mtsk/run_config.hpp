#pragma once

#include "mtsk/cohort.hpp"
#include "mtsk/experiment.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace mtsk {

/// Synthetic cohort settings used when a run config has no input file.
struct SyntheticSource {
  SyntheticSpec cohort;
  std::optional<MissingnessSpec> missingness;
};

/// Parsed `run` configuration. Exactly one of `input` or `synthetic` is set.
struct RunConfig {
  std::optional<std::filesystem::path> input;
  std::optional<SyntheticSource> synthetic;
  std::filesystem::path output_dir = "results";
  ExperimentConfig experiment;
};

/// Reads a JSON run config. Unknown keys and bad values are reported together
/// in one Error. Relative paths resolve against `base_dir`.
RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Seed of the missingness draw that accompanies a synthetic cohort seed.
std::uint64_t missingness_seed(std::uint64_t cohort_seed);

/// Loads or generates the cohort described by the config.
Cohort materialize_cohort(const RunConfig& config);

}  // namespace mtsk
