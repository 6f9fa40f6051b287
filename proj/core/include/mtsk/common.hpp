#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mtsk {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

using Rng = std::mt19937_64;

/// Mixes a base seed with a sequence of integers (splitmix64 chain). Used to
/// give each independent work unit its own stream so results never depend on
/// scheduling.
std::uint64_t derive_seed(std::uint64_t base,
                          std::initializer_list<std::uint64_t> parts);

/// FNV-1a, for deriving seeds from names.
std::uint64_t hash_string(std::string_view text);

/// Worker count from MTSK_WORKERS, defaulting to 1.
int default_workers();

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions are
/// collected and the one thrown by the lowest index is rethrown.
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& fn);

/// Applies MTSK_LOG (trace|debug|info|warn|error|off) to the default logger
/// and routes it to stderr.
void configure_logging();

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);

}  // namespace mtsk
