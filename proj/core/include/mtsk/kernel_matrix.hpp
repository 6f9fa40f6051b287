#pragma once

#include "mtsk/cohort.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace mtsk {

/// Train Gram matrix with an optional train x test cross-kernel.
struct KernelMatrix {
  Matrix gram;
  std::optional<Matrix> cross;
  std::string method_tag;
};

struct KernelCheck {
  double asymmetry = 0;       // max |K - K^T| / max |K|
  double min_eigenvalue = 0;
  double trace = 0;
  bool symmetric = false;     // asymmetry <= 1e-12
  bool psd = false;           // min_eigenvalue >= -1e-8 * trace
  bool ok() const { return symmetric && psd; }
};

/// Symmetry and positive semi-definiteness diagnostics for a Gram matrix.
KernelCheck check_kernel(const Matrix& gram);

/// Dense CSV matrix: first line `method_tag,rows,cols`, then one row per line.
void write_matrix(std::ostream& out, const Matrix& m, const std::string& tag);
void save_matrix(const std::filesystem::path& path, const Matrix& m, const std::string& tag);
Matrix read_matrix(std::istream& in, std::string* tag = nullptr);
Matrix load_matrix(const std::filesystem::path& path, std::string* tag = nullptr);

}  // namespace mtsk
