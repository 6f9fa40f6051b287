#include "mtsk/kernel_matrix.hpp"

#include "mtsk/common.hpp"

#include <Eigen/Eigenvalues>

#include <charconv>
#include <fstream>
#include <sstream>

namespace mtsk {

KernelCheck check_kernel(const Matrix& gram) {
  if (gram.rows() != gram.cols()) throw Error("Gram matrix must be square");
  KernelCheck c;
  if (gram.size() == 0) {
    c.symmetric = c.psd = true;
    return c;
  }
  const double scale = std::max(gram.cwiseAbs().maxCoeff(), 1e-300);
  c.asymmetry = (gram - gram.transpose()).cwiseAbs().maxCoeff() / scale;
  c.trace = gram.trace();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (gram + gram.transpose()),
                                           Eigen::EigenvaluesOnly);
  c.min_eigenvalue = es.eigenvalues().minCoeff();
  c.symmetric = c.asymmetry <= 1e-12;
  c.psd = c.min_eigenvalue >= -1e-8 * std::abs(c.trace);
  return c;
}

void write_matrix(std::ostream& out, const Matrix& m, const std::string& tag) {
  out << tag << ',' << m.rows() << ',' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

void save_matrix(const std::filesystem::path& path, const Matrix& m, const std::string& tag) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write matrix file " + path.string());
  write_matrix(out, m, tag);
}

Matrix read_matrix(std::istream& in, std::string* tag) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing matrix header");
  std::stringstream header(line);
  std::string name, rows_s, cols_s;
  if (!std::getline(header, name, ',') || !std::getline(header, rows_s, ',') ||
      !std::getline(header, cols_s))
    throw ParseError(1, "matrix header must be 'method_tag,rows,cols'");
  Eigen::Index rows = 0, cols = 0;
  try {
    rows = std::stol(rows_s);
    cols = std::stol(cols_s);
  } catch (const std::exception&) {
    throw ParseError(1, "matrix header must be 'method_tag,rows,cols'");
  }
  if (tag) *tag = name;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (!std::getline(in, line))
      throw ParseError(static_cast<std::size_t>(i) + 2, "missing matrix row");
    const char* p = line.data();
    const char* end = p + line.size();
    for (Eigen::Index j = 0; j < cols; ++j) {
      auto [next, ec] = std::from_chars(p, end, m(i, j));
      if (ec != std::errc{})
        throw ParseError(static_cast<std::size_t>(i) + 2, "bad matrix entry");
      p = next;
      if (j + 1 < cols) {
        if (p == end || *p != ',')
          throw ParseError(static_cast<std::size_t>(i) + 2, "too few matrix columns");
        ++p;
      }
    }
  }
  return m;
}

Matrix load_matrix(const std::filesystem::path& path, std::string* tag) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open matrix file " + path.string());
  return read_matrix(in, tag);
}

}  // namespace mtsk
