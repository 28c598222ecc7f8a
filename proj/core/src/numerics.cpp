#include "advforge/numerics.hpp"

#include <Eigen/SVD>

#include "advforge/error.hpp"

namespace advforge::numerics {

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vec& v) { return v.allFinite(); }

SvdResult svd(const Matrix& m) {
  if (!m.allFinite()) {
    throw InvalidInput("svd: matrix contains non-finite values");
  }
  SvdResult out;
  if (m.size() == 0) {
    out.u = Matrix::Zero(m.rows(), 0);
    out.singular_values = Vec::Zero(0);
    out.vt = Matrix::Zero(0, m.cols());
    return out;
  }
  // JacobiSVD returns singular values sorted in decreasing order.
  Eigen::JacobiSVD<Eigen::MatrixXd> solver(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.u = solver.matrixU();
  out.singular_values = solver.singularValues();
  out.vt = solver.matrixV().transpose();
  return out;
}

Matrix pinv(const Matrix& m, double rel_tol) {
  if (!(rel_tol > 0.0 && rel_tol < 1.0)) {
    throw InvalidInput("pinv: rel_tol must lie in (0, 1)");
  }
  const SvdResult s = svd(m);
  Matrix out = Matrix::Zero(m.cols(), m.rows());
  if (s.singular_values.size() == 0) {
    return out;
  }
  const double cutoff = rel_tol * s.singular_values(0);
  for (Eigen::Index i = 0; i < s.singular_values.size(); ++i) {
    const double sigma = s.singular_values(i);
    if (sigma <= cutoff || sigma == 0.0) {
      break;
    }
    // A+ = sum_i v_i u_i^T / sigma_i
    out.noalias() += (s.vt.row(i).transpose() / sigma) * s.u.col(i).transpose();
  }
  return out;
}

Vec matvec(const Matrix& m, const Vec& x) {
  if (m.cols() != x.size()) {
    throw InvalidInput("matvec: dimension mismatch");
  }
  return m * x;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw InvalidInput("matmul: dimension mismatch");
  }
  return a * b;
}

Matrix transpose(const Matrix& m) { return m.transpose(); }

}  // namespace advforge::numerics
