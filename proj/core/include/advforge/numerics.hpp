#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "error.hpp"

namespace advforge {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

namespace numerics {

inline constexpr double kDefaultPinvTolerance = 1e-10;

struct SvdResult {
  Matrix u;                 // rows x k, orthonormal columns
  Vec singular_values;      // k entries, descending
  Matrix vt;                // k x cols, orthonormal rows
};

/// Thin SVD, k = min(rows, cols).
SvdResult svd(const Matrix& m);

/// Moore-Penrose pseudoinverse. Singular values at or below
/// rel_tol * sigma_max are treated as zero.
Matrix pinv(const Matrix& m, double rel_tol = kDefaultPinvTolerance);

Vec matvec(const Matrix& m, const Vec& x);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

bool all_finite(const Matrix& m);
bool all_finite(const Vec& v);

struct ClusterModel {
  std::vector<Vec> centers;
  int k = 0;
  double inertia = 0.0;
  int iterations = 0;
  std::vector<double> inertia_trace;  // inertia after each Lloyd step

  /// Index of the nearest center in L2; ties go to the lowest index.
  int nearest(const Vec& point) const;
};

struct KMeansOptions {
  int max_iterations = 300;
  double tolerance = 1e-8;  // max center shift for convergence
};

/// kmeans++ seeding from a seeded mt19937_64 followed by Lloyd iterations.
ClusterModel kmeans(const std::vector<Vec>& points, int k, std::uint64_t seed,
                    const KMeansOptions& options = {});

struct TvOptions {
  double fidelity = 10.0;
  int iterations = 30;
  double step = 0.248;
};

/// Isotropic ROF denoising, argmin_u TV(u) + fidelity/2 * |u - img|^2, solved
/// with Chambolle's dual projection. `img` is a row-major height x width grid.
Vec tv_denoise(const Vec& img, int width, int height, const TvOptions& options = {});

/// Isotropic total variation with forward differences (Neumann boundary).
double total_variation(const Vec& img, int width, int height);

}  // namespace numerics
}  // namespace advforge
