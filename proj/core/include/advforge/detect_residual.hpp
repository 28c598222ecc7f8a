#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advforge/nn.hpp"
#include "advforge/numerics.hpp"

namespace advforge::residual {

/// Split of an input into the part the local affine classifier ignores (its
/// null-space component) and the part it perceives.
struct ResidualPair {
  Vec ignored;    // x_ign
  Vec perceived;  // x - x_ign
};

/// x_ign = x - A+ (y - d). Requires y = A x + d to 1e-6 (relative to 1 + |y|inf).
ResidualPair residual_image(const nn::LocalAffineMap& affine, const Vec& x, const Vec& y,
                            double pinv_tol = numerics::kDefaultPinvTolerance);

/// x~_ign = x - A+ (y_cent - d), y_cent the center nearest to y = A x + d.
ResidualPair residual_image_centered(const nn::LocalAffineMap& affine, const Vec& x,
                                     const numerics::ClusterModel& centers,
                                     double pinv_tol = numerics::kDefaultPinvTolerance);

/// Minimal-norm delta with W delta = eps * h(anchor), i.e. the local solution
/// of h(x0 + delta) = (1 + eps) h(x0).
Vec perceptual_probe(const nn::FeatureAffineMap& feat_affine, double eps,
                     double pinv_tol = numerics::kDefaultPinvTolerance);

enum class Method { A, B, C };

const char* to_string(Method m);
Method parse_method(const std::string& name);

struct ResidualDetectConfig {
  Method method = Method::C;
  double step_eps = 1.0;
  int t_max = 50;
  double theta = 0.7;
  numerics::TvOptions tv{};                   // Method A only
  std::optional<numerics::ClusterModel> centers;  // Method B only
  double u_min = 0.0;                          // Method C clamp
  double u_max = 1.0;
  double pinv_tol = numerics::kDefaultPinvTolerance;
  int width = 28;   // image grid for TV
  int height = 28;

  /// Shipped defaults for a method (theta, step and iteration count).
  static ResidualDetectConfig defaults(Method m);
  void validate() const;
};

struct ResidualOutcome {
  bool is_adversarial = false;
  double score = 0.0;  // softmax(f(x_final))_label
  int label = 0;       // class of x0
  Vec final_image;
  std::vector<double> softmax_trace;  // s_label at x_cur(0..T_max)
};

ResidualOutcome method_a(const nn::Network& net, const Vec& x0, const ResidualDetectConfig& cfg);
ResidualOutcome method_b(const nn::Network& net, const Vec& x0, const ResidualDetectConfig& cfg);
ResidualOutcome method_c(const nn::Network& net, const Vec& x0, const ResidualDetectConfig& cfg);

/// Dispatches on cfg.method.
ResidualOutcome detect_residual(const nn::Network& net, const Vec& x0,
                                const ResidualDetectConfig& cfg);

/// kmeans centers over the pre-softmax outputs of `images`.
numerics::ClusterModel fit_output_centers(const nn::Network& net, std::span<const Vec> images,
                                          int k, std::uint64_t seed);

}  // namespace advforge::residual
