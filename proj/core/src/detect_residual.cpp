#include "advforge/detect_residual.hpp"

#include <algorithm>
#include <cmath>

#include "advforge/error.hpp"

namespace advforge::residual {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Local affine map at x together with its pseudoinverse and the exact logits.
struct Linearization {
  nn::LocalAffineMap map;
  Matrix a_pinv;
  Vec y;
};

Linearization linearize(const nn::Network& net, const Vec& x, double tol) {
  Linearization lin;
  lin.map = nn::local_affine_output(net, x);
  lin.a_pinv = numerics::pinv(lin.map.a, tol);
  lin.y = lin.map.a * x + lin.map.d;
  return lin;
}

/// grad_x J(f(x), label) from the affine map: A^T (softmax(y) - e_label).
Vec loss_gradient(const Linearization& lin, int label) {
  return lin.map.a.transpose() * nn::cross_entropy_grad(lin.y, label);
}

ResidualOutcome conclude(const nn::Network& net, Vec x, int label, std::vector<double> trace,
                         double theta) {
  ResidualOutcome out;
  out.label = label;
  out.score = nn::softmax(nn::forward(net, x))[label];
  out.is_adversarial = out.score < theta;
  out.final_image = std::move(x);
  out.softmax_trace = std::move(trace);
  out.softmax_trace.push_back(out.score);
  return out;
}

}  // namespace

ResidualPair residual_image(const nn::LocalAffineMap& affine, const Vec& x, const Vec& y,
                            double pinv_tol) {
  if (x.size() != affine.a.cols() || y.size() != affine.a.rows()) {
    throw InvalidInput("residual_image: shape mismatch");
  }
  const Vec expect = affine.a * x + affine.d;
  const double scale = 1.0 + y.cwiseAbs().maxCoeff();
  if ((expect - y).cwiseAbs().maxCoeff() > 1e-6 * scale) {
    throw InvalidInput("residual_image: y is not the affine image of x");
  }
  ResidualPair r;
  r.perceived = numerics::pinv(affine.a, pinv_tol) * (y - affine.d);
  r.ignored = x - r.perceived;
  return r;
}

ResidualPair residual_image_centered(const nn::LocalAffineMap& affine, const Vec& x,
                                     const numerics::ClusterModel& centers, double pinv_tol) {
  if (centers.centers.empty()) throw InvalidInput("residual_image_centered: no centers");
  if (x.size() != affine.a.cols()) throw InvalidInput("residual_image_centered: shape mismatch");
  const Vec y = affine.a * x + affine.d;
  const Vec& y_cent = centers.centers[centers.nearest(y)];
  if (y_cent.size() != y.size()) throw InvalidInput("residual_image_centered: center width mismatch");
  ResidualPair r;
  r.perceived = numerics::pinv(affine.a, pinv_tol) * (y_cent - affine.d);
  r.ignored = x - r.perceived;
  return r;
}

Vec perceptual_probe(const nn::FeatureAffineMap& feat_affine, double eps, double pinv_tol) {
  if (!(eps > 0.0)) throw InvalidInput("perceptual_probe: eps must be > 0");
  const Vec p = feat_affine.w * feat_affine.anchor + feat_affine.b;
  return eps * (numerics::pinv(feat_affine.w, pinv_tol) * p);
}

const char* to_string(Method m) {
  switch (m) {
    case Method::A: return "A";
    case Method::B: return "B";
    case Method::C: return "C";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "A" || name == "a") return Method::A;
  if (name == "B" || name == "b") return Method::B;
  if (name == "C" || name == "c") return Method::C;
  throw InvalidInput("unknown residual method '" + name + "'");
}

ResidualDetectConfig ResidualDetectConfig::defaults(Method m) {
  ResidualDetectConfig cfg;
  cfg.method = m;
  switch (m) {
    case Method::A:
      cfg.step_eps = 1.0;
      cfg.t_max = 20;
      cfg.theta = 0.9;
      break;
    case Method::B:
      cfg.step_eps = 1.0;
      cfg.t_max = 20;
      cfg.theta = 0.65;
      break;
    case Method::C:
      cfg.step_eps = 1.0;
      cfg.t_max = 50;
      cfg.theta = 0.7;
      break;
  }
  return cfg;
}

void ResidualDetectConfig::validate() const {
  if (t_max < 1) throw InvalidInput("residual: t_max must be >= 1");
  if (!(theta >= 0.0)) throw InvalidInput("residual: theta must be >= 0");
  if (!(step_eps >= 0.0)) throw InvalidInput("residual: step_eps must be >= 0");
  if (!(u_min < u_max)) throw InvalidInput("residual: clamp range must satisfy u_min < u_max");
}

ResidualOutcome method_a(const nn::Network& net, const Vec& x0, const ResidualDetectConfig& cfg) {
  cfg.validate();
  if (cfg.width * cfg.height != x0.size()) {
    throw InvalidInput("method_a: image grid does not match the input size");
  }
  const int label = nn::predict(net, x0);
  Vec x = x0;
  std::vector<double> trace;
  for (int t = 0; t < cfg.t_max; ++t) {
    const Linearization lin = linearize(net, x, cfg.pinv_tol);
    trace.push_back(nn::softmax(lin.y)[label]);
    const Vec ignored = x - lin.a_pinv * (lin.y - lin.map.d);
    const Vec smoothed = numerics::tv_denoise(ignored, cfg.width, cfg.height, cfg.tv);
    const Vec grad = loss_gradient(lin, label);
    Vec add(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) add[i] = sign(smoothed[i] * grad[i]) * grad[i];
    x += cfg.step_eps * add;
  }
  return conclude(net, std::move(x), label, std::move(trace), cfg.theta);
}

ResidualOutcome method_b(const nn::Network& net, const Vec& x0, const ResidualDetectConfig& cfg) {
  cfg.validate();
  if (!cfg.centers || cfg.centers->centers.empty()) {
    throw InvalidInput("method_b: output centers are required");
  }
  const int label = nn::predict(net, x0);
  Vec x = x0;
  std::vector<double> trace;
  for (int t = 0; t < cfg.t_max; ++t) {
    const Linearization lin = linearize(net, x, cfg.pinv_tol);
    trace.push_back(nn::softmax(lin.y)[label]);
    const Vec& y_cent = cfg.centers->centers[cfg.centers->nearest(lin.y)];
    const Vec ignored = x - lin.a_pinv * (y_cent - lin.map.d);
    const Vec grad = loss_gradient(lin, label);
    Vec add(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) add[i] = sign(ignored[i] * grad[i]) * grad[i];
    x += cfg.step_eps * add;
  }
  return conclude(net, std::move(x), label, std::move(trace), cfg.theta);
}

ResidualOutcome method_c(const nn::Network& net, const Vec& x0, const ResidualDetectConfig& cfg) {
  cfg.validate();
  const double x0_norm = x0.norm();
  if (x0_norm == 0.0) throw InvalidInput("method_c: |x0| = 0");
  const int label = nn::predict(net, x0);
  Vec x = x0.cwiseMax(cfg.u_min).cwiseMin(cfg.u_max);
  std::vector<double> trace;
  for (int t = 0; t < cfg.t_max; ++t) {
    const Linearization lin = linearize(net, x, cfg.pinv_tol);
    trace.push_back(nn::softmax(lin.y)[label]);
    const Vec perceived = lin.a_pinv * (lin.y - lin.map.d);
    const Vec grad = loss_gradient(lin, label);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double ign = (x0[i] * x[i] - x0[i] * perceived[i]) / x0_norm;
      const double add = std::abs(ign * grad[i]) * sign(ign);
      x[i] = std::max(std::min(x[i] + cfg.step_eps * add, cfg.u_max), cfg.u_min);
    }
  }
  return conclude(net, std::move(x), label, std::move(trace), cfg.theta);
}

ResidualOutcome detect_residual(const nn::Network& net, const Vec& x0,
                                const ResidualDetectConfig& cfg) {
  switch (cfg.method) {
    case Method::A: return method_a(net, x0, cfg);
    case Method::B: return method_b(net, x0, cfg);
    case Method::C: return method_c(net, x0, cfg);
  }
  throw InvalidInput("detect_residual: unknown method");
}

numerics::ClusterModel fit_output_centers(const nn::Network& net, std::span<const Vec> images,
                                          int k, std::uint64_t seed) {
  std::vector<Vec> outputs;
  outputs.reserve(images.size());
  for (const Vec& x : images) outputs.push_back(nn::forward(net, x));
  return numerics::kmeans(outputs, k, seed);
}

}  // namespace advforge::residual
