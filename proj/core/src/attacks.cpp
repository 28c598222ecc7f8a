#include "advforge/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "advforge/error.hpp"

namespace advforge::attacks {

namespace {

void finish(const nn::Network& net, const Vec& x0, AttackResult& r) {
  r.adversarial_label = nn::predict(net, r.adversarial);
  r.succeeded = r.adversarial_label != r.original_label;
  const Vec diff = r.adversarial - x0;
  r.linf_dist = diff.size() ? diff.cwiseAbs().maxCoeff() : 0.0;
  r.l2_dist = diff.norm();
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

Vec clip_eps(const Vec& x_prime, const Vec& x0, double eps, double u_min, double u_max) {
  if (x_prime.size() != x0.size()) throw InvalidInput("clip_eps: shape mismatch");
  if (!(eps >= 0.0)) throw InvalidInput("clip_eps: eps must be >= 0");
  Vec out(x0.size());
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    out[i] = std::min({u_max, x0[i] + eps, std::max({u_min, x0[i] - eps, x_prime[i]})});
  }
  return out;
}

AttackResult bim(const nn::Network& net, const Vec& x0, int label, const BimOptions& options) {
  if (!(options.eps >= 0.0) || !(options.step >= 0.0) || options.max_iter < 0) {
    throw InvalidInput("bim: eps, step and max_iter must be non-negative");
  }
  const Vec logits0 = nn::forward(net, x0);
  if (nn::argmax(logits0) != label) {
    throw InvalidInput("bim: x0 is not classified as the given label");
  }
  AttackResult r;
  r.original_label = label;
  r.adversarial = x0;
  r.loss_trace.push_back(nn::cross_entropy(logits0, label));
  Vec x = x0;
  for (int k = 1; k <= options.max_iter; ++k) {
    const Vec g = nn::grad_input(net, x, label);
    Vec stepped = x + options.step * g.unaryExpr([](double v) { return sign(v); });
    x = clip_eps(stepped, x0, options.eps, options.u_min, options.u_max);
    r.iterations_used = k;
    const Vec logits = nn::forward(net, x);
    r.loss_trace.push_back(nn::cross_entropy(logits, label));
    if (nn::argmax(logits) != label) break;
  }
  r.adversarial = x;
  finish(net, x0, r);
  return r;
}

AttackResult deepfool(const nn::Network& net, const Vec& x0, const DeepFoolOptions& options) {
  if (options.max_iter < 0 || !(options.overshoot >= 0.0)) {
    throw InvalidInput("deepfool: max_iter and overshoot must be non-negative");
  }
  AttackResult r;
  r.original_label = nn::predict(net, x0);
  const int l0 = r.original_label;
  const int n = net.category_count();
  const double scale = 1.0 + options.overshoot;

  // Gradient differences lose the components that would push a pixel already
  // sitting on a range bound further out; away from the bounds this is the
  // plain linearised step.
  Vec x = x0;
  auto feasible = [&](Vec w) {
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if ((x[i] <= options.u_min && w[i] < 0.0) || (x[i] >= options.u_max && w[i] > 0.0)) w[i] = 0.0;
    }
    return w;
  };
  for (int k = 0; k < options.max_iter; ++k) {
    const nn::LocalAffineMap lin = nn::local_affine_output(net, x);
    const Vec f = lin.d + lin.a * x;
    int best = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    Vec best_w;
    for (int l = 0; l < n; ++l) {
      if (l == l0) continue;
      Vec w = feasible((lin.a.row(l) - lin.a.row(l0)).transpose());
      const double wnorm = w.norm();
      if (wnorm == 0.0) continue;  // no feasible direction towards this class
      const double ratio = std::abs(f[l] - f[l0]) / wnorm;
      if (ratio < best_ratio) {
        best_ratio = ratio;
        best = l;
        best_w = std::move(w);
      }
    }
    if (best < 0) break;  // every candidate degenerate
    const Vec r_k = (std::abs(f[best] - f[l0]) / best_w.squaredNorm()) * best_w;
    x = (x + scale * r_k).cwiseMax(options.u_min).cwiseMin(options.u_max);
    r.iterations_used = k + 1;
    if (nn::predict(net, x) != l0) break;
  }
  r.adversarial = x;
  finish(net, x0, r);
  return r;
}

}  // namespace advforge::attacks
