#pragma once

#include <vector>

#include "advforge/nn.hpp"

namespace advforge::attacks {

struct AttackResult {
  Vec adversarial;
  int iterations_used = 0;
  int original_label = 0;
  int adversarial_label = 0;
  double linf_dist = 0.0;
  double l2_dist = 0.0;
  bool succeeded = false;
  std::vector<double> loss_trace;  // BIM: J(f(x_k), label) for k = 0..iterations_used
};

/// Clip_{x0,eps}(x')[i] = min{u_max, x0[i] + eps, max{u_min, x0[i] - eps, x'[i]}}.
Vec clip_eps(const Vec& x_prime, const Vec& x0, double eps, double u_min = 0.0,
             double u_max = 1.0);

struct BimOptions {
  double eps = 0.25;
  double step = 0.01;
  int max_iter = 100;
  double u_min = 0.0;
  double u_max = 1.0;
};

/// Basic Iterative Method. `label` must be the network's (correct) prediction
/// for x0; iterates signed-gradient steps clipped to the eps ball and stops at
/// the first misclassified iterate.
AttackResult bim(const nn::Network& net, const Vec& x0, int label, const BimOptions& options = {});

struct DeepFoolOptions {
  int max_iter = 50;
  double overshoot = 0.02;
  double u_min = 0.0;
  double u_max = 1.0;
};

/// DeepFool: repeatedly steps to the nearest boundary of the local
/// linearisation of the logits until the predicted class changes.
AttackResult deepfool(const nn::Network& net, const Vec& x0, const DeepFoolOptions& options = {});

}  // namespace advforge::attacks
