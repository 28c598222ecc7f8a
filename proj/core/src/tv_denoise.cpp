#include <cmath>

#include "advforge/error.hpp"
#include "advforge/numerics.hpp"

namespace advforge::numerics {

namespace {

// Forward differences with zero flux across the last row/column.
void gradient(const Vec& u, int w, int h, Vec& gx, Vec& gy) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int i = y * w + x;
      gx[i] = x + 1 < w ? u[i + 1] - u[i] : 0.0;
      gy[i] = y + 1 < h ? u[i + w] - u[i] : 0.0;
    }
  }
}

// Negative adjoint of `gradient`.
void divergence(const Vec& px, const Vec& py, int w, int h, Vec& div) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int i = y * w + x;
      double d = 0.0;
      if (x + 1 < w) d += px[i];
      if (x > 0) d -= px[i - 1];
      if (y + 1 < h) d += py[i];
      if (y > 0) d -= py[i - w];
      div[i] = d;
    }
  }
}

}  // namespace

double total_variation(const Vec& img, int width, int height) {
  if (width <= 0 || height <= 0 || img.size() != static_cast<Eigen::Index>(width) * height) {
    throw InvalidInput("total_variation: image size does not match the grid");
  }
  Vec gx(img.size()), gy(img.size());
  gradient(img, width, height, gx, gy);
  double tv = 0.0;
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    tv += std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
  }
  return tv;
}

Vec tv_denoise(const Vec& img, int width, int height, const TvOptions& options) {
  if (width <= 0 || height <= 0 || img.size() != static_cast<Eigen::Index>(width) * height) {
    throw InvalidInput("tv_denoise: image size does not match the grid");
  }
  if (!(options.fidelity > 0.0) || options.iterations < 1 || !(options.step > 0.0)) {
    throw InvalidInput("tv_denoise: fidelity and step must be positive, iterations >= 1");
  }
  if (!img.allFinite()) {
    throw InvalidInput("tv_denoise: non-finite pixels");
  }
  // u = f - div(p) / fidelity, p <- (p + tau grad(div p - fidelity f)) / (1 + tau |.|)
  const Eigen::Index n = img.size();
  Vec px = Vec::Zero(n), py = Vec::Zero(n), div = Vec::Zero(n);
  Vec gx(n), gy(n), work(n);
  const double tau = options.step;
  for (int it = 0; it < options.iterations; ++it) {
    divergence(px, py, width, height, div);
    work = div - options.fidelity * img;
    gradient(work, width, height, gx, gy);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double norm = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
      const double denom = 1.0 + tau * norm;
      px[i] = (px[i] + tau * gx[i]) / denom;
      py[i] = (py[i] + tau * gy[i]) / denom;
    }
  }
  divergence(px, py, width, height, div);
  return img - div / options.fidelity;
}

}  // namespace advforge::numerics
