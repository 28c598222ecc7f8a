#include "advforge/detect_hist.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "advforge/error.hpp"

namespace advforge::hist {

namespace {

constexpr double kStdFloor = 1e-8;
constexpr double kRangeFloor = 1e-12;

int first_conv_channels(const nn::Network& net) {
  return net.shapes()[net.first_conv_index() + 1].channels;
}

double svm_objective(const Matrix& z, std::span<const int> labels, const Vec& w, double b,
                     double reg) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double y = labels[i] == 1 ? 1.0 : -1.0;
    loss += std::max(0.0, 1.0 - y * (z.row(i).dot(w) + b));
  }
  return loss / static_cast<double>(z.rows()) + 0.5 * reg * w.squaredNorm();
}

}  // namespace

void HistogramConfig::validate() const {
  if (bins < 2) throw InvalidInput("histogram: bins must be >= 2");
  if (!(reinforcement_eps >= 0.0)) throw InvalidInput("histogram: reinforcement_eps must be >= 0");
  for (double r : channel_range) {
    if (!(r > 0.0)) throw InvalidInput("histogram: channel ranges must be positive");
  }
}

Vec channel_histograms(const Vec& feature_map, int channels, std::span<const double> ranges,
                       int bins) {
  if (channels < 1 || feature_map.size() % channels != 0) {
    throw InvalidInput("channel_histograms: map size is not a multiple of the channel count");
  }
  if (static_cast<int>(ranges.size()) != channels) {
    throw InvalidInput("channel_histograms: one range per channel required");
  }
  if (bins < 2) throw InvalidInput("channel_histograms: bins must be >= 2");
  const Eigen::Index plane = feature_map.size() / channels;
  Vec out = Vec::Zero(static_cast<Eigen::Index>(channels) * bins);
  for (int c = 0; c < channels; ++c) {
    if (!(ranges[c] > 0.0)) throw InvalidInput("channel_histograms: ranges must be positive");
    const double scale = bins / ranges[c];
    double* h = out.data() + static_cast<Eigen::Index>(c) * bins;
    for (Eigen::Index p = 0; p < plane; ++p) {
      const double v = std::abs(feature_map[c * plane + p]);
      const int bin = std::min(bins - 1, static_cast<int>(v * scale));
      h[bin] += 1.0;
    }
    for (int b = 0; b < bins; ++b) h[b] /= static_cast<double>(plane);
  }
  return out;
}

ReinforcementResult reinforcement_step(const nn::Network& net, const Vec& x, double eps) {
  const int label = nn::predict(net, x);
  const Vec g = nn::grad_input(net, x, label);
  const double gnorm = g.norm();
  if (gnorm == 0.0) return {x, true};
  return {x - eps * (g / gnorm) * x.norm(), false};
}

Vec build_hist_feature(const nn::Network& net, const Vec& x, const HistogramConfig& cfg) {
  cfg.validate();
  const int channels = first_conv_channels(net);
  if (static_cast<int>(cfg.channel_range.size()) != channels) {
    throw InvalidInput("build_hist_feature: channel ranges are not calibrated for this network");
  }
  const Vec first = channel_histograms(nn::first_conv_output(net, x), channels, cfg.channel_range,
                                       cfg.bins);
  if (!cfg.use_reinforcement) return first;
  const Vec reinforced = reinforcement_step(net, x, cfg.reinforcement_eps).image;
  const Vec second = channel_histograms(nn::first_conv_output(net, reinforced), channels,
                                        cfg.channel_range, cfg.bins);
  Vec out(first.size() + second.size());
  out << first, second;
  return out;
}

std::vector<double> calibrate_ranges(const nn::Network& net, std::span<const Vec> images,
                                     const HistogramConfig& cfg) {
  const int channels = first_conv_channels(net);
  std::vector<double> ranges(channels, 0.0);
  auto absorb = [&](const Vec& x) {
    const Vec map = nn::first_conv_output(net, x);
    const Eigen::Index plane = map.size() / channels;
    for (int c = 0; c < channels; ++c) {
      ranges[c] = std::max(ranges[c], map.segment(c * plane, plane).cwiseAbs().maxCoeff());
    }
  };
  for (const Vec& x : images) {
    absorb(x);
    if (cfg.use_reinforcement) absorb(reinforcement_step(net, x, cfg.reinforcement_eps).image);
  }
  for (double& r : ranges) r = std::max(r, kRangeFloor);
  return ranges;
}

double SvmModel::score(const Vec& feature) const {
  if (feature.size() != weights.size()) {
    throw InvalidInput("svm: feature length " + std::to_string(feature.size()) +
                       " does not match model length " + std::to_string(weights.size()));
  }
  const Vec z = (feature - feature_mean).cwiseQuotient(feature_std);
  return z.dot(weights) + bias;
}

SvmModel train_svm(std::span<const Vec> features, std::span<const int> labels,
                   const SvmHyper& hyper) {
  if (features.empty() || features.size() != labels.size()) {
    throw InvalidInput("train_svm: features and labels must be non-empty and aligned");
  }
  if (!(hyper.c > 0.0) || hyper.epochs < 0) throw InvalidInput("train_svm: invalid hyperparameters");
  bool has_pos = false, has_neg = false;
  for (int l : labels) {
    if (l != 0 && l != 1) throw InvalidInput("train_svm: labels must be 0 or 1");
    (l == 1 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) throw InvalidInput("train_svm: both classes must be present");

  const Eigen::Index n = static_cast<Eigen::Index>(features.size());
  const Eigen::Index d = features.front().size();
  Matrix z(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (features[i].size() != d) throw InvalidInput("train_svm: ragged features");
    z.row(i) = features[i].transpose();
  }

  SvmModel m;
  m.hyper = hyper;
  m.feature_mean = z.colwise().mean().transpose();
  m.feature_std = ((z.rowwise() - m.feature_mean.transpose()).array().square().colwise().sum() /
                   static_cast<double>(n))
                      .sqrt()
                      .max(kStdFloor)
                      .matrix()
                      .transpose();
  z = (z.rowwise() - m.feature_mean.transpose()).array().rowwise() /
      m.feature_std.transpose().array();

  // Minimise (1/n) sum hinge + reg/2 |w|^2 with reg = 1/(C n).
  const double reg = 1.0 / (hyper.c * static_cast<double>(n));
  m.weights = Vec::Zero(d);
  m.bias = 0.0;
  m.loss_trace.push_back(svm_objective(z, labels, m.weights, m.bias, reg));

  std::mt19937_64 rng(hyper.seed);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const double eta0 = 0.1;
  std::size_t t = 0;
  // Running average of the iterates smooths the subgradient jitter.
  Vec w_avg = Vec::Zero(d);
  double b_avg = 0.0;
  std::size_t avg_count = 0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index i : order) {
      const double eta = eta0 / (1.0 + eta0 * reg * static_cast<double>(t));
      const double y = labels[i] == 1 ? 1.0 : -1.0;
      const double margin = y * (z.row(i).dot(m.weights) + m.bias);
      m.weights *= (1.0 - eta * reg);
      if (margin < 1.0) {
        m.weights += (eta * y) * z.row(i).transpose();
        m.bias += eta * y;
      }
      ++t;
    }
    ++avg_count;
    w_avg += (m.weights - w_avg) / static_cast<double>(avg_count);
    b_avg += (m.bias - b_avg) / static_cast<double>(avg_count);
    m.loss_trace.push_back(svm_objective(z, labels, w_avg, b_avg, reg));
  }
  if (hyper.epochs > 0) {
    m.weights = w_avg;
    m.bias = b_avg;
  }
  return m;
}

HistDetector train_hist_detector(const nn::Network& net, std::span<const Vec> images,
                                 std::span<const int> labels, HistogramConfig cfg,
                                 const SvmHyper& hyper) {
  cfg.validate();
  if (cfg.channel_range.empty()) cfg.channel_range = calibrate_ranges(net, images, cfg);
  std::vector<Vec> feats;
  feats.reserve(images.size());
  for (const Vec& x : images) feats.push_back(build_hist_feature(net, x, cfg));
  return {cfg, train_svm(feats, labels, hyper)};
}

HistVerdict detect_hist(const HistDetector& detector, const nn::Network& net, const Vec& x) {
  const double s = detector.svm.score(build_hist_feature(net, x, detector.config));
  return {s > 0.0, s};
}

}  // namespace advforge::hist
