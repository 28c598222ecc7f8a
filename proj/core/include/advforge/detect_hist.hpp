#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "advforge/nn.hpp"

namespace advforge::hist {

struct HistogramConfig {
  int bins = 64;
  /// Upper edge of each channel's histogram; empty = calibrate from data.
  std::vector<double> channel_range;
  double reinforcement_eps = 0.05;
  bool use_reinforcement = true;

  void validate() const;
};

/// Per-channel normalised histograms of |values| over [0, range_c], overflow
/// clipped into the last bin; channels concatenated in order.
Vec channel_histograms(const Vec& feature_map, int channels, std::span<const double> ranges,
                       int bins);

struct ReinforcementResult {
  Vec image;
  bool zero_gradient = false;
};

/// x_new = x - eps * grad / |grad|_2 * |x|_2 with grad = dJ(f(x), k(x))/dx.
/// Not clipped to the pixel range.
ReinforcementResult reinforcement_step(const nn::Network& net, const Vec& x, double eps);

/// Histogram block of x, followed by the block of its reinforced image when
/// cfg.use_reinforcement is set.
Vec build_hist_feature(const nn::Network& net, const Vec& x, const HistogramConfig& cfg);

/// Per-channel max |first-conv output| over the images (and their reinforced
/// versions when enabled). Zero maxima are floored to a tiny positive value.
std::vector<double> calibrate_ranges(const nn::Network& net, std::span<const Vec> images,
                                     const HistogramConfig& cfg);

struct SvmHyper {
  double c = 1.0;
  int epochs = 1000;
  std::uint64_t seed = 1;
};

struct SvmModel {
  Vec weights;
  double bias = 0.0;
  Vec feature_mean;
  Vec feature_std;
  SvmHyper hyper;
  std::vector<double> loss_trace;  // objective before training, then after each epoch

  /// Signed margin; > 0 means adversarial.
  double score(const Vec& feature) const;
};

/// Linear soft-margin SVM on z-scored features, trained by seeded stochastic
/// subgradient descent on  C * sum_i hinge_i + 1/2 |w|^2  (scaled by 1/(C n)).
/// labels: 0 = real, 1 = adversarial.
SvmModel train_svm(std::span<const Vec> features, std::span<const int> labels,
                   const SvmHyper& hyper);

/// Trained histogram detector: the binning it was trained with plus the SVM.
struct HistDetector {
  HistogramConfig config;
  SvmModel svm;
};

struct HistVerdict {
  bool is_adversarial = false;
  double score = 0.0;
};

HistDetector train_hist_detector(const nn::Network& net, std::span<const Vec> images,
                                 std::span<const int> labels, HistogramConfig cfg,
                                 const SvmHyper& hyper);

HistVerdict detect_hist(const HistDetector& detector, const nn::Network& net, const Vec& x);

}  // namespace advforge::hist
