#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advforge/nn.hpp"

namespace advforge::reg {

enum class Distance { l2, cosine, l1 };
enum class WeightSource { feature, image };

const char* to_string(Distance d);
Distance parse_distance(const std::string& name);
const char* to_string(WeightSource s);
WeightSource parse_weight_source(const std::string& name);

struct RegularizationConfig {
  double p = 1.0;          // degree of regularity
  double lambda = 1.0;     // fidelity to the original features
  int iters = 10;
  double eps_guard = 1e-8;  // added under the square root of each gradient norm
  Distance distance = Distance::l2;
  WeightSource weight_source = WeightSource::image;
  std::optional<double> sigma;  // empty: sqrt(mean squared pairwise distance)
  /// Keep only each vertex's k strongest edges (symmetrised); 0 = full graph.
  int knn = 0;
  bool enabled = true;  // false: retrain on the raw features (baseline)
  nn::RetrainHyper retrain{};

  void validate() const;
};

double pairwise_distance(const Vec& a, const Vec& b, Distance kind);

/// Full similarity graph; vertex i carries feature vector features[i].
struct WeightedGraph {
  int n = 0;
  Matrix weights;       // symmetric, zero diagonal
  Matrix features;      // n x F, row i = g(u_i)
  double sigma = 0.0;   // bandwidth actually used
};

/// Builds the graph with w(u,v) = exp(-d(.,.)^2 / sigma^2), where d is taken
/// between feature vectors or between images depending on cfg.weight_source.
WeightedGraph build_graph(std::span<const Vec> images, std::span<const Vec> features,
                          const RegularizationConfig& cfg);

/// Runs cfg.iters synchronous fixed-point iterations of the nonlocal p-Laplacian
/// regularization, componentwise. Returns the regularized features (n x F).
/// When `spread_trace` is given, the max-min spread of every component is
/// appended after each iteration (F values per iteration).
Matrix regularize(const WeightedGraph& graph, const RegularizationConfig& cfg,
                  std::vector<Vec>* spread_trace = nullptr);

struct RegVerdict {
  bool is_adversarial = false;
  int original_class = 0;
  int regularized_class = 0;
};

/// Transductive detector: joint graph over S and V, regularize, retrain the
/// output layer on S's regularized features against `s_labels`, and flag every
/// x in V whose retrained class (on its regularized features) differs from the
/// original network's class.
std::vector<RegVerdict> detect_reg(const nn::Network& net, std::span<const Vec> s_images,
                                   std::span<const int> s_labels, std::span<const Vec> v_images,
                                   const RegularizationConfig& cfg);

}  // namespace advforge::reg
