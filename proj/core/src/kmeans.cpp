#include <algorithm>
#include <limits>
#include <random>
#include <set>

#include "advforge/error.hpp"
#include "advforge/numerics.hpp"

namespace advforge::numerics {

int ClusterModel::nearest(const Vec& point) const {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const double d = (centers[c] - point).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

namespace {

std::size_t count_distinct(const std::vector<Vec>& points) {
  auto less = [](const Vec* a, const Vec* b) {
    return std::lexicographical_compare(a->data(), a->data() + a->size(), b->data(),
                                        b->data() + b->size());
  };
  std::set<const Vec*, decltype(less)> seen(less);
  for (const Vec& p : points) {
    seen.insert(&p);
  }
  return seen.size();
}

double assign(const std::vector<Vec>& points, const std::vector<Vec>& centers,
              std::vector<int>& labels) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_c = 0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double d = (centers[c] - points[i]).squaredNorm();
      if (d < best) {
        best = d;
        best_c = static_cast<int>(c);
      }
    }
    labels[i] = best_c;
    inertia += best;
  }
  return inertia;
}

}  // namespace

ClusterModel kmeans(const std::vector<Vec>& points, int k, std::uint64_t seed,
                    const KMeansOptions& options) {
  if (points.empty()) {
    throw InvalidInput("kmeans: no points");
  }
  if (k < 1) {
    throw InvalidInput("kmeans: k must be >= 1");
  }
  const Eigen::Index dim = points.front().size();
  for (const Vec& p : points) {
    if (p.size() != dim || !p.allFinite()) {
      throw InvalidInput("kmeans: points must be finite and share one dimension");
    }
  }
  if (static_cast<std::size_t>(k) > count_distinct(points)) {
    throw InvalidInput("kmeans: k exceeds the number of distinct points");
  }

  std::mt19937_64 rng(seed);
  std::vector<Vec> centers;
  centers.reserve(k);

  // kmeans++ seeding
  std::uniform_int_distribution<std::size_t> first(0, points.size() - 1);
  centers.push_back(points[first(rng)]);
  std::vector<double> dist2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    dist2[i] = (points[i] - centers[0]).squaredNorm();
  }
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (double d : dist2) total += d;
    std::uniform_real_distribution<double> pick(0.0, total);
    const double target = pick(rng);
    double acc = 0.0;
    std::size_t chosen = points.size();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (dist2[i] <= 0.0) continue;
      acc += dist2[i];
      chosen = i;
      if (acc >= target) break;
    }
    centers.push_back(points[chosen]);
    for (std::size_t i = 0; i < points.size(); ++i) {
      dist2[i] = std::min(dist2[i], (points[i] - centers.back()).squaredNorm());
    }
  }

  ClusterModel model;
  model.k = k;
  std::vector<int> labels(points.size(), 0);
  double inertia = assign(points, centers, labels);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    std::vector<Vec> sums(k, Vec::Zero(dim));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sums[labels[i]] += points[i];
      ++counts[labels[i]];
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its center
      Vec updated = sums[c] / static_cast<double>(counts[c]);
      shift = std::max(shift, (updated - centers[c]).norm());
      centers[c] = std::move(updated);
    }
    inertia = assign(points, centers, labels);
    model.inertia_trace.push_back(inertia);
    model.iterations = iter + 1;
    if (shift < options.tolerance) break;
  }
  model.centers = std::move(centers);
  model.inertia = inertia;
  return model;
}

}  // namespace advforge::numerics
