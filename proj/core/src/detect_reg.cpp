#include "advforge/detect_reg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "advforge/error.hpp"

namespace advforge::reg {

const char* to_string(Distance d) {
  switch (d) {
    case Distance::l2: return "l2";
    case Distance::cosine: return "cosine";
    case Distance::l1: return "l1";
  }
  return "?";
}

Distance parse_distance(const std::string& name) {
  if (name == "l2") return Distance::l2;
  if (name == "cosine") return Distance::cosine;
  if (name == "l1") return Distance::l1;
  throw InvalidInput("unknown distance '" + name + "'");
}

const char* to_string(WeightSource s) { return s == WeightSource::feature ? "feature" : "image"; }

WeightSource parse_weight_source(const std::string& name) {
  if (name == "feature") return WeightSource::feature;
  if (name == "image") return WeightSource::image;
  throw InvalidInput("unknown weight source '" + name + "'");
}

void RegularizationConfig::validate() const {
  if (!(p >= 1.0)) throw InvalidInput("regularization: p must be >= 1");
  if (!(lambda > 0.0)) throw InvalidInput("regularization: lambda must be > 0");
  if (iters < 1) throw InvalidInput("regularization: iters must be >= 1");
  if (!(eps_guard >= 0.0)) throw InvalidInput("regularization: eps_guard must be >= 0");
  if (sigma && !(*sigma > 0.0)) throw InvalidInput("regularization: sigma must be > 0");
  if (knn < 0) throw InvalidInput("regularization: knn must be >= 0");
}

double pairwise_distance(const Vec& a, const Vec& b, Distance kind) {
  if (a.size() != b.size()) throw InvalidInput("pairwise_distance: dimension mismatch");
  switch (kind) {
    case Distance::l2: return (a - b).norm();
    case Distance::l1: return (a - b).lpNorm<1>();
    case Distance::cosine: {
      const double na = a.norm(), nb = b.norm();
      if (na == 0.0 || nb == 0.0) throw InvalidInput("pairwise_distance: cosine of a zero vector");
      return 1.0 - a.dot(b) / (na * nb);
    }
  }
  return 0.0;
}

WeightedGraph build_graph(std::span<const Vec> images, std::span<const Vec> features,
                          const RegularizationConfig& cfg) {
  cfg.validate();
  if (features.empty()) throw InvalidInput("build_graph: no vertices");
  if (cfg.weight_source == WeightSource::image && images.size() != features.size()) {
    throw InvalidInput("build_graph: image and feature counts differ");
  }
  const int n = static_cast<int>(features.size());
  const auto& points = cfg.weight_source == WeightSource::image ? images : features;

  WeightedGraph g;
  g.n = n;
  g.features.resize(n, features.front().size());
  for (int i = 0; i < n; ++i) {
    if (features[i].size() != g.features.cols()) throw InvalidInput("build_graph: ragged features");
    g.features.row(i) = features[i].transpose();
  }

  g.weights = Matrix::Zero(n, n);  // squared distances first, weights after
  double sum = 0.0;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      const double d = pairwise_distance(points[u], points[v], cfg.distance);
      g.weights(u, v) = g.weights(v, u) = d * d;
      sum += d * d;
    }
  }
  const double pairs = 0.5 * n * (n - 1.0);
  double sigma2 = cfg.sigma ? (*cfg.sigma) * (*cfg.sigma) : (pairs > 0 ? sum / pairs : 1.0);
  if (!(sigma2 > 0.0)) sigma2 = 1.0;  // all points coincide
  g.sigma = std::sqrt(sigma2);

  g.weights = (-g.weights.array() / sigma2).exp().matrix();
  g.weights.diagonal().setZero();

  if (cfg.knn > 0 && cfg.knn < n - 1) {
    std::vector<std::uint8_t> keep(static_cast<std::size_t>(n) * n, 0);
    std::vector<int> idx(n);
    for (int u = 0; u < n; ++u) {
      std::iota(idx.begin(), idx.end(), 0);
      std::partial_sort(idx.begin(), idx.begin() + cfg.knn + 1, idx.end(), [&](int a, int b) {
        if (a == u) return false;
        if (b == u) return true;
        return g.weights(u, a) > g.weights(u, b) || (g.weights(u, a) == g.weights(u, b) && a < b);
      });
      for (int j = 0; j < cfg.knn; ++j) {
        keep[static_cast<std::size_t>(u) * n + idx[j]] = 1;
        keep[static_cast<std::size_t>(idx[j]) * n + u] = 1;
      }
    }
    for (int u = 0; u < n; ++u) {
      for (int v = 0; v < n; ++v) {
        if (!keep[static_cast<std::size_t>(u) * n + v]) g.weights(u, v) = 0.0;
      }
    }
  }
  return g;
}

Matrix regularize(const WeightedGraph& graph, const RegularizationConfig& cfg,
                  std::vector<Vec>* spread_trace) {
  cfg.validate();
  const int n = graph.n;
  const Eigen::Index f = graph.features.cols();
  const Matrix& w = graph.weights;
  const Matrix& g0 = graph.features;
  Matrix cur = g0;
  Matrix next(n, f);
  Matrix norm_pow(n, f);  // |grad_w g_i(u)|^(p-2)
  Matrix num(n, f), den(n, f);
  Eigen::RowVectorXd acc(f);

  for (int t = 0; t < cfg.iters; ++t) {
    // Per-component gradient norms at every vertex.
    for (int u = 0; u < n; ++u) {
      acc.setZero();
      double* a = acc.data();
      const double* cu = cur.row(u).data();
      for (int v = 0; v < n; ++v) {
        const double wv = w(u, v);
        if (wv == 0.0) continue;
        const double* cv = cur.row(v).data();
        for (Eigen::Index i = 0; i < f; ++i) {
          const double diff = cu[i] - cv[i];
          a[i] += wv * diff * diff;
        }
      }
      norm_pow.row(u) = (acc.array() + cfg.eps_guard).sqrt().pow(cfg.p - 2.0).matrix();
    }
    // gamma_i(u,v) = w(u,v) (|grad g_i(u)|^(p-2) + |grad g_i(v)|^(p-2))
    num = cfg.lambda * g0;
    den.setConstant(cfg.lambda);
    for (int v = 0; v < n; ++v) {
      double* nv = num.row(v).data();
      double* dv = den.row(v).data();
      const double* pv = norm_pow.row(v).data();
      for (int u = 0; u < n; ++u) {
        const double wv = w(u, v);
        if (wv == 0.0) continue;
        const double* pu = norm_pow.row(u).data();
        const double* cu = cur.row(u).data();
        for (Eigen::Index i = 0; i < f; ++i) {
          const double gamma = wv * (pu[i] + pv[i]);
          nv[i] += gamma * cu[i];
          dv[i] += gamma;
        }
      }
    }
    next = num.cwiseQuotient(den);
    std::swap(cur, next);
    if (spread_trace) {
      spread_trace->push_back((cur.colwise().maxCoeff() - cur.colwise().minCoeff()).transpose());
    }
  }
  return cur;
}

std::vector<RegVerdict> detect_reg(const nn::Network& net, std::span<const Vec> s_images,
                                   std::span<const int> s_labels, std::span<const Vec> v_images,
                                   const RegularizationConfig& cfg) {
  cfg.validate();
  if (s_images.empty()) throw InvalidInput("detect_reg: empty labeled set S");
  if (s_images.size() != s_labels.size()) throw InvalidInput("detect_reg: S labels size mismatch");

  std::vector<Vec> images;
  images.reserve(s_images.size() + v_images.size());
  images.insert(images.end(), s_images.begin(), s_images.end());
  images.insert(images.end(), v_images.begin(), v_images.end());
  std::vector<Vec> feats;
  feats.reserve(images.size());
  for (const Vec& x : images) feats.push_back(nn::feature(net, x));

  std::vector<Vec> reg_feats;
  if (cfg.enabled) {
    const WeightedGraph graph = build_graph(images, feats, cfg);
    const Matrix smoothed = regularize(graph, cfg);
    reg_feats.reserve(images.size());
    for (Eigen::Index i = 0; i < smoothed.rows(); ++i) reg_feats.push_back(smoothed.row(i).transpose());
  } else {
    reg_feats = feats;
  }

  const std::size_t ns = s_images.size();
  const nn::Dense retrained = nn::retrain_last_layer(
      std::span<const Vec>(reg_feats.data(), ns), s_labels, net.output_layer(), cfg.retrain);

  std::vector<RegVerdict> out(v_images.size());
  for (std::size_t j = 0; j < v_images.size(); ++j) {
    RegVerdict& r = out[j];
    r.original_class = nn::argmax(nn::apply_dense(net.output_layer(), feats[ns + j]));
    r.regularized_class = nn::argmax(nn::apply_dense(retrained, reg_feats[ns + j]));
    r.is_adversarial = r.original_class != r.regularized_class;
  }
  return out;
}

}  // namespace advforge::reg
