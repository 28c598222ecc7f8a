#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "advforge/error.hpp"
#include "advforge/nn.hpp"
#include "nn_internal.hpp"

namespace advforge::nn {

namespace {

/// Flat gradient buffers matching a network's parameters, layer by layer.
struct ParamGrads {
  std::vector<Vec> weights;
  std::vector<Vec> bias;

  explicit ParamGrads(const Network& net) {
    for (const Layer& l : net.layers()) {
      if (const auto* c = std::get_if<Conv2d>(&l)) {
        weights.push_back(Vec::Zero(c->weights.size()));
        bias.push_back(Vec::Zero(c->bias.size()));
      } else if (const auto* d = std::get_if<Dense>(&l)) {
        weights.push_back(Vec::Zero(d->weights.size()));
        bias.push_back(Vec::Zero(d->bias.size()));
      } else {
        weights.emplace_back();
        bias.emplace_back();
      }
    }
  }

  void zero() {
    for (Vec& v : weights) v.setZero();
    for (Vec& v : bias) v.setZero();
  }
};

/// Accumulates dJ/dparams for one sample into `grads`; `g` is dJ/dlogits.
void backprop_params(const Network& net, const ForwardTrace& t, Vec g, ParamGrads& grads) {
  const auto& layers = net.layers();
  const auto& shapes = net.shapes();
  for (std::size_t i = layers.size(); i-- > 0;) {
    const Vec& in = t.values[i];
    if (const auto* d = std::get_if<Dense>(&layers[i])) {
      Eigen::Map<Matrix> gw(grads.weights[i].data(), d->weights.rows(), d->weights.cols());
      gw.noalias() += g * in.transpose();
      grads.bias[i] += g;
    } else if (const auto* c = std::get_if<Conv2d>(&layers[i])) {
      const Shape& is = shapes[i];
      const Shape& os = shapes[i + 1];
      const int k = c->kernel;
      for (int o = 0; o < c->out_channels; ++o) {
        const double* go = g.data() + o * os.plane();
        double gb = 0.0;
        for (int p = 0; p < os.plane(); ++p) gb += go[p];
        grads.bias[i][o] += gb;
        for (int ic = 0; ic < c->in_channels; ++ic) {
          const double* xi = in.data() + ic * is.plane();
          double* w = grads.weights[i].data() + ((o * c->in_channels + ic) * k) * k;
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              double acc = 0.0;
              for (int oy = 0; oy < os.height; ++oy) {
                const double* src = xi + (oy + ky) * is.width + kx;
                const double* gr = go + oy * os.width;
                for (int ox = 0; ox < os.width; ++ox) acc += gr[ox] * src[ox];
              }
              w[ky * k + kx] += acc;
            }
          }
        }
      }
    }
    if (i == 0) break;
    g = detail::layer_backward_input(net, t, i, g);
  }
}

void init_uniform(Vec& v, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = dist(rng);
}

}  // namespace

Network make_lenet(Shape input, int categories, std::uint64_t seed) {
  if (categories < 1) throw InvalidInput("make_lenet: categories must be >= 1");
  std::mt19937_64 rng(seed);
  auto conv = [&](int in_c, int out_c, int k) {
    Conv2d c{in_c, out_c, k, Vec(out_c * in_c * k * k), Vec::Zero(out_c)};
    init_uniform(c.weights, std::sqrt(6.0 / (in_c * k * k)), rng);
    return c;
  };
  auto dense = [&](int in, int out) {
    Dense d{Matrix(out, in), Vec::Zero(out)};
    Eigen::Map<Vec> w(d.weights.data(), d.weights.size());
    Vec tmp(d.weights.size());
    init_uniform(tmp, std::sqrt(6.0 / in), rng);
    w = tmp;
    return d;
  };
  std::vector<Layer> layers;
  layers.emplace_back(conv(input.channels, 6, 5));
  layers.emplace_back(Relu{});
  layers.emplace_back(MaxPool{2});
  layers.emplace_back(conv(6, 16, 5));
  layers.emplace_back(Relu{});
  layers.emplace_back(MaxPool{2});
  layers.emplace_back(Flatten{});
  // Flattened width depends on the input geometry.
  const int h1 = (input.height - 4) / 2, w1 = (input.width - 4) / 2;
  const int h2 = (h1 - 4) / 2, w2 = (w1 - 4) / 2;
  if (h2 < 1 || w2 < 1) throw InvalidInput("make_lenet: input too small");
  layers.emplace_back(dense(16 * h2 * w2, 120));
  layers.emplace_back(Relu{});
  layers.emplace_back(dense(120, 84));
  layers.emplace_back(Relu{});
  layers.emplace_back(dense(84, categories));
  return Network(input, std::move(layers));
}

TrainResult train_victim(Network init, std::span<const Vec> images, std::span<const int> labels,
                         const TrainHyper& hyper) {
  if (images.empty()) throw InvalidInput("train_victim: empty dataset");
  if (images.size() != labels.size()) throw InvalidInput("train_victim: images/labels size mismatch");
  if (hyper.batch < 1 || hyper.epochs < 0 || !(hyper.lr > 0.0)) {
    throw InvalidInput("train_victim: invalid hyperparameters");
  }
  const int n_cat = init.category_count();
  for (int l : labels) {
    if (l < 0 || l >= n_cat) throw InvalidInput("train_victim: label out of range");
  }

  TrainResult result{std::move(init), 0.0, {}};
  Network& net = result.net;
  ParamGrads grads(net);
  ParamGrads velocity(net);
  std::mt19937_64 rng(hyper.seed);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch));
      grads.zero();
      for (std::size_t j = start; j < end; ++j) {
        const std::size_t idx = order[j];
        const ForwardTrace t = forward_trace(net, images[idx]);
        epoch_loss += cross_entropy(t.logits(), labels[idx]);
        backprop_params(net, t, cross_entropy_grad(t.logits(), labels[idx]), grads);
      }
      const double scale = hyper.lr / static_cast<double>(end - start);
      for (std::size_t i = 0; i < net.layer_count(); ++i) {
        Layer& layer = net.layer(i);
        auto step = [&](Eigen::Map<Vec> param, Vec& vel, const Vec& g) {
          vel = hyper.momentum * vel - scale * g;
          param += vel;
        };
        if (auto* c = std::get_if<Conv2d>(&layer)) {
          step({c->weights.data(), c->weights.size()}, velocity.weights[i], grads.weights[i]);
          step({c->bias.data(), c->bias.size()}, velocity.bias[i], grads.bias[i]);
        } else if (auto* d = std::get_if<Dense>(&layer)) {
          step({d->weights.data(), d->weights.size()}, velocity.weights[i], grads.weights[i]);
          step({d->bias.data(), d->bias.size()}, velocity.bias[i], grads.bias[i]);
        }
      }
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  result.train_accuracy = accuracy(net, images, labels);
  return result;
}

double accuracy(const Network& net, std::span<const Vec> images, std::span<const int> labels) {
  if (images.size() != labels.size()) throw InvalidInput("accuracy: size mismatch");
  if (images.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (predict(net, images[i]) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

Dense retrain_last_layer(std::span<const Vec> features, std::span<const int> labels,
                         const Dense& init, const RetrainHyper& hyper) {
  if (features.empty()) throw InvalidInput("retrain_last_layer: no features");
  if (features.size() != labels.size()) throw InvalidInput("retrain_last_layer: size mismatch");
  const Eigen::Index f = init.weights.cols();
  const Eigen::Index n_cat = init.weights.rows();
  for (const Vec& h : features) {
    if (h.size() != f) throw InvalidInput("retrain_last_layer: feature width mismatch");
  }
  for (int l : labels) {
    if (l < 0 || l >= n_cat) throw InvalidInput("retrain_last_layer: label out of range");
  }
  if (hyper.iterations < 0 || !(hyper.lr > 0.0)) {
    throw InvalidInput("retrain_last_layer: invalid hyperparameters");
  }

  const Eigen::Index n = static_cast<Eigen::Index>(features.size());
  Matrix x(n, f);
  double mean_sq = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = features[i].transpose();
    mean_sq += features[i].squaredNorm() + 1.0;
  }
  mean_sq /= static_cast<double>(n);
  const double step = hyper.lr / (0.5 * mean_sq);

  Dense out{Matrix::Zero(n_cat, f), Vec::Zero(n_cat)};
  if (hyper.warm_start) out = init;

  Matrix onehot = Matrix::Zero(n, n_cat);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, labels[i]) = 1.0;

  Matrix probs(n, n_cat);
  for (int it = 0; it < hyper.iterations; ++it) {
    probs.noalias() = x * out.weights.transpose();
    probs.rowwise() += out.bias.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = probs.row(i).maxCoeff();
      probs.row(i) = (probs.row(i).array() - mx).exp();
      probs.row(i) /= probs.row(i).sum();
    }
    probs -= onehot;
    out.weights.noalias() -= (step / static_cast<double>(n)) * (probs.transpose() * x);
    out.bias -= (step / static_cast<double>(n)) * probs.colwise().sum().transpose();
  }
  return out;
}

}  // namespace advforge::nn
