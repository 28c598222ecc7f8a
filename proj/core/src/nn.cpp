#include "advforge/nn.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "advforge/error.hpp"
#include "nn_internal.hpp"

namespace advforge::nn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Shape output_shape(const Layer& layer, const Shape& in, std::size_t index) {
  auto fail = [index](const std::string& what) {
    return InvalidInput("layer " + std::to_string(index) + ": " + what);
  };
  return std::visit(
      Overloaded{
          [&](const Conv2d& c) {
            if (c.in_channels != in.channels) throw fail("conv input channels do not chain");
            if (c.kernel < 1 || c.kernel > in.height || c.kernel > in.width)
              throw fail("conv kernel does not fit the input");
            if (c.weights.size() != c.out_channels * c.in_channels * c.kernel * c.kernel ||
                c.bias.size() != c.out_channels)
              throw fail("conv parameter sizes are inconsistent");
            return Shape{c.out_channels, in.height - c.kernel + 1, in.width - c.kernel + 1};
          },
          [&](const MaxPool& p) {
            if (p.size < 1 || in.height < p.size || in.width < p.size)
              throw fail("pool size does not fit the input");
            return Shape{in.channels, in.height / p.size, in.width / p.size};
          },
          [&](const Relu&) { return in; },
          [&](const Flatten&) { return Shape{in.size(), 1, 1}; },
          [&](const Dense& d) {
            if (d.weights.cols() != in.size()) throw fail("dense input width does not chain");
            if (d.bias.size() != d.weights.rows()) throw fail("dense bias size mismatch");
            return Shape{static_cast<int>(d.weights.rows()), 1, 1};
          },
      },
      layer);
}

void conv_forward(const Conv2d& c, const Shape& in, const Shape& out, const double* x,
                  double* y) {
  const int k = c.kernel;
  for (int o = 0; o < c.out_channels; ++o) {
    double* yo = y + o * out.plane();
    for (int p = 0; p < out.plane(); ++p) yo[p] = c.bias[o];
    for (int i = 0; i < c.in_channels; ++i) {
      const double* xi = x + i * in.plane();
      const double* w = c.weights.data() + ((o * c.in_channels + i) * k) * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double wv = w[ky * k + kx];
          for (int oy = 0; oy < out.height; ++oy) {
            const double* src = xi + (oy + ky) * in.width + kx;
            double* dst = yo + oy * out.width;
            for (int ox = 0; ox < out.width; ++ox) dst[ox] += wv * src[ox];
          }
        }
      }
    }
  }
}

void conv_backward_input(const Conv2d& c, const Shape& in, const Shape& out, const double* gy,
                         double* gx) {
  const int k = c.kernel;
  for (int i = 0; i < in.size(); ++i) gx[i] = 0.0;
  for (int o = 0; o < c.out_channels; ++o) {
    const double* go = gy + o * out.plane();
    for (int i = 0; i < c.in_channels; ++i) {
      double* gi = gx + i * in.plane();
      const double* w = c.weights.data() + ((o * c.in_channels + i) * k) * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double wv = w[ky * k + kx];
          for (int oy = 0; oy < out.height; ++oy) {
            double* dst = gi + (oy + ky) * in.width + kx;
            const double* src = go + oy * out.width;
            for (int ox = 0; ox < out.width; ++ox) dst[ox] += wv * src[ox];
          }
        }
      }
    }
  }
}

void pool_forward(const MaxPool& p, const Shape& in, const Shape& out, const double* x, double* y,
                  std::vector<int>& arg) {
  arg.assign(out.size(), 0);
  for (int c = 0; c < out.channels; ++c) {
    for (int oy = 0; oy < out.height; ++oy) {
      for (int ox = 0; ox < out.width; ++ox) {
        int best = -1;
        double best_v = -std::numeric_limits<double>::infinity();
        for (int dy = 0; dy < p.size; ++dy) {
          for (int dx = 0; dx < p.size; ++dx) {
            const int idx = c * in.plane() + (oy * p.size + dy) * in.width + ox * p.size + dx;
            if (best < 0 || x[idx] > best_v) {
              best_v = x[idx];
              best = idx;
            }
          }
        }
        const int o = c * out.plane() + oy * out.width + ox;
        y[o] = best_v;
        arg[o] = best;
      }
    }
  }
}

void apply_layer(const Layer& layer, const Shape& in_s, const Shape& out_s, const Vec& in,
                 Vec& out, std::vector<int>& arg) {
  out.resize(out_s.size());
  std::visit(Overloaded{
                 [&](const Conv2d& c) { conv_forward(c, in_s, out_s, in.data(), out.data()); },
                 [&](const MaxPool& p) { pool_forward(p, in_s, out_s, in.data(), out.data(), arg); },
                 [&](const Relu&) { out = in.cwiseMax(0.0); },
                 [&](const Flatten&) { out = in; },
                 [&](const Dense& d) { out.noalias() = d.weights * in + d.bias; },
             },
             layer);
}

}  // namespace

// ------------------------------------------------------------------ Network

Network::Network(Shape input, std::vector<Layer> layers)
    : input_(input), layers_(std::move(layers)) {
  if (input_.channels < 1 || input_.height < 1 || input_.width < 1) {
    throw InvalidInput("network input shape must be positive");
  }
  if (layers_.empty() || !std::holds_alternative<Dense>(layers_.back())) {
    throw InvalidInput("network must end with a dense output layer");
  }
  shapes_.reserve(layers_.size() + 1);
  shapes_.push_back(input_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    shapes_.push_back(output_shape(layers_[i], shapes_.back(), i));
  }
}

const Dense& Network::output_layer() const { return std::get<Dense>(layers_.back()); }
Dense& Network::output_layer() { return std::get<Dense>(layers_.back()); }

int Network::category_count() const { return static_cast<int>(output_layer().weights.rows()); }
int Network::feature_size() const { return static_cast<int>(output_layer().weights.cols()); }

std::size_t Network::first_conv_index() const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (std::holds_alternative<Conv2d>(layers_[i])) return i;
  }
  throw InvalidInput("network has no convolutional layer");
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) {
    if (const auto* c = std::get_if<Conv2d>(&l)) n += c->weights.size() + c->bias.size();
    if (const auto* d = std::get_if<Dense>(&l)) n += d->weights.size() + d->bias.size();
  }
  return n;
}

// ------------------------------------------------------------------ forward

ForwardTrace forward_trace(const Network& net, const Vec& x) {
  if (x.size() != net.input_shape().size()) {
    throw InvalidInput("forward: input has " + std::to_string(x.size()) + " values, network expects " +
                       std::to_string(net.input_shape().size()));
  }
  const auto& layers = net.layers();
  const auto& shapes = net.shapes();
  ForwardTrace t;
  t.values.reserve(layers.size() + 1);
  t.argmax.resize(layers.size());
  t.values.push_back(x);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Vec out;
    apply_layer(layers[i], shapes[i], shapes[i + 1], t.values.back(), out, t.argmax[i]);
    t.values.push_back(std::move(out));
  }
  return t;
}

Vec forward(const Network& net, const Vec& x) { return forward_trace(net, x).logits(); }

Vec feature(const Network& net, const Vec& x) {
  ForwardTrace t = forward_trace(net, x);
  return t.values[net.output_layer_index()];
}

Vec first_conv_output(const Network& net, const Vec& x) {
  const std::size_t idx = net.first_conv_index();
  if (x.size() != net.input_shape().size()) {
    throw InvalidInput("first_conv_output: input size mismatch");
  }
  const auto& shapes = net.shapes();
  Vec cur = x;
  std::vector<int> arg;
  for (std::size_t i = 0; i <= idx; ++i) {
    Vec out;
    apply_layer(net.layers()[i], shapes[i], shapes[i + 1], cur, out, arg);
    cur = std::move(out);
  }
  return cur;
}

int argmax(const Vec& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = static_cast<int>(i);
  }
  return best;
}

int predict(const Network& net, const Vec& x) { return argmax(forward(net, x)); }

Vec softmax(const Vec& logits) {
  const double mx = logits.maxCoeff();
  Vec e = (logits.array() - mx).exp();
  return e / e.sum();
}

double cross_entropy(const Vec& logits, int label) {
  if (label < 0 || label >= logits.size()) {
    throw InvalidInput("cross_entropy: label out of range");
  }
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return lse - logits[label];
}

Vec cross_entropy_grad(const Vec& logits, int label) {
  if (label < 0 || label >= logits.size()) {
    throw InvalidInput("cross_entropy_grad: label out of range");
  }
  Vec g = softmax(logits);
  g[label] -= 1.0;
  return g;
}

// ------------------------------------------------------------------ backward

Vec detail::layer_backward_input(const Network& net, const ForwardTrace& trace, std::size_t i,
                                const Vec& g) {
  const auto& shapes = net.shapes();
  const Vec& in = trace.values[i];
  Vec gin(shapes[i].size());
  std::visit(Overloaded{
                 [&](const Conv2d& c) {
                   conv_backward_input(c, shapes[i], shapes[i + 1], g.data(), gin.data());
                 },
                 [&](const MaxPool&) {
                   gin.setZero();
                   const auto& arg = trace.argmax[i];
                   for (Eigen::Index o = 0; o < g.size(); ++o) gin[arg[o]] += g[o];
                 },
                 // subgradient 0 at 0
                 [&](const Relu&) { gin = (in.array() > 0.0).select(g, 0.0); },
                 [&](const Flatten&) { gin = g; },
                 [&](const Dense& d) { gin.noalias() = d.weights.transpose() * g; },
             },
             net.layers()[i]);
  return gin;
}

Vec backprop_to_input(const Network& net, const ForwardTrace& trace, const Vec& upstream,
                      std::size_t end) {
  if (end > net.layer_count() || upstream.size() != net.shapes()[end].size()) {
    throw InvalidInput("backprop_to_input: upstream gradient does not match layer output");
  }
  Vec g = upstream;
  for (std::size_t i = end; i-- > 0;) {
    g = detail::layer_backward_input(net, trace, i, g);
  }
  return g;
}

Vec grad_input(const Network& net, const Vec& x, int label) {
  if (label < 0 || label >= net.category_count()) {
    throw InvalidInput("grad_input: label out of range");
  }
  const ForwardTrace t = forward_trace(net, x);
  return backprop_to_input(net, t, cross_entropy_grad(t.logits(), label), net.layer_count());
}

LocalAffineMap local_affine_output(const Network& net, const Vec& x) {
  const ForwardTrace t = forward_trace(net, x);
  const int n = net.category_count();
  LocalAffineMap map;
  map.a.resize(n, x.size());
  Vec e = Vec::Zero(n);
  for (int r = 0; r < n; ++r) {
    e.setZero();
    e[r] = 1.0;
    map.a.row(r) = backprop_to_input(net, t, e, net.layer_count()).transpose();
  }
  map.d = t.logits() - map.a * x;
  map.anchor = x;
  return map;
}

FeatureAffineMap local_affine_feature(const Network& net, const Vec& x) {
  const ForwardTrace t = forward_trace(net, x);
  const std::size_t end = net.output_layer_index();
  const Vec& h = t.values[end];
  FeatureAffineMap map;
  map.w.resize(h.size(), x.size());
  Vec e = Vec::Zero(h.size());
  for (Eigen::Index r = 0; r < h.size(); ++r) {
    e.setZero();
    e[r] = 1.0;
    map.w.row(r) = backprop_to_input(net, t, e, end).transpose();
  }
  map.b = h - map.w * x;
  map.anchor = x;
  return map;
}

Vec apply_dense(const Dense& layer, const Vec& x) {
  if (layer.weights.cols() != x.size()) {
    throw InvalidInput("apply_dense: input width mismatch");
  }
  return layer.weights * x + layer.bias;
}

}  // namespace advforge::nn
