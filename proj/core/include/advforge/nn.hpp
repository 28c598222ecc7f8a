#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "advforge/numerics.hpp"

namespace advforge {

/// Channel-major tensor shape (channels x height x width).
struct Shape {
  int channels = 1;
  int height = 1;
  int width = 1;

  int size() const { return channels * height * width; }
  int plane() const { return height * width; }
  bool operator==(const Shape&) const = default;
};

/// Flat image with its declared geometry and value range.
struct ImageVector {
  Vec pixels;
  Shape shape;
  double u_min = 0.0;
  double u_max = 1.0;
};

namespace nn {

/// Valid (unpadded) stride-1 convolution; weights laid out [out][in][ky][kx].
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  Vec weights;
  Vec bias;
};

/// Non-overlapping max pooling (stride == size). Ties route to the first index.
struct MaxPool {
  int size = 2;
};

struct Relu {};

struct Flatten {};

/// y = W x + b with W stored out x in.
struct Dense {
  Matrix weights;
  Vec bias;
};

using Layer = std::variant<Conv2d, MaxPool, Relu, Flatten, Dense>;

/// Sequential piecewise-linear classifier. The final layer is always a Dense
/// layer producing the N pre-softmax logits; the feature vector h(x) is the
/// activation entering that layer.
class Network {
 public:
  Network() = default;
  Network(Shape input, std::vector<Layer> layers);

  const Shape& input_shape() const { return input_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t layer_count() const { return layers_.size(); }

  /// shapes()[i] is the input shape of layer i; shapes().back() is the output.
  const std::vector<Shape>& shapes() const { return shapes_; }

  std::size_t output_layer_index() const { return layers_.size() - 1; }
  const Dense& output_layer() const;
  Dense& output_layer();
  int category_count() const;
  int feature_size() const;

  /// Index of the first Conv2d layer; throws InvalidInput when there is none.
  std::size_t first_conv_index() const;

  std::size_t parameter_count() const;

  /// Mutable access for training. Parameter sizes must not change.
  Layer& layer(std::size_t i) { return layers_[i]; }

 private:
  Shape input_;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
};

/// Activations recorded by a forward pass; enough to replay the network's
/// gate pattern (ReLU signs, pooling argmax) during backpropagation.
struct ForwardTrace {
  std::vector<Vec> values;              // values[0] = input, values[i+1] = output of layer i
  std::vector<std::vector<int>> argmax;  // per layer; non-empty for MaxPool only

  const Vec& logits() const { return values.back(); }
};

ForwardTrace forward_trace(const Network& net, const Vec& x);

/// Pre-softmax logits f(x).
Vec forward(const Network& net, const Vec& x);

/// h(x): the activation entering the final dense layer.
Vec feature(const Network& net, const Vec& x);

/// Output of the first convolutional layer (before its activation).
Vec first_conv_output(const Network& net, const Vec& x);

/// k(x), 0-based.
int predict(const Network& net, const Vec& x);

Vec softmax(const Vec& logits);
int argmax(const Vec& v);

/// Softmax cross-entropy J(f(x), label).
double cross_entropy(const Vec& logits, int label);

/// dJ/dlogits for softmax cross-entropy.
Vec cross_entropy_grad(const Vec& logits, int label);

/// Backpropagates `upstream` (gradient w.r.t. the output of layer end-1)
/// down to the input with every gate frozen at the pattern in `trace`.
Vec backprop_to_input(const Network& net, const ForwardTrace& trace, const Vec& upstream,
                      std::size_t end);

/// Exact gradient of J(f(x), label) w.r.t. the input pixels.
Vec grad_input(const Network& net, const Vec& x, int label);

/// y = A x + d, valid while x stays in the anchor's activation region.
struct LocalAffineMap {
  Matrix a;  // N x m
  Vec d;
  Vec anchor;
};

/// h(x) = W x + b around the anchor.
struct FeatureAffineMap {
  Matrix w;  // F x m
  Vec b;
  Vec anchor;
};

LocalAffineMap local_affine_output(const Network& net, const Vec& x);
FeatureAffineMap local_affine_feature(const Network& net, const Vec& x);

// ---------------------------------------------------------------- training

struct TrainHyper {
  double lr = 0.01;
  double momentum = 0.9;
  int epochs = 5;
  int batch = 64;
  std::uint64_t seed = 1;
};

struct TrainResult {
  Network net;
  double train_accuracy = 0.0;
  std::vector<double> epoch_loss;
};

/// conv(6@5x5)-relu-maxpool2-conv(16@5x5)-relu-maxpool2-dense(120)-relu-dense(84)-relu-dense(N),
/// He-uniform initialised from `seed`.
Network make_lenet(Shape input, int categories, std::uint64_t seed);

/// Mini-batch SGD with momentum on softmax cross-entropy. Deterministic for a
/// fixed seed. Labels are 0-based category indices.
TrainResult train_victim(Network init, std::span<const Vec> images, std::span<const int> labels,
                         const TrainHyper& hyper);

double accuracy(const Network& net, std::span<const Vec> images, std::span<const int> labels);

struct RetrainHyper {
  /// Step size as a fraction of 1/L, L = 0.5 * mean |[h;1]|^2 (a bound on the
  /// curvature of the softmax cross-entropy).
  double lr = 1.0;
  int iterations = 500;
  bool warm_start = true;
};

/// Softmax-regression fit of a replacement output layer on (feature, label)
/// pairs by full-batch gradient descent. Starts from `init` when
/// hyper.warm_start is set, from zeros otherwise.
Dense retrain_last_layer(std::span<const Vec> features, std::span<const int> labels,
                         const Dense& init, const RetrainHyper& hyper);

Vec apply_dense(const Dense& layer, const Vec& x);

}  // namespace nn
}  // namespace advforge
