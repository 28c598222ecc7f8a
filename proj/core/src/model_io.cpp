#include "advforge/model_io.hpp"

#include <limits>

#include "bytes.hpp"

namespace advforge::model_io {

namespace {

enum class LayerKind : std::uint8_t { conv = 1, maxpool = 2, relu = 3, flatten = 4, dense = 5 };

void put_vec(detail::ByteWriter& w, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v[i]);
}

Vec get_vec(detail::ByteReader& r, std::size_t n) {
  r.need(8 * n);
  Vec v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = r.f64();
  return v;
}

std::uint32_t checked_u32(std::uint32_t v, std::uint32_t limit, const char* what) {
  if (v == 0 || v > limit) throw IoError(std::string("model file: bad ") + what);
  return v;
}

std::vector<std::uint8_t> encode_svm(const hist::HistDetector& det) {
  detail::ByteWriter w;
  const hist::HistogramConfig& cfg = det.config;
  w.u32(static_cast<std::uint32_t>(cfg.bins));
  w.u8(cfg.use_reinforcement ? 1 : 0);
  w.f64(cfg.reinforcement_eps);
  w.u32(static_cast<std::uint32_t>(cfg.channel_range.size()));
  for (double v : cfg.channel_range) w.f64(v);
  w.f64(det.svm.hyper.c);
  w.u32(static_cast<std::uint32_t>(det.svm.hyper.epochs));
  w.u64(det.svm.hyper.seed);
  const Eigen::Index dim = det.svm.weights.size();
  if (det.svm.feature_mean.size() != dim || det.svm.feature_std.size() != dim) {
    throw InvalidInput("model file: inconsistent SVM vector sizes");
  }
  w.u64(static_cast<std::uint64_t>(dim));
  put_vec(w, det.svm.weights);
  w.f64(det.svm.bias);
  put_vec(w, det.svm.feature_mean);
  put_vec(w, det.svm.feature_std);
  return std::move(w.bytes());
}

hist::HistDetector decode_svm(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "model file SVM section");
  hist::HistDetector det;
  det.config.bins = static_cast<int>(checked_u32(r.u32(), 1u << 20, "histogram bin count"));
  det.config.use_reinforcement = r.u8() != 0;
  det.config.reinforcement_eps = r.f64();
  const std::uint32_t ranges = r.u32();
  if (ranges > 4096) throw IoError("model file: bad channel range count");
  for (std::uint32_t i = 0; i < ranges; ++i) det.config.channel_range.push_back(r.f64());
  det.svm.hyper.c = r.f64();
  det.svm.hyper.epochs = static_cast<int>(r.u32());
  det.svm.hyper.seed = r.u64();
  const std::uint64_t dim = r.u64();
  if (dim > r.remaining() / 8) throw IoError("model file: truncated SVM section");
  det.svm.weights = get_vec(r, dim);
  det.svm.bias = r.f64();
  det.svm.feature_mean = get_vec(r, dim);
  det.svm.feature_std = get_vec(r, dim);
  if (!r.done()) throw IoError("model file: trailing bytes in SVM section");
  return det;
}

}  // namespace

std::vector<std::uint8_t> encode(const ModelFile& model) {
  const nn::Network& net = model.net;
  detail::ByteWriter w;
  w.tag("ADVF");
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(net.input_shape().channels));
  w.u32(static_cast<std::uint32_t>(net.input_shape().height));
  w.u32(static_cast<std::uint32_t>(net.input_shape().width));
  w.u32(static_cast<std::uint32_t>(net.layer_count()));
  for (const nn::Layer& layer : net.layers()) {
    if (const auto* c = std::get_if<nn::Conv2d>(&layer)) {
      w.u8(static_cast<std::uint8_t>(LayerKind::conv));
      w.u32(static_cast<std::uint32_t>(c->in_channels));
      w.u32(static_cast<std::uint32_t>(c->out_channels));
      w.u32(static_cast<std::uint32_t>(c->kernel));
    } else if (const auto* p = std::get_if<nn::MaxPool>(&layer)) {
      w.u8(static_cast<std::uint8_t>(LayerKind::maxpool));
      w.u32(static_cast<std::uint32_t>(p->size));
    } else if (std::holds_alternative<nn::Relu>(layer)) {
      w.u8(static_cast<std::uint8_t>(LayerKind::relu));
    } else if (std::holds_alternative<nn::Flatten>(layer)) {
      w.u8(static_cast<std::uint8_t>(LayerKind::flatten));
    } else {
      const auto& d = std::get<nn::Dense>(layer);
      w.u8(static_cast<std::uint8_t>(LayerKind::dense));
      w.u32(static_cast<std::uint32_t>(d.weights.cols()));
      w.u32(static_cast<std::uint32_t>(d.weights.rows()));
    }
  }
  for (const nn::Layer& layer : net.layers()) {
    if (const auto* c = std::get_if<nn::Conv2d>(&layer)) {
      put_vec(w, c->weights);
      put_vec(w, c->bias);
    } else if (const auto* d = std::get_if<nn::Dense>(&layer)) {
      for (Eigen::Index i = 0; i < d->weights.size(); ++i) w.f64(d->weights.data()[i]);
      put_vec(w, d->bias);
    }
  }
  w.u32(model.hist_detector ? 1 : 0);
  if (model.hist_detector) {
    const auto payload = encode_svm(*model.hist_detector);
    w.tag("SVM1");
    w.u64(payload.size());
    w.raw(payload.data(), payload.size());
  }
  return std::move(w.bytes());
}

ModelFile decode(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "model file");
  if (!r.expect_tag("ADVF")) throw IoError("model file: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kModelVersion) throw IoError("model file: unsupported version " + std::to_string(version));
  constexpr std::uint32_t kDimLimit = 1u << 16;
  Shape input;
  input.channels = static_cast<int>(checked_u32(r.u32(), kDimLimit, "input channels"));
  input.height = static_cast<int>(checked_u32(r.u32(), kDimLimit, "input height"));
  input.width = static_cast<int>(checked_u32(r.u32(), kDimLimit, "input width"));
  const std::uint32_t count = checked_u32(r.u32(), 1024, "layer count");

  std::vector<nn::Layer> layers;
  layers.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    switch (static_cast<LayerKind>(r.u8())) {
      case LayerKind::conv: {
        nn::Conv2d c;
        c.in_channels = static_cast<int>(checked_u32(r.u32(), kDimLimit, "conv in_channels"));
        c.out_channels = static_cast<int>(checked_u32(r.u32(), kDimLimit, "conv out_channels"));
        c.kernel = static_cast<int>(checked_u32(r.u32(), 1024, "conv kernel"));
        layers.emplace_back(std::move(c));
        break;
      }
      case LayerKind::maxpool:
        layers.emplace_back(nn::MaxPool{static_cast<int>(checked_u32(r.u32(), 1024, "pool size"))});
        break;
      case LayerKind::relu: layers.emplace_back(nn::Relu{}); break;
      case LayerKind::flatten: layers.emplace_back(nn::Flatten{}); break;
      case LayerKind::dense: {
        const std::uint32_t in = checked_u32(r.u32(), 1u << 24, "dense input width");
        const std::uint32_t out = checked_u32(r.u32(), 1u << 24, "dense output width");
        nn::Dense d;
        d.weights.resize(out, in);
        d.bias.resize(out);
        layers.emplace_back(std::move(d));
        break;
      }
      default: throw IoError("model file: unknown layer kind");
    }
  }
  for (nn::Layer& layer : layers) {
    if (auto* c = std::get_if<nn::Conv2d>(&layer)) {
      const std::size_t nw = std::size_t(c->out_channels) * c->in_channels * c->kernel * c->kernel;
      if (nw > r.remaining() / 8) throw IoError("model file: truncated parameters");
      c->weights = get_vec(r, nw);
      c->bias = get_vec(r, static_cast<std::size_t>(c->out_channels));
    } else if (auto* d = std::get_if<nn::Dense>(&layer)) {
      const std::size_t nw = static_cast<std::size_t>(d->weights.size());
      if (nw > r.remaining() / 8) throw IoError("model file: truncated parameters");
      for (std::size_t i = 0; i < nw; ++i) d->weights.data()[i] = r.f64();
      d->bias = get_vec(r, static_cast<std::size_t>(d->bias.size()));
    }
  }

  ModelFile model;
  try {
    model.net = nn::Network(input, std::move(layers));
  } catch (const InvalidInput& e) {
    throw IoError(std::string("model file: inconsistent layer table: ") + e.what());
  }

  const std::uint32_t aux = r.u32();
  for (std::uint32_t i = 0; i < aux; ++i) {
    const bool is_svm = r.expect_tag("SVM1");
    const std::uint64_t len = r.u64();
    if (len > r.remaining()) throw IoError("model file: truncated auxiliary section");
    std::vector<std::uint8_t> payload(len);
    for (auto& b : payload) b = r.u8();
    if (!is_svm) throw IoError("model file: unknown auxiliary section");
    if (model.hist_detector) throw IoError("model file: duplicate SVM section");
    model.hist_detector = decode_svm(payload);
  }
  if (!r.done()) throw IoError("model file: trailing bytes");
  return model;
}

void save(const std::filesystem::path& path, const ModelFile& model) {
  detail::write_file(path, encode(model));
}

ModelFile load(const std::filesystem::path& path) { return decode(detail::read_file(path)); }

}  // namespace advforge::model_io
