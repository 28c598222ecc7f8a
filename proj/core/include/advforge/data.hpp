#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "advforge/error.hpp"
#include "advforge/nn.hpp"

namespace advforge::data {

struct LabeledImage {
  ImageVector image;
  int label = 0;  // 0-based category
};

/// Parses a big-endian IDX image/label pair (magic 0x00000803 / 0x00000801).
/// Pixel bytes are scaled from [0, 255] to [0, 1].
std::vector<LabeledImage> load_idx(const std::filesystem::path& images_path,
                                   const std::filesystem::path& labels_path);

/// Adds N(0, (sigma_255/255)^2) to every pixel and clips to the image range.
ImageVector add_gaussian_noise(const ImageVector& x, double sigma_255, std::uint64_t seed);

enum class GeneratorTag : std::uint8_t { none = 0, bim = 1, deepfool = 2 };

const char* to_string(GeneratorTag tag);
GeneratorTag parse_generator_tag(const std::string& name);

struct DetectionItem {
  Vec pixels;
  int label = 0;                   // correct category (the source image's label)
  std::uint32_t source_index = 0;  // index of the source image in its dataset
  GeneratorTag tag = GeneratorTag::none;

  bool is_adversarial() const { return tag != GeneratorTag::none; }
};

/// Mixed real/adversarial image set; each item records its source image and generator.
struct DetectionSet {
  Shape shape{1, 28, 28};
  double u_min = 0.0;
  double u_max = 1.0;
  std::vector<DetectionItem> items;

  std::size_t adversarial_count() const;
};

/// "ADVD" container; see docs/formats.md for the byte layout.
void save_detection_set(const std::filesystem::path& path, const DetectionSet& set);
DetectionSet load_detection_set(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_detection_set(const DetectionSet& set);
DetectionSet decode_detection_set(const std::vector<std::uint8_t>& bytes);

/// Ordered (name, size) parts of a split.
using SplitSpec = std::vector<std::pair<std::string, std::size_t>>;

/// Disjoint, seeded index subsets of [0, population).
std::map<std::string, std::vector<std::size_t>> split_indices(std::size_t population,
                                                              const SplitSpec& spec,
                                                              std::uint64_t seed);

template <class T>
std::map<std::string, std::vector<T>> split(const std::vector<T>& dataset, const SplitSpec& spec,
                                             std::uint64_t seed) {
  std::map<std::string, std::vector<T>> out;
  for (const auto& [name, idx] : split_indices(dataset.size(), spec, seed)) {
    auto& part = out[name];
    part.reserve(idx.size());
    for (std::size_t i : idx) part.push_back(dataset[i]);
  }
  return out;
}

/// Derives an independent seed for a named component from the run seed.
std::uint64_t sub_seed(std::uint64_t run_seed, const std::string& name);

}  // namespace advforge::data
