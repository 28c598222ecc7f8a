#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "advforge/detect_hist.hpp"
#include "advforge/nn.hpp"

namespace advforge::model_io {

inline constexpr std::uint32_t kModelVersion = 1;

/// Contents of an "ADVF" file: the network and, optionally, a trained
/// histogram detector stored as an auxiliary section.
struct ModelFile {
  nn::Network net;
  std::optional<hist::HistDetector> hist_detector;
};

std::vector<std::uint8_t> encode(const ModelFile& model);
ModelFile decode(const std::vector<std::uint8_t>& bytes);

void save(const std::filesystem::path& path, const ModelFile& model);
ModelFile load(const std::filesystem::path& path);

}  // namespace advforge::model_io
