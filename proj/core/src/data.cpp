#include "advforge/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "bytes.hpp"

namespace advforge {

namespace detail {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing " + path.string());
}

}  // namespace detail

namespace data {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr std::uint32_t kDetectionSetVersion = 1;

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at, const std::string& what) {
  if (at + 4 > b.size()) throw IoError(what + ": truncated header");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<LabeledImage> load_idx(const std::filesystem::path& images_path,
                                   const std::filesystem::path& labels_path) {
  const auto img = detail::read_file(images_path);
  const auto lab = detail::read_file(labels_path);
  const std::string img_name = images_path.string();
  const std::string lab_name = labels_path.string();

  if (read_be32(img, 0, img_name) != kIdxImages) throw IoError(img_name + ": bad IDX image magic");
  if (read_be32(lab, 0, lab_name) != kIdxLabels) throw IoError(lab_name + ": bad IDX label magic");
  const std::uint32_t count = read_be32(img, 4, img_name);
  const std::uint32_t rows = read_be32(img, 8, img_name);
  const std::uint32_t cols = read_be32(img, 12, img_name);
  const std::uint32_t label_count = read_be32(lab, 4, lab_name);
  if (count != label_count) {
    throw IoError("IDX count mismatch: " + std::to_string(count) + " images vs " +
                  std::to_string(label_count) + " labels");
  }
  const std::size_t pixels = std::size_t{rows} * cols;
  if (img.size() < 16 + pixels * count) throw IoError(img_name + ": truncated pixel data");
  if (lab.size() < 8 + std::size_t{count}) throw IoError(lab_name + ": truncated label data");

  std::vector<LabeledImage> out(count);
  const Shape shape{1, static_cast<int>(rows), static_cast<int>(cols)};
  for (std::uint32_t i = 0; i < count; ++i) {
    LabeledImage& li = out[i];
    li.image.shape = shape;
    li.image.pixels.resize(static_cast<Eigen::Index>(pixels));
    const std::uint8_t* src = img.data() + 16 + pixels * i;
    for (std::size_t p = 0; p < pixels; ++p) li.image.pixels[p] = src[p] / 255.0;
    li.label = lab[8 + i];
  }
  return out;
}

ImageVector add_gaussian_noise(const ImageVector& x, double sigma_255, std::uint64_t seed) {
  if (!(sigma_255 >= 0.0)) throw InvalidInput("add_gaussian_noise: sigma must be >= 0");
  ImageVector out = x;
  if (sigma_255 == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma_255 / 255.0);
  for (Eigen::Index i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = std::clamp(out.pixels[i] + noise(rng), out.u_min, out.u_max);
  }
  return out;
}

const char* to_string(GeneratorTag tag) {
  switch (tag) {
    case GeneratorTag::none: return "none";
    case GeneratorTag::bim: return "bim";
    case GeneratorTag::deepfool: return "deepfool";
  }
  return "?";
}

GeneratorTag parse_generator_tag(const std::string& name) {
  if (name == "none") return GeneratorTag::none;
  if (name == "bim") return GeneratorTag::bim;
  if (name == "deepfool") return GeneratorTag::deepfool;
  throw InvalidInput("unknown generator tag '" + name + "'");
}

std::size_t DetectionSet::adversarial_count() const {
  return static_cast<std::size_t>(std::count_if(
      items.begin(), items.end(), [](const DetectionItem& it) { return it.is_adversarial(); }));
}

std::vector<std::uint8_t> encode_detection_set(const DetectionSet& set) {
  const int m = set.shape.size();
  detail::ByteWriter w;
  w.tag("ADVD");
  w.u32(kDetectionSetVersion);
  w.u64(set.items.size());
  w.u32(static_cast<std::uint32_t>(set.shape.channels));
  w.u32(static_cast<std::uint32_t>(set.shape.height));
  w.u32(static_cast<std::uint32_t>(set.shape.width));
  w.f64(set.u_min);
  w.f64(set.u_max);
  for (const DetectionItem& it : set.items) {
    if (it.pixels.size() != m) throw InvalidInput("detection set item has the wrong pixel count");
    if (it.label < 0 || it.label > 255) throw InvalidInput("detection set label must fit in a byte");
    w.u8(static_cast<std::uint8_t>(it.label));
    w.u8(static_cast<std::uint8_t>(static_cast<std::uint8_t>(it.tag) |
                                   (it.is_adversarial() ? 0x04 : 0x00)));
    w.u32(it.source_index);
    for (Eigen::Index p = 0; p < m; ++p) w.f64(it.pixels[p]);
  }
  return std::move(w.bytes());
}

DetectionSet decode_detection_set(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "detection set");
  if (!r.expect_tag("ADVD")) throw IoError("detection set: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kDetectionSetVersion) {
    throw IoError("detection set: unsupported version " + std::to_string(version));
  }
  DetectionSet set;
  const std::uint64_t count = r.u64();
  set.shape.channels = static_cast<int>(r.u32());
  set.shape.height = static_cast<int>(r.u32());
  set.shape.width = static_cast<int>(r.u32());
  set.u_min = r.f64();
  set.u_max = r.f64();
  const int m = set.shape.size();
  if (m <= 0) throw IoError("detection set: empty image shape");
  const std::size_t item_bytes = 6 + 8 * static_cast<std::size_t>(m);
  if (count > r.remaining() / item_bytes) throw IoError("detection set: truncated data");
  set.items.resize(count);
  for (DetectionItem& it : set.items) {
    it.label = r.u8();
    const std::uint8_t flags = r.u8();
    const std::uint8_t tag = flags & 0x03;
    if (tag > 2 || (flags & ~0x07) != 0) throw IoError("detection set: bad item flags");
    it.tag = static_cast<GeneratorTag>(tag);
    if (((flags & 0x04) != 0) != it.is_adversarial()) {
      throw IoError("detection set: adversarial flag disagrees with generator tag");
    }
    it.source_index = r.u32();
    it.pixels.resize(m);
    for (int p = 0; p < m; ++p) it.pixels[p] = r.f64();
  }
  if (!r.done()) throw IoError("detection set: trailing bytes");
  return set;
}

void save_detection_set(const std::filesystem::path& path, const DetectionSet& set) {
  detail::write_file(path, encode_detection_set(set));
}

DetectionSet load_detection_set(const std::filesystem::path& path) {
  return decode_detection_set(detail::read_file(path));
}

std::map<std::string, std::vector<std::size_t>> split_indices(std::size_t population,
                                                              const SplitSpec& spec,
                                                              std::uint64_t seed) {
  std::size_t total = 0;
  std::set<std::string> names;
  for (const auto& [name, size] : spec) {
    if (!names.insert(name).second) throw InvalidInput("split: duplicate part name '" + name + "'");
    total += size;
  }
  if (total > population) {
    throw InvalidInput("split: requested " + std::to_string(total) + " items from a population of " +
                       std::to_string(population));
  }
  std::vector<std::size_t> order(population);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::map<std::string, std::vector<std::size_t>> out;
  std::size_t at = 0;
  for (const auto& [name, size] : spec) {
    out[name].assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                     order.begin() + static_cast<std::ptrdiff_t>(at + size));
    at += size;
  }
  return out;
}

std::uint64_t sub_seed(std::uint64_t run_seed, const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(run_seed ^ splitmix64(h));
}

}  // namespace data
}  // namespace advforge
