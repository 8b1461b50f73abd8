#pragma once

// On-disk dataset layout:
//   root/images/NNNNN.png  root/masks/NNNNN.png
//   root/manifest.txt      one "images/... masks/..." pair per line
//   root/cache/            decoupled-label sidecars (GLDT)

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "glasskit/image_io.hpp"
#include "glasskit/labelkit.hpp"
#include "glasskit/ops.hpp"
#include "glasskit/synth.hpp"

namespace glasskit {

namespace fs = std::filesystem;

struct DatasetManifest {
  fs::path root;
  std::vector<std::pair<std::string, std::string>> entries;  // image, mask (relative to root)
  std::string split = "train";
};

inline DatasetManifest read_manifest(const fs::path& root, std::string split = "train") {
  const auto path = root / "manifest.txt";
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  DatasetManifest m{root, {}, std::move(split)};
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string img, mask, extra;
    if (!(ls >> img >> mask) || (ls >> extra))
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected '<image> <mask>'");
    m.entries.emplace_back(img, mask);
  }
  return m;
}

inline void write_manifest(const DatasetManifest& m) {
  const auto path = m.root / "manifest.txt";
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  for (const auto& [img, mask] : m.entries) os << img << ' ' << mask << '\n';
}

/// Worker count: GLASSKIT_THREADS when set, else 1.
inline unsigned worker_count() {
  if (const char* env = std::getenv("GLASSKIT_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return 1;
}

inline std::string item_stem(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", index);
  return buf;
}

/// Render `count` scenes into the dataset layout. Output is identical for any worker count.
inline DatasetManifest write_synthetic_dataset(const fs::path& root, std::size_t count, const SceneConfig& cfg) {
  cfg.validate();
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  DatasetManifest m{root, {}, "train"};
  for (std::size_t i = 0; i < count; ++i)
    m.entries.emplace_back("images/" + item_stem(i) + ".png", "masks/" + item_stem(i) + ".png");
  const unsigned workers = std::max(1u, std::min<unsigned>(worker_count(), static_cast<unsigned>(count)));
  auto render = [&](unsigned w) {
    for (std::size_t i = w; i < count; i += workers) {
      const auto scene = synth_scene(cfg, i);
      save_image((root / m.entries[i].first).string(), scene.image);
      save_mask((root / m.entries[i].second).string(), scene.mask);
    }
  };
  if (workers == 1) {
    render(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(render, w);
    for (auto& t : pool) t.join();
  }
  write_manifest(m);
  return m;
}

/// Bilinear resize with half-pixel centres.
inline RgbImage resize_image(const RgbImage& image, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw InvalidInput("resize target must be positive");
  if (image.height == out_h && image.width == out_w) return image;
  const auto ty = nn::detail::bilinear_taps(image.height, out_h), tx = nn::detail::bilinear_taps(image.width, out_w);
  RgbImage out(out_h, out_w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x) {
        const double fy = ty[y].frac, fx = tx[x].frac;
        const double top = image.at(c, ty[y].lo, tx[x].lo) * (1 - fx) + image.at(c, ty[y].lo, tx[x].hi) * fx;
        const double bot = image.at(c, ty[y].hi, tx[x].lo) * (1 - fx) + image.at(c, ty[y].hi, tx[x].hi) * fx;
        out.at(c, y, x) = static_cast<float>(top * (1 - fy) + bot * fy);
      }
  return out;
}

/// Bilinear for the image, nearest neighbour for the mask.
inline std::pair<RgbImage, BinaryMask> resize_pair(const RgbImage& image, const BinaryMask& mask, int size) {
  if (image.height != mask.height || image.width != mask.width)
    throw InvalidInput("image and mask dimensions differ");
  if (size < 1) throw InvalidInput("resize target must be positive");
  if (image.height == size && image.width == size) return {image, mask};
  BinaryMask m(size, size);
  for (int y = 0; y < size; ++y) {
    const int sy = std::min(mask.height - 1, static_cast<int>((y + 0.5) * mask.height / size));
    for (int x = 0; x < size; ++x) {
      const int sx = std::min(mask.width - 1, static_cast<int>((x + 0.5) * mask.width / size));
      m(y, x) = mask(sy, sx);
    }
  }
  return {resize_image(image, size, size), m};
}

template <class V>
void hflip(Grid<V>& g) {
  for (int y = 0; y < g.height; ++y) std::reverse(g.values.begin() + y * g.width, g.values.begin() + (y + 1) * g.width);
}

inline void hflip(RgbImage& img) {
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y) {
      auto row = img.values.begin() + (static_cast<std::ptrdiff_t>(c) * img.height + y) * img.width;
      std::reverse(row, row + img.width);
    }
}

/// Horizontal flip with probability 0.5, applied identically to both. Returns whether it flipped.
inline bool augment(RgbImage& image, BinaryMask& mask, Rng& rng) {
  if (uniform(rng) >= 0.5) return false;
  hflip(image);
  hflip(mask);
  return true;
}

struct Sample {
  std::string name;
  RgbImage image;
  BinaryMask mask;
  DecoupledLabels labels;
};

/// Loads, resizes and decouples every entry. Labels are read from the cache
/// directory when present, otherwise computed and written there.
inline std::vector<Sample> load_samples(const DatasetManifest& m, int size, bool use_cache = true) {
  if (use_cache) fs::create_directories(m.root / "cache");
  std::vector<Sample> out;
  out.reserve(m.entries.size());
  for (const auto& [img_rel, mask_rel] : m.entries) {
    auto image = load_image((m.root / img_rel).string());
    auto mask = load_mask((m.root / mask_rel).string());
    if (image.height != mask.height || image.width != mask.width)
      throw IoError("dimension mismatch between " + img_rel + " and " + mask_rel);
    auto [rimg, rmask] = resize_pair(image, mask, size);
    Sample s{fs::path(img_rel).stem().string(), std::move(rimg), std::move(rmask), {}};
    const auto stem = m.root / "cache" / (fs::path(img_rel).stem().string() + "_" + std::to_string(size));
    const auto bl_path = stem.string() + ".bl.gldt", dl_path = stem.string() + ".dl.gldt";
    if (use_cache && fs::exists(bl_path) && fs::exists(dl_path)) {
      s.labels.interior = read_gldt(bl_path);
      s.labels.boundary = read_gldt(dl_path);
      if (!s.labels.interior.same_shape(s.mask) || !s.labels.boundary.same_shape(s.mask))
        throw IoError("stale label cache for " + img_rel);
    } else {
      s.labels = decouple(s.mask);
      if (use_cache) {
        write_gldt(bl_path, s.labels.interior);
        write_gldt(dl_path, s.labels.boundary);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

template <class T>
struct Batch {
  nn::Tensor<T> images;    // [B,3,S,S]
  nn::Tensor<T> masks;     // [B,1,S,S]
  nn::Tensor<T> interior;  // [B,1,S,S]
  nn::Tensor<T> boundary;  // [B,1,S,S]
  std::vector<std::size_t> indices;
};

/// Stacks samples into tensors, optionally flipping each one horizontally.
template <class T>
Batch<T> make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices,
                    const std::vector<bool>& flips = {}) {
  if (indices.empty()) throw InvalidInput("empty batch");
  const int h = samples[indices[0]].mask.height, w = samples[indices[0]].mask.width;
  const int b = static_cast<int>(indices.size());
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<T> img(b * 3 * plane), mask(b * plane), inner(b * plane), bound(b * plane);
  for (int n = 0; n < b; ++n) {
    const auto& s = samples[indices[n]];
    if (s.mask.height != h || s.mask.width != w) throw InvalidInput("samples in a batch must share dimensions");
    const bool flip = n < static_cast<int>(flips.size()) && flips[n];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int sx = flip ? w - 1 - x : x;
        const std::size_t o = static_cast<std::size_t>(y) * w + x;
        for (int c = 0; c < 3; ++c) img[(n * 3 + c) * plane + o] = static_cast<T>(s.image.at(c, y, sx));
        mask[n * plane + o] = static_cast<T>(s.mask(y, sx));
        inner[n * plane + o] = static_cast<T>(s.labels.interior(y, sx));
        bound[n * plane + o] = static_cast<T>(s.labels.boundary(y, sx));
      }
  }
  Batch<T> out;
  out.images = nn::Tensor<T>::from({b, 3, h, w}, std::move(img));
  out.masks = nn::Tensor<T>::from({b, 1, h, w}, std::move(mask));
  out.interior = nn::Tensor<T>::from({b, 1, h, w}, std::move(inner));
  out.boundary = nn::Tensor<T>::from({b, 1, h, w}, std::move(bound));
  out.indices = indices;
  return out;
}

/// Endless stream of shuffled batches. Each epoch is a fresh permutation drawn
/// from the seeded generator; the final batch of an epoch may be short.
template <class T>
class BatchStream {
 public:
  BatchStream(std::shared_ptr<const std::vector<Sample>> samples, int batch_size, std::uint64_t seed, bool augment)
      : samples_(std::move(samples)), batch_size_(batch_size), shuffle_rng_(derive_seed(seed, "shuffle")),
        augment_rng_(derive_seed(seed, "augment")), augment_(augment) {
    if (!samples_ || samples_->empty()) throw InvalidInput("batch stream needs a non-empty dataset");
    if (batch_size < 1) throw InvalidInput("batch size must be positive");
  }

  Batch<T> next() {
    if (cursor_ >= order_.size()) {
      order_.resize(samples_->size());
      for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
      std::shuffle(order_.begin(), order_.end(), shuffle_rng_);
      cursor_ = 0;
      ++epoch_;
    }
    const std::size_t end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(batch_size_));
    std::vector<std::size_t> idx(order_.begin() + cursor_, order_.begin() + end);
    cursor_ = end;
    std::vector<bool> flips(idx.size(), false);
    if (augment_)
      for (std::size_t i = 0; i < idx.size(); ++i) flips[i] = uniform(augment_rng_) < 0.5;
    return make_batch<T>(*samples_, idx, flips);
  }

  std::size_t epoch() const { return epoch_; }

 private:
  std::shared_ptr<const std::vector<Sample>> samples_;
  int batch_size_;
  Rng shuffle_rng_, augment_rng_;
  bool augment_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace glasskit
