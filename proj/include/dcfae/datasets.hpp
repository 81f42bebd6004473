#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dcfae/rng.hpp"
#include "dcfae/tensor.hpp"

namespace dcfae {

/// Labeled image collection. Pixels are [count, height, width, channels] in
/// [0,1]. Labels are kept next to the images for evaluation only; every
/// training entry point takes the pixel tensor alone.
struct ImageDataset {
  std::string name;
  Tensor<float> images;
  std::optional<std::vector<int>> labels;
  int num_classes = 0;

  std::size_t count() const { return images.rank() == 4 ? images.dim(0) : 0; }
  std::size_t height() const { return images.dim(1); }
  std::size_t width() const { return images.dim(2); }
  std::size_t channels() const { return images.dim(3); }

  /// Throws ConsistencyError if any type invariant is violated.
  void validate() const;
};

struct AugmentConfig {
  double rotation_degrees = 10.0;
  double shift_fraction = 0.10;
  bool enabled = true;

  void validate() const;
};

struct BatchPlan {
  std::size_t batch_size = 256;
  bool shuffle = true;
  std::uint64_t seed = 0;
  bool drop_last = true;

  void validate() const;
};

ImageDataset load_idx(const std::filesystem::path& images_path,
                      const std::optional<std::filesystem::path>& labels_path = std::nullopt);

/// Writes images as IDX (0x803 for one channel, 0x804 with a trailing channel
/// axis otherwise). Pixels are quantized to bytes with rounding. A ".gz"
/// suffix selects gzip output.
void save_idx_images(const std::filesystem::path& path, const Tensor<float>& images);
void save_idx_labels(const std::filesystem::path& path, const std::vector<int>& labels);

/// Reads root/<class>/<image files>; classes in lexicographic order.
ImageDataset load_png_dir(const std::filesystem::path& root);

/// Bilinear resample of every image to side x side (half-pixel centers).
ImageDataset resize_to_canvas(const ImageDataset& ds, std::size_t side);
Tensor<float> resize_images(const Tensor<float>& images, std::size_t side);

/// Random rotation + translation per image, zero fill outside the canvas.
Tensor<float> augment(const Tensor<float>& batch, const AugmentConfig& cfg, Rng& rng);

/// Index lists for one epoch. The permutation depends only on (seed, epoch).
std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, const BatchPlan& plan, std::uint64_t epoch);

struct Batch {
  std::vector<std::size_t> indices;
  Tensor<float> images;
};

std::vector<Batch> batches(const Tensor<float>& images, const BatchPlan& plan, std::uint64_t epoch);

/// JSON dataset manifest:
///   {"name": ..., "format": "idx" | "png_dir", "images": ..., "labels": ...,
///    "root": ..., "num_classes": k, "canvas": 32,
///    "subsample": n, "subsample_seed": s}
/// Relative paths resolve against the manifest's directory.
struct DatasetManifest {
  std::string name;
  std::string format = "idx";
  std::filesystem::path images;
  std::optional<std::filesystem::path> labels;
  std::filesystem::path root;
  int num_classes = 0;
  std::size_t canvas = 32;
  std::optional<std::size_t> subsample;
  std::uint64_t subsample_seed = 0;
};

/// Resolves `path` as given, then under $DCFAE_DATA_DIR if it does not exist.
std::filesystem::path resolve_data_path(const std::filesystem::path& path);

DatasetManifest read_manifest(const std::filesystem::path& path);

/// Loads, optionally subsamples, and resizes to the manifest canvas.
ImageDataset load_dataset(const DatasetManifest& manifest);

/// Deterministic subset of `n` samples (order preserved).
ImageDataset subsample(const ImageDataset& ds, std::size_t n, std::uint64_t seed);

}  // namespace dcfae
