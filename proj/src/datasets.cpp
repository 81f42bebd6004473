#include "dcfae/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>

#include <json.hpp>
#include <zlib.h>

#include "dcfae/image_io.hpp"

namespace dcfae {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxImagesColor = 0x00000804;

bool is_gzip_path(const fs::path& p) { return p.extension() == ".gz"; }

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::vector<std::uint8_t> bytes;
  if (is_gzip_path(path)) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open " + path.string());
    std::uint8_t chunk[1 << 16];
    int got = 0;
    while ((got = gzread(f, chunk, sizeof(chunk))) > 0) bytes.insert(bytes.end(), chunk, chunk + got);
    const bool failed = got < 0;
    gzclose(f);
    if (failed) throw FormatError("corrupt gzip stream in " + path.string());
    return bytes;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (is_gzip_path(path)) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    const int wrote = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
    if (wrote != static_cast<int>(bytes.size())) throw IoError("short write to " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

void append_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 24));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

struct IdxHeader {
  std::uint32_t magic = 0;
  std::vector<std::size_t> dims;
  std::size_t payload_offset = 0;
};

IdxHeader parse_idx_header(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  if (bytes.size() < 4) throw LengthError(path.string() + ": file shorter than the IDX magic");
  IdxHeader h;
  h.magic = read_be32(bytes, 0);
  if (h.magic != kIdxLabels && h.magic != kIdxImages && h.magic != kIdxImagesColor) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "0x%08x", h.magic);
    throw FormatError(path.string() + ": unsupported IDX magic " + buf);
  }
  const std::size_t rank = h.magic & 0xff;
  if (bytes.size() < 4 + 4 * rank) throw LengthError(path.string() + ": truncated IDX header");
  for (std::size_t i = 0; i < rank; ++i) h.dims.push_back(read_be32(bytes, 4 + 4 * i));
  h.payload_offset = 4 + 4 * rank;
  const std::size_t expected = element_count(h.dims);
  if (bytes.size() - h.payload_offset < expected) {
    throw LengthError(path.string() + ": payload has " + std::to_string(bytes.size() - h.payload_offset) +
                      " bytes, header declares " + std::to_string(expected));
  }
  return h;
}

// Bilinear read with coordinates in pixel units (pixel centers at integers).
// Outside samples either clamp to the border or read as zero.
float sample_bilinear(const float* img, std::size_t h, std::size_t w, std::size_t c, std::size_t ch, double y,
                      double x, bool zero_outside) {
  const double fy = std::floor(y), fx = std::floor(x);
  const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
  const double dy = y - fy, dx = x - fx;
  auto at = [&](long yy, long xx) -> double {
    if (zero_outside) {
      if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) return 0.0;
    } else {
      yy = std::clamp<long>(yy, 0, static_cast<long>(h) - 1);
      xx = std::clamp<long>(xx, 0, static_cast<long>(w) - 1);
    }
    return img[(static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)) * c + ch];
  };
  double v = (1 - dy) * ((1 - dx) * at(y0, x0) + dx * at(y0, x0 + 1)) +
             dy * ((1 - dx) * at(y0 + 1, x0) + dx * at(y0 + 1, x0 + 1));
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

}  // namespace

void ImageDataset::validate() const {
  if (images.rank() != 4) throw ConsistencyError(name + ": images must be [count, height, width, channels]");
  for (std::size_t d : images.shape) {
    if (d == 0) throw EmptyDatasetError(name + ": zero-sized axis in " + shape_string(images.shape));
  }
  for (float p : images.data) {
    if (!(p >= 0.0f && p <= 1.0f)) throw ConsistencyError(name + ": pixel outside [0,1]");
  }
  if (num_classes <= 0) throw ConsistencyError(name + ": num_classes must be positive");
  if (labels) {
    if (labels->size() != count()) {
      throw ConsistencyError(name + ": " + std::to_string(labels->size()) + " labels for " +
                             std::to_string(count()) + " images");
    }
    for (int y : *labels) {
      if (y < 0 || y >= num_classes) throw ConsistencyError(name + ": label " + std::to_string(y) + " out of range");
    }
  }
}

void AugmentConfig::validate() const {
  if (!(rotation_degrees >= 0.0)) throw ConfigError("augment.rotation_degrees must be >= 0");
  if (!(shift_fraction >= 0.0 && shift_fraction < 1.0)) throw ConfigError("augment.shift_fraction must be in [0,1)");
}

void BatchPlan::validate() const {
  if (batch_size < 2) throw ConfigError("batch size must be at least 2");
}

ImageDataset load_idx(const fs::path& images_path, const std::optional<fs::path>& labels_path) {
  const auto bytes = read_file_bytes(images_path);
  const IdxHeader h = parse_idx_header(bytes, images_path);
  if (h.magic == kIdxLabels) throw FormatError(images_path.string() + ": label file given where images expected");

  ImageDataset ds;
  ds.name = images_path.stem().string();
  const std::size_t channels = h.magic == kIdxImagesColor ? h.dims[3] : 1;
  ds.images = Tensor<float>({h.dims[0], h.dims[1], h.dims[2], channels});
  const std::uint8_t* payload = bytes.data() + h.payload_offset;
  for (std::size_t i = 0; i < ds.images.size(); ++i) ds.images[i] = static_cast<float>(payload[i]) / 255.0f;

  if (labels_path) {
    const auto lbytes = read_file_bytes(*labels_path);
    const IdxHeader lh = parse_idx_header(lbytes, *labels_path);
    if (lh.magic != kIdxLabels) throw FormatError(labels_path->string() + ": expected IDX label magic 0x00000801");
    if (lh.dims[0] != ds.count()) {
      throw ConsistencyError("label count " + std::to_string(lh.dims[0]) + " does not match image count " +
                             std::to_string(ds.count()));
    }
    std::vector<int> labels(lh.dims[0]);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = lbytes[lh.payload_offset + i];
    ds.num_classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    ds.labels = std::move(labels);
  } else {
    ds.num_classes = 1;
  }
  ds.validate();
  return ds;
}

void save_idx_images(const fs::path& path, const Tensor<float>& images) {
  if (images.rank() != 4) throw ShapeError("save_idx_images expects [n, h, w, c]");
  std::vector<std::uint8_t> bytes;
  const bool color = images.dim(3) != 1;
  append_be32(bytes, color ? kIdxImagesColor : kIdxImages);
  for (std::size_t i = 0; i < (color ? 4u : 3u); ++i) append_be32(bytes, static_cast<std::uint32_t>(images.dim(i)));
  bytes.reserve(bytes.size() + images.size());
  for (float p : images.data) bytes.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f)));
  write_file_bytes(path, bytes);
}

void save_idx_labels(const fs::path& path, const std::vector<int>& labels) {
  std::vector<std::uint8_t> bytes;
  append_be32(bytes, kIdxLabels);
  append_be32(bytes, static_cast<std::uint32_t>(labels.size()));
  for (int y : labels) {
    if (y < 0 || y > 255) throw ConfigError("IDX labels must fit in a byte");
    bytes.push_back(static_cast<std::uint8_t>(y));
  }
  write_file_bytes(path, bytes);
}

ImageDataset load_png_dir(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError(root.string() + " is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());

  std::vector<Tensor<float>> decoded;
  std::vector<int> labels;
  for (std::size_t k = 0; k < class_dirs.size(); ++k) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[k])) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      decoded.push_back(read_png(f));
      const auto& first = decoded.front();
      const auto& cur = decoded.back();
      if (cur.dim(2) != first.dim(2)) {
        throw ConsistencyError(f.string() + ": " + std::to_string(cur.dim(2)) + " channels, expected " +
                               std::to_string(first.dim(2)));
      }
      if (cur.dim(0) != first.dim(0) || cur.dim(1) != first.dim(1)) {
        throw ConsistencyError(f.string() + ": size " + shape_string(cur.shape) + " differs from " +
                               shape_string(first.shape));
      }
      labels.push_back(static_cast<int>(k));
    }
  }
  if (decoded.empty()) throw EmptyDatasetError(root.string() + " contains no images");

  const Shape& s = decoded.front().shape;
  ImageDataset ds;
  ds.name = root.filename().string();
  ds.images = Tensor<float>({decoded.size(), s[0], s[1], s[2]});
  const std::size_t per = element_count(s);
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    std::copy(decoded[i].data.begin(), decoded[i].data.end(), ds.images.data.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  ds.num_classes = static_cast<int>(class_dirs.size());
  ds.labels = std::move(labels);
  ds.validate();
  return ds;
}

Tensor<float> resize_images(const Tensor<float>& images, std::size_t side) {
  if (side == 0) throw ConfigError("canvas side must be positive");
  const std::size_t n = images.dim(0), h = images.dim(1), w = images.dim(2), c = images.dim(3);
  if (h == side && w == side) return images;
  Tensor<float> out({n, side, side, c});
  const double sy = static_cast<double>(h) / static_cast<double>(side);
  const double sx = static_cast<double>(w) / static_cast<double>(side);
  for (std::size_t i = 0; i < n; ++i) {
    const float* src = images.ptr() + i * h * w * c;
    float* dst = out.ptr() + i * side * side * c;
    for (std::size_t y = 0; y < side; ++y) {
      const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
      for (std::size_t x = 0; x < side; ++x) {
        const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
        for (std::size_t ch = 0; ch < c; ++ch) {
          dst[(y * side + x) * c + ch] = sample_bilinear(src, h, w, c, ch, fy, fx, false);
        }
      }
    }
  }
  return out;
}

ImageDataset resize_to_canvas(const ImageDataset& ds, std::size_t side) {
  ImageDataset out = ds;
  out.images = resize_images(ds.images, side);
  return out;
}

Tensor<float> augment(const Tensor<float>& batch, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  if (!cfg.enabled || (cfg.rotation_degrees == 0.0 && cfg.shift_fraction == 0.0)) return batch;
  const std::size_t n = batch.dim(0), h = batch.dim(1), w = batch.dim(2), c = batch.dim(3);
  Tensor<float> out(batch.shape);
  std::uniform_real_distribution<double> angle_dist(-cfg.rotation_degrees, cfg.rotation_degrees);
  std::uniform_real_distribution<double> shift_dist(-cfg.shift_fraction, cfg.shift_fraction);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0, cx = (static_cast<double>(w) - 1.0) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = angle_dist(rng) * std::numbers::pi / 180.0;
    const double tx = shift_dist(rng) * static_cast<double>(w);
    const double ty = shift_dist(rng) * static_cast<double>(h);
    const double cos_a = std::cos(angle), sin_a = std::sin(angle);
    const float* src = batch.ptr() + i * h * w * c;
    float* dst = out.ptr() + i * h * w * c;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        // inverse map: undo the shift, then rotate back about the center
        const double u = static_cast<double>(x) - cx - tx;
        const double v = static_cast<double>(y) - cy - ty;
        const double sx = cos_a * u + sin_a * v + cx;
        const double sy = -sin_a * u + cos_a * v + cy;
        for (std::size_t ch = 0; ch < c; ++ch) dst[(y * w + x) * c + ch] = sample_bilinear(src, h, w, c, ch, sy, sx, true);
      }
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, const BatchPlan& plan, std::uint64_t epoch) {
  plan.validate();
  if (plan.batch_size > count) {
    throw ConfigError("batch size " + std::to_string(plan.batch_size) + " exceeds dataset size " + std::to_string(count));
  }
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (plan.shuffle) {
    Rng rng = make_rng({plan.seed, to_key(Stream::kShuffle), epoch});
    std::shuffle(order.begin(), order.end(), rng);
  }
  const std::size_t full = count / plan.batch_size;
  const std::size_t total = plan.drop_last ? full : (count + plan.batch_size - 1) / plan.batch_size;
  std::vector<std::vector<std::size_t>> out(total);
  for (std::size_t b = 0; b < total; ++b) {
    const std::size_t begin = b * plan.batch_size;
    const std::size_t end = std::min(count, begin + plan.batch_size);
    out[b].assign(order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<Batch> batches(const Tensor<float>& images, const BatchPlan& plan, std::uint64_t epoch) {
  std::vector<Batch> out;
  for (auto& idx : batch_indices(images.dim(0), plan, epoch)) {
    Batch b;
    b.images = gather_rows<float>(images, idx);
    b.indices = std::move(idx);
    out.push_back(std::move(b));
  }
  return out;
}

fs::path resolve_data_path(const fs::path& path) {
  if (path.empty() || path.is_absolute() || fs::exists(path)) return path;
  if (const char* root = std::getenv("DCFAE_DATA_DIR")) {
    fs::path candidate = fs::path(root) / path;
    if (fs::exists(candidate)) return candidate;
  }
  return path;
}

DatasetManifest read_manifest(const fs::path& path) {
  const fs::path resolved = resolve_data_path(path);
  std::ifstream in(resolved);
  if (!in) throw IoError("cannot open dataset manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("dataset manifest " + resolved.string() + ": " + e.what());
  }
  const fs::path base = resolved.parent_path();
  auto rel = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  DatasetManifest m;
  m.name = j.value("name", resolved.stem().string());
  m.format = j.value("format", std::string("idx"));
  if (m.format == "idx") {
    if (!j.contains("images")) throw ConfigError("dataset manifest needs \"images\"");
    m.images = rel(j.at("images").get<std::string>());
    if (j.contains("labels") && !j.at("labels").is_null()) m.labels = rel(j.at("labels").get<std::string>());
  } else if (m.format == "png_dir") {
    if (!j.contains("root")) throw ConfigError("png_dir manifest needs \"root\"");
    m.root = rel(j.at("root").get<std::string>());
  } else {
    throw ConfigError("unknown dataset format \"" + m.format + "\"");
  }
  m.num_classes = j.value("num_classes", 0);
  m.canvas = j.value("canvas", std::size_t{32});
  if (j.contains("subsample") && !j.at("subsample").is_null()) m.subsample = j.at("subsample").get<std::size_t>();
  m.subsample_seed = j.value("subsample_seed", std::uint64_t{0});
  return m;
}

ImageDataset subsample(const ImageDataset& ds, std::size_t n, std::uint64_t seed) {
  if (n >= ds.count()) return ds;
  std::vector<std::size_t> order(ds.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng({seed, to_key(Stream::kShuffle), 0xD5});
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(n);
  std::sort(order.begin(), order.end());
  ImageDataset out;
  out.name = ds.name;
  out.num_classes = ds.num_classes;
  out.images = gather_rows<float>(ds.images, order);
  if (ds.labels) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = (*ds.labels)[order[i]];
    out.labels = std::move(labels);
  }
  return out;
}

ImageDataset load_dataset(const DatasetManifest& m) {
  ImageDataset ds = m.format == "png_dir" ? load_png_dir(m.root) : load_idx(m.images, m.labels);
  if (!m.name.empty()) ds.name = m.name;
  if (m.num_classes > 0) {
    if (ds.labels && ds.num_classes > m.num_classes) {
      throw ConsistencyError(ds.name + ": labels reach " + std::to_string(ds.num_classes - 1) +
                             " but manifest declares " + std::to_string(m.num_classes) + " classes");
    }
    ds.num_classes = m.num_classes;
  }
  if (m.subsample) ds = subsample(ds, *m.subsample, m.subsample_seed);
  ds = resize_to_canvas(ds, m.canvas);
  ds.validate();
  return ds;
}

}  // namespace dcfae
