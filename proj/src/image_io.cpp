#include "dcfae/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include <png.h>

namespace dcfae {

Tensor<float> read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw DecodeError("cannot decode image " + path.string() + ": " + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t channels = color ? 3 : 1;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw DecodeError("cannot decode image " + path.string() + ": " + msg);
  }
  Tensor<float> out({image.height, image.width, channels});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(buffer[i]) / 255.0f;
  return out;
}

void write_png(const std::filesystem::path& path, const Tensor<float>& img) {
  if (img.rank() != 3 || (img.dim(2) != 1 && img.dim(2) != 3)) {
    throw ShapeError("write_png expects [h, w, 1|3], got " + shape_string(img.shape));
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.dim(1));
  image.height = static_cast<png_uint_32>(img.dim(0));
  image.format = img.dim(2) == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const float v = std::clamp(img[i], 0.0f, 1.0f);
    buffer[i] = static_cast<png_byte>(std::lround(v * 255.0f));
  }
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("cannot write " + path.string() + ": " + image.message);
  }
}

Tensor<float> make_grid(const Tensor<float>& images, std::size_t columns, std::size_t scale, std::size_t padding) {
  if (images.rank() != 4) throw ShapeError("make_grid expects [n, h, w, c]");
  const std::size_t n = images.dim(0), h = images.dim(1), w = images.dim(2), c = images.dim(3);
  columns = std::max<std::size_t>(1, std::min(columns, n));
  const std::size_t rows = (n + columns - 1) / columns;
  const std::size_t tile_h = h * scale + padding, tile_w = w * scale + padding;
  const std::size_t out_h = rows * tile_h + padding, out_w = columns * tile_w + padding;
  Tensor<float> grid({out_h, out_w, c});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t oy = padding + (i / columns) * tile_h;
    const std::size_t ox = padding + (i % columns) * tile_w;
    for (std::size_t y = 0; y < h * scale; ++y) {
      for (std::size_t x = 0; x < w * scale; ++x) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          grid[((oy + y) * out_w + ox + x) * c + ch] = images[((i * h + y / scale) * w + x / scale) * c + ch];
        }
      }
    }
  }
  return grid;
}

}  // namespace dcfae
