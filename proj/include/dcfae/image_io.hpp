#pragma once

#include <filesystem>

#include "dcfae/tensor.hpp"

namespace dcfae {

/// Decodes a PNG into a [height, width, channels] tensor with values in [0,1].
/// Grayscale files give one channel, color files three; alpha is dropped.
Tensor<float> read_png(const std::filesystem::path& path);

/// Writes a [height, width, channels] tensor (channels 1 or 3) as 8-bit PNG.
void write_png(const std::filesystem::path& path, const Tensor<float>& image);

/// Tiles images [n, h, w, c] into a grid with `columns` tiles per row, each
/// pixel upscaled by `scale` (nearest neighbour). Missing tiles stay black.
Tensor<float> make_grid(const Tensor<float>& images, std::size_t columns, std::size_t scale, std::size_t padding = 1);

}  // namespace dcfae
