#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ggdr {

/// 8-bit interleaved image (HWC), 1 or 3 channels.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

std::vector<std::uint8_t> encode_png(const Image8& image);
void write_png(const std::filesystem::path& path, const Image8& image);
/// Reads a PNG converting to `channels` (1 = gray, 3 = RGB) interleaved bytes.
Image8 read_png(const std::filesystem::path& path, int channels);

/// [C, H, W] tensor in [-1, 1] -> bytes, rounding to the nearest level.
Image8 tensor_to_image(const torch::Tensor& chw);
/// Bytes -> [C, H, W] float tensor in [-1, 1].
torch::Tensor image_to_tensor(const Image8& image);

/// Tiles a [B, C, H, W] batch in [-1, 1] into a grid with `columns` images per
/// row and a `padding`-pixel black border.
Image8 make_grid(const torch::Tensor& batch, int columns, int padding = 1);

}  // namespace ggdr
