#include "ggdr/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "ggdr/errors.hpp"

namespace ggdr {

namespace {

png_uint_32 format_for(int channels) {
  if (channels == 1) return PNG_FORMAT_GRAY;
  if (channels == 3) return PNG_FORMAT_RGB;
  throw InputError("PNG images must have 1 or 3 channels");
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image8& image) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = format_for(image.channels);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0,
                                 nullptr)) {
    throw DataError(std::string("PNG encode failed: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(),
                                 0, nullptr)) {
    throw DataError(std::string("PNG encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  const auto bytes = encode_png(image);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

Image8 read_png(const std::filesystem::path& path, int channels) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw DataError(path.string() + ": " + img.message);
  }
  img.format = format_for(channels);
  Image8 out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.channels = channels;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw DataError(path.string() + ": " + msg);
  }
  return out;
}

Image8 tensor_to_image(const torch::Tensor& chw) {
  if (chw.dim() != 3) throw InputError("expected a [C, H, W] tensor");
  const auto bytes = ((chw.detach().to(torch::kFloat64).clamp(-1.0, 1.0) + 1.0) * 127.5)
                         .round()
                         .to(torch::kUInt8)
                         .permute({1, 2, 0})
                         .contiguous();
  Image8 out;
  out.channels = static_cast<int>(chw.size(0));
  out.height = static_cast<int>(chw.size(1));
  out.width = static_cast<int>(chw.size(2));
  out.pixels.assign(bytes.data_ptr<std::uint8_t>(),
                    bytes.data_ptr<std::uint8_t>() + bytes.numel());
  return out;
}

torch::Tensor image_to_tensor(const Image8& image) {
  auto t = torch::from_blob(const_cast<std::uint8_t*>(image.pixels.data()),
                            {image.height, image.width, image.channels}, torch::kUInt8)
               .permute({2, 0, 1})
               .to(torch::kFloat64);
  return (t / 127.5 - 1.0).to(torch::kFloat32);
}

Image8 make_grid(const torch::Tensor& batch, int columns, int padding) {
  if (batch.dim() != 4 || batch.size(0) < 1) throw InputError("expected [B, C, H, W]");
  const int n = static_cast<int>(batch.size(0));
  const int c = static_cast<int>(batch.size(1));
  const int h = static_cast<int>(batch.size(2));
  const int w = static_cast<int>(batch.size(3));
  columns = std::max(1, std::min(columns, n));
  const int rows = (n + columns - 1) / columns;
  Image8 grid;
  grid.channels = c;
  grid.width = columns * (w + padding) + padding;
  grid.height = rows * (h + padding) + padding;
  grid.pixels.assign(static_cast<std::size_t>(grid.width) * grid.height * c, 0);
  for (int i = 0; i < n; ++i) {
    const auto tile = tensor_to_image(batch[i]);
    const int ox = padding + (i % columns) * (w + padding);
    const int oy = padding + (i / columns) * (h + padding);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int k = 0; k < c; ++k) grid.at(ox + x, oy + y, k) = tile.at(x, y, k);
  }
  return grid;
}

}  // namespace ggdr
