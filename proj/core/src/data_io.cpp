#include "ggdr/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "ggdr/errors.hpp"
#include "ggdr/png_io.hpp"
#include "ggdr/rng.hpp"

namespace ggdr {

namespace fs = std::filesystem;

namespace {

constexpr char kPackMagic[8] = {'G', 'G', 'D', 'R', 'P', 'A', 'C', 'K'};
constexpr std::uint32_t kPackVersion = 1;

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kFlipStream = 0x464c4950ULL;
constexpr std::uint64_t kShapesStream = 0x534841504553ULL;

struct PackHeader {
  PackedDtype dtype = PackedDtype::kUint8;
  std::uint64_t count = 0;
  std::uint32_t resolution = 0;
  std::uint32_t channels = 0;
};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const fs::path& path, const char* field) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError(path.string() + ": truncated header at field " + field);
  return v;
}

void write_pack_file(const fs::path& path, const PackHeader& h, const void* data,
                     std::size_t bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f.write(kPackMagic, sizeof(kPackMagic));
  put(f, kPackVersion);
  put(f, static_cast<std::uint32_t>(h.dtype));
  put(f, h.count);
  put(f, h.resolution);
  put(f, h.channels);
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!f) throw DataError("write failed: " + path.string());
}

// Returns the raw payload as a uint8 or float32 tensor [N, C, R, R].
torch::Tensor read_pack_file(const fs::path& path, PackHeader& h) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open packed file " + path.string());
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kPackMagic, sizeof(magic)) != 0) {
    throw DataError(path.string() + ": bad magic, not a packed array file");
  }
  const auto version = get<std::uint32_t>(f, path, "version");
  if (version != kPackVersion) {
    throw DataError(path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto dtype = get<std::uint32_t>(f, path, "dtype");
  if (dtype > 1) throw DataError(path.string() + ": unknown dtype " + std::to_string(dtype));
  h.dtype = static_cast<PackedDtype>(dtype);
  h.count = get<std::uint64_t>(f, path, "count");
  h.resolution = get<std::uint32_t>(f, path, "resolution");
  h.channels = get<std::uint32_t>(f, path, "channels");
  const auto n = static_cast<std::int64_t>(h.count);
  const std::vector<std::int64_t> shape{n, h.channels, h.resolution, h.resolution};
  auto out = torch::empty(shape, h.dtype == PackedDtype::kUint8 ? torch::kUInt8
                                                                 : torch::kFloat32);
  const auto bytes = static_cast<std::streamsize>(out.numel() * out.element_size());
  f.read(static_cast<char*>(out.data_ptr()), bytes);
  if (f.gcount() != bytes) {
    throw DataError(path.string() + ": payload truncated (expected " +
                    std::to_string(bytes) + " bytes)");
  }
  return out;
}

torch::Tensor levels_to_unit(const torch::Tensor& u8) {
  return (u8.to(torch::kFloat64) / 127.5 - 1.0).to(torch::kFloat32);
}

Dataset load_image_folder(const DatasetSpec& spec) {
  if (!fs::is_directory(spec.path)) {
    throw DataError("image folder does not exist: " + spec.path.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(spec.path)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (entry.path().extension() != ".png") continue;
    if (name.size() > 9 && name.ends_with(".mask.png")) continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no PNG images in " + spec.path.string());

  const auto res = spec.resolution;
  const auto ch = spec.channels;
  Dataset ds;
  ds.images = torch::empty({static_cast<std::int64_t>(files.size()), ch, res, res});
  if (spec.label_masks) {
    ds.masks = torch::empty({static_cast<std::int64_t>(files.size()), res, res}, torch::kInt64);
  }
  std::vector<std::string> errors;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto& p = files[i];
    try {
      const auto img = read_png(p, static_cast<int>(ch));
      if (img.width != res || img.height != res) {
        errors.push_back(p.string() + ": size " + std::to_string(img.width) + "x" +
                         std::to_string(img.height) + ", expected " +
                         std::to_string(res) + "x" + std::to_string(res));
        continue;
      }
      ds.images[static_cast<std::int64_t>(i)].copy_(image_to_tensor(img));
      if (spec.label_masks) {
        auto mask_path = p;
        mask_path.replace_extension(".mask.png");
        const auto m = read_png(mask_path, 1);
        if (m.width != res || m.height != res) {
          errors.push_back(mask_path.string() + ": mask size mismatch");
          continue;
        }
        auto mt = torch::from_blob(const_cast<std::uint8_t*>(m.pixels.data()),
                                   {res, res}, torch::kUInt8);
        ds.masks[static_cast<std::int64_t>(i)].copy_(mt.to(torch::kInt64));
      }
      ds.names.push_back(p.filename().string());
    } catch (const DataError& e) {
      errors.emplace_back(e.what());
    }
  }
  if (!errors.empty()) {
    std::ostringstream os;
    os << errors.size() << " unreadable image(s) in " << spec.path.string() << ":";
    for (const auto& e : errors) os << "\n  " << e;
    throw DataError(os.str());
  }
  return ds;
}

Dataset load_packed(const DatasetSpec& spec) {
  PackHeader h;
  auto raw = read_pack_file(spec.path, h);
  if (h.resolution != spec.resolution || h.channels != spec.channels) {
    throw DataError(spec.path.string() + ": packed data is " +
                    std::to_string(h.channels) + "x" + std::to_string(h.resolution) +
                    "^2, expected " + std::to_string(spec.channels) + "x" +
                    std::to_string(spec.resolution) + "^2");
  }
  Dataset ds;
  ds.images = h.dtype == PackedDtype::kUint8 ? levels_to_unit(raw) : raw;
  if (spec.label_masks) {
    auto mask_path = spec.path;
    mask_path += ".masks";
    PackHeader mh;
    auto masks = read_pack_file(mask_path, mh);
    if (mh.count != h.count || mh.resolution != h.resolution || mh.channels != 1 ||
        mh.dtype != PackedDtype::kUint8) {
      throw DataError(mask_path.string() + ": mask sidecar does not match images");
    }
    ds.masks = masks.squeeze(1).to(torch::kInt64);
  }
  for (std::uint64_t i = 0; i < h.count; ++i) ds.names.push_back(std::to_string(i));
  return ds;
}

double quantize(double v) {
  return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 127.5 - 1.0;
}

}  // namespace

std::string to_string(DataSource s) {
  switch (s) {
    case DataSource::kImageFolder:
      return "image-folder";
    case DataSource::kPackedArray:
      return "packed";
    case DataSource::kSyntheticShapes:
      return "synthetic-shapes";
  }
  return "?";
}

DataSource parse_data_source(const std::string& s) {
  if (s == "image-folder" || s == "folder") return DataSource::kImageFolder;
  if (s == "packed" || s == "packed-array-file") return DataSource::kPackedArray;
  if (s == "synthetic-shapes" || s == "synthetic") return DataSource::kSyntheticShapes;
  throw ConfigError("unknown data source '" + s + "'");
}

Dataset load_dataset(const DatasetSpec& spec) {
  if (spec.resolution < 1 || spec.channels < 1) {
    throw ConfigError("dataset resolution and channels must be positive");
  }
  switch (spec.source) {
    case DataSource::kImageFolder:
      return load_image_folder(spec);
    case DataSource::kPackedArray:
      return load_packed(spec);
    case DataSource::kSyntheticShapes: {
      if (spec.channels != 3) throw ConfigError("synthetic shapes are RGB");
      auto s = make_synthetic_shapes(spec.synthetic_count, spec.resolution,
                                     spec.synthetic_seed);
      if (!spec.label_masks) s.dataset.masks = torch::Tensor();
      return std::move(s.dataset);
    }
  }
  throw ConfigError("unhandled data source");
}

BatchIterator::BatchIterator(const Dataset& dataset, std::int64_t batch_size,
                             std::uint64_t seed, bool horizontal_flip, bool drop_last)
    : dataset_(&dataset),
      batch_size_(batch_size),
      seed_(seed),
      flip_(horizontal_flip),
      drop_last_(drop_last) {
  if (dataset.size() == 0) throw ConfigError("dataset is empty");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (drop_last && dataset.size() < batch_size) {
    throw ConfigError("dataset smaller than one batch with drop_last");
  }
  reshuffle();
}

void BatchIterator::reshuffle() {
  const auto n = dataset_->size();
  order_.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order_[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 eng(derive_seed(seed_, kShuffleStream, static_cast<std::uint64_t>(epoch_)));
  for (std::int64_t i = n - 1; i > 0; --i) {
    const auto j = uniform_int(eng, 0, i);
    std::swap(order_[static_cast<std::size_t>(i)], order_[static_cast<std::size_t>(j)]);
  }
}

std::int64_t BatchIterator::batches_per_epoch() const {
  const auto n = dataset_->size();
  return drop_last_ ? n / batch_size_ : (n + batch_size_ - 1) / batch_size_;
}

void BatchIterator::seek(std::int64_t epoch, std::int64_t position) {
  if (epoch < 0 || position < 0 || position > dataset_->size()) {
    throw InputError("iterator position out of range");
  }
  epoch_ = epoch;
  position_ = position;
  reshuffle();
}

Batch BatchIterator::next() {
  const auto n = dataset_->size();
  const auto remaining = n - position_;
  if (remaining <= 0 || (drop_last_ && remaining < batch_size_)) {
    ++epoch_;
    position_ = 0;
    reshuffle();
  }
  const auto count = std::min(batch_size_, n - position_);
  Batch b;
  b.epoch = epoch_;
  b.indices.assign(order_.begin() + position_, order_.begin() + position_ + count);
  const auto idx = torch::tensor(b.indices, torch::kInt64);
  b.images = dataset_->images.index_select(0, idx);
  if (dataset_->has_masks()) b.masks = dataset_->masks.index_select(0, idx);
  if (flip_) {
    for (std::int64_t i = 0; i < count; ++i) {
      const auto key = static_cast<std::uint64_t>(epoch_) * static_cast<std::uint64_t>(n) +
                       static_cast<std::uint64_t>(position_ + i);
      if (derive_seed(seed_, kFlipStream, key) & 1ULL) {
        b.images[i] = b.images[i].flip({-1});
        if (b.masks.defined()) b.masks[i] = b.masks[i].flip({-1});
      }
    }
  }
  position_ += count;
  return b;
}

bool shape_covers(const ShapeInstance& s, double px, double py) {
  const double dx = px - s.cx;
  const double dy = py - s.cy;
  switch (s.kind) {
    case kDisk:
      return dx * dx + dy * dy <= s.size * s.size;
    case kSquare:
      return std::abs(dx) <= s.size && std::abs(dy) <= s.size;
    case kTriangle: {
      // Upward-pointing equilateral triangle with circumradius `size`.
      std::array<double, 6> v{};
      for (int k = 0; k < 3; ++k) {
        const double a = -std::numbers::pi / 2 + k * 2 * std::numbers::pi / 3;
        v[2 * k] = s.cx + s.size * std::cos(a);
        v[2 * k + 1] = s.cy + s.size * std::sin(a);
      }
      auto edge = [&](int i, int j) {
        return (v[2 * j] - v[2 * i]) * (py - v[2 * i + 1]) -
               (v[2 * j + 1] - v[2 * i + 1]) * (px - v[2 * i]);
      };
      const double e0 = edge(0, 1), e1 = edge(1, 2), e2 = edge(2, 0);
      return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
    }
    case kBackground:
      return false;
  }
  return false;
}

std::pair<torch::Tensor, torch::Tensor> render_shapes(
    std::int64_t resolution, const Background& bg,
    const std::vector<ShapeInstance>& shapes) {
  const auto r = resolution;
  auto image = torch::empty({3, r, r}, torch::kFloat32);
  auto mask = torch::zeros({r, r}, torch::kInt64);
  auto img = image.accessor<float, 3>();
  auto msk = mask.accessor<std::int64_t, 2>();
  const double ca = std::cos(bg.angle), sa = std::sin(bg.angle);
  const double rd = static_cast<double>(r);
  for (std::int64_t y = 0; y < r; ++y) {
    for (std::int64_t x = 0; x < r; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      const double py = static_cast<double>(y) + 0.5;
      const double u = px / rd - 0.5, v = py / rd - 0.5;
      const double w = std::clamp(0.5 + 1.4 * (u * ca + v * sa), 0.0, 1.0);
      const double tex =
          bg.texture_amp * std::sin(2 * std::numbers::pi * bg.texture_freq * u * 4 + bg.texture_phase) *
          std::sin(2 * std::numbers::pi * bg.texture_freq * v * 4 - bg.texture_phase);
      std::array<double, 3> rgb{};
      for (int c = 0; c < 3; ++c) rgb[c] = bg.color_a[c] * (1 - w) + bg.color_b[c] * w + tex;
      std::int64_t label = kBackground;
      for (const auto& s : shapes) {
        if (shape_covers(s, px, py)) {
          rgb = s.color;
          label = s.kind;
        }
      }
      for (int c = 0; c < 3; ++c) img[c][y][x] = static_cast<float>(quantize(rgb[c]));
      msk[y][x] = label;
    }
  }
  return {image, mask};
}

SyntheticShapes make_synthetic_shapes(std::int64_t n, std::int64_t resolution,
                                      std::uint64_t seed) {
  if (n < 1) throw ConfigError("synthetic dataset needs n >= 1");
  if (resolution < 8) throw ConfigError("synthetic resolution must be >= 8");
  SyntheticShapes out;
  out.dataset.images = torch::empty({n, 3, resolution, resolution});
  out.dataset.masks = torch::empty({n, resolution, resolution}, torch::kInt64);
  out.shapes.resize(static_cast<std::size_t>(n));
  const double rd = static_cast<double>(resolution);
  for (std::int64_t i = 0; i < n; ++i) {
    std::mt19937_64 eng(derive_seed(seed, kShapesStream, static_cast<std::uint64_t>(i)));
    Background bg;
    for (int c = 0; c < 3; ++c) bg.color_a[c] = uniform(eng, 0.15, 0.65);
    for (int c = 0; c < 3; ++c) bg.color_b[c] = uniform(eng, 0.15, 0.65);
    bg.angle = uniform(eng, 0.0, 2 * std::numbers::pi);
    bg.texture_amp = uniform(eng, 0.02, 0.08);
    bg.texture_freq = uniform(eng, 0.5, 1.5);
    bg.texture_phase = uniform(eng, 0.0, 2 * std::numbers::pi);
    const auto count = uniform_int(eng, 1, 3);
    auto& shapes = out.shapes[static_cast<std::size_t>(i)];
    for (std::int64_t k = 0; k < count; ++k) {
      ShapeInstance s;
      s.kind = static_cast<ShapeClass>(uniform_int(eng, 1, 3));
      s.size = uniform(eng, 0.12, 0.28) * rd;
      const double margin = 0.8 * s.size;
      s.cx = uniform(eng, margin, rd - margin);
      s.cy = uniform(eng, margin, rd - margin);
      // Bright, saturated colors keep shapes distinct from the darker background.
      const auto hot = uniform_int(eng, 0, 2);
      for (int c = 0; c < 3; ++c) {
        s.color[c] = c == hot ? uniform(eng, 0.8, 1.0) : uniform(eng, 0.0, 1.0);
      }
      shapes.push_back(s);
    }
    auto [img, mask] = render_shapes(resolution, bg, shapes);
    out.dataset.images[i].copy_(img);
    out.dataset.masks[i].copy_(mask);
    out.dataset.names.push_back(std::to_string(i));
  }
  return out;
}

void write_packed(const fs::path& path, const Dataset& dataset, PackedDtype dtype) {
  if (dataset.size() == 0) throw DataError("refusing to write an empty dataset");
  PackHeader h;
  h.dtype = dtype;
  h.count = static_cast<std::uint64_t>(dataset.size());
  h.resolution = static_cast<std::uint32_t>(dataset.images.size(2));
  h.channels = static_cast<std::uint32_t>(dataset.images.size(1));
  torch::Tensor payload;
  if (dtype == PackedDtype::kUint8) {
    payload = ((dataset.images.to(torch::kFloat64).clamp(-1, 1) + 1.0) * 127.5)
                  .round()
                  .to(torch::kUInt8)
                  .contiguous();
  } else {
    payload = dataset.images.to(torch::kFloat32).contiguous();
  }
  write_pack_file(path, h, payload.data_ptr(),
                  static_cast<std::size_t>(payload.numel() * payload.element_size()));
  if (dataset.has_masks()) {
    PackHeader mh = h;
    mh.dtype = PackedDtype::kUint8;
    mh.channels = 1;
    auto m = dataset.masks.to(torch::kUInt8).contiguous();
    auto mask_path = path;
    mask_path += ".masks";
    write_pack_file(mask_path, mh, m.data_ptr(), static_cast<std::size_t>(m.numel()));
  }
}

void write_image_folder(const fs::path& dir, const Dataset& dataset) {
  fs::create_directories(dir);
  for (std::int64_t i = 0; i < dataset.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06lld", static_cast<long long>(i));
    write_png(dir / (std::string(name) + ".png"), tensor_to_image(dataset.images[i]));
    if (dataset.has_masks()) {
      auto m = dataset.masks[i].to(torch::kUInt8).contiguous();
      Image8 mi;
      mi.channels = 1;
      mi.height = static_cast<int>(m.size(0));
      mi.width = static_cast<int>(m.size(1));
      mi.pixels.assign(m.data_ptr<std::uint8_t>(), m.data_ptr<std::uint8_t>() + m.numel());
      write_png(dir / (std::string(name) + ".mask.png"), mi);
    }
  }
}

}  // namespace ggdr
