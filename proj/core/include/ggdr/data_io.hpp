#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ggdr {

enum class DataSource { kImageFolder, kPackedArray, kSyntheticShapes };

std::string to_string(DataSource s);
DataSource parse_data_source(const std::string& s);

struct DatasetSpec {
  DataSource source = DataSource::kSyntheticShapes;
  /// Folder of PNGs or packed array file; unused for synthetic data.
  std::filesystem::path path;
  std::int64_t resolution = 32;
  std::int64_t channels = 3;
  bool horizontal_flip = false;
  /// Load per-pixel class masks (mask sidecars / synthetic masks).
  bool label_masks = false;
  std::int64_t synthetic_count = 5000;
  std::uint64_t synthetic_seed = 0;
};

/// In-memory dataset: images in [-1, 1], optional int64 class masks.
struct Dataset {
  torch::Tensor images;  // [N, C, H, W] float32
  torch::Tensor masks;   // [N, H, W] int64, undefined when absent
  std::vector<std::string> names;

  std::int64_t size() const { return images.defined() ? images.size(0) : 0; }
  bool has_masks() const { return masks.defined(); }
};

Dataset load_dataset(const DatasetSpec& spec);

struct Batch {
  torch::Tensor images;
  torch::Tensor masks;  // undefined when the dataset has none
  std::vector<std::int64_t> indices;
  std::int64_t epoch = 0;
};

/// Seed-determined, resumable batch order over a dataset.
///
/// Each epoch visits a permutation derived from (seed, epoch); with
/// `horizontal_flip` every (epoch, position) also carries a fixed coin flip.
class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, std::int64_t batch_size, std::uint64_t seed,
                bool horizontal_flip = false, bool drop_last = false);

  /// Next batch; rolls over into the next epoch when the current one ends.
  Batch next();

  std::int64_t epoch() const { return epoch_; }
  std::int64_t position() const { return position_; }
  void seek(std::int64_t epoch, std::int64_t position);

  /// Number of batches one epoch yields.
  std::int64_t batches_per_epoch() const;

 private:
  void reshuffle();

  const Dataset* dataset_;
  std::int64_t batch_size_;
  std::uint64_t seed_;
  bool flip_;
  bool drop_last_;
  std::int64_t epoch_ = 0;
  std::int64_t position_ = 0;
  std::vector<std::int64_t> order_;
};

/// Mask class ids of the synthetic-shapes data.
enum ShapeClass : std::int64_t { kBackground = 0, kDisk = 1, kSquare = 2, kTriangle = 3 };
inline constexpr std::int64_t kShapeClasses = 4;

struct ShapeInstance {
  ShapeClass kind = kDisk;
  double cx = 0.0, cy = 0.0;  // pixel units, origin at the top-left corner
  double size = 1.0;          // disk radius / square half-side / triangle circumradius
  std::array<double, 3> color{1.0, 1.0, 1.0};  // [0, 1]
};

struct Background {
  std::array<double, 3> color_a{0.5, 0.5, 0.5};
  std::array<double, 3> color_b{0.5, 0.5, 0.5};
  double angle = 0.0;       // gradient direction
  double texture_amp = 0.0;
  double texture_freq = 0.0;
  double texture_phase = 0.0;
};

/// Pixel-center coverage test used for both rendering and masks.
bool shape_covers(const ShapeInstance& shape, double px, double py);

/// Renders one image ([C, H, W] in [-1, 1], quantized to 8-bit levels) and its
/// [H, W] mask. Later shapes occlude earlier ones.
std::pair<torch::Tensor, torch::Tensor> render_shapes(
    std::int64_t resolution, const Background& background,
    const std::vector<ShapeInstance>& shapes);

struct SyntheticShapes {
  Dataset dataset;
  std::vector<std::vector<ShapeInstance>> shapes;
};

/// n images with 1-3 colored disks / squares / triangles on a textured
/// background plus exact per-pixel class masks; byte-identical per seed.
SyntheticShapes make_synthetic_shapes(std::int64_t n, std::int64_t resolution,
                                      std::uint64_t seed);

// Packed array file:
//   bytes 0-7   magic "GGDRPACK"
//   bytes 8-11  uint32 version (1)
//   bytes 12-15 uint32 dtype (0 = uint8 levels, 1 = float32 in [-1, 1])
//   bytes 16-23 uint64 count
//   bytes 24-27 uint32 resolution
//   bytes 28-31 uint32 channels
//   then count * channels * resolution^2 values, NCHW, little-endian.
// Masks live in "<file>.masks" with the same header, dtype 0, channels 1.
enum class PackedDtype : std::uint32_t { kUint8 = 0, kFloat32 = 1 };

void write_packed(const std::filesystem::path& path, const Dataset& dataset,
                  PackedDtype dtype = PackedDtype::kUint8);

/// Writes "<index>.png" per image (and "<index>.mask.png" when masks exist).
void write_image_folder(const std::filesystem::path& dir, const Dataset& dataset);

}  // namespace ggdr
