#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "ggdr/data_io.hpp"
#include "ggdr/errors.hpp"
#include "ggdr/png_io.hpp"
#include "test_support.hpp"

using namespace ggdr;
using ggdr::testing::scratch_dir;

namespace {

Dataset tiny_dataset(std::int64_t n) {
  Dataset d;
  d.images = torch::linspace(-1, 1, n * 3 * 8 * 8).view({n, 3, 8, 8});
  return d;
}

}  // namespace

TEST(BatchIterator, TenImagesBatchFourGivesFourFourTwo) {
  const auto data = tiny_dataset(10);
  BatchIterator it(data, 4, 0);
  EXPECT_EQ(it.batches_per_epoch(), 3);
  EXPECT_EQ(it.next().images.size(0), 4);
  EXPECT_EQ(it.next().images.size(0), 4);
  const auto last = it.next();
  EXPECT_EQ(last.images.size(0), 2);
  EXPECT_EQ(last.epoch, 0);
  EXPECT_EQ(it.next().epoch, 1);
}

TEST(BatchIterator, EpochIsAPermutationAndOrderIsSeedDetermined) {
  const auto data = tiny_dataset(10);
  BatchIterator a(data, 4, 3), b(data, 4, 3), c(data, 4, 4);
  std::vector<std::int64_t> ia, ib, ic;
  for (int i = 0; i < 3; ++i) {
    for (auto v : a.next().indices) ia.push_back(v);
    for (auto v : b.next().indices) ib.push_back(v);
    for (auto v : c.next().indices) ic.push_back(v);
  }
  EXPECT_EQ(ia, ib);
  EXPECT_NE(ia, ic);
  EXPECT_EQ(std::set<std::int64_t>(ia.begin(), ia.end()).size(), 10u);
  std::vector<std::int64_t> second;
  for (int i = 0; i < 3; ++i)
    for (auto v : a.next().indices) second.push_back(v);
  EXPECT_NE(second, ia);
}

TEST(BatchIterator, SeekResumesTheSameSequence) {
  const auto data = tiny_dataset(10);
  BatchIterator a(data, 4, 1, true);
  for (int i = 0; i < 4; ++i) a.next();
  BatchIterator b(data, 4, 1, true);
  b.seek(a.epoch(), a.position());
  for (int i = 0; i < 5; ++i) {
    const auto x = a.next();
    const auto y = b.next();
    EXPECT_EQ(x.indices, y.indices);
    EXPECT_TRUE(torch::equal(x.images, y.images));
  }
}

TEST(BatchIterator, FlipDisabledKeepsPixels) {
  const auto data = tiny_dataset(6);
  BatchIterator it(data, 6, 0, false);
  const auto b = it.next();
  for (std::size_t i = 0; i < b.indices.size(); ++i) {
    EXPECT_TRUE(torch::equal(b.images[i], data.images[b.indices[i]]));
  }
}

TEST(BatchIterator, FlipEnabledMirrorsAboutHalf) {
  const auto data = tiny_dataset(200);
  BatchIterator it(data, 200, 0, true);
  const auto b = it.next();
  int flipped = 0;
  for (std::size_t i = 0; i < b.indices.size(); ++i) {
    const auto src = data.images[b.indices[i]];
    if (torch::equal(b.images[i], src.flip({2}))) ++flipped;
    else EXPECT_TRUE(torch::equal(b.images[i], src));
  }
  EXPECT_GT(flipped, 70);
  EXPECT_LT(flipped, 130);
}

TEST(BatchIterator, RejectsEmptyDataset) {
  EXPECT_THROW(BatchIterator(Dataset{}, 4, 0), ConfigError);
}

TEST(SyntheticShapes, ByteIdenticalPerSeed) {
  const auto a = make_synthetic_shapes(20, 32, 5).dataset;
  const auto b = make_synthetic_shapes(20, 32, 5).dataset;
  const auto c = make_synthetic_shapes(20, 32, 6).dataset;
  EXPECT_TRUE(torch::equal(a.images, b.images));
  EXPECT_TRUE(torch::equal(a.masks, b.masks));
  EXPECT_FALSE(torch::equal(a.images, c.images));
}

TEST(SyntheticShapes, ContractOnImagesAndMasks) {
  const auto s = make_synthetic_shapes(50, 32, 1);
  const auto& d = s.dataset;
  EXPECT_EQ(d.images.sizes(), (std::vector<std::int64_t>{50, 3, 32, 32}));
  EXPECT_EQ(d.masks.sizes(), (std::vector<std::int64_t>{50, 32, 32}));
  EXPECT_GE(d.images.min().item<float>(), -1.0f);
  EXPECT_LE(d.images.max().item<float>(), 1.0f);
  EXPECT_GE(d.masks.min().item<std::int64_t>(), kBackground);
  EXPECT_LE(d.masks.max().item<std::int64_t>(), kTriangle);
  for (const auto& shapes : s.shapes) {
    EXPECT_GE(shapes.size(), 1u);
    EXPECT_LE(shapes.size(), 3u);
  }
  EXPECT_THROW(make_synthetic_shapes(0, 32, 0), ConfigError);
}

TEST(SyntheticShapes, DiskAreaMatchesPixelCountOracle) {
  for (const double r : {3.0, 5.5, 9.0}) {
    ShapeInstance disk;
    disk.kind = kDisk;
    disk.cx = 16.3;
    disk.cy = 15.8;
    disk.size = r;
    const auto [img, mask] = render_shapes(32, Background{}, {disk});
    const auto count = (mask == kDisk).sum().item<std::int64_t>();
    std::int64_t oracle = 0;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if ((x + 0.5 - disk.cx) * (x + 0.5 - disk.cx) + (y + 0.5 - disk.cy) * (y + 0.5 - disk.cy) <= r * r) ++oracle;
    EXPECT_EQ(count, oracle);
    EXPECT_NEAR(static_cast<double>(count), std::numbers::pi * r * r, 2.0 * std::numbers::pi * r);
  }
}

TEST(SyntheticShapes, LaterShapesOcclude) {
  ShapeInstance square;
  square.kind = kSquare;
  square.cx = square.cy = 16;
  square.size = 8;
  ShapeInstance disk;
  disk.kind = kDisk;
  disk.cx = disk.cy = 16;
  disk.size = 3;
  const auto [img, mask] = render_shapes(32, Background{}, {square, disk});
  EXPECT_EQ(mask[16][16].item<std::int64_t>(), kDisk);
  EXPECT_EQ(mask[10][10].item<std::int64_t>(), kSquare);
  EXPECT_EQ(mask[0][0].item<std::int64_t>(), kBackground);
}

TEST(PngIo, RoundTripWithinOneLevel) {
  const auto dir = scratch_dir("png");
  const auto batch = torch::rand({4, 3, 8, 8}) * 2 - 1;
  const auto grid = make_grid(batch, 2, 1);
  write_png(dir / "grid.png", grid);
  const auto back = image_to_tensor(read_png(dir / "grid.png", 3));
  EXPECT_EQ(back.size(1), 2 * 8 + 3);
  using torch::indexing::Slice;
  const auto tile = back.index({Slice(), Slice(1, 9), Slice(10, 18)});
  EXPECT_LE((tile - batch[1]).abs().max().item<float>(), 1.0f / 255.0f + 1e-6f);
  EXPECT_EQ(encode_png(grid), encode_png(make_grid(batch, 2, 1)));
}

TEST(PngIo, TensorImageRoundTripIsExactOnLevels) {
  const auto levels = torch::randint(0, 256, {3, 5, 7}).to(torch::kFloat32);
  const auto t = levels / 127.5 - 1.0;
  EXPECT_TRUE(torch::allclose(image_to_tensor(tensor_to_image(t)), t, 0, 1e-6));
}

TEST(DatasetFormats, PackedAndFolderRoundTrip) {
  const auto dir = scratch_dir("formats");
  const auto data = make_synthetic_shapes(6, 16, 2).dataset;
  write_packed(dir / "d.pack", data);
  write_image_folder(dir / "folder", data);

  DatasetSpec packed;
  packed.source = DataSource::kPackedArray;
  packed.path = dir / "d.pack";
  packed.resolution = 16;
  packed.label_masks = true;
  const auto p = load_dataset(packed);
  EXPECT_TRUE(torch::equal(p.images, data.images));
  EXPECT_TRUE(torch::equal(p.masks, data.masks));

  DatasetSpec folder = packed;
  folder.source = DataSource::kImageFolder;
  folder.path = dir / "folder";
  const auto f = load_dataset(folder);
  EXPECT_EQ(f.size(), 6);
  EXPECT_LE((f.images - data.images).abs().max().item<float>(), 1.0f / 255.0f + 1e-6f);
  EXPECT_TRUE(torch::equal(f.masks, data.masks));

  write_packed(dir / "f.pack", data, PackedDtype::kFloat32);
  packed.path = dir / "f.pack";
  packed.label_masks = false;
  EXPECT_TRUE(torch::equal(load_dataset(packed).images, data.images));
}

TEST(DatasetFormats, BadInputsAreReported) {
  const auto dir = scratch_dir("bad-data");
  DatasetSpec spec;
  spec.source = DataSource::kImageFolder;
  spec.path = dir / "missing";
  EXPECT_THROW(load_dataset(spec), DataError);

  std::filesystem::create_directories(dir / "odd");
  Image8 odd{5, 7, 3, std::vector<std::uint8_t>(5 * 7 * 3, 10)};
  write_png(dir / "odd" / "a.png", odd);
  std::ofstream(dir / "odd" / "b.png") << "not a png";
  spec.path = dir / "odd";
  spec.resolution = 8;
  try {
    load_dataset(spec);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("a.png"), std::string::npos);
    EXPECT_NE(msg.find("b.png"), std::string::npos);
  }

  std::ofstream(dir / "junk.pack") << "GGDRJUNKxxxxxxxxxxxxxxxxxxxxxxxx";
  spec.source = DataSource::kPackedArray;
  spec.path = dir / "junk.pack";
  EXPECT_THROW(load_dataset(spec), DataError);
}

TEST(DataSourceNames, RoundTrip) {
  for (auto s : {DataSource::kImageFolder, DataSource::kPackedArray, DataSource::kSyntheticShapes}) {
    EXPECT_EQ(parse_data_source(to_string(s)), s);
  }
  EXPECT_THROW(parse_data_source("lsun"), ConfigError);
}
