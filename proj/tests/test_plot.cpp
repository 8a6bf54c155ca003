#include <gtest/gtest.h>

#include "histosge/errors.hpp"
#include "histosge/image.hpp"
#include "histosge/plot.hpp"
#include "histosge/synthbench.hpp"

using namespace histosge;

namespace {

STDataset two_spot_dataset() {
  STDataset ds;
  ds.slice_id = "p";
  ds.image = RgbImage(100, 60, 0);
  ds.spots = {{"lo", 20, 30}, {"hi", 70, 30}, {"mid", 45, 30, false}};
  ds.gene_names = {"A"};
  ds.expression = Matrix(3, 1);
  ds.expression << 0.0, 4.0, 2.0;
  return ds;
}

}  // namespace

TEST(Viridis, Endpoints) {
  EXPECT_EQ(viridis(0.0), (std::array<std::uint8_t, 3>{68, 1, 84}));
  EXPECT_EQ(viridis(1.0), (std::array<std::uint8_t, 3>{253, 231, 37}));
  EXPECT_EQ(viridis(-3.0), viridis(0.0));
  EXPECT_EQ(viridis(7.0), viridis(1.0));
}

TEST(Plot, ColoursFollowExpressionAndGlyphs) {
  const auto ds = two_spot_dataset();
  const auto img = render_spatial_plot(ds, 0);
  EXPECT_EQ(img.height(), 60);
  EXPECT_GT(img.width(), 100);
  auto px = [&](int x, int y) { return std::array<std::uint8_t, 3>{img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)}; };
  EXPECT_EQ(px(20, 30), viridis(0.0));
  EXPECT_EQ(px(70, 30), viridis(1.0));
  EXPECT_EQ(px(45, 30), viridis(0.5));
  // Background stays white; the constructed square is smaller than a disc.
  EXPECT_EQ(px(5, 5), (std::array<std::uint8_t, 3>{255, 255, 255}));
  EXPECT_EQ(px(45, 30 + 15), (std::array<std::uint8_t, 3>{255, 255, 255}));
  EXPECT_EQ(px(20, 30 + 15), viridis(0.0));
}

TEST(Plot, LargeSlicesAreDownscaled) {
  auto ds = two_spot_dataset();
  ds.image = RgbImage(3000, 1500, 0);
  const auto img = render_spatial_plot(ds, 0);
  EXPECT_LE(img.height(), 1024);
  EXPECT_LE(img.width(), 1024 + 64);
}

TEST(Plot, ByteStable) {
  const auto ds = generate(SynthConfig{.grid_rows = 4, .grid_cols = 4, .n_genes = 3, .seed = 2}).first;
  EXPECT_EQ(encode_png(render_spatial_plot(ds, 1)), encode_png(render_spatial_plot(ds, 1)));
  EXPECT_THROW(render_spatial_plot(ds, 3), ParameterError);
}
