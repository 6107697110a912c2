#include "milab/heatmap.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "milab/error.hpp"

namespace milab {
namespace {

TEST(Heatmap, GrayLevelMapping) {
  EXPECT_EQ(gray_level(0.5), 128);
  EXPECT_EQ(gray_level(1.0), 255);
  EXPECT_EQ(gray_level(0.0), 0);
  EXPECT_EQ(gray_level(1.5), 255);
  EXPECT_EQ(gray_level(-0.2), 0);
  EXPECT_EQ(gray_level(0.2), 51);
  EXPECT_THROW(gray_level(std::nan("")), NumericError);
}

TEST(Heatmap, NeutralScoresRenderUniformGray) {
  std::vector<GridCoord> coords;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) coords.push_back({r, c});
  }
  const std::vector<double> half(coords.size(), 0.5);
  const GrayImage img = render_heatmap(coords, half);
  EXPECT_EQ(img.width, 4u);
  EXPECT_EQ(img.height, 3u);
  for (auto p : img.pixels) EXPECT_EQ(p, 128);
}

TEST(Heatmap, PixelsLandOnTheirCoordinatesAndGapsStayNeutral) {
  const std::vector<GridCoord> coords = {{0, 0}, {2, 1}};
  const std::vector<double> scores = {1.0, 0.0};
  const GrayImage img = render_heatmap(coords, scores);
  ASSERT_EQ(img.width, 2u);
  ASSERT_EQ(img.height, 3u);
  EXPECT_EQ(img.at(0, 0), 255);
  EXPECT_EQ(img.at(2, 1), 0);
  EXPECT_EQ(img.at(1, 0), kNeutralGray);
  EXPECT_THROW(render_heatmap(coords, std::vector<double>{1.0}), DimensionError);
}

TEST(Pgm, EncodeDecodeRoundTrip) {
  GrayImage img;
  img.width = 3;
  img.height = 2;
  img.pixels = {0, 10, 255, 128, '\n', '#'};
  const std::string bytes = encode_pgm(img, "milab config_hash=0123");
  EXPECT_EQ(bytes.substr(0, 3), "P5\n");
  EXPECT_EQ(bytes.size(), std::string("P5\n# milab config_hash=0123\n3 2\n255\n").size() + 6);
  EXPECT_EQ(decode_pgm(bytes), img);
  EXPECT_EQ(decode_pgm(encode_pgm(img)), img);
}

TEST(Pgm, RejectsMalformedFiles) {
  EXPECT_THROW(decode_pgm("P2\n1 1\n255\n0"), ParseError);
  EXPECT_THROW(decode_pgm("P5\n2 2\n255\nabc"), ParseError);
  EXPECT_THROW(decode_pgm("P5\n2 2\n65535\nabcdefgh"), ParseError);
  EXPECT_THROW(decode_pgm("P5\n2"), ParseError);
}

}  // namespace
}  // namespace milab
