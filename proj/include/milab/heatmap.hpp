#pragma once

// Grayscale heatmaps on a slide's instance grid, written as binary PGM (P5).
// Scores in [0, 1] map to round(255 * score); cells without an instance
// are neutral gray 128.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "milab/bag.hpp"

namespace milab {

inline constexpr std::uint8_t kNeutralGray = 128;

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

std::uint8_t gray_level(double score);

// Grid extent is (max row + 1) x (max col + 1). Throws DimensionError when
// coords and scores differ in length, NumericError on NaN.
GrayImage render_heatmap(std::span<const GridCoord> coords, std::span<const double> scores);

// Optional comment goes into the header as "# <comment>".
std::string encode_pgm(const GrayImage& image, const std::string& comment = "");
// Accepts P5 with maxval 255 and header comments. Throws ParseError.
GrayImage decode_pgm(std::string_view bytes);

}  // namespace milab
