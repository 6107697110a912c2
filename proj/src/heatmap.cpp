#include "milab/heatmap.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "milab/error.hpp"

namespace milab {

std::uint8_t gray_level(double score) {
  if (std::isnan(score)) throw NumericError("heatmap score is NaN");
  const double clamped = std::clamp(score, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0));
}

GrayImage render_heatmap(std::span<const GridCoord> coords, std::span<const double> scores) {
  if (coords.size() != scores.size()) {
    throw DimensionError("heatmap: " + std::to_string(coords.size()) + " coords but " +
                         std::to_string(scores.size()) + " scores");
  }
  GrayImage img;
  for (const auto& c : coords) {
    if (c.row < 0 || c.col < 0) throw DimensionError("heatmap: negative grid coordinate");
    img.height = std::max(img.height, static_cast<std::size_t>(c.row) + 1);
    img.width = std::max(img.width, static_cast<std::size_t>(c.col) + 1);
  }
  img.pixels.assign(img.width * img.height, kNeutralGray);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    img.pixels[static_cast<std::size_t>(coords[i].row) * img.width +
               static_cast<std::size_t>(coords[i].col)] = gray_level(scores[i]);
  }
  return img;
}

std::string encode_pgm(const GrayImage& image, const std::string& comment) {
  std::string out = "P5\n";
  if (!comment.empty()) out += "# " + comment + "\n";
  out += std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

GrayImage decode_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* what) {
    skip_space();
    std::size_t value = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
      ++digits;
    }
    if (digits == 0) throw ParseError(std::string("pgm: missing ") + what);
    return value;
  };
  if (bytes.substr(0, 2) != "P5") throw ParseError("pgm: not a binary PGM (P5)");
  pos = 2;
  GrayImage img;
  img.width = read_int("width");
  img.height = read_int("height");
  if (read_int("maxval") != 255) throw ParseError("pgm: only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw ParseError("pgm: malformed header");
  }
  ++pos;
  if (bytes.size() - pos != img.width * img.height) {
    throw ParseError("pgm: expected " + std::to_string(img.width * img.height) +
                     " pixel bytes, found " + std::to_string(bytes.size() - pos));
  }
  img.pixels.assign(bytes.begin() + static_cast<long>(pos), bytes.end());
  return img;
}

}  // namespace milab
