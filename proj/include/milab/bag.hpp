#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "milab/tensor.hpp"

namespace milab {

// Ground-truth role of one instance. Serialized as `background`,
// `class_<c>_signal` or `class_<c>_mimic`.
struct InstanceLabel {
  enum class Kind { kBackground, kSignal, kMimic };

  Kind kind = Kind::kBackground;
  int cls = -1;  // class signalled or mimicked; -1 for background

  static InstanceLabel background() { return {}; }
  static InstanceLabel signal(int c) { return {Kind::kSignal, c}; }
  static InstanceLabel mimic(int c) { return {Kind::kMimic, c}; }

  bool is_signal_of(int c) const { return kind == Kind::kSignal && cls == c; }
  bool is_mimic_of(int c) const { return kind == Kind::kMimic && cls == c; }

  std::string token() const;
  // Throws ParseError on an unknown token.
  static InstanceLabel parse(std::string_view token);

  friend bool operator==(const InstanceLabel&, const InstanceLabel&) = default;
};

struct GridCoord {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridCoord&, const GridCoord&) = default;
};

// A bag of N instances (rows of `instances`, N x D). Only `instances` is
// needed for prediction; the remaining fields carry ground truth and layout.
struct Bag {
  Tensor instances;
  std::size_t label = 0;
  std::vector<InstanceLabel> instance_labels;
  std::string slide_id;
  std::vector<GridCoord> coords;
  std::vector<std::size_t> instance_ids;

  std::size_t size() const { return instances.rows(); }
  std::size_t dim() const { return instances.cols(); }
};

// Bag with only features; ground-truth fields left empty.
Bag make_bag(Tensor instances, std::size_t label = 0);

}  // namespace milab
