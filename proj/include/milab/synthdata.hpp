#pragma once

// Synthetic slides with planted instance-level ground truth.
//
// Each slide is a pool of instances laid out on a square raster. Background
// instances are isotropic Gaussians at the origin; class-c signal instances
// are Gaussians around mu_c with |mu_c| = class_separation; mimics of class c
// sit at mu_c shifted by mimic_offset along a direction orthogonal to every
// class mean, and only occur on slides whose label is not c.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "milab/bag.hpp"
#include "milab/json_util.hpp"
#include "milab/kernels.hpp"
#include "milab/tensor.hpp"

namespace milab {

struct SplitFractions {
  double train = 0.60;
  double val = 0.15;
  double test = 0.25;
  friend bool operator==(const SplitFractions&, const SplitFractions&) = default;
};

struct GenConfig {
  std::size_t num_slides = 600;
  std::size_t instances_per_slide = 64;
  std::size_t bag_size = 32;
  std::size_t bags_per_slide = 4;
  std::size_t input_dim = 16;
  std::size_t num_classes = 3;
  double signal_fraction = 0.1;
  double mimic_fraction = 0.0;
  double mimic_offset = 3.0;
  // Share of slides that also carry a minority of a second class's signal.
  double mixed_fraction = 0.0;
  double class_separation = 4.0;
  double noise_sigma = 1.0;
  SplitFractions split;
  std::uint64_t seed = 7;

  // Throws ConfigError naming the offending key.
  void validate() const;

  std::size_t signal_per_slide() const;
  std::size_t mimics_per_slide() const;

  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

Json to_json(const GenConfig& config);
GenConfig gen_config_from_json(const Json& json);

struct Slide {
  std::string id;
  std::size_t label = 0;
  bool mixed = false;
  Tensor instances;  // n x D
  std::vector<InstanceLabel> instance_labels;
  std::vector<GridCoord> coords;
  // Pre-sampled bags as sorted instance indices.
  std::vector<std::vector<std::size_t>> bags;

  std::size_t size() const { return instances.rows(); }
  Bag bag(std::span<const std::size_t> indices) const;
  Bag whole() const;

  friend bool operator==(const Slide&, const Slide&) = default;
};

struct Splits {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  friend bool operator==(const Splits&, const Splits&) = default;
};

struct SlideDataset {
  GenConfig config;
  std::vector<Slide> slides;
  Splits splits;

  const Slide& slide(std::string_view id) const;
  // "train", "val" or "test". Throws ConfigError otherwise.
  std::vector<const Slide*> split(std::string_view name) const;
  std::size_t num_instances() const;
  std::size_t num_bags() const;

  friend bool operator==(const SlideDataset&, const SlideDataset&) = default;
};

// Deterministic in config.seed; slides are generated in parallel with
// per-slide derived seeds, so exec does not change the result.
SlideDataset generate(const GenConfig& config,
                      kernels::Exec exec = kernels::Exec::kParallel);

// Bags of bag_size distinct instances; each bag contains at least one signal
// instance of the slide's label (resampled otherwise). Indices are sorted.
std::vector<std::vector<std::size_t>> sample_bag_indices(const Slide& slide,
                                                         std::size_t bag_size,
                                                         std::size_t num_bags,
                                                         std::uint64_t seed);
std::vector<Bag> sample_bags(const Slide& slide, std::size_t bag_size,
                             std::size_t num_bags, std::uint64_t seed);

// MIL assumption for one bag: contains a signal of `label`, and signals of
// other classes only when the slide is mixed.
bool satisfies_mil_assumption(const Bag& bag, bool mixed);

// File format: see docs/dataset_format.md.
std::string encode_dataset_csv(const SlideDataset& dataset);
Json encode_manifest(const SlideDataset& dataset);
// Throws ParseError (with line number) on malformed input.
SlideDataset decode_dataset(std::string_view csv, const Json& manifest);

inline constexpr const char* kDatasetCsv = "dataset.csv";
inline constexpr const char* kManifestJson = "manifest.json";

void save_dataset(const SlideDataset& dataset, const std::filesystem::path& dir);
SlideDataset load_dataset(const std::filesystem::path& dir);

}  // namespace milab
