// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "basislens/objectives.hpp"
#include "basislens/tensor.hpp"

namespace basislens {

using SemanticId = std::size_t;

struct SemanticEntry {
  SemanticId id = 0;
  std::string name;
  std::string category;
  std::optional<double> planted_weight;  // synthetic corpora only
};

class SemanticVocabulary {
 public:
  // Returns the new id; the name must not already be registered.
  SemanticId add(std::string name, std::string category, std::optional<double> planted_weight = std::nullopt);
  // Existing id for `name`, or a fresh registration under `category`.
  SemanticId find_or_add(const std::string& name, const std::string& category);
  std::optional<SemanticId> find(const std::string& name) const;

  const SemanticEntry& operator[](SemanticId id) const { return entries_.at(id); }
  const std::vector<SemanticEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  // Categories in first-appearance order.
  std::vector<std::string> categories() const;

 private:
  std::vector<SemanticEntry> entries_;
};

// Pixel-space bounding box of one semantic instance.
struct SemanticBox {
  SemanticId semantic = 0;
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t w = 0;
  std::size_t h = 0;
  friend bool operator==(const SemanticBox&, const SemanticBox&) = default;
};

enum class Split { Unassigned, Train, Val };

struct AnnotatedImage {
  std::string id;
  Tensor pixels;  // [3,H,W] in [0,1]
  std::vector<SemanticBox> boxes;
  FixationData fixations;  // stimulus resolution
  Split split = Split::Unassigned;

  std::size_t height() const { return pixels.dim(1); }
  std::size_t width() const { return pixels.dim(2); }
};

struct Corpus {
  std::string id;
  SemanticVocabulary vocab;
  std::vector<AnnotatedImage> images;

  std::vector<std::size_t> indices(Split split) const;
};

enum class ShapeKind { Rectangle, Ellipse, Triangle, Diamond, Cross };
enum class Texture { Solid, Stripes, Checker };

struct SemanticStyle {
  std::string name;
  std::string category;
  double planted_weight = 0.0;  // in [-1,1]
  double rgb[3] = {0, 0, 0};
  ShapeKind shape = ShapeKind::Rectangle;
  Texture texture = Texture::Solid;
};

struct SynthSpec {
  std::uint64_t seed = 1;
  std::size_t height = 64;
  std::size_t width = 64;
  std::vector<SemanticStyle> semantics;
  std::size_t objects_min = 2;
  std::size_t objects_max = 6;
  std::size_t object_size_min = 12;
  std::size_t object_size_max = 20;
  std::size_t fixations_per_image = 20;
  double blur_sigma_fraction = 0.05;
  // Ground-truth level = floor + (inside objects ? max (w+1)/2 : background).
  double floor_level = 0.05;
  double background_level = 0.5;
  double pixel_noise = 0.03;
  double val_fraction = 0.2;

  void validate() const;
};

// Ten semantics over eight categories, planted weights spanning [-1,1].
std::vector<SemanticStyle> default_synthetic_semantics();
SynthSpec default_synth_spec();

struct PlacedObject {
  std::size_t style = 0;  // index into SynthSpec::semantics
  std::size_t x = 0, y = 0, w = 0, h = 0;
};

// Renders one scene; pixels are quantized to 8-bit levels and the density to
// 16-bit levels, matching what the on-disk corpus stores.
AnnotatedImage render_scene(const SynthSpec& spec, const std::string& id, const std::vector<PlacedObject>& objects,
                            std::uint64_t scene_seed);

// Per-pixel ground-truth saliency before blurring ([H,W]).
Tensor scene_saliency_levels(const SynthSpec& spec, const std::vector<PlacedObject>& objects);

Corpus generate_synthetic_corpus(const SynthSpec& spec, std::size_t n_images);

// Sum of truncated Gaussians at the points, normalized to sum 1.
Tensor build_density_map(const std::vector<FixationPoint>& points, std::size_t height, std::size_t width,
                         double sigma);
// Separable Gaussian blur truncated at 3 sigma and at the image border.
Tensor gaussian_blur(const Tensor& map, double sigma);

struct SplitResult {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
SplitResult split(const Corpus& corpus, double val_fraction, std::uint64_t seed);
// Writes the split tags into the corpus images.
void assign_split(Corpus& corpus, const SplitResult& result);

struct IngestStats {
  std::size_t records = 0;
  std::size_t fixations = 0;
  std::size_t images = 0;
  std::size_t new_semantics = 0;
};

// Reads `image_id  semantic  category  x  y  w  h` records plus the sibling
// `fixations.tsv` (`image_id  row  col`). Unknown semantics are registered into
// `vocab` (category "-" or empty means "other"). Density maps come from
// `density_dir/<id>.png` when present, otherwise from the fixation points.
Corpus ingest_annotations(const std::filesystem::path& image_dir, const std::filesystem::path& annotation_file,
                          SemanticVocabulary vocab = {}, IngestStats* stats = nullptr,
                          const std::filesystem::path& density_dir = {});

// Directory layout: manifest.txt, semantics.tsv, annotations.tsv,
// fixations.tsv, images/<id>.png, density/<id>.png.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

std::vector<std::uint16_t> quantize_density(const Tensor& density);
Tensor dequantize_density(const std::vector<std::uint16_t>& samples, std::size_t height, std::size_t width);

}  // namespace basislens
