// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "basislens/dataset.hpp"
#include "basislens/model.hpp"

namespace basislens {

enum class ThresholdScope { PerImage, Dataset };
// ContainingOnly averages each semantic over the images that contain it; All
// divides by the number of images processed.
enum class AlignmentAverage { ContainingOnly, All };

struct AlignmentOptions {
  double quantile = 0.2;  // fraction of cells kept when binarizing
  std::size_t topk = 5;
  ThresholdScope scope = ThresholdScope::PerImage;
  AlignmentAverage average = AlignmentAverage::ContainingOnly;

  void validate() const;
};

// Union of one semantic's boxes in one image, rasterized onto the feature grid
// (a cell belongs to the region when its center lies inside a box).
struct RegionMask {
  SemanticId semantic = 0;
  std::vector<std::uint8_t> cells;  // grid_h * grid_w
};

std::vector<RegionMask> region_masks(const AnnotatedImage& image, std::size_t grid_h, std::size_t grid_w);

// Marks the ceil(quantile * n) highest cells; ties go to the lower index.
std::vector<std::uint8_t> binarize_top_fraction(std::span<const double> values, double quantile);

// Intersection over union of two binary masks; 0 when both are empty.
double iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

// Row-major [num_bases x num_semantics].
struct AlignmentMatrix {
  std::size_t num_bases = 0;
  std::size_t num_semantics = 0;
  std::vector<double> sum;
  std::vector<double> o_avg;
  std::vector<std::size_t> count;  // images in which each semantic has a nonempty mask
  std::size_t images = 0;

  double at(std::size_t basis, SemanticId semantic) const { return o_avg[basis * num_semantics + semantic]; }
};

// alphas[i] is [M,N] for image i; masks[i] lists the regions present in it.
AlignmentMatrix accumulate_alignment(std::span<const Tensor> alphas, std::span<const std::vector<RegionMask>> masks,
                                     std::size_t num_semantics, const AlignmentOptions& opts);

AlignmentMatrix accumulate_alignment(const SaliencyModel& model, const Corpus& corpus, const AlignmentOptions& opts);

struct RankedSemantic {
  SemanticId semantic = 0;
  double o_avg = 0.0;
};
using TopSemantics = std::vector<std::vector<RankedSemantic>>;

// Per basis, the k semantics with the largest averaged IoU, descending (k is
// clamped to P; semantics that never overlap the basis are skipped; ties go
// to the lower id).
TopSemantics top_semantics_per_basis(const AlignmentMatrix& m, std::size_t k);

struct ImportanceReport {
  std::vector<double> importance;  // signed, in [-1,1]
  std::vector<double> raw;
  std::vector<std::uint8_t> participating;  // in some basis's top-k list
  std::string checkpoint_id;
  std::string corpus_id;
  double quantile = 0.0;
  std::size_t topk = 0;
};

// Importance of semantic p: sum over the bases listing p in their top-k of
// W^sal_j * O_avg[j,p]. Positives are scaled by the largest positive value and
// negatives by the magnitude of the most negative one.
ImportanceReport compute_importance(std::span<const double> wsal, const TopSemantics& topk,
                                    std::size_t num_semantics);

struct CategoryWeight {
  std::string category;
  double weight = 0.0;
  std::size_t members = 0;
};

// Mean importance of the participating semantics in each category; categories
// without any are left out.
std::vector<CategoryWeight> aggregate_categories(const ImportanceReport& report, const SemanticVocabulary& vocab);

struct AlignmentResult {
  AlignmentMatrix matrix;
  TopSemantics topk;
  ImportanceReport report;
  std::vector<CategoryWeight> categories;
};

// Full pipeline on a stage-2 model.
AlignmentResult align(const SaliencyModel& model, const Corpus& corpus, const AlignmentOptions& opts,
                      const std::string& checkpoint_id = {});

// alignment.csv: basis_id,semantic_id,o_avg,count
void write_alignment_csv(const AlignmentMatrix& m, const std::filesystem::path& csv);
// importance.csv: semantic_id,name,category,importance
void write_importance_csv(const ImportanceReport& r, const SemanticVocabulary& vocab,
                          const std::filesystem::path& csv);
// categories.csv: category,weight,members
void write_categories_csv(const std::vector<CategoryWeight>& c, const std::filesystem::path& csv);

struct ImportanceRow {
  SemanticId semantic = 0;
  std::string name;
  std::string category;
  double importance = 0.0;
};
void write_importance_rows(const std::vector<ImportanceRow>& rows, const std::filesystem::path& csv);
std::vector<ImportanceRow> read_importance_csv(const std::filesystem::path& csv);

}  // namespace basislens
