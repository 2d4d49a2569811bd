// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#include "basislens/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "basislens/error.hpp"
#include "basislens/parallel.hpp"

namespace basislens {

namespace fs = std::filesystem;

namespace {

std::size_t kept_count(std::size_t n, double quantile) {
  const double k = std::ceil(quantile * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(k, 0.0)), 1, n);
}

// Column j of a row-major [M,N] tensor.
std::vector<double> column(const Tensor& alpha, std::size_t j) {
  const std::size_t m = alpha.dim(0), n = alpha.dim(1);
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = alpha[i * n + j];
  return out;
}

// Per basis, the activation value at the dataset-wide quantile.
std::vector<double> dataset_thresholds(std::span<const Tensor> alphas, double quantile) {
  const std::size_t n = alphas.front().dim(1);
  std::vector<double> t(n);
  std::vector<double> pool;
  for (std::size_t j = 0; j < n; ++j) {
    pool.clear();
    for (const auto& a : alphas) {
      auto col = column(a, j);
      pool.insert(pool.end(), col.begin(), col.end());
    }
    const std::size_t k = kept_count(pool.size(), quantile);
    std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k - 1), pool.end(), std::greater<>());
    t[j] = pool[k - 1];
  }
  return t;
}

void check_row(bool ok, const fs::path& csv, std::size_t line, const char* why) {
  if (!ok) fail(ErrorKind::Format, csv.filename().string() + ":" + std::to_string(line) + ": " + why);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void AlignmentOptions::validate() const {
  if (!(quantile > 0.0 && quantile < 1.0)) fail(ErrorKind::Config, "alignment quantile must be in (0,1)");
  if (topk < 1) fail(ErrorKind::Config, "topk must be >= 1");
}

std::vector<RegionMask> region_masks(const AnnotatedImage& image, std::size_t grid_h, std::size_t grid_w) {
  const double sy = static_cast<double>(image.height()) / static_cast<double>(grid_h);
  const double sx = static_cast<double>(image.width()) / static_cast<double>(grid_w);
  std::map<SemanticId, std::vector<std::uint8_t>> by_semantic;
  for (const auto& box : image.boxes) {
    auto& cells = by_semantic[box.semantic];
    cells.resize(grid_h * grid_w, 0);
    for (std::size_t r = 0; r < grid_h; ++r) {
      const double cy = (static_cast<double>(r) + 0.5) * sy;
      if (cy < double(box.y) || cy >= double(box.y + box.h)) continue;
      for (std::size_t c = 0; c < grid_w; ++c) {
        const double cx = (static_cast<double>(c) + 0.5) * sx;
        if (cx >= double(box.x) && cx < double(box.x + box.w)) cells[r * grid_w + c] = 1;
      }
    }
  }
  std::vector<RegionMask> out;
  for (auto& [id, cells] : by_semantic) {
    if (std::find(cells.begin(), cells.end(), 1) == cells.end()) continue;
    out.push_back(RegionMask{id, std::move(cells)});
  }
  return out;
}

std::vector<std::uint8_t> binarize_top_fraction(std::span<const double> values, double quantile) {
  if (!(quantile > 0.0 && quantile < 1.0)) fail(ErrorKind::InvalidArgument, "quantile must be in (0,1)");
  if (values.empty()) fail(ErrorKind::InvalidArgument, "cannot binarize an empty map");
  const std::size_t k = kept_count(values.size(), quantile);
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<std::uint8_t> mask(values.size(), 0);
  for (std::size_t i = 0; i < k; ++i) mask[order[i]] = 1;
  return mask;
}

double iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) {
    throw ShapeError("iou: mask lengths differ (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

AlignmentMatrix accumulate_alignment(std::span<const Tensor> alphas, std::span<const std::vector<RegionMask>> masks,
                                     std::size_t num_semantics, const AlignmentOptions& opts) {
  opts.validate();
  if (alphas.empty()) fail(ErrorKind::InvalidArgument, "alignment needs at least one image");
  if (alphas.size() != masks.size()) fail(ErrorKind::InvalidArgument, "one mask list per image is required");
  const std::size_t m_cells = alphas.front().dim(0);
  const std::size_t n = alphas.front().dim(1);
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (alphas[i].rank() != 2 || alphas[i].dim(0) != m_cells || alphas[i].dim(1) != n) {
      throw ShapeError("alpha of image " + std::to_string(i) + " is " + shape_str(alphas[i].shape()) + ", expected [" +
                       std::to_string(m_cells) + "," + std::to_string(n) + "]");
    }
    for (const auto& r : masks[i]) {
      if (r.cells.size() != m_cells) {
        throw ShapeError("region mask of image " + std::to_string(i) + " has " + std::to_string(r.cells.size()) +
                         " cells, feature grid has " + std::to_string(m_cells));
      }
      if (r.semantic >= num_semantics) fail(ErrorKind::InvalidArgument, "region mask semantic id out of range");
    }
  }

  std::vector<double> thresholds;
  if (opts.scope == ThresholdScope::Dataset) thresholds = dataset_thresholds(alphas, opts.quantile);

  // Map: per-image IoU rows, one per region present.
  std::vector<std::vector<double>> partial(alphas.size());
  parallel_for(alphas.size(), [&](std::size_t i) {
    const auto& regions = masks[i];
    auto& out = partial[i];
    out.assign(n * regions.size(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const auto col = column(alphas[i], j);
      std::vector<std::uint8_t> bin;
      if (opts.scope == ThresholdScope::PerImage) {
        bin = binarize_top_fraction(col, opts.quantile);
      } else {
        bin.resize(col.size());
        for (std::size_t c = 0; c < col.size(); ++c) bin[c] = col[c] >= thresholds[j] ? 1 : 0;
      }
      for (std::size_t r = 0; r < regions.size(); ++r) out[r * n + j] = iou(bin, regions[r].cells);
    }
  });

  // Reduce in image-index order.
  AlignmentMatrix mat;
  mat.num_bases = n;
  mat.num_semantics = num_semantics;
  mat.images = alphas.size();
  mat.sum.assign(n * num_semantics, 0.0);
  mat.o_avg.assign(n * num_semantics, 0.0);
  mat.count.assign(num_semantics, 0);
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    for (std::size_t r = 0; r < masks[i].size(); ++r) {
      const SemanticId p = masks[i][r].semantic;
      ++mat.count[p];
      for (std::size_t j = 0; j < n; ++j) mat.sum[j * num_semantics + p] += partial[i][r * n + j];
    }
  }
  for (SemanticId p = 0; p < num_semantics; ++p) {
    const std::size_t denom = opts.average == AlignmentAverage::All ? mat.images : mat.count[p];
    if (mat.count[p] == 0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      mat.o_avg[j * num_semantics + p] = mat.sum[j * num_semantics + p] / static_cast<double>(denom);
    }
  }
  return mat;
}

AlignmentMatrix accumulate_alignment(const SaliencyModel& model, const Corpus& corpus, const AlignmentOptions& opts) {
  const auto& bc = model.config();
  std::vector<Tensor> alphas(corpus.images.size());
  std::vector<std::vector<RegionMask>> masks(corpus.images.size());
  for (const auto& img : corpus.images) {
    if (img.height() != bc.input_height || img.width() != bc.input_width) {
      throw ShapeError("image '" + img.id + "' does not match the model input size");
    }
  }
  // Reduce in image-id order so a reordered corpus gives bit-identical sums.
  std::vector<std::size_t> order(corpus.images.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return corpus.images[a].id < corpus.images[b].id; });
  parallel_for(order.size(), [&](std::size_t k) {
    const auto& img = corpus.images[order[k]];
    alphas[k] = model.alpha(img.pixels);
    masks[k] = region_masks(img, bc.grid_height(), bc.grid_width());
  });
  return accumulate_alignment(alphas, masks, corpus.vocab.size(), opts);
}

TopSemantics top_semantics_per_basis(const AlignmentMatrix& m, std::size_t k) {
  if (k < 1) fail(ErrorKind::InvalidArgument, "k must be >= 1");
  TopSemantics out(m.num_bases);
  for (std::size_t j = 0; j < m.num_bases; ++j) {
    std::vector<RankedSemantic> cand;
    for (SemanticId p = 0; p < m.num_semantics; ++p) {
      if (m.at(j, p) > 0.0) cand.push_back({p, m.at(j, p)});
    }
    std::stable_sort(cand.begin(), cand.end(),
                     [](const RankedSemantic& a, const RankedSemantic& b) { return a.o_avg > b.o_avg; });
    if (cand.size() > k) cand.resize(k);
    out[j] = std::move(cand);
  }
  return out;
}

ImportanceReport compute_importance(std::span<const double> wsal, const TopSemantics& topk,
                                    std::size_t num_semantics) {
  if (wsal.size() != topk.size()) {
    fail(ErrorKind::InvalidArgument, "W^sal has " + std::to_string(wsal.size()) + " entries but the alignment has " +
                                         std::to_string(topk.size()) + " bases");
  }
  ImportanceReport rep;
  rep.raw.assign(num_semantics, 0.0);
  rep.importance.assign(num_semantics, 0.0);
  rep.participating.assign(num_semantics, 0);
  for (std::size_t j = 0; j < topk.size(); ++j) {
    for (const auto& rs : topk[j]) {
      if (rs.semantic >= num_semantics) fail(ErrorKind::InvalidArgument, "top-k semantic id out of range");
      rep.raw[rs.semantic] += wsal[j] * rs.o_avg;
      rep.participating[rs.semantic] = 1;
    }
  }
  double max_pos = 0.0, min_neg = 0.0;
  for (SemanticId p = 0; p < num_semantics; ++p) {
    if (!rep.participating[p]) continue;
    max_pos = std::max(max_pos, rep.raw[p]);
    min_neg = std::min(min_neg, rep.raw[p]);
  }
  for (SemanticId p = 0; p < num_semantics; ++p) {
    const double r = rep.raw[p];
    if (!rep.participating[p]) continue;
    if (r > 0.0) {
      rep.importance[p] = r == max_pos ? 1.0 : r / max_pos;
    } else if (r < 0.0) {
      rep.importance[p] = r == min_neg ? -1.0 : r / -min_neg;
    }
  }
  return rep;
}

std::vector<CategoryWeight> aggregate_categories(const ImportanceReport& report, const SemanticVocabulary& vocab) {
  if (report.importance.size() != vocab.size()) fail(ErrorKind::InvalidArgument, "report and vocabulary sizes differ");
  std::vector<CategoryWeight> out;
  for (const auto& cat : vocab.categories()) {
    CategoryWeight cw{cat, 0.0, 0};
    for (const auto& e : vocab.entries()) {
      if (e.category != cat || !report.participating[e.id]) continue;
      cw.weight += report.importance[e.id];
      ++cw.members;
    }
    if (cw.members == 0) continue;
    cw.weight /= static_cast<double>(cw.members);
    out.push_back(cw);
  }
  return out;
}

AlignmentResult align(const SaliencyModel& model, const Corpus& corpus, const AlignmentOptions& opts,
                      const std::string& checkpoint_id) {
  opts.validate();
  if (model.stage() != 2) fail(ErrorKind::State, "importance needs a stage-2 checkpoint (W^sal is untrained)");
  AlignmentResult res;
  res.matrix = accumulate_alignment(model, corpus, opts);
  res.topk = top_semantics_per_basis(res.matrix, opts.topk);
  res.report = compute_importance(model.param(kWsal).value().data(), res.topk, corpus.vocab.size());
  res.report.checkpoint_id = checkpoint_id;
  res.report.corpus_id = corpus.id;
  res.report.quantile = opts.quantile;
  res.report.topk = opts.topk;
  res.categories = aggregate_categories(res.report, corpus.vocab);
  return res;
}

void write_alignment_csv(const AlignmentMatrix& m, const fs::path& csv) {
  std::ofstream os(csv, std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot write " + csv.string());
  os << "basis_id,semantic_id,o_avg,count\n";
  char buf[128];
  for (std::size_t j = 0; j < m.num_bases; ++j) {
    for (SemanticId p = 0; p < m.num_semantics; ++p) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%zu\n", j, p, m.at(j, p), m.count[p]);
      os << buf;
    }
  }
  if (!os) fail(ErrorKind::Io, "failed writing " + csv.string());
}

void write_importance_rows(const std::vector<ImportanceRow>& rows, const fs::path& csv) {
  std::ofstream os(csv, std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot write " + csv.string());
  os << "semantic_id,name,category,importance\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g\n", r.importance);
    os << r.semantic << ',' << r.name << ',' << r.category << ',' << buf;
  }
  if (!os) fail(ErrorKind::Io, "failed writing " + csv.string());
}

void write_importance_csv(const ImportanceReport& r, const SemanticVocabulary& vocab, const fs::path& csv) {
  if (r.importance.size() != vocab.size()) fail(ErrorKind::InvalidArgument, "report and vocabulary sizes differ");
  std::vector<ImportanceRow> rows;
  for (SemanticId p = 0; p < r.importance.size(); ++p) {
    rows.push_back({p, vocab[p].name, vocab[p].category, r.importance[p]});
  }
  write_importance_rows(rows, csv);
}

void write_categories_csv(const std::vector<CategoryWeight>& c, const fs::path& csv) {
  std::ofstream os(csv, std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot write " + csv.string());
  os << "category,weight,members\n";
  char buf[64];
  for (const auto& cw : c) {
    std::snprintf(buf, sizeof buf, ",%.17g,%zu\n", cw.weight, cw.members);
    os << cw.category << buf;
  }
  if (!os) fail(ErrorKind::Io, "failed writing " + csv.string());
}

std::vector<ImportanceRow> read_importance_csv(const fs::path& csv) {
  std::ifstream is(csv);
  if (!is) fail(ErrorKind::Io, "cannot open " + csv.string());
  std::string line;
  std::getline(is, line);
  check_row(line == "semantic_id,name,category,importance", csv, 1, "unexpected header");
  std::vector<ImportanceRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    check_row(f.size() == 4, csv, lineno, "expected 4 fields");
    ImportanceRow row;
    try {
      row.semantic = std::stoul(f[0]);
      row.importance = std::stod(f[3]);
    } catch (const std::exception&) {
      check_row(false, csv, lineno, "malformed number");
    }
    row.name = f[1];
    row.category = f[2];
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace basislens
