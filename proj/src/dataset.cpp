// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#include "basislens/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "basislens/error.hpp"
#include "basislens/png_io.hpp"
#include "basislens/rng.hpp"

namespace basislens {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, '\t')) out.push_back(cur);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

bool parse_size(const std::string& s, std::size_t& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

bool skippable(const std::string& line) {
  return line.empty() || line[0] == '#';
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Unassigned: return "none";
  }
  return "none";
}

bool inside_shape(ShapeKind shape, double u, double v) {
  const double du = 2.0 * u - 1.0;
  const double dv = 2.0 * v - 1.0;
  switch (shape) {
    case ShapeKind::Rectangle: return true;
    case ShapeKind::Ellipse: return du * du + dv * dv <= 1.0;
    case ShapeKind::Triangle: return std::abs(du) <= v;
    case ShapeKind::Diamond: return std::abs(du) + std::abs(dv) <= 1.0;
    case ShapeKind::Cross: return std::abs(du) <= 1.0 / 3.0 || std::abs(dv) <= 1.0 / 3.0;
  }
  return false;
}

// Calls f(px, py) for every pixel of the object's silhouette.
template <typename F>
void for_each_object_pixel(const SynthSpec& spec, const PlacedObject& obj, F&& f) {
  const auto& style = spec.semantics.at(obj.style);
  for (std::size_t py = obj.y; py < obj.y + obj.h && py < spec.height; ++py) {
    for (std::size_t px = obj.x; px < obj.x + obj.w && px < spec.width; ++px) {
      const double u = (static_cast<double>(px - obj.x) + 0.5) / static_cast<double>(obj.w);
      const double v = (static_cast<double>(py - obj.y) + 0.5) / static_cast<double>(obj.h);
      if (inside_shape(style.shape, u, v)) f(px, py);
    }
  }
}

double quantize8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

std::size_t overlap_area(const PlacedObject& a, const PlacedObject& b) {
  const std::size_t x0 = std::max(a.x, b.x), x1 = std::min(a.x + a.w, b.x + b.w);
  const std::size_t y0 = std::max(a.y, b.y), y1 = std::min(a.y + a.h, b.y + b.h);
  if (x1 <= x0 || y1 <= y0) return 0;
  return (x1 - x0) * (y1 - y0);
}

}  // namespace

SemanticId SemanticVocabulary::add(std::string name, std::string category, std::optional<double> planted_weight) {
  if (name.empty()) fail(ErrorKind::InvalidArgument, "semantic name must not be empty");
  if (find(name)) fail(ErrorKind::InvalidArgument, "duplicate semantic '" + name + "'");
  if (category.empty() || category == "-") category = "other";
  const SemanticId id = entries_.size();
  entries_.push_back({id, std::move(name), std::move(category), planted_weight});
  return id;
}

SemanticId SemanticVocabulary::find_or_add(const std::string& name, const std::string& category) {
  if (auto id = find(name)) return *id;
  return add(name, category);
}

std::optional<SemanticId> SemanticVocabulary::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.id;
  }
  return std::nullopt;
}

std::vector<std::string> SemanticVocabulary::categories() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (std::find(out.begin(), out.end(), e.category) == out.end()) out.push_back(e.category);
  }
  return out;
}

std::vector<std::size_t> Corpus::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].split == split) out.push_back(i);
  }
  return out;
}

void SynthSpec::validate() const {
  if (semantics.empty()) fail(ErrorKind::Config, "synthetic vocabulary is empty");
  bool pos = false, neg = false;
  for (const auto& s : semantics) {
    if (s.planted_weight < -1.0 || s.planted_weight > 1.0) {
      fail(ErrorKind::Config, "planted weight of '" + s.name + "' outside [-1,1]");
    }
    pos = pos || s.planted_weight > 0.0;
    neg = neg || s.planted_weight < 0.0;
  }
  if (!pos || !neg) fail(ErrorKind::Config, "planted weights must include both positive and negative values");
  if (objects_min == 0 || objects_min > objects_max) fail(ErrorKind::Config, "bad objects-per-image range");
  if (objects_max > semantics.size()) {
    fail(ErrorKind::Config, "vocabulary of " + std::to_string(semantics.size()) + " semantics is too small for " +
                                std::to_string(objects_max) + " objects per image");
  }
  if (height < 8 || width < 8) fail(ErrorKind::Config, "canvas too small");
  if (object_size_min < 2 || object_size_min > object_size_max || object_size_max > std::min(height, width)) {
    fail(ErrorKind::Config, "bad object size range");
  }
  if (fixations_per_image == 0) fail(ErrorKind::Config, "fixations_per_image must be positive");
  if (!(blur_sigma_fraction > 0.0)) fail(ErrorKind::Config, "blur sigma must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) fail(ErrorKind::Config, "val_fraction must be in (0,1)");
  if (floor_level <= 0.0 || background_level < 0.0) fail(ErrorKind::Config, "bad saliency levels");
}

std::vector<SemanticStyle> default_synthetic_semantics() {
  using S = ShapeKind;
  using T = Texture;
  return {
      {"face", "social", 1.0, {0.85, 0.55, 0.30}, S::Ellipse, T::Solid},
      {"jumping", "action", 0.8, {0.90, 0.20, 0.35}, S::Triangle, T::Solid},
      {"sign_text", "text", 0.6, {0.30, 0.30, 0.85}, S::Rectangle, T::Stripes},
      {"dog", "animal", 0.4, {0.65, 0.45, 0.20}, S::Ellipse, T::Checker},
      {"car", "vehicle", 0.25, {0.20, 0.45, 0.85}, S::Rectangle, T::Solid},
      {"shirt", "clothing", -0.25, {0.85, 0.75, 0.10}, S::Cross, T::Solid},
      {"cloud", "sky", -0.4, {0.45, 0.65, 0.85}, S::Ellipse, T::Solid},
      {"pavement", "ground", -0.6, {0.55, 0.35, 0.60}, S::Rectangle, T::Checker},
      {"grass", "ground", -0.8, {0.25, 0.70, 0.25}, S::Diamond, T::Stripes},
      {"wall", "scene", -1.0, {0.10, 0.65, 0.60}, S::Rectangle, T::Solid},
  };
}

SynthSpec default_synth_spec() {
  SynthSpec spec;
  spec.semantics = default_synthetic_semantics();
  return spec;
}

Tensor gaussian_blur(const Tensor& map, double sigma) {
  if (map.rank() != 2) throw ShapeError("gaussian_blur: expected [H,W], got " + shape_str(map.shape()));
  if (!(sigma > 0.0)) fail(ErrorKind::InvalidArgument, "gaussian_blur: sigma must be positive");
  const std::size_t h = map.dim(0), w = map.dim(1);
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
    const double v = std::exp(-static_cast<double>(d * d) / (2.0 * sigma * sigma));
    kernel[static_cast<std::size_t>(d + radius)] = v;
    ksum += v;
  }
  for (auto& v : kernel) v /= ksum;

  Tensor tmp({h, w}, 0.0), out({h, w}, 0.0);
  const auto sh = static_cast<std::ptrdiff_t>(h), sw = static_cast<std::ptrdiff_t>(w);
  for (std::ptrdiff_t y = 0; y < sh; ++y)
    for (std::ptrdiff_t x = 0; x < sw; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
        const auto xx = x + d;
        if (xx < 0 || xx >= sw) continue;
        acc += kernel[static_cast<std::size_t>(d + radius)] * map[static_cast<std::size_t>(y * sw + xx)];
      }
      tmp[static_cast<std::size_t>(y * sw + x)] = acc;
    }
  for (std::ptrdiff_t y = 0; y < sh; ++y)
    for (std::ptrdiff_t x = 0; x < sw; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
        const auto yy = y + d;
        if (yy < 0 || yy >= sh) continue;
        acc += kernel[static_cast<std::size_t>(d + radius)] * tmp[static_cast<std::size_t>(yy * sw + x)];
      }
      out[static_cast<std::size_t>(y * sw + x)] = acc;
    }
  return out;
}

Tensor build_density_map(const std::vector<FixationPoint>& points, std::size_t height, std::size_t width,
                         double sigma) {
  if (points.empty()) fail(ErrorKind::InvalidArgument, "build_density_map: empty fixation list");
  Tensor impulses({height, width}, 0.0);
  for (const auto& p : points) {
    if (p.row >= height || p.col >= width) fail(ErrorKind::InvalidArgument, "build_density_map: point out of bounds");
    impulses[p.row * width + p.col] += 1.0;
  }
  Tensor d = gaussian_blur(impulses, sigma);
  double total = 0.0;
  for (double v : d.data()) total += v;
  for (auto& v : d.data()) v /= total;
  return d;
}

std::vector<std::uint16_t> quantize_density(const Tensor& density) {
  double peak = 0.0;
  for (double v : density.data()) peak = std::max(peak, v);
  std::vector<std::uint16_t> out(density.numel(), 0);
  if (peak <= 0.0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint16_t>(std::lround(std::max(0.0, density[i]) / peak * 65535.0));
  }
  return out;
}

Tensor dequantize_density(const std::vector<std::uint16_t>& samples, std::size_t height, std::size_t width) {
  if (samples.size() != height * width) throw ShapeError("dequantize_density: sample count mismatch");
  double total = 0.0;
  for (auto s : samples) total += s;
  if (total <= 0.0) fail(ErrorKind::Format, "density map is all zero");
  Tensor out({height, width});
  for (std::size_t i = 0; i < samples.size(); ++i) out[i] = samples[i] / total;
  return out;
}

Tensor scene_saliency_levels(const SynthSpec& spec, const std::vector<PlacedObject>& objects) {
  const double unset = -1.0;
  Tensor obj_level({spec.height, spec.width}, unset);
  for (const auto& obj : objects) {
    const double level = (spec.semantics.at(obj.style).planted_weight + 1.0) / 2.0;
    for_each_object_pixel(spec, obj, [&](std::size_t px, std::size_t py) {
      double& cell = obj_level[py * spec.width + px];
      cell = std::max(cell, level);
    });
  }
  Tensor levels({spec.height, spec.width});
  for (std::size_t i = 0; i < levels.numel(); ++i) {
    levels[i] = spec.floor_level + (obj_level[i] == unset ? spec.background_level : obj_level[i]);
  }
  return levels;
}

AnnotatedImage render_scene(const SynthSpec& spec, const std::string& id, const std::vector<PlacedObject>& objects,
                            std::uint64_t scene_seed) {
  Rng rng(scene_seed);
  const std::size_t h = spec.height, w = spec.width;
  AnnotatedImage img;
  img.id = id;
  img.pixels = Tensor({3, h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    const double g = 0.5 + rng.uniform(-spec.pixel_noise, spec.pixel_noise);
    for (std::size_t c = 0; c < 3; ++c) img.pixels[c * h * w + i] = g;
  }
  for (const auto& obj : objects) {
    const auto& style = spec.semantics.at(obj.style);
    for_each_object_pixel(spec, obj, [&](std::size_t px, std::size_t py) {
      double shade = 1.0;
      const std::size_t lx = px - obj.x, ly = py - obj.y;
      if (style.texture == Texture::Stripes && (ly / 2) % 2 == 1) shade = 0.6;
      if (style.texture == Texture::Checker && ((lx / 3) + (ly / 3)) % 2 == 1) shade = 0.7;
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = style.rgb[c] * shade + rng.uniform(-spec.pixel_noise, spec.pixel_noise);
        img.pixels[(c * h + py) * w + px] = v;
      }
    });
    img.boxes.push_back({obj.style, obj.x, obj.y, std::min(obj.w, w - obj.x), std::min(obj.h, h - obj.y)});
  }
  for (auto& v : img.pixels.data()) v = quantize8(v);

  Tensor blurred = gaussian_blur(scene_saliency_levels(spec, objects), spec.blur_sigma_fraction * double(w));
  Tensor density = dequantize_density(quantize_density(blurred), h, w);

  // Inverse-CDF sampling of fixations from the density.
  std::vector<double> cdf(density.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < cdf.size(); ++i) {
    acc += density[i];
    cdf[i] = acc;
  }
  img.fixations.height = h;
  img.fixations.width = w;
  for (std::size_t k = 0; k < spec.fixations_per_image; ++k) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
    img.fixations.points.push_back({idx / w, idx % w});
  }
  img.fixations.density = std::move(density);
  return img;
}

Corpus generate_synthetic_corpus(const SynthSpec& spec, std::size_t n_images) {
  spec.validate();
  if (n_images == 0) fail(ErrorKind::InvalidArgument, "n_images must be at least 1");
  Corpus corpus;
  corpus.id = "synth-s" + std::to_string(spec.seed) + "-n" + std::to_string(n_images);
  for (const auto& s : spec.semantics) corpus.vocab.add(s.name, s.category, s.planted_weight);

  for (std::size_t i = 0; i < n_images; ++i) {
    const std::uint64_t scene_seed = splitmix64(spec.seed ^ splitmix64(i + 1));
    Rng rng(splitmix64(scene_seed));
    const auto count = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(spec.objects_min), static_cast<std::int64_t>(spec.objects_max)));
    std::vector<std::size_t> pool(spec.semantics.size());
    for (std::size_t k = 0; k < pool.size(); ++k) pool[k] = k;
    rng.shuffle(pool);

    std::vector<PlacedObject> objects;
    for (std::size_t k = 0; k < count; ++k) {
      for (int attempt = 0; attempt < 100; ++attempt) {
        PlacedObject obj;
        obj.style = pool[k];
        const auto smin = static_cast<std::int64_t>(spec.object_size_min);
        const auto smax = static_cast<std::int64_t>(spec.object_size_max);
        obj.w = static_cast<std::size_t>(rng.uniform_int(smin, smax));
        obj.h = static_cast<std::size_t>(rng.uniform_int(smin, smax));
        obj.x = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spec.width - obj.w)));
        obj.y = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spec.height - obj.h)));
        // Keep every object at least half visible relative to its neighbours.
        bool ok = true;
        for (const auto& other : objects) {
          const auto smaller = std::min(obj.w * obj.h, other.w * other.h);
          if (2 * overlap_area(obj, other) > smaller) {
            ok = false;
            break;
          }
        }
        if (ok) {
          objects.push_back(obj);
          break;
        }
      }
    }
    char id[32];
    std::snprintf(id, sizeof id, "synth_%05zu", i);
    corpus.images.push_back(render_scene(spec, id, objects, scene_seed));
  }
  if (n_images >= 2) assign_split(corpus, split(corpus, spec.val_fraction, spec.seed));
  return corpus;
}

SplitResult split(const Corpus& corpus, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    fail(ErrorKind::InvalidArgument, "val_fraction must be in (0,1)");
  }
  const std::size_t n = corpus.images.size();
  if (n < 2) fail(ErrorKind::InvalidArgument, "split needs at least 2 images, corpus has " + std::to_string(n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(splitmix64(seed ^ 0x5151ull));
  rng.shuffle(order);
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  SplitResult r;
  r.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  r.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(r.val.begin(), r.val.end());
  std::sort(r.train.begin(), r.train.end());
  return r;
}

void assign_split(Corpus& corpus, const SplitResult& result) {
  for (auto& img : corpus.images) img.split = Split::Unassigned;
  for (auto i : result.train) corpus.images.at(i).split = Split::Train;
  for (auto i : result.val) corpus.images.at(i).split = Split::Val;
}

Corpus ingest_annotations(const fs::path& image_dir, const fs::path& annotation_file, SemanticVocabulary vocab,
                          IngestStats* stats, const fs::path& density_dir) {
  std::ifstream ann(annotation_file);
  if (!ann) fail(ErrorKind::Io, "cannot open annotation file: " + annotation_file.string());

  struct BoxRecord {
    std::size_t line;
    std::string image;
    SemanticBox box;
  };
  struct FixRecord {
    std::size_t line;
    std::string image;
    FixationPoint point;
  };

  Corpus corpus;
  IngestStats st;
  const std::size_t vocab_before = vocab.size();
  std::vector<std::string> order;
  std::set<std::string> seen;
  auto note_image = [&](const std::string& id) {
    if (seen.insert(id).second) order.push_back(id);
  };

  const std::string ann_name = annotation_file.filename().string();
  std::vector<BoxRecord> boxes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ann, line)) {
    ++lineno;
    line = strip_cr(line);
    if (skippable(line)) continue;
    auto f = split_tabs(line);
    auto bad = [&](const std::string& why) {
      fail(ErrorKind::Format, ann_name + ":" + std::to_string(lineno) + ": " + why);
    };
    if (f.size() != 7) bad("expected 7 tab-separated fields, got " + std::to_string(f.size()));
    if (f[0].empty()) bad("empty image id");
    SemanticBox b;
    if (!parse_size(f[3], b.x) || !parse_size(f[4], b.y) || !parse_size(f[5], b.w) || !parse_size(f[6], b.h)) {
      bad("box coordinates must be non-negative integers");
    }
    if (b.w == 0 || b.h == 0) bad("box has zero extent");
    b.semantic = vocab.find_or_add(f[1], f[2]);
    boxes.push_back({lineno, f[0], b});
    note_image(f[0]);
  }

  const fs::path fix_path = annotation_file.parent_path() / "fixations.tsv";
  std::vector<FixRecord> fixes;
  if (fs::exists(fix_path)) {
    std::ifstream fx(fix_path);
    if (!fx) fail(ErrorKind::Io, "cannot open fixation file: " + fix_path.string());
    lineno = 0;
    while (std::getline(fx, line)) {
      ++lineno;
      line = strip_cr(line);
      if (skippable(line)) continue;
      auto f = split_tabs(line);
      auto bad = [&](const std::string& why) {
        fail(ErrorKind::Format, "fixations.tsv:" + std::to_string(lineno) + ": " + why);
      };
      if (f.size() != 3) bad("expected 3 tab-separated fields, got " + std::to_string(f.size()));
      FixationPoint p;
      if (f[0].empty() || !parse_size(f[1], p.row) || !parse_size(f[2], p.col)) bad("malformed fixation record");
      fixes.push_back({lineno, f[0], p});
      note_image(f[0]);
    }
  }

  std::map<std::string, std::size_t> index;
  for (const auto& id : order) {
    const fs::path img_path = image_dir / (id + ".png");
    if (!fs::exists(img_path)) fail(ErrorKind::Io, "missing image: " + img_path.string());
    AnnotatedImage img;
    img.id = id;
    img.pixels = read_png_rgb(img_path);
    img.fixations.height = img.height();
    img.fixations.width = img.width();
    index[id] = corpus.images.size();
    corpus.images.push_back(std::move(img));
  }
  for (const auto& r : boxes) {
    auto& img = corpus.images[index.at(r.image)];
    if (r.box.x + r.box.w > img.width() || r.box.y + r.box.h > img.height()) {
      fail(ErrorKind::Format, ann_name + ":" + std::to_string(r.line) + ": box exceeds image bounds " +
                                  std::to_string(img.height()) + "x" + std::to_string(img.width()));
    }
    img.boxes.push_back(r.box);
    ++st.records;
  }
  for (const auto& r : fixes) {
    auto& img = corpus.images[index.at(r.image)];
    if (r.point.row >= img.height() || r.point.col >= img.width()) {
      fail(ErrorKind::Format, "fixations.tsv:" + std::to_string(r.line) + ": fixation outside image bounds");
    }
    img.fixations.points.push_back(r.point);
    ++st.fixations;
  }
  for (auto& img : corpus.images) {
    if (img.fixations.points.empty()) fail(ErrorKind::Format, "image '" + img.id + "' has no fixation records");
    const fs::path dpath = density_dir.empty() ? fs::path() : density_dir / (img.id + ".png");
    if (!dpath.empty() && fs::exists(dpath)) {
      std::size_t dh = 0, dw = 0;
      auto samples = read_png_gray16(dpath, dh, dw);
      if (dh != img.height() || dw != img.width()) {
        fail(ErrorKind::Format, "density map size mismatch for image '" + img.id + "'");
      }
      img.fixations.density = dequantize_density(samples, dh, dw);
    } else {
      img.fixations.density =
          build_density_map(img.fixations.points, img.height(), img.width(), 0.05 * double(img.width()));
    }
  }

  st.images = corpus.images.size();
  st.new_semantics = vocab.size() - vocab_before;
  corpus.vocab = std::move(vocab);
  corpus.id = annotation_file.parent_path().filename().string();
  if (stats) *stats = st;
  return corpus;
}

void save_corpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "density");
  auto open = [](const fs::path& p) {
    std::ofstream os(p, std::ios::trunc);
    if (!os) fail(ErrorKind::Io, "cannot write " + p.string());
    return os;
  };
  {
    auto os = open(dir / "manifest.txt");
    os << "# corpus " << corpus.id << '\n';
    for (const auto& img : corpus.images) os << img.id << '\t' << split_name(img.split) << '\n';
  }
  {
    auto os = open(dir / "semantics.tsv");
    os << "# id\tname\tcategory\tplanted_weight\n";
    for (const auto& e : corpus.vocab.entries()) {
      os << e.id << '\t' << e.name << '\t' << e.category << '\t'
         << (e.planted_weight ? fmt_double(*e.planted_weight) : std::string("-")) << '\n';
    }
  }
  {
    auto os = open(dir / "annotations.tsv");
    for (const auto& img : corpus.images) {
      for (const auto& b : img.boxes) {
        const auto& e = corpus.vocab[b.semantic];
        os << img.id << '\t' << e.name << '\t' << e.category << '\t' << b.x << '\t' << b.y << '\t' << b.w << '\t'
           << b.h << '\n';
      }
    }
  }
  {
    auto os = open(dir / "fixations.tsv");
    for (const auto& img : corpus.images) {
      for (const auto& p : img.fixations.points) os << img.id << '\t' << p.row << '\t' << p.col << '\n';
    }
  }
  for (const auto& img : corpus.images) {
    write_png_rgb(dir / "images" / (img.id + ".png"), img.pixels);
    write_png_gray16(dir / "density" / (img.id + ".png"), img.height(), img.width(),
                     quantize_density(img.fixations.density));
  }
}

Corpus load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::Io, "corpus directory not found: " + dir.string());
  SemanticVocabulary vocab;
  const fs::path sem_path = dir / "semantics.tsv";
  if (fs::exists(sem_path)) {
    std::ifstream is(sem_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      line = strip_cr(line);
      if (skippable(line)) continue;
      auto f = split_tabs(line);
      std::size_t id = 0;
      double w = 0.0;
      const bool has_weight = f.size() == 4 && f[3] != "-";
      if (f.size() != 4 || !parse_size(f[0], id) || id != vocab.size() || (has_weight && !parse_double(f[3], w))) {
        fail(ErrorKind::Format, "semantics.tsv:" + std::to_string(lineno) + ": malformed record");
      }
      vocab.add(f[1], f[2], has_weight ? std::optional<double>(w) : std::nullopt);
    }
  }
  Corpus corpus = ingest_annotations(dir / "images", dir / "annotations.tsv", std::move(vocab), nullptr,
                                     dir / "density");
  corpus.id = dir.filename().string();

  const fs::path manifest = dir / "manifest.txt";
  if (fs::exists(manifest)) {
    std::ifstream is(manifest);
    std::string line;
    std::size_t lineno = 0;
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < corpus.images.size(); ++i) index[corpus.images[i].id] = i;
    std::vector<AnnotatedImage> ordered;
    while (std::getline(is, line)) {
      ++lineno;
      line = strip_cr(line);
      if (line.rfind("# corpus ", 0) == 0) {
        corpus.id = line.substr(9);
        continue;
      }
      if (skippable(line)) continue;
      auto f = split_tabs(line);
      if (f.size() != 2) fail(ErrorKind::Format, "manifest.txt:" + std::to_string(lineno) + ": malformed record");
      auto it = index.find(f[0]);
      if (it == index.end()) {
        fail(ErrorKind::Format, "manifest.txt:" + std::to_string(lineno) + ": unknown image '" + f[0] + "'");
      }
      AnnotatedImage img = std::move(corpus.images[it->second]);
      if (f[1] == "train") {
        img.split = Split::Train;
      } else if (f[1] == "val") {
        img.split = Split::Val;
      } else if (f[1] == "none") {
        img.split = Split::Unassigned;
      } else {
        fail(ErrorKind::Format, "manifest.txt:" + std::to_string(lineno) + ": unknown split tag '" + f[1] + "'");
      }
      ordered.push_back(std::move(img));
    }
    if (ordered.size() != corpus.images.size()) {
      fail(ErrorKind::Format, "manifest.txt lists " + std::to_string(ordered.size()) + " images, corpus has " +
                                  std::to_string(corpus.images.size()));
    }
    corpus.images = std::move(ordered);
  }
  return corpus;
}

}  // namespace basislens
