// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#include "basislens/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "basislens/error.hpp"
#include "basislens/parallel.hpp"
#include "basislens/rng.hpp"

namespace basislens {

namespace fs = std::filesystem;

namespace {

class Optimizer {
 public:
  Optimizer(std::vector<ad::Var> params, const TrainConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.emplace_back(p.shape(), 0.0);
      v_.emplace_back(p.shape(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const double lr = cfg_.learning_rate;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      if (!p.has_grad()) continue;
      const Tensor g = p.grad();
      auto w = p.mutable_value().data();
      auto m = m_[k].data();
      if (cfg_.optimizer == OptimizerKind::Sgd) {
        for (std::size_t i = 0; i < w.size(); ++i) {
          m[i] = cfg_.momentum * m[i] + g[i];
          w[i] -= lr * m[i];
        }
        continue;
      }
      auto v = v_[k].data();
      const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
      const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + 1e-8);
      }
    }
  }

 private:
  std::vector<ad::Var> params_;
  TrainConfig cfg_;
  std::vector<Tensor> m_, v_;
  long long t_ = 0;
};

struct ValMetrics {
  double nss = 0.0, cc = 0.0, kld = 0.0;
};

// Hooks that distinguish the two stages; the loop itself is shared.
struct StageHooks {
  std::vector<ad::Var> params;
  std::function<ad::Var(std::size_t image)> loss;
  std::function<ValMetrics()> validate;
  std::function<void(const fs::path&)> save;
  std::function<std::vector<Tensor>()> snapshot;
  std::function<void(const std::vector<Tensor>&)> restore;
};

std::string epoch_file(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03zu.ckpt", epoch);
  return buf;
}

struct SplitIndices {
  std::vector<std::size_t> train, val;
};

SplitIndices resolve_split(const Corpus& corpus, std::uint64_t seed) {
  if (corpus.images.empty()) fail(ErrorKind::InvalidArgument, "corpus is empty");
  SplitIndices s{corpus.indices(Split::Train), corpus.indices(Split::Val)};
  if (s.train.empty() && s.val.empty()) {
    auto r = split(corpus, 0.2, seed);
    s.train = std::move(r.train);
    s.val = std::move(r.val);
  }
  if (s.train.empty()) fail(ErrorKind::InvalidArgument, "corpus has no training images");
  if (s.val.empty()) fail(ErrorKind::InvalidArgument, "corpus has no validation images");
  return s;
}

TrainLog run_training(StageHooks& hooks, const SplitIndices& split_idx, const TrainConfig& cfg, int stage,
                      const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  Optimizer opt(hooks.params, cfg);
  TrainLog log;
  log.stage = stage;
  std::vector<double> per_image(split_idx.train.size(), 0.0);
  auto mean_loss = [&] {
    double acc = 0.0;
    for (double v : per_image) acc += v;
    return acc / static_cast<double>(per_image.size());
  };
  auto check_finite = [&](double v, std::size_t epoch) {
    if (!std::isfinite(v)) {
      throw DivergenceError("training diverged: non-finite loss at stage " + std::to_string(stage) + ", epoch " +
                            std::to_string(epoch));
    }
  };

  double best_cc = -std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_params;
  std::size_t since_best = 0;
  auto record = [&](std::size_t epoch, double train_loss) {
    const ValMetrics vm = hooks.validate();
    EpochRecord rec{epoch, train_loss, vm.nss, vm.cc, vm.kld, elapsed(), out_dir / epoch_file(epoch)};
    hooks.save(rec.checkpoint);
    if (vm.cc > best_cc) {
      best_cc = vm.cc;
      log.best_epoch = epoch;
      best_params = hooks.snapshot();
      since_best = 0;
    } else {
      ++since_best;
    }
    log.epochs.push_back(std::move(rec));
  };

  {
    ad::NoGradGuard guard;
    for (std::size_t k = 0; k < split_idx.train.size(); ++k) {
      per_image[k] = hooks.loss(split_idx.train[k]).item();
      check_finite(per_image[k], 0);
    }
  }
  record(0, mean_loss());

  std::vector<std::size_t> order(split_idx.train.size());
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    Rng rng(cfg.seed * 1000003ull + epoch);
    rng.shuffle(order);
    opt.zero_grad();
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t k = order[b];
        ad::Var loss = hooks.loss(split_idx.train[k]);
        per_image[k] = loss.item();
        check_finite(per_image[k], epoch);
        ad::backward(ad::scale(loss, inv));
      }
      opt.step();
      opt.zero_grad();
    }
    record(epoch, mean_loss());
    if (cfg.patience > 0 && since_best >= cfg.patience) break;
  }

  hooks.restore(best_params);
  log.best_checkpoint = out_dir / "best.ckpt";
  hooks.save(log.best_checkpoint);
  write_train_log(log, out_dir / "train_log.csv");
  return log;
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

std::vector<Tensor> snapshot_values(const std::vector<ad::Var>& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.value());
  return out;
}

void restore_values(std::vector<ad::Var>& params, const std::vector<Tensor>& values) {
  for (std::size_t k = 0; k < params.size(); ++k) params[k].mutable_value() = values.at(k);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail(ErrorKind::Config, "learning rate must be >= 0");
  if (batch_size == 0) fail(ErrorKind::Config, "batch size must be positive");
  if (stage != 1 && stage != 2) fail(ErrorKind::Config, "stage must be 1 or 2");
  if (momentum < 0.0 || momentum >= 1.0) fail(ErrorKind::Config, "momentum must be in [0,1)");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) fail(ErrorKind::Config, "Adam betas must be in [0,1)");
  loss.validate();
}

const EpochRecord& TrainLog::best() const {
  for (const auto& r : epochs) {
    if (r.epoch == best_epoch) return r;
  }
  fail(ErrorKind::State, "train log has no record for its best epoch");
}

TrainResult train_stage1(const Corpus& corpus, const BackboneConfig& backbone, const TrainConfig& config,
                         const fs::path& out_dir) {
  config.validate();
  if (config.stage != 1) fail(ErrorKind::Config, "train_stage1 requires stage = 1");
  const auto idx = resolve_split(corpus, config.seed);
  SaliencyModel model = SaliencyModel::initialized(backbone, config.seed);
  model.set_stage(1);
  const auto& bc = model.config();
  for (const auto& img : corpus.images) {
    if (img.height() != bc.input_height || img.width() != bc.input_width) {
      fail(ErrorKind::Shape, "image '" + img.id + "' is " + std::to_string(img.height()) + "x" +
                                 std::to_string(img.width()) + ", model expects " + std::to_string(bc.input_height) +
                                 "x" + std::to_string(bc.input_width));
    }
  }

  std::vector<FixationData> coarse(corpus.images.size());
  for (std::size_t i = 0; i < corpus.images.size(); ++i) {
    coarse[i] = downsample_fixations(corpus.images[i].fixations, bc.downsample());
  }

  StageHooks hooks;
  hooks.params = model.backbone_and_head_params();
  hooks.loss = [&](std::size_t i) {
    auto s = model.predict(ad::Var::constant(corpus.images[i].pixels), Head::Original);
    return combined_loss(s, coarse[i], config.loss, config.nss_weighting);
  };
  hooks.validate = [&] {
    EvalResult r = evaluate(model, corpus, idx.val, Head::Original);
    return ValMetrics{r.mean.nss, r.mean.cc, r.mean.kld};
  };
  hooks.save = [&](const fs::path& p) { model.save(p); };
  hooks.snapshot = [&] { return snapshot_values(hooks.params); };
  hooks.restore = [&](const std::vector<Tensor>& v) { restore_values(hooks.params, v); };

  TrainLog log = run_training(hooks, idx, config, 1, out_dir);
  return TrainResult{std::move(model), std::move(log)};
}

TrainResult train_stage2_reroute(const fs::path& stage1_checkpoint, const Corpus& corpus, const TrainConfig& config,
                                 const fs::path& out_dir) {
  config.validate();
  if (config.stage != 2) fail(ErrorKind::Config, "train_stage2_reroute requires stage = 2");
  if (!fs::exists(stage1_checkpoint)) fail(ErrorKind::Io, "checkpoint not found: " + stage1_checkpoint.string());
  SaliencyModel model = SaliencyModel::load(stage1_checkpoint);
  if (model.stage() != 1) fail(ErrorKind::State, "stage-2 training needs a stage-1 checkpoint");
  model.set_stage(2);
  // A constant positive start keeps the KLD normalizer away from its floor;
  // an all-zero map would produce gradients on the order of 1/eps^2.
  model.param(kWsal).mutable_value().fill(0.0);
  model.param(kWsalBias).mutable_value().fill(kStage2InitialBias);
  const auto idx = resolve_split(corpus, config.seed);
  const auto& bc = model.config();

  // Everything upstream of W^sal is frozen, so alpha is computed once.
  std::vector<Tensor> alphas(corpus.images.size());
  std::vector<FixationData> coarse(corpus.images.size());
  parallel_for(corpus.images.size(), [&](std::size_t i) {
    alphas[i] = model.alpha(corpus.images[i].pixels);
    coarse[i] = downsample_fixations(corpus.images[i].fixations, bc.downsample());
  });

  StageHooks hooks;
  hooks.params = model.reroute_params();
  hooks.loss = [&](std::size_t i) {
    auto s = predict_saliency_rerouted(ad::Var::constant(alphas[i]), model.param(kWsal), model.param(kWsalBias));
    return combined_loss(s, coarse[i], config.loss, config.nss_weighting);
  };
  hooks.validate = [&] {
    std::vector<ImageMetrics> m(idx.val.size());
    parallel_for(idx.val.size(), [&](std::size_t k) {
      ad::NoGradGuard guard;
      const std::size_t i = idx.val[k];
      auto s = predict_saliency_rerouted(ad::Var::constant(alphas[i]), model.param(kWsal), model.param(kWsalBias));
      m[k] = evaluate_map(s.value(), bc.grid_height(), bc.grid_width(), corpus.images[i]);
    });
    std::vector<double> nss_v, cc_v, kld_v;
    for (const auto& r : m) {
      nss_v.push_back(r.nss);
      cc_v.push_back(r.cc);
      kld_v.push_back(r.kld);
    }
    return ValMetrics{mean_of(nss_v), mean_of(cc_v), mean_of(kld_v)};
  };
  hooks.save = [&](const fs::path& p) { model.save(p); };
  hooks.snapshot = [&] { return snapshot_values(hooks.params); };
  hooks.restore = [&](const std::vector<Tensor>& v) { restore_values(hooks.params, v); };

  TrainLog log = run_training(hooks, idx, config, 2, out_dir);
  return TrainResult{std::move(model), std::move(log)};
}

std::vector<fs::path> snapshot_epochs(const TrainLog& log, std::span<const long long> epochs) {
  std::vector<fs::path> out;
  for (long long e : epochs) {
    if (e == kBestEpoch) {
      out.push_back(log.best().checkpoint);
      continue;
    }
    bool found = false;
    for (const auto& r : log.epochs) {
      if (e >= 0 && r.epoch == static_cast<std::size_t>(e)) {
        out.push_back(r.checkpoint);
        found = true;
        break;
      }
    }
    if (!found) {
      fail(ErrorKind::InvalidArgument, "epoch " + std::to_string(e) + " not in training log (last epoch " +
                                           std::to_string(log.epochs.empty() ? 0 : log.epochs.back().epoch) + ")");
    }
  }
  return out;
}

void write_train_log(const TrainLog& log, const fs::path& csv) {
  std::ofstream os(csv, std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot write " + csv.string());
  os << "epoch,train_loss,val_nss,val_cc,val_kld,checkpoint,best,stage\n";
  char buf[512];
  for (const auto& r : log.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%s,%d,%d\n", r.epoch, r.train_loss, r.val_nss,
                  r.val_cc, r.val_kld, r.checkpoint.filename().string().c_str(), r.epoch == log.best_epoch ? 1 : 0,
                  log.stage);
    os << buf;
  }
  if (!os) fail(ErrorKind::Io, "failed writing " + csv.string());
}

TrainLog read_train_log(const fs::path& csv) {
  std::ifstream is(csv);
  if (!is) fail(ErrorKind::Io, "cannot open training log: " + csv.string());
  TrainLog log;
  std::string line;
  std::getline(is, line);
  std::size_t lineno = 1;
  bool any_best = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 8) fail(ErrorKind::Format, csv.filename().string() + ":" + std::to_string(lineno) + ": malformed row");
    EpochRecord r;
    try {
      r.epoch = std::stoul(f[0]);
      r.train_loss = std::stod(f[1]);
      r.val_nss = std::stod(f[2]);
      r.val_cc = std::stod(f[3]);
      r.val_kld = std::stod(f[4]);
      log.stage = std::stoi(f[7]);
    } catch (const std::exception&) {
      fail(ErrorKind::Format, csv.filename().string() + ":" + std::to_string(lineno) + ": malformed number");
    }
    r.checkpoint = csv.parent_path() / f[5];
    if (!log.epochs.empty() && r.epoch <= log.epochs.back().epoch) {
      fail(ErrorKind::Format, csv.filename().string() + ": epochs not strictly increasing");
    }
    if (f[6] == "1") {
      log.best_epoch = r.epoch;
      any_best = true;
    }
    log.epochs.push_back(std::move(r));
  }
  if (log.epochs.empty() || !any_best) fail(ErrorKind::Format, "training log has no epochs or no best marker");
  log.best_checkpoint = csv.parent_path() / "best.ckpt";
  return log;
}

ImageMetrics evaluate_map(const SaliencyMap& grid_map, std::size_t grid_h, std::size_t grid_w,
                          const AnnotatedImage& image) {
  const Tensor full = upsample_saliency(grid_map, grid_h, grid_w, image.height(), image.width());
  ImageMetrics m;
  m.image_id = image.id;
  m.nss = nss(full.data(), image.width(), image.fixations.points);
  m.cc = cc(full.data(), image.fixations.density.data());
  m.kld = kld(full.data(), image.fixations.density.data());
  return m;
}

EvalResult evaluate(const SaliencyModel& model, const Corpus& corpus, std::span<const std::size_t> indices,
                    Head head) {
  if (indices.empty()) fail(ErrorKind::InvalidArgument, "evaluate: no images selected");
  const auto& bc = model.config();
  EvalResult r;
  r.images.resize(indices.size());
  parallel_for(indices.size(), [&](std::size_t k) {
    const auto& img = corpus.images.at(indices[k]);
    r.images[k] = evaluate_map(model.saliency(img.pixels, head), bc.grid_height(), bc.grid_width(), img);
  });
  r.mean.image_id = "mean";
  for (const auto& m : r.images) {
    r.mean.nss += m.nss;
    r.mean.cc += m.cc;
    r.mean.kld += m.kld;
  }
  const double n = static_cast<double>(r.images.size());
  r.mean.nss /= n;
  r.mean.cc /= n;
  r.mean.kld /= n;
  return r;
}

void write_metrics_csv(const EvalResult& result, const fs::path& csv) {
  std::ofstream os(csv, std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot write " + csv.string());
  os << "image_id,nss,cc,kld\n";
  char buf[256];
  auto row = [&](const ImageMetrics& m) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g\n", m.nss, m.cc, m.kld);
    os << m.image_id << buf;
  };
  for (const auto& m : result.images) row(m);
  row(result.mean);
  if (!os) fail(ErrorKind::Io, "failed writing " + csv.string());
}

}  // namespace basislens
