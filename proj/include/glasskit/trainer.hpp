#pragma once

// SGD training with poly learning-rate decay, periodic validation and
// best-by-IoU checkpointing.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "glasskit/checkpoint.hpp"
#include "glasskit/dataset.hpp"
#include "glasskit/metrics.hpp"
#include "glasskit/network.hpp"
#include "glasskit/optim.hpp"
#include "glasskit/report.hpp"

namespace glasskit {

enum class Precision { f32, f64 };

struct TrainConfig {
  double base_lr = 1e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double poly_power = 0.9;
  int batch_size = 4;
  int max_iters = 2000;
  int eval_every = 200;
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;
  bool augment = true;

  void validate() const {
    if (!(base_lr > 0) || !(momentum >= 0) || !(weight_decay >= 0))
      throw InvalidInput("train.base_lr must be positive, momentum and weight_decay non-negative");
    if (!(poly_power > 0 && poly_power <= 1)) throw InvalidInput("train.poly_power must lie in (0,1]");
    if (batch_size < 1 || max_iters < 1 || eval_every < 1)
      throw InvalidInput("train.batch_size, train.max_iters and train.eval_every must be positive");
  }
};

/// base_lr * (1 - iter/max_iters)^power for 0 <= iter <= max_iters.
inline double poly_lr(int iter, const TrainConfig& cfg) {
  if (iter < 0 || iter > cfg.max_iters)
    throw InvalidInput("poly_lr: iteration " + std::to_string(iter) + " outside [0, " + std::to_string(cfg.max_iters) + "]");
  return cfg.base_lr * std::pow(1.0 - static_cast<double>(iter) / cfg.max_iters, cfg.poly_power);
}

struct EvalRecord {
  int iter;
  MetricsReport report;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
  std::vector<double> loss_history;  // total loss per iteration
  std::vector<EvalRecord> evals;
  double best_iou = -1.0;
};

template <class T>
nn::SupervisionSet<T> supervision_of(const Batch<T>& b) {
  return {b.masks, b.interior, b.boundary};
}

/// Eval-mode inference without a graph; sigmoid of the final map per image.
template <class T>
std::vector<PredictionMap> predict_maps(const nn::GlassNet<T>& net, const std::vector<Sample>& samples, int batch = 4) {
  nn::NoGradGuard guard;
  std::vector<PredictionMap> out;
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(samples.size(), start + batch); ++i) idx.push_back(i);
    const auto b = make_batch<T>(samples, idx);
    const auto probs = nn::sigmoid(net.forward(b.images, false).final_map);
    const int h = probs.dim(2), w = probs.dim(3);
    for (std::size_t n = 0; n < idx.size(); ++n) {
      PredictionMap p(h, w);
      for (std::size_t i = 0; i < p.size(); ++i) p.values[i] = static_cast<double>(probs.data()[n * p.size() + i]);
      out.push_back(std::move(p));
    }
  }
  return out;
}

template <class T>
MetricsReport evaluate_model(const nn::GlassNet<T>& net, const std::vector<Sample>& samples) {
  auto preds = predict_maps(net, samples);
  std::vector<std::pair<PredictionMap, BinaryMask>> pairs;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    pairs.emplace_back(std::move(preds[i]), samples[i].mask);
    names.push_back(samples[i].name);
  }
  return evaluate_dataset(pairs, names);
}

inline std::string history_line(int iter, const MetricsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "iter %d acc %.6f iou %.6f fbeta %.6f mae %.6f ber %.4f n_images %zu", iter, r.acc,
                r.iou, r.f_beta, r.mae, r.ber, r.image_count);
  return buf;
}

/// Runs cfg.max_iters SGD iterations. Writes final.glck, best.glck (when a
/// validation set is given) and history.txt under out_dir.
template <class T>
TrainResult train(nn::GlassNet<T>& net, std::shared_ptr<const std::vector<Sample>> train_set,
                  const std::vector<Sample>* val_set, const TrainConfig& cfg, const std::filesystem::path& out_dir,
                  std::ostream* log = nullptr) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  BatchStream<T> stream(std::move(train_set), cfg.batch_size, derive_seed(cfg.seed, "data"), cfg.augment);
  std::ofstream history(out_dir / "history.txt");
  if (!history) throw IoError("cannot write " + (out_dir / "history.txt").string());

  TrainResult result;
  result.final_checkpoint = out_dir / "final.glck";
  const nn::SgdOptions sgd{cfg.momentum, cfg.weight_decay};
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const double lr = poly_lr(it - 1, cfg);
    const auto batch = stream.next();
    const auto bundle = net.forward(batch.images, true);
    const auto loss = nn::network_loss(net, bundle, supervision_of(batch));
    if (!std::isfinite(static_cast<double>(loss.total)))
      throw CheckFailure("non-finite loss at " + nn::format_loss_line(it, lr, loss));
    nn::backward(loss.total_tensor);
    nn::sgd_step(net.parameters(), lr, sgd);
    result.loss_history.push_back(static_cast<double>(loss.total));
    if (log) *log << nn::format_loss_line(it, lr, loss) << '\n';

    if (val_set && !val_set->empty() && (it % cfg.eval_every == 0 || it == cfg.max_iters)) {
      const auto report = evaluate_model(net, *val_set);
      history << history_line(it, report) << '\n' << std::flush;
      if (log) *log << "eval " << history_line(it, report) << '\n';
      result.evals.push_back({it, report});
      if (report.iou > result.best_iou) {
        result.best_iou = report.iou;
        result.best_checkpoint = out_dir / "best.glck";
        nn::save_checkpoint(result.best_checkpoint.string(), net.parameters());
      }
    }
  }
  nn::save_checkpoint(result.final_checkpoint.string(), net.parameters());
  return result;
}

/// Loads a checkpoint into a fresh network and evaluates it on a manifest.
inline MetricsReport evaluate_checkpoint(const std::string& ckpt, const DatasetManifest& manifest,
                                         const nn::NetworkConfig& net_cfg) {
  nn::GlassNet<float> net(net_cfg, 0);
  nn::load_checkpoint(ckpt, net.parameters());
  const auto samples = load_samples(manifest, net_cfg.input_size);
  return evaluate_model(net, samples);
}

}  // namespace glasskit
