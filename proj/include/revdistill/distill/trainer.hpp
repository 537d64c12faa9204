#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>

#include "revdistill/data/sample.hpp"
#include "revdistill/distill/bundle.hpp"
#include "revdistill/nn/adam.hpp"

namespace revdistill {

struct EpochStats {
  int64_t epoch = 0;
  double mean_loss = 0;
  double wallclock_s = 0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Optimizes the bottleneck and decoder against the frozen encoder on
// anomaly-free samples. Writes per-epoch JSONL logs and periodic checkpoints
// when out_dir is non-empty. Fully deterministic for a fixed seed: shuffling,
// initialization and every kernel are seeded or order-stable.
inline ModelBundle train(ReverseDistillModel<float>& model,
                         const data::DatasetSplit& train_set, const TrainConfig& cfg,
                         const ScoringConfig& scoring = {},
                         const std::string& out_dir = "",
                         const EpochCallback& on_epoch = nullptr,
                         nlohmann::json extra = {}) {
  cfg.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  train_set.check_train_split();
  if (train_set.resolution() != model.spec().input_resolution) {
    throw DataError("training images are " + std::to_string(train_set.resolution()) +
                    "px but the encoder expects " +
                    std::to_string(model.spec().input_resolution));
  }

  const std::string digest_before = model.teacher().digest();
  auto params = model.trainable_params();
  nn::Adam<float> opt(params, static_cast<float>(cfg.learning_rate),
                      static_cast<float>(cfg.beta1), static_cast<float>(cfg.beta2));

  std::ofstream log;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log.open(out_dir + "/train_log.jsonl", std::ios::app);
  }

  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::vector<double> loss_history;
  const auto t_start = std::chrono::steady_clock::now();

  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Seeded per-epoch shuffle (Fisher-Yates over our own RNG).
    Rng shuffle_rng(Rng::mix(cfg.seed, static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0;
    int64_t seen = 0;
    for (size_t first = 0; first < order.size();
         first += static_cast<size_t>(cfg.batch_size)) {
      const size_t count =
          std::min(static_cast<size_t>(cfg.batch_size), order.size() - first);
      Tensor<float> batch =
          normalize_batch(data::stack_images(train_set, order, first, count));
      auto fwd = model.forward(batch, nn::Mode::kTrain);
      const auto maps = anomaly_maps(fwd.teacher_pyramid, fwd.student_pyramid);
      for (size_t k = 0; k < maps.per_stage.size(); ++k) {
        if (!all_finite(maps.per_stage[k])) {
          throw NumericError("non-finite loss at stage " +
                             std::to_string(maps.stage_ids[k]) + " (epoch " +
                             std::to_string(epoch) + "); aborting");
        }
      }
      const double batch_loss = kd_loss_from_maps(maps);
      loss_sum += batch_loss * static_cast<double>(count);
      seen += static_cast<int64_t>(count);
      model.backward(fwd);
      opt.step();
      opt.zero_grad();
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(seen);
    stats.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    loss_history.push_back(stats.mean_loss);
    if (log.is_open()) {
      log << nlohmann::json({{"epoch", stats.epoch},
                             {"mean_loss", stats.mean_loss},
                             {"wallclock_s", stats.wallclock_s}})
                 .dump()
          << "\n";
      log.flush();
    }
    if (on_epoch) on_epoch(stats);

    if (!out_dir.empty() &&
        (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs)) {
      ModelBundle ckpt = ModelBundle::of(model, cfg, scoring, loss_history, extra);
      ckpt.save(out_dir + "/ckpt_" + std::to_string(epoch) + ".bundle");
    }
  }

  RD_CHECK_MSG(model.teacher().compute_digest() == digest_before,
               "frozen encoder drifted during training");

  ModelBundle final_bundle = ModelBundle::of(model, cfg, scoring, loss_history, extra);
  if (!out_dir.empty()) final_bundle.save(out_dir + "/model.bundle");
  return final_bundle;
}

}  // namespace revdistill
