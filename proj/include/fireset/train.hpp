#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fireset/io.hpp"
#include "fireset/metrics.hpp"
#include "fireset/optimizer.hpp"
#include "fireset/set_loss.hpp"
#include "fireset/simulator.hpp"

namespace fireset {

struct TrainConfig {
  ModelConfig model;
  LossConfig loss;
  AdamConfig adam;
  EvalConfig eval;
  std::size_t grad_accum = 4;
  std::size_t max_epochs = 50;
  std::size_t eval_every = 5;       // validation cadence (epochs)
  std::size_t evolution_every = 10; // query-evolution export cadence; 0 = off
  int max_jitter = 4;               // training shift augmentation, per axis
  int min_confidence = 2;
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::filesystem::path best_checkpoint, last_checkpoint;
  double best_val_map = 0.0;
  std::size_t best_epoch = 0;
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

// Jittered gradient-accumulation training with periodic validation; selects
// the checkpoint with the best validation mAP. Logs one JSON line per step.
TrainResult train(const TrainConfig& cfg, const DatasetManifest& data,
                  const std::filesystem::path& out_dir);

// Model predictions over a dataset split, ready for evaluate_split.
std::vector<EntityEval> model_split_evals(const Network<float>& net, const DatasetManifest& data,
                                          const std::string& split, int min_confidence);

// Clusters of historical fire, used as the fixed persistence predictor:
// one query per cluster at its centre with full confidence.
TargetSet history_clusters(const Entity& e, int min_confidence);

std::vector<EntityEval> baseline_split_evals(const DatasetManifest& data,
                                             const std::string& split, int min_confidence);

}  // namespace fireset
