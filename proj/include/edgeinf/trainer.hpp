#pragma once

#include <vector>

#include "edgeinf/gcn.hpp"
#include "edgeinf/graph.hpp"

namespace edgeinf {

struct TrainConfig {
  double lr = 0.03;
  double weight_decay = 1e-4;
  int epochs = 2000;
  uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  GcnParams params;
  std::vector<EpochStats> history;
  TrainMeta meta;
};

// Full-batch gradient descent on mean training cross-entropy with L2 weight
// decay. Deterministic under (graph, configs, seed); aborts on non-finite loss.
TrainResult train(const Graph& graph, const GcnConfig& model_config, const TrainConfig& config);

// Same descent loop but starting from the given parameters instead of a fresh
// initialization; used to measure ground-truth retraining effects.
TrainResult retrain_plain(const Graph& edited_graph, const GcnConfig& model_config,
                          const GcnParams& init, const TrainConfig& config);

struct PbrfConfig {
  double damping = 0.01;  // λ in the proximity term
  double eps = 0.0;       // edit weight, normally −1/|train|
  int steps = 500;
  double lr = 0.03;
  double tolerance = 1e-7;  // on the gradient norm

  void validate() const;
};

struct PbrfResult {
  GcnParams params;
  std::vector<double> objective_history;  // per accepted step, including start
  int steps_taken = 0;
  bool converged = false;  // gradient norm fell below tolerance
};

// Fine-tunes from theta_s by full-batch gradient descent on
//   (1/N)·Σ_train D(h_v(θ), h_v(θ_s)) + (λ/2)‖θ−θ_s‖²
//   + ε·Σ_train (ce(h_v^orig(θ)) − ce(h_v^edited(θ)))
// where D is the cross-entropy Bregman divergence and the edited graph is the
// edit applied at full weight. With eps = 0 the start is a stationary point
// and the parameters are returned unchanged.
PbrfResult pbrf_finetune(const Graph& graph, const GcnConfig& model_config, const GcnParams& theta_s,
                         const CandidateEdit& edit, const PbrfConfig& config);

}  // namespace edgeinf
