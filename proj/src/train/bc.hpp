#pragma once

#include "env/serialize.hpp"
#include "train/ppo.hpp"

namespace canav::train {

struct BCConfig {
  int64_t total_updates = 500;
  int batch_episodes = 16;
  double lr0 = 1e-4;
  double alpha = 1.0;
  double max_grad_norm = 0.5;
  CausalObjective causal_objective = CausalObjective::mse;
  bool detach_targets = true;
  bool causal_input_grad = true;
  int64_t eval_interval_updates = 100;
  int eval_episodes = 50;

  void validate() const;
};

struct BCUpdateStats {
  double ce = 0;           // cross-entropy against the expert actions
  double causal_loss = 0;
  double entropy = 0;
};

// One Adam step minimizing CE(logits, expert action) + alpha * causal loss
// over a minibatch of demonstration episodes.
BCUpdateStats bc_update(model::Agent& agent, const causal::CausalHead& head,
                        std::span<const env::DemoEpisode* const> batch,
                        const BCConfig& cfg, nn::AdamState& adam, double lr);

// Supervised run over a demonstration file with periodic held-out evaluation.
TrainSummary train_bc(const TrainerConfig& base, const BCConfig& bc,
                      const env::DemoFile& demos);

}  // namespace canav::train
