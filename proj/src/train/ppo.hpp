#pragma once

#include <string>

#include "causal/causal.hpp"
#include "eval/metrics.hpp"
#include "train/rollout.hpp"

namespace canav::train {

enum class CausalObjective { mse, nll };

struct PPOConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  int epochs = 4;
  int minibatches = 4;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double alpha = 1.0;
  int rollout_horizon = 128;
  int num_envs = 8;
  int64_t total_steps = 1'000'000;
  double lr0 = 1e-4;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
  int64_t eval_interval = 20'000;
  int eval_episodes = 50;
  int64_t checkpoint_interval = 0;  // 0: best + final checkpoints only
  CausalObjective causal_objective = CausalObjective::mse;
  bool detach_targets = true;
  bool causal_input_grad = true;
  int workers = 1;

  void validate() const;
};

struct MinibatchStats {
  double surrogate = 0;
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double causal_loss = 0;
  double clip_fraction = 0;
};

struct UpdateStats {
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double causal_loss = 0;
  double clip_fraction = 0;
  std::vector<MinibatchStats> minibatches;  // epoch-major
};

// epochs x minibatches clipped-surrogate steps over the buffer's segments;
// the causal batch reuses each minibatch's own transition triples.
UpdateStats ppo_update(model::Agent& agent, const causal::CausalHead& head,
                       const RolloutBuffer& buffer, const PPOConfig& cfg,
                       nn::AdamState& adam, double lr, Rng& update_rng);

struct TrainerConfig {
  env::EnvConfig env;
  model::AgentConfig agent;
  PPOConfig ppo;
  uint64_t seed = 0;
  std::string out_dir;
  std::string config_json = "{}";
  std::string config_hash = "0";
};

struct EvalPoint {
  int64_t step = 0;
  double sr = 0, spl = 0, gd = 0;
};

struct TrainSummary {
  double best_sr = 0;
  int64_t best_step = 0;
  eval::MetricsReport final_report;
  std::vector<EvalPoint> curve;
  std::string log_path;
  std::string best_checkpoint;
  std::string final_checkpoint;
};

// Full run: alternate collect/update, evaluate on held-out worlds every
// eval_interval steps, track the best-SR checkpoint, decay lr linearly.
TrainSummary train(const TrainerConfig& cfg);

// returns the pre-clip global gradient norm
double clip_gradients(const nn::ParamStore& params, double max_norm);

// held-out evaluation world seeds for a run (>= eval::kEvalSeedFloor)
std::vector<uint64_t> eval_world_seeds(uint64_t run_seed, int count);

}  // namespace canav::train
