#pragma once

#include <memory>
#include <vector>

#include "env/gridworld.hpp"
#include "model/agent.hpp"

namespace canav::train {

using nn::real;

// Vectorized episode collection. Each environment owns a private world-seed
// stream derived from (run seed, env index), so worker layout never perturbs
// world generation. Training worlds draw seeds below eval::kEvalSeedFloor.
class EnvPool {
 public:
  EnvPool(env::EnvConfig cfg, uint64_t run_seed, int num_envs);
  int size() const { return static_cast<int>(episodes_.size()); }
  env::Episode& episode(int i) { return *episodes_[static_cast<size_t>(i)]; }
  void reset_env(int i);
  void reset_all();
  uint64_t world_seed(int i) const { return current_seed_[static_cast<size_t>(i)]; }

 private:
  env::EnvConfig cfg_;
  uint64_t run_seed_;
  std::vector<std::unique_ptr<env::Episode>> episodes_;
  std::vector<uint64_t> counter_;
  std::vector<uint64_t> current_seed_;
};

struct StepRecord {
  env::Observation obs;
  int action = 0;
  real logprob = 0;
  real value = 0;
  double reward = 0;
  bool done = false;           // episode ended with this action
  bool episode_start = false;  // begins a fresh sequence context
  bool success = false;
  real advantage = 0;
  real ret = 0;
};

struct RolloutBuffer {
  int num_envs = 0;
  int horizon = 0;
  std::vector<StepRecord> steps;      // env-major [e * horizon + t]
  std::vector<real> bootstrap_value;  // per env; 0 when the tail is terminal

  StepRecord& at(int e, int t) {
    return steps[static_cast<size_t>(e) * horizon + t];
  }
  const StepRecord& at(int e, int t) const {
    return steps[static_cast<size_t>(e) * horizon + t];
  }

  struct Segment {
    int env = 0;
    int t0 = 0;  // inclusive
    int t1 = 0;  // exclusive
    int len() const { return t1 - t0; }
  };
  // maximal single-episode runs, env-major then time order
  std::vector<Segment> segments() const;
};

// One on-policy window: every env starts a fresh episode, finished episodes
// auto-reset within the window, unfinished tails get a bootstrap value.
RolloutBuffer collect_rollouts(const model::Agent& agent, EnvPool& pool,
                               int horizon, uint64_t run_seed,
                               uint64_t iteration);

// Generalized advantage estimation plus returns; advantages are then
// normalized to mean 0 / std 1 across the buffer.
void compute_gae(RolloutBuffer& buffer, double gamma, double lambda);

// shared categorical sampling from logits: returns action, fills logprob
int sample_from_logits(const std::vector<real>& logits, Rng& rng, real* logprob);
int argmax_logits(const std::vector<real>& logits);

}  // namespace canav::train
