#include "train/rollout.hpp"

#include <cmath>

#include "eval/metrics.hpp"
#include "nn/ops.hpp"

namespace canav::train {

EnvPool::EnvPool(env::EnvConfig cfg, uint64_t run_seed, int num_envs)
    : cfg_(cfg), run_seed_(run_seed) {
  if (num_envs < 1) fail(ErrorKind::config, "env pool: num_envs must be >= 1");
  episodes_.resize(static_cast<size_t>(num_envs));
  counter_.assign(static_cast<size_t>(num_envs), 0);
  current_seed_.assign(static_cast<size_t>(num_envs), 0);
  for (int i = 0; i < num_envs; ++i) reset_env(i);
}

void EnvPool::reset_env(int i) {
  uint64_t c = counter_[static_cast<size_t>(i)]++;
  uint64_t seed = derive_seed(run_seed_, "world-gen",
                              (static_cast<uint64_t>(i) << 32) | c) %
                  eval::kEvalSeedFloor;
  current_seed_[static_cast<size_t>(i)] = seed;
  episodes_[static_cast<size_t>(i)] =
      std::make_unique<env::Episode>(env::Episode::from_seed(seed, cfg_));
}

void EnvPool::reset_all() {
  for (int i = 0; i < size(); ++i) reset_env(i);
}

std::vector<RolloutBuffer::Segment> RolloutBuffer::segments() const {
  std::vector<Segment> segs;
  for (int e = 0; e < num_envs; ++e) {
    int t0 = 0;
    for (int t = 0; t < horizon; ++t) {
      const StepRecord& rec = at(e, t);
      if (t > 0 && rec.episode_start) {
        segs.push_back({e, t0, t});
        t0 = t;
      }
    }
    segs.push_back({e, t0, horizon});
  }
  return segs;
}

int sample_from_logits(const std::vector<real>& logits, Rng& rng, real* logprob) {
  int n = static_cast<int>(logits.size());
  real lse = nn::kern::log_sum_exp(logits.data(), n);
  double u = rng.uniform();
  double cum = 0;
  int action = n - 1;
  for (int a = 0; a < n; ++a) {
    cum += std::exp(static_cast<double>(logits[static_cast<size_t>(a)] - lse));
    if (u < cum) {
      action = a;
      break;
    }
  }
  if (logprob) *logprob = logits[static_cast<size_t>(action)] - lse;
  return action;
}

int argmax_logits(const std::vector<real>& logits) {
  int best = 0;
  for (int a = 1; a < static_cast<int>(logits.size()); ++a)
    if (logits[static_cast<size_t>(a)] > logits[static_cast<size_t>(best)]) best = a;
  return best;
}

RolloutBuffer collect_rollouts(const model::Agent& agent, EnvPool& pool,
                               int horizon, uint64_t run_seed,
                               uint64_t iteration) {
  if (horizon < 1) fail(ErrorKind::config, "collect: horizon must be >= 1");
  int num_envs = pool.size();
  RolloutBuffer buf;
  buf.num_envs = num_envs;
  buf.horizon = horizon;
  buf.steps.resize(static_cast<size_t>(num_envs) * horizon);
  buf.bootstrap_value.assign(static_cast<size_t>(num_envs), real(0));

  pool.reset_all();
  std::vector<model::Agent::Context> ctx;
  std::vector<Rng> samplers;
  ctx.reserve(static_cast<size_t>(num_envs));
  samplers.reserve(static_cast<size_t>(num_envs));
  std::vector<bool> fresh(static_cast<size_t>(num_envs), true);
  for (int e = 0; e < num_envs; ++e) {
    ctx.emplace_back(agent);
    samplers.emplace_back(derive_seed(
        run_seed, "rollout-env", (static_cast<uint64_t>(e) << 32) | iteration));
  }

  for (int t = 0; t < horizon; ++t) {
    for (int e = 0; e < num_envs; ++e) {
      env::Episode& ep = pool.episode(e);
      StepRecord& rec = buf.at(e, t);
      rec.obs = ep.observation();
      rec.episode_start = fresh[static_cast<size_t>(e)];
      fresh[static_cast<size_t>(e)] = false;

      model::PolicyStep ps = ctx[static_cast<size_t>(e)].observe(rec.obs);
      rec.value = ps.value;
      rec.action = sample_from_logits(ps.logits, samplers[static_cast<size_t>(e)],
                                      &rec.logprob);
      ctx[static_cast<size_t>(e)].commit(rec.action);

      env::StepResult sr = ep.step(rec.action);
      rec.reward = sr.reward;
      rec.done = sr.done;
      rec.success = sr.info.success;
      if (sr.done) {
        pool.reset_env(e);
        ctx[static_cast<size_t>(e)].reset();
        fresh[static_cast<size_t>(e)] = true;
      }
    }
  }

  // bootstrap the truncated tails
  for (int e = 0; e < num_envs; ++e) {
    const StepRecord& last = buf.at(e, horizon - 1);
    if (!last.done) {
      model::PolicyStep ps =
          ctx[static_cast<size_t>(e)].observe(pool.episode(e).observation());
      buf.bootstrap_value[static_cast<size_t>(e)] = ps.value;
    }
  }
  return buf;
}

void compute_gae(RolloutBuffer& buf, double gamma, double lambda) {
  for (int e = 0; e < buf.num_envs; ++e) {
    double adv = 0;
    for (int t = buf.horizon - 1; t >= 0; --t) {
      StepRecord& rec = buf.at(e, t);
      double next_value;
      if (rec.done)
        next_value = 0;
      else if (t == buf.horizon - 1)
        next_value = buf.bootstrap_value[static_cast<size_t>(e)];
      else
        next_value = buf.at(e, t + 1).value;
      double delta = rec.reward + gamma * next_value - rec.value;
      adv = delta + gamma * lambda * (rec.done ? 0.0 : adv);
      rec.advantage = static_cast<real>(adv);
      rec.ret = static_cast<real>(adv + rec.value);
    }
  }
  // normalize advantages across the whole buffer
  double mean = 0;
  int n = buf.num_envs * buf.horizon;
  for (const StepRecord& r : buf.steps) mean += r.advantage;
  mean /= n;
  double var = 0;
  for (const StepRecord& r : buf.steps) {
    double d = r.advantage - mean;
    var += d * d;
  }
  var /= n;
  double inv = 1.0 / (std::sqrt(var) + 1e-8);
  for (StepRecord& r : buf.steps)
    r.advantage = static_cast<real>((r.advantage - mean) * inv);
}

}  // namespace canav::train
