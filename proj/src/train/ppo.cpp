#include "train/ppo.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "nn/checkpoint.hpp"

namespace canav::train {

using namespace canav::nn;

void PPOConfig::validate() const {
  if (gamma < 0 || gamma >= 1)
    fail(ErrorKind::config, "ppo: gamma must lie in [0, 1)");
  if (gae_lambda < 0 || gae_lambda > 1)
    fail(ErrorKind::config, "ppo: gae_lambda must lie in [0, 1]");
  if (clip_eps <= 0) fail(ErrorKind::config, "ppo: clip_eps must be positive");
  if (epochs < 1 || minibatches < 1)
    fail(ErrorKind::config, "ppo: epochs and minibatches must be >= 1");
  if (alpha < 0) fail(ErrorKind::config, "ppo: alpha must be >= 0");
  if (rollout_horizon < 1 || num_envs < 1)
    fail(ErrorKind::config, "ppo: rollout_horizon and num_envs must be >= 1");
  if (total_steps < 0) fail(ErrorKind::config, "ppo: total_steps must be >= 0");
  if (lr0 < 0) fail(ErrorKind::config, "ppo: lr0 must be >= 0");
  if (eval_interval < 1) fail(ErrorKind::config, "ppo: eval_interval must be >= 1");
  if (eval_episodes < 1) fail(ErrorKind::config, "ppo: eval_episodes must be >= 1");
  if (workers < 1) fail(ErrorKind::config, "ppo: workers must be >= 1");
}

double clip_gradients(const ParamStore& params, double max_norm) {
  double sq = 0;
  for (const auto& [name, t] : params.items()) {
    t.node()->ensure_grad();
    for (real g : t.node()->grad) sq += static_cast<double>(g) * g;
  }
  double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    real s = static_cast<real>(max_norm / norm);
    for (const auto& [name, t] : params.items())
      for (real& g : t.node()->grad) g *= s;
  }
  return norm;
}

namespace {

struct SegmentLoss {
  Tensor loss;          // scaled contribution to the minibatch objective
  double surr_sum = 0;  // unclipped stats, host-side
  double vloss_sum = 0;
  double ent_sum = 0;
  double causal_value = 0;  // per-segment mean
  int causal_rows = 0;
  int clipped = 0;
};

SegmentLoss segment_loss(const model::Agent& agent,
                         const causal::CausalHead& head,
                         const RolloutBuffer& buf,
                         const RolloutBuffer::Segment& seg,
                         const PPOConfig& cfg, int n_steps, int n_triples) {
  int len = seg.len();
  std::vector<env::Observation> obs;
  std::vector<int> acts;
  std::vector<real> old_logp(static_cast<size_t>(len)),
      adv(static_cast<size_t>(len)), ret(static_cast<size_t>(len));
  obs.reserve(static_cast<size_t>(len));
  acts.reserve(static_cast<size_t>(len));
  for (int i = 0; i < len; ++i) {
    const StepRecord& rec = buf.at(seg.env, seg.t0 + i);
    obs.push_back(rec.obs);
    acts.push_back(rec.action);
    old_logp[static_cast<size_t>(i)] = rec.logprob;
    adv[static_cast<size_t>(i)] = rec.advantage;
    ret[static_cast<size_t>(i)] = rec.ret;
  }

  model::SegmentForward f = agent.forward_segment(obs, acts);
  Tensor logp = pick_per_row(log_softmax_rows(f.logits), acts);
  Tensor ratio = exp_t(sub(logp, Tensor::from(old_logp, {len})));
  Tensor advc = Tensor::from(adv, {len});
  Tensor clipped_ratio = clamp(ratio, static_cast<real>(1.0 - cfg.clip_eps),
                               static_cast<real>(1.0 + cfg.clip_eps));
  Tensor surr = minimum(mul(ratio, advc), mul(clipped_ratio, advc));

  Tensor vdiff = sub(f.values, Tensor::from(ret, {len}));
  Tensor vsq = mul(vdiff, vdiff);

  Tensor probs = softmax_rows(f.logits);
  Tensor logprobs = log_softmax_rows(f.logits);
  Tensor ent = scale(row_sums(mul(probs, logprobs)), real(-1));

  real inv_n = real(1) / static_cast<real>(n_steps);
  Tensor loss = add(
      add(scale(sum(surr), -inv_n),
          scale(sum(vsq), static_cast<real>(cfg.value_coef) * inv_n)),
      scale(sum(ent), -static_cast<real>(cfg.entropy_coef) * inv_n));

  SegmentLoss out;
  if (len >= 2) {
    Tensor h_o = slice_rows(f.h_visual, 0, len - 1);
    Tensor h_a = slice_rows(f.action_emb, 0, len - 1);
    Tensor target = slice_rows(f.h_visual, 1, len);
    if (cfg.detach_targets) target = target.detach();
    if (!cfg.causal_input_grad) {
      h_o = h_o.detach();
      h_a = h_a.detach();
    }
    if (cfg.alpha != 0) {
      Tensor closs = cfg.causal_objective == CausalObjective::mse
                         ? causal::causal_loss(head, h_o, h_a, target)
                         : causal::nll_loss(head, h_o, h_a, target);
      out.causal_value = closs.item();
      loss = add(loss, scale(closs, static_cast<real>(cfg.alpha) *
                                        static_cast<real>(len - 1) /
                                        static_cast<real>(n_triples)));
    } else {
      // reported but kept out of the gradient entirely
      NoGrad guard;
      Tensor closs = cfg.causal_objective == CausalObjective::mse
                         ? causal::causal_loss(head, h_o, h_a, target)
                         : causal::nll_loss(head, h_o, h_a, target);
      out.causal_value = closs.item();
    }
    out.causal_rows = len - 1;
  }

  out.loss = loss;
  for (int i = 0; i < len; ++i) {
    out.surr_sum += surr.at(i);
    out.vloss_sum += vsq.at(i);
    out.ent_sum += ent.at(i);
    double r = ratio.at(i);
    if (std::abs(r - 1.0) > cfg.clip_eps) ++out.clipped;
  }
  return out;
}

}  // namespace

UpdateStats ppo_update(model::Agent& agent, const causal::CausalHead& head,
                       const RolloutBuffer& buffer, const PPOConfig& cfg,
                       nn::AdamState& adam, double lr, Rng& update_rng) {
  auto segments = buffer.segments();
  const ParamStore& params = agent.params();
  UpdateStats stats;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<RolloutBuffer::Segment> order = segments;
    update_rng.shuffle(order);
    int total = static_cast<int>(order.size());
    for (int mb = 0; mb < cfg.minibatches; ++mb) {
      int lo = mb * total / cfg.minibatches;
      int hi = (mb + 1) * total / cfg.minibatches;
      if (lo >= hi) continue;
      int n_steps = 0, n_triples = 0;
      for (int i = lo; i < hi; ++i) {
        n_steps += order[static_cast<size_t>(i)].len();
        n_triples += std::max(0, order[static_cast<size_t>(i)].len() - 1);
      }
      if (n_steps == 0) continue;

      params.zero_grads();
      MinibatchStats ms;
      double causal_weighted = 0;
      try {
        for (int i = lo; i < hi; ++i) {
          SegmentLoss sl =
              segment_loss(agent, head, buffer, order[static_cast<size_t>(i)],
                           cfg, n_steps, std::max(1, n_triples));
          backward(sl.loss);
          ms.surrogate += sl.surr_sum;
          ms.value_loss += sl.vloss_sum;
          ms.entropy += sl.ent_sum;
          ms.clip_fraction += sl.clipped;
          causal_weighted += sl.causal_value * sl.causal_rows;
        }
        clip_gradients(params, cfg.max_grad_norm);
        adam_step(params, adam, static_cast<real>(lr));
      } catch (const Error& e) {
        fail(ErrorKind::runtime,
             "ppo_update aborted (epoch " + std::to_string(epoch) +
                 ", minibatch " + std::to_string(mb) + "): " + e.what());
      }

      ms.surrogate /= n_steps;
      ms.policy_loss = -ms.surrogate;
      ms.value_loss /= n_steps;
      ms.entropy /= n_steps;
      ms.clip_fraction /= n_steps;
      ms.causal_loss = n_triples > 0 ? causal_weighted / n_triples : 0;
      stats.minibatches.push_back(ms);
    }
  }

  if (!stats.minibatches.empty()) {
    for (const MinibatchStats& ms : stats.minibatches) {
      stats.policy_loss += ms.policy_loss;
      stats.value_loss += ms.value_loss;
      stats.entropy += ms.entropy;
      stats.causal_loss += ms.causal_loss;
      stats.clip_fraction += ms.clip_fraction;
    }
    double n = static_cast<double>(stats.minibatches.size());
    stats.policy_loss /= n;
    stats.value_loss /= n;
    stats.entropy /= n;
    stats.causal_loss /= n;
    stats.clip_fraction /= n;
  }
  return stats;
}

std::vector<uint64_t> eval_world_seeds(uint64_t run_seed, int count) {
  std::vector<uint64_t> seeds(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i)
    seeds[static_cast<size_t>(i)] =
        eval::kEvalSeedFloor +
        derive_seed(run_seed, "eval-world", static_cast<uint64_t>(i)) %
            eval::kEvalSeedFloor;
  return seeds;
}

TrainSummary train(const TrainerConfig& tc) {
  namespace fs = std::filesystem;
  tc.env.validate();
  tc.agent.validate();
  tc.ppo.validate();
  if (tc.out_dir.empty()) fail(ErrorKind::config, "train: out_dir required");
  std::error_code ec;
  fs::create_directories(tc.out_dir, ec);
  if (ec) fail(ErrorKind::io, "train: cannot create out_dir '" + tc.out_dir + "'");

  model::Agent agent(tc.agent, derive_seed(tc.seed, "policy-init"));
  Rng causal_rng(derive_seed(tc.seed, "causal-init"));
  causal::CausalHead head(tc.agent.d_model, agent.params(), causal_rng);
  AdamState adam;
  EnvPool pool(tc.env, tc.seed, tc.ppo.num_envs);
  Rng update_rng(derive_seed(tc.seed, "update"));
  std::vector<uint64_t> eval_seeds = eval_world_seeds(tc.seed, tc.ppo.eval_episodes);

  TrainSummary summary;
  summary.log_path = tc.out_dir + "/train_log.csv";
  std::ofstream log(summary.log_path, std::ios::trunc);
  if (!log) fail(ErrorKind::io, "train: cannot write '" + summary.log_path + "'");
  log << "# config_hash=" << tc.config_hash << " seed=" << tc.seed
      << " version=" << version_string() << " workers=" << tc.ppo.workers << "\n";
  log << "step,sr,spl,gd,policy_loss,value_loss,entropy,causal_loss,lr,wall_time\n";

  auto save = [&](const std::string& name, int64_t step) {
    nlohmann::json meta{{"config", nlohmann::json::parse(tc.config_json)},
                        {"config_hash", tc.config_hash},
                        {"step", step},
                        {"version", version_string()}};
    std::string path = tc.out_dir + "/" + name;
    save_checkpoint(path, agent.params(), &adam, meta.dump());
    return path;
  };

  auto t0 = std::chrono::steady_clock::now();
  int64_t step = 0, iteration = 0, last_eval_bucket = -1;
  summary.best_sr = -1;
  UpdateStats accum;
  int accum_n = 0;

  while (step < tc.ppo.total_steps) {
    double lr = linear_lr(step, tc.ppo.total_steps, tc.ppo.lr0);
    RolloutBuffer buf = collect_rollouts(agent, pool, tc.ppo.rollout_horizon,
                                         tc.seed, static_cast<uint64_t>(iteration));
    compute_gae(buf, tc.ppo.gamma, tc.ppo.gae_lambda);
    UpdateStats us = ppo_update(agent, head, buf, tc.ppo, adam, lr, update_rng);
    step += static_cast<int64_t>(tc.ppo.num_envs) * tc.ppo.rollout_horizon;
    ++iteration;
    accum.policy_loss += us.policy_loss;
    accum.value_loss += us.value_loss;
    accum.entropy += us.entropy;
    accum.causal_loss += us.causal_loss;
    ++accum_n;

    int64_t bucket = step / tc.ppo.eval_interval;
    bool final_step = step >= tc.ppo.total_steps;
    if (bucket > last_eval_bucket || final_step) {
      last_eval_bucket = bucket;
      eval::MetricsReport rep = eval::evaluate(agent, tc.env, eval_seeds, true,
                                               derive_seed(tc.seed, "eval"));
      double wall = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
      double inv = accum_n > 0 ? 1.0 / accum_n : 0.0;
      log << step << ',' << fmt_g(rep.sr) << ',' << fmt_g(rep.spl) << ','
          << fmt_g(rep.gd) << ',' << fmt_g(accum.policy_loss * inv) << ','
          << fmt_g(accum.value_loss * inv) << ',' << fmt_g(accum.entropy * inv)
          << ',' << fmt_g(accum.causal_loss * inv) << ',' << fmt_g(lr) << ','
          << fmt_g(wall, 6) << "\n";
      log.flush();
      accum = UpdateStats{};
      accum_n = 0;
      summary.curve.push_back({step, rep.sr, rep.spl, rep.gd});
      if (rep.sr > summary.best_sr) {
        summary.best_sr = rep.sr;
        summary.best_step = step;
        summary.best_checkpoint = save("best_sr.bin", step);
      }
      if (tc.ppo.checkpoint_interval > 0 &&
          (step % tc.ppo.checkpoint_interval == 0 || final_step))
        save("ckpt_" + std::to_string(step) + ".bin", step);
      if (final_step) summary.final_report = rep;
    }
  }

  summary.final_checkpoint = save("ckpt_" + std::to_string(step) + ".bin", step);
  if (!log) fail(ErrorKind::io, "train: log write failure (disk full?)");
  if (step > 0) {
    std::ofstream rep_file(tc.out_dir + "/report.json", std::ios::trunc);
    rep_file << eval::report_to_json(summary.final_report,
                                     summary.final_checkpoint, tc.config_hash)
                    .dump(2)
             << "\n";
    if (!rep_file)
      fail(ErrorKind::io, "train: cannot write final report");
  }
  if (summary.best_checkpoint.empty()) {
    summary.best_checkpoint = summary.final_checkpoint;
    summary.best_step = step;
  }
  return summary;
}

}  // namespace canav::train
