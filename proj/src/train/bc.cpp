#include "train/bc.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

#include "nn/checkpoint.hpp"

namespace canav::train {

using namespace canav::nn;

void BCConfig::validate() const {
  if (total_updates < 1) fail(ErrorKind::config, "bc: total_updates must be >= 1");
  if (batch_episodes < 1) fail(ErrorKind::config, "bc: batch_episodes must be >= 1");
  if (lr0 < 0) fail(ErrorKind::config, "bc: lr0 must be >= 0");
  if (alpha < 0) fail(ErrorKind::config, "bc: alpha must be >= 0");
  if (eval_interval_updates < 1)
    fail(ErrorKind::config, "bc: eval_interval_updates must be >= 1");
  if (eval_episodes < 1) fail(ErrorKind::config, "bc: eval_episodes must be >= 1");
}

BCUpdateStats bc_update(model::Agent& agent, const causal::CausalHead& head,
                        std::span<const env::DemoEpisode* const> batch,
                        const BCConfig& cfg, nn::AdamState& adam, double lr) {
  if (batch.empty()) fail(ErrorKind::invalid_argument, "bc_update: empty batch");
  int n_steps = 0, n_triples = 0;
  int t_max = agent.config().t_max;
  for (const env::DemoEpisode* ep : batch) {
    int len = std::min<int>(static_cast<int>(ep->steps.size()), t_max);
    if (len == 0) fail(ErrorKind::invalid_argument, "bc_update: empty episode");
    n_steps += len;
    n_triples += std::max(0, len - 1);
  }

  const ParamStore& params = agent.params();
  params.zero_grads();
  BCUpdateStats stats;
  double causal_weighted = 0;
  for (const env::DemoEpisode* ep : batch) {
    int len = std::min<int>(static_cast<int>(ep->steps.size()), t_max);
    std::vector<env::Observation> obs;
    std::vector<int> acts;
    obs.reserve(static_cast<size_t>(len));
    acts.reserve(static_cast<size_t>(len));
    for (int i = 0; i < len; ++i) {
      obs.push_back(ep->steps[static_cast<size_t>(i)].obs);
      acts.push_back(ep->steps[static_cast<size_t>(i)].action);
    }
    model::SegmentForward f = agent.forward_segment(obs, acts);
    Tensor logp = pick_per_row(log_softmax_rows(f.logits), acts);
    real inv_n = real(1) / static_cast<real>(n_steps);
    Tensor loss = scale(sum(logp), -inv_n);  // cross-entropy

    double causal_value = 0;
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
        causal_value = closs.item();
        loss = add(loss, scale(closs, static_cast<real>(cfg.alpha) *
                                          static_cast<real>(len - 1) /
                                          static_cast<real>(std::max(1, n_triples))));
      } else {
        NoGrad guard;
        Tensor closs = cfg.causal_objective == CausalObjective::mse
                           ? causal::causal_loss(head, h_o, h_a, target)
                           : causal::nll_loss(head, h_o, h_a, target);
        causal_value = closs.item();
      }
    }
    backward(loss);

    for (int i = 0; i < len; ++i) stats.ce -= logp.at(i);
    {
      NoGrad guard;
      Tensor probs = softmax_rows(f.logits);
      Tensor lps = log_softmax_rows(f.logits);
      Tensor ent = scale(row_sums(mul(probs, lps)), real(-1));
      for (int i = 0; i < len; ++i) stats.entropy += ent.at(i);
    }
    causal_weighted += causal_value * std::max(0, len - 1);
  }

  clip_gradients(params, cfg.max_grad_norm);
  adam_step(params, adam, static_cast<real>(lr));
  stats.ce /= n_steps;
  stats.entropy /= n_steps;
  stats.causal_loss = n_triples > 0 ? causal_weighted / n_triples : 0;
  return stats;
}

TrainSummary train_bc(const TrainerConfig& base, const BCConfig& bc,
                      const env::DemoFile& demos) {
  namespace fs = std::filesystem;
  base.env.validate();
  base.agent.validate();
  bc.validate();
  if (demos.episodes.empty())
    fail(ErrorKind::config, "bc: demonstration file has no episodes");
  if (base.out_dir.empty()) fail(ErrorKind::config, "bc: out_dir required");
  std::error_code ec;
  fs::create_directories(base.out_dir, ec);
  if (ec) fail(ErrorKind::io, "bc: cannot create out_dir '" + base.out_dir + "'");

  model::Agent agent(base.agent, derive_seed(base.seed, "policy-init"));
  Rng causal_rng(derive_seed(base.seed, "causal-init"));
  causal::CausalHead head(base.agent.d_model, agent.params(), causal_rng);
  AdamState adam;
  Rng shuffle_rng(derive_seed(base.seed, "bc-shuffle"));
  std::vector<uint64_t> eval_seeds = eval_world_seeds(base.seed, bc.eval_episodes);

  TrainSummary summary;
  summary.log_path = base.out_dir + "/train_log.csv";
  std::ofstream log(summary.log_path, std::ios::trunc);
  if (!log) fail(ErrorKind::io, "bc: cannot write '" + summary.log_path + "'");
  log << "# config_hash=" << base.config_hash << " seed=" << base.seed
      << " version=" << version_string() << " mode=bc\n";
  log << "step,sr,spl,gd,policy_loss,value_loss,entropy,causal_loss,lr,wall_time\n";

  auto save = [&](const std::string& name, int64_t step) {
    nlohmann::json meta{{"config", nlohmann::json::parse(base.config_json)},
                        {"config_hash", base.config_hash},
                        {"step", step},
                        {"version", version_string()}};
    std::string path = base.out_dir + "/" + name;
    save_checkpoint(path, agent.params(), &adam, meta.dump());
    return path;
  };

  auto t0 = std::chrono::steady_clock::now();
  std::vector<int> order(demos.episodes.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  size_t cursor = order.size();  // forces a shuffle on first use

  summary.best_sr = -1;
  BCUpdateStats accum;
  int accum_n = 0;
  for (int64_t update = 0; update < bc.total_updates; ++update) {
    std::vector<const env::DemoEpisode*> batch;
    batch.reserve(static_cast<size_t>(bc.batch_episodes));
    while (static_cast<int>(batch.size()) < bc.batch_episodes) {
      if (cursor >= order.size()) {
        shuffle_rng.shuffle(order);
        cursor = 0;
      }
      const env::DemoEpisode& ep = demos.episodes[static_cast<size_t>(order[cursor++])];
      if (!ep.steps.empty()) batch.push_back(&ep);
    }
    double lr = linear_lr(update, bc.total_updates, bc.lr0);
    BCUpdateStats us = bc_update(agent, head, batch, bc, adam, lr);
    accum.ce += us.ce;
    accum.causal_loss += us.causal_loss;
    accum.entropy += us.entropy;
    ++accum_n;

    bool final_update = update + 1 >= bc.total_updates;
    if ((update + 1) % bc.eval_interval_updates == 0 || final_update) {
      eval::MetricsReport rep = eval::evaluate(agent, base.env, eval_seeds, true,
                                               derive_seed(base.seed, "eval"));
      double wall = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
      double inv = accum_n > 0 ? 1.0 / accum_n : 0.0;
      log << (update + 1) << ',' << fmt_g(rep.sr) << ',' << fmt_g(rep.spl) << ','
          << fmt_g(rep.gd) << ',' << fmt_g(accum.ce * inv) << ",0,"
          << fmt_g(accum.entropy * inv) << ',' << fmt_g(accum.causal_loss * inv)
          << ',' << fmt_g(lr) << ',' << fmt_g(wall, 6) << "\n";
      log.flush();
      accum = BCUpdateStats{};
      accum_n = 0;
      summary.curve.push_back({update + 1, rep.sr, rep.spl, rep.gd});
      if (rep.sr > summary.best_sr) {
        summary.best_sr = rep.sr;
        summary.best_step = update + 1;
        summary.best_checkpoint = save("best_sr.bin", update + 1);
      }
      if (final_update) summary.final_report = rep;
    }
  }

  summary.final_checkpoint =
      save("ckpt_" + std::to_string(bc.total_updates) + ".bin", bc.total_updates);
  std::ofstream rep_file(base.out_dir + "/report.json", std::ios::trunc);
  rep_file << eval::report_to_json(summary.final_report, summary.final_checkpoint,
                                   base.config_hash)
                  .dump(2)
           << "\n";
  if (summary.best_checkpoint.empty())
    summary.best_checkpoint = summary.final_checkpoint;
  return summary;
}

}  // namespace canav::train
