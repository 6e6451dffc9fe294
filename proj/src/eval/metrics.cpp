#include "eval/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "env/oracle.hpp"

namespace canav::eval {

double spl(std::span<const EpisodeRecord> records) {
  if (records.empty())
    fail(ErrorKind::invalid_argument, "spl: empty record set");
  double s = 0;
  for (const EpisodeRecord& r : records) {
    if (r.shortest_path < 1)
      fail(ErrorKind::invalid_argument, "spl: shortest_path must be >= 1");
    if (!r.success) continue;
    s += static_cast<double>(r.shortest_path) /
         std::max(r.path_length, r.shortest_path);
  }
  return s / static_cast<double>(records.size());
}

MetricsReport evaluate(const model::Agent& agent, const env::EnvConfig& env_cfg,
                       std::span<const uint64_t> world_seeds, bool greedy,
                       uint64_t sample_seed, bool allow_train_seeds) {
  if (world_seeds.empty())
    fail(ErrorKind::invalid_argument, "evaluate: empty seed list");
  if (!allow_train_seeds) {
    for (uint64_t s : world_seeds)
      if (s < kEvalSeedFloor)
        fail(ErrorKind::invalid_argument,
             "evaluate: seed " + std::to_string(s) +
                 " lies in the training range (< " +
                 std::to_string(kEvalSeedFloor) + "); pass allow_train_seeds to override");
  }

  MetricsReport report;
  model::Agent::Context ctx(agent);
  for (size_t i = 0; i < world_seeds.size(); ++i) {
    uint64_t seed = world_seeds[i];
    env::Episode ep = env::Episode::from_seed(seed, env_cfg);
    EpisodeRecord rec;
    rec.world_seed = seed;
    rec.shortest_path =
        env::oracle_rollout(ep.world(), ep.state(), ep.task(), env_cfg).moves;
    Rng sampler(derive_seed(sample_seed, "eval-sample", i));
    ctx.reset();
    while (!ep.done()) {
      model::PolicyStep ps = ctx.observe(ep.observation());
      int action = 0;
      if (greedy) {
        for (int a = 1; a < static_cast<int>(ps.logits.size()); ++a)
          if (ps.logits[static_cast<size_t>(a)] > ps.logits[static_cast<size_t>(action)])
            action = a;
      } else {
        std::vector<nn::real> lp(ps.logits.begin(), ps.logits.end());
        nn::real lse = nn::kern::log_sum_exp(lp.data(), static_cast<int>(lp.size()));
        double u = sampler.uniform();
        double cum = 0;
        action = static_cast<int>(lp.size()) - 1;
        for (int a = 0; a < static_cast<int>(lp.size()); ++a) {
          cum += std::exp(static_cast<double>(lp[static_cast<size_t>(a)] - lse));
          if (u < cum) {
            action = a;
            break;
          }
        }
      }
      ctx.commit(action);
      env::StepResult sr = ep.step(action);
      if (sr.done) rec.success = sr.info.success;
    }
    rec.path_length = ep.moves();
    rec.steps = ep.steps();
    rec.final_geodesic = ep.goal_geodesic();
    report.episodes.push_back(rec);
  }

  report.n = static_cast<int>(report.episodes.size());
  double sr_sum = 0, gd_sum = 0;
  for (const EpisodeRecord& r : report.episodes) {
    sr_sum += r.success ? 1.0 : 0.0;
    gd_sum += r.final_geodesic;
  }
  report.sr = sr_sum / report.n;
  report.gd = gd_sum / report.n;
  report.spl = spl(report.episodes);
  return report;
}

nlohmann::json report_to_json(const MetricsReport& report,
                              const std::string& checkpoint,
                              const std::string& config_hash) {
  nlohmann::json seeds = nlohmann::json::array();
  for (const EpisodeRecord& r : report.episodes) seeds.push_back(r.world_seed);
  return nlohmann::json{{"sr", report.sr},
                        {"spl", report.spl},
                        {"gd", report.gd},
                        {"n", report.n},
                        {"seeds", seeds},
                        {"checkpoint", checkpoint},
                        {"config_hash", config_hash}};
}

}  // namespace canav::eval
