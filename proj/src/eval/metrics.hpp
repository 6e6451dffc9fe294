#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "env/gridworld.hpp"
#include "model/agent.hpp"

namespace canav::eval {

// world seeds below this are the training range; at or above, evaluation
constexpr uint64_t kEvalSeedFloor = 1'000'000;

struct EpisodeRecord {
  bool success = false;
  int path_length = 0;     // agent MoveAhead count (rotations excluded)
  int shortest_path = 0;   // expert move count from the initial pose
  int final_geodesic = 0;  // cells to the goal at episode end
  int steps = 0;           // all actions
  uint64_t world_seed = 0;
};

struct MetricsReport {
  double sr = 0;
  double spl = 0;
  double gd = 0;
  int n = 0;
  std::vector<EpisodeRecord> episodes;  // per-seed breakdown
};

// (1/N) sum S_i * l_i / max(p_i, l_i)
double spl(std::span<const EpisodeRecord> records);

// Runs one episode per world seed with the frozen policy (greedy argmax by
// default; sampled otherwise). Refuses training-range seeds unless overridden.
MetricsReport evaluate(const model::Agent& agent, const env::EnvConfig& env_cfg,
                       std::span<const uint64_t> world_seeds, bool greedy = true,
                       uint64_t sample_seed = 0, bool allow_train_seeds = false);

nlohmann::json report_to_json(const MetricsReport& report,
                              const std::string& checkpoint,
                              const std::string& config_hash);

}  // namespace canav::eval
