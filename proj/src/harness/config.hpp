#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "train/bc.hpp"
#include "train/ppo.hpp"

namespace canav::harness {

using nlohmann::json;

// One resolved experiment description: defaults + config file + overrides.
// `resolved` is the canonical JSON (sorted keys) every artifact embeds a hash
// of.
struct RunConfig {
  env::EnvConfig env;
  model::AgentConfig agent;
  train::PPOConfig ppo;
  train::BCConfig bc;
  std::string mode = "ppo";  // "ppo" | "bc"
  std::string demos_path;    // bc mode input
  uint64_t seed = 0;
  std::string out_dir = "run";
  json resolved;
  std::string hash;

  train::TrainerConfig trainer_config() const;
};

json default_run_config_json();

// strict parse: unknown keys anywhere are config errors
RunConfig parse_run_config(const json& j);

// "a.b.c=value" against an existing path; value typed like the default
void apply_override(json& j, const std::string& assignment);

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides,
                          std::optional<uint64_t> seed_override);

RunConfig run_config_from_json_text(const std::string& text,
                                    const std::vector<std::string>& overrides,
                                    std::optional<uint64_t> seed_override);

std::string config_hash(const json& resolved);

}  // namespace canav::harness
