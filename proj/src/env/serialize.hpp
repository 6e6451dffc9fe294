#pragma once

#include <string>

#include <json.hpp>

#include "env/gridworld.hpp"

namespace canav::env {

using nlohmann::json;

// cell code <-> character ('.' empty, '#' wall, 'A'+c object)
char cell_char(uint8_t code);
uint8_t cell_code(char c);

json world_to_json(const GridWorld& w);
GridWorld world_from_json(const json& j);

json task_to_json(const Task& t);
Task task_from_json(const json& j);

json agent_to_json(const AgentState& s);
AgentState agent_from_json(const json& j);

// full episode snapshot (world + agent + task)
json episode_to_json(const GridWorld& w, const AgentState& s, const Task& t);

json observation_to_json(const Observation& o);
Observation observation_from_json(const json& j, int window, int categories,
                                  TaskVariant variant);

json env_config_to_json(const EnvConfig& cfg);
EnvConfig env_config_from_json(const json& j);

// ------------------------- demonstration files -------------------------
//
// JSON-lines: one header object, then an episode marker per episode followed
// by its (observation, action) step records.

struct DemoStep {
  Observation obs;
  int action = 0;
};

struct DemoEpisode {
  uint64_t world_seed = 0;
  std::vector<DemoStep> steps;
};

struct DemoFile {
  EnvConfig config;
  uint64_t seed = 0;
  std::string config_hash;
  std::vector<DemoEpisode> episodes;
};

void write_demos(const std::string& path, const DemoFile& demos);
DemoFile read_demos(const std::string& path);

}  // namespace canav::env
