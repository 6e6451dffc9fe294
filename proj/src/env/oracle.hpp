#pragma once

#include "env/gridworld.hpp"

namespace canav::env {

// Next action of a deterministic minimal-action-count expert. Emits Done/Stop
// exactly at its terminal pose: pointnav steers to the goal cell itself,
// objectnav to the nearest pose where the stop predicate holds.
int oracle_action(const GridWorld& w, const AgentState& s, const Task& t,
                  const EnvConfig& cfg);

struct OracleRun {
  int actions = 0;  // rotations + moves, excluding the final Done/Stop
  int moves = 0;    // MoveAhead count (SPL's path-length unit)
  bool success = false;
};

// Simulates the expert from the given pose until it stops.
OracleRun oracle_rollout(const GridWorld& w, AgentState s, const Task& t,
                         const EnvConfig& cfg);

}  // namespace canav::env
