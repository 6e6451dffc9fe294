#include "env/oracle.hpp"

#include <deque>
#include <vector>

namespace canav::env {

namespace {

// Planner stop predicate. Pointnav aims for the goal cell itself (one step
// stronger than the episode's success radius); objectnav uses the episode's
// stop predicate directly.
bool plan_goal(const GridWorld& w, const AgentState& s, const Task& t,
               const EnvConfig& cfg) {
  if (t.variant == TaskVariant::pointnav)
    return s.x == t.goal_x && s.y == t.goal_y;
  return success_at(w, s, t, cfg);
}

inline int pose_index(const GridWorld& w, int x, int y, int h) {
  return (y * w.width + x) * 4 + h;
}

}  // namespace

int oracle_action(const GridWorld& w, const AgentState& s, const Task& t,
                  const EnvConfig& cfg) {
  if (plan_goal(w, s, t, cfg)) return kDone;

  int n = w.width * w.height * 4;
  std::vector<int8_t> goal_memo(static_cast<size_t>(n), -1);
  auto is_goal = [&](int x, int y, int h) {
    int idx = pose_index(w, x, y, h);
    if (goal_memo[static_cast<size_t>(idx)] < 0) {
      AgentState pose{x, y, static_cast<Heading>(h)};
      goal_memo[static_cast<size_t>(idx)] = plan_goal(w, pose, t, cfg) ? 1 : 0;
    }
    return goal_memo[static_cast<size_t>(idx)] == 1;
  };

  std::vector<int> parent(static_cast<size_t>(n), -1);       // pose index
  std::vector<int8_t> via(static_cast<size_t>(n), -1);       // action taken
  std::vector<uint8_t> seen(static_cast<size_t>(n), 0);
  std::deque<int> queue;
  int start = pose_index(w, s.x, s.y, s.heading);
  seen[static_cast<size_t>(start)] = 1;
  queue.push_back(start);

  int found = -1;
  while (!queue.empty() && found < 0) {
    int cur = queue.front();
    queue.pop_front();
    int h = cur % 4;
    int cell = cur / 4;
    int x = cell % w.width, y = cell / w.width;
    // expansion order fixes tie-breaking: MoveAhead, RotateRight, RotateLeft
    for (int a = 0; a < 3; ++a) {
      int nx = x, ny = y, nh = h;
      if (a == kMoveAhead) {
        nx = x + heading_dx(static_cast<Heading>(h));
        ny = y + heading_dy(static_cast<Heading>(h));
        if (w.wall(nx, ny)) continue;
      } else if (a == kRotateRight) {
        nh = (h + 1) % 4;
      } else {
        nh = (h + 3) % 4;
      }
      int next = pose_index(w, nx, ny, nh);
      if (seen[static_cast<size_t>(next)]) continue;
      seen[static_cast<size_t>(next)] = 1;
      parent[static_cast<size_t>(next)] = cur;
      via[static_cast<size_t>(next)] = static_cast<int8_t>(a);
      if (is_goal(nx, ny, nh)) {
        found = next;
        break;
      }
      queue.push_back(next);
    }
  }
  if (found < 0)
    fail(ErrorKind::runtime, "oracle: task goal unreachable from this pose");

  int node = found;
  while (parent[static_cast<size_t>(node)] != start)
    node = parent[static_cast<size_t>(node)];
  return via[static_cast<size_t>(node)];
}

OracleRun oracle_rollout(const GridWorld& w, AgentState s, const Task& t,
                         const EnvConfig& cfg) {
  OracleRun run;
  int guard = w.width * w.height * 8 + 8;
  for (int i = 0; i < guard; ++i) {
    int a = oracle_action(w, s, t, cfg);
    if (a == kDone) {
      run.success = success_at(w, s, t, cfg);
      return run;
    }
    if (a == kMoveAhead) {
      s.x += heading_dx(s.heading);
      s.y += heading_dy(s.heading);
      ++run.moves;
    } else if (a == kRotateRight) {
      s.heading = static_cast<Heading>((s.heading + 1) % 4);
    } else {
      s.heading = static_cast<Heading>((s.heading + 3) % 4);
    }
    ++run.actions;
  }
  fail(ErrorKind::runtime, "oracle: rollout failed to terminate");
}

}  // namespace canav::env
