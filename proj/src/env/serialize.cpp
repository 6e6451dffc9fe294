#include "env/serialize.hpp"

#include <fstream>

namespace canav::env {

char cell_char(uint8_t code) {
  if (code == kEmpty) return '.';
  if (code == kWall) return '#';
  return static_cast<char>('A' + (code - kObjectBase));
}

uint8_t cell_code(char c) {
  if (c == '.') return kEmpty;
  if (c == '#') return kWall;
  if (c >= 'A' && c <= 'Z') return static_cast<uint8_t>(kObjectBase + (c - 'A'));
  fail(ErrorKind::config, std::string("unknown cell character '") + c + "'");
}

json world_to_json(const GridWorld& w) {
  json rows = json::array();
  for (int y = 0; y < w.height; ++y) {
    std::string row(static_cast<size_t>(w.width), '.');
    for (int x = 0; x < w.width; ++x) row[static_cast<size_t>(x)] = cell_char(w.at(x, y));
    rows.push_back(row);
  }
  return json{{"width", w.width},
              {"height", w.height},
              {"categories", w.categories},
              {"rows", rows}};
}

GridWorld world_from_json(const json& j) {
  GridWorld w;
  w.width = j.at("width").get<int>();
  w.height = j.at("height").get<int>();
  w.categories = j.at("categories").get<int>();
  const auto& rows = j.at("rows");
  if (static_cast<int>(rows.size()) != w.height)
    fail(ErrorKind::config, "world: row count does not match height");
  w.cells.resize(static_cast<size_t>(w.width) * w.height);
  for (int y = 0; y < w.height; ++y) {
    std::string row = rows[static_cast<size_t>(y)].get<std::string>();
    if (static_cast<int>(row.size()) != w.width)
      fail(ErrorKind::config, "world: row length does not match width");
    for (int x = 0; x < w.width; ++x)
      w.cells[static_cast<size_t>(y) * w.width + x] = cell_code(row[static_cast<size_t>(x)]);
  }
  return w;
}

json task_to_json(const Task& t) {
  if (t.variant == TaskVariant::pointnav)
    return json{{"variant", "pointnav"}, {"goal", {t.goal_x, t.goal_y}}};
  return json{{"variant", "objectnav"}, {"category", t.category}};
}

Task task_from_json(const json& j) {
  Task t;
  std::string v = j.at("variant").get<std::string>();
  if (v == "pointnav") {
    t.variant = TaskVariant::pointnav;
    t.goal_x = j.at("goal")[0].get<int>();
    t.goal_y = j.at("goal")[1].get<int>();
  } else if (v == "objectnav") {
    t.variant = TaskVariant::objectnav;
    t.category = j.at("category").get<int>();
  } else {
    fail(ErrorKind::config, "task: unknown variant '" + v + "'");
  }
  return t;
}

json agent_to_json(const AgentState& s) {
  return json{{"x", s.x}, {"y", s.y}, {"heading", static_cast<int>(s.heading)}};
}

AgentState agent_from_json(const json& j) {
  AgentState s;
  s.x = j.at("x").get<int>();
  s.y = j.at("y").get<int>();
  int h = j.at("heading").get<int>();
  if (h < 0 || h > 3) fail(ErrorKind::config, "agent: bad heading");
  s.heading = static_cast<Heading>(h);
  return s;
}

json episode_to_json(const GridWorld& w, const AgentState& s, const Task& t) {
  return json{{"world", world_to_json(w)},
              {"agent", agent_to_json(s)},
              {"task", task_to_json(t)}};
}

json observation_to_json(const Observation& o) {
  std::string cells(o.cells.size(), '.');
  for (size_t i = 0; i < o.cells.size(); ++i) cells[i] = cell_char(o.cells[i]);
  json j{{"cells", cells}};
  if (o.variant == TaskVariant::pointnav)
    j["goal"] = {o.goal_distance, o.goal_bearing};
  else
    j["category"] = o.goal_category;
  return j;
}

Observation observation_from_json(const json& j, int window, int categories,
                                  TaskVariant variant) {
  Observation o;
  o.window = window;
  o.categories = categories;
  o.variant = variant;
  std::string cells = j.at("cells").get<std::string>();
  if (static_cast<int>(cells.size()) != window * window)
    fail(ErrorKind::config, "observation: cell string size mismatch");
  o.cells.resize(cells.size());
  for (size_t i = 0; i < cells.size(); ++i) o.cells[i] = cell_code(cells[i]);
  if (variant == TaskVariant::pointnav) {
    o.goal_distance = j.at("goal")[0].get<double>();
    o.goal_bearing = j.at("goal")[1].get<double>();
  } else {
    o.goal_category = j.at("category").get<int>();
  }
  return o;
}

json env_config_to_json(const EnvConfig& cfg) {
  return json{{"width", cfg.width},
              {"height", cfg.height},
              {"obstacle_density", cfg.obstacle_density},
              {"window", cfg.window},
              {"categories", cfg.categories},
              {"budget", cfg.budget},
              {"task", cfg.task == TaskVariant::pointnav ? "pointnav" : "objectnav"},
              {"reward",
               {{"success_bonus", cfg.reward.success_bonus},
                {"shaping_weight", cfg.reward.shaping_weight},
                {"step_penalty", cfg.reward.step_penalty}}},
              {"pointnav_radius", cfg.pointnav_radius},
              {"objectnav_radius", cfg.objectnav_radius},
              {"min_goal_distance", cfg.min_goal_distance}};
}

EnvConfig env_config_from_json(const json& j) {
  EnvConfig cfg;
  cfg.width = j.value("width", cfg.width);
  cfg.height = j.value("height", cfg.height);
  cfg.obstacle_density = j.value("obstacle_density", cfg.obstacle_density);
  cfg.window = j.value("window", cfg.window);
  cfg.categories = j.value("categories", cfg.categories);
  cfg.budget = j.value("budget", cfg.budget);
  if (j.contains("task")) {
    std::string t = j.at("task").get<std::string>();
    if (t == "pointnav")
      cfg.task = TaskVariant::pointnav;
    else if (t == "objectnav")
      cfg.task = TaskVariant::objectnav;
    else
      fail(ErrorKind::config, "env: unknown task variant '" + t + "'");
  }
  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    cfg.reward.success_bonus = r.value("success_bonus", cfg.reward.success_bonus);
    cfg.reward.shaping_weight =
        r.value("shaping_weight", cfg.reward.shaping_weight);
    cfg.reward.step_penalty = r.value("step_penalty", cfg.reward.step_penalty);
  }
  cfg.pointnav_radius = j.value("pointnav_radius", cfg.pointnav_radius);
  cfg.objectnav_radius = j.value("objectnav_radius", cfg.objectnav_radius);
  cfg.min_goal_distance = j.value("min_goal_distance", cfg.min_goal_distance);
  return cfg;
}

void write_demos(const std::string& path, const DemoFile& demos) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::io, "demos: cannot write '" + path + "'");
  json header{{"type", "header"},
              {"seed", demos.seed},
              {"config", env_config_to_json(demos.config)},
              {"config_hash", demos.config_hash},
              {"version", version_string()},
              {"episodes", demos.episodes.size()}};
  os << header.dump() << "\n";
  for (size_t k = 0; k < demos.episodes.size(); ++k) {
    const DemoEpisode& ep = demos.episodes[k];
    os << json{{"type", "episode"}, {"index", k}, {"world_seed", ep.world_seed}}
              .dump()
       << "\n";
    for (size_t i = 0; i < ep.steps.size(); ++i) {
      json line{{"type", "step"},
                {"episode", k},
                {"t", i},
                {"obs", observation_to_json(ep.steps[i].obs)},
                {"action", ep.steps[i].action}};
      os << line.dump() << "\n";
    }
  }
  if (!os) fail(ErrorKind::io, "demos: write failed for '" + path + "'");
}

DemoFile read_demos(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::io, "demos: cannot open '" + path + "'");
  DemoFile demos;
  std::string line;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      fail(ErrorKind::config, "demos: malformed JSON line in '" + path + "'");
    std::string type = j.value("type", "");
    if (type == "header") {
      demos.config = env_config_from_json(j.at("config"));
      demos.seed = j.at("seed").get<uint64_t>();
      demos.config_hash = j.value("config_hash", "");
      have_header = true;
    } else if (type == "episode") {
      if (!have_header) fail(ErrorKind::config, "demos: episode before header");
      DemoEpisode ep;
      ep.world_seed = j.at("world_seed").get<uint64_t>();
      demos.episodes.push_back(std::move(ep));
    } else if (type == "step") {
      if (demos.episodes.empty())
        fail(ErrorKind::config, "demos: step before episode marker");
      DemoStep st;
      st.obs = observation_from_json(j.at("obs"), demos.config.window,
                                     demos.config.categories, demos.config.task);
      st.action = j.at("action").get<int>();
      demos.episodes.back().steps.push_back(std::move(st));
    } else {
      fail(ErrorKind::config, "demos: unknown record type '" + type + "'");
    }
  }
  if (!have_header) fail(ErrorKind::config, "demos: missing header in '" + path + "'");
  return demos;
}

}  // namespace canav::env
