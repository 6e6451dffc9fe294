#include "harness/config.hpp"

#include <fstream>

#include "env/serialize.hpp"

namespace canav::harness {

namespace {

void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const auto& k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      fail(ErrorKind::config,
           "config: unknown key '" + where + it.key() + "'");
  }
}

template <typename T>
T take(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::config, std::string("config: bad value for '") + key + "'");
  }
}

}  // namespace

json default_run_config_json() {
  return json{
      {"task", {{"variant", "pointnav"}}},
      {"env",
       {{"width", 11},
        {"height", 11},
        {"obstacle_density", 0.2},
        {"window", 5},
        {"categories", 6},
        {"budget", 128},
        {"reward",
         {{"success_bonus", 10.0}, {"shaping_weight", 1.0}, {"step_penalty", 0.01}}},
        {"pointnav_radius", 1},
        {"objectnav_radius", 2},
        {"min_goal_distance", 3}}},
      {"agent",
       {{"d_model", 128},
        {"heads", 4},
        {"layers", 1},
        {"encoder_variant", "transformer"},
        {"goal_scale", 0.0}}},  // 0: derive width + height
      {"trainer",
       {{"mode", "ppo"},
        {"gamma", 0.99},
        {"gae_lambda", 0.95},
        {"clip_eps", 0.2},
        {"epochs", 4},
        {"minibatches", 4},
        {"value_coef", 0.5},
        {"entropy_coef", 0.01},
        {"alpha", 1.0},
        {"rollout_horizon", 128},
        {"num_envs", 8},
        {"total_steps", 1000000},
        {"lr0", 1e-4},
        {"max_grad_norm", 0.5},
        {"eval_interval", 20000},
        {"eval_episodes", 50},
        {"checkpoint_interval", 0},
        {"causal_objective", "mse"},
        {"detach_targets", true},
        {"causal_input_grad", true},
        {"workers", 1},
        {"bc",
         {{"demos", ""},
          {"total_updates", 500},
          {"batch_episodes", 16},
          {"lr0", 1e-4},
          {"eval_interval_updates", 100}}}}},
      {"seed", 0},
      {"out_dir", "run"}};
}

std::string config_hash(const json& resolved) {
  uint64_t h = fnv1a64(resolved.dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig parse_run_config(const json& in) {
  json j = default_run_config_json();
  j.merge_patch(in);  // file/overrides win over defaults

  check_keys(j, {"task", "env", "agent", "trainer", "seed", "out_dir"}, "");
  check_keys(j.at("task"), {"variant"}, "task.");
  check_keys(j.at("env"),
             {"width", "height", "obstacle_density", "window", "categories",
              "budget", "reward", "pointnav_radius", "objectnav_radius",
              "min_goal_distance"},
             "env.");
  check_keys(j.at("env").at("reward"),
             {"success_bonus", "shaping_weight", "step_penalty"}, "env.reward.");
  check_keys(j.at("agent"),
             {"d_model", "heads", "layers", "encoder_variant", "goal_scale"},
             "agent.");
  check_keys(j.at("trainer"),
             {"mode", "gamma", "gae_lambda", "clip_eps", "epochs", "minibatches",
              "value_coef", "entropy_coef", "alpha", "rollout_horizon",
              "num_envs", "total_steps", "lr0", "max_grad_norm", "eval_interval",
              "eval_episodes", "checkpoint_interval", "causal_objective",
              "detach_targets", "causal_input_grad", "workers", "bc"},
             "trainer.");
  check_keys(j.at("trainer").at("bc"),
             {"demos", "total_updates", "batch_episodes", "lr0",
              "eval_interval_updates"},
             "trainer.bc.");

  RunConfig cfg;
  std::string variant = j.at("task").at("variant").get<std::string>();
  if (variant == "pointnav")
    cfg.env.task = env::TaskVariant::pointnav;
  else if (variant == "objectnav")
    cfg.env.task = env::TaskVariant::objectnav;
  else
    fail(ErrorKind::config, "config: unknown task.variant '" + variant + "'");

  const json& e = j.at("env");
  cfg.env.width = take(e, "width", cfg.env.width);
  cfg.env.height = take(e, "height", cfg.env.height);
  cfg.env.obstacle_density = take(e, "obstacle_density", cfg.env.obstacle_density);
  cfg.env.window = take(e, "window", cfg.env.window);
  cfg.env.categories = take(e, "categories", cfg.env.categories);
  cfg.env.budget = take(e, "budget", cfg.env.budget);
  const json& r = e.at("reward");
  cfg.env.reward.success_bonus = take(r, "success_bonus", cfg.env.reward.success_bonus);
  cfg.env.reward.shaping_weight = take(r, "shaping_weight", cfg.env.reward.shaping_weight);
  cfg.env.reward.step_penalty = take(r, "step_penalty", cfg.env.reward.step_penalty);
  cfg.env.pointnav_radius = take(e, "pointnav_radius", cfg.env.pointnav_radius);
  cfg.env.objectnav_radius = take(e, "objectnav_radius", cfg.env.objectnav_radius);
  cfg.env.min_goal_distance = take(e, "min_goal_distance", cfg.env.min_goal_distance);
  cfg.env.validate();

  const json& a = j.at("agent");
  cfg.agent.d_model = take(a, "d_model", cfg.agent.d_model);
  cfg.agent.heads = take(a, "heads", cfg.agent.heads);
  cfg.agent.layers = take(a, "layers", cfg.agent.layers);
  std::string enc = a.at("encoder_variant").get<std::string>();
  if (enc == "transformer")
    cfg.agent.variant = model::EncoderVariant::transformer;
  else if (enc == "rnn")
    cfg.agent.variant = model::EncoderVariant::rnn;
  else
    fail(ErrorKind::config, "config: unknown encoder_variant '" + enc + "'");
  double gs = take(a, "goal_scale", 0.0);
  cfg.agent.goal_scale = gs > 0 ? gs : cfg.env.width + cfg.env.height;
  cfg.agent.task = cfg.env.task;
  cfg.agent.window = cfg.env.window;
  cfg.agent.categories = cfg.env.categories;
  cfg.agent.t_max = cfg.env.budget;
  cfg.agent.action_count = env::kActionCount;
  cfg.agent.validate();

  const json& t = j.at("trainer");
  cfg.mode = t.at("mode").get<std::string>();
  if (cfg.mode != "ppo" && cfg.mode != "bc")
    fail(ErrorKind::config, "config: trainer.mode must be 'ppo' or 'bc'");
  cfg.ppo.gamma = take(t, "gamma", cfg.ppo.gamma);
  cfg.ppo.gae_lambda = take(t, "gae_lambda", cfg.ppo.gae_lambda);
  cfg.ppo.clip_eps = take(t, "clip_eps", cfg.ppo.clip_eps);
  cfg.ppo.epochs = take(t, "epochs", cfg.ppo.epochs);
  cfg.ppo.minibatches = take(t, "minibatches", cfg.ppo.minibatches);
  cfg.ppo.value_coef = take(t, "value_coef", cfg.ppo.value_coef);
  cfg.ppo.entropy_coef = take(t, "entropy_coef", cfg.ppo.entropy_coef);
  cfg.ppo.alpha = take(t, "alpha", cfg.ppo.alpha);
  cfg.ppo.rollout_horizon = take(t, "rollout_horizon", cfg.ppo.rollout_horizon);
  cfg.ppo.num_envs = take(t, "num_envs", cfg.ppo.num_envs);
  cfg.ppo.total_steps = take(t, "total_steps", cfg.ppo.total_steps);
  cfg.ppo.lr0 = take(t, "lr0", cfg.ppo.lr0);
  cfg.ppo.max_grad_norm = take(t, "max_grad_norm", cfg.ppo.max_grad_norm);
  cfg.ppo.eval_interval = take(t, "eval_interval", cfg.ppo.eval_interval);
  cfg.ppo.eval_episodes = take(t, "eval_episodes", cfg.ppo.eval_episodes);
  cfg.ppo.checkpoint_interval =
      take(t, "checkpoint_interval", cfg.ppo.checkpoint_interval);
  std::string obj = t.at("causal_objective").get<std::string>();
  if (obj == "mse")
    cfg.ppo.causal_objective = train::CausalObjective::mse;
  else if (obj == "nll")
    cfg.ppo.causal_objective = train::CausalObjective::nll;
  else
    fail(ErrorKind::config, "config: causal_objective must be 'mse' or 'nll'");
  cfg.ppo.detach_targets = take(t, "detach_targets", cfg.ppo.detach_targets);
  cfg.ppo.causal_input_grad =
      take(t, "causal_input_grad", cfg.ppo.causal_input_grad);
  cfg.ppo.workers = take(t, "workers", cfg.ppo.workers);
  cfg.ppo.validate();
  if (cfg.ppo.rollout_horizon > cfg.agent.t_max)
    fail(ErrorKind::config,
         "config: rollout_horizon exceeds the episode budget (sequence capacity)");

  const json& b = t.at("bc");
  cfg.demos_path = take(b, "demos", std::string());
  cfg.bc.total_updates = take(b, "total_updates", cfg.bc.total_updates);
  cfg.bc.batch_episodes = take(b, "batch_episodes", cfg.bc.batch_episodes);
  cfg.bc.lr0 = take(b, "lr0", cfg.bc.lr0);
  cfg.bc.eval_interval_updates =
      take(b, "eval_interval_updates", cfg.bc.eval_interval_updates);
  cfg.bc.alpha = cfg.ppo.alpha;
  cfg.bc.max_grad_norm = cfg.ppo.max_grad_norm;
  cfg.bc.causal_objective = cfg.ppo.causal_objective;
  cfg.bc.detach_targets = cfg.ppo.detach_targets;
  cfg.bc.causal_input_grad = cfg.ppo.causal_input_grad;
  cfg.bc.eval_episodes = cfg.ppo.eval_episodes;
  cfg.bc.validate();
  if (cfg.mode == "bc" && cfg.demos_path.empty())
    fail(ErrorKind::config, "config: trainer.bc.demos required in bc mode");

  cfg.seed = take(j, "seed", static_cast<uint64_t>(0));
  cfg.out_dir = take(j, "out_dir", std::string("run"));
  if (cfg.out_dir.empty()) fail(ErrorKind::config, "config: out_dir is empty");

  cfg.resolved = j;
  cfg.hash = config_hash(j);
  return cfg;
}

void apply_override(json& j, const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    fail(ErrorKind::config,
         "override '" + assignment + "' is not of the form key=value");
  std::string path = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);

  json* node = &j;
  size_t start = 0;
  std::vector<std::string> parts;
  while (true) {
    size_t dot = path.find('.', start);
    parts.push_back(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]))
      fail(ErrorKind::config, "override: unknown config path '" + path + "'");
    node = &(*node)[parts[i]];
  }
  const std::string& leaf = parts.back();
  if (!node->contains(leaf))
    fail(ErrorKind::config, "override: unknown config path '" + path + "'");

  json& slot = (*node)[leaf];
  try {
    if (slot.is_boolean())
      slot = (value == "true" || value == "1");
    else if (slot.is_number_integer())
      slot = std::stoll(value);
    else if (slot.is_number_unsigned())
      slot = static_cast<uint64_t>(std::stoull(value));
    else if (slot.is_number_float())
      slot = std::stod(value);
    else if (slot.is_string())
      slot = value;
    else
      fail(ErrorKind::config, "override: path '" + path + "' is not a scalar");
  } catch (const std::exception&) {
    fail(ErrorKind::config,
         "override: cannot parse '" + value + "' for '" + path + "'");
  }
}

RunConfig run_config_from_json_text(const std::string& text,
                                    const std::vector<std::string>& overrides,
                                    std::optional<uint64_t> seed_override) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded())
    fail(ErrorKind::config, "config: malformed JSON");
  json merged = default_run_config_json();
  merged.merge_patch(j);
  for (const std::string& ov : overrides) apply_override(merged, ov);
  if (seed_override) merged["seed"] = *seed_override;
  return parse_run_config(merged);
}

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides,
                          std::optional<uint64_t> seed_override) {
  std::ifstream is(path);
  if (!is)
    fail(ErrorKind::config, "config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  try {
    return run_config_from_json_text(text, overrides, seed_override);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config)
      fail(ErrorKind::config, std::string(e.what()) + " (in '" + path + "')");
    throw;
  }
}

train::TrainerConfig RunConfig::trainer_config() const {
  train::TrainerConfig tc;
  tc.env = env;
  tc.agent = agent;
  tc.ppo = ppo;
  tc.seed = seed;
  tc.out_dir = out_dir;
  tc.config_json = resolved.dump();
  tc.config_hash = hash;
  return tc;
}

}  // namespace canav::harness
