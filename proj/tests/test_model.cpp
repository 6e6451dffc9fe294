#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "env/gridworld.hpp"
#include "model/agent.hpp"
#include "testutil.hpp"

using namespace canav;
using namespace canav::model;
using namespace canav::nn;

namespace {

AgentConfig small_config(EncoderVariant variant = EncoderVariant::transformer) {
  AgentConfig cfg;
  cfg.d_model = 16;
  cfg.heads = 4;
  cfg.layers = 1;
  cfg.variant = variant;
  cfg.window = 5;
  cfg.categories = 6;
  cfg.t_max = 32;
  cfg.goal_scale = 22.0;
  return cfg;
}

void zero_all_params(Agent& agent) {
  for (const auto& [name, t] : agent.params().items())
    std::fill(t.node()->value.begin(), t.node()->value.end(), real(0));
}

// random but valid episode slice from the simulator
struct Rollout {
  std::vector<env::Observation> obs;
  std::vector<int> actions;
};

Rollout random_rollout(uint64_t seed, int steps, const env::EnvConfig& ecfg) {
  Rng rng(seed);
  env::Episode ep = env::Episode::from_seed(seed, ecfg);
  Rollout r;
  for (int i = 0; i < steps && !ep.done(); ++i) {
    r.obs.push_back(ep.observation());
    int a = rng.uniform_int(3);  // move/rotate only, keep the episode alive
    r.actions.push_back(a);
    ep.step(a);
  }
  return r;
}

std::vector<double> param_values(const Agent& a, const std::string& name) {
  auto v = a.params().get(name).values();
  return {v.begin(), v.end()};
}

}  // namespace

TEST_CASE("encode_observation: deterministic, zero params give zero features") {
  AgentConfig cfg = small_config();
  Agent agent(cfg, 7);
  env::EnvConfig ecfg;
  env::Generated g = env::generate(3, ecfg);
  env::Observation obs = env::make_observation(g.world, g.spawn, g.task, ecfg);

  Tensor z1 = agent.encode_observation(obs);
  Tensor z2 = agent.encode_observation(obs);
  REQUIRE(z1.size() == cfg.d_model);
  for (int i = 0; i < cfg.d_model; ++i) CHECK(z1.at(i) == z2.at(i));

  zero_all_params(agent);
  Tensor z0 = agent.encode_observation(obs);
  for (int i = 0; i < cfg.d_model; ++i) CHECK(z0.at(i) == 0.0);  // tanh(0) = 0
}

TEST_CASE("encode_observation: toy window with hand-set weights") {
  AgentConfig cfg;
  cfg.d_model = 2;
  cfg.heads = 1;
  cfg.window = 2;
  cfg.categories = 0;  // channels: empty, wall -> obs_dim = 2*2*2 = 8
  cfg.t_max = 4;
  Agent agent(cfg, 1);
  zero_all_params(agent);

  // one-hot layout per cell [empty, wall]; cells = {empty, wall, empty, empty}
  env::Observation obs;
  obs.window = 2;
  obs.categories = 0;
  obs.variant = env::TaskVariant::pointnav;
  obs.cells = {0, 1, 0, 0};
  obs.goal_distance = 4;
  obs.goal_bearing = 0.5;

  auto w = agent.params().get("encoder.obs.weight");  // [2 x 8]
  for (int j = 0; j < 8; ++j) {
    w.node()->value[static_cast<size_t>(j)] = 0.1 * (j + 1);        // row 0
    w.node()->value[static_cast<size_t>(8 + j)] = -0.05 * (j + 1);  // row 1
  }
  auto b = agent.params().get("encoder.obs.bias");
  b.node()->value = {0.2, -0.1};

  // active one-hot indices: cell0 empty -> 0, cell1 wall -> 3, cell2 -> 4, cell3 -> 6
  double pre0 = 0.1 * (0 + 1) + 0.1 * (3 + 1) + 0.1 * (4 + 1) + 0.1 * (6 + 1) + 0.2;
  double pre1 = -0.05 * (0 + 1) - 0.05 * (3 + 1) - 0.05 * (4 + 1) - 0.05 * (6 + 1) - 0.1;
  Tensor z = agent.encode_observation(obs);
  CHECK(z.at(0) == doctest::Approx(std::tanh(pre0)).epsilon(1e-12));
  CHECK(z.at(1) == doctest::Approx(std::tanh(pre1)).epsilon(1e-12));

  // mismatched window is a contract violation
  env::Observation bad = obs;
  bad.window = 3;
  bad.cells.assign(9, 0);
  CHECK_THROWS_AS(agent.encode_observation(bad), Error);
}

TEST_CASE("embeddings: lookup determinism and bounds") {
  AgentConfig cfg = small_config();
  cfg.task = env::TaskVariant::objectnav;
  Agent agent(cfg, 11);

  env::Observation obs;
  obs.window = cfg.window;
  obs.categories = cfg.categories;
  obs.variant = env::TaskVariant::objectnav;
  obs.cells.assign(static_cast<size_t>(cfg.window * cfg.window), 0);
  obs.goal_category = 3;

  Tensor e1 = agent.embed_objective(obs);
  Tensor e2 = agent.embed_objective(obs);
  for (int i = 0; i < cfg.d_model; ++i) CHECK(e1.at(i) == e2.at(i));

  CHECK_THROWS_AS(agent.embed_action(cfg.action_vocab()), Error);
  CHECK_THROWS_AS(agent.embed_action(-1), Error);
  Tensor null_emb = agent.embed_action(env::kNullAction);  // vocab includes null
  CHECK(null_emb.size() == cfg.d_model);
}

TEST_CASE("embeddings: unused table rows receive zero gradient") {
  AgentConfig cfg = small_config();
  Agent agent(cfg, 13);
  env::EnvConfig ecfg;
  Rollout r = random_rollout(5, 6, ecfg);
  // force a known action pattern that never uses id 2 after step 0
  for (auto& a : r.actions) a = (a == 2) ? 0 : a;

  agent.params().zero_grads();
  SegmentForward f = agent.forward_segment(r.obs, r.actions);
  backward(mean(mul(f.logits, f.logits)));
  auto table = agent.params().get("encoder.action.table");
  int d = cfg.d_model;
  bool used2 = false;
  for (int i = 0; i + 1 < static_cast<int>(r.actions.size()); ++i)
    used2 |= (r.actions[static_cast<size_t>(i)] == 2);
  if (!used2) {
    for (int e = 0; e < d; ++e) CHECK(table.grad()[static_cast<size_t>(2 * d + e)] == 0.0);
  }
  // action 3 (Done) never appears in the stream either
  for (int e = 0; e < d; ++e) CHECK(table.grad()[static_cast<size_t>(3 * d + e)] == 0.0);
}

TEST_CASE("integrate: shape, objective sensitivity, hand evaluation") {
  AgentConfig cfg = small_config();
  Agent agent(cfg, 17);
  Rng rng(3);
  Tensor z = testutil::rand_tensor({cfg.d_model}, rng, -1, 1, false);
  Tensor h1 = testutil::rand_tensor({cfg.d_model}, rng, -1, 1, false);
  Tensor h2 = testutil::rand_tensor({cfg.d_model}, rng, -1, 1, false);

  Tensor o1 = agent.integrate(z, h1);
  REQUIRE(o1.size() == cfg.d_model);
  Tensor o2 = agent.integrate(z, h2);
  double diff = 0;
  for (int i = 0; i < cfg.d_model; ++i) diff += std::abs(o1.at(i) - o2.at(i));
  CHECK(diff > 1e-6);  // objective changes must reach the output

  // hand toy at d=2
  AgentConfig toy;
  toy.d_model = 2;
  toy.heads = 1;
  toy.window = 3;
  toy.categories = 1;
  toy.t_max = 4;
  Agent tiny(toy, 5);
  zero_all_params(tiny);
  auto w = tiny.params().get("encoder.integrate.weight");  // [2 x 4]
  w.node()->value = {0.5, -0.25, 1.0, 0.0, 0.0, 0.75, -0.5, 0.25};
  auto b = tiny.params().get("encoder.integrate.bias");
  b.node()->value = {0.1, -0.2};
  Tensor zz = Tensor::from({0.4, -0.6}, {2});
  Tensor hh = Tensor::from({0.2, 0.8}, {2});
  Tensor out = tiny.integrate(zz, hh);
  double pre0 = 0.5 * 0.4 - 0.25 * -0.6 + 1.0 * 0.2 + 0.0 * 0.8 + 0.1;
  double pre1 = 0.0 * 0.4 + 0.75 * -0.6 - 0.5 * 0.2 + 0.25 * 0.8 - 0.2;
  CHECK(out.at(0) == doctest::Approx(std::tanh(pre0)).epsilon(1e-12));
  CHECK(out.at(1) == doctest::Approx(std::tanh(pre1)).epsilon(1e-12));
}

TEST_CASE("forward_segment: T=1 output depends on the null token and the obs") {
  for (auto variant : {EncoderVariant::transformer, EncoderVariant::rnn}) {
    AgentConfig cfg = small_config(variant);
    Agent agent(cfg, 19);
    env::EnvConfig ecfg;
    Rollout r = random_rollout(9, 1, ecfg);
    SegmentForward f = agent.forward_segment(r.obs, r.actions);

    // perturbing the null-action embedding changes the first visual output
    // (non-uniformly: layer norm is invariant to constant shifts)
    auto table = agent.params().get("encoder.action.table");
    std::vector<real> saved = table.node()->value;
    for (int e = 0; e < cfg.d_model; ++e)
      table.node()->value[static_cast<size_t>(cfg.action_count * cfg.d_model + e)] +=
          real(0.1) * static_cast<real>(e + 1);
    SegmentForward f2 = agent.forward_segment(r.obs, r.actions);
    table.node()->value = saved;
    double diff = 0;
    for (int e = 0; e < cfg.d_model; ++e)
      diff += std::abs(f.hv_prime.at(e) - f2.hv_prime.at(e));
    CHECK(diff > 1e-9);
  }
}

TEST_CASE("forward_segment: future perturbations never touch past outputs") {
  env::EnvConfig ecfg;
  for (auto variant : {EncoderVariant::transformer, EncoderVariant::rnn}) {
    AgentConfig cfg = small_config(variant);
    Agent agent(cfg, 23);
    Rollout r = random_rollout(31, 8, ecfg);
    Rollout other = random_rollout(77, 8, ecfg);
    int t = static_cast<int>(r.obs.size());
    REQUIRE(t >= 4);
    SegmentForward base = agent.forward_segment(r.obs, r.actions);

    for (int cut = 0; cut < t - 1; ++cut) {
      Rollout mod = r;
      for (int u = cut + 1; u < t; ++u) mod.obs[static_cast<size_t>(u)] = other.obs[static_cast<size_t>(u)];
      for (int u = cut; u < t; ++u) mod.actions[static_cast<size_t>(u)] = (r.actions[static_cast<size_t>(u)] + 1) % 3;
      SegmentForward pert = agent.forward_segment(mod.obs, mod.actions);
      for (int i = 0; i <= cut; ++i) {
        for (int a = 0; a < cfg.action_count; ++a)
          CHECK(base.logits.at(i * cfg.action_count + a) ==
                pert.logits.at(i * cfg.action_count + a));
        CHECK(base.values.at(i) == pert.values.at(i));
      }
    }
  }
}

TEST_CASE("forward_segment: transformer T=3 equals a dense 6x6-mask reference") {
  AgentConfig cfg = small_config();
  cfg.d_model = 8;
  cfg.heads = 2;
  Agent agent(cfg, 29);
  env::EnvConfig ecfg;
  Rollout r = random_rollout(13, 3, ecfg);
  REQUIRE(r.obs.size() == 3);
  SegmentForward f = agent.forward_segment(r.obs, r.actions);

  // ---- independent re-implementation with an explicit mask matrix ----
  int d = cfg.d_model, T = 3, n_tok = 6, heads = cfg.heads, dh = d / heads;
  auto wobs = param_values(agent, "encoder.obs.weight");
  auto bobs = param_values(agent, "encoder.obs.bias");
  auto wgoal = param_values(agent, "encoder.objective.weight");
  auto bgoal = param_values(agent, "encoder.objective.bias");
  auto table = param_values(agent, "encoder.action.table");
  auto wint = param_values(agent, "encoder.integrate.weight");
  auto bint = param_values(agent, "encoder.integrate.bias");

  auto linear = [](const std::vector<double>& w, const std::vector<double>& b,
                   const std::vector<double>& x, int out) {
    int in = static_cast<int>(x.size());
    std::vector<double> y(static_cast<size_t>(out));
    for (int o = 0; o < out; ++o) {
      double s = b.empty() ? 0.0 : b[static_cast<size_t>(o)];
      for (int i = 0; i < in; ++i) s += w[static_cast<size_t>(o) * in + i] * x[static_cast<size_t>(i)];
      y[static_cast<size_t>(o)] = s;
    }
    return y;
  };

  std::vector<std::vector<double>> tokens(static_cast<size_t>(n_tok));
  for (int t_i = 0; t_i < T; ++t_i) {
    std::vector<double> onehot(static_cast<size_t>(cfg.obs_dim()));
    r.obs[static_cast<size_t>(t_i)].one_hot(onehot.data());
    auto z = linear(wobs, bobs, onehot, d);
    for (auto& v : z) v = std::tanh(v);
    std::vector<double> g2 = {r.obs[static_cast<size_t>(t_i)].goal_distance / cfg.goal_scale,
                              r.obs[static_cast<size_t>(t_i)].goal_bearing / M_PI};
    auto hobj = linear(wgoal, bgoal, g2, d);
    std::vector<double> cat(z);
    cat.insert(cat.end(), hobj.begin(), hobj.end());
    auto hv = linear(wint, bint, cat, d);
    for (auto& v : hv) v = std::tanh(v);

    int a_in = t_i == 0 ? env::kNullAction : r.actions[static_cast<size_t>(t_i - 1)];
    std::vector<double> arow(table.begin() + a_in * d, table.begin() + (a_in + 1) * d);
    tokens[static_cast<size_t>(2 * t_i)] = arow;
    tokens[static_cast<size_t>(2 * t_i + 1)] = hv;
  }
  auto pe = agent.positional_encoding();
  for (int i = 0; i < n_tok; ++i)
    for (int e = 0; e < d; ++e) tokens[static_cast<size_t>(i)][static_cast<size_t>(e)] += pe[static_cast<size_t>(i) * d + e];

  auto ln = [&](const std::vector<double>& x, const std::vector<double>& g,
                const std::vector<double>& b) {
    double mu = 0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(x.size());
    double var = 0;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= static_cast<double>(x.size());
    std::vector<double> y(x.size());
    for (size_t i = 0; i < x.size(); ++i)
      y[i] = g[i] * (x[i] - mu) / std::sqrt(var + 1e-5) + b[i];
    return y;
  };

  auto wq = param_values(agent, "seq.layer0.attn.wq"), bq = param_values(agent, "seq.layer0.attn.bq");
  auto wk = param_values(agent, "seq.layer0.attn.wk"), bk = param_values(agent, "seq.layer0.attn.bk");
  auto wv = param_values(agent, "seq.layer0.attn.wv"), bv = param_values(agent, "seq.layer0.attn.bv");
  auto wo = param_values(agent, "seq.layer0.attn.wo"), bo = param_values(agent, "seq.layer0.attn.bo");
  auto g1 = param_values(agent, "seq.layer0.ln1.gain"), b1 = param_values(agent, "seq.layer0.ln1.bias");
  auto g2v = param_values(agent, "seq.layer0.ln2.gain"), b2v = param_values(agent, "seq.layer0.ln2.bias");
  auto fw1 = param_values(agent, "seq.layer0.ff.w1"), fb1 = param_values(agent, "seq.layer0.ff.b1");
  auto fw2 = param_values(agent, "seq.layer0.ff.w2"), fb2 = param_values(agent, "seq.layer0.ff.b2");

  std::vector<std::vector<double>> q(static_cast<size_t>(n_tok)), k(static_cast<size_t>(n_tok)), v(static_cast<size_t>(n_tok));
  for (int i = 0; i < n_tok; ++i) {
    auto n1 = ln(tokens[static_cast<size_t>(i)], g1, b1);
    q[static_cast<size_t>(i)] = linear(wq, bq, n1, d);
    k[static_cast<size_t>(i)] = linear(wk, bk, n1, d);
    v[static_cast<size_t>(i)] = linear(wv, bv, n1, d);
  }
  // explicit 6x6 mask: -inf above the diagonal
  std::vector<std::vector<double>> mask(static_cast<size_t>(n_tok),
                                        std::vector<double>(static_cast<size_t>(n_tok), 0.0));
  for (int i = 0; i < n_tok; ++i)
    for (int j = i + 1; j < n_tok; ++j)
      mask[static_cast<size_t>(i)][static_cast<size_t>(j)] = -std::numeric_limits<double>::infinity();

  std::vector<std::vector<double>> x_after(static_cast<size_t>(n_tok));
  for (int i = 0; i < n_tok; ++i) {
    std::vector<double> ctx(static_cast<size_t>(d), 0.0);
    for (int h = 0; h < heads; ++h) {
      std::vector<double> scores(static_cast<size_t>(n_tok));
      for (int j = 0; j < n_tok; ++j) {
        double s = 0;
        for (int e = 0; e < dh; ++e)
          s += q[static_cast<size_t>(i)][static_cast<size_t>(h * dh + e)] * k[static_cast<size_t>(j)][static_cast<size_t>(h * dh + e)];
        scores[static_cast<size_t>(j)] = s / std::sqrt(static_cast<double>(dh)) +
                                         mask[static_cast<size_t>(i)][static_cast<size_t>(j)];
      }
      double m = *std::max_element(scores.begin(), scores.end());
      double zsum = 0;
      for (double s : scores) zsum += std::exp(s - m);
      for (int j = 0; j < n_tok; ++j) {
        double p = std::exp(scores[static_cast<size_t>(j)] - m) / zsum;
        for (int e = 0; e < dh; ++e)
          ctx[static_cast<size_t>(h * dh + e)] += p * v[static_cast<size_t>(j)][static_cast<size_t>(h * dh + e)];
      }
    }
    auto proj = linear(wo, bo, ctx, d);
    x_after[static_cast<size_t>(i)] = tokens[static_cast<size_t>(i)];
    for (int e = 0; e < d; ++e) x_after[static_cast<size_t>(i)][static_cast<size_t>(e)] += proj[static_cast<size_t>(e)];
    auto n2 = ln(x_after[static_cast<size_t>(i)], g2v, b2v);
    auto h1 = linear(fw1, fb1, n2, 4 * d);
    for (auto& t2 : h1) t2 = std::tanh(t2);
    auto h2 = linear(fw2, fb2, h1, d);
    for (int e = 0; e < d; ++e) x_after[static_cast<size_t>(i)][static_cast<size_t>(e)] += h2[static_cast<size_t>(e)];
  }

  auto wact = param_values(agent, "heads.actor.weight");
  auto bact = param_values(agent, "heads.actor.bias");
  for (int t_i = 0; t_i < T; ++t_i) {
    auto logits_ref = linear(wact, bact, x_after[static_cast<size_t>(2 * t_i + 1)], cfg.action_count);
    for (int a = 0; a < cfg.action_count; ++a)
      CHECK(f.logits.at(t_i * cfg.action_count + a) ==
            doctest::Approx(logits_ref[static_cast<size_t>(a)]).epsilon(1e-10));
  }
}

TEST_CASE("heads: zero weights give the uniform policy; softmax normalizes") {
  AgentConfig cfg = small_config();
  Agent agent(cfg, 31);
  env::EnvConfig ecfg;
  Rollout r = random_rollout(41, 4, ecfg);

  SegmentForward f = agent.forward_segment(r.obs, r.actions);
  Tensor probs = softmax_rows(f.logits);
  for (int i = 0; i < probs.dim(0); ++i) {
    double s = 0;
    for (int a = 0; a < cfg.action_count; ++a) s += probs.at(i * cfg.action_count + a);
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }

  zero_all_params(agent);
  SegmentForward f0 = agent.forward_segment(r.obs, r.actions);
  for (int i = 0; i < f0.logits.size(); ++i) CHECK(f0.logits.at(i) == 0.0);
  CHECK(f0.values.at(0) == 0.0);
}

TEST_CASE("heads: greedy action equals a hand-computed linear map") {
  AgentConfig cfg = small_config();
  cfg.action_count = 2;
  Agent agent(cfg, 37);
  zero_all_params(agent);
  auto bact = agent.params().get("heads.actor.bias");
  bact.node()->value = {-0.3, 0.4};  // with zero weights, logits = bias
  env::EnvConfig ecfg;
  Rollout r = random_rollout(43, 2, ecfg);
  std::vector<int> acts = {0, 1};
  SegmentForward f = agent.forward_segment(r.obs, acts);
  for (int t = 0; t < 2; ++t) {
    CHECK(f.logits.at(t * 2 + 0) == doctest::Approx(-0.3));
    CHECK(f.logits.at(t * 2 + 1) == doctest::Approx(0.4));
  }
}

TEST_CASE("incremental context matches the sequence forward bit-for-bit") {
  env::EnvConfig ecfg;
  for (auto variant : {EncoderVariant::transformer, EncoderVariant::rnn}) {
    AgentConfig cfg = small_config(variant);
    Agent agent(cfg, 47);
    for (uint64_t seed : {11ull, 12ull, 13ull}) {
      Rollout r = random_rollout(seed, 10, ecfg);
      int t = static_cast<int>(r.obs.size());
      SegmentForward f = agent.forward_segment(r.obs, r.actions);

      Agent::Context ctx(agent);
      for (int i = 0; i < t; ++i) {
        PolicyStep step = ctx.observe(r.obs[static_cast<size_t>(i)]);
        for (int a = 0; a < cfg.action_count; ++a)
          CHECK(step.logits[static_cast<size_t>(a)] == f.logits.at(i * cfg.action_count + a));
        CHECK(step.value == f.values.at(i));
        for (int e = 0; e < cfg.d_model; ++e)
          CHECK(step.h_visual[static_cast<size_t>(e)] == f.h_visual.at(i * cfg.d_model + e));
        ctx.commit(r.actions[static_cast<size_t>(i)]);
      }
    }
  }
}

TEST_CASE("forward_segment rejects over-long and mismatched inputs") {
  AgentConfig cfg = small_config();
  cfg.t_max = 4;
  Agent agent(cfg, 53);
  env::EnvConfig ecfg;
  Rollout r = random_rollout(3, 8, ecfg);
  REQUIRE(r.obs.size() > 4);
  CHECK_THROWS_AS(agent.forward_segment(r.obs, r.actions), Error);
  std::vector<env::Observation> obs(r.obs.begin(), r.obs.begin() + 3);
  std::vector<int> acts(r.actions.begin(), r.actions.begin() + 2);
  CHECK_THROWS_AS(agent.forward_segment(obs, acts), Error);
}

TEST_CASE("gradient flows through the full model (finite differences)") {
  env::EnvConfig ecfg;
  for (auto variant : {EncoderVariant::transformer, EncoderVariant::rnn}) {
    AgentConfig cfg;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.window = 3;
    cfg.categories = 2;
    cfg.t_max = 8;
    cfg.variant = variant;
    Agent agent(cfg, 59);
    env::EnvConfig small;
    small.width = 9;
    small.height = 9;
    small.window = 3;
    small.categories = 2;
    Rollout r = random_rollout(19, 3, small);
    REQUIRE(r.obs.size() == 3);

    std::vector<Tensor> inputs;
    for (const auto& [name, t] : agent.params().items()) inputs.push_back(t);
    auto res = testutil::grad_check(
        [&] {
          SegmentForward f = agent.forward_segment(r.obs, r.actions);
          return mean(add(mul(f.logits, f.logits),
                          mul(softmax_rows(f.logits), f.logits)));
        },
        inputs, 1e-5, 1e-3, 1e-7);
    INFO(res.worst);
    CHECK(res.ok);
  }
}
