#include "model/agent.hpp"

#include <cmath>

namespace canav::model {

using namespace canav::nn;

void AgentConfig::validate() const {
  if (d_model < 1) fail(ErrorKind::config, "agent: d_model must be positive");
  if (heads < 1 || d_model % heads != 0)
    fail(ErrorKind::config, "agent: d_model " + std::to_string(d_model) +
                                " not divisible by heads " + std::to_string(heads));
  if (layers < 1) fail(ErrorKind::config, "agent: layers must be >= 1");
  if (t_max < 1) fail(ErrorKind::config, "agent: t_max must be >= 1");
  if (window < 1) fail(ErrorKind::config, "agent: window must be >= 1");
  if (categories < 0 ||
      (task == env::TaskVariant::objectnav && categories < 1))
    fail(ErrorKind::config, "agent: bad category count");
  if (action_count < 2) fail(ErrorKind::config, "agent: action_count too small");
  if (goal_scale <= 0) fail(ErrorKind::config, "agent: goal_scale must be positive");
}

Agent::Agent(AgentConfig cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  build_params(init_seed);

  // sinusoidal positions over the interleaved token stream
  int d = cfg_.d_model;
  int n = 2 * cfg_.t_max;
  pos_enc_.resize(static_cast<size_t>(n) * d);
  for (int pos = 0; pos < n; ++pos)
    for (int i = 0; i < d; ++i) {
      double angle =
          pos / std::pow(10000.0, 2.0 * (i / 2) / static_cast<double>(d));
      pos_enc_[static_cast<size_t>(pos) * d + i] =
          static_cast<real>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
}

void Agent::build_params(uint64_t init_seed) {
  Rng rng(init_seed);
  int d = cfg_.d_model;
  auto& ps = params_;

  w_obs_ = ps.create("encoder.obs.weight", {d, cfg_.obs_dim()},
                     Init::xavier_uniform, rng);
  b_obs_ = ps.create("encoder.obs.bias", {d}, Init::zeros, rng);
  if (cfg_.task == env::TaskVariant::pointnav) {
    w_goal_ = ps.create("encoder.objective.weight", {d, 2}, Init::xavier_uniform,
                        rng);
    b_goal_ = ps.create("encoder.objective.bias", {d}, Init::zeros, rng);
  } else {
    obj_table_ = ps.create("encoder.objective.table", {cfg_.categories, d},
                           Init::normal_002, rng);
  }
  action_table_ = ps.create("encoder.action.table", {cfg_.action_vocab(), d},
                            Init::normal_002, rng);
  w_int_ = ps.create("encoder.integrate.weight", {d, 2 * d},
                     Init::xavier_uniform, rng);
  b_int_ = ps.create("encoder.integrate.bias", {d}, Init::zeros, rng);

  if (cfg_.variant == EncoderVariant::transformer) {
    layers_.resize(static_cast<size_t>(cfg_.layers));
    for (int l = 0; l < cfg_.layers; ++l) {
      std::string p = "seq.layer" + std::to_string(l) + ".";
      Layer& L = layers_[static_cast<size_t>(l)];
      L.attn.wq = ps.create(p + "attn.wq", {d, d}, Init::xavier_uniform, rng);
      L.attn.bq = ps.create(p + "attn.bq", {d}, Init::zeros, rng);
      L.attn.wk = ps.create(p + "attn.wk", {d, d}, Init::xavier_uniform, rng);
      L.attn.bk = ps.create(p + "attn.bk", {d}, Init::zeros, rng);
      L.attn.wv = ps.create(p + "attn.wv", {d, d}, Init::xavier_uniform, rng);
      L.attn.bv = ps.create(p + "attn.bv", {d}, Init::zeros, rng);
      L.attn.wo = ps.create(p + "attn.wo", {d, d}, Init::xavier_uniform, rng);
      L.attn.bo = ps.create(p + "attn.bo", {d}, Init::zeros, rng);
      L.ln1_g = ps.create(p + "ln1.gain", {d}, Init::ones, rng);
      L.ln1_b = ps.create(p + "ln1.bias", {d}, Init::zeros, rng);
      L.ln2_g = ps.create(p + "ln2.gain", {d}, Init::ones, rng);
      L.ln2_b = ps.create(p + "ln2.bias", {d}, Init::zeros, rng);
      L.ff_w1 = ps.create(p + "ff.w1", {4 * d, d}, Init::xavier_uniform, rng);
      L.ff_b1 = ps.create(p + "ff.b1", {4 * d}, Init::zeros, rng);
      L.ff_w2 = ps.create(p + "ff.w2", {d, 4 * d}, Init::xavier_uniform, rng);
      L.ff_b2 = ps.create(p + "ff.b2", {d}, Init::zeros, rng);
    }
  } else {
    gru_.wz = ps.create("seq.gru.wz", {d, 2 * d}, Init::xavier_uniform, rng);
    gru_.bz = ps.create("seq.gru.bz", {d}, Init::zeros, rng);
    gru_.wr = ps.create("seq.gru.wr", {d, 2 * d}, Init::xavier_uniform, rng);
    gru_.br = ps.create("seq.gru.br", {d}, Init::zeros, rng);
    gru_.wh = ps.create("seq.gru.wh", {d, 2 * d}, Init::xavier_uniform, rng);
    gru_.bh = ps.create("seq.gru.bh", {d}, Init::zeros, rng);
  }

  w_act_ = ps.create("heads.actor.weight", {cfg_.action_count, d},
                     Init::xavier_uniform, rng);
  b_act_ = ps.create("heads.actor.bias", {cfg_.action_count}, Init::zeros, rng);
  w_val_ = ps.create("heads.critic.weight", {1, d}, Init::xavier_uniform, rng);
  b_val_ = ps.create("heads.critic.bias", {1}, Init::zeros, rng);
}

namespace {

void check_obs(const AgentConfig& cfg, const env::Observation& obs) {
  if (obs.window != cfg.window || obs.categories != cfg.categories)
    fail(ErrorKind::invalid_argument,
         "agent: observation window " + std::to_string(obs.window) + "x" +
             std::to_string(obs.window) + " with " +
             std::to_string(obs.categories) +
             " categories does not match the configured encoder");
  if (obs.variant != cfg.task)
    fail(ErrorKind::invalid_argument,
         "agent: observation task variant does not match the config");
}

}  // namespace

Tensor Agent::objective_features(std::span<const env::Observation> obs) const {
  int t = static_cast<int>(obs.size());
  if (cfg_.task == env::TaskVariant::pointnav) {
    std::vector<real> g(static_cast<size_t>(t) * 2);
    for (int i = 0; i < t; ++i) {
      g[static_cast<size_t>(i) * 2] =
          static_cast<real>(obs[static_cast<size_t>(i)].goal_distance /
                            cfg_.goal_scale);
      g[static_cast<size_t>(i) * 2 + 1] = static_cast<real>(
          obs[static_cast<size_t>(i)].goal_bearing / 3.14159265358979323846);
    }
    Tensor gt = Tensor::from(std::move(g), {t, 2});
    return add_rowvec(matmul_nt(gt, w_goal_), b_goal_);
  }
  std::vector<int> ids(static_cast<size_t>(t));
  for (int i = 0; i < t; ++i) ids[static_cast<size_t>(i)] =
      obs[static_cast<size_t>(i)].goal_category;
  return gather_rows(obj_table_, ids);
}

SegmentForward Agent::forward_segment(std::span<const env::Observation> obs,
                                      std::span<const int> actions) const {
  int t = static_cast<int>(obs.size());
  if (t < 1) fail(ErrorKind::invalid_argument, "forward_segment: empty segment");
  if (t > cfg_.t_max)
    fail(ErrorKind::invalid_argument,
         "forward_segment: length " + std::to_string(t) + " exceeds t_max " +
             std::to_string(cfg_.t_max));
  if (static_cast<int>(actions.size()) != t)
    fail(ErrorKind::invalid_argument,
         "forward_segment: observation/action length mismatch");
  int d = cfg_.d_model;

  // observation one-hots, row per step
  std::vector<real> xs(static_cast<size_t>(t) * cfg_.obs_dim());
  std::vector<double> row(static_cast<size_t>(cfg_.obs_dim()));
  for (int i = 0; i < t; ++i) {
    check_obs(cfg_, obs[static_cast<size_t>(i)]);
    obs[static_cast<size_t>(i)].one_hot(row.data());
    for (int j = 0; j < cfg_.obs_dim(); ++j)
      xs[static_cast<size_t>(i) * cfg_.obs_dim() + j] = static_cast<real>(row[static_cast<size_t>(j)]);
  }
  Tensor x_onehot = Tensor::from(std::move(xs), {t, cfg_.obs_dim()});
  Tensor z = tanh_t(add_rowvec(matmul_nt(x_onehot, w_obs_), b_obs_));
  Tensor h_obj = objective_features(obs);
  Tensor h_visual =
      tanh_t(add_rowvec(matmul_nt(concat_cols(z, h_obj), w_int_), b_int_));

  std::vector<int> action_in(static_cast<size_t>(t));
  action_in[0] = cfg_.action_count;  // null start token, last table row
  for (int i = 1; i < t; ++i) action_in[static_cast<size_t>(i)] = actions[static_cast<size_t>(i - 1)];
  for (int i = 0; i < t; ++i) {
    int a = actions[static_cast<size_t>(i)];
    if (a < 0 || a >= cfg_.action_count)
      fail(ErrorKind::invalid_argument,
           "forward_segment: action id " + std::to_string(a) + " out of range");
  }
  Tensor a_in = gather_rows(action_table_, action_in);
  Tensor a_exec =
      gather_rows(action_table_, std::vector<int>(actions.begin(), actions.end()));

  Tensor tokens = interleave_rows(a_in, h_visual);  // [2t x d]

  Tensor out;
  if (cfg_.variant == EncoderVariant::transformer) {
    std::vector<real> pe(pos_enc_.begin(),
                         pos_enc_.begin() + static_cast<size_t>(2 * t) * d);
    Tensor x = add(tokens, Tensor::from(std::move(pe), {2 * t, d}));
    for (const Layer& L : layers_) {
      Tensor n1 = layer_norm_rows(x, L.ln1_g, L.ln1_b);
      Tensor att = causal_self_attention(n1, cfg_.heads, L.attn);
      x = add(x, att);
      Tensor n2 = layer_norm_rows(x, L.ln2_g, L.ln2_b);
      Tensor h1 = tanh_t(add_rowvec(matmul_nt(n2, L.ff_w1), L.ff_b1));
      Tensor h2 = add_rowvec(matmul_nt(h1, L.ff_w2), L.ff_b2);
      x = add(x, h2);
    }
    out = x;
  } else {
    Tensor h = Tensor::zeros({d});
    std::vector<Tensor> outs;
    outs.reserve(static_cast<size_t>(2 * t));
    for (int i = 0; i < 2 * t; ++i) {
      h = gru_step(select_row(tokens, i), h, gru_);
      outs.push_back(h);
    }
    out = stack_rows(outs);
  }

  SegmentForward fwd;
  fwd.h_visual = h_visual;
  fwd.action_emb = a_exec;
  fwd.hv_prime = take_rows_stride2(out, 1);
  fwd.ha_prime = take_rows_stride2(out, 0);
  fwd.logits = add_rowvec(matmul_nt(fwd.hv_prime, w_act_), b_act_);
  fwd.values = reshape(add_rowvec(matmul_nt(fwd.hv_prime, w_val_), b_val_), {t});
  return fwd;
}

Tensor Agent::encode_observation(const env::Observation& obs) const {
  check_obs(cfg_, obs);
  std::vector<double> row(static_cast<size_t>(cfg_.obs_dim()));
  obs.one_hot(row.data());
  std::vector<real> xs(row.begin(), row.end());
  Tensor x = Tensor::from(std::move(xs), {1, cfg_.obs_dim()});
  return reshape(tanh_t(add_rowvec(matmul_nt(x, w_obs_), b_obs_)), {cfg_.d_model});
}

Tensor Agent::embed_objective(const env::Observation& obs) const {
  check_obs(cfg_, obs);
  return reshape(objective_features(std::span<const env::Observation>(&obs, 1)),
                 {cfg_.d_model});
}

Tensor Agent::embed_action(int action_id) const {
  return reshape(gather_rows(action_table_, {action_id}), {cfg_.d_model});
}

Tensor Agent::integrate(const Tensor& z, const Tensor& h_obj) const {
  if (z.ndim() != 1 || h_obj.ndim() != 1 || z.dim(0) != cfg_.d_model ||
      h_obj.dim(0) != cfg_.d_model)
    fail(ErrorKind::invalid_argument,
         "integrate: expected two vectors of length " + std::to_string(cfg_.d_model));
  Tensor cat = concat_cols(reshape(z, {1, cfg_.d_model}),
                           reshape(h_obj, {1, cfg_.d_model}));
  return reshape(tanh_t(add_rowvec(matmul_nt(cat, w_int_), b_int_)),
                 {cfg_.d_model});
}

// ----------------------------- incremental path -----------------------------

Agent::Context::Context(const Agent& agent) : agent_(agent) { reset(); }

void Agent::Context::reset() {
  step_count_ = 0;
  tokens_ = 0;
  last_action_ = agent_.cfg_.action_count;  // null start token
  const AgentConfig& cfg = agent_.cfg_;
  size_t cap = static_cast<size_t>(2 * cfg.t_max) * cfg.d_model;
  if (cfg.variant == EncoderVariant::transformer) {
    kcache_.assign(static_cast<size_t>(cfg.layers), {});
    vcache_.assign(static_cast<size_t>(cfg.layers), {});
    for (auto& c : kcache_) c.reserve(cap);
    for (auto& c : vcache_) c.reserve(cap);
  } else {
    gru_hidden_.assign(static_cast<size_t>(cfg.d_model), real(0));
  }
}

void Agent::Context::push_token(const real* feat, int /*unused*/) {
  const AgentConfig& cfg = agent_.cfg_;
  int d = cfg.d_model;
  x_.assign(feat, feat + d);

  if (cfg.variant == EncoderVariant::transformer) {
    const real* pe = agent_.pos_enc_.data() + static_cast<size_t>(tokens_) * d;
    for (int i = 0; i < d; ++i) x_[static_cast<size_t>(i)] += pe[i];
    thread_local std::vector<real> n1, q, ctx, proj, h1;
    n1.resize(static_cast<size_t>(d));
    q.resize(static_cast<size_t>(d));
    ctx.resize(static_cast<size_t>(d));
    proj.resize(static_cast<size_t>(d));
    h1.resize(static_cast<size_t>(4 * d));
    for (size_t l = 0; l < agent_.layers_.size(); ++l) {
      const Layer& L = agent_.layers_[l];
      kern::layer_norm_row(x_.data(), L.ln1_g.values().data(),
                           L.ln1_b.values().data(), n1.data(), d, real(1e-5));
      auto& kc = kcache_[l];
      auto& vc = vcache_[l];
      size_t off = kc.size();
      kc.resize(off + static_cast<size_t>(d));
      vc.resize(off + static_cast<size_t>(d));
      kern::linear_nt(L.attn.wq.values().data(), L.attn.bq.values().data(),
                      n1.data(), q.data(), d, d);
      kern::linear_nt(L.attn.wk.values().data(), L.attn.bk.values().data(),
                      n1.data(), kc.data() + off, d, d);
      kern::linear_nt(L.attn.wv.values().data(), L.attn.bv.values().data(),
                      n1.data(), vc.data() + off, d, d);
      kern::attention_row(q.data(), kc.data(), vc.data(), tokens_, d, cfg.heads,
                          nullptr, ctx.data());
      kern::linear_nt(L.attn.wo.values().data(), L.attn.bo.values().data(),
                      ctx.data(), proj.data(), d, d);
      for (int i = 0; i < d; ++i) x_[static_cast<size_t>(i)] += proj[static_cast<size_t>(i)];
      kern::layer_norm_row(x_.data(), L.ln2_g.values().data(),
                           L.ln2_b.values().data(), n1.data(), d, real(1e-5));
      kern::linear_nt(L.ff_w1.values().data(), L.ff_b1.values().data(), n1.data(),
                      h1.data(), 4 * d, d);
      for (int i = 0; i < 4 * d; ++i) h1[static_cast<size_t>(i)] = std::tanh(h1[static_cast<size_t>(i)]);
      kern::linear_nt(L.ff_w2.values().data(), L.ff_b2.values().data(), h1.data(),
                      proj.data(), d, 4 * d);
      for (int i = 0; i < d; ++i) x_[static_cast<size_t>(i)] += proj[static_cast<size_t>(i)];
    }
  } else {
    thread_local std::vector<real> scratch, z, r, c, out;
    scratch.resize(static_cast<size_t>(2 * d));
    z.resize(static_cast<size_t>(d));
    r.resize(static_cast<size_t>(d));
    c.resize(static_cast<size_t>(d));
    out.resize(static_cast<size_t>(d));
    kern::gru_row(x_.data(), gru_hidden_.data(), agent_.gru_.wz.values().data(),
                  agent_.gru_.bz.values().data(), agent_.gru_.wr.values().data(),
                  agent_.gru_.br.values().data(), agent_.gru_.wh.values().data(),
                  agent_.gru_.bh.values().data(), d, scratch.data(), z.data(),
                  r.data(), c.data(), out.data());
    gru_hidden_.assign(out.begin(), out.end());
    x_ = gru_hidden_;
  }
  ++tokens_;
}

PolicyStep Agent::Context::observe(const env::Observation& obs) {
  const AgentConfig& cfg = agent_.cfg_;
  check_obs(cfg, obs);
  if (step_count_ >= cfg.t_max)
    fail(ErrorKind::invalid_argument,
         "context: episode exceeds t_max " + std::to_string(cfg.t_max));
  int d = cfg.d_model;

  // action-in token: the null marker at episode start, else the last action
  const real* a_row =
      agent_.action_table_.values().data() + static_cast<size_t>(last_action_) * d;
  push_token(a_row, 0);

  // observation token: z -> h_obj -> integrated visual feature
  thread_local std::vector<double> onehot;
  thread_local std::vector<real> xin, z, hobj, cat, hv;
  onehot.resize(static_cast<size_t>(cfg.obs_dim()));
  xin.resize(static_cast<size_t>(cfg.obs_dim()));
  z.resize(static_cast<size_t>(d));
  hobj.resize(static_cast<size_t>(d));
  cat.resize(static_cast<size_t>(2 * d));
  hv.resize(static_cast<size_t>(d));
  obs.one_hot(onehot.data());
  for (int i = 0; i < cfg.obs_dim(); ++i) xin[static_cast<size_t>(i)] = static_cast<real>(onehot[static_cast<size_t>(i)]);
  kern::linear_nt(agent_.w_obs_.values().data(), agent_.b_obs_.values().data(),
                  xin.data(), z.data(), d, cfg.obs_dim());
  for (int i = 0; i < d; ++i) z[static_cast<size_t>(i)] = std::tanh(z[static_cast<size_t>(i)]);

  if (cfg.task == env::TaskVariant::pointnav) {
    real g2[2] = {static_cast<real>(obs.goal_distance / cfg.goal_scale),
                  static_cast<real>(obs.goal_bearing / 3.14159265358979323846)};
    kern::linear_nt(agent_.w_goal_.values().data(), agent_.b_goal_.values().data(),
                    g2, hobj.data(), d, 2);
  } else {
    const real* trow = agent_.obj_table_.values().data() +
                       static_cast<size_t>(obs.goal_category) * d;
    std::copy(trow, trow + d, hobj.begin());
  }
  std::copy(z.begin(), z.end(), cat.begin());
  std::copy(hobj.begin(), hobj.end(), cat.begin() + d);
  kern::linear_nt(agent_.w_int_.values().data(), agent_.b_int_.values().data(),
                  cat.data(), hv.data(), d, 2 * d);
  for (int i = 0; i < d; ++i) hv[static_cast<size_t>(i)] = std::tanh(hv[static_cast<size_t>(i)]);

  out_.h_visual.assign(hv.begin(), hv.end());
  push_token(hv.data(), 0);

  out_.logits.resize(static_cast<size_t>(cfg.action_count));
  kern::linear_nt(agent_.w_act_.values().data(), agent_.b_act_.values().data(),
                  x_.data(), out_.logits.data(), cfg.action_count, d);
  real v;
  kern::linear_nt(agent_.w_val_.values().data(), agent_.b_val_.values().data(),
                  x_.data(), &v, 1, d);
  out_.value = v;
  ++step_count_;
  return out_;
}

void Agent::Context::commit(int action) {
  if (action < 0 || action >= agent_.cfg_.action_count)
    fail(ErrorKind::invalid_argument,
         "context: action id " + std::to_string(action) + " out of range");
  last_action_ = action;
}

}  // namespace canav::model
