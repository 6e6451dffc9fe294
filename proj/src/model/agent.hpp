#pragma once

#include <span>
#include <vector>

#include "env/gridworld.hpp"
#include "nn/ops.hpp"
#include "nn/optim.hpp"

namespace canav::model {

using nn::real;
using nn::Tensor;

enum class EncoderVariant { transformer, rnn };

struct AgentConfig {
  int d_model = 128;
  int heads = 4;
  int layers = 1;
  EncoderVariant variant = EncoderVariant::transformer;
  env::TaskVariant task = env::TaskVariant::pointnav;
  int window = 5;
  int categories = 6;
  int t_max = 128;
  double goal_scale = 22.0;  // pointnav distance normalizer

  int action_count = env::kActionCount;
  int action_vocab() const { return action_count + 1; }  // + null start token
  int obs_dim() const { return window * window * (2 + categories); }
  void validate() const;
};

// Full-sequence training-path outputs for one episode segment.
struct SegmentForward {
  Tensor logits;      // [T x A]
  Tensor values;      // [T]
  Tensor h_visual;    // [T x d] integrated pre-encoder features h_o
  Tensor action_emb;  // [T x d] embeddings of the executed actions
  Tensor hv_prime;    // [T x d] post-encoder visual outputs
  Tensor ha_prime;    // [T x d] post-encoder action-token outputs
};

// One inference step's outputs (no-grad path).
struct PolicyStep {
  std::vector<real> logits;
  real value = 0;
  std::vector<real> h_visual;
};

class Agent {
 public:
  Agent(AgentConfig cfg, uint64_t init_seed);

  const AgentConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // -------- taped sequence path (training) --------
  // obs[t] is the observation seen at step t; actions[t] the action executed
  // at step t. The token stream starts with a null action marker so every
  // visual token can attend to the action that produced it.
  SegmentForward forward_segment(std::span<const env::Observation> obs,
                                 std::span<const int> actions) const;

  // -------- spec-surface single-step ops --------
  Tensor encode_observation(const env::Observation& obs) const;
  Tensor embed_objective(const env::Observation& obs) const;
  Tensor embed_action(int action_id) const;
  Tensor integrate(const Tensor& z, const Tensor& h_obj) const;

  // -------- incremental no-grad inference --------
  // Bit-identical to forward_segment at every step (shared kernels).
  class Context {
   public:
    explicit Context(const Agent& agent);
    void reset();
    // Feeds the pending action token and the new observation token; returns
    // policy outputs at this step.
    PolicyStep observe(const env::Observation& obs);
    // Records the executed action (becomes the next step's action token).
    void commit(int action);
    int steps() const { return step_count_; }

   private:
    void push_token(const real* feat, int layer_input_only);
    const Agent& agent_;
    int step_count_ = 0;
    int tokens_ = 0;
    int last_action_ = 0;
    // per-layer KV caches, token-major [t][d]
    std::vector<std::vector<real>> kcache_, vcache_;
    std::vector<real> gru_hidden_;
    std::vector<real> x_;  // scratch: current token activation
    PolicyStep out_;
  };

  const std::vector<real>& positional_encoding() const { return pos_enc_; }

 private:
  friend class Context;
  void build_params(uint64_t init_seed);
  Tensor objective_features(std::span<const env::Observation> obs) const;

  AgentConfig cfg_;
  nn::ParamStore params_;

  Tensor w_obs_, b_obs_;
  Tensor w_goal_, b_goal_;  // pointnav
  Tensor obj_table_;        // objectnav
  Tensor action_table_;
  Tensor w_int_, b_int_;
  struct Layer {
    nn::AttentionParams attn;
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
    Tensor ff_w1, ff_b1, ff_w2, ff_b2;
  };
  std::vector<Layer> layers_;
  nn::GruParams gru_;
  Tensor w_act_, b_act_, w_val_, b_val_;

  std::vector<real> pos_enc_;  // [2*t_max x d], sinusoidal
};

}  // namespace canav::model
