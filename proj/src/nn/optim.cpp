#include "nn/optim.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>

namespace canav::nn {

Tensor ParamStore::create(const std::string& name, std::vector<int> shape,
                          Init init, Rng& rng) {
  if (has(name))
    fail(ErrorKind::invalid_argument, "param '" + name + "' already exists");
  std::vector<real> data(static_cast<size_t>(shape_size(shape)), real(0));
  switch (init) {
    case Init::zeros:
      break;
    case Init::ones:
      for (real& x : data) x = real(1);
      break;
    case Init::xavier_uniform: {
      // weight layout is [out x in]
      int fan_out = shape.empty() ? 1 : shape[0];
      int fan_in = shape.size() > 1 ? shape[1] : 1;
      double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (real& x : data) x = static_cast<real>(rng.uniform(-bound, bound));
      break;
    }
    case Init::normal_002:
      for (real& x : data) x = static_cast<real>(rng.normal(0.0, 0.02));
      break;
  }
  Tensor t = Tensor::from(std::move(data), std::move(shape), true);
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  fail(ErrorKind::invalid_argument, "unknown param '" + name + "'");
}

bool ParamStore::has(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return true;
  return false;
}

int64_t ParamStore::scalar_count() const {
  int64_t c = 0;
  for (const auto& [n, t] : items_) c += t.size();
  return c;
}

void ParamStore::zero_grads() const {
  for (const auto& [n, t] : items_) {
    Node* node = t.node();
    node->ensure_grad();
    std::fill(node->grad.begin(), node->grad.end(), real(0));
  }
}

void adam_step(const ParamStore& params, AdamState& state, real lr) {
  if (lr < 0)
    fail(ErrorKind::invalid_argument, "adam_step: negative learning rate");
  const auto& items = params.items();
  if (state.m.empty()) {
    state.m.resize(items.size());
    state.v.resize(items.size());
    for (size_t i = 0; i < items.size(); ++i) {
      state.m[i].assign(static_cast<size_t>(items[i].second.size()), real(0));
      state.v[i].assign(static_cast<size_t>(items[i].second.size()), real(0));
    }
  }
  if (state.m.size() != items.size())
    fail(ErrorKind::invalid_argument,
         "adam_step: optimizer state does not match parameter list");

  state.step += 1;
  real bc1 = real(1) - std::pow(state.beta1, static_cast<real>(state.step));
  real bc2 = real(1) - std::pow(state.beta2, static_cast<real>(state.step));

  for (size_t i = 0; i < items.size(); ++i) {
    const auto& [name, t] = items[i];
    Node* node = t.node();
    node->ensure_grad();
    if (state.m[i].size() != node->value.size())
      fail(ErrorKind::invalid_argument,
           "adam_step: state shape mismatch for param '" + name + "'");
    for (size_t j = 0; j < node->value.size(); ++j) {
      real g = node->grad[j];
      if (!std::isfinite(g))
        fail(ErrorKind::runtime, "adam_step: non-finite gradient in param '" +
                                     name + "'");
      state.m[i][j] = state.beta1 * state.m[i][j] + (real(1) - state.beta1) * g;
      state.v[i][j] = state.beta2 * state.v[i][j] + (real(1) - state.beta2) * g * g;
      real mhat = state.m[i][j] / bc1;
      real vhat = state.v[i][j] / bc2;
      node->value[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double linear_lr(int64_t step, int64_t total_steps, double lr0) {
  if (step < 0)
    fail(ErrorKind::invalid_argument, "linear_lr: negative step");
  if (step > total_steps) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
      std::fprintf(stderr,
                   "linear_lr: step %lld past schedule end %lld, clamping to 0\n",
                   static_cast<long long>(step),
                   static_cast<long long>(total_steps));
    return 0.0;
  }
  if (total_steps <= 0) return lr0;
  return lr0 * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

}  // namespace canav::nn
