#pragma once

#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "nn/tensor.hpp"

namespace canav::nn {

enum class Init { zeros, ones, xavier_uniform, normal_002 };

// Ordered, uniquely named trainable tensors. Names follow
// module.layer.tensor and are the checkpoint's stable key space.
class ParamStore {
 public:
  Tensor create(const std::string& name, std::vector<int> shape, Init init,
                Rng& rng);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& items() const {
    return items_;
  }
  int64_t scalar_count() const;
  void zero_grads() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

struct AdamState {
  int64_t step = 0;
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real eps = real(1e-8);
  std::vector<std::vector<real>> m, v;  // congruent with the parameter list
};

// One bias-corrected Adam update over the store's gradients. lr must be >= 0;
// a non-finite gradient aborts naming the offending parameter.
void adam_step(const ParamStore& params, AdamState& state, real lr);

// lr0 * (1 - step/total); steps past the end clamp to 0 (logged once).
double linear_lr(int64_t step, int64_t total_steps, double lr0);

}  // namespace canav::nn
