#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "common.hpp"
#include "nn/tensor.hpp"

namespace canav::testutil {

using nn::real;
using nn::Tensor;

inline Tensor rand_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                          double hi = 1.0, bool requires_grad = true) {
  std::vector<real> data(static_cast<size_t>(nn::shape_size(shape)));
  for (real& x : data) x = static_cast<real>(rng.uniform(lo, hi));
  return Tensor::from(std::move(data), std::move(shape), requires_grad);
}

struct GradCheckResult {
  bool ok = true;
  double max_err = 0.0;  // worst relative error over all coordinates
  std::string worst;
};

// Central-difference check of d(fn())/d(inputs[i][j]) against the tape.
// fn must rebuild its graph from the inputs' current values on every call.
inline GradCheckResult grad_check(const std::function<Tensor()>& fn,
                                  const std::vector<Tensor>& inputs,
                                  double h = 1e-5, double rel_tol = 1e-4,
                                  double abs_floor = 1e-7) {
  for (const Tensor& t : inputs) {
    t.node()->ensure_grad();
    std::fill(t.node()->grad.begin(), t.node()->grad.end(), real(0));
  }
  Tensor loss = fn();
  nn::backward(loss);

  std::vector<std::vector<real>> analytic;
  analytic.reserve(inputs.size());
  for (const Tensor& t : inputs) analytic.emplace_back(t.node()->grad);

  GradCheckResult res;
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    nn::Node* node = inputs[ti].node();
    for (size_t j = 0; j < node->value.size(); ++j) {
      real saved = node->value[j];
      node->value[j] = saved + static_cast<real>(h);
      double fp = fn().item();
      node->value[j] = saved - static_cast<real>(h);
      double fm = fn().item();
      node->value[j] = saved;
      double fd = (fp - fm) / (2.0 * h);
      double an = analytic[ti][j];
      double denom = std::max(std::abs(an), std::abs(fd));
      double diff = std::abs(an - fd);
      double rel = denom > 0 ? diff / denom : 0.0;
      bool pass = rel <= rel_tol || diff <= abs_floor;
      double err = diff <= abs_floor ? 0.0 : rel;
      if (err > res.max_err) {
        res.max_err = err;
        res.worst = "input " + std::to_string(ti) + "[" + std::to_string(j) +
                    "]: analytic=" + std::to_string(an) +
                    " fd=" + std::to_string(fd);
      }
      if (!pass) res.ok = false;
    }
  }
  return res;
}

}  // namespace canav::testutil
