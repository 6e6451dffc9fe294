#pragma once

#include <span>
#include <vector>

#include "nn/ops.hpp"
#include "nn/optim.hpp"

namespace canav::causal {

using nn::real;
using nn::Tensor;

// Diagonal Gaussian over next-step features. Value-level (double) view used
// by the bound math and the CMI diagnostic.
struct GaussianPrediction {
  std::vector<double> mu;
  std::vector<double> log_var;  // clamped to [-10, 10] at the source
  int dim() const { return static_cast<int>(mu.size()); }
};

// Uniformly weighted Gaussian mixture (the Monte-Carlo marginal).
struct MixturePrediction {
  std::vector<GaussianPrediction> components;
  int size() const { return static_cast<int>(components.size()); }
};

// Transition rows (h_o_t, h_a_t, h_o_{t+1}) at value level; the training path
// works on tensors directly and never materializes this.
struct TransitionBatch {
  int n = 0;
  int d = 0;
  std::vector<double> h_o, h_a, h_next;  // each [n x d] row-major

  std::span<const double> row_o(int i) const {
    return {h_o.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d)};
  }
  std::span<const double> row_a(int i) const {
    return {h_a.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d)};
  }
  std::span<const double> row_next(int i) const {
    return {h_next.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d)};
  }
};

constexpr double kLogVarMin = -10.0;
constexpr double kLogVarMax = 10.0;

// Probabilistic next-feature head: one linear map from [h_o; h_a] to
// (mu, log_var).
class CausalHead {
 public:
  CausalHead(int d, nn::ParamStore& store, Rng& rng);

  struct Out {
    Tensor mu;       // [N x d]
    Tensor log_var;  // [N x d], clamped
  };
  Out predict(const Tensor& h_o, const Tensor& h_a) const;
  GaussianPrediction predict_one(std::span<const double> h_o,
                                 std::span<const double> h_a) const;

  int dim() const { return d_; }
  const Tensor& weight() const { return w_; }
  const Tensor& bias() const { return b_; }

 private:
  int d_;
  Tensor w_;  // [2d x 2d]
  Tensor b_;  // [2d]
};

// Mean squared error between predicted means and next features, averaged over
// rows and dimensions. The practical training objective.
Tensor causal_loss(const CausalHead& head, const Tensor& h_o, const Tensor& h_a,
                   const Tensor& h_next);

// Mean diagonal-Gaussian negative log density of the targets. Trains the
// variance head as well; optional alternative objective.
Tensor nll_loss(const CausalHead& head, const Tensor& h_o, const Tensor& h_a,
                const Tensor& h_next);

// Closed-form KL between diagonal Gaussians, summed over dimensions.
double gaussian_kl(const GaussianPrediction& p, const GaussianPrediction& q);

struct KlBounds {
  double lower = 0;
  double mid = 0;
  double upper = 0;
};

// Closed-form bounds on KL(f || g) for Gaussian f and uniform mixture g:
// upper from the per-component variational bound, lower from the
// product-of-Gaussians (Jensen) bound; mid is their midpoint.
KlBounds kl_bounds(const GaussianPrediction& f, const MixturePrediction& g);

struct CmiEstimate {
  double lower = 0;
  double mid = 0;   // the reported conditional-mutual-information estimate
  double upper = 0;
  int rows = 0;
  int k = 0;
};

// Mean midpoint KL between f = predict(h_o, h_a) and the mixture of
// predict(h_o, a^(k)) over K actions drawn from the dataset's action column.
// Diagnostic only; never part of any training gradient.
CmiEstimate estimate_cmi(const CausalHead& head, const TransitionBatch& data,
                         int k, int eval_rows, uint64_t seed,
                         std::vector<KlBounds>* per_row = nullptr);

}  // namespace canav::causal
