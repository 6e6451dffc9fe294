#include "causal/causal.hpp"

#include <algorithm>
#include <cmath>

namespace canav::causal {

using namespace canav::nn;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void require_batch(const Tensor& h_o, const Tensor& h_a, const Tensor& h_next,
                   int d) {
  if (h_o.ndim() != 2 || h_a.ndim() != 2 || h_next.ndim() != 2)
    fail(ErrorKind::invalid_argument, "causal: expected 2-d feature batches");
  if (h_o.dim(0) == 0)
    fail(ErrorKind::invalid_argument, "causal: empty transition batch");
  if (h_o.dim(1) != d || h_a.dim(1) != d || h_next.dim(1) != d ||
      h_a.dim(0) != h_o.dim(0) || h_next.dim(0) != h_o.dim(0))
    fail(ErrorKind::invalid_argument,
         "causal: incongruent batch shapes " + shape_str(h_o.shape()) + ", " +
             shape_str(h_a.shape()) + ", " + shape_str(h_next.shape()));
}

double log_sum_exp_vec(const std::vector<double>& xs) {
  double m = xs[0];
  for (double x : xs) m = std::max(m, x);
  double s = 0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

CausalHead::CausalHead(int d, nn::ParamStore& store, Rng& rng) : d_(d) {
  if (d < 1) fail(ErrorKind::config, "causal: feature dimension must be positive");
  w_ = store.create("causal.predict.weight", {2 * d, 2 * d},
                    Init::xavier_uniform, rng);
  b_ = store.create("causal.predict.bias", {2 * d}, Init::zeros, rng);
}

CausalHead::Out CausalHead::predict(const Tensor& h_o, const Tensor& h_a) const {
  if (h_o.ndim() != 2 || h_a.ndim() != 2 || h_o.dim(1) != d_ ||
      h_a.dim(1) != d_ || h_o.dim(0) != h_a.dim(0))
    fail(ErrorKind::invalid_argument,
         "predict: expected [N x " + std::to_string(d_) + "] inputs, got " +
             shape_str(h_o.shape()) + " and " + shape_str(h_a.shape()));
  Tensor cat = concat_cols(h_o, h_a);
  Tensor out = add_rowvec(matmul_nt(cat, w_), b_);
  Out res;
  res.mu = slice_cols(out, 0, d_);
  res.log_var = clamp(slice_cols(out, d_, 2 * d_), static_cast<real>(kLogVarMin),
                      static_cast<real>(kLogVarMax));
  return res;
}

GaussianPrediction CausalHead::predict_one(std::span<const double> h_o,
                                           std::span<const double> h_a) const {
  if (static_cast<int>(h_o.size()) != d_ || static_cast<int>(h_a.size()) != d_)
    fail(ErrorKind::invalid_argument, "predict_one: feature length mismatch");
  NoGrad guard;
  std::vector<real> row(static_cast<size_t>(2 * d_));
  for (int i = 0; i < d_; ++i) {
    row[static_cast<size_t>(i)] = static_cast<real>(h_o[static_cast<size_t>(i)]);
    row[static_cast<size_t>(d_ + i)] = static_cast<real>(h_a[static_cast<size_t>(i)]);
  }
  std::vector<real> out(static_cast<size_t>(2 * d_));
  kern::linear_nt(w_.values().data(), b_.values().data(), row.data(), out.data(),
                  2 * d_, 2 * d_);
  GaussianPrediction g;
  g.mu.resize(static_cast<size_t>(d_));
  g.log_var.resize(static_cast<size_t>(d_));
  for (int i = 0; i < d_; ++i) {
    g.mu[static_cast<size_t>(i)] = static_cast<double>(out[static_cast<size_t>(i)]);
    g.log_var[static_cast<size_t>(i)] = std::clamp(
        static_cast<double>(out[static_cast<size_t>(d_ + i)]), kLogVarMin, kLogVarMax);
  }
  return g;
}

Tensor causal_loss(const CausalHead& head, const Tensor& h_o, const Tensor& h_a,
                   const Tensor& h_next) {
  require_batch(h_o, h_a, h_next, head.dim());
  CausalHead::Out out = head.predict(h_o, h_a);
  Tensor diff = sub(out.mu, h_next);
  return mean(mul(diff, diff));
}

Tensor nll_loss(const CausalHead& head, const Tensor& h_o, const Tensor& h_a,
                const Tensor& h_next) {
  require_batch(h_o, h_a, h_next, head.dim());
  CausalHead::Out out = head.predict(h_o, h_a);
  Tensor diff = sub(out.mu, h_next);
  Tensor sq = mul(diff, diff);
  Tensor inv_var = exp_t(scale(out.log_var, real(-1)));
  // per-element: log_var + (x - mu)^2 / var + log 2 pi
  Tensor terms = add(out.log_var, mul(sq, inv_var));
  Tensor per_row = row_sums(terms);  // [N]
  Tensor base = mean(per_row);
  real const_term = static_cast<real>(head.dim()) * static_cast<real>(kLog2Pi);
  return scale(add(base, Tensor::scalar(const_term)), real(0.5));
}

double gaussian_kl(const GaussianPrediction& p, const GaussianPrediction& q) {
  if (p.dim() != q.dim())
    fail(ErrorKind::invalid_argument,
         "gaussian_kl: dimension mismatch " + std::to_string(p.dim()) + " vs " +
             std::to_string(q.dim()));
  double kl = 0;
  for (int i = 0; i < p.dim(); ++i) {
    double lvp = p.log_var[static_cast<size_t>(i)];
    double lvq = q.log_var[static_cast<size_t>(i)];
    double vp = std::exp(lvp), vq = std::exp(lvq);
    double dm = p.mu[static_cast<size_t>(i)] - q.mu[static_cast<size_t>(i)];
    kl += 0.5 * ((lvq - lvp) + (vp + dm * dm) / vq - 1.0);
  }
  return kl;
}

KlBounds kl_bounds(const GaussianPrediction& f, const MixturePrediction& g) {
  if (g.size() < 1)
    fail(ErrorKind::invalid_argument, "kl_bounds: mixture needs K >= 1");
  int d = f.dim();
  for (const auto& c : g.components)
    if (c.dim() != d)
      fail(ErrorKind::invalid_argument, "kl_bounds: component dimension mismatch");

  double log_k = std::log(static_cast<double>(g.size()));

  // variational bound: -log sum_k w_k exp(-KL(f||g_k))
  std::vector<double> neg_kls(static_cast<size_t>(g.size()));
  for (int k = 0; k < g.size(); ++k)
    neg_kls[static_cast<size_t>(k)] = -gaussian_kl(f, g.components[static_cast<size_t>(k)]);
  double upper = log_k - log_sum_exp_vec(neg_kls);

  // product bound: -h(f) - log sum_k w_k N(mu_f; mu_k, var_f + var_k)
  double entropy = 0;
  for (int i = 0; i < d; ++i)
    entropy += 0.5 * (kLog2Pi + 1.0 + f.log_var[static_cast<size_t>(i)]);
  std::vector<double> log_norms(static_cast<size_t>(g.size()));
  for (int k = 0; k < g.size(); ++k) {
    const auto& c = g.components[static_cast<size_t>(k)];
    double ln = 0;
    for (int i = 0; i < d; ++i) {
      double var = std::exp(f.log_var[static_cast<size_t>(i)]) +
                   std::exp(c.log_var[static_cast<size_t>(i)]);
      double dm = f.mu[static_cast<size_t>(i)] - c.mu[static_cast<size_t>(i)];
      ln += -0.5 * (kLog2Pi + std::log(var) + dm * dm / var);
    }
    log_norms[static_cast<size_t>(k)] = ln;
  }
  double lower = -entropy - (log_sum_exp_vec(log_norms) - log_k);

  KlBounds b;
  b.lower = lower;
  b.upper = upper;
  b.mid = 0.5 * (lower + upper);
  return b;
}

CmiEstimate estimate_cmi(const CausalHead& head, const TransitionBatch& data,
                         int k, int eval_rows, uint64_t seed,
                         std::vector<KlBounds>* per_row) {
  if (data.n < 1) fail(ErrorKind::invalid_argument, "estimate_cmi: empty dataset");
  if (k < 1 || k > data.n)
    fail(ErrorKind::invalid_argument,
         "estimate_cmi: K=" + std::to_string(k) + " outside 1.." +
             std::to_string(data.n));
  if (eval_rows < 1)
    fail(ErrorKind::invalid_argument, "estimate_cmi: eval_rows must be >= 1");
  if (head.dim() != data.d)
    fail(ErrorKind::invalid_argument, "estimate_cmi: feature dimension mismatch");

  Rng rng(seed);
  std::vector<int> rows(static_cast<size_t>(data.n));
  for (int i = 0; i < data.n; ++i) rows[static_cast<size_t>(i)] = i;
  if (eval_rows < data.n) {
    rng.shuffle(rows);
    rows.resize(static_cast<size_t>(eval_rows));
  }

  CmiEstimate est;
  est.k = k;
  est.rows = static_cast<int>(rows.size());
  if (per_row) per_row->clear();
  for (int i : rows) {
    GaussianPrediction f = head.predict_one(data.row_o(i), data.row_a(i));
    MixturePrediction g;
    g.components.reserve(static_cast<size_t>(k));
    for (int c = 0; c < k; ++c) {
      int j = rng.uniform_int(data.n);
      g.components.push_back(head.predict_one(data.row_o(i), data.row_a(j)));
    }
    KlBounds b = kl_bounds(f, g);
    est.lower += b.lower;
    est.mid += b.mid;
    est.upper += b.upper;
    if (per_row) per_row->push_back(b);
  }
  est.lower /= static_cast<double>(est.rows);
  est.mid /= static_cast<double>(est.rows);
  est.upper /= static_cast<double>(est.rows);
  return est;
}

}  // namespace canav::causal
