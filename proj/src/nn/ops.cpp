#include "nn/ops.hpp"

#include <algorithm>
#include <cmath>

namespace canav::nn {

namespace {

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2)
    fail(ErrorKind::invalid_argument,
         std::string(op) + ": expected 2-d tensor, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    fail(ErrorKind::invalid_argument,
         std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
             shape_str(b.shape()));
}

real sigmoid_scalar(real x) { return real(1) / (real(1) + std::exp(-x)); }

}  // namespace

// ----------------------------- kernels -----------------------------

namespace kern {

real dot(const real* a, const real* b, int n) {
  real s = 0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void mm_nn(const real* a, const real* b, real* c, int m, int k, int n) {
  std::fill(c, c + static_cast<size_t>(m) * n, real(0));
  mm_nn_acc(a, b, c, m, k, n);
}

void mm_nn_acc(const real* a, const real* b, real* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const real* ai = a + static_cast<size_t>(i) * k;
    real* ci = c + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      real av = ai[kk];
      const real* bk = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}

void mm_nt(const real* a, const real* b, real* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const real* ai = a + static_cast<size_t>(i) * k;
    real* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = dot(ai, b + static_cast<size_t>(j) * k, k);
  }
}

void mm_nt_acc(const real* a, const real* b, real* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const real* ai = a + static_cast<size_t>(i) * k;
    real* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] += dot(ai, b + static_cast<size_t>(j) * k, k);
  }
}

void mm_tn_acc(const real* a, const real* b, real* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const real* ai = a + static_cast<size_t>(i) * k;
    const real* bi = b + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      real av = ai[kk];
      real* ck = c + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) ck[j] += av * bi[j];
    }
  }
}

void linear_nt(const real* w, const real* bias, const real* x, real* y, int out,
               int in) {
  for (int o = 0; o < out; ++o) {
    real s = dot(w + static_cast<size_t>(o) * in, x, in);
    y[o] = bias ? s + bias[o] : s;
  }
}

void softmax_inplace(real* x, int n) {
  real m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  real s = 0;
  for (int i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - m);
    s += x[i];
  }
  for (int i = 0; i < n; ++i) x[i] /= s;
}

real log_sum_exp(const real* x, int n) {
  real m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  real s = 0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

void layer_norm_row(const real* x, const real* gain, const real* bias, real* y,
                    int n, real eps) {
  real mu = 0;
  for (int i = 0; i < n; ++i) mu += x[i];
  mu /= n;
  real var = 0;
  for (int i = 0; i < n; ++i) var += (x[i] - mu) * (x[i] - mu);
  var /= n;
  real inv = real(1) / std::sqrt(var + eps);
  for (int i = 0; i < n; ++i) y[i] = gain[i] * ((x[i] - mu) * inv) + bias[i];
}

void attention_row(const real* q, const real* keys, const real* values,
                   int t_incl, int d, int heads, real* probs_out, real* out) {
  int dh = d / heads;
  real inv = real(1) / std::sqrt(static_cast<real>(dh));
  thread_local std::vector<real> scores;
  scores.resize(static_cast<size_t>(t_incl) + 1);
  for (int h = 0; h < heads; ++h) {
    const real* qh = q + static_cast<size_t>(h) * dh;
    for (int j = 0; j <= t_incl; ++j)
      scores[static_cast<size_t>(j)] =
          dot(qh, keys + static_cast<size_t>(j) * d + static_cast<size_t>(h) * dh,
              dh) *
          inv;
    softmax_inplace(scores.data(), t_incl + 1);
    if (probs_out)
      std::copy(scores.begin(), scores.end(),
                probs_out + static_cast<size_t>(h) * (t_incl + 1));
    real* oh = out + static_cast<size_t>(h) * dh;
    std::fill(oh, oh + dh, real(0));
    for (int j = 0; j <= t_incl; ++j) {
      real p = scores[static_cast<size_t>(j)];
      const real* vh =
          values + static_cast<size_t>(j) * d + static_cast<size_t>(h) * dh;
      for (int e = 0; e < dh; ++e) oh[e] += p * vh[e];
    }
  }
}

void gru_row(const real* x, const real* h, const real* wz, const real* bz,
             const real* wr, const real* br, const real* wh, const real* bh,
             int d, real* scratch, real* z_out, real* r_out, real* c_out,
             real* out) {
  real* cat = scratch;  // 2d
  std::copy(x, x + d, cat);
  std::copy(h, h + d, cat + d);
  for (int o = 0; o < d; ++o)
    z_out[o] = sigmoid_scalar(dot(wz + static_cast<size_t>(o) * 2 * d, cat, 2 * d) + bz[o]);
  for (int o = 0; o < d; ++o)
    r_out[o] = sigmoid_scalar(dot(wr + static_cast<size_t>(o) * 2 * d, cat, 2 * d) + br[o]);
  for (int i = 0; i < d; ++i) cat[d + i] = r_out[i] * h[i];
  for (int o = 0; o < d; ++o)
    c_out[o] = std::tanh(dot(wh + static_cast<size_t>(o) * 2 * d, cat, 2 * d) + bh[o]);
  for (int i = 0; i < d; ++i) out[i] = z_out[i] * h[i] + (real(1) - z_out[i]) * c_out[i];
}

}  // namespace kern

// ----------------------------- taped ops -----------------------------

namespace {

// Accumulates g into parent grad when the parent participates in the tape.
inline bool wants_grad(const NodePtr& p) { return p && p->requires_grad; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    fail(ErrorKind::invalid_argument,
         "matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
             shape_str(b.shape()));
  std::vector<real> out(static_cast<size_t>(m) * n);
  kern::mm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  NodePtr pa = a.node_ptr(), pb = b.node_ptr();
  return make_op("matmul", {m, n}, std::move(out), {pa, pb},
                 [pa, pb, m, k, n](Node& self) {
                   const real* g = self.grad.data();
                   if (wants_grad(pa))  // dA += g · B^T
                     kern::mm_nt_acc(g, pb->value.data(), pa->grad.data(), m, n, k);
                   if (wants_grad(pb))  // dB += A^T · g
                     kern::mm_tn_acc(pa->value.data(), g, pb->grad.data(), m, k, n);
                 });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (k != b.dim(1))
    fail(ErrorKind::invalid_argument,
         "matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) +
             " vs " + shape_str(b.shape()));
  std::vector<real> out(static_cast<size_t>(m) * n);
  kern::mm_nt(a.values().data(), b.values().data(), out.data(), m, k, n);
  NodePtr pa = a.node_ptr(), pb = b.node_ptr();
  return make_op("matmul_nt", {m, n}, std::move(out), {pa, pb},
                 [pa, pb, m, k, n](Node& self) {
                   const real* g = self.grad.data();
                   if (wants_grad(pa))  // dA += g · B
                     kern::mm_nn_acc(g, pb->value.data(), pa->grad.data(), m, n, k);
                   if (wants_grad(pb))  // dB += g^T · A
                     kern::mm_tn_acc(g, pa->value.data(), pb->grad.data(), m, n, k);
                 });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<real> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  NodePtr pa = a.node_ptr(), pb = b.node_ptr();
  return make_op("add", a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& self) {
    if (wants_grad(pa))
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    if (wants_grad(pb))
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<real> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  NodePtr pa = a.node_ptr(), pb = b.node_ptr();
  return make_op("sub", a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& self) {
    if (wants_grad(pa))
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    if (wants_grad(pb))
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<real> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  NodePtr pa = a.node_ptr(), pb = b.node_ptr();
  return make_op("mul", a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& self) {
    if (wants_grad(pa))
      for (size_t i = 0; i < self.grad.size(); ++i)
        pa->grad[i] += self.grad[i] * pb->value[i];
    if (wants_grad(pb))
      for (size_t i = 0; i < self.grad.size(); ++i)
        pb->grad[i] += self.grad[i] * pa->value[i];
  });
}

Tensor scale(const Tensor& a, real c) {
  std::vector<real> out(a.values().begin(), a.values().end());
  for (real& x : out) x *= c;
  NodePtr pa = a.node_ptr();
  return make_op("scale", a.shape(), std::move(out), {pa}, [pa, c](Node& self) {
    if (wants_grad(pa))
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += c * self.grad[i];
  });
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  require_2d(a, "add_rowvec");
  if (v.ndim() != 1 || v.dim(0) != a.dim(1))
    fail(ErrorKind::invalid_argument,
         "add_rowvec: vector " + shape_str(v.shape()) + " does not broadcast to " +
             shape_str(a.shape()));
  int m = a.dim(0), n = a.dim(1);
  std::vector<real> out(a.values().begin(), a.values().end());
  auto vv = v.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] += vv[static_cast<size_t>(j)];
  NodePtr pa = a.node_ptr(), pv = v.node_ptr();
  return make_op("add_rowvec", a.shape(), std::move(out), {pa, pv},
                 [pa, pv, m, n](Node& self) {
                   if (wants_grad(pa))
                     for (size_t i = 0; i < self.grad.size(); ++i)
                       pa->grad[i] += self.grad[i];
                   if (wants_grad(pv))
                     for (int i = 0; i < m; ++i)
                       for (int j = 0; j < n; ++j)
                         pv->grad[static_cast<size_t>(j)] +=
                             self.grad[static_cast<size_t>(i) * n + j];
                 });
}

Tensor tanh_t(const Tensor& a) {
  std::vector<real> out(a.values().begin(), a.values().end());
  for (real& x : out) x = std::tanh(x);
  NodePtr pa = a.node_ptr();
  return make_op("tanh", a.shape(), std::move(out), {pa}, [pa](Node& self) {
    if (!wants_grad(pa)) return;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      real y = self.value[i];
      pa->grad[i] += self.grad[i] * (real(1) - y * y);
    }
  });
}

Tensor sigmoid_t(const Tensor& a) {
  std::vector<real> out(a.values().begin(), a.values().end());
  for (real& x : out) x = sigmoid_scalar(x);
  NodePtr pa = a.node_ptr();
  return make_op("sigmoid", a.shape(), std::move(out), {pa}, [pa](Node& self) {
    if (!wants_grad(pa)) return;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      real y = self.value[i];
      pa->grad[i] += self.grad[i] * y * (real(1) - y);
    }
  });
}

Tensor exp_t(const Tensor& a) {
  std::vector<real> out(a.values().begin(), a.values().end());
  for (real& x : out) x = std::exp(x);
  NodePtr pa = a.node_ptr();
  return make_op("exp", a.shape(), std::move(out), {pa}, [pa](Node& self) {
    if (!wants_grad(pa)) return;
    for (size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += self.grad[i] * self.value[i];
  });
}

Tensor log_t(const Tensor& a) {
  std::vector<real> out(a.values().begin(), a.values().end());
  for (real& x : out) x = std::log(x);
  NodePtr pa = a.node_ptr();
  return make_op("log", a.shape(), std::move(out), {pa}, [pa](Node& self) {
    if (!wants_grad(pa)) return;
    for (size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += self.grad[i] / pa->value[i];
  });
}

Tensor clamp(const Tensor& a, real lo, real hi) {
  std::vector<real> out(a.values().begin(), a.values().end());
  for (real& x : out) x = std::min(std::max(x, lo), hi);
  NodePtr pa = a.node_ptr();
  return make_op("clamp", a.shape(), std::move(out), {pa}, [pa, lo, hi](Node& self) {
    if (!wants_grad(pa)) return;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      real x = pa->value[i];
      if (x > lo && x < hi) pa->grad[i] += self.grad[i];
    }
  });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "minimum");
  std::vector<real> out(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], bv[i]);
  NodePtr pa = a.node_ptr(), pb = b.node_ptr();
  return make_op("minimum", a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) {
      bool take_a = pa->value[i] <= pb->value[i];
      if (take_a) {
        if (wants_grad(pa)) pa->grad[i] += self.grad[i];
      } else {
        if (wants_grad(pb)) pb->grad[i] += self.grad[i];
      }
    }
  });
}

Tensor sum(const Tensor& a) {
  real s = 0;
  for (real x : a.values()) s += x;
  NodePtr pa = a.node_ptr();
  return make_op("sum", {1}, {s}, {pa}, [pa](Node& self) {
    if (!wants_grad(pa)) return;
    real g = self.grad[0];
    for (real& gx : pa->grad) gx += g;
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0)
    fail(ErrorKind::invalid_argument, "mean: empty tensor");
  real s = 0;
  for (real x : a.values()) s += x;
  real n = static_cast<real>(a.size());
  NodePtr pa = a.node_ptr();
  return make_op("mean", {1}, {s / n}, {pa}, [pa, n](Node& self) {
    if (!wants_grad(pa)) return;
    real g = self.grad[0] / n;
    for (real& gx : pa->grad) gx += g;
  });
}

Tensor row_sums(const Tensor& a) {
  require_2d(a, "row_sums");
  int m = a.dim(0), n = a.dim(1);
  std::vector<real> out(static_cast<size_t>(m), real(0));
  auto av = a.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(i)] += av[static_cast<size_t>(i) * n + j];
  NodePtr pa = a.node_ptr();
  return make_op("row_sums", {m}, std::move(out), {pa}, [pa, m, n](Node& self) {
    if (!wants_grad(pa)) return;
    for (int i = 0; i < m; ++i) {
      real g = self.grad[static_cast<size_t>(i)];
      for (int j = 0; j < n; ++j) pa->grad[static_cast<size_t>(i) * n + j] += g;
    }
  });
}

Tensor softmax_rows(const Tensor& a) {
  require_2d(a, "softmax_rows");
  int m = a.dim(0), n = a.dim(1);
  std::vector<real> out(a.values().begin(), a.values().end());
  for (int i = 0; i < m; ++i)
    kern::softmax_inplace(out.data() + static_cast<size_t>(i) * n, n);
  NodePtr pa = a.node_ptr();
  return make_op("softmax_rows", a.shape(), std::move(out), {pa},
                 [pa, m, n](Node& self) {
                   if (!wants_grad(pa)) return;
                   for (int i = 0; i < m; ++i) {
                     const real* y = self.value.data() + static_cast<size_t>(i) * n;
                     const real* g = self.grad.data() + static_cast<size_t>(i) * n;
                     real dot_gy = 0;
                     for (int j = 0; j < n; ++j) dot_gy += g[j] * y[j];
                     real* da = pa->grad.data() + static_cast<size_t>(i) * n;
                     for (int j = 0; j < n; ++j) da[j] += y[j] * (g[j] - dot_gy);
                   }
                 });
}

Tensor log_softmax_rows(const Tensor& a) {
  require_2d(a, "log_softmax_rows");
  int m = a.dim(0), n = a.dim(1);
  std::vector<real> out(a.values().begin(), a.values().end());
  for (int i = 0; i < m; ++i) {
    real* row = out.data() + static_cast<size_t>(i) * n;
    real lse = kern::log_sum_exp(row, n);
    for (int j = 0; j < n; ++j) row[j] -= lse;
  }
  NodePtr pa = a.node_ptr();
  return make_op("log_softmax_rows", a.shape(), std::move(out), {pa},
                 [pa, m, n](Node& self) {
                   if (!wants_grad(pa)) return;
                   for (int i = 0; i < m; ++i) {
                     const real* y = self.value.data() + static_cast<size_t>(i) * n;
                     const real* g = self.grad.data() + static_cast<size_t>(i) * n;
                     real gsum = 0;
                     for (int j = 0; j < n; ++j) gsum += g[j];
                     real* da = pa->grad.data() + static_cast<size_t>(i) * n;
                     for (int j = 0; j < n; ++j) da[j] += g[j] - std::exp(y[j]) * gsum;
                   }
                 });
}

Tensor pick_per_row(const Tensor& a, const std::vector<int>& cols) {
  require_2d(a, "pick_per_row");
  int m = a.dim(0), n = a.dim(1);
  if (static_cast<int>(cols.size()) != m)
    fail(ErrorKind::invalid_argument, "pick_per_row: index count mismatch");
  std::vector<real> out(static_cast<size_t>(m));
  auto av = a.values();
  for (int i = 0; i < m; ++i) {
    int c = cols[static_cast<size_t>(i)];
    if (c < 0 || c >= n)
      fail(ErrorKind::invalid_argument,
           "pick_per_row: column " + std::to_string(c) + " out of range 0.." +
               std::to_string(n - 1));
    out[static_cast<size_t>(i)] = av[static_cast<size_t>(i) * n + c];
  }
  NodePtr pa = a.node_ptr();
  return make_op("pick_per_row", {m}, std::move(out), {pa},
                 [pa, cols, n](Node& self) {
                   if (!wants_grad(pa)) return;
                   for (size_t i = 0; i < cols.size(); ++i)
                     pa->grad[i * n + static_cast<size_t>(cols[i])] += self.grad[i];
                 });
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  require_2d(table, "gather_rows");
  int v = table.dim(0), d = table.dim(1);
  int n = static_cast<int>(ids.size());
  std::vector<real> out(static_cast<size_t>(n) * d);
  auto tv = table.values();
  for (int i = 0; i < n; ++i) {
    int id = ids[static_cast<size_t>(i)];
    if (id < 0 || id >= v)
      fail(ErrorKind::invalid_argument,
           "gather_rows: id " + std::to_string(id) + " out of range for vocabulary " +
               std::to_string(v));
    std::copy(tv.begin() + static_cast<size_t>(id) * d,
              tv.begin() + static_cast<size_t>(id + 1) * d,
              out.begin() + static_cast<size_t>(i) * d);
  }
  NodePtr pt = table.node_ptr();
  return make_op("gather_rows", {n, d}, std::move(out), {pt},
                 [pt, ids, d](Node& self) {
                   if (!wants_grad(pt)) return;
                   for (size_t i = 0; i < ids.size(); ++i) {
                     real* dst = pt->grad.data() + static_cast<size_t>(ids[i]) * d;
                     const real* g = self.grad.data() + i * d;
                     for (int e = 0; e < d; ++e) dst[e] += g[e];
                   }
                 });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_2d(a, "concat_cols");
  require_2d(b, "concat_cols");
  if (a.dim(0) != b.dim(0))
    fail(ErrorKind::invalid_argument,
         "concat_cols: row counts disagree, " + shape_str(a.shape()) + " vs " +
             shape_str(b.shape()));
  int m = a.dim(0), na = a.dim(1), nb = b.dim(1);
  std::vector<real> out(static_cast<size_t>(m) * (na + nb));
  auto av = a.values(), bv = b.values();
  for (int i = 0; i < m; ++i) {
    std::copy(av.begin() + static_cast<size_t>(i) * na,
              av.begin() + static_cast<size_t>(i + 1) * na,
              out.begin() + static_cast<size_t>(i) * (na + nb));
    std::copy(bv.begin() + static_cast<size_t>(i) * nb,
              bv.begin() + static_cast<size_t>(i + 1) * nb,
              out.begin() + static_cast<size_t>(i) * (na + nb) + na);
  }
  NodePtr pa = a.node_ptr(), pb = b.node_ptr();
  return make_op("concat_cols", {m, na + nb}, std::move(out), {pa, pb},
                 [pa, pb, m, na, nb](Node& self) {
                   for (int i = 0; i < m; ++i) {
                     const real* g = self.grad.data() + static_cast<size_t>(i) * (na + nb);
                     if (wants_grad(pa)) {
                       real* da = pa->grad.data() + static_cast<size_t>(i) * na;
                       for (int j = 0; j < na; ++j) da[j] += g[j];
                     }
                     if (wants_grad(pb)) {
                       real* db = pb->grad.data() + static_cast<size_t>(i) * nb;
                       for (int j = 0; j < nb; ++j) db[j] += g[na + j];
                     }
                   }
                 });
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  require_2d(a, "slice_cols");
  int m = a.dim(0), n = a.dim(1);
  if (c0 < 0 || c1 > n || c0 >= c1)
    fail(ErrorKind::invalid_argument, "slice_cols: bad range");
  int w = c1 - c0;
  std::vector<real> out(static_cast<size_t>(m) * w);
  auto av = a.values();
  for (int i = 0; i < m; ++i)
    std::copy(av.begin() + static_cast<size_t>(i) * n + c0,
              av.begin() + static_cast<size_t>(i) * n + c1,
              out.begin() + static_cast<size_t>(i) * w);
  NodePtr pa = a.node_ptr();
  return make_op("slice_cols", {m, w}, std::move(out), {pa},
                 [pa, m, n, c0, w](Node& self) {
                   if (!wants_grad(pa)) return;
                   for (int i = 0; i < m; ++i) {
                     const real* g = self.grad.data() + static_cast<size_t>(i) * w;
                     real* da = pa->grad.data() + static_cast<size_t>(i) * n + c0;
                     for (int j = 0; j < w; ++j) da[j] += g[j];
                   }
                 });
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  require_2d(a, "slice_rows");
  int m = a.dim(0), n = a.dim(1);
  if (r0 < 0 || r1 > m || r0 >= r1)
    fail(ErrorKind::invalid_argument, "slice_rows: bad range");
  int h = r1 - r0;
  std::vector<real> out(a.values().begin() + static_cast<size_t>(r0) * n,
                        a.values().begin() + static_cast<size_t>(r1) * n);
  NodePtr pa = a.node_ptr();
  return make_op("slice_rows", {h, n}, std::move(out), {pa},
                 [pa, r0, n](Node& self) {
                   if (!wants_grad(pa)) return;
                   real* da = pa->grad.data() + static_cast<size_t>(r0) * n;
                   for (size_t i = 0; i < self.grad.size(); ++i) da[i] += self.grad[i];
                 });
}

Tensor interleave_rows(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "interleave_rows");
  require_2d(a, "interleave_rows");
  int t = a.dim(0), d = a.dim(1);
  std::vector<real> out(static_cast<size_t>(2 * t) * d);
  auto av = a.values(), bv = b.values();
  for (int i = 0; i < t; ++i) {
    std::copy(av.begin() + static_cast<size_t>(i) * d,
              av.begin() + static_cast<size_t>(i + 1) * d,
              out.begin() + static_cast<size_t>(2 * i) * d);
    std::copy(bv.begin() + static_cast<size_t>(i) * d,
              bv.begin() + static_cast<size_t>(i + 1) * d,
              out.begin() + static_cast<size_t>(2 * i + 1) * d);
  }
  NodePtr pa = a.node_ptr(), pb = b.node_ptr();
  return make_op("interleave_rows", {2 * t, d}, std::move(out), {pa, pb},
                 [pa, pb, t, d](Node& self) {
                   for (int i = 0; i < t; ++i) {
                     if (wants_grad(pa)) {
                       const real* g = self.grad.data() + static_cast<size_t>(2 * i) * d;
                       real* da = pa->grad.data() + static_cast<size_t>(i) * d;
                       for (int e = 0; e < d; ++e) da[e] += g[e];
                     }
                     if (wants_grad(pb)) {
                       const real* g = self.grad.data() + static_cast<size_t>(2 * i + 1) * d;
                       real* db = pb->grad.data() + static_cast<size_t>(i) * d;
                       for (int e = 0; e < d; ++e) db[e] += g[e];
                     }
                   }
                 });
}

Tensor take_rows_stride2(const Tensor& a, int offset) {
  require_2d(a, "take_rows_stride2");
  if (offset != 0 && offset != 1)
    fail(ErrorKind::invalid_argument, "take_rows_stride2: offset must be 0 or 1");
  int m = a.dim(0), d = a.dim(1);
  int t = (m - offset + 1) / 2;
  std::vector<real> out(static_cast<size_t>(t) * d);
  auto av = a.values();
  for (int i = 0; i < t; ++i)
    std::copy(av.begin() + static_cast<size_t>(2 * i + offset) * d,
              av.begin() + static_cast<size_t>(2 * i + offset + 1) * d,
              out.begin() + static_cast<size_t>(i) * d);
  NodePtr pa = a.node_ptr();
  return make_op("take_rows_stride2", {t, d}, std::move(out), {pa},
                 [pa, t, d, offset](Node& self) {
                   if (!wants_grad(pa)) return;
                   for (int i = 0; i < t; ++i) {
                     const real* g = self.grad.data() + static_cast<size_t>(i) * d;
                     real* da = pa->grad.data() + static_cast<size_t>(2 * i + offset) * d;
                     for (int e = 0; e < d; ++e) da[e] += g[e];
                   }
                 });
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  if (shape_size(shape) != a.size())
    fail(ErrorKind::invalid_argument,
         "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  std::vector<real> out(a.values().begin(), a.values().end());
  NodePtr pa = a.node_ptr();
  return make_op("reshape", std::move(shape), std::move(out), {pa}, [pa](Node& self) {
    if (!wants_grad(pa)) return;
    for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
  });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) fail(ErrorKind::invalid_argument, "stack_rows: empty list");
  int d = rows[0].dim(0);
  int n = static_cast<int>(rows.size());
  std::vector<real> out(static_cast<size_t>(n) * d);
  std::vector<NodePtr> parents;
  parents.reserve(rows.size());
  for (int i = 0; i < n; ++i) {
    if (rows[static_cast<size_t>(i)].ndim() != 1 ||
        rows[static_cast<size_t>(i)].dim(0) != d)
      fail(ErrorKind::invalid_argument, "stack_rows: rows must share one length");
    auto rv = rows[static_cast<size_t>(i)].values();
    std::copy(rv.begin(), rv.end(), out.begin() + static_cast<size_t>(i) * d);
    parents.push_back(rows[static_cast<size_t>(i)].node_ptr());
  }
  return make_op("stack_rows", {n, d}, std::move(out), parents, [d](Node& self) {
    for (size_t i = 0; i < self.parents.size(); ++i) {
      const NodePtr& p = self.parents[i];
      if (!wants_grad(p)) continue;
      const real* g = self.grad.data() + i * static_cast<size_t>(d);
      for (int e = 0; e < d; ++e) p->grad[static_cast<size_t>(e)] += g[e];
    }
  });
}

Tensor select_row(const Tensor& a, int row) {
  require_2d(a, "select_row");
  int m = a.dim(0), n = a.dim(1);
  if (row < 0 || row >= m)
    fail(ErrorKind::invalid_argument, "select_row: row out of range");
  std::vector<real> out(a.values().begin() + static_cast<size_t>(row) * n,
                        a.values().begin() + static_cast<size_t>(row + 1) * n);
  NodePtr pa = a.node_ptr();
  return make_op("select_row", {n}, std::move(out), {pa}, [pa, row, n](Node& self) {
    if (!wants_grad(pa)) return;
    real* da = pa->grad.data() + static_cast<size_t>(row) * n;
    for (int e = 0; e < n; ++e) da[e] += self.grad[static_cast<size_t>(e)];
  });
}

Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        int heads) {
  require_2d(q, "masked_attention");
  require_same_shape(q, k, "masked_attention");
  require_same_shape(q, v, "masked_attention");
  int t = q.dim(0), d = q.dim(1);
  if (heads < 1 || d % heads != 0)
    fail(ErrorKind::config, "masked_attention: width " + std::to_string(d) +
                                " not divisible by " + std::to_string(heads) +
                                " heads");
  int dh = d / heads;
  // probs stored per row t: heads*(t+1) weights, head-major
  std::vector<real> probs(static_cast<size_t>(heads) * t * (t + 1) / 2);
  std::vector<size_t> row_off(static_cast<size_t>(t));
  {
    size_t off = 0;
    for (int i = 0; i < t; ++i) {
      row_off[static_cast<size_t>(i)] = off;
      off += static_cast<size_t>(heads) * (i + 1);
    }
  }
  std::vector<real> out(static_cast<size_t>(t) * d);
  const real* kd = k.values().data();
  const real* vd = v.values().data();
  for (int i = 0; i < t; ++i)
    kern::attention_row(q.values().data() + static_cast<size_t>(i) * d, kd, vd, i,
                        d, heads, probs.data() + row_off[static_cast<size_t>(i)],
                        out.data() + static_cast<size_t>(i) * d);

  NodePtr pq = q.node_ptr(), pk = k.node_ptr(), pv = v.node_ptr();
  auto bw = [pq, pk, pv, t, d, heads, dh, probs = std::move(probs),
             row_off = std::move(row_off)](Node& self) {
    real inv = real(1) / std::sqrt(static_cast<real>(dh));
    std::vector<real> dp(static_cast<size_t>(t));
    std::vector<real> ds(static_cast<size_t>(t));
    for (int i = 0; i < t; ++i) {
      const real* g = self.grad.data() + static_cast<size_t>(i) * d;
      for (int h = 0; h < heads; ++h) {
        const real* p = probs.data() + row_off[static_cast<size_t>(i)] +
                        static_cast<size_t>(h) * (i + 1);
        const real* gh = g + static_cast<size_t>(h) * dh;
        // dp_j = <g_h, V_hj>;  dV_hj += p_j g_h
        real sum_pdp = 0;
        for (int j = 0; j <= i; ++j) {
          const real* vh = pv->value.data() + static_cast<size_t>(j) * d +
                           static_cast<size_t>(h) * dh;
          dp[static_cast<size_t>(j)] = kern::dot(gh, vh, dh);
          sum_pdp += p[j] * dp[static_cast<size_t>(j)];
          if (wants_grad(pv)) {
            real* dv = pv->grad.data() + static_cast<size_t>(j) * d +
                       static_cast<size_t>(h) * dh;
            for (int e = 0; e < dh; ++e) dv[e] += p[j] * gh[e];
          }
        }
        for (int j = 0; j <= i; ++j)
          ds[static_cast<size_t>(j)] = p[j] * (dp[static_cast<size_t>(j)] - sum_pdp);
        const real* qh = pq->value.data() + static_cast<size_t>(i) * d +
                         static_cast<size_t>(h) * dh;
        for (int j = 0; j <= i; ++j) {
          real s = ds[static_cast<size_t>(j)] * inv;
          if (wants_grad(pq)) {
            const real* kh = pk->value.data() + static_cast<size_t>(j) * d +
                             static_cast<size_t>(h) * dh;
            real* dq = pq->grad.data() + static_cast<size_t>(i) * d +
                       static_cast<size_t>(h) * dh;
            for (int e = 0; e < dh; ++e) dq[e] += s * kh[e];
          }
          if (wants_grad(pk)) {
            real* dk = pk->grad.data() + static_cast<size_t>(j) * d +
                       static_cast<size_t>(h) * dh;
            for (int e = 0; e < dh; ++e) dk[e] += s * qh[e];
          }
        }
      }
    }
  };
  return make_op("masked_attention", {t, d}, std::move(out), {pq, pk, pv},
                 std::move(bw));
}

Tensor causal_self_attention(const Tensor& x, int heads,
                             const AttentionParams& p) {
  require_2d(x, "causal_self_attention");
  if (x.dim(0) < 1)
    fail(ErrorKind::invalid_argument, "causal_self_attention: empty sequence");
  if (heads < 1 || x.dim(1) % heads != 0)
    fail(ErrorKind::config,
         "causal_self_attention: width " + std::to_string(x.dim(1)) +
             " not divisible by " + std::to_string(heads) + " heads");
  Tensor q = add_rowvec(matmul_nt(x, p.wq), p.bq);
  Tensor k = add_rowvec(matmul_nt(x, p.wk), p.bk);
  Tensor v = add_rowvec(matmul_nt(x, p.wv), p.bv);
  Tensor ctx = masked_attention(q, k, v, heads);
  return add_rowvec(matmul_nt(ctx, p.wo), p.bo);
}

Tensor gru_step(const Tensor& x, const Tensor& h, const GruParams& p) {
  if (x.ndim() != 1 || h.ndim() != 1 || x.dim(0) != h.dim(0))
    fail(ErrorKind::invalid_argument,
         "gru_step: x " + shape_str(x.shape()) + " and h " + shape_str(h.shape()) +
             " must be equal-length vectors");
  int d = x.dim(0);
  auto check_w = [&](const Tensor& w, const Tensor& b, const char* name) {
    if (w.ndim() != 2 || w.dim(0) != d || w.dim(1) != 2 * d || b.ndim() != 1 ||
        b.dim(0) != d)
      fail(ErrorKind::invalid_argument,
           std::string("gru_step: parameter ") + name + " has shape " +
               shape_str(w.shape()) + ", expected [" + std::to_string(d) + "x" +
               std::to_string(2 * d) + "]");
  };
  check_w(p.wz, p.bz, "wz");
  check_w(p.wr, p.br, "wr");
  check_w(p.wh, p.bh, "wh");

  std::vector<real> scratch(static_cast<size_t>(2 * d));
  std::vector<real> z(static_cast<size_t>(d)), r(static_cast<size_t>(d)),
      c(static_cast<size_t>(d)), out(static_cast<size_t>(d));
  kern::gru_row(x.values().data(), h.values().data(), p.wz.values().data(),
                p.bz.values().data(), p.wr.values().data(), p.br.values().data(),
                p.wh.values().data(), p.bh.values().data(), d, scratch.data(),
                z.data(), r.data(), c.data(), out.data());

  NodePtr px = x.node_ptr(), ph = h.node_ptr();
  NodePtr pwz = p.wz.node_ptr(), pbz = p.bz.node_ptr();
  NodePtr pwr = p.wr.node_ptr(), pbr = p.br.node_ptr();
  NodePtr pwh = p.wh.node_ptr(), pbh = p.bh.node_ptr();
  auto bw = [px, ph, pwz, pbz, pwr, pbr, pwh, pbh, d, z = std::move(z),
             r = std::move(r), c = std::move(c)](Node& self) {
    const real* g = self.grad.data();
    const real* xv = px->value.data();
    const real* hv = ph->value.data();
    std::vector<real> daz(static_cast<size_t>(d)), dar(static_cast<size_t>(d)),
        dac(static_cast<size_t>(d));
    std::vector<real> dcat(static_cast<size_t>(2 * d), real(0));
    std::vector<real> drh(static_cast<size_t>(d), real(0));

    // h' = z*h + (1-z)*c
    for (int i = 0; i < d; ++i) {
      real dz = g[i] * (hv[i] - c[static_cast<size_t>(i)]);
      real dc = g[i] * (real(1) - z[static_cast<size_t>(i)]);
      daz[static_cast<size_t>(i)] =
          dz * z[static_cast<size_t>(i)] * (real(1) - z[static_cast<size_t>(i)]);
      dac[static_cast<size_t>(i)] =
          dc * (real(1) - c[static_cast<size_t>(i)] * c[static_cast<size_t>(i)]);
      if (wants_grad(ph)) ph->grad[static_cast<size_t>(i)] += g[i] * z[static_cast<size_t>(i)];
    }

    // candidate: ac = wh·[x; r*h] + bh
    std::vector<real> cat2(static_cast<size_t>(2 * d));
    for (int i = 0; i < d; ++i) {
      cat2[static_cast<size_t>(i)] = xv[i];
      cat2[static_cast<size_t>(d + i)] = r[static_cast<size_t>(i)] * hv[i];
    }
    for (int o = 0; o < d; ++o) {
      real a = dac[static_cast<size_t>(o)];
      const real* w = pwh->value.data() + static_cast<size_t>(o) * 2 * d;
      if (wants_grad(pwh)) {
        real* dw = pwh->grad.data() + static_cast<size_t>(o) * 2 * d;
        for (int i = 0; i < 2 * d; ++i) dw[i] += a * cat2[static_cast<size_t>(i)];
      }
      if (wants_grad(pbh)) pbh->grad[static_cast<size_t>(o)] += a;
      for (int i = 0; i < 2 * d; ++i) dcat[static_cast<size_t>(i)] += a * w[i];
    }
    for (int i = 0; i < d; ++i) {
      if (wants_grad(px)) px->grad[static_cast<size_t>(i)] += dcat[static_cast<size_t>(i)];
      drh[static_cast<size_t>(i)] = dcat[static_cast<size_t>(d + i)];
    }
    std::vector<real> dr(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) {
      dr[static_cast<size_t>(i)] = drh[static_cast<size_t>(i)] * hv[i];
      if (wants_grad(ph))
        ph->grad[static_cast<size_t>(i)] += drh[static_cast<size_t>(i)] * r[static_cast<size_t>(i)];
      dar[static_cast<size_t>(i)] =
          dr[static_cast<size_t>(i)] * r[static_cast<size_t>(i)] *
          (real(1) - r[static_cast<size_t>(i)]);
    }

    // gates z and r share the [x; h] input
    std::vector<real> cat1(static_cast<size_t>(2 * d));
    for (int i = 0; i < d; ++i) {
      cat1[static_cast<size_t>(i)] = xv[i];
      cat1[static_cast<size_t>(d + i)] = hv[i];
    }
    auto gate_bw = [&](const std::vector<real>& da, const NodePtr& pw,
                       const NodePtr& pb) {
      for (int o = 0; o < d; ++o) {
        real a = da[static_cast<size_t>(o)];
        const real* w = pw->value.data() + static_cast<size_t>(o) * 2 * d;
        if (wants_grad(pw)) {
          real* dw = pw->grad.data() + static_cast<size_t>(o) * 2 * d;
          for (int i = 0; i < 2 * d; ++i) dw[i] += a * cat1[static_cast<size_t>(i)];
        }
        if (wants_grad(pb)) pb->grad[static_cast<size_t>(o)] += a;
        for (int i = 0; i < d; ++i) {
          if (wants_grad(px)) px->grad[static_cast<size_t>(i)] += a * w[i];
          if (wants_grad(ph)) ph->grad[static_cast<size_t>(i)] += a * w[d + i];
        }
      }
    };
    gate_bw(daz, pwz, pbz);
    gate_bw(dar, pwr, pbr);
  };
  return make_op("gru_step", {d}, std::move(out),
                 {px, ph, pwz, pbz, pwr, pbr, pwh, pbh}, std::move(bw));
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       real eps) {
  require_2d(x, "layer_norm_rows");
  int m = x.dim(0), n = x.dim(1);
  if (gain.ndim() != 1 || gain.dim(0) != n || bias.ndim() != 1 || bias.dim(0) != n)
    fail(ErrorKind::invalid_argument, "layer_norm_rows: gain/bias shape mismatch");
  std::vector<real> out(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    kern::layer_norm_row(x.values().data() + static_cast<size_t>(i) * n,
                         gain.values().data(), bias.values().data(),
                         out.data() + static_cast<size_t>(i) * n, n, eps);
  NodePtr px = x.node_ptr(), pg = gain.node_ptr(), pb = bias.node_ptr();
  auto bw = [px, pg, pb, m, n, eps](Node& self) {
    for (int i = 0; i < m; ++i) {
      const real* xr = px->value.data() + static_cast<size_t>(i) * n;
      const real* g = self.grad.data() + static_cast<size_t>(i) * n;
      real mu = 0;
      for (int j = 0; j < n; ++j) mu += xr[j];
      mu /= n;
      real var = 0;
      for (int j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
      var /= n;
      real inv = real(1) / std::sqrt(var + eps);

      real mean_dxhat = 0, mean_dxhat_xhat = 0;
      for (int j = 0; j < n; ++j) {
        real xhat = (xr[j] - mu) * inv;
        real dxhat = g[j] * pg->value[static_cast<size_t>(j)];
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xhat;
        if (wants_grad(pg)) pg->grad[static_cast<size_t>(j)] += g[j] * xhat;
        if (wants_grad(pb)) pb->grad[static_cast<size_t>(j)] += g[j];
      }
      mean_dxhat /= n;
      mean_dxhat_xhat /= n;
      if (wants_grad(px)) {
        real* dx = px->grad.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
          real xhat = (xr[j] - mu) * inv;
          real dxhat = g[j] * pg->value[static_cast<size_t>(j)];
          dx[j] += inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
        }
      }
    }
  };
  return make_op("layer_norm_rows", {m, n}, std::move(out), {px, pg, pb},
                 std::move(bw));
}

}  // namespace canav::nn
