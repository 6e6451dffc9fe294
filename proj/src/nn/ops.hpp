#pragma once

#include <vector>

#include "nn/tensor.hpp"

namespace canav::nn {

// ----------------------------- kernels -----------------------------
//
// Raw-array routines shared between the taped ops and the incremental
// no-grad inference path. Both paths must produce bit-identical values, so
// every accumulation order lives here exactly once.
namespace kern {

real dot(const real* a, const real* b, int n);

// c = a[m×k] · b[k×n]
void mm_nn(const real* a, const real* b, real* c, int m, int k, int n);
// c += a[m×k] · b[k×n]
void mm_nn_acc(const real* a, const real* b, real* c, int m, int k, int n);
// c = a[m×k] · b[n×k]^T
void mm_nt(const real* a, const real* b, real* c, int m, int k, int n);
// c += a[m×k] · b[n×k]^T
void mm_nt_acc(const real* a, const real* b, real* c, int m, int k, int n);
// c[k×n] += a[m×k]^T · b[m×n]
void mm_tn_acc(const real* a, const real* b, real* c, int m, int k, int n);

// y = w[out×in] · x + bias (bias may be null)
void linear_nt(const real* w, const real* bias, const real* x, real* y, int out,
               int in);

// In-place max-subtracted softmax over n entries.
void softmax_inplace(real* x, int n);
// log(sum exp(x)) with max subtraction.
real log_sum_exp(const real* x, int n);

void layer_norm_row(const real* x, const real* gain, const real* bias, real* y,
                    int n, real eps);

// One causal-attention output row: query q (length d, laid out as `heads`
// contiguous head slices), keys/values rows 0..t_incl (each length d).
// probs_out, when non-null, receives heads*(t_incl+1) attention weights
// (head-major).
void attention_row(const real* q, const real* keys, const real* values,
                   int t_incl, int d, int heads, real* probs_out, real* out);

// One GRU update. x, h, out length d; wz/wr/wh are [d×2d], gates consume
// [x; h] (candidate consumes [x; r⊙h]). scratch must hold 3d reals.
void gru_row(const real* x, const real* h, const real* wz, const real* bz,
             const real* wr, const real* br, const real* wh, const real* bh,
             int d, real* scratch, real* z_out, real* r_out, real* c_out,
             real* out);

}  // namespace kern

// ----------------------------- taped ops -----------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [m×k]·[k×n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m×k]·[n×k]^T

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real c);
Tensor add_rowvec(const Tensor& a, const Tensor& v);  // [m×n] + [n] broadcast

Tensor tanh_t(const Tensor& a);
Tensor sigmoid_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor clamp(const Tensor& a, real lo, real hi);
Tensor minimum(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor row_sums(const Tensor& a);  // [m×n] -> [m]

Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);

// [m×n], per-row column index -> [m]
Tensor pick_per_row(const Tensor& a, const std::vector<int>& cols);
// [V×d], row ids -> [N×d]; gradient scatters into the table
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor slice_rows(const Tensor& a, int r0, int r1);
// rows a0,b0,a1,b1,... -> [2T×d]
Tensor interleave_rows(const Tensor& a, const Tensor& b);
// rows offset, offset+2, ... -> [T×d]
Tensor take_rows_stride2(const Tensor& a, int offset);
Tensor reshape(const Tensor& a, std::vector<int> shape);
// stack N vectors [d] into [N×d]
Tensor stack_rows(const std::vector<Tensor>& rows);
// view one row of [m×n] as [n]
Tensor select_row(const Tensor& a, int row);

// Multi-head causal attention core on already-projected q/k/v [T×d];
// position t attends to positions <= t, scaled by 1/sqrt(d/heads).
Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        int heads);

struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // w* are [d×d], b* are [d]
};

// Full block input->output: projections + masked_attention + output proj.
Tensor causal_self_attention(const Tensor& x, int heads,
                             const AttentionParams& p);

struct GruParams {
  Tensor wz, bz, wr, br, wh, bh;  // w* are [d×2d], b* are [d]
};

// One gated-recurrent-unit update; x and h are [d].
Tensor gru_step(const Tensor& x, const Tensor& h, const GruParams& p);

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       real eps = real(1e-5));

}  // namespace canav::nn
