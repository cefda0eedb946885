#pragma once

#include <vector>

#include "dadl/tensor.hpp"

namespace dadl {

// Differentiable tensor operations. Every op computes its forward result and,
// when a tape is supplied and any input carries a gradient, records the
// matching backward rule. Passing tape == nullptr runs pure inference.
//
// Broadcasting is deliberately limited to trailing-axis parameter vectors
// (add_bias) and leading-axis parameter blocks (add_broadcast); everything
// else requires exact shapes.

Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor sub(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor scale(const Tensor& a, double factor, Tape* tape = nullptr);

// x[..., d] + v[d]
Tensor add_bias(const Tensor& x, const Tensor& v, Tape* tape = nullptr);
// x[b, rest...] + p[rest...]
Tensor add_broadcast(const Tensor& x, const Tensor& p, Tape* tape = nullptr);

// a[m,k] * b[k,n]; backward dA = G·Bᵀ, dB = Aᵀ·G
Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
// a[B,m,k] * b[B,k,n] batch-wise
Tensor bmm(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

Tensor permute(const Tensor& x, const std::vector<int>& perm, Tape* tape = nullptr);
Tensor reshape(const Tensor& x, Shape new_shape, Tape* tape = nullptr);

Tensor relu(const Tensor& x, Tape* tape = nullptr);
// tanh-form approximation: 0.5·x·(1 + tanh(sqrt(2/pi)·(x + 0.044715·x^3)))
Tensor gelu(const Tensor& x, Tape* tape = nullptr);

// Max-subtracted along `axis`; outputs positive and sum to one.
Tensor softmax(const Tensor& x, int axis, Tape* tape = nullptr);

// Per-row normalization over the last axis, then affine by scale/offset[d].
Tensor layer_norm(const Tensor& x, const Tensor& scale, const Tensor& offset, double eps,
                  Tape* tape = nullptr);

// Per-sample normalization of channels-last x over (spatial, channels/groups)
// blocks. groups == 1 collapses to a per-sample layer norm over everything;
// groups == channels is instance normalization.
Tensor group_norm(const Tensor& x, const Tensor& scale, const Tensor& offset, int groups, double eps,
                  Tape* tape = nullptr);

struct BatchNormArgs {
    bool use_batch_stats = true;
    // new_running = momentum * old_running + (1 - momentum) * batch_moment
    double momentum = 0.9;
    bool update_running = true;
    double eps = 1e-5;
};

// Channels-last batch normalization. Batch statistics are computed over all
// leading axes; running buffers are updated eagerly (they are not recorded on
// the tape). With use_batch_stats == false the running buffers act as
// constants for both forward and backward.
Tensor batch_norm(const Tensor& x, const Tensor& scale, const Tensor& offset, Tensor& running_mean,
                  Tensor& running_var, const BatchNormArgs& args, Tape* tape = nullptr);

// Mean over the batch of smoothed negative log-likelihood. The target
// distribution is (1-s)·onehot(label) + s/num_classes·uniform.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels, double smoothing,
                     Tape* tape = nullptr);

// x[b,h,w,c] -> [b, th*tw, patch*patch*c] with th = (h-patch)/stride + 1.
Tensor extract_patches(const Tensor& x, int patch, int stride, Tape* tape = nullptr);

// x[b,h,w,cin], w[kh,kw,cin,cout], bias[cout]; zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad,
              Tape* tape = nullptr);

// tokens[b,T,d] with tok[d] prepended at position 0 of every sample.
Tensor prepend_token(const Tensor& tokens, const Tensor& tok, Tape* tape = nullptr);

// Mean over tokens 1..T of x[b,T+1,d] (classification token excluded).
Tensor mean_tokens_excluding_first(const Tensor& x, Tape* tape = nullptr);

// x[b,h,w,c] -> [b,c]
Tensor global_avg_pool(const Tensor& x, Tape* tape = nullptr);

Tensor sum_all(const Tensor& x, Tape* tape = nullptr);
Tensor mean_all(const Tensor& x, Tape* tape = nullptr);

namespace detail {
// c[m,n] (+)= a[m,k]·b[k,n]
void gemm_nn(int m, int k, int n, const double* a, const double* b, double* c, bool accumulate);
// c[m,n] (+)= a[m,k]·b[n,k]ᵀ
void gemm_nt(int m, int k, int n, const double* a, const double* b, double* c, bool accumulate);
// c[m,n] (+)= a[k,m]ᵀ·b[k,n]
void gemm_tn(int m, int k, int n, const double* a, const double* b, double* c, bool accumulate);
}  // namespace detail

}  // namespace dadl
