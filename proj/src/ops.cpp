#include "dadl/ops.hpp"
#include <vector>

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace dadl {

namespace detail {

void gemm_nn(int m, int k, int n, const double* a, const double* b, double* c, bool accumulate) {
    if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt(int m, int k, int n, const double* a, const double* b, double* c, bool accumulate) {
    // Streaming form beats the naive row-dot loop, so transpose b first.
    std::vector<double> bt(static_cast<std::size_t>(k) * n);
    for (int j = 0; j < n; ++j) {
        const double* brow = b + static_cast<std::size_t>(j) * k;
        for (int p = 0; p < k; ++p) bt[static_cast<std::size_t>(p) * n + j] = brow[p];
    }
    gemm_nn(m, k, n, a, bt.data(), c, accumulate);
}

void gemm_tn(int m, int k, int n, const double* a, const double* b, double* c, bool accumulate) {
    if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, 0.0);
    for (int p = 0; p < k; ++p) {
        const double* arow = a + static_cast<std::size_t>(p) * m;
        const double* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double av = arow[i];
            double* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

namespace {

bool tracked(const Tape* tape, std::initializer_list<const Tensor*> inputs) {
    if (!tape) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

std::int64_t prefix_product(const Shape& s, int end) {
    std::int64_t p = 1;
    for (int i = 0; i < end; ++i) p *= s[static_cast<std::size_t>(i)];
    return p;
}

std::int64_t suffix_product(const Shape& s, int begin) {
    std::int64_t p = 1;
    for (int i = begin; i < static_cast<int>(s.size()); ++i) p *= s[static_cast<std::size_t>(i)];
    return p;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    const std::int64_t n = a.size();
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    if (tracked(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record([a = a, b = b, out]() mutable {
            const double* g = out.grad();
            const std::int64_t m = out.size();
            if (a.requires_grad()) {
                double* ga = a.grad();
                for (std::int64_t i = 0; i < m; ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                double* gb = b.grad();
                for (std::int64_t i = 0; i < m; ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b, Tape* tape) {
    require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    const std::int64_t n = a.size();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
    if (tracked(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record([a = a, b = b, out]() mutable {
            const double* g = out.grad();
            const std::int64_t m = out.size();
            if (a.requires_grad()) {
                double* ga = a.grad();
                for (std::int64_t i = 0; i < m; ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                double* gb = b.grad();
                for (std::int64_t i = 0; i < m; ++i) gb[i] -= g[i];
            }
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
    require_same_shape(a, b, "mul");
    Tensor out(a.shape());
    const std::int64_t n = a.size();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
    if (tracked(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record([a = a, b = b, out]() mutable {
            const double* g = out.grad();
            const std::int64_t m = out.size();
            if (a.requires_grad()) {
                double* ga = a.grad();
                const double* pb = b.data();
                for (std::int64_t i = 0; i < m; ++i) ga[i] += g[i] * pb[i];
            }
            if (b.requires_grad()) {
                double* gb = b.grad();
                const double* pa = a.data();
                for (std::int64_t i = 0; i < m; ++i) gb[i] += g[i] * pa[i];
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& a, double factor, Tape* tape) {
    Tensor out(a.shape());
    const std::int64_t n = a.size();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] * factor;
    if (tracked(tape, {&a})) {
        out.set_requires_grad(true);
        tape->record([a = a, out, factor]() mutable {
            const double* g = out.grad();
            double* ga = a.grad();
            const std::int64_t m = out.size();
            for (std::int64_t i = 0; i < m; ++i) ga[i] += g[i] * factor;
        });
    }
    return out;
}

Tensor add_bias(const Tensor& x, const Tensor& v, Tape* tape) {
    if (v.rank() != 1 || x.rank() < 1 || x.dim(x.rank() - 1) != v.dim(0)) {
        throw DimensionError("add_bias: vector " + shape_str(v.shape()) + " does not match last axis of " +
                             shape_str(x.shape()));
    }
    const std::int64_t d = v.size();
    const std::int64_t rows = x.size() / d;
    Tensor out(x.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* px = x.data() + r * d;
        double* po = out.data() + r * d;
        for (std::int64_t j = 0; j < d; ++j) po[j] = px[j] + v[j];
    }
    if (tracked(tape, {&x, &v})) {
        out.set_requires_grad(true);
        tape->record([x = x, v = v, out, rows, d]() mutable {
            const double* g = out.grad();
            if (x.requires_grad()) {
                double* gx = x.grad();
                const std::int64_t m = out.size();
                for (std::int64_t i = 0; i < m; ++i) gx[i] += g[i];
            }
            if (v.requires_grad()) {
                double* gv = v.grad();
                for (std::int64_t r = 0; r < rows; ++r) {
                    const double* row = g + r * d;
                    for (std::int64_t j = 0; j < d; ++j) gv[j] += row[j];
                }
            }
        });
    }
    return out;
}

Tensor add_broadcast(const Tensor& x, const Tensor& p, Tape* tape) {
    if (x.rank() < 2 || static_cast<int>(p.rank()) != x.rank() - 1) {
        throw DimensionError("add_broadcast: rank mismatch " + shape_str(x.shape()) + " vs " + shape_str(p.shape()));
    }
    for (int i = 1; i < x.rank(); ++i) {
        if (x.dim(i) != p.dim(i - 1)) {
            throw DimensionError("add_broadcast: trailing shape mismatch " + shape_str(x.shape()) + " vs " +
                                 shape_str(p.shape()));
        }
    }
    const std::int64_t b = x.dim(0);
    const std::int64_t block = p.size();
    Tensor out(x.shape());
    for (std::int64_t i = 0; i < b; ++i) {
        const double* px = x.data() + i * block;
        double* po = out.data() + i * block;
        for (std::int64_t j = 0; j < block; ++j) po[j] = px[j] + p[j];
    }
    if (tracked(tape, {&x, &p})) {
        out.set_requires_grad(true);
        tape->record([x = x, p = p, out, b, block]() mutable {
            const double* g = out.grad();
            if (x.requires_grad()) {
                double* gx = x.grad();
                const std::int64_t m = out.size();
                for (std::int64_t i = 0; i < m; ++i) gx[i] += g[i];
            }
            if (p.requires_grad()) {
                double* gp = p.grad();
                for (std::int64_t i = 0; i < b; ++i) {
                    const double* row = g + i * block;
                    for (std::int64_t j = 0; j < block; ++j) gp[j] += row[j];
                }
            }
        });
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out(Shape{m, n});
    detail::gemm_nn(m, k, n, a.data(), b.data(), out.data(), false);
    if (tracked(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record([a = a, b = b, out, m, k, n]() mutable {
            const double* g = out.grad();
            if (a.requires_grad()) detail::gemm_nt(m, n, k, g, b.data(), a.grad(), true);
            if (b.requires_grad()) detail::gemm_tn(k, m, n, a.data(), g, b.grad(), true);
        });
    }
    return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
        throw DimensionError("bmm: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const int batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    Tensor out(Shape{batch, m, n});
    const std::int64_t sa = static_cast<std::int64_t>(m) * k;
    const std::int64_t sb = static_cast<std::int64_t>(k) * n;
    const std::int64_t so = static_cast<std::int64_t>(m) * n;
    for (int i = 0; i < batch; ++i) {
        detail::gemm_nn(m, k, n, a.data() + i * sa, b.data() + i * sb, out.data() + i * so, false);
    }
    if (tracked(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record([a = a, b = b, out, batch, m, k, n, sa, sb, so]() mutable {
            const double* g = out.grad();
            for (int i = 0; i < batch; ++i) {
                if (a.requires_grad()) detail::gemm_nt(m, n, k, g + i * so, b.data() + i * sb, a.grad() + i * sa, true);
                if (b.requires_grad()) detail::gemm_tn(k, m, n, a.data() + i * sa, g + i * so, b.grad() + i * sb, true);
            }
        });
    }
    return out;
}

namespace {

std::vector<std::int64_t> strides_of(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
        st[static_cast<std::size_t>(i)] = st[static_cast<std::size_t>(i + 1)] * s[static_cast<std::size_t>(i + 1)];
    }
    return st;
}

// out flat index -> in flat index map for a permutation
void permute_copy(const Tensor& in, Tensor& out, const std::vector<int>& perm, bool add_to_out) {
    const Shape& ishape = in.shape();
    const auto istrides = strides_of(ishape);
    const Shape& oshape = out.shape();
    const int r = static_cast<int>(ishape.size());
    std::vector<int> idx(static_cast<std::size_t>(r), 0);
    const std::int64_t n = in.size();
    const double* src = in.data();
    double* dst = out.data();
    // walk output in order, compute source index
    for (std::int64_t o = 0; o < n; ++o) {
        std::int64_t src_flat = 0;
        for (int i = 0; i < r; ++i) {
            src_flat += static_cast<std::int64_t>(idx[static_cast<std::size_t>(i)]) *
                        istrides[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        }
        if (add_to_out) {
            dst[o] += src[src_flat];
        } else {
            dst[o] = src[src_flat];
        }
        for (int i = r - 1; i >= 0; --i) {
            if (++idx[static_cast<std::size_t>(i)] < oshape[static_cast<std::size_t>(i)]) break;
            idx[static_cast<std::size_t>(i)] = 0;
        }
    }
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<int>& perm, Tape* tape) {
    const int r = x.rank();
    if (static_cast<int>(perm.size()) != r) throw DimensionError("permute: perm rank mismatch");
    std::vector<bool> seen(static_cast<std::size_t>(r), false);
    Shape oshape(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        const int p = perm[static_cast<std::size_t>(i)];
        if (p < 0 || p >= r || seen[static_cast<std::size_t>(p)]) throw DimensionError("permute: invalid permutation");
        seen[static_cast<std::size_t>(p)] = true;
        oshape[static_cast<std::size_t>(i)] = x.dim(p);
    }
    Tensor out(oshape);
    permute_copy(x, out, perm, false);
    if (tracked(tape, {&x})) {
        out.set_requires_grad(true);
        std::vector<int> inv(static_cast<std::size_t>(r));
        for (int i = 0; i < r; ++i) inv[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;
        tape->record([x = x, out, inv]() mutable {
            // dL/dx = permute(dL/dout, inverse perm), accumulated
            Tensor gt(out.shape());
            std::copy(out.grad(), out.grad() + out.size(), gt.data());
            Tensor gx(x.shape());
            permute_copy(gt, gx, inv, false);
            double* dst = x.grad();
            for (std::int64_t i = 0; i < x.size(); ++i) dst[i] += gx[i];
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape new_shape, Tape* tape) {
    Tensor out = x.view(std::move(new_shape));
    if (tracked(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x = x, out]() mutable {
            const double* g = out.grad();
            double* gx = x.grad();
            for (std::int64_t i = 0; i < x.size(); ++i) gx[i] += g[i];
        });
    }
    return out;
}

Tensor relu(const Tensor& x, Tape* tape) {
    Tensor out(x.shape());
    const std::int64_t n = x.size();
    for (std::int64_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    if (tracked(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x = x, out]() mutable {
            const double* g = out.grad();
            double* gx = x.grad();
            const double* px = x.data();
            for (std::int64_t i = 0; i < x.size(); ++i) {
                if (px[i] > 0.0) gx[i] += g[i];
            }
        });
    }
    return out;
}

namespace {
constexpr double kGeluCoeff = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / M_PI);
}  // namespace

Tensor gelu(const Tensor& x, Tape* tape) {
    Tensor out(x.shape());
    const std::int64_t n = x.size();
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = x[i];
        const double u = kSqrt2OverPi * (v + kGeluCoeff * v * v * v);
        out[i] = 0.5 * v * (1.0 + std::tanh(u));
    }
    if (tracked(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x = x, out]() mutable {
            const double* g = out.grad();
            double* gx = x.grad();
            const double* px = x.data();
            for (std::int64_t i = 0; i < x.size(); ++i) {
                const double v = px[i];
                const double u = kSqrt2OverPi * (v + kGeluCoeff * v * v * v);
                const double t = std::tanh(u);
                const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * v * v);
                const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
                gx[i] += g[i] * d;
            }
        });
    }
    return out;
}

Tensor softmax(const Tensor& x, int axis, Tape* tape) {
    if (axis < 0 || axis >= x.rank()) {
        throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
    }
    const std::int64_t outer = prefix_product(x.shape(), axis);
    const std::int64_t len = x.dim(axis);
    const std::int64_t inner = suffix_product(x.shape(), axis + 1);
    Tensor out(x.shape());
    const double* px = x.data();
    double* po = out.data();
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * len * inner + in;
            double mx = px[base];
            for (std::int64_t j = 1; j < len; ++j) mx = std::max(mx, px[base + j * inner]);
            double sum = 0.0;
            for (std::int64_t j = 0; j < len; ++j) {
                const double e = std::exp(px[base + j * inner] - mx);
                po[base + j * inner] = e;
                sum += e;
            }
            const double invsum = 1.0 / sum;
            for (std::int64_t j = 0; j < len; ++j) po[base + j * inner] *= invsum;
        }
    }
    if (tracked(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x = x, out, outer, len, inner]() mutable {
            const double* g = out.grad();
            const double* y = out.data();
            double* gx = x.grad();
            for (std::int64_t o = 0; o < outer; ++o) {
                for (std::int64_t in = 0; in < inner; ++in) {
                    const std::int64_t base = o * len * inner + in;
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
                    for (std::int64_t j = 0; j < len; ++j) {
                        const std::int64_t idx = base + j * inner;
                        gx[idx] += y[idx] * (g[idx] - dot);
                    }
                }
            }
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& scale_t, const Tensor& offset_t, double eps, Tape* tape) {
    if (x.rank() < 1 || scale_t.rank() != 1 || offset_t.rank() != 1) {
        throw DimensionError("layer_norm: expects x[...,d], scale[d], offset[d]");
    }
    const std::int64_t d = x.dim(x.rank() - 1);
    if (scale_t.size() != d || offset_t.size() != d) {
        throw DimensionError("layer_norm: parameter length does not match last axis of " + shape_str(x.shape()));
    }
    const std::int64_t rows = x.size() / d;
    Tensor out(x.shape());
    Tensor xhat(x.shape());        // cached normalized values for backward
    Tensor inv_std(Shape{static_cast<int>(rows)});
    const double* px = x.data();
    double* po = out.data();
    double* ph = xhat.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* row = px + r * d;
        double mean = 0.0;
        bool constant_row = true;
        for (std::int64_t j = 0; j < d; ++j) {
            mean += row[j];
            constant_row = constant_row && row[j] == row[0];
        }
        mean /= static_cast<double>(d);
        if (constant_row) mean = row[0];  // normalized values collapse to exactly zero
        double var = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
            const double c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double istd = 1.0 / std::sqrt(var + eps);
        inv_std[r] = istd;
        double* hrow = ph + r * d;
        double* orow = po + r * d;
        for (std::int64_t j = 0; j < d; ++j) {
            const double h = (row[j] - mean) * istd;
            hrow[j] = h;
            orow[j] = scale_t[j] * h + offset_t[j];
        }
    }
    if (tracked(tape, {&x, &scale_t, &offset_t})) {
        out.set_requires_grad(true);
        tape->record([x = x, scale_t = scale_t, offset_t = offset_t, out, xhat, inv_std, rows, d]() mutable {
            const double* g = out.grad();
            const double* h = xhat.data();
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* grow = g + r * d;
                const double* hrow = h + r * d;
                if (x.requires_grad()) {
                    double mean_gs = 0.0, mean_gsh = 0.0;
                    for (std::int64_t j = 0; j < d; ++j) {
                        const double gs = grow[j] * scale_t[j];
                        mean_gs += gs;
                        mean_gsh += gs * hrow[j];
                    }
                    mean_gs /= static_cast<double>(d);
                    mean_gsh /= static_cast<double>(d);
                    double* gx = x.grad() + r * d;
                    const double istd = inv_std[r];
                    for (std::int64_t j = 0; j < d; ++j) {
                        const double gs = grow[j] * scale_t[j];
                        gx[j] += istd * (gs - mean_gs - hrow[j] * mean_gsh);
                    }
                }
                if (scale_t.requires_grad()) {
                    double* gsc = scale_t.grad();
                    for (std::int64_t j = 0; j < d; ++j) gsc[j] += grow[j] * hrow[j];
                }
                if (offset_t.requires_grad()) {
                    double* gof = offset_t.grad();
                    for (std::int64_t j = 0; j < d; ++j) gof[j] += grow[j];
                }
            }
        });
    }
    return out;
}

Tensor group_norm(const Tensor& x, const Tensor& scale_t, const Tensor& offset_t, int groups, double eps,
                  Tape* tape) {
    if (x.rank() < 2) throw DimensionError("group_norm: expects channels-last input of rank >= 2");
    const int c = x.dim(x.rank() - 1);
    if (groups < 1 || c % groups != 0) {
        throw DimensionError("group_norm: channels " + std::to_string(c) + " not divisible by groups " +
                             std::to_string(groups));
    }
    if (scale_t.size() != c || offset_t.size() != c) {
        throw DimensionError("group_norm: parameter length does not match channel count");
    }
    const std::int64_t b = x.dim(0);
    const std::int64_t spatial = x.size() / (b * c);
    const int cg = c / groups;
    const std::int64_t group_elems = spatial * cg;
    if (group_elems < 1) throw DimensionError("group_norm: empty groups");

    Tensor out(x.shape());
    Tensor xhat(x.shape());
    Tensor inv_std(Shape{static_cast<int>(b), groups});
    const double* px = x.data();
    double* po = out.data();
    double* ph = xhat.data();
    for (std::int64_t bi = 0; bi < b; ++bi) {
        for (int gi = 0; gi < groups; ++gi) {
            double mean = 0.0;
            bool constant_group = true;
            const double first = px[(bi * spatial) * c + gi * cg];
            for (std::int64_t s = 0; s < spatial; ++s) {
                const std::int64_t base = (bi * spatial + s) * c + gi * cg;
                for (int j = 0; j < cg; ++j) {
                    mean += px[base + j];
                    constant_group = constant_group && px[base + j] == first;
                }
            }
            mean /= static_cast<double>(group_elems);
            if (constant_group) mean = first;
            double var = 0.0;
            for (std::int64_t s = 0; s < spatial; ++s) {
                const std::int64_t base = (bi * spatial + s) * c + gi * cg;
                for (int j = 0; j < cg; ++j) {
                    const double d = px[base + j] - mean;
                    var += d * d;
                }
            }
            var /= static_cast<double>(group_elems);
            const double istd = 1.0 / std::sqrt(var + eps);
            inv_std[bi * groups + gi] = istd;
            for (std::int64_t s = 0; s < spatial; ++s) {
                const std::int64_t base = (bi * spatial + s) * c + gi * cg;
                for (int j = 0; j < cg; ++j) {
                    const int ch = gi * cg + j;
                    const double h = (px[base + j] - mean) * istd;
                    ph[base + j] = h;
                    po[base + j] = scale_t[ch] * h + offset_t[ch];
                }
            }
        }
    }
    if (tracked(tape, {&x, &scale_t, &offset_t})) {
        out.set_requires_grad(true);
        tape->record([x = x, scale_t = scale_t, offset_t = offset_t, out, xhat, inv_std, b, spatial, groups, cg, c, group_elems]() mutable {
            const double* g = out.grad();
            const double* h = xhat.data();
            for (std::int64_t bi = 0; bi < b; ++bi) {
                for (int gi = 0; gi < groups; ++gi) {
                    if (x.requires_grad()) {
                        double mean_gs = 0.0, mean_gsh = 0.0;
                        for (std::int64_t s = 0; s < spatial; ++s) {
                            const std::int64_t base = (bi * spatial + s) * c + gi * cg;
                            for (int j = 0; j < cg; ++j) {
                                const double gs = g[base + j] * scale_t[gi * cg + j];
                                mean_gs += gs;
                                mean_gsh += gs * h[base + j];
                            }
                        }
                        mean_gs /= static_cast<double>(group_elems);
                        mean_gsh /= static_cast<double>(group_elems);
                        const double istd = inv_std[bi * groups + gi];
                        double* gx = x.grad();
                        for (std::int64_t s = 0; s < spatial; ++s) {
                            const std::int64_t base = (bi * spatial + s) * c + gi * cg;
                            for (int j = 0; j < cg; ++j) {
                                const double gs = g[base + j] * scale_t[gi * cg + j];
                                gx[base + j] += istd * (gs - mean_gs - h[base + j] * mean_gsh);
                            }
                        }
                    }
                }
            }
            if (scale_t.requires_grad() || offset_t.requires_grad()) {
                double* gsc = scale_t.requires_grad() ? scale_t.grad() : nullptr;
                double* gof = offset_t.requires_grad() ? offset_t.grad() : nullptr;
                const std::int64_t rows = x.size() / c;
                for (std::int64_t r = 0; r < rows; ++r) {
                    const double* grow = g + r * c;
                    const double* hrow = h + r * c;
                    for (int ch = 0; ch < c; ++ch) {
                        if (gsc) gsc[ch] += grow[ch] * hrow[ch];
                        if (gof) gof[ch] += grow[ch];
                    }
                }
            }
        });
    }
    return out;
}

Tensor batch_norm(const Tensor& x, const Tensor& scale_t, const Tensor& offset_t, Tensor& running_mean,
                  Tensor& running_var, const BatchNormArgs& args, Tape* tape) {
    if (x.rank() < 2) throw DimensionError("batch_norm: expects channels-last input of rank >= 2");
    const int c = x.dim(x.rank() - 1);
    if (scale_t.size() != c || offset_t.size() != c || running_mean.size() != c || running_var.size() != c) {
        throw DimensionError("batch_norm: parameter length does not match channel count");
    }
    const std::int64_t rows = x.size() / c;
    std::vector<double> mean(static_cast<std::size_t>(c), 0.0);
    std::vector<double> var(static_cast<std::size_t>(c), 0.0);
    const double* px = x.data();
    if (args.use_batch_stats) {
        if (rows <= 1) {
            throw NumericError("batch_norm: batch statistics over a single element are degenerate");
        }
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* row = px + r * c;
            for (int ch = 0; ch < c; ++ch) mean[static_cast<std::size_t>(ch)] += row[ch];
        }
        for (int ch = 0; ch < c; ++ch) mean[static_cast<std::size_t>(ch)] /= static_cast<double>(rows);
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* row = px + r * c;
            for (int ch = 0; ch < c; ++ch) {
                const double d = row[ch] - mean[static_cast<std::size_t>(ch)];
                var[static_cast<std::size_t>(ch)] += d * d;
            }
        }
        for (int ch = 0; ch < c; ++ch) var[static_cast<std::size_t>(ch)] /= static_cast<double>(rows);
        if (args.update_running) {
            for (int ch = 0; ch < c; ++ch) {
                running_mean[ch] = args.momentum * running_mean[ch] +
                                   (1.0 - args.momentum) * mean[static_cast<std::size_t>(ch)];
                running_var[ch] = args.momentum * running_var[ch] +
                                  (1.0 - args.momentum) * var[static_cast<std::size_t>(ch)];
            }
        }
    } else {
        for (int ch = 0; ch < c; ++ch) {
            mean[static_cast<std::size_t>(ch)] = running_mean[ch];
            var[static_cast<std::size_t>(ch)] = running_var[ch];
        }
    }

    Tensor out(x.shape());
    Tensor xhat(x.shape());
    std::vector<double> inv_std(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
        inv_std[static_cast<std::size_t>(ch)] = 1.0 / std::sqrt(var[static_cast<std::size_t>(ch)] + args.eps);
    }
    double* po = out.data();
    double* ph = xhat.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* row = px + r * c;
        double* orow = po + r * c;
        double* hrow = ph + r * c;
        for (int ch = 0; ch < c; ++ch) {
            const double h = (row[ch] - mean[static_cast<std::size_t>(ch)]) * inv_std[static_cast<std::size_t>(ch)];
            hrow[ch] = h;
            orow[ch] = scale_t[ch] * h + offset_t[ch];
        }
    }
    if (tracked(tape, {&x, &scale_t, &offset_t})) {
        out.set_requires_grad(true);
        const bool batch_stats = args.use_batch_stats;
        tape->record([x = x, scale_t = scale_t, offset_t = offset_t, out, xhat, inv_std, rows, c, batch_stats]() mutable {
            const double* g = out.grad();
            const double* h = xhat.data();
            if (x.requires_grad()) {
                double* gx = x.grad();
                if (batch_stats) {
                    std::vector<double> mean_gs(static_cast<std::size_t>(c), 0.0);
                    std::vector<double> mean_gsh(static_cast<std::size_t>(c), 0.0);
                    for (std::int64_t r = 0; r < rows; ++r) {
                        const double* grow = g + r * c;
                        const double* hrow = h + r * c;
                        for (int ch = 0; ch < c; ++ch) {
                            const double gs = grow[ch] * scale_t[ch];
                            mean_gs[static_cast<std::size_t>(ch)] += gs;
                            mean_gsh[static_cast<std::size_t>(ch)] += gs * hrow[ch];
                        }
                    }
                    for (int ch = 0; ch < c; ++ch) {
                        mean_gs[static_cast<std::size_t>(ch)] /= static_cast<double>(rows);
                        mean_gsh[static_cast<std::size_t>(ch)] /= static_cast<double>(rows);
                    }
                    for (std::int64_t r = 0; r < rows; ++r) {
                        const double* grow = g + r * c;
                        const double* hrow = h + r * c;
                        double* gxr = gx + r * c;
                        for (int ch = 0; ch < c; ++ch) {
                            const double gs = grow[ch] * scale_t[ch];
                            gxr[ch] += inv_std[static_cast<std::size_t>(ch)] *
                                       (gs - mean_gs[static_cast<std::size_t>(ch)] -
                                        hrow[ch] * mean_gsh[static_cast<std::size_t>(ch)]);
                        }
                    }
                } else {
                    for (std::int64_t r = 0; r < rows; ++r) {
                        const double* grow = g + r * c;
                        double* gxr = gx + r * c;
                        for (int ch = 0; ch < c; ++ch) {
                            gxr[ch] += grow[ch] * scale_t[ch] * inv_std[static_cast<std::size_t>(ch)];
                        }
                    }
                }
            }
            if (scale_t.requires_grad() || offset_t.requires_grad()) {
                double* gsc = scale_t.requires_grad() ? scale_t.grad() : nullptr;
                double* gof = offset_t.requires_grad() ? offset_t.grad() : nullptr;
                for (std::int64_t r = 0; r < rows; ++r) {
                    const double* grow = g + r * c;
                    const double* hrow = h + r * c;
                    for (int ch = 0; ch < c; ++ch) {
                        if (gsc) gsc[ch] += grow[ch] * hrow[ch];
                        if (gof) gof[ch] += grow[ch];
                    }
                }
            }
        });
    }
    return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels, double smoothing, Tape* tape) {
    if (logits.rank() != 2) throw DimensionError("cross_entropy: expects logits[b,c]");
    const int b = logits.dim(0);
    const int c = logits.dim(1);
    if (static_cast<int>(labels.size()) != b) {
        throw DimensionError("cross_entropy: label count does not match batch size");
    }
    if (smoothing < 0.0 || smoothing >= 1.0) throw ConfigError("cross_entropy: smoothing must be in [0,1)");
    for (int i = 0; i < b; ++i) {
        if (labels[static_cast<std::size_t>(i)] < 0 || labels[static_cast<std::size_t>(i)] >= c) {
            throw IndexError("cross_entropy: label " + std::to_string(labels[static_cast<std::size_t>(i)]) +
                             " out of range [0," + std::to_string(c) + ")");
        }
    }
    Tensor lse(Shape{b});
    double total = 0.0;
    const double* pz = logits.data();
    for (int i = 0; i < b; ++i) {
        const double* row = pz + static_cast<std::int64_t>(i) * c;
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
        const double l = mx + std::log(sum);
        lse[i] = l;
        double target_dot = (1.0 - smoothing) * row[labels[static_cast<std::size_t>(i)]];
        if (smoothing > 0.0) {
            double rowsum = 0.0;
            for (int j = 0; j < c; ++j) rowsum += row[j];
            target_dot += smoothing / static_cast<double>(c) * rowsum;
        }
        total += l - target_dot;
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(b));
    out.check_finite("cross_entropy");
    if (tracked(tape, {&logits})) {
        out.set_requires_grad(true);
        tape->record([logits = logits, labels, smoothing, out, lse, b, c]() mutable {
            const double gout = out.grad()[0] / static_cast<double>(b);
            double* gz = logits.grad();
            const double* pz = logits.data();
            const double unif = smoothing / static_cast<double>(c);
            for (int i = 0; i < b; ++i) {
                const double* row = pz + static_cast<std::int64_t>(i) * c;
                double* grow = gz + static_cast<std::int64_t>(i) * c;
                for (int j = 0; j < c; ++j) {
                    const double p = std::exp(row[j] - lse[i]);
                    double t = unif;
                    if (j == labels[static_cast<std::size_t>(i)]) t += 1.0 - smoothing;
                    grow[j] += gout * (p - t);
                }
            }
        });
    }
    return out;
}

Tensor extract_patches(const Tensor& x, int patch, int stride, Tape* tape) {
    if (x.rank() != 4) throw DimensionError("extract_patches: expects x[b,h,w,c]");
    const int b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    if (patch < 1 || stride < 1 || patch > h || patch > w) throw DimensionError("extract_patches: bad patch/stride");
    if ((h - patch) % stride != 0 || (w - patch) % stride != 0) {
        throw DimensionError("extract_patches: image size minus patch must be divisible by stride");
    }
    const int th = (h - patch) / stride + 1;
    const int tw = (w - patch) / stride + 1;
    const int pd = patch * patch * c;
    Tensor out(Shape{b, th * tw, pd});
    const double* px = x.data();
    double* po = out.data();
    for (int bi = 0; bi < b; ++bi) {
        for (int ty = 0; ty < th; ++ty) {
            for (int tx = 0; tx < tw; ++tx) {
                double* dst = po + ((static_cast<std::int64_t>(bi) * th * tw) + ty * tw + tx) * pd;
                for (int py = 0; py < patch; ++py) {
                    const double* src =
                        px + ((static_cast<std::int64_t>(bi) * h + (ty * stride + py)) * w + tx * stride) * c;
                    std::copy(src, src + static_cast<std::int64_t>(patch) * c, dst + static_cast<std::int64_t>(py) * patch * c);
                }
            }
        }
    }
    if (tracked(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x = x, out, b, h, w, c, patch, stride, th, tw, pd]() mutable {
            const double* g = out.grad();
            double* gx = x.grad();
            for (int bi = 0; bi < b; ++bi) {
                for (int ty = 0; ty < th; ++ty) {
                    for (int tx = 0; tx < tw; ++tx) {
                        const double* src = g + ((static_cast<std::int64_t>(bi) * th * tw) + ty * tw + tx) * pd;
                        for (int py = 0; py < patch; ++py) {
                            double* dst =
                                gx + ((static_cast<std::int64_t>(bi) * h + (ty * stride + py)) * w + tx * stride) * c;
                            const double* s = src + static_cast<std::int64_t>(py) * patch * c;
                            for (int k = 0; k < patch * c; ++k) dst[k] += s[k];
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad, Tape* tape) {
    if (x.rank() != 4 || w.rank() != 4) throw DimensionError("conv2d: expects x[b,h,w,c], w[kh,kw,cin,cout]");
    const int b = x.dim(0), h = x.dim(1), ww = x.dim(2), cin = x.dim(3);
    const int kh = w.dim(0), kw = w.dim(1), wcin = w.dim(2), cout = w.dim(3);
    if (cin != wcin) throw DimensionError("conv2d: input channels mismatch");
    if (bias.size() != cout) throw DimensionError("conv2d: bias length mismatch");
    if (stride < 1 || pad < 0) throw DimensionError("conv2d: bad stride/pad");
    if ((h + 2 * pad - kh) % stride != 0 || (ww + 2 * pad - kw) % stride != 0) {
        throw DimensionError("conv2d: output size is not integral for given stride/pad");
    }
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (ww + 2 * pad - kw) / stride + 1;
    Tensor out(Shape{b, oh, ow, cout});
    const double* px = x.data();
    const double* pw = w.data();
    double* po = out.data();
    for (int bi = 0; bi < b; ++bi) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double* orow = po + ((static_cast<std::int64_t>(bi) * oh + oy) * ow + ox) * cout;
                for (int oc = 0; oc < cout; ++oc) orow[oc] = bias[oc];
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= ww) continue;
                        const double* xrow = px + ((static_cast<std::int64_t>(bi) * h + iy) * ww + ix) * cin;
                        const double* wrow = pw + (static_cast<std::int64_t>(ky) * kw + kx) * cin * cout;
                        for (int ic = 0; ic < cin; ++ic) {
                            const double xv = xrow[ic];
                            const double* wvec = wrow + static_cast<std::int64_t>(ic) * cout;
                            for (int oc = 0; oc < cout; ++oc) orow[oc] += xv * wvec[oc];
                        }
                    }
                }
            }
        }
    }
    if (tracked(tape, {&x, &w, &bias})) {
        out.set_requires_grad(true);
        tape->record([x = x, w = w, bias = bias, out, b, h, ww, cin, kh, kw, cout, oh, ow, stride, pad]() mutable {
            const double* g = out.grad();
            const double* px = x.data();
            const double* pw = w.data();
            double* gx = x.requires_grad() ? x.grad() : nullptr;
            double* gw = w.requires_grad() ? w.grad() : nullptr;
            double* gb = bias.requires_grad() ? bias.grad() : nullptr;
            for (int bi = 0; bi < b; ++bi) {
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        const double* grow = g + ((static_cast<std::int64_t>(bi) * oh + oy) * ow + ox) * cout;
                        if (gb) {
                            for (int oc = 0; oc < cout; ++oc) gb[oc] += grow[oc];
                        }
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox * stride + kx - pad;
                                if (ix < 0 || ix >= ww) continue;
                                const std::int64_t xoff = ((static_cast<std::int64_t>(bi) * h + iy) * ww + ix) * cin;
                                const std::int64_t woff = (static_cast<std::int64_t>(ky) * kw + kx) * cin * cout;
                                for (int ic = 0; ic < cin; ++ic) {
                                    const double* wvec = pw + woff + static_cast<std::int64_t>(ic) * cout;
                                    double acc = 0.0;
                                    if (gw) {
                                        const double xv = px[xoff + ic];
                                        double* gwvec = gw + woff + static_cast<std::int64_t>(ic) * cout;
                                        for (int oc = 0; oc < cout; ++oc) {
                                            gwvec[oc] += xv * grow[oc];
                                            acc += wvec[oc] * grow[oc];
                                        }
                                    } else {
                                        for (int oc = 0; oc < cout; ++oc) acc += wvec[oc] * grow[oc];
                                    }
                                    if (gx) gx[xoff + ic] += acc;
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor prepend_token(const Tensor& tokens, const Tensor& tok, Tape* tape) {
    if (tokens.rank() != 3 || tok.rank() != 1 || tokens.dim(2) != tok.dim(0)) {
        throw DimensionError("prepend_token: expects tokens[b,T,d] and tok[d]");
    }
    const int b = tokens.dim(0), T = tokens.dim(1), d = tokens.dim(2);
    Tensor out(Shape{b, T + 1, d});
    for (int bi = 0; bi < b; ++bi) {
        double* dst = out.data() + static_cast<std::int64_t>(bi) * (T + 1) * d;
        std::copy(tok.data(), tok.data() + d, dst);
        const double* src = tokens.data() + static_cast<std::int64_t>(bi) * T * d;
        std::copy(src, src + static_cast<std::int64_t>(T) * d, dst + d);
    }
    if (tracked(tape, {&tokens, &tok})) {
        out.set_requires_grad(true);
        tape->record([tokens = tokens, tok = tok, out, b, T, d]() mutable {
            const double* g = out.grad();
            for (int bi = 0; bi < b; ++bi) {
                const double* grow = g + static_cast<std::int64_t>(bi) * (T + 1) * d;
                if (tok.requires_grad()) {
                    double* gt = tok.grad();
                    for (int j = 0; j < d; ++j) gt[j] += grow[j];
                }
                if (tokens.requires_grad()) {
                    double* gk = tokens.grad() + static_cast<std::int64_t>(bi) * T * d;
                    const double* src = grow + d;
                    for (std::int64_t j = 0; j < static_cast<std::int64_t>(T) * d; ++j) gk[j] += src[j];
                }
            }
        });
    }
    return out;
}

Tensor mean_tokens_excluding_first(const Tensor& x, Tape* tape) {
    if (x.rank() != 3 || x.dim(1) < 2) throw DimensionError("mean_tokens_excluding_first: expects x[b,T+1,d], T>=1");
    const int b = x.dim(0), T1 = x.dim(1), d = x.dim(2);
    const int T = T1 - 1;
    Tensor out(Shape{b, d});
    for (int bi = 0; bi < b; ++bi) {
        double* orow = out.data() + static_cast<std::int64_t>(bi) * d;
        for (int t = 1; t < T1; ++t) {
            const double* row = x.data() + (static_cast<std::int64_t>(bi) * T1 + t) * d;
            for (int j = 0; j < d; ++j) orow[j] += row[j];
        }
        for (int j = 0; j < d; ++j) orow[j] /= static_cast<double>(T);
    }
    if (tracked(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x = x, out, b, T1, d, T]() mutable {
            const double* g = out.grad();
            double* gx = x.grad();
            const double inv = 1.0 / static_cast<double>(T);
            for (int bi = 0; bi < b; ++bi) {
                const double* grow = g + static_cast<std::int64_t>(bi) * d;
                for (int t = 1; t < T1; ++t) {
                    double* dst = gx + (static_cast<std::int64_t>(bi) * T1 + t) * d;
                    for (int j = 0; j < d; ++j) dst[j] += grow[j] * inv;
                }
            }
        });
    }
    return out;
}

Tensor global_avg_pool(const Tensor& x, Tape* tape) {
    if (x.rank() != 4) throw DimensionError("global_avg_pool: expects x[b,h,w,c]");
    const int b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    Tensor out(Shape{b, c});
    for (int bi = 0; bi < b; ++bi) {
        double* orow = out.data() + static_cast<std::int64_t>(bi) * c;
        const double* base = x.data() + static_cast<std::int64_t>(bi) * hw * c;
        for (std::int64_t s = 0; s < hw; ++s) {
            const double* row = base + s * c;
            for (int ch = 0; ch < c; ++ch) orow[ch] += row[ch];
        }
        for (int ch = 0; ch < c; ++ch) orow[ch] /= static_cast<double>(hw);
    }
    if (tracked(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x = x, out, b, hw, c]() mutable {
            const double* g = out.grad();
            double* gx = x.grad();
            const double inv = 1.0 / static_cast<double>(hw);
            for (int bi = 0; bi < b; ++bi) {
                const double* grow = g + static_cast<std::int64_t>(bi) * c;
                double* base = gx + static_cast<std::int64_t>(bi) * hw * c;
                for (std::int64_t s = 0; s < hw; ++s) {
                    double* row = base + s * c;
                    for (int ch = 0; ch < c; ++ch) row[ch] += grow[ch] * inv;
                }
            }
        });
    }
    return out;
}

Tensor sum_all(const Tensor& x, Tape* tape) {
    double total = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) total += x[i];
    Tensor out = Tensor::scalar(total);
    if (tracked(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record([x = x, out]() mutable {
            const double g = out.grad()[0];
            double* gx = x.grad();
            for (std::int64_t i = 0; i < x.size(); ++i) gx[i] += g;
        });
    }
    return out;
}

Tensor mean_all(const Tensor& x, Tape* tape) {
    Tensor s = sum_all(x, tape);
    return scale(s, 1.0 / static_cast<double>(x.size()), tape);
}

}  // namespace dadl
