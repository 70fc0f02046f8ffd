#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fusionbench/errors.hpp"
#include "fusionbench/params.hpp"
#include "fusionbench/rng.hpp"
#include "fusionbench/tensor.hpp"

// Reverse-mode tape over a fixed op set: dense (matmul + bias), conv2d
// (3x3-style valid convolution, any kernel size), maxpool2d 2x2/2, dropout,
// relu/tanh/sigmoid/softmax, elementwise add/mul, sum, cross-entropy.
//
// Convention: image tensors are NHWC with a leading batch axis, so conv2d
// and maxpool2d take rank-4 [N,H,W,C]. Dense takes rank-2 [N,D]. Softmax
// normalizes the last axis.
//
// A Tape records one forward pass; backward() walks it once in reverse and
// accumulates into bound Parameter gradients. Calling backward() twice
// without a new forward is an error.

namespace fusionbench {

enum class Mode { Train, Eval };

template <typename T>
class Tape;

// Handle to a node on a tape.
template <typename T>
struct Val {
    Tape<T>* tape = nullptr;
    std::size_t idx = 0;

    const Tensor<T>& value() const;
    const std::vector<T>& grad() const;
};

template <typename T>
class Tape {
public:
    using EigenMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MatMap = Eigen::Map<EigenMat>;
    using ConstMatMap = Eigen::Map<const EigenMat>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::size_t size() const { return nodes_.size(); }

    const Tensor<T>& value(std::size_t idx) const { return nodes_[idx]->value; }
    const std::vector<T>& grad(std::size_t idx) const { return nodes_[idx]->grad; }

    // ---- leaves ----

    Val<T> leaf(Tensor<T> value, bool needs_grad = false) {
        return push(std::move(value), needs_grad, {});
    }

    // Leaf whose gradient is flushed into p.value.grad() by backward().
    Val<T> param(Parameter<T>& p) {
        Val<T> v = push(p.value, p.trainable, {});
        if (p.trainable) bindings_.push_back({v.idx, &p});
        return v;
    }

    // ---- elementwise ----

    Val<T> add(Val<T> a, Val<T> b) {
        const Tensor<T>& xa = value(a.idx);
        const Tensor<T>& xb = value(b.idx);
        require_same_shape("add", xa, xb);
        check_nan("add", xa);
        check_nan("add", xb);
        Tensor<T> out(xa.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xa[i] + xb[i];
        Val<T> o = push(std::move(out), needs(a) || needs(b), [this, a, b](Node& self) {
            if (needs(a)) axpy(grad_of(a.idx), self.grad, nullptr);
            if (needs(b)) axpy(grad_of(b.idx), self.grad, nullptr);
        });
        return o;
    }

    Val<T> mul(Val<T> a, Val<T> b) {
        const Tensor<T>& xa = value(a.idx);
        const Tensor<T>& xb = value(b.idx);
        require_same_shape("mul", xa, xb);
        check_nan("mul", xa);
        check_nan("mul", xb);
        Tensor<T> out(xa.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xa[i] * xb[i];
        Val<T> o = push(std::move(out), needs(a) || needs(b), [this, a, b](Node& self) {
            const Tensor<T>& va = value(a.idx);
            const Tensor<T>& vb = value(b.idx);
            if (needs(a)) {
                std::vector<T>& ga = grad_of(a.idx);
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * vb[i];
            }
            if (needs(b)) {
                std::vector<T>& gb = grad_of(b.idx);
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * va[i];
            }
        });
        return o;
    }

    // ---- dense ----

    // a: [n,k] times b: [k,m] -> [n,m]
    Val<T> matmul(Val<T> a, Val<T> b) {
        const Tensor<T>& xa = value(a.idx);
        const Tensor<T>& xb = value(b.idx);
        if (xa.ndim() != 2 || xb.ndim() != 2 || xa.dim(1) != xb.dim(0))
            throw ShapeError("matmul: incompatible shapes " + shape_str(xa.shape()) + " and " +
                             shape_str(xb.shape()));
        check_nan("matmul", xa);
        check_nan("matmul", xb);
        const std::size_t n = xa.dim(0), k = xa.dim(1), m = xb.dim(1);
        Tensor<T> out({n, m});
        MatMap(out.ptr(), n, m).noalias() =
            ConstMatMap(xa.ptr(), n, k) * ConstMatMap(xb.ptr(), k, m);
        Val<T> o = push(std::move(out), needs(a) || needs(b), [this, a, b, n, k, m](Node& self) {
            ConstMatMap g(self.grad.data(), n, m);
            if (needs(a)) {
                MatMap(grad_of(a.idx).data(), n, k).noalias() +=
                    g * ConstMatMap(value(b.idx).ptr(), k, m).transpose();
            }
            if (needs(b)) {
                MatMap(grad_of(b.idx).data(), k, m).noalias() +=
                    ConstMatMap(value(a.idx).ptr(), n, k).transpose() * g;
            }
        });
        return o;
    }

    // a: [n,m] plus bias: [m] broadcast over rows.
    Val<T> add_rowwise(Val<T> a, Val<T> bias) {
        const Tensor<T>& xa = value(a.idx);
        const Tensor<T>& xb = value(bias.idx);
        if (xa.ndim() != 2 || xb.ndim() != 1 || xa.dim(1) != xb.dim(0))
            throw ShapeError("dense bias: incompatible shapes " + shape_str(xa.shape()) +
                             " and " + shape_str(xb.shape()));
        check_nan("dense", xa);
        const std::size_t n = xa.dim(0), m = xa.dim(1);
        Tensor<T> out({n, m});
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) out[r * m + c] = xa[r * m + c] + xb[c];
        Val<T> o = push(std::move(out), needs(a) || needs(bias), [this, a, bias, n, m](Node& self) {
            if (needs(a)) axpy(grad_of(a.idx), self.grad, nullptr);
            if (needs(bias)) {
                std::vector<T>& gb = grad_of(bias.idx);
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < m; ++c) gb[c] += self.grad[r * m + c];
            }
        });
        return o;
    }

    Val<T> dense(Val<T> x, Val<T> w, Val<T> b) { return add_rowwise(matmul(x, w), b); }

    // ---- activations ----

    Val<T> relu(Val<T> x) {
        return unary("relu", x,
                     [](T v) { return v > T(0) ? v : T(0); },
                     [](T v, T) { return v > T(0) ? T(1) : T(0); });
    }

    Val<T> tanh_act(Val<T> x) {
        return unary("tanh", x,
                     [](T v) { return std::tanh(v); },
                     [](T, T y) { return T(1) - y * y; });
    }

    Val<T> sigmoid(Val<T> x) {
        return unary("sigmoid", x,
                     [](T v) { return T(1) / (T(1) + std::exp(-v)); },
                     [](T, T y) { return y * (T(1) - y); });
    }

    // Softmax over the last axis.
    Val<T> softmax(Val<T> x) {
        const Tensor<T>& xv = value(x.idx);
        if (xv.ndim() < 1) throw ShapeError("softmax: rank-0 input");
        check_nan("softmax", xv);
        const std::size_t m = xv.dim(xv.ndim() - 1);
        const std::size_t rows = xv.numel() / m;
        Tensor<T> out(xv.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            const T* in = xv.ptr() + r * m;
            T* o = out.ptr() + r * m;
            T mx = in[0];
            for (std::size_t c = 1; c < m; ++c) mx = std::max(mx, in[c]);
            T sum = T(0);
            for (std::size_t c = 0; c < m; ++c) {
                o[c] = std::exp(in[c] - mx);
                sum += o[c];
            }
            for (std::size_t c = 0; c < m; ++c) o[c] /= sum;
        }
        Val<T> o = push(std::move(out), needs(x), [this, x, rows, m](Node& self) {
            if (!needs(x)) return;
            std::vector<T>& gx = grad_of(x.idx);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* y = self.value.ptr() + r * m;
                const T* g = self.grad.data() + r * m;
                T dot = T(0);
                for (std::size_t c = 0; c < m; ++c) dot += g[c] * y[c];
                T* out_g = gx.data() + r * m;
                for (std::size_t c = 0; c < m; ++c) out_g[c] += y[c] * (g[c] - dot);
            }
        });
        return o;
    }

    // ---- convolution ----

    // x: [N,H,W,C], kernel: [kh,kw,C,F], bias: [F]; valid padding, stride 1.
    Val<T> conv2d(Val<T> x, Val<T> kernel, Val<T> bias) {
        const Tensor<T>& xv = value(x.idx);
        const Tensor<T>& kv = value(kernel.idx);
        const Tensor<T>& bv = value(bias.idx);
        if (xv.ndim() != 4 || kv.ndim() != 4)
            throw ShapeError("conv2d: expected input [N,H,W,C] and kernel [kh,kw,C,F], got " +
                             shape_str(xv.shape()) + " and " + shape_str(kv.shape()));
        if (xv.dim(3) != kv.dim(2))
            throw ShapeError("conv2d: input channels " + shape_str(xv.shape()) +
                             " do not match kernel " + shape_str(kv.shape()));
        const std::size_t kh = kv.dim(0), kw = kv.dim(1), f = kv.dim(3);
        if (bv.ndim() != 1 || bv.dim(0) != f)
            throw ShapeError("conv2d: bias " + shape_str(bv.shape()) + " does not match filters " +
                             shape_str(kv.shape()));
        const std::size_t n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
        if (h < kh || w < kw)
            throw ShapeError("conv2d: input " + shape_str(xv.shape()) + " smaller than kernel " +
                             shape_str(kv.shape()));
        check_nan("conv2d", xv);
        const std::size_t oh = h - kh + 1, ow = w - kw + 1;
        const std::size_t patch = kh * kw * c;
        const std::size_t rows = n * oh * ow;

        // im2col + one GEMM over the whole batch.
        auto col = std::make_shared<std::vector<T>>(rows * patch);
        {
            T* dst = col->data();
            for (std::size_t in = 0; in < n; ++in) {
                const T* img = xv.ptr() + in * h * w * c;
                for (std::size_t y = 0; y < oh; ++y)
                    for (std::size_t xx = 0; xx < ow; ++xx)
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const T* src = img + ((y + ky) * w + xx) * c;
                            std::copy(src, src + kw * c, dst);
                            dst += kw * c;
                        }
            }
        }
        Tensor<T> out({n, oh, ow, f});
        MatMap om(out.ptr(), rows, f);
        om.noalias() = ConstMatMap(col->data(), rows, patch) * ConstMatMap(kv.ptr(), patch, f);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < f; ++j) out[r * f + j] += bv[j];

        Val<T> o = push(std::move(out), needs(x) || needs(kernel) || needs(bias),
                        [this, x, kernel, bias, col, n, h, w, c, kh, kw, f, oh, ow,
                         patch, rows](Node& self) {
            ConstMatMap g2(self.grad.data(), rows, f);
            if (needs(bias)) {
                std::vector<T>& gb = grad_of(bias.idx);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < f; ++j) gb[j] += self.grad[r * f + j];
            }
            if (needs(kernel)) {
                MatMap(grad_of(kernel.idx).data(), patch, f).noalias() +=
                    ConstMatMap(col->data(), rows, patch).transpose() * g2;
            }
            if (needs(x)) {
                std::vector<T> dcol(rows * patch);
                MatMap(dcol.data(), rows, patch).noalias() =
                    g2 * ConstMatMap(value(kernel.idx).ptr(), patch, f).transpose();
                std::vector<T>& gx = grad_of(x.idx);
                const T* src = dcol.data();
                for (std::size_t in = 0; in < n; ++in) {
                    T* img = gx.data() + in * h * w * c;
                    for (std::size_t y = 0; y < oh; ++y)
                        for (std::size_t xx = 0; xx < ow; ++xx)
                            for (std::size_t ky = 0; ky < kh; ++ky) {
                                T* dst = img + ((y + ky) * w + xx) * c;
                                for (std::size_t i = 0; i < kw * c; ++i) dst[i] += src[i];
                                src += kw * c;
                            }
                }
            }
        });
        return o;
    }

    // 2x2 window, stride 2; trailing row/column dropped on odd sizes.
    Val<T> maxpool2d(Val<T> x) {
        const Tensor<T>& xv = value(x.idx);
        if (xv.ndim() != 4)
            throw ShapeError("maxpool2d: expected [N,H,W,C], got " + shape_str(xv.shape()));
        check_nan("maxpool2d", xv);
        const std::size_t n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
        if (h < 2 || w < 2)
            throw ShapeError("maxpool2d: input " + shape_str(xv.shape()) + " smaller than 2x2 window");
        const std::size_t oh = h / 2, ow = w / 2;
        Tensor<T> out({n, oh, ow, c});
        auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.numel());
        std::size_t oi = 0;
        for (std::size_t in = 0; in < n; ++in)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx)
                    for (std::size_t ch = 0; ch < c; ++ch, ++oi) {
                        std::size_t base = ((in * h + 2 * y) * w + 2 * xx) * c + ch;
                        std::size_t best = base;
                        T bv = xv[base];
                        const std::size_t cand[3] = {base + c, base + w * c, base + w * c + c};
                        for (std::size_t k = 0; k < 3; ++k)
                            if (xv[cand[k]] > bv) { bv = xv[cand[k]]; best = cand[k]; }
                        out[oi] = bv;
                        (*argmax)[oi] = static_cast<std::uint32_t>(best);
                    }
        Val<T> o = push(std::move(out), needs(x), [this, x, argmax](Node& self) {
            if (!needs(x)) return;
            std::vector<T>& gx = grad_of(x.idx);
            for (std::size_t i = 0; i < self.grad.size(); ++i) gx[(*argmax)[i]] += self.grad[i];
        });
        return o;
    }

    // ---- dropout ----

    // Train mode zeroes each element with probability rate and scales
    // survivors by 1/(1-rate); eval mode is the identity.
    Val<T> dropout(Val<T> x, double rate, Mode mode, Rng& rng) {
        if (rate < 0.0 || rate >= 1.0)
            throw DataError("dropout: rate " + std::to_string(rate) + " outside [0,1)");
        const Tensor<T>& xv = value(x.idx);
        check_nan("dropout", xv);
        if (mode == Mode::Eval || rate == 0.0) {
            Tensor<T> out = xv;
            Val<T> o = push(std::move(out), needs(x), [this, x](Node& self) {
                if (needs(x)) axpy(grad_of(x.idx), self.grad, nullptr);
            });
            return o;
        }
        auto mask = std::make_shared<std::vector<T>>(xv.numel());
        const T keep_scale = T(1.0 / (1.0 - rate));
        for (std::size_t i = 0; i < mask->size(); ++i)
            (*mask)[i] = rng.next_double() < rate ? T(0) : keep_scale;
        Tensor<T> out(xv.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] * (*mask)[i];
        Val<T> o = push(std::move(out), needs(x), [this, x, mask](Node& self) {
            if (!needs(x)) return;
            std::vector<T>& gx = grad_of(x.idx);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * (*mask)[i];
        });
        return o;
    }

    // ---- shape ----

    // [N, ...] -> [N, rest]
    Val<T> flatten(Val<T> x) {
        const Tensor<T>& xv = value(x.idx);
        if (xv.ndim() < 2) throw ShapeError("flatten: expected rank >= 2, got " + shape_str(xv.shape()));
        return reshape(x, {xv.dim(0), xv.numel() / xv.dim(0)});
    }

    Val<T> reshape(Val<T> x, Shape new_shape) {
        Tensor<T> out = value(x.idx).reshaped(std::move(new_shape));
        Val<T> o = push(std::move(out), needs(x), [this, x](Node& self) {
            if (needs(x)) axpy(grad_of(x.idx), self.grad, nullptr);
        });
        return o;
    }

    // ---- reductions / loss ----

    Val<T> sum(Val<T> x) {
        const Tensor<T>& xv = value(x.idx);
        check_nan("sum", xv);
        T s = T(0);
        for (std::size_t i = 0; i < xv.numel(); ++i) s += xv[i];
        Tensor<T> out({1}, std::vector<T>{s});
        Val<T> o = push(std::move(out), needs(x), [this, x](Node& self) {
            if (!needs(x)) return;
            std::vector<T>& gx = grad_of(x.idx);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[0];
        });
        return o;
    }

    // Mean over the batch of -log(p_true), probabilities clamped to
    // [eps, 1-eps] before the log.
    Val<T> cross_entropy(Val<T> probs, const Tensor<T>& one_hot) {
        static constexpr double kEps = 1e-12;
        const Tensor<T>& pv = value(probs.idx);
        if (pv.shape() != one_hot.shape())
            throw ShapeError("cross_entropy: probs " + shape_str(pv.shape()) +
                             " vs labels " + shape_str(one_hot.shape()));
        if (pv.ndim() != 2) throw ShapeError("cross_entropy: expected [N,K], got " + shape_str(pv.shape()));
        check_nan("cross_entropy", pv);
        const std::size_t n = pv.dim(0), k = pv.dim(1);
        for (std::size_t r = 0; r < n; ++r) {
            T row_sum = T(0);
            std::size_t ones = 0;
            for (std::size_t c = 0; c < k; ++c) {
                row_sum += pv[r * k + c];
                T lv = one_hot[r * k + c];
                if (lv == T(1)) ++ones;
                else if (lv != T(0))
                    throw DataError("cross_entropy: labels row " + std::to_string(r) + " is not one-hot");
            }
            if (ones != 1)
                throw DataError("cross_entropy: labels row " + std::to_string(r) + " is not one-hot");
            if (std::abs(static_cast<double>(row_sum) - 1.0) > 1e-4)
                throw DataError("cross_entropy: probs row " + std::to_string(r) +
                                " sums to " + std::to_string(static_cast<double>(row_sum)));
        }
        double total = 0.0;
        for (std::size_t i = 0; i < pv.numel(); ++i) {
            if (one_hot[i] == T(1)) {
                double p = std::clamp(static_cast<double>(pv[i]), kEps, 1.0 - kEps);
                total -= std::log(p);
            }
        }
        Tensor<T> out({1}, std::vector<T>{static_cast<T>(total / static_cast<double>(n))});
        auto labels = std::make_shared<Tensor<T>>(one_hot);
        Val<T> o = push(std::move(out), needs(probs), [this, probs, labels, n](Node& self) {
            if (!needs(probs)) return;
            const Tensor<T>& pv2 = value(probs.idx);
            std::vector<T>& gp = grad_of(probs.idx);
            const T scale = self.grad[0] / static_cast<T>(n);
            for (std::size_t i = 0; i < pv2.numel(); ++i) {
                if ((*labels)[i] != T(1)) continue;
                double p = static_cast<double>(pv2[i]);
                if (p <= kEps || p >= 1.0 - kEps) continue;  // clamped: flat region
                gp[i] -= scale / static_cast<T>(p);
            }
        });
        return o;
    }

    // ---- backward ----

    // Reverse sweep from a scalar loss; flushes gradients of every bound
    // trainable Parameter. One backward per recorded forward.
    void backward(Val<T> loss) {
        if (consumed_)
            throw UsageError("backward: tape already consumed; record a new forward pass first");
        if (value(loss.idx).numel() != 1)
            throw ShapeError("backward: loss must be scalar, got " + shape_str(value(loss.idx).shape()));
        consumed_ = true;
        Node& ln = *nodes_[loss.idx];
        ln.grad.assign(1, T(1));
        for (std::size_t i = loss.idx + 1; i-- > 0;) {
            Node& nd = *nodes_[i];
            if (nd.needs_grad && nd.backward && !nd.grad.empty()) nd.backward(nd);
        }
        for (auto& [idx, p] : bindings_) {
            if (nodes_[idx]->grad.empty()) continue;
            std::vector<T>& g = p->value.grad();
            const std::vector<T>& src = nodes_[idx]->grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
        }
    }

    bool consumed() const { return consumed_; }

    // Drop all recorded nodes; ready for the next forward pass.
    void reset() {
        nodes_.clear();
        bindings_.clear();
        consumed_ = false;
    }

private:
    struct Node {
        Tensor<T> value;
        std::vector<T> grad;
        bool needs_grad = false;
        std::function<void(Node&)> backward;
    };

    friend struct Val<T>;

    bool needs(Val<T> v) const { return nodes_[v.idx]->needs_grad; }

    std::vector<T>& grad_of(std::size_t idx) {
        Node& nd = *nodes_[idx];
        if (nd.grad.empty()) nd.grad.assign(nd.value.numel(), T(0));
        return nd.grad;
    }

    static void axpy(std::vector<T>& dst, const std::vector<T>& src, const T*) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }

    Val<T> push(Tensor<T> value, bool needs_grad, std::function<void(Node&)> back) {
        auto nd = std::make_unique<Node>();
        nd->value = std::move(value);
        nd->needs_grad = needs_grad;
        nd->backward = std::move(back);
        nodes_.push_back(std::move(nd));
        if (needs_grad) grad_of(nodes_.size() - 1);  // pre-zeroed so parents can accumulate
        return Val<T>{this, nodes_.size() - 1};
    }

    template <typename Fwd, typename Bwd>
    Val<T> unary(const char* name, Val<T> x, Fwd fwd, Bwd dydx) {
        const Tensor<T>& xv = value(x.idx);
        check_nan(name, xv);
        Tensor<T> out(xv.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = fwd(xv[i]);
        Val<T> o = push(std::move(out), needs(x), [this, x, dydx](Node& self) {
            if (!needs(x)) return;
            const Tensor<T>& vx = value(x.idx);
            std::vector<T>& gx = grad_of(x.idx);
            for (std::size_t i = 0; i < gx.size(); ++i)
                gx[i] += self.grad[i] * dydx(vx[i], self.value[i]);
        });
        return o;
    }

    static void check_nan(const char* layer, const Tensor<T>& t) {
        if (t.contains_nan())
            throw NumericError(std::string(layer) + ": NaN in input tensor " + shape_str(t.shape()));
    }

    static void require_same_shape(const char* layer, const Tensor<T>& a, const Tensor<T>& b) {
        if (a.shape() != b.shape())
            throw ShapeError(std::string(layer) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }

    std::vector<std::unique_ptr<Node>> nodes_;
    std::vector<std::pair<std::size_t, Parameter<T>*>> bindings_;
    bool consumed_ = false;
};

template <typename T>
const Tensor<T>& Val<T>::value() const { return tape->value(idx); }

template <typename T>
const std::vector<T>& Val<T>::grad() const { return tape->grad(idx); }

}  // namespace fusionbench
