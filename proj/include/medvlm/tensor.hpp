#pragma once

// Reverse-mode differentiable tensor engine.
//
// Design:
//  - BasicTensor<S> is a value-semantic handle to a shared node holding a
//    flat row-major buffer, an optional grad buffer, and (while a graph is
//    alive) parent links plus a backward closure.
//  - The graph is recorded per forward pass when grad mode is on and at
//    least one input requires grad; backward() runs reverse topological
//    order, accumulates additively into leaf grads, then drops all edges
//    and interior grad buffers.
//  - Templated on the scalar type: the pipeline runs BasicTensor<float>;
//    gradient-check tests instantiate the same kernels with double.
//
// Invariants kept everywhere:
//  - product(shape) == value.size()
//  - a node with requires_grad == false never receives a grad buffer
//  - grad, when allocated, has exactly value.size() entries

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "medvlm/errors.hpp"

namespace medvlm {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

// Graph recording switch. Single-threaded by contract: graph construction
// and backward happen on one thread per model instance.
inline bool& grad_mode() {
    static bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    NoGradGuard() : prev_(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <class S>
struct TensorNode {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;  // empty unless requires_grad and touched by backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode<S>>> parents;
    std::function<void(TensorNode<S>&)> backward_fn;

    int64_t numel() const { return static_cast<int64_t>(value.size()); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), S(0));
    }
};

template <class S>
class BasicTensor {
public:
    using Node = TensorNode<S>;

    BasicTensor() = default;

    static BasicTensor zeros(Shape shape, bool requires_grad = false) {
        return filled(std::move(shape), S(0), requires_grad);
    }

    static BasicTensor filled(Shape shape, S v, bool requires_grad = false) {
        check_shape(shape);
        auto n = std::make_shared<Node>();
        n->value.assign(static_cast<size_t>(shape_numel(shape)), v);
        n->shape = std::move(shape);
        n->requires_grad = requires_grad;
        return BasicTensor(std::move(n));
    }

    static BasicTensor from(Shape shape, std::vector<S> data, bool requires_grad = false) {
        check_shape(shape);
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return BasicTensor(std::move(n));
    }

    static BasicTensor scalar(S v, bool requires_grad = false) {
        return from({1}, {v}, requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int size(int axis) const { return node_->shape[static_cast<size_t>(axis)]; }
    int64_t numel() const { return node_->numel(); }

    S* data() { return node_->value.data(); }
    const S* data() const { return node_->value.data(); }
    std::vector<S>& values() { return node_->value; }
    const std::vector<S>& values() const { return node_->value; }

    S item() const {
        if (numel() != 1)
            throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
        return node_->value[0];
    }

    bool requires_grad() const { return node_->requires_grad; }

    void set_requires_grad(bool v) {
        node_->requires_grad = v;
        if (!v) node_->grad.clear();  // never hold a grad buffer when off
    }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<S>& grad() const { return node_->grad; }
    std::vector<S>& grad() { return node_->grad; }

    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), S(0));
    }

    bool is_leaf() const { return node_->parents.empty(); }

    // Reverse-mode sweep from a scalar. Accumulates into leaf grads, then
    // drops the recorded graph (interior grads, edges, closures).
    void backward() const {
        if (!defined() || numel() != 1)
            throw ContractError("backward() requires a defined scalar loss tensor");

        // Iterative post-order DFS over parent edges.
        std::vector<Node*> topo;
        std::unordered_set<Node*> visited;
        struct Frame {
            Node* node;
            size_t next_parent;
        };
        std::vector<Frame> stack;
        stack.push_back({node_.get(), 0});
        visited.insert(node_.get());
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next_parent < f.node->parents.size()) {
                Node* p = f.node->parents[f.next_parent++].get();
                if (visited.insert(p).second) stack.push_back({p, 0});
            } else {
                topo.push_back(f.node);
                stack.pop_back();
            }
        }

        if (node_->requires_grad) {
            node_->ensure_grad();
            node_->grad[0] += S(1);
        }

        for (size_t i = topo.size(); i-- > 0;) {
            Node* n = topo[i];
            if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
        }

        // Drop the graph: interior grads are scratch, leaves keep theirs.
        for (Node* n : topo) {
            if (!n->parents.empty()) {
                n->grad.clear();
                n->parents.clear();
                n->backward_fn = nullptr;
            }
        }
    }

    std::shared_ptr<Node> node() const { return node_; }

    explicit BasicTensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

private:
    static void check_shape(const Shape& shape) {
        for (int e : shape)
            if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
    }

    std::shared_ptr<Node> node_;
};

namespace ops {

namespace detail {

template <class S>
using NodePtr = std::shared_ptr<TensorNode<S>>;

// Wrap an op result. Records the graph edge only when grad mode is on and
// some input requires grad; otherwise emits a plain tensor.
template <class S>
BasicTensor<S> make_result(Shape shape, std::vector<S> value,
                           std::vector<BasicTensor<S>> inputs,
                           std::function<void(TensorNode<S>&)> backward) {
    auto n = std::make_shared<TensorNode<S>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool needs = false;
    if (grad_mode())
        for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
        n->requires_grad = true;
        n->parents.reserve(inputs.size());
        for (auto& in : inputs) n->parents.push_back(in.node());
        n->backward_fn = std::move(backward);
    }
    return BasicTensor<S>(std::move(n));
}

// Accumulate g into the parent's grad buffer, respecting the freeze
// contract: a parent with requires_grad == false is skipped entirely.
template <class S, class Fn>
void accum_into(TensorNode<S>& parent, Fn&& fill) {
    if (!parent.requires_grad) return;
    parent.ensure_grad();
    fill(parent.grad.data());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul and friends
// ---------------------------------------------------------------------------

template <class S>
BasicTensor<S> matmul(const BasicTensor<S>& a, const BasicTensor<S>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.size(1) != b.size(0))
        throw ShapeError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const int m = a.size(0), k = a.size(1), n = b.size(1);
    std::vector<S> out(static_cast<size_t>(m) * n, S(0));
    const S* A = a.data();
    const S* B = b.data();
    // ikj order: streams rows of B and C, vectorizes on j.
    for (int i = 0; i < m; ++i) {
        S* crow = out.data() + static_cast<size_t>(i) * n;
        const S* arow = A + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const S av = arow[kk];
            const S* brow = B + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    auto an = a.node();
    auto bn = b.node();
    return detail::make_result<S>(
        {m, n}, std::move(out), {a, b}, [an, bn, m, k, n](TensorNode<S>& self) {
            const S* G = self.grad.data();
            detail::accum_into(*an, [&](S* dA) {
                // dA = G * B^T; transpose B first so the inner loop streams
                // contiguous rows and vectorizes like the forward kernel.
                const S* B = bn->value.data();
                std::vector<S> bt(static_cast<size_t>(k) * n);
                for (int kk = 0; kk < k; ++kk)
                    for (int j = 0; j < n; ++j)
                        bt[static_cast<size_t>(j) * k + kk] = B[static_cast<size_t>(kk) * n + j];
                for (int i = 0; i < m; ++i) {
                    const S* grow = G + static_cast<size_t>(i) * n;
                    S* darow = dA + static_cast<size_t>(i) * k;
                    for (int j = 0; j < n; ++j) {
                        const S gv = grow[j];
                        const S* btrow = bt.data() + static_cast<size_t>(j) * k;
                        for (int kk = 0; kk < k; ++kk) darow[kk] += gv * btrow[kk];
                    }
                }
            });
            detail::accum_into(*bn, [&](S* dB) {
                // dB[kk,j] += sum_i A[i,kk] * G[i,j]
                const S* A = an->value.data();
                for (int i = 0; i < m; ++i) {
                    const S* arow = A + static_cast<size_t>(i) * k;
                    const S* grow = G + static_cast<size_t>(i) * n;
                    for (int kk = 0; kk < k; ++kk) {
                        const S av = arow[kk];
                        S* dbrow = dB + static_cast<size_t>(kk) * n;
                        for (int j = 0; j < n; ++j) dbrow[j] += av * grow[j];
                    }
                }
            });
        });
}

template <class S>
BasicTensor<S> transpose(const BasicTensor<S>& x) {
    if (x.ndim() != 2) throw ShapeError("transpose expects a 2-d tensor, got " + shape_str(x.shape()));
    const int m = x.size(0), n = x.size(1);
    std::vector<S> out(static_cast<size_t>(m) * n);
    const S* X = x.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = X[static_cast<size_t>(i) * n + j];
    auto xn = x.node();
    return detail::make_result<S>({n, m}, std::move(out), {x}, [xn, m, n](TensorNode<S>& self) {
        detail::accum_into(*xn, [&](S* dX) {
            const S* G = self.grad.data();
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < m; ++i)
                    dX[static_cast<size_t>(i) * n + j] += G[static_cast<size_t>(j) * m + i];
        });
    });
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

// add supports two cases: identical shapes, or b a vector matching a's last
// extent (row-broadcast bias add).
template <class S>
BasicTensor<S> add(const BasicTensor<S>& a, const BasicTensor<S>& b) {
    const bool same = a.shape() == b.shape();
    const bool rowvec = b.ndim() == 1 && a.ndim() >= 1 && a.size(a.ndim() - 1) == b.size(0);
    if (!same && !rowvec)
        throw ShapeError("add shape mismatch: " + shape_str(a.shape()) + " + " + shape_str(b.shape()));
    std::vector<S> out(a.values());
    if (same) {
        const S* B = b.data();
        for (size_t i = 0; i < out.size(); ++i) out[i] += B[i];
    } else {
        const int d = b.size(0);
        const int64_t rows = a.numel() / d;
        const S* B = b.data();
        for (int64_t r = 0; r < rows; ++r) {
            S* row = out.data() + r * d;
            for (int j = 0; j < d; ++j) row[j] += B[j];
        }
    }
    auto an = a.node();
    auto bn = b.node();
    return detail::make_result<S>(a.shape(), std::move(out), {a, b},
                                  [an, bn, same](TensorNode<S>& self) {
                                      const S* G = self.grad.data();
                                      detail::accum_into(*an, [&](S* dA) {
                                          for (size_t i = 0; i < self.grad.size(); ++i) dA[i] += G[i];
                                      });
                                      detail::accum_into(*bn, [&](S* dB) {
                                          if (same) {
                                              for (size_t i = 0; i < self.grad.size(); ++i) dB[i] += G[i];
                                          } else {
                                              const int d = bn->shape[0];
                                              const int64_t rows = self.numel() / d;
                                              for (int64_t r = 0; r < rows; ++r) {
                                                  const S* grow = G + r * d;
                                                  for (int j = 0; j < d; ++j) dB[j] += grow[j];
                                              }
                                          }
                                      });
                                  });
}

template <class S>
BasicTensor<S> mul(const BasicTensor<S>& a, const BasicTensor<S>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul shape mismatch: " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
    std::vector<S> out(a.values());
    const S* B = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
    auto an = a.node();
    auto bn = b.node();
    return detail::make_result<S>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<S>& self) {
        const S* G = self.grad.data();
        detail::accum_into(*an, [&](S* dA) {
            const S* B = bn->value.data();
            for (size_t i = 0; i < self.grad.size(); ++i) dA[i] += G[i] * B[i];
        });
        detail::accum_into(*bn, [&](S* dB) {
            const S* A = an->value.data();
            for (size_t i = 0; i < self.grad.size(); ++i) dB[i] += G[i] * A[i];
        });
    });
}

template <class S>
BasicTensor<S> mul_scalar(const BasicTensor<S>& a, S s) {
    std::vector<S> out(a.values());
    for (auto& v : out) v *= s;
    auto an = a.node();
    return detail::make_result<S>(a.shape(), std::move(out), {a}, [an, s](TensorNode<S>& self) {
        detail::accum_into(*an, [&](S* dA) {
            const S* G = self.grad.data();
            for (size_t i = 0; i < self.grad.size(); ++i) dA[i] += G[i] * s;
        });
    });
}

// Exact GELU: 0.5 x (1 + erf(x / sqrt(2))).
template <class S>
BasicTensor<S> gelu(const BasicTensor<S>& x) {
    const S inv_sqrt2 = S(0.7071067811865475);
    std::vector<S> out(x.values());
    for (auto& v : out) v = S(0.5) * v * (S(1) + std::erf(v * inv_sqrt2));
    auto xn = x.node();
    return detail::make_result<S>(x.shape(), std::move(out), {x}, [xn](TensorNode<S>& self) {
        detail::accum_into(*xn, [&](S* dX) {
            const S* G = self.grad.data();
            const S* X = xn->value.data();
            const S inv_sqrt2 = S(0.7071067811865475);
            const S inv_sqrt2pi = S(0.3989422804014327);
            for (size_t i = 0; i < self.grad.size(); ++i) {
                const S v = X[i];
                const S cdf = S(0.5) * (S(1) + std::erf(v * inv_sqrt2));
                const S pdf = inv_sqrt2pi * std::exp(S(-0.5) * v * v);
                dX[i] += G[i] * (cdf + v * pdf);
            }
        });
    });
}

// ---------------------------------------------------------------------------
// reductions / normalization
// ---------------------------------------------------------------------------

namespace detail {
// Decompose a shape around an axis into (outer, len, inner) so index
// arithmetic works for any ndim.
inline void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& len, int64_t& inner) {
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw ShapeError("axis " + std::to_string(axis) + " out of bounds for " + shape_str(s));
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
    len = s[static_cast<size_t>(axis)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
}
}  // namespace detail

// Max-subtracted softmax along an axis.
template <class S>
BasicTensor<S> softmax(const BasicTensor<S>& x, int axis) {
    int64_t outer, len, inner;
    detail::axis_split(x.shape(), axis, outer, len, inner);
    std::vector<S> out(x.values());
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            S* base = out.data() + o * len * inner + in;
            S mx = base[0];
            for (int64_t t = 1; t < len; ++t) mx = std::max(mx, base[t * inner]);
            S sum = S(0);
            for (int64_t t = 0; t < len; ++t) {
                const S e = std::exp(base[t * inner] - mx);
                base[t * inner] = e;
                sum += e;
            }
            const S inv = S(1) / sum;
            for (int64_t t = 0; t < len; ++t) base[t * inner] *= inv;
        }
    }
    auto xn = x.node();
    return detail::make_result<S>(
        x.shape(), std::move(out), {x}, [xn, outer, len, inner](TensorNode<S>& self) {
            detail::accum_into(*xn, [&](S* dX) {
                const S* G = self.grad.data();
                const S* Y = self.value.data();
                for (int64_t o = 0; o < outer; ++o) {
                    for (int64_t in = 0; in < inner; ++in) {
                        const int64_t base = o * len * inner + in;
                        S dot = S(0);
                        for (int64_t t = 0; t < len; ++t) {
                            const int64_t idx = base + t * inner;
                            dot += G[idx] * Y[idx];
                        }
                        for (int64_t t = 0; t < len; ++t) {
                            const int64_t idx = base + t * inner;
                            dX[idx] += Y[idx] * (G[idx] - dot);
                        }
                    }
                }
            });
        });
}

// Per-row standardization over the last axis, then affine with gamma/beta.
template <class S>
BasicTensor<S> layer_norm(const BasicTensor<S>& x, const BasicTensor<S>& gamma,
                          const BasicTensor<S>& beta, S eps) {
    const int d = x.size(x.ndim() - 1);
    if (gamma.ndim() != 1 || beta.ndim() != 1 || gamma.size(0) != d || beta.size(0) != d)
        throw ShapeError("layer_norm affine params must be [" + std::to_string(d) + "], got " +
                         shape_str(gamma.shape()) + " / " + shape_str(beta.shape()));
    const int64_t rows = x.numel() / d;
    std::vector<S> out(x.values());
    std::vector<S> inv_std(static_cast<size_t>(rows));
    const S* Gm = gamma.data();
    const S* Bt = beta.data();
    for (int64_t r = 0; r < rows; ++r) {
        S* row = out.data() + r * d;
        S mean = S(0);
        for (int j = 0; j < d; ++j) mean += row[j];
        mean /= S(d);
        S var = S(0);
        for (int j = 0; j < d; ++j) {
            const S c = row[j] - mean;
            var += c * c;
        }
        var /= S(d);
        const S is = S(1) / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(r)] = is;
        for (int j = 0; j < d; ++j) row[j] = (row[j] - mean) * is * Gm[j] + Bt[j];
    }
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    return detail::make_result<S>(
        x.shape(), std::move(out), {x, gamma, beta},
        [xn, gn, bn, rows, d, inv_std = std::move(inv_std)](TensorNode<S>& self) {
            const S* G = self.grad.data();
            const S* X = xn->value.data();
            const S* Gm = gn->value.data();
            // Recover xhat from x (cheap, avoids caching another buffer).
            auto xhat_row = [&](int64_t r, std::vector<S>& buf) {
                const S* row = X + r * d;
                S mean = S(0);
                for (int j = 0; j < d; ++j) mean += row[j];
                mean /= S(d);
                const S is = inv_std[static_cast<size_t>(r)];
                for (int j = 0; j < d; ++j) buf[static_cast<size_t>(j)] = (row[j] - mean) * is;
            };
            std::vector<S> xhat(static_cast<size_t>(d));
            detail::accum_into(*gn, [&](S* dGm) {
                for (int64_t r = 0; r < rows; ++r) {
                    xhat_row(r, xhat);
                    const S* grow = G + r * d;
                    for (int j = 0; j < d; ++j) dGm[j] += grow[j] * xhat[static_cast<size_t>(j)];
                }
            });
            detail::accum_into(*bn, [&](S* dBt) {
                for (int64_t r = 0; r < rows; ++r) {
                    const S* grow = G + r * d;
                    for (int j = 0; j < d; ++j) dBt[j] += grow[j];
                }
            });
            detail::accum_into(*xn, [&](S* dX) {
                for (int64_t r = 0; r < rows; ++r) {
                    xhat_row(r, xhat);
                    const S* grow = G + r * d;
                    const S is = inv_std[static_cast<size_t>(r)];
                    S mean_dxhat = S(0), mean_dxhat_xhat = S(0);
                    for (int j = 0; j < d; ++j) {
                        const S dxh = grow[j] * Gm[j];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xhat[static_cast<size_t>(j)];
                    }
                    mean_dxhat /= S(d);
                    mean_dxhat_xhat /= S(d);
                    S* dxrow = dX + r * d;
                    for (int j = 0; j < d; ++j) {
                        const S dxh = grow[j] * Gm[j];
                        dxrow[j] += is * (dxh - mean_dxhat - xhat[static_cast<size_t>(j)] * mean_dxhat_xhat);
                    }
                }
            });
        });
}

template <class S>
BasicTensor<S> mean_axis(const BasicTensor<S>& x, int axis) {
    int64_t outer, len, inner;
    detail::axis_split(x.shape(), axis, outer, len, inner);
    Shape out_shape;
    for (int i = 0; i < x.ndim(); ++i)
        if (i != axis) out_shape.push_back(x.size(i));
    if (out_shape.empty()) out_shape.push_back(1);
    std::vector<S> out(static_cast<size_t>(outer * inner), S(0));
    const S* X = x.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t t = 0; t < len; ++t) {
            const S* src = X + (o * len + t) * inner;
            S* dst = out.data() + o * inner;
            for (int64_t in = 0; in < inner; ++in) dst[in] += src[in];
        }
    const S inv = S(1) / S(len);
    for (auto& v : out) v *= inv;
    auto xn = x.node();
    return detail::make_result<S>(std::move(out_shape), std::move(out), {x},
                                  [xn, outer, len, inner, inv](TensorNode<S>& self) {
                                      detail::accum_into(*xn, [&](S* dX) {
                                          const S* G = self.grad.data();
                                          for (int64_t o = 0; o < outer; ++o)
                                              for (int64_t t = 0; t < len; ++t) {
                                                  S* dst = dX + (o * len + t) * inner;
                                                  const S* src = G + o * inner;
                                                  for (int64_t in = 0; in < inner; ++in)
                                                      dst[in] += src[in] * inv;
                                              }
                                      });
                                  });
}

template <class S>
BasicTensor<S> sum_all(const BasicTensor<S>& x) {
    S acc = S(0);
    for (const S v : x.values()) acc += v;
    auto xn = x.node();
    return detail::make_result<S>({1}, {acc}, {x}, [xn](TensorNode<S>& self) {
        detail::accum_into(*xn, [&](S* dX) {
            const S g = self.grad[0];
            for (size_t i = 0; i < xn->value.size(); ++i) dX[i] += g;
        });
    });
}

// ---------------------------------------------------------------------------
// shape plumbing
// ---------------------------------------------------------------------------

template <class S>
BasicTensor<S> reshape(const BasicTensor<S>& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.numel())
        throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(new_shape) +
                         " changes element count");
    auto xn = x.node();
    return detail::make_result<S>(std::move(new_shape), x.values(), {x}, [xn](TensorNode<S>& self) {
        detail::accum_into(*xn, [&](S* dX) {
            const S* G = self.grad.data();
            for (size_t i = 0; i < self.grad.size(); ++i) dX[i] += G[i];
        });
    });
}

template <class S>
BasicTensor<S> concat(const std::vector<BasicTensor<S>>& parts, int axis) {
    if (parts.empty()) throw ContractError("concat of zero tensors");
    const Shape& first = parts[0].shape();
    int64_t total = 0;
    for (const auto& p : parts) {
        if (p.ndim() != static_cast<int>(first.size()))
            throw ShapeError("concat rank mismatch: " + shape_str(first) + " vs " + shape_str(p.shape()));
        for (int i = 0; i < p.ndim(); ++i)
            if (i != axis && p.size(i) != first[static_cast<size_t>(i)])
                throw ShapeError("concat extent mismatch on axis " + std::to_string(i) + ": " +
                                 shape_str(first) + " vs " + shape_str(p.shape()));
        total += p.size(axis);
    }
    Shape out_shape = first;
    out_shape[static_cast<size_t>(axis)] = static_cast<int>(total);
    int64_t outer, len_unused, inner;
    detail::axis_split(out_shape, axis, outer, len_unused, inner);
    std::vector<S> out(static_cast<size_t>(shape_numel(out_shape)));
    int64_t offset = 0;  // running offset along the concat axis
    for (const auto& p : parts) {
        const int64_t plen = p.size(axis);
        const S* src = p.data();
        for (int64_t o = 0; o < outer; ++o) {
            S* dst = out.data() + (o * total + offset) * inner;
            const S* s = src + o * plen * inner;
            std::copy(s, s + plen * inner, dst);
        }
        offset += plen;
    }
    std::vector<detail::NodePtr<S>> pnodes;
    for (const auto& p : parts) pnodes.push_back(p.node());
    return detail::make_result<S>(
        out_shape, std::move(out), parts, [pnodes, outer, inner, total, axis](TensorNode<S>& self) {
            const S* G = self.grad.data();
            int64_t offset = 0;
            for (auto& pn : pnodes) {
                const int64_t plen = pn->shape[static_cast<size_t>(axis)];
                detail::accum_into(*pn, [&](S* dP) {
                    for (int64_t o = 0; o < outer; ++o) {
                        const S* src = G + (o * total + offset) * inner;
                        S* dst = dP + o * plen * inner;
                        for (int64_t i = 0; i < plen * inner; ++i) dst[i] += src[i];
                    }
                });
                offset += plen;
            }
        });
}

// Contiguous row range of a 2-d tensor (position table lookups).
template <class S>
BasicTensor<S> slice_rows(const BasicTensor<S>& x, int start, int len) {
    if (x.ndim() != 2) throw ShapeError("slice_rows expects a 2-d tensor, got " + shape_str(x.shape()));
    const int rows = x.size(0), d = x.size(1);
    if (start < 0 || len <= 0 || start + len > rows)
        throw ShapeError("slice_rows [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") out of bounds for " + shape_str(x.shape()));
    std::vector<S> out(x.data() + static_cast<size_t>(start) * d,
                       x.data() + static_cast<size_t>(start + len) * d);
    auto xn = x.node();
    return detail::make_result<S>({len, d}, std::move(out), {x}, [xn, start, d, len](TensorNode<S>& self) {
        detail::accum_into(*xn, [&](S* dX) {
            const S* G = self.grad.data();
            S* dst = dX + static_cast<size_t>(start) * d;
            for (int64_t i = 0; i < static_cast<int64_t>(len) * d; ++i) dst[i] += G[i];
        });
    });
}

// Contiguous slice along the last axis (head split).
template <class S>
BasicTensor<S> slice_last(const BasicTensor<S>& x, int start, int len) {
    const int d = x.size(x.ndim() - 1);
    if (start < 0 || len <= 0 || start + len > d)
        throw ShapeError("slice_last [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") out of bounds for last extent " + std::to_string(d));
    const int64_t rows = x.numel() / d;
    Shape out_shape = x.shape();
    out_shape.back() = len;
    std::vector<S> out(static_cast<size_t>(rows) * len);
    const S* X = x.data();
    for (int64_t r = 0; r < rows; ++r)
        std::copy(X + r * d + start, X + r * d + start + len, out.data() + r * len);
    auto xn = x.node();
    return detail::make_result<S>(std::move(out_shape), std::move(out), {x},
                                  [xn, rows, d, start, len](TensorNode<S>& self) {
                                      detail::accum_into(*xn, [&](S* dX) {
                                          const S* G = self.grad.data();
                                          for (int64_t r = 0; r < rows; ++r) {
                                              S* dst = dX + r * d + start;
                                              const S* src = G + r * len;
                                              for (int j = 0; j < len; ++j) dst[j] += src[j];
                                          }
                                      });
                                  });
}

// ---------------------------------------------------------------------------
// token / loss ops
// ---------------------------------------------------------------------------

// Row gather: out[t, :] = table[ids[t], :]. Backward scatter-adds.
template <class S>
BasicTensor<S> embedding(const BasicTensor<S>& table, const std::vector<int>& ids) {
    if (table.ndim() != 2) throw ShapeError("embedding table must be 2-d, got " + shape_str(table.shape()));
    const int v = table.size(0), d = table.size(1);
    for (const int id : ids)
        if (id < 0 || id >= v)
            throw ContractError("embedding id " + std::to_string(id) + " out of range [0, " +
                                std::to_string(v) + ")");
    const int t = static_cast<int>(ids.size());
    std::vector<S> out(static_cast<size_t>(t) * d);
    const S* T = table.data();
    for (int i = 0; i < t; ++i)
        std::copy(T + static_cast<size_t>(ids[static_cast<size_t>(i)]) * d,
                  T + static_cast<size_t>(ids[static_cast<size_t>(i)]) * d + d,
                  out.data() + static_cast<size_t>(i) * d);
    auto tn = table.node();
    return detail::make_result<S>({t, d}, std::move(out), {table}, [tn, ids, d](TensorNode<S>& self) {
        detail::accum_into(*tn, [&](S* dT) {
            const S* G = self.grad.data();
            for (size_t i = 0; i < ids.size(); ++i) {
                S* dst = dT + static_cast<size_t>(ids[i]) * d;
                const S* src = G + i * d;
                for (int j = 0; j < d; ++j) dst[j] += src[j];
            }
        });
    });
}

// -log softmax(logits)[target] on a 1-d logit vector, via log-sum-exp.
template <class S>
BasicTensor<S> cross_entropy(const BasicTensor<S>& logits, int target) {
    if (logits.ndim() != 1)
        throw ShapeError("cross_entropy expects 1-d logits, got " + shape_str(logits.shape()));
    const int v = logits.size(0);
    if (target < 0 || target >= v)
        throw ContractError("cross_entropy target " + std::to_string(target) + " out of range [0, " +
                            std::to_string(v) + ")");
    const S* X = logits.data();
    S mx = X[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, X[j]);
    S sum = S(0);
    for (int j = 0; j < v; ++j) sum += std::exp(X[j] - mx);
    const S loss = std::log(sum) + mx - X[target];
    auto xn = logits.node();
    return detail::make_result<S>({1}, {loss}, {logits}, [xn, target, v, mx, sum](TensorNode<S>& self) {
        detail::accum_into(*xn, [&](S* dX) {
            const S g = self.grad[0];
            const S* X = xn->value.data();
            const S inv = S(1) / sum;
            for (int j = 0; j < v; ++j) {
                S p = std::exp(X[j] - mx) * inv;
                if (j == target) p -= S(1);
                dX[j] += g * p;
            }
        });
    });
}

// Mean cross-entropy over masked positions of a [T x V] logit matrix, with
// next-token alignment: mask[t] == 1 supervises predicting ids[t] from the
// logits at row t-1. Position 0 must not be masked (it has no predecessor).
template <class S>
BasicTensor<S> masked_next_token_ce(const BasicTensor<S>& logits, const std::vector<int>& ids,
                                    const std::vector<uint8_t>& mask) {
    if (logits.ndim() != 2)
        throw ShapeError("masked_next_token_ce expects [T x V] logits, got " + shape_str(logits.shape()));
    const int t = logits.size(0), v = logits.size(1);
    if (static_cast<int>(ids.size()) != t || static_cast<int>(mask.size()) != t)
        throw ShapeError("masked_next_token_ce: ids/mask length must equal T=" + std::to_string(t));
    int n_masked = 0;
    for (int i = 0; i < t; ++i) {
        if (!mask[static_cast<size_t>(i)]) continue;
        if (i == 0) throw ContractError("masked_next_token_ce: position 0 cannot be supervised");
        if (ids[static_cast<size_t>(i)] < 0 || ids[static_cast<size_t>(i)] >= v)
            throw ContractError("masked_next_token_ce: target id out of range at position " +
                                std::to_string(i));
        ++n_masked;
    }
    if (n_masked == 0) throw ContractError("masked_next_token_ce: loss mask is all zeros");

    const S* X = logits.data();
    S total = S(0);
    for (int i = 0; i < t; ++i) {
        if (!mask[static_cast<size_t>(i)]) continue;
        const S* row = X + static_cast<size_t>(i - 1) * v;
        S mx = row[0];
        for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        S sum = S(0);
        for (int j = 0; j < v; ++j) sum += std::exp(row[j] - mx);
        total += std::log(sum) + mx - row[ids[static_cast<size_t>(i)]];
    }
    const S loss = total / S(n_masked);
    auto xn = logits.node();
    return detail::make_result<S>(
        {1}, {loss}, {logits}, [xn, ids, mask, t, v, n_masked](TensorNode<S>& self) {
            detail::accum_into(*xn, [&](S* dX) {
                const S g = self.grad[0] / S(n_masked);
                const S* X = xn->value.data();
                for (int i = 0; i < t; ++i) {
                    if (!mask[static_cast<size_t>(i)]) continue;
                    const S* row = X + static_cast<size_t>(i - 1) * v;
                    S* drow = dX + static_cast<size_t>(i - 1) * v;
                    S mx = row[0];
                    for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
                    S sum = S(0);
                    for (int j = 0; j < v; ++j) sum += std::exp(row[j] - mx);
                    const S inv = S(1) / sum;
                    for (int j = 0; j < v; ++j) {
                        S p = std::exp(row[j] - mx) * inv;
                        if (j == ids[static_cast<size_t>(i)]) p -= S(1);
                        drow[j] += g * p;
                    }
                }
            });
        });
}

// Adds -1e9 to strictly-upper-triangle entries of a square score matrix.
// Downstream softmax then assigns those keys exactly zero weight (the exp
// underflows), which keeps full and incremental decoding bit-identical.
template <class S>
BasicTensor<S> add_causal_mask(const BasicTensor<S>& scores) {
    if (scores.ndim() != 2 || scores.size(0) != scores.size(1))
        throw ShapeError("add_causal_mask expects square scores, got " + shape_str(scores.shape()));
    const int t = scores.size(0);
    std::vector<S> out(scores.values());
    for (int i = 0; i < t; ++i) {
        S* row = out.data() + static_cast<size_t>(i) * t;
        for (int j = i + 1; j < t; ++j) row[j] += S(-1e9);
    }
    auto xn = scores.node();
    return detail::make_result<S>(scores.shape(), std::move(out), {scores}, [xn](TensorNode<S>& self) {
        detail::accum_into(*xn, [&](S* dX) {
            const S* G = self.grad.data();
            for (size_t i = 0; i < self.grad.size(); ++i) dX[i] += G[i];
        });
    });
}

// ---------------------------------------------------------------------------
// patch extraction
// ---------------------------------------------------------------------------

// [H, W, C] -> [gh*gw, ph*pw*C]; rows ordered (gy, gx), elements (py, px, c).
template <class S>
BasicTensor<S> patchify2d(const BasicTensor<S>& image, int ph, int pw) {
    if (image.ndim() != 3)
        throw ShapeError("patchify2d expects [H x W x C], got " + shape_str(image.shape()));
    const int h = image.size(0), w = image.size(1), c = image.size(2);
    if (h % ph != 0 || w % pw != 0)
        throw ShapeError("image " + shape_str(image.shape()) + " not divisible by patch " +
                         std::to_string(ph) + "x" + std::to_string(pw));
    const int gh = h / ph, gw = w / pw;
    const int pd = ph * pw * c;
    std::vector<S> out(static_cast<size_t>(gh) * gw * pd);
    const S* X = image.data();
    size_t o = 0;
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx)
            for (int py = 0; py < ph; ++py) {
                const S* src = X + ((static_cast<size_t>(gy) * ph + py) * w + static_cast<size_t>(gx) * pw) * c;
                std::copy(src, src + static_cast<size_t>(pw) * c, out.data() + o);
                o += static_cast<size_t>(pw) * c;
            }
    auto xn = image.node();
    return detail::make_result<S>({gh * gw, pd}, std::move(out), {image},
                                  [xn, h, w, c, ph, pw, gh, gw](TensorNode<S>& self) {
                                      detail::accum_into(*xn, [&](S* dX) {
                                          const S* G = self.grad.data();
                                          size_t o = 0;
                                          for (int gy = 0; gy < gh; ++gy)
                                              for (int gx = 0; gx < gw; ++gx)
                                                  for (int py = 0; py < ph; ++py) {
                                                      S* dst = dX + ((static_cast<size_t>(gy) * ph + py) * w +
                                                                     static_cast<size_t>(gx) * pw) * c;
                                                      for (int i = 0; i < pw * c; ++i) dst[i] += G[o + i];
                                                      o += static_cast<size_t>(pw) * c;
                                                  }
                                      });
                                  });
}

// [N, H, W] -> [gn*gh*gw, pn*ph*pw]; rows ordered (gz, gy, gx), elements (pz, py, px).
template <class S>
BasicTensor<S> patchify3d(const BasicTensor<S>& volume, int pn, int ph, int pw) {
    if (volume.ndim() != 3)
        throw ShapeError("patchify3d expects [N x H x W], got " + shape_str(volume.shape()));
    const int n = volume.size(0), h = volume.size(1), w = volume.size(2);
    if (n % pn != 0 || h % ph != 0 || w % pw != 0)
        throw ShapeError("volume " + shape_str(volume.shape()) + " not divisible by patch " +
                         std::to_string(pn) + "x" + std::to_string(ph) + "x" + std::to_string(pw));
    const int gn = n / pn, gh = h / ph, gw = w / pw;
    const int pd = pn * ph * pw;
    std::vector<S> out(static_cast<size_t>(gn) * gh * gw * pd);
    const S* X = volume.data();
    size_t o = 0;
    for (int gz = 0; gz < gn; ++gz)
        for (int gy = 0; gy < gh; ++gy)
            for (int gx = 0; gx < gw; ++gx)
                for (int pz = 0; pz < pn; ++pz)
                    for (int py = 0; py < ph; ++py) {
                        const S* src = X + (static_cast<size_t>(gz * pn + pz) * h + gy * ph + py) * w +
                                       static_cast<size_t>(gx) * pw;
                        std::copy(src, src + pw, out.data() + o);
                        o += static_cast<size_t>(pw);
                    }
    auto xn = volume.node();
    return detail::make_result<S>(
        {gn * gh * gw, pd}, std::move(out), {volume},
        [xn, h, w, pn, ph, pw, gn, gh, gw](TensorNode<S>& self) {
            detail::accum_into(*xn, [&](S* dX) {
                const S* G = self.grad.data();
                size_t o = 0;
                for (int gz = 0; gz < gn; ++gz)
                    for (int gy = 0; gy < gh; ++gy)
                        for (int gx = 0; gx < gw; ++gx)
                            for (int pz = 0; pz < pn; ++pz)
                                for (int py = 0; py < ph; ++py) {
                                    S* dst = dX + (static_cast<size_t>(gz * pn + pz) * h + gy * ph + py) * w +
                                             static_cast<size_t>(gx) * pw;
                                    for (int i = 0; i < pw; ++i) dst[i] += G[o + i];
                                    o += static_cast<size_t>(pw);
                                }
            });
        });
}

}  // namespace ops

using Tensor = BasicTensor<float>;

}  // namespace medvlm
