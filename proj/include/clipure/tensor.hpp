#pragma once

// Dense tensors with reverse-mode autodiff. Define-by-run: every primitive
// records itself on the implicit tape (the node graph) whenever gradients
// are enabled and at least one input requires them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace clipure {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct DegenerateNorm : std::runtime_error {
    explicit DegenerateNorm(const std::string& msg)
        : std::runtime_error("degenerate norm: " + msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

// Norm below this is treated as a zero vector.
inline constexpr double kNormEps = 1e-12;

inline bool& grad_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
    ~NoGradGuard() { grad_enabled() = prev; }
};

template <typename T>
struct Node {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Accumulates into parents' grads given this node's grad.
    std::function<void(const Node&)> backprop;

    std::size_t size() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

template <typename T>
class Tensor {
public:
    Tensor() : node_(std::make_shared<Node<T>>()) {}

    Tensor(std::vector<int> shape, std::vector<T> data, bool requires_grad = false)
        : node_(std::make_shared<Node<T>>()) {
        std::size_t expect = 1;
        for (int d : shape) {
            if (d < 0) throw ShapeError("negative dimension");
            expect *= static_cast<std::size_t>(d);
        }
        if (expect != data.size())
            throw ShapeError("product(shape) != data length (" + std::to_string(expect) + " vs " +
                             std::to_string(data.size()) + ")");
        node_->shape = std::move(shape);
        node_->value = std::move(data);
        node_->requires_grad = requires_grad;
        check_finite("tensor construction");
    }

    static Tensor scalar(T v, bool requires_grad = false) {
        return Tensor({}, {v}, requires_grad);
    }
    static Tensor vec(std::vector<T> data, bool requires_grad = false) {
        int n = static_cast<int>(data.size());
        return Tensor({n}, std::move(data), requires_grad);
    }
    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
    }

    const std::vector<int>& shape() const { return node_->shape; }
    std::size_t size() const { return node_->value.size(); }
    int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
    int ndim() const { return static_cast<int>(node_->shape.size()); }

    const std::vector<T>& data() const { return node_->value; }
    std::vector<T>& mutable_data() { return node_->value; }

    T item() const {
        if (size() != 1) throw ShapeError("item() on non-scalar tensor");
        return node_->value[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    const std::vector<T>& grad() const {
        if (!has_grad()) throw NumericError("grad not populated");
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

    // Same values, cut off from the tape.
    Tensor detach() const { return Tensor(node_->shape, node_->value, false); }

    std::shared_ptr<Node<T>> node() const { return node_; }

    void check_finite(const std::string& where) const {
        for (T v : node_->value)
            if (!std::isfinite(static_cast<double>(v)))
                throw NumericError("non-finite value in " + where);
    }

private:
    explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}
    std::shared_ptr<Node<T>> node_;

    template <typename U>
    friend Tensor<U> make_op(std::vector<int> shape, std::vector<U> value,
                             std::vector<Tensor<U>> inputs,
                             std::function<void(const Node<U>&)> backprop,
                             const std::string& opname);
};

template <typename T>
Tensor<T> make_op(std::vector<int> shape, std::vector<T> value, std::vector<Tensor<T>> inputs,
                  std::function<void(const Node<T>&)> backprop, const std::string& opname) {
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    for (T v : node->value)
        if (!std::isfinite(static_cast<double>(v))) throw NumericError("non-finite output of " + opname);
    bool track = false;
    if (grad_enabled())
        for (const auto& in : inputs)
            if (in.node()->requires_grad) track = true;
    if (track) {
        node->requires_grad = true;
        for (const auto& in : inputs) node->parents.push_back(in.node());
        node->backprop = std::move(backprop);
    }
    return Tensor<T>(node);
}

namespace detail {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) throw ShapeError(std::string(op) + ": operands differ in shape");
}

template <typename T>
void require_vector(const Tensor<T>& v, const char* op) {
    if (v.ndim() != 1) throw ShapeError(std::string(op) + ": expected a vector");
}

template <typename T>
void require_matrix(const Tensor<T>& m, const char* op) {
    if (m.ndim() != 2) throw ShapeError(std::string(op) + ": expected a matrix");
}

template <typename T>
T l2(const std::vector<T>& v) {
    double s = 0;
    for (T x : v) s += static_cast<double>(x) * static_cast<double>(x);
    return static_cast<T>(std::sqrt(s));
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto pa = a.node(), pb = b.node();
    return make_op<T>(a.shape(), std::move(out), {a, b},
                      [pa, pb](const Node<T>& n) {
                          if (pa->requires_grad) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < n.size(); ++i) pa->grad[i] += n.grad[i];
                          }
                          if (pb->requires_grad) {
                              pb->ensure_grad();
                              for (std::size_t i = 0; i < n.size(); ++i) pb->grad[i] += n.grad[i];
                          }
                      },
                      "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto pa = a.node(), pb = b.node();
    return make_op<T>(a.shape(), std::move(out), {a, b},
                      [pa, pb](const Node<T>& n) {
                          if (pa->requires_grad) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < n.size(); ++i) pa->grad[i] += n.grad[i];
                          }
                          if (pb->requires_grad) {
                              pb->ensure_grad();
                              for (std::size_t i = 0; i < n.size(); ++i) pb->grad[i] -= n.grad[i];
                          }
                      },
                      "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto pa = a.node(), pb = b.node();
    return make_op<T>(a.shape(), std::move(out), {a, b},
                      [pa, pb](const Node<T>& n) {
                          if (pa->requires_grad) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < n.size(); ++i)
                                  pa->grad[i] += n.grad[i] * pb->value[i];
                          }
                          if (pb->requires_grad) {
                              pb->ensure_grad();
                              for (std::size_t i = 0; i < n.size(); ++i)
                                  pb->grad[i] += n.grad[i] * pa->value[i];
                          }
                      },
                      "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
    auto pa = a.node();
    return make_op<T>(a.shape(), std::move(out), {a},
                      [pa, s](const Node<T>& n) {
                          pa->ensure_grad();
                          for (std::size_t i = 0; i < n.size(); ++i) pa->grad[i] += n.grad[i] * s;
                      },
                      "scale");
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return scale(a, T(-1));
}

// Multiply a tensor by a scalar tensor (the scalar participates in the tape).
template <typename T>
Tensor<T> smul(const Tensor<T>& a, const Tensor<T>& s) {
    if (s.size() != 1) throw ShapeError("smul: second operand must be scalar");
    T sv = s.data()[0];
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * sv;
    auto pa = a.node(), ps = s.node();
    return make_op<T>(a.shape(), std::move(out), {a, s},
                      [pa, ps, sv](const Node<T>& n) {
                          if (pa->requires_grad) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < n.size(); ++i)
                                  pa->grad[i] += n.grad[i] * sv;
                          }
                          if (ps->requires_grad) {
                              ps->ensure_grad();
                              T acc = 0;
                              for (std::size_t i = 0; i < n.size(); ++i)
                                  acc += n.grad[i] * pa->value[i];
                              ps->grad[0] += acc;
                          }
                      },
                      "smul");
}

template <typename T>
Tensor<T> sdiv(const Tensor<T>& a, const Tensor<T>& s) {
    if (s.size() != 1) throw ShapeError("sdiv: second operand must be scalar");
    T sv = s.data()[0];
    if (std::abs(static_cast<double>(sv)) < kNormEps) throw DegenerateNorm("sdiv by ~0 scalar");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / sv;
    auto pa = a.node(), ps = s.node();
    return make_op<T>(a.shape(), std::move(out), {a, s},
                      [pa, ps, sv](const Node<T>& n) {
                          if (pa->requires_grad) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < n.size(); ++i)
                                  pa->grad[i] += n.grad[i] / sv;
                          }
                          if (ps->requires_grad) {
                              ps->ensure_grad();
                              T acc = 0;
                              for (std::size_t i = 0; i < n.size(); ++i)
                                  acc += n.grad[i] * (-n.value[i] / sv);
                              ps->grad[0] += acc;
                          }
                      },
                      "sdiv");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
    auto pa = a.node();
    return make_op<T>(a.shape(), std::move(out), {a},
                      [pa](const Node<T>& n) {
                          pa->ensure_grad();
                          for (std::size_t i = 0; i < n.size(); ++i)
                              if (pa->value[i] > T(0)) pa->grad[i] += n.grad[i];
                      },
                      "relu");
}

// relu'(a) as a constant (detached) mask; used to express VJPs analytically.
template <typename T>
Tensor<T> step_mask(const Tensor<T>& a) {
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > T(0) ? T(1) : T(0);
    return Tensor<T>(a.shape(), std::move(out), false);
}

template <typename T>
Tensor<T> exp_(const Tensor<T>& a) {
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
    auto pa = a.node();
    return make_op<T>(a.shape(), std::move(out), {a},
                      [pa](const Node<T>& n) {
                          pa->ensure_grad();
                          for (std::size_t i = 0; i < n.size(); ++i)
                              pa->grad[i] += n.grad[i] * n.value[i];
                      },
                      "exp");
}

template <typename T>
Tensor<T> log_(const Tensor<T>& a) {
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (a.data()[i] <= T(0)) throw NumericError("log of non-positive value");
        out[i] = std::log(a.data()[i]);
    }
    auto pa = a.node();
    return make_op<T>(a.shape(), std::move(out), {a},
                      [pa](const Node<T>& n) {
                          pa->ensure_grad();
                          for (std::size_t i = 0; i < n.size(); ++i)
                              pa->grad[i] += n.grad[i] / pa->value[i];
                      },
                      "log");
}

template <typename T>
Tensor<T> tanh_(const Tensor<T>& a) {
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.data()[i]);
    auto pa = a.node();
    return make_op<T>(a.shape(), std::move(out), {a},
                      [pa](const Node<T>& n) {
                          pa->ensure_grad();
                          for (std::size_t i = 0; i < n.size(); ++i)
                              pa->grad[i] += n.grad[i] * (T(1) - n.value[i] * n.value[i]);
                      },
                      "tanh");
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T s = std::accumulate(a.data().begin(), a.data().end(), T(0));
    auto pa = a.node();
    return make_op<T>({}, {s}, {a},
                      [pa](const Node<T>& n) {
                          pa->ensure_grad();
                          for (std::size_t i = 0; i < pa->size(); ++i) pa->grad[i] += n.grad[0];
                      },
                      "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    if (a.size() == 0) throw ShapeError("mean of empty tensor");
    return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_vector(a, "dot");
    detail::require_same_shape(a, b, "dot");
    T s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
    auto pa = a.node(), pb = b.node();
    return make_op<T>({}, {s}, {a, b},
                      [pa, pb](const Node<T>& n) {
                          T g = n.grad[0];
                          if (pa->requires_grad) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < pa->size(); ++i)
                                  pa->grad[i] += g * pb->value[i];
                          }
                          if (pb->requires_grad) {
                              pb->ensure_grad();
                              for (std::size_t i = 0; i < pb->size(); ++i)
                                  pb->grad[i] += g * pa->value[i];
                          }
                      },
                      "dot");
}

template <typename T>
Tensor<T> l2norm(const Tensor<T>& a) {
    detail::require_vector(a, "l2norm");
    T nv = detail::l2(a.data());
    if (static_cast<double>(nv) < kNormEps) throw DegenerateNorm("l2norm of ~zero vector");
    auto pa = a.node();
    return make_op<T>({}, {nv}, {a},
                      [pa, nv](const Node<T>& n) {
                          pa->ensure_grad();
                          for (std::size_t i = 0; i < pa->size(); ++i)
                              pa->grad[i] += n.grad[0] * pa->value[i] / nv;
                      },
                      "l2norm");
}

template <typename T>
Tensor<T> cosine(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_vector(a, "cosine");
    detail::require_same_shape(a, b, "cosine");
    T na = detail::l2(a.data()), nb = detail::l2(b.data());
    if (static_cast<double>(na) < kNormEps || static_cast<double>(nb) < kNormEps)
        throw DegenerateNorm("cosine with ~zero vector");
    T d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a.data()[i] * b.data()[i];
    T c = d / (na * nb);
    auto pa = a.node(), pb = b.node();
    return make_op<T>({}, {c}, {a, b},
                      [pa, pb, na, nb, c](const Node<T>& n) {
                          T g = n.grad[0];
                          if (pa->requires_grad) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < pa->size(); ++i)
                                  pa->grad[i] += g * (pb->value[i] / (na * nb) -
                                                      c * pa->value[i] / (na * na));
                          }
                          if (pb->requires_grad) {
                              pb->ensure_grad();
                              for (std::size_t i = 0; i < pb->size(); ++i)
                                  pb->grad[i] += g * (pa->value[i] / (na * nb) -
                                                      c * pb->value[i] / (nb * nb));
                          }
                      },
                      "cosine");
}

template <typename T>
Tensor<T> normalize(const Tensor<T>& a) {
    detail::require_vector(a, "normalize");
    T nv = detail::l2(a.data());
    if (static_cast<double>(nv) < kNormEps) throw DegenerateNorm("normalize of ~zero vector");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / nv;
    auto pa = a.node();
    return make_op<T>(a.shape(), std::move(out), {a},
                      [pa, nv](const Node<T>& n) {
                          pa->ensure_grad();
                          T ug = 0;
                          for (std::size_t i = 0; i < n.size(); ++i) ug += n.value[i] * n.grad[i];
                          for (std::size_t i = 0; i < n.size(); ++i)
                              pa->grad[i] += (n.grad[i] - ug * n.value[i]) / nv;
                      },
                      "normalize");
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_matrix(a, "matmul");
    detail::require_matrix(b, "matmul");
    int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) throw ShapeError("matmul: inner dimensions differ");
    std::vector<T> out(static_cast<std::size_t>(m) * n, T(0));
    const auto& A = a.data();
    const auto& B = b.data();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            T av = A[static_cast<std::size_t>(i) * k + p];
            if (av == T(0)) continue;
            for (int j = 0; j < n; ++j)
                out[static_cast<std::size_t>(i) * n + j] += av * B[static_cast<std::size_t>(p) * n + j];
        }
    auto pa = a.node(), pb = b.node();
    return make_op<T>({m, n}, std::move(out), {a, b},
                      [pa, pb, m, k, n](const Node<T>& nd) {
                          if (pa->requires_grad) {
                              pa->ensure_grad();
                              for (int i = 0; i < m; ++i)
                                  for (int p = 0; p < k; ++p) {
                                      T acc = 0;
                                      for (int j = 0; j < n; ++j)
                                          acc += nd.grad[static_cast<std::size_t>(i) * n + j] *
                                                 pb->value[static_cast<std::size_t>(p) * n + j];
                                      pa->grad[static_cast<std::size_t>(i) * k + p] += acc;
                                  }
                          }
                          if (pb->requires_grad) {
                              pb->ensure_grad();
                              for (int p = 0; p < k; ++p)
                                  for (int j = 0; j < n; ++j) {
                                      T acc = 0;
                                      for (int i = 0; i < m; ++i)
                                          acc += pa->value[static_cast<std::size_t>(i) * k + p] *
                                                 nd.grad[static_cast<std::size_t>(i) * n + j];
                                      pb->grad[static_cast<std::size_t>(p) * n + j] += acc;
                                  }
                          }
                      },
                      "matmul");
}

// W[m,n] * x[n] -> [m]
template <typename T>
Tensor<T> matvec(const Tensor<T>& w, const Tensor<T>& x) {
    detail::require_matrix(w, "matvec");
    detail::require_vector(x, "matvec");
    int m = w.dim(0), n = w.dim(1);
    if (n != x.dim(0)) throw ShapeError("matvec: dimensions differ");
    std::vector<T> out(static_cast<std::size_t>(m), T(0));
    const auto& W = w.data();
    const auto& X = x.data();
    for (int i = 0; i < m; ++i) {
        T acc = 0;
        const T* row = W.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += row[j] * X[j];
        out[static_cast<std::size_t>(i)] = acc;
    }
    auto pw = w.node(), px = x.node();
    return make_op<T>({m}, std::move(out), {w, x},
                      [pw, px, m, n](const Node<T>& nd) {
                          if (pw->requires_grad) {
                              pw->ensure_grad();
                              for (int i = 0; i < m; ++i) {
                                  T g = nd.grad[static_cast<std::size_t>(i)];
                                  if (g == T(0)) continue;
                                  T* row = pw->grad.data() + static_cast<std::size_t>(i) * n;
                                  for (int j = 0; j < n; ++j) row[j] += g * px->value[j];
                              }
                          }
                          if (px->requires_grad) {
                              px->ensure_grad();
                              for (int i = 0; i < m; ++i) {
                                  T g = nd.grad[static_cast<std::size_t>(i)];
                                  if (g == T(0)) continue;
                                  const T* row = pw->value.data() + static_cast<std::size_t>(i) * n;
                                  for (int j = 0; j < n; ++j) px->grad[j] += g * row[j];
                              }
                          }
                      },
                      "matvec");
}

// W[m,n]^T * x[m] -> [n]
template <typename T>
Tensor<T> matvec_t(const Tensor<T>& w, const Tensor<T>& x) {
    detail::require_matrix(w, "matvec_t");
    detail::require_vector(x, "matvec_t");
    int m = w.dim(0), n = w.dim(1);
    if (m != x.dim(0)) throw ShapeError("matvec_t: dimensions differ");
    std::vector<T> out(static_cast<std::size_t>(n), T(0));
    const auto& W = w.data();
    const auto& X = x.data();
    for (int i = 0; i < m; ++i) {
        T xv = X[static_cast<std::size_t>(i)];
        if (xv == T(0)) continue;
        const T* row = W.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] += xv * row[j];
    }
    auto pw = w.node(), px = x.node();
    return make_op<T>({n}, std::move(out), {w, x},
                      [pw, px, m, n](const Node<T>& nd) {
                          if (pw->requires_grad) {
                              pw->ensure_grad();
                              for (int i = 0; i < m; ++i) {
                                  T xv = px->value[static_cast<std::size_t>(i)];
                                  if (xv == T(0)) continue;
                                  T* row = pw->grad.data() + static_cast<std::size_t>(i) * n;
                                  for (int j = 0; j < n; ++j)
                                      row[j] += xv * nd.grad[static_cast<std::size_t>(j)];
                              }
                          }
                          if (px->requires_grad) {
                              px->ensure_grad();
                              for (int i = 0; i < m; ++i) {
                                  const T* row = pw->value.data() + static_cast<std::size_t>(i) * n;
                                  T acc = 0;
                                  for (int j = 0; j < n; ++j)
                                      acc += row[j] * nd.grad[static_cast<std::size_t>(j)];
                                  px->grad[static_cast<std::size_t>(i)] += acc;
                              }
                          }
                      },
                      "matvec_t");
}

template <typename T>
Tensor<T> logsumexp(const Tensor<T>& v) {
    detail::require_vector(v, "logsumexp");
    if (v.size() == 0) throw ShapeError("logsumexp of empty vector");
    T mx = *std::max_element(v.data().begin(), v.data().end());
    T s = 0;
    for (T x : v.data()) s += std::exp(x - mx);
    T out = mx + std::log(s);
    auto pv = v.node();
    return make_op<T>({}, {out}, {v},
                      [pv, out](const Node<T>& n) {
                          pv->ensure_grad();
                          for (std::size_t i = 0; i < pv->size(); ++i)
                              pv->grad[i] += n.grad[0] * std::exp(pv->value[i] - out);
                      },
                      "logsumexp");
}

template <typename T>
Tensor<T> pick(const Tensor<T>& v, int idx) {
    detail::require_vector(v, "pick");
    if (idx < 0 || idx >= v.dim(0)) throw ShapeError("pick: index out of range");
    auto pv = v.node();
    return make_op<T>({}, {v.data()[static_cast<std::size_t>(idx)]}, {v},
                      [pv, idx](const Node<T>& n) {
                          pv->ensure_grad();
                          pv->grad[static_cast<std::size_t>(idx)] += n.grad[0];
                      },
                      "pick");
}

template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& scalars) {
    if (scalars.empty()) throw ShapeError("stack of nothing");
    std::vector<T> out;
    out.reserve(scalars.size());
    for (const auto& s : scalars) {
        if (s.size() != 1) throw ShapeError("stack: all elements must be scalar");
        out.push_back(s.data()[0]);
    }
    std::vector<std::shared_ptr<Node<T>>> parents;
    parents.reserve(scalars.size());
    for (const auto& s : scalars) parents.push_back(s.node());
    const int n_out = static_cast<int>(scalars.size());
    return make_op<T>({n_out}, std::move(out), scalars,
                      [parents](const Node<T>& n) {
                          for (std::size_t i = 0; i < parents.size(); ++i) {
                              if (!parents[i]->requires_grad) continue;
                              parents[i]->ensure_grad();
                              parents[i]->grad[0] += n.grad[i];
                          }
                      },
                      "stack");
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& vecs) {
    if (vecs.empty()) throw ShapeError("concat of nothing");
    std::vector<T> out;
    std::vector<std::size_t> offsets;
    for (const auto& v : vecs) {
        detail::require_vector(v, "concat");
        offsets.push_back(out.size());
        out.insert(out.end(), v.data().begin(), v.data().end());
    }
    std::vector<std::shared_ptr<Node<T>>> parents;
    for (const auto& v : vecs) parents.push_back(v.node());
    const int n_out = static_cast<int>(out.size());
    return make_op<T>({n_out}, std::move(out), vecs,
                      [parents, offsets](const Node<T>& n) {
                          for (std::size_t i = 0; i < parents.size(); ++i) {
                              if (!parents[i]->requires_grad) continue;
                              parents[i]->ensure_grad();
                              for (std::size_t j = 0; j < parents[i]->size(); ++j)
                                  parents[i]->grad[j] += n.grad[offsets[i] + j];
                          }
                      },
                      "concat");
}

template <typename T>
Tensor<T> slice(const Tensor<T>& v, int start, int len) {
    detail::require_vector(v, "slice");
    if (start < 0 || len < 0 || start + len > v.dim(0)) throw ShapeError("slice: out of range");
    std::vector<T> out(v.data().begin() + start, v.data().begin() + start + len);
    auto pv = v.node();
    return make_op<T>({len}, std::move(out), {v},
                      [pv, start, len](const Node<T>& n) {
                          pv->ensure_grad();
                          for (int i = 0; i < len; ++i)
                              pv->grad[static_cast<std::size_t>(start + i)] += n.grad[static_cast<std::size_t>(i)];
                      },
                      "slice");
}

// Mean of the rows of E selected by ids. E is [V, de].
template <typename T>
Tensor<T> embed_mean(const Tensor<T>& table, const std::vector<int>& ids) {
    detail::require_matrix(table, "embed_mean");
    if (ids.empty()) throw ShapeError("embed_mean: empty id list");
    int v = table.dim(0), de = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= v) throw ShapeError("embed_mean: id out of range");
    std::vector<T> out(static_cast<std::size_t>(de), T(0));
    for (int id : ids)
        for (int j = 0; j < de; ++j)
            out[static_cast<std::size_t>(j)] += table.data()[static_cast<std::size_t>(id) * de + j];
    T inv = T(1) / static_cast<T>(ids.size());
    for (auto& x : out) x *= inv;
    auto pt = table.node();
    return make_op<T>({de}, std::move(out), {table},
                      [pt, ids, de, inv](const Node<T>& n) {
                          pt->ensure_grad();
                          for (int id : ids)
                              for (int j = 0; j < de; ++j)
                                  pt->grad[static_cast<std::size_t>(id) * de + j] +=
                                      inv * n.grad[static_cast<std::size_t>(j)];
                      },
                      "embed_mean");
}

// Reverse pass. Topologically orders the graph reachable from `loss`
// (each node visited exactly once), seeds d(loss)/d(loss) = 1 and
// accumulates into every leaf with requires_grad.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.size() != 1) throw ShapeError("backward: loss must be scalar");
    if (!loss.node()->requires_grad)
        throw NumericError("backward: loss is detached from the tape");

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    // order is now topological (parents first); walk it backwards.
    loss.node()->ensure_grad();
    loss.node()->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backprop && n->grad.size() == n->value.size()) n->backprop(*n);
    }
    for (Node<T>* n : order)
        if (n->grad.size() == n->value.size())
            for (T g : n->grad)
                if (!std::isfinite(static_cast<double>(g)))
                    throw NumericError("non-finite gradient after backward");
}

// Max relative error between the analytic gradient of f at `point` and
// central finite differences with step h.
template <typename T>
double finite_diff_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> point,
                         T h) {
    Tensor<T> x(point.shape(), point.data(), true);
    Tensor<T> loss = f(x);
    if (loss.size() != 1) throw ShapeError("finite_diff_check: f must return a scalar");
    backward(loss);
    std::vector<T> analytic = x.grad();

    double max_err = 0;
    std::vector<T> d = point.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        NoGradGuard ng;
        T orig = d[i];
        d[i] = orig + h;
        T up = f(Tensor<T>(point.shape(), d)).item();
        d[i] = orig - h;
        T dn = f(Tensor<T>(point.shape(), d)).item();
        d[i] = orig;
        if (!std::isfinite(static_cast<double>(up)) || !std::isfinite(static_cast<double>(dn)))
            throw NumericError("finite_diff_check: f returned non-finite value");
        double numeric = (static_cast<double>(up) - static_cast<double>(dn)) / (2.0 * h);
        double err = std::abs(static_cast<double>(analytic[i]) - numeric) /
                     (std::abs(numeric) + 1e-12);
        max_err = std::max(max_err, err);
    }
    return max_err;
}

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace clipure
