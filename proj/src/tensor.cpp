#include "mvladdm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace mvladdm {

namespace {

std::int64_t shape_product(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

void require_positive_dims(const std::vector<int>& shape) {
    if (shape.empty()) throw ShapeMismatch("tensor shape must have at least one dimension");
    for (int d : shape) {
        if (d <= 0) throw ShapeMismatch("tensor dimensions must be positive");
    }
}

void require_rank2(const Tensor& t, const char* what) {
    if (t.rank() != 2) throw ShapeMismatch(std::string(what) + " requires a rank-2 tensor");
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    require_positive_dims(shape_);
    data_.assign(shape_product(shape_), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    require_positive_dims(shape_);
    if (shape_product(shape_) != static_cast<std::int64_t>(data_.size()))
        throw ShapeMismatch("tensor data length does not match shape product");
}

Tensor Tensor::row(std::vector<double> v) {
    int n = static_cast<int>(v.size());
    return Tensor({1, n}, std::move(v));
}

Tensor Tensor::col(std::vector<double> v) {
    int n = static_cast<int>(v.size());
    return Tensor({n, 1}, std::move(v));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
}

Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

void sgd_step(Tensor& param, const Tensor& grad, double lr) {
    if (!param.same_shape(grad)) throw ShapeMismatch("sgd_step: parameter and gradient shapes differ");
    if (!(lr > 0.0)) throw ShapeMismatch("sgd_step: learning rate must be positive");
    for (std::int64_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
}

VarId Tape::push(Tensor value, Op op, bool requires_grad, std::function<void(Tape&)> pullback) {
    Node node;
    node.value = std::move(value);
    node.op = op;
    node.requires_grad = requires_grad;
    node.pullback = std::move(pullback);
    nodes_.push_back(std::move(node));
    return static_cast<VarId>(nodes_.size() - 1);
}

VarId Tape::leaf(Tensor value, bool requires_grad) {
    return push(std::move(value), Op::Leaf, requires_grad, {});
}

VarId Tape::matmul(VarId a, VarId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require_rank2(A, "matmul");
    require_rank2(B, "matmul");
    if (A.cols() != B.rows()) throw ShapeMismatch("matmul: inner dimensions differ");
    int m = A.rows(), k = A.cols(), n = B.cols();
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            double aip = A(i, p);
            if (aip == 0.0) continue;
            for (int j = 0; j < n; ++j) out(i, j) += aip * B(p, j);
        }
    bool needs = wants_grad(a) || wants_grad(b);
    VarId id = push(std::move(out), Op::MatMul, needs, {});
    nodes_[id].pullback = [a, b, id, m, k, n](Tape& t) {
        const Tensor& dC = t.grad(id);
        const Tensor& A2 = t.value(a);
        const Tensor& B2 = t.value(b);
        if (t.wants_grad(a)) {
            Tensor& dA = t.grad_mut(a);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    double g = dC(i, j);
                    if (g == 0.0) continue;
                    for (int p = 0; p < k; ++p) dA(i, p) += g * B2(p, j);
                }
        }
        if (t.wants_grad(b)) {
            Tensor& dB = t.grad_mut(b);
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    double av = A2(i, p);
                    if (av == 0.0) continue;
                    for (int j = 0; j < n; ++j) dB(p, j) += av * dC(i, j);
                }
        }
    };
    return id;
}

VarId Tape::add(VarId a, VarId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.same_shape(B)) {
        Tensor out = A;
        for (std::int64_t i = 0; i < out.size(); ++i) out[i] += B[i];
        bool needs = wants_grad(a) || wants_grad(b);
        VarId id = push(std::move(out), Op::Add, needs, {});
        nodes_[id].pullback = [a, b, id](Tape& t) {
            const Tensor& dC = t.grad(id);
            if (t.wants_grad(a)) {
                Tensor& dA = t.grad_mut(a);
                for (std::int64_t i = 0; i < dC.size(); ++i) dA[i] += dC[i];
            }
            if (t.wants_grad(b)) {
                Tensor& dB = t.grad_mut(b);
                for (std::int64_t i = 0; i < dC.size(); ++i) dB[i] += dC[i];
            }
        };
        return id;
    }
    // Bias-add: {m,n} + {1,n}. The only broadcast supported.
    if (A.rank() == 2 && B.rank() == 2 && B.rows() == 1 && A.cols() == B.cols()) {
        int m = A.rows(), n = A.cols();
        Tensor out = A;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out(i, j) += B(0, j);
        bool needs = wants_grad(a) || wants_grad(b);
        VarId id = push(std::move(out), Op::Add, needs, {});
        nodes_[id].pullback = [a, b, id, m, n](Tape& t) {
            const Tensor& dC = t.grad(id);
            if (t.wants_grad(a)) {
                Tensor& dA = t.grad_mut(a);
                for (std::int64_t i = 0; i < dC.size(); ++i) dA[i] += dC[i];
            }
            if (t.wants_grad(b)) {
                Tensor& dB = t.grad_mut(b);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) dB(0, j) += dC(i, j);
            }
        };
        return id;
    }
    throw ShapeMismatch("add: shapes are neither equal nor bias-add compatible");
}

VarId Tape::mul(VarId a, VarId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) throw ShapeMismatch("mul: elementwise factors must share a shape");
    Tensor out = A;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= B[i];
    bool needs = wants_grad(a) || wants_grad(b);
    VarId id = push(std::move(out), Op::Mul, needs, {});
    nodes_[id].pullback = [a, b, id](Tape& t) {
        const Tensor& dC = t.grad(id);
        const Tensor& A2 = t.value(a);
        const Tensor& B2 = t.value(b);
        if (t.wants_grad(a)) {
            Tensor& dA = t.grad_mut(a);
            for (std::int64_t i = 0; i < dC.size(); ++i) dA[i] += dC[i] * B2[i];
        }
        if (t.wants_grad(b)) {
            Tensor& dB = t.grad_mut(b);
            for (std::int64_t i = 0; i < dC.size(); ++i) dB[i] += dC[i] * A2[i];
        }
    };
    return id;
}

VarId Tape::scale(VarId a, double c) {
    Tensor out = value(a);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= c;
    VarId id = push(std::move(out), Op::Scale, wants_grad(a), {});
    nodes_[id].pullback = [a, c, id](Tape& t) {
        if (!t.wants_grad(a)) return;
        const Tensor& dC = t.grad(id);
        Tensor& dA = t.grad_mut(a);
        for (std::int64_t i = 0; i < dC.size(); ++i) dA[i] += c * dC[i];
    };
    return id;
}

namespace {

double stable_softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

}  // namespace

#define MVLADDM_UNARY(NAME, OPKIND, FWD, BWD)                                     \
    VarId Tape::NAME(VarId a) {                                                   \
        const Tensor& A = value(a);                                               \
        Tensor out = A;                                                           \
        for (std::int64_t i = 0; i < out.size(); ++i) {                           \
            double x = out[i];                                                    \
            (void)x;                                                              \
            out[i] = (FWD);                                                       \
        }                                                                         \
        VarId id = push(std::move(out), Op::OPKIND, wants_grad(a), {});           \
        nodes_[id].pullback = [a, id](Tape& t) {                                  \
            if (!t.wants_grad(a)) return;                                         \
            const Tensor& dC = t.grad(id);                                        \
            const Tensor& X = t.value(a);                                         \
            const Tensor& Y = t.value(id);                                        \
            (void)X;                                                              \
            (void)Y;                                                              \
            Tensor& dA = t.grad_mut(a);                                           \
            for (std::int64_t i = 0; i < dC.size(); ++i) {                        \
                double x = X[i], y = Y[i];                                        \
                (void)x;                                                          \
                (void)y;                                                          \
                dA[i] += dC[i] * (BWD);                                           \
            }                                                                     \
        };                                                                        \
        return id;                                                                \
    }

MVLADDM_UNARY(sigmoid, Sigmoid, 1.0 / (1.0 + std::exp(-x)), y * (1.0 - y))
MVLADDM_UNARY(tanh, Tanh, std::tanh(x), 1.0 - y * y)
MVLADDM_UNARY(exp, Exp, std::exp(x), y)
MVLADDM_UNARY(log, Log, std::log(x), 1.0 / x)
MVLADDM_UNARY(softplus, Softplus, stable_softplus(x), 1.0 / (1.0 + std::exp(-x)))
MVLADDM_UNARY(square, Square, x* x, 2.0 * x)
MVLADDM_UNARY(reciprocal, Reciprocal, 1.0 / x, -y * y)

#undef MVLADDM_UNARY

VarId Tape::sum(VarId a) {
    const Tensor& A = value(a);
    double acc = 0.0;
    for (std::int64_t i = 0; i < A.size(); ++i) acc += A[i];
    VarId id = push(Tensor::scalar(acc), Op::Sum, wants_grad(a), {});
    nodes_[id].pullback = [a, id](Tape& t) {
        if (!t.wants_grad(a)) return;
        double g = t.grad(id)[0];
        Tensor& dA = t.grad_mut(a);
        for (std::int64_t i = 0; i < dA.size(); ++i) dA[i] += g;
    };
    return id;
}

VarId Tape::mean(VarId a) {
    const Tensor& A = value(a);
    double acc = 0.0;
    for (std::int64_t i = 0; i < A.size(); ++i) acc += A[i];
    double inv = 1.0 / static_cast<double>(A.size());
    VarId id = push(Tensor::scalar(acc * inv), Op::Mean, wants_grad(a), {});
    nodes_[id].pullback = [a, id, inv](Tape& t) {
        if (!t.wants_grad(a)) return;
        double g = t.grad(id)[0] * inv;
        Tensor& dA = t.grad_mut(a);
        for (std::int64_t i = 0; i < dA.size(); ++i) dA[i] += g;
    };
    return id;
}

VarId Tape::concat(std::span<const VarId> parts, int axis) {
    if (parts.empty()) throw ShapeMismatch("concat: needs at least one part");
    if (axis != 0 && axis != 1) throw ShapeMismatch("concat: axis must be 0 or 1");
    bool needs = false;
    for (VarId p : parts) {
        require_rank2(value(p), "concat");
        needs = needs || wants_grad(p);
    }
    int rows0 = value(parts[0]).rows();
    int cols0 = value(parts[0]).cols();
    int total = 0;
    for (VarId p : parts) {
        const Tensor& P = value(p);
        if (axis == 0) {
            if (P.cols() != cols0) throw ShapeMismatch("concat: column counts differ");
            total += P.rows();
        } else {
            if (P.rows() != rows0) throw ShapeMismatch("concat: row counts differ");
            total += P.cols();
        }
    }
    Tensor out(axis == 0 ? std::vector<int>{total, cols0} : std::vector<int>{rows0, total});
    std::vector<VarId> part_ids(parts.begin(), parts.end());
    int offset = 0;
    for (VarId p : part_ids) {
        const Tensor& P = value(p);
        if (axis == 0) {
            for (int i = 0; i < P.rows(); ++i)
                for (int j = 0; j < P.cols(); ++j) out(offset + i, j) = P(i, j);
            offset += P.rows();
        } else {
            for (int i = 0; i < P.rows(); ++i)
                for (int j = 0; j < P.cols(); ++j) out(i, offset + j) = P(i, j);
            offset += P.cols();
        }
    }
    VarId id = push(std::move(out), Op::Concat, needs, {});
    nodes_[id].pullback = [part_ids, axis, id](Tape& t) {
        const Tensor& dC = t.grad(id);
        int off = 0;
        for (VarId p : part_ids) {
            const Tensor& P = t.value(p);
            if (t.wants_grad(p)) {
                Tensor& dP = t.grad_mut(p);
                for (int i = 0; i < P.rows(); ++i)
                    for (int j = 0; j < P.cols(); ++j)
                        dP(i, j) += (axis == 0) ? dC(off + i, j) : dC(i, off + j);
            }
            off += (axis == 0) ? P.rows() : P.cols();
        }
    };
    return id;
}

VarId Tape::slice(VarId a, int axis, int start, int len) {
    const Tensor& A = value(a);
    require_rank2(A, "slice");
    if (axis != 0 && axis != 1) throw ShapeMismatch("slice: axis must be 0 or 1");
    int extent = (axis == 0) ? A.rows() : A.cols();
    if (start < 0 || len <= 0 || start + len > extent) throw ShapeMismatch("slice: range out of bounds");
    Tensor out(axis == 0 ? std::vector<int>{len, A.cols()} : std::vector<int>{A.rows(), len});
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j)
            out(i, j) = (axis == 0) ? A(start + i, j) : A(i, start + j);
    VarId id = push(std::move(out), Op::Slice, wants_grad(a), {});
    nodes_[id].pullback = [a, axis, start, id](Tape& t) {
        if (!t.wants_grad(a)) return;
        const Tensor& dC = t.grad(id);
        Tensor& dA = t.grad_mut(a);
        for (int i = 0; i < dC.rows(); ++i)
            for (int j = 0; j < dC.cols(); ++j) {
                if (axis == 0)
                    dA(start + i, j) += dC(i, j);
                else
                    dA(i, start + j) += dC(i, j);
            }
    };
    return id;
}

VarId Tape::logsumexp(VarId a) {
    const Tensor& A = value(a);
    double m = A[0];
    for (std::int64_t i = 1; i < A.size(); ++i) m = std::max(m, A[i]);
    double acc = 0.0;
    for (std::int64_t i = 0; i < A.size(); ++i) acc += std::exp(A[i] - m);
    double lse = m + std::log(acc);
    VarId id = push(Tensor::scalar(lse), Op::LogSumExp, wants_grad(a), {});
    nodes_[id].pullback = [a, id](Tape& t) {
        if (!t.wants_grad(a)) return;
        double g = t.grad(id)[0];
        double lse_val = t.value(id)[0];
        const Tensor& X = t.value(a);
        Tensor& dA = t.grad_mut(a);
        for (std::int64_t i = 0; i < X.size(); ++i) dA[i] += g * std::exp(X[i] - lse_val);
    };
    return id;
}

VarId Tape::logsumexp_rows(VarId a) {
    const Tensor& A = value(a);
    require_rank2(A, "logsumexp_rows");
    int m = A.rows(), n = A.cols();
    Tensor out({m, 1});
    for (int i = 0; i < m; ++i) {
        double mx = A(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, A(i, j));
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += std::exp(A(i, j) - mx);
        out(i, 0) = mx + std::log(acc);
    }
    VarId id = push(std::move(out), Op::LogSumExpRows, wants_grad(a), {});
    nodes_[id].pullback = [a, id, m, n](Tape& t) {
        if (!t.wants_grad(a)) return;
        const Tensor& dC = t.grad(id);
        const Tensor& X = t.value(a);
        const Tensor& L = t.value(id);
        Tensor& dA = t.grad_mut(a);
        for (int i = 0; i < m; ++i) {
            double g = dC(i, 0);
            if (g == 0.0) continue;
            for (int j = 0; j < n; ++j) dA(i, j) += g * std::exp(X(i, j) - L(i, 0));
        }
    };
    return id;
}

VarId Tape::transpose(VarId a) {
    const Tensor& A = value(a);
    require_rank2(A, "transpose");
    int m = A.rows(), n = A.cols();
    Tensor out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out(j, i) = A(i, j);
    VarId id = push(std::move(out), Op::Transpose, wants_grad(a), {});
    nodes_[id].pullback = [a, id, m, n](Tape& t) {
        if (!t.wants_grad(a)) return;
        const Tensor& dC = t.grad(id);
        Tensor& dA = t.grad_mut(a);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) dA(i, j) += dC(j, i);
    };
    return id;
}

void Tape::backward(VarId loss) {
    if (loss < 0 || loss >= static_cast<VarId>(nodes_.size()))
        throw NonScalarLoss("backward: loss id is not on this tape");
    if (nodes_[loss].value.size() != 1)
        throw NonScalarLoss("backward: loss must be a scalar tensor");
    for (Node& node : nodes_) {
        node.grad = Tensor(node.value.shape());  // zero-filled
    }
    nodes_[loss].grad[0] = 1.0;
    for (std::int64_t i = loss; i >= 0; --i) {
        Node& node = nodes_[i];
        if (node.requires_grad && node.pullback) node.pullback(*this);
    }
}

}  // namespace mvladdm
