#include "nmt/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace nmt::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

[[noreturn]] void mismatch(OpKind op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + shape_str(a) + " vs " +
                     shape_str(b));
}

Shape drop_last(const Shape& s) {
    if (s.size() <= 1) return {1};
    return Shape(s.begin(), s.end() - 1);
}

bool is_prefix(const Shape& prefix, const Shape& full) {
    if (prefix.size() > full.size()) return false;
    return std::equal(prefix.begin(), prefix.end(), full.begin());
}

// derivative(x, y) receives the input and the op's output.
template <class F, class D>
Var unary(OpKind kind, Var x, F forward, D derivative) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = forward(xv[i]);
    return x.graph().record(kind, std::move(out), {x}, [x, derivative](Graph& g, const Tensor& y, const Tensor& dy) {
        const Tensor& xv = g.value(x);
        Tensor& dx = g.grad_of(x);
        for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += dy[i] * derivative(xv[i], y[i]);
    });
}

}  // namespace

Var matmul(Var a, Var b, bool transpose_b) {
    Graph& g = a.graph();
    const Tensor& A = a.value();
    const Tensor& B = b.value();

    if (B.rank() == 1) {
        if (transpose_b || A.rank() < 1 || A.last_dim() != B.dim(0))
            mismatch(OpKind::matmul, A.shape(), B.shape());
        const std::size_t rows = A.rows(), K = B.dim(0);
        Tensor out(drop_last(A.shape()));
        for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (std::size_t k = 0; k < K; ++k) acc += A[r * K + k] * B[k];
            out[r] = acc;
        }
        return g.record(OpKind::matmul, std::move(out), {a, b}, [a, b](Graph& g, const Tensor&, const Tensor& dy) {
            const Tensor& A = g.value(a);
            const Tensor& B = g.value(b);
            const std::size_t rows = A.rows(), K = B.dim(0);
            if (g.requires_grad(a)) {
                Tensor& dA = g.grad_of(a);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t k = 0; k < K; ++k) dA[r * K + k] += dy[r] * B[k];
            }
            if (g.requires_grad(b)) {
                Tensor& dB = g.grad_of(b);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t k = 0; k < K; ++k) dB[k] += dy[r] * A[r * K + k];
            }
        });
    }

    if (A.rank() == 3 && B.rank() == 3) {
        const std::size_t batch = A.dim(0), N = A.dim(1), K = A.dim(2);
        const std::size_t M = transpose_b ? B.dim(1) : B.dim(2);
        const std::size_t KB = transpose_b ? B.dim(2) : B.dim(1);
        if (B.dim(0) != batch || KB != K) mismatch(OpKind::matmul, A.shape(), B.shape());
        Tensor out({batch, N, M});
        for (std::size_t i = 0; i < batch; ++i) {
            CMatMap Ai(A.data() + i * N * K, N, K);
            MatMap Ci(out.data() + i * N * M, N, M);
            if (transpose_b)
                Ci.noalias() = Ai * CMatMap(B.data() + i * M * K, M, K).transpose();
            else
                Ci.noalias() = Ai * CMatMap(B.data() + i * K * M, K, M);
        }
        return g.record(OpKind::matmul, std::move(out), {a, b},
                        [a, b, batch, N, K, M, transpose_b](Graph& g, const Tensor&, const Tensor& dy) {
                            const Tensor& A = g.value(a);
                            const Tensor& B = g.value(b);
                            for (std::size_t i = 0; i < batch; ++i) {
                                CMatMap dC(dy.data() + i * N * M, N, M);
                                if (g.requires_grad(a)) {
                                    MatMap dA(g.grad_of(a).data() + i * N * K, N, K);
                                    if (transpose_b)
                                        dA.noalias() += dC * CMatMap(B.data() + i * M * K, M, K);
                                    else
                                        dA.noalias() += dC * CMatMap(B.data() + i * K * M, K, M).transpose();
                                }
                                if (g.requires_grad(b)) {
                                    CMatMap Ai(A.data() + i * N * K, N, K);
                                    if (transpose_b) {
                                        MatMap dB(g.grad_of(b).data() + i * M * K, M, K);
                                        dB.noalias() += dC.transpose() * Ai;
                                    } else {
                                        MatMap dB(g.grad_of(b).data() + i * K * M, K, M);
                                        dB.noalias() += Ai.transpose() * dC;
                                    }
                                }
                            }
                        });
    }

    if (B.rank() != 2 || (A.rank() != 2 && A.rank() != 3)) mismatch(OpKind::matmul, A.shape(), B.shape());
    const std::size_t K = A.last_dim(), N = A.rows();
    const std::size_t M = transpose_b ? B.dim(0) : B.dim(1);
    const std::size_t KB = transpose_b ? B.dim(1) : B.dim(0);
    if (KB != K) mismatch(OpKind::matmul, A.shape(), B.shape());
    Shape out_shape = A.shape();
    out_shape.back() = M;
    Tensor out(out_shape);
    {
        CMatMap Am(A.data(), N, K);
        MatMap Cm(out.data(), N, M);
        if (transpose_b)
            Cm.noalias() = Am * CMatMap(B.data(), M, K).transpose();
        else
            Cm.noalias() = Am * CMatMap(B.data(), K, M);
    }
    return g.record(OpKind::matmul, std::move(out), {a, b},
                    [a, b, N, K, M, transpose_b](Graph& g, const Tensor&, const Tensor& dy) {
                        const Tensor& A = g.value(a);
                        const Tensor& B = g.value(b);
                        CMatMap dC(dy.data(), N, M);
                        if (g.requires_grad(a)) {
                            MatMap dA(g.grad_of(a).data(), N, K);
                            if (transpose_b)
                                dA.noalias() += dC * CMatMap(B.data(), M, K);
                            else
                                dA.noalias() += dC * CMatMap(B.data(), K, M).transpose();
                        }
                        if (g.requires_grad(b)) {
                            CMatMap Am(A.data(), N, K);
                            if (transpose_b) {
                                MatMap dB(g.grad_of(b).data(), M, K);
                                dB.noalias() += dC.transpose() * Am;
                            } else {
                                MatMap dB(g.grad_of(b).data(), K, M);
                                dB.noalias() += Am.transpose() * dC;
                            }
                        }
                    });
}

Var add(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.shape() != B.shape()) mismatch(OpKind::add, A.shape(), B.shape());
    Tensor out(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[i];
    return a.graph().record(OpKind::add, std::move(out), {a, b}, [a, b](Graph& g, const Tensor&, const Tensor& dy) {
        if (g.requires_grad(a)) g.grad_of(a).add_(dy);
        if (g.requires_grad(b)) g.grad_of(b).add_(dy);
    });
}

Var sub(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.shape() != B.shape()) mismatch(OpKind::sub, A.shape(), B.shape());
    Tensor out(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] - B[i];
    return a.graph().record(OpKind::sub, std::move(out), {a, b}, [a, b](Graph& g, const Tensor&, const Tensor& dy) {
        if (g.requires_grad(a)) g.grad_of(a).add_(dy);
        if (g.requires_grad(b)) {
            Tensor& db = g.grad_of(b);
            for (std::size_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
        }
    });
}

Var mul(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.shape() != B.shape()) mismatch(OpKind::mul, A.shape(), B.shape());
    Tensor out(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * B[i];
    return a.graph().record(OpKind::mul, std::move(out), {a, b}, [a, b](Graph& g, const Tensor&, const Tensor& dy) {
        const Tensor& A = g.value(a);
        const Tensor& B = g.value(b);
        if (g.requires_grad(a)) {
            Tensor& da = g.grad_of(a);
            for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * B[i];
        }
        if (g.requires_grad(b)) {
            Tensor& db = g.grad_of(b);
            for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * A[i];
        }
    });
}

Var affine(Var x, double alpha, double beta) {
    const Tensor& X = x.value();
    Tensor out(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) out[i] = alpha * X[i] + beta;
    return x.graph().record(OpKind::affine, std::move(out), {x}, [x, alpha](Graph& g, const Tensor&, const Tensor& dy) {
        Tensor& dx = g.grad_of(x);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += alpha * dy[i];
    });
}

Var tanh(Var x) {
    return unary(
        OpKind::tanh, x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
    return unary(
        OpKind::sigmoid, x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var x) {
    return unary(
        OpKind::exp, x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
    return unary(
        OpKind::log, x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var softmax(Var x) {
    const Tensor& X = x.value();
    const std::size_t D = X.last_dim(), rows = X.rows();
    Tensor out(X.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = X.data() + r * D;
        double* yr = out.data() + r * D;
        const double m = *std::max_element(xr, xr + D);
        double z = 0.0;
        for (std::size_t j = 0; j < D; ++j) z += (yr[j] = std::exp(xr[j] - m));
        for (std::size_t j = 0; j < D; ++j) yr[j] /= z;
    }
    return x.graph().record(OpKind::softmax, std::move(out), {x}, [x, D](Graph& g, const Tensor& y, const Tensor& dy) {
        Tensor& dx = g.grad_of(x);
        const std::size_t rows = y.rows();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* yr = y.data() + r * D;
            const double* gr = dy.data() + r * D;
            double dot = 0.0;
            for (std::size_t j = 0; j < D; ++j) dot += gr[j] * yr[j];
            double* dr = dx.data() + r * D;
            for (std::size_t j = 0; j < D; ++j) dr[j] += yr[j] * (gr[j] - dot);
        }
    });
}

Var log_softmax(Var x) {
    const Tensor& X = x.value();
    const std::size_t D = X.last_dim(), rows = X.rows();
    Tensor out(X.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = X.data() + r * D;
        double* yr = out.data() + r * D;
        const double m = *std::max_element(xr, xr + D);
        double z = 0.0;
        for (std::size_t j = 0; j < D; ++j) z += std::exp(xr[j] - m);
        const double lse = m + std::log(z);
        for (std::size_t j = 0; j < D; ++j) yr[j] = xr[j] - lse;
    }
    return x.graph().record(OpKind::log_softmax, std::move(out), {x}, [x, D](Graph& g, const Tensor& y, const Tensor& dy) {
        Tensor& dx = g.grad_of(x);
        const std::size_t rows = y.rows();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* yr = y.data() + r * D;
            const double* gr = dy.data() + r * D;
            double total = 0.0;
            for (std::size_t j = 0; j < D; ++j) total += gr[j];
            double* dr = dx.data() + r * D;
            for (std::size_t j = 0; j < D; ++j) dr[j] += gr[j] - std::exp(yr[j]) * total;
        }
    });
}

Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& first = parts.front().shape();
    const std::size_t rows = parts.front().value().rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (Var p : parts) {
        const Shape& s = p.shape();
        if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin()))
            mismatch(OpKind::concat, first, s);
        widths.push_back(s.back());
        total += s.back();
    }
    Shape out_shape = first;
    out_shape.back() = total;
    Tensor out(out_shape);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = parts[k].value();
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + offset);
        offset += widths[k];
    }
    return parts.front().graph().record(
        OpKind::concat, std::move(out), parts,
        [parts, widths, rows, total](Graph& g, const Tensor&, const Tensor& dy) {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < parts.size(); ++k) {
                if (g.requires_grad(parts[k])) {
                    Tensor& dx = g.grad_of(parts[k]);
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < widths[k]; ++j)
                            dx[r * widths[k] + j] += dy[r * total + offset + j];
                }
                offset += widths[k];
            }
        });
}

Var slice(Var x, std::size_t begin, std::size_t end) {
    const Tensor& X = x.value();
    const std::size_t D = X.last_dim();
    if (X.rank() == 0 || begin >= end || end > D)
        throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for shape " + shape_str(X.shape()));
    const std::size_t W = end - begin, rows = X.rows();
    Shape out_shape = X.shape();
    out_shape.back() = W;
    Tensor out(out_shape);
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(X.data() + r * D + begin, W, out.data() + r * W);
    return x.graph().record(OpKind::slice, std::move(out), {x}, [x, begin, W, D, rows](Graph& g, const Tensor&, const Tensor& dy) {
        Tensor& dx = g.grad_of(x);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < W; ++j) dx[r * D + begin + j] += dy[r * W + j];
    });
}

Var sum(Var x) {
    const Tensor& X = x.value();
    double s = 0.0;
    for (double v : X.values()) s += v;
    return x.graph().record(OpKind::sum, Tensor::scalar(s), {x}, [x](Graph& g, const Tensor&, const Tensor& dy) {
        Tensor& dx = g.grad_of(x);
        for (auto& v : dx.values()) v += dy[0];
    });
}

Var mean(Var x) {
    const Tensor& X = x.value();
    double s = 0.0;
    for (double v : X.values()) s += v;
    const double n = static_cast<double>(X.size());
    return x.graph().record(OpKind::mean, Tensor::scalar(s / n), {x}, [x, n](Graph& g, const Tensor&, const Tensor& dy) {
        Tensor& dx = g.grad_of(x);
        for (auto& v : dx.values()) v += dy[0] / n;
    });
}

Var add_bias(Var x, Var b) {
    const Tensor& X = x.value();
    const Tensor& B = b.value();
    if (B.rank() != 1 || X.rank() == 0 || B.dim(0) != X.last_dim()) mismatch(OpKind::add_bias, X.shape(), B.shape());
    const std::size_t D = X.last_dim(), rows = X.rows();
    Tensor out(X.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < D; ++j) out[r * D + j] = X[r * D + j] + B[j];
    return x.graph().record(OpKind::add_bias, std::move(out), {x, b}, [x, b, D, rows](Graph& g, const Tensor&, const Tensor& dy) {
        if (g.requires_grad(x)) g.grad_of(x).add_(dy);
        if (g.requires_grad(b)) {
            Tensor& db = g.grad_of(b);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < D; ++j) db[j] += dy[r * D + j];
        }
    });
}

Var masked_fill(Var x, const Tensor& mask, double fill) {
    const Tensor& X = x.value();
    if (!is_prefix(mask.shape(), X.shape())) mismatch(OpKind::masked_fill, X.shape(), mask.shape());
    const std::size_t inner = X.size() / mask.size();
    Tensor out(X.shape());
    for (std::size_t i = 0; i < mask.size(); ++i)
        for (std::size_t j = 0; j < inner; ++j)
            out[i * inner + j] = mask[i] != 0.0 ? X[i * inner + j] : fill;
    return x.graph().record(OpKind::masked_fill, std::move(out), {x}, [x, mask, inner](Graph& g, const Tensor&, const Tensor& dy) {
        Tensor& dx = g.grad_of(x);
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (mask[i] == 0.0) continue;
            for (std::size_t j = 0; j < inner; ++j) dx[i * inner + j] += dy[i * inner + j];
        }
    });
}

Var mul_prefix(Var x, Var w) {
    const Tensor& X = x.value();
    const Tensor& W = w.value();
    if (!is_prefix(W.shape(), X.shape())) mismatch(OpKind::mul_prefix, X.shape(), W.shape());
    const std::size_t inner = X.size() / W.size();
    Tensor out(X.shape());
    for (std::size_t i = 0; i < W.size(); ++i)
        for (std::size_t j = 0; j < inner; ++j) out[i * inner + j] = X[i * inner + j] * W[i];
    return x.graph().record(OpKind::mul_prefix, std::move(out), {x, w}, [x, w, inner](Graph& g, const Tensor&, const Tensor& dy) {
        const Tensor& X = g.value(x);
        const Tensor& W = g.value(w);
        if (g.requires_grad(x)) {
            Tensor& dx = g.grad_of(x);
            for (std::size_t i = 0; i < W.size(); ++i)
                for (std::size_t j = 0; j < inner; ++j) dx[i * inner + j] += dy[i * inner + j] * W[i];
        }
        if (g.requires_grad(w)) {
            Tensor& dw = g.grad_of(w);
            for (std::size_t i = 0; i < W.size(); ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < inner; ++j) acc += dy[i * inner + j] * X[i * inner + j];
                dw[i] += acc;
            }
        }
    });
}

Var sum_axis1(Var x) {
    const Tensor& X = x.value();
    if (X.rank() != 2 && X.rank() != 3) throw ShapeError("sum_axis1: expected rank 2 or 3, got " + shape_str(X.shape()));
    const std::size_t B = X.dim(0), S = X.dim(1), D = X.rank() == 3 ? X.dim(2) : 1;
    Tensor out(X.rank() == 3 ? Shape{B, D} : Shape{B});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t d = 0; d < D; ++d) out[b * D + d] += X[(b * S + s) * D + d];
    return x.graph().record(OpKind::sum_axis1, std::move(out), {x}, [x, B, S, D](Graph& g, const Tensor&, const Tensor& dy) {
        Tensor& dx = g.grad_of(x);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t s = 0; s < S; ++s)
                for (std::size_t d = 0; d < D; ++d) dx[(b * S + s) * D + d] += dy[b * D + d];
    });
}

Var embedding(Var table, std::span<const int> ids) {
    const Tensor& E = table.value();
    if (E.rank() != 2) throw ShapeError("embedding: table must be rank 2, got " + shape_str(E.shape()));
    if (ids.empty()) throw ShapeError("embedding: empty id list");
    const std::size_t V = E.dim(0), D = E.dim(1);
    std::vector<int> idv(ids.begin(), ids.end());
    Tensor out({idv.size(), D});
    for (std::size_t i = 0; i < idv.size(); ++i) {
        if (idv[i] < 0 || static_cast<std::size_t>(idv[i]) >= V)
            throw ShapeError("embedding: id " + std::to_string(idv[i]) + " out of range for table " +
                             shape_str(E.shape()));
        std::copy_n(E.data() + idv[i] * D, D, out.data() + i * D);
    }
    return table.graph().record(OpKind::embedding, std::move(out), {table}, [table, idv, D](Graph& g, const Tensor&, const Tensor& dy) {
        Tensor& dE = g.grad_of(table);
        for (std::size_t i = 0; i < idv.size(); ++i)
            for (std::size_t d = 0; d < D; ++d) dE[idv[i] * D + d] += dy[i * D + d];
    });
}

Var select_time(Var x, std::size_t t) {
    const Tensor& X = x.value();
    if (X.rank() != 3 || t >= X.dim(1))
        throw ShapeError("select_time: index " + std::to_string(t) + " invalid for " + shape_str(X.shape()));
    const std::size_t B = X.dim(0), S = X.dim(1), D = X.dim(2);
    Tensor out({B, D});
    for (std::size_t b = 0; b < B; ++b) std::copy_n(X.data() + (b * S + t) * D, D, out.data() + b * D);
    return x.graph().record(OpKind::select_time, std::move(out), {x}, [x, t, B, S, D](Graph& g, const Tensor&, const Tensor& dy) {
        Tensor& dx = g.grad_of(x);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t d = 0; d < D; ++d) dx[(b * S + t) * D + d] += dy[b * D + d];
    });
}

Var stack_time(const std::vector<Var>& steps) {
    if (steps.empty()) throw ShapeError("stack_time: no inputs");
    const Shape& first = steps.front().shape();
    if (first.size() != 2) throw ShapeError("stack_time: steps must be rank 2, got " + shape_str(first));
    const std::size_t B = first[0], D = first[1], T = steps.size();
    Tensor out({B, T, D});
    for (std::size_t t = 0; t < T; ++t) {
        const Tensor& v = steps[t].value();
        if (v.shape() != first) mismatch(OpKind::stack_time, first, v.shape());
        for (std::size_t b = 0; b < B; ++b) std::copy_n(v.data() + b * D, D, out.data() + (b * T + t) * D);
    }
    return steps.front().graph().record(OpKind::stack_time, std::move(out), steps, [steps, B, T, D](Graph& g, const Tensor&, const Tensor& dy) {
        for (std::size_t t = 0; t < T; ++t) {
            if (!g.requires_grad(steps[t])) continue;
            Tensor& dx = g.grad_of(steps[t]);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t d = 0; d < D; ++d) dx[b * D + d] += dy[(b * T + t) * D + d];
        }
    });
}

Var pick(Var x, std::span<const int> ids) {
    const Tensor& X = x.value();
    const std::size_t V = X.last_dim(), rows = X.rows();
    if (ids.size() != rows)
        throw ShapeError("pick: " + std::to_string(ids.size()) + " ids for " + std::to_string(rows) +
                         " rows of " + shape_str(X.shape()));
    std::vector<int> idv(ids.begin(), ids.end());
    Tensor out(drop_last(X.shape()));
    for (std::size_t r = 0; r < rows; ++r) {
        if (idv[r] < 0 || static_cast<std::size_t>(idv[r]) >= V)
            throw ShapeError("pick: id " + std::to_string(idv[r]) + " out of range for " + shape_str(X.shape()));
        out[r] = X[r * V + idv[r]];
    }
    return x.graph().record(OpKind::pick, std::move(out), {x}, [x, idv, V](Graph& g, const Tensor&, const Tensor& dy) {
        Tensor& dx = g.grad_of(x);
        for (std::size_t r = 0; r < idv.size(); ++r) dx[r * V + idv[r]] += dy[r];
    });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Tensor& X = x.value();
    const std::size_t D = X.last_dim(), rows = X.rows();
    if (X.rank() == 0 || D < 2) throw ShapeError("layer_norm: feature dimension must be >= 2, got " + shape_str(X.shape()));
    if (gain.shape() != Shape{D}) mismatch(OpKind::layer_norm, X.shape(), gain.shape());
    if (bias.shape() != Shape{D}) mismatch(OpKind::layer_norm, X.shape(), bias.shape());
    const Tensor& G = gain.value();
    const Tensor& Bv = bias.value();
    Tensor xhat(X.shape());
    std::vector<double> inv(rows);
    Tensor out(X.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = X.data() + r * D;
        double mu = 0.0;
        for (std::size_t j = 0; j < D; ++j) mu += xr[j];
        mu /= static_cast<double>(D);
        double var = 0.0;
        for (std::size_t j = 0; j < D; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(D);
        inv[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < D; ++j) {
            const double h = (xr[j] - mu) * inv[r];
            xhat[r * D + j] = h;
            out[r * D + j] = G[j] * h + Bv[j];
        }
    }
    return x.graph().record(
        OpKind::layer_norm, std::move(out), {x, gain, bias},
        [x, gain, bias, xhat = std::move(xhat), inv = std::move(inv), D, rows](Graph& g, const Tensor&, const Tensor& dy) {
            const Tensor& G = g.value(gain);
            if (g.requires_grad(x)) {
                Tensor& dx = g.grad_of(x);
                std::vector<double> dh(D);
                for (std::size_t r = 0; r < rows; ++r) {
                    double mean_dh = 0.0, mean_dh_h = 0.0;
                    for (std::size_t j = 0; j < D; ++j) {
                        dh[j] = dy[r * D + j] * G[j];
                        mean_dh += dh[j];
                        mean_dh_h += dh[j] * xhat[r * D + j];
                    }
                    mean_dh /= static_cast<double>(D);
                    mean_dh_h /= static_cast<double>(D);
                    for (std::size_t j = 0; j < D; ++j)
                        dx[r * D + j] += inv[r] * (dh[j] - mean_dh - xhat[r * D + j] * mean_dh_h);
                }
            }
            if (g.requires_grad(gain)) {
                Tensor& dg = g.grad_of(gain);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < D; ++j) dg[j] += dy[r * D + j] * xhat[r * D + j];
            }
            if (g.requires_grad(bias)) {
                Tensor& db = g.grad_of(bias);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < D; ++j) db[j] += dy[r * D + j];
            }
        });
}

Var reshape(Var x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return x.graph().record(OpKind::reshape, std::move(out), {x}, [x](Graph& g, const Tensor&, const Tensor& dy) {
        Tensor& dx = g.grad_of(x);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    });
}

Var add_time_broadcast(Var x, Var y) {
    const Tensor& X = x.value();
    const Tensor& Y = y.value();
    if (X.rank() != 3 || Y.rank() != 2 || Y.dim(0) != X.dim(0) || Y.dim(1) != X.dim(2))
        mismatch(OpKind::add_time_broadcast, X.shape(), Y.shape());
    const std::size_t B = X.dim(0), S = X.dim(1), A = X.dim(2);
    Tensor out(X.shape());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t a = 0; a < A; ++a) out[(b * S + s) * A + a] = X[(b * S + s) * A + a] + Y[b * A + a];
    return x.graph().record(OpKind::add_time_broadcast, std::move(out), {x, y}, [x, y, B, S, A](Graph& g, const Tensor&, const Tensor& dy) {
        if (g.requires_grad(x)) g.grad_of(x).add_(dy);
        if (g.requires_grad(y)) {
            Tensor& d = g.grad_of(y);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t s = 0; s < S; ++s)
                    for (std::size_t a = 0; a < A; ++a) d[b * A + a] += dy[(b * S + s) * A + a];
        }
    });
}

}  // namespace nmt::ops
