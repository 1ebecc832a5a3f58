#pragma once

// Reverse-mode differentiation over dense matrices. A Tape records every
// primitive in execution order; Var is a cheap handle into it.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "miner/matrix.hpp"

namespace miner::ad {

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Matrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
};

using ForwardFn = std::function<Matrix(std::span<const Matrix* const>)>;
/// Receives input values, the output value and its gradient; accumulates into
/// the non-null input gradient slots.
using BackwardFn =
    std::function<void(std::span<const Matrix* const>, const Matrix&, const Matrix&, std::span<Matrix* const>)>;

struct TapeDiagnostics {
    std::uint64_t floored_logs = 0;
};

class Tape {
public:
    enum class Kind { constant, parameter, op, stop };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value) { return push_leaf(std::move(value), Kind::constant); }
    Var parameter(Matrix value) { return push_leaf(std::move(value), Kind::parameter); }

    Var record(std::vector<std::size_t> inputs, ForwardFn forward, BackwardFn backward) {
        std::vector<const Matrix*> in;
        in.reserve(inputs.size());
        bool needs = false;
        for (auto i : inputs) {
            require(i < nodes_.size(), "Tape: input references a later node");
            in.push_back(&nodes_[i].value);
            needs = needs || nodes_[i].requires_grad;
        }
        Matrix out = forward(in);
        Node n;
        n.value = std::move(out);
        n.inputs = std::move(inputs);
        n.forward = std::move(forward);
        n.backward = std::move(backward);
        n.kind = Kind::op;
        n.requires_grad = needs;
        nodes_.push_back(std::move(n));
        return {this, nodes_.size() - 1};
    }

    /// Identity in the forward pass, blocks all gradient flow.
    Var stop_gradient(Var x) {
        Node n;
        n.value = x.value();
        n.inputs = {x.id};
        n.forward = [](std::span<const Matrix* const> in) { return *in[0]; };
        n.kind = Kind::stop;
        n.requires_grad = false;
        nodes_.push_back(std::move(n));
        return {this, nodes_.size() - 1};
    }

    const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
    Kind kind(Var v) const { return nodes_.at(v.id).kind; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Gradient of the scalar `loss` w.r.t. every node that requires one.
    void backward(Var loss, bool verify_replay_first = false) {
        require(loss.tape == this, "backward: loss belongs to another tape");
        const Matrix& lv = value(loss);
        require(lv.rows() == 1 && lv.cols() == 1, "backward: loss is not scalar");
        if (verify_replay_first) verify_replay();
        for (auto& n : nodes_) n.grad = Matrix();
        nodes_[loss.id].grad = Matrix::scalar(1.0);
        std::vector<const Matrix*> in;
        std::vector<Matrix*> gin;
        for (std::size_t idx = loss.id + 1; idx-- > 0;) {
            Node& n = nodes_[idx];
            if (n.kind != Kind::op || !n.requires_grad || n.grad.empty()) continue;
            in.clear();
            gin.clear();
            for (auto i : n.inputs) {
                Node& src = nodes_[i];
                in.push_back(&src.value);
                if (src.requires_grad) {
                    if (src.grad.empty()) src.grad = Matrix(src.value.rows(), src.value.cols());
                    gin.push_back(&src.grad);
                } else {
                    gin.push_back(nullptr);
                }
            }
            n.backward(in, n.value, n.grad, gin);
        }
        backward_done_ = true;
    }

    /// Gradient slot of `v` after backward(); zeros when no gradient reached it.
    Matrix grad(Var v) const {
        require(backward_done_, "grad: backward() has not been run");
        const Node& n = nodes_.at(v.id);
        if (n.grad.empty()) return Matrix(n.value.rows(), n.value.cols());
        return n.grad;
    }

    /// Re-executes every recorded op and checks bit-exact agreement with the
    /// cached values.
    void verify_replay() const {
        std::vector<const Matrix*> in;
        for (std::size_t idx = 0; idx < nodes_.size(); ++idx) {
            const Node& n = nodes_[idx];
            if (n.kind == Kind::constant || n.kind == Kind::parameter) continue;
            in.clear();
            for (auto i : n.inputs) {
                require(i < idx, "Tape replay: node references a later node");
                in.push_back(&nodes_[i].value);
            }
            if (!(n.forward(in) == n.value)) throw Error("Tape replay mismatch at node " + std::to_string(idx));
        }
    }

    TapeDiagnostics& diagnostics() noexcept { return diagnostics_; }
    const TapeDiagnostics& diagnostics() const noexcept { return diagnostics_; }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::vector<std::size_t> inputs;
        ForwardFn forward;
        BackwardFn backward;
        Kind kind = Kind::constant;
        bool requires_grad = false;
    };

    Var push_leaf(Matrix value, Kind kind) {
        Node n;
        n.value = std::move(value);
        n.kind = kind;
        n.requires_grad = kind == Kind::parameter;
        nodes_.push_back(std::move(n));
        return {this, nodes_.size() - 1};
    }

    std::vector<Node> nodes_;
    TapeDiagnostics diagnostics_;
    bool backward_done_ = false;
};

inline const Matrix& Var::value() const { return tape->value(*this); }

namespace detail {

inline Tape& same_tape(Var a, Var b) {
    require(a.tape != nullptr && a.tape == b.tape, "autodiff: operands live on different tapes");
    return *a.tape;
}

template <class F>
Matrix map(const Matrix& x, F f) {
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    return y;
}

inline void accumulate(Matrix* slot, const Matrix& g) {
    if (slot) *slot += g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(Var a, Var b) {
    auto& t = detail::same_tape(a, b);
    require(a.value().same_shape(b.value()), "add: shape mismatch");
    return t.record(
        {a.id, b.id}, [](auto in) { return *in[0] + *in[1]; },
        [](auto, const Matrix&, const Matrix& g, auto gin) {
            detail::accumulate(gin[0], g);
            detail::accumulate(gin[1], g);
        });
}

inline Var sub(Var a, Var b) {
    auto& t = detail::same_tape(a, b);
    require(a.value().same_shape(b.value()), "sub: shape mismatch");
    return t.record(
        {a.id, b.id}, [](auto in) { return *in[0] - *in[1]; },
        [](auto, const Matrix&, const Matrix& g, auto gin) {
            detail::accumulate(gin[0], g);
            if (gin[1]) *gin[1] -= g;
        });
}

inline Var mul(Var a, Var b) {
    auto& t = detail::same_tape(a, b);
    require(a.value().same_shape(b.value()), "mul: shape mismatch");
    return t.record(
        {a.id, b.id},
        [](auto in) {
            Matrix y = *in[0];
            for (std::size_t i = 0; i < y.size(); ++i) y[i] *= (*in[1])[i];
            return y;
        },
        [](auto in, const Matrix&, const Matrix& g, auto gin) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (gin[0]) (*gin[0])[i] += g[i] * (*in[1])[i];
                if (gin[1]) (*gin[1])[i] += g[i] * (*in[0])[i];
            }
        });
}

inline Var scale(Var a, double s) {
    return a.tape->record(
        {a.id}, [s](auto in) { return *in[0] * s; },
        [s](auto, const Matrix&, const Matrix& g, auto gin) {
            if (gin[0])
                for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += s * g[i];
        });
}

inline Var add_scalar(Var a, double s) {
    return a.tape->record(
        {a.id}, [s](auto in) { return detail::map(*in[0], [s](double v) { return v + s; }); },
        [](auto, const Matrix&, const Matrix& g, auto gin) { detail::accumulate(gin[0], g); });
}

inline Var neg(Var a) { return scale(a, -1.0); }

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator-(Var a) { return neg(a); }

inline Var leaky_relu(Var a, double slope) {
    return a.tape->record(
        {a.id}, [slope](auto in) { return detail::map(*in[0], [slope](double v) { return v > 0 ? v : slope * v; }); },
        [slope](auto in, const Matrix&, const Matrix& g, auto gin) {
            if (!gin[0]) return;
            for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += (*in[0])[i] > 0 ? g[i] : slope * g[i];
        });
}

inline Var tanh(Var a) {
    return a.tape->record(
        {a.id}, [](auto in) { return detail::map(*in[0], [](double v) { return std::tanh(v); }); },
        [](auto, const Matrix& y, const Matrix& g, auto gin) {
            if (!gin[0]) return;
            for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * (1.0 - y[i] * y[i]);
        });
}

inline Var exp(Var a) {
    return a.tape->record(
        {a.id}, [](auto in) { return detail::map(*in[0], [](double v) { return std::exp(v); }); },
        [](auto, const Matrix& y, const Matrix& g, auto gin) {
            if (!gin[0]) return;
            for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * y[i];
        });
}

/// log(max(x, floor)); floored entries get zero gradient and are counted in
/// the tape diagnostics.
inline Var log(Var a, double floor = 1e-300) {
    Tape* t = a.tape;
    std::uint64_t floored = 0;
    for (double v : a.value().values())
        if (!(v > floor)) ++floored;
    t->diagnostics().floored_logs += floored;
    return t->record(
        {a.id}, [floor](auto in) { return detail::map(*in[0], [floor](double v) { return std::log(v > floor ? v : floor); }); },
        [floor](auto in, const Matrix&, const Matrix& g, auto gin) {
            if (!gin[0]) return;
            for (std::size_t i = 0; i < g.size(); ++i)
                if ((*in[0])[i] > floor) (*gin[0])[i] += g[i] / (*in[0])[i];
        });
}

/// |x|^p elementwise, p ≥ 1.
inline Var abs_pow(Var a, double p) {
    require(p >= 1.0, "abs_pow: exponent must be >= 1");
    return a.tape->record(
        {a.id}, [p](auto in) { return detail::map(*in[0], [p](double v) { return std::pow(std::abs(v), p); }); },
        [p](auto in, const Matrix&, const Matrix& g, auto gin) {
            if (!gin[0]) return;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double x = (*in[0])[i];
                if (x == 0.0) continue;
                const double d = p == 1.0 ? 1.0 : p * std::pow(std::abs(x), p - 1.0);
                (*gin[0])[i] += g[i] * (x > 0 ? d : -d);
            }
        });
}

// ---------------------------------------------------------------------------
// Linear algebra and broadcasting

inline Var matmul(Var a, Var b) {
    auto& t = detail::same_tape(a, b);
    require(a.cols() == b.rows(), "matmul: inner dimensions differ");
    return t.record(
        {a.id, b.id}, [](auto in) { return miner::matmul(*in[0], *in[1]); },
        [](auto in, const Matrix&, const Matrix& g, auto gin) {
            if (gin[0]) *gin[0] += matmul_nt(g, *in[1]);
            if (gin[1]) *gin[1] += matmul_tn(*in[0], g);
        });
}

/// a · bᵀ
inline Var matmul_nt(Var a, Var b) {
    auto& t = detail::same_tape(a, b);
    require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
    return t.record(
        {a.id, b.id}, [](auto in) { return miner::matmul_nt(*in[0], *in[1]); },
        [](auto in, const Matrix&, const Matrix& g, auto gin) {
            if (gin[0]) *gin[0] += miner::matmul(g, *in[1]);
            if (gin[1]) *gin[1] += miner::matmul_tn(g, *in[0]);
        });
}

/// Adds a 1×c row to every row of a (r×c).
inline Var add_row(Var a, Var row) {
    auto& t = detail::same_tape(a, row);
    require(row.rows() == 1 && row.cols() == a.cols(), "add_row: row shape mismatch");
    return t.record(
        {a.id, row.id},
        [](auto in) {
            Matrix y = *in[0];
            for (std::size_t r = 0; r < y.rows(); ++r)
                for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += (*in[1])(0, c);
            return y;
        },
        [](auto, const Matrix&, const Matrix& g, auto gin) {
            detail::accumulate(gin[0], g);
            if (gin[1])
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < g.cols(); ++c) (*gin[1])(0, c) += g(r, c);
        });
}

/// Multiplies row r of a by col(r, 0).
inline Var mul_col(Var a, Var col) {
    auto& t = detail::same_tape(a, col);
    require(col.cols() == 1 && col.rows() == a.rows(), "mul_col: column shape mismatch");
    return t.record(
        {a.id, col.id},
        [](auto in) {
            Matrix y = *in[0];
            for (std::size_t r = 0; r < y.rows(); ++r)
                for (auto& v : y.row(r)) v *= (*in[1])(r, 0);
            return y;
        },
        [](auto in, const Matrix&, const Matrix& g, auto gin) {
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) {
                    if (gin[0]) (*gin[0])(r, c) += g(r, c) * (*in[1])(r, 0);
                    if (gin[1]) (*gin[1])(r, 0) += g(r, c) * (*in[0])(r, c);
                }
        });
}

inline Var concat_cols(Var a, Var b) {
    auto& t = detail::same_tape(a, b);
    require(a.rows() == b.rows(), "concat_cols: row count mismatch");
    return t.record(
        {a.id, b.id},
        [](auto in) {
            const Matrix& x = *in[0];
            const Matrix& y = *in[1];
            Matrix out(x.rows(), x.cols() + y.cols());
            for (std::size_t r = 0; r < x.rows(); ++r) {
                std::copy(x.row(r).begin(), x.row(r).end(), out.row(r).begin());
                std::copy(y.row(r).begin(), y.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(x.cols()));
            }
            return out;
        },
        [](auto in, const Matrix&, const Matrix& g, auto gin) {
            const std::size_t split = in[0]->cols();
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) {
                    if (c < split) {
                        if (gin[0]) (*gin[0])(r, c) += g(r, c);
                    } else if (gin[1]) {
                        (*gin[1])(r, c - split) += g(r, c);
                    }
                }
        });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(Var a) {
    return a.tape->record(
        {a.id},
        [](auto in) {
            double s = 0.0;
            for (double v : in[0]->values()) s += v;
            return Matrix::scalar(s);
        },
        [](auto, const Matrix&, const Matrix& g, auto gin) {
            if (!gin[0]) return;
            for (auto& v : gin[0]->values()) v += g[0];
        });
}

inline Var mean(Var a) {
    require(a.value().size() > 0, "mean: empty operand");
    return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

/// r×c → r×1
inline Var row_sum(Var a) {
    return a.tape->record(
        {a.id},
        [](auto in) {
            const Matrix& x = *in[0];
            Matrix y(x.rows(), 1);
            for (std::size_t r = 0; r < x.rows(); ++r)
                for (double v : x.row(r)) y(r, 0) += v;
            return y;
        },
        [](auto, const Matrix&, const Matrix& g, auto gin) {
            if (!gin[0]) return;
            for (std::size_t r = 0; r < gin[0]->rows(); ++r)
                for (auto& v : gin[0]->row(r)) v += g(r, 0);
        });
}

/// r×c → 1×c
inline Var col_mean(Var a) {
    require(a.rows() > 0, "col_mean: empty operand");
    return a.tape->record(
        {a.id},
        [](auto in) {
            const Matrix& x = *in[0];
            Matrix y(1, x.cols());
            for (std::size_t r = 0; r < x.rows(); ++r)
                for (std::size_t c = 0; c < x.cols(); ++c) y(0, c) += x(r, c);
            y *= 1.0 / static_cast<double>(x.rows());
            return y;
        },
        [](auto in, const Matrix&, const Matrix& g, auto gin) {
            if (!gin[0]) return;
            const double inv = 1.0 / static_cast<double>(in[0]->rows());
            for (std::size_t r = 0; r < gin[0]->rows(); ++r)
                for (std::size_t c = 0; c < gin[0]->cols(); ++c) (*gin[0])(r, c) += g(0, c) * inv;
        });
}

/// Row-wise log Σ exp over entries with mask(r, c) != 0 (all entries when the
/// mask is empty). r×c → r×1.
inline Var row_logsumexp(Var a, std::shared_ptr<const std::vector<std::uint8_t>> mask = nullptr) {
    if (mask) require(mask->size() == a.value().size(), "row_logsumexp: mask shape mismatch");
    auto on = [mask](std::size_t i) { return !mask || (*mask)[i] != 0; };
    return a.tape->record(
        {a.id},
        [on](auto in) {
            const Matrix& x = *in[0];
            Matrix y(x.rows(), 1);
            for (std::size_t r = 0; r < x.rows(); ++r) {
                double mx = -INFINITY;
                for (std::size_t c = 0; c < x.cols(); ++c)
                    if (on(r * x.cols() + c)) mx = std::max(mx, x(r, c));
                require(std::isfinite(mx), "row_logsumexp: empty or non-finite row");
                double s = 0.0;
                for (std::size_t c = 0; c < x.cols(); ++c)
                    if (on(r * x.cols() + c)) s += std::exp(x(r, c) - mx);
                y(r, 0) = mx + std::log(s);
            }
            return y;
        },
        [on](auto in, const Matrix& y, const Matrix& g, auto gin) {
            if (!gin[0]) return;
            const Matrix& x = *in[0];
            for (std::size_t r = 0; r < x.rows(); ++r)
                for (std::size_t c = 0; c < x.cols(); ++c)
                    if (on(r * x.cols() + c)) (*gin[0])(r, c) += g(r, 0) * std::exp(x(r, c) - y(r, 0));
        });
}

inline Var log_softmax_rows(Var a) {
    return a.tape->record(
        {a.id},
        [](auto in) {
            Matrix y = *in[0];
            for (std::size_t r = 0; r < y.rows(); ++r) {
                const double lse = logsumexp(y.row(r));
                for (auto& v : y.row(r)) v -= lse;
            }
            return y;
        },
        [](auto, const Matrix& y, const Matrix& g, auto gin) {
            if (!gin[0]) return;
            for (std::size_t r = 0; r < y.rows(); ++r) {
                double gs = 0.0;
                for (double v : g.row(r)) gs += v;
                for (std::size_t c = 0; c < y.cols(); ++c) (*gin[0])(r, c) += g(r, c) - std::exp(y(r, c)) * gs;
            }
        });
}

inline Var softmax_rows(Var a) {
    return a.tape->record(
        {a.id},
        [](auto in) {
            Matrix y = *in[0];
            for (std::size_t r = 0; r < y.rows(); ++r) {
                const double lse = logsumexp(y.row(r));
                for (auto& v : y.row(r)) v = std::exp(v - lse);
            }
            return y;
        },
        [](auto, const Matrix& y, const Matrix& g, auto gin) {
            if (!gin[0]) return;
            for (std::size_t r = 0; r < y.rows(); ++r) {
                const double gy = dot(g.row(r), y.row(r));
                for (std::size_t c = 0; c < y.cols(); ++c) (*gin[0])(r, c) += y(r, c) * (g(r, c) - gy);
            }
        });
}

/// Scales each row to unit Euclidean norm; zero rows are an error.
inline Var normalize_rows(Var a) {
    for (std::size_t r = 0; r < a.rows(); ++r)
        require(norm2(a.value().row(r)) > 0.0, "normalize_rows: zero-norm row");
    return a.tape->record(
        {a.id},
        [](auto in) {
            Matrix y = *in[0];
            for (std::size_t r = 0; r < y.rows(); ++r) {
                const double n = norm2(y.row(r));
                for (auto& v : y.row(r)) v /= n;
            }
            return y;
        },
        [](auto in, const Matrix& y, const Matrix& g, auto gin) {
            if (!gin[0]) return;
            for (std::size_t r = 0; r < y.rows(); ++r) {
                const double n = norm2(in[0]->row(r));
                const double gy = dot(g.row(r), y.row(r));
                for (std::size_t c = 0; c < y.cols(); ++c) (*gin[0])(r, c) += (g(r, c) - y(r, c) * gy) / n;
            }
        });
}

/// out(i, 0) = Σ_c a(i, c)·b(i, c)
inline Var row_dot(Var a, Var b) {
    auto& t = detail::same_tape(a, b);
    require(a.value().same_shape(b.value()), "row_dot: shape mismatch");
    return t.record(
        {a.id, b.id},
        [](auto in) {
            Matrix y(in[0]->rows(), 1);
            for (std::size_t r = 0; r < y.rows(); ++r) y(r, 0) = dot(in[0]->row(r), in[1]->row(r));
            return y;
        },
        [](auto in, const Matrix&, const Matrix& g, auto gin) {
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < in[0]->cols(); ++c) {
                    if (gin[0]) (*gin[0])(r, c) += g(r, 0) * (*in[1])(r, c);
                    if (gin[1]) (*gin[1])(r, c) += g(r, 0) * (*in[0])(r, c);
                }
        });
}

/// D(i, j) = Σ_c |a(i, c) − b(j, c)|^p
inline Var pairwise_pow_distance(Var a, Var b, double p) {
    auto& t = detail::same_tape(a, b);
    require(a.cols() == b.cols(), "pairwise_pow_distance: dimension mismatch");
    require(p >= 1.0, "pairwise_pow_distance: exponent must be >= 1");
    return t.record(
        {a.id, b.id},
        [p](auto in) {
            const Matrix& x = *in[0];
            const Matrix& y = *in[1];
            Matrix d(x.rows(), y.rows());
            for (std::size_t i = 0; i < x.rows(); ++i) {
                auto xi = x.row(i);
                for (std::size_t j = 0; j < y.rows(); ++j) {
                    auto yj = y.row(j);
                    double s = 0.0;
                    if (p == 2.0) {
                        for (std::size_t c = 0; c < xi.size(); ++c) s += (xi[c] - yj[c]) * (xi[c] - yj[c]);
                    } else if (p == 1.0) {
                        for (std::size_t c = 0; c < xi.size(); ++c) s += std::abs(xi[c] - yj[c]);
                    } else {
                        for (std::size_t c = 0; c < xi.size(); ++c) s += std::pow(std::abs(xi[c] - yj[c]), p);
                    }
                    d(i, j) = s;
                }
            }
            return d;
        },
        [p](auto in, const Matrix&, const Matrix& g, auto gin) {
            const Matrix& x = *in[0];
            const Matrix& y = *in[1];
            for (std::size_t i = 0; i < x.rows(); ++i) {
                auto xi = x.row(i);
                for (std::size_t j = 0; j < y.rows(); ++j) {
                    const double gij = g(i, j);
                    if (gij == 0.0) continue;
                    auto yj = y.row(j);
                    for (std::size_t c = 0; c < xi.size(); ++c) {
                        const double delta = xi[c] - yj[c];
                        double dd;
                        if (p == 2.0) {
                            dd = 2.0 * delta;
                        } else if (delta == 0.0) {
                            dd = 0.0;
                        } else if (p == 1.0) {
                            dd = delta > 0 ? 1.0 : -1.0;
                        } else {
                            dd = p * std::pow(std::abs(delta), p - 1.0) * (delta > 0 ? 1.0 : -1.0);
                        }
                        if (gin[0]) (*gin[0])(i, c) += gij * dd;
                        if (gin[1]) (*gin[1])(j, c) -= gij * dd;
                    }
                }
            }
        });
}

/// out(i, 0) = a(i, index[i])
inline Var pick(Var a, std::vector<std::size_t> index) {
    require(index.size() == a.rows(), "pick: one index per row required");
    for (auto i : index) require(i < a.cols(), "pick: index out of range");
    auto idx = std::make_shared<const std::vector<std::size_t>>(std::move(index));
    return a.tape->record(
        {a.id},
        [idx](auto in) {
            Matrix y(in[0]->rows(), 1);
            for (std::size_t r = 0; r < y.rows(); ++r) y(r, 0) = (*in[0])(r, (*idx)[r]);
            return y;
        },
        [idx](auto, const Matrix&, const Matrix& g, auto gin) {
            if (!gin[0]) return;
            for (std::size_t r = 0; r < g.rows(); ++r) (*gin[0])(r, (*idx)[r]) += g(r, 0);
        });
}

/// Diagonal of a square matrix as a column.
inline Var diag(Var a) {
    require(a.rows() == a.cols(), "diag: matrix not square");
    std::vector<std::size_t> index(a.rows());
    for (std::size_t i = 0; i < index.size(); ++i) index[i] = i;
    return pick(a, std::move(index));
}

inline Var stop_gradient(Var a) { return a.tape->stop_gradient(a); }

}  // namespace miner::ad
