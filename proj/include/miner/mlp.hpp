#pragma once

// MLP encoders/predictors on top of the tape, Adam, EMA and the
// finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "miner/autodiff.hpp"
#include "miner/rng.hpp"

namespace miner {

enum class OutputHead { none, sphere, box };

struct DenseLayer {
    Matrix weight;  // in × out
    Matrix bias;    // 1 × out
};

struct MlpParams {
    std::vector<DenseLayer> layers;
    double slope = 0.2;
    OutputHead head = OutputHead::none;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().weight.cols(); }

    /// Weights and biases in a fixed order: w0, b0, w1, b1, ...
    std::vector<Matrix*> tensors() {
        std::vector<Matrix*> out;
        for (auto& l : layers) {
            out.push_back(&l.weight);
            out.push_back(&l.bias);
        }
        return out;
    }
    std::vector<const Matrix*> tensors() const {
        std::vector<const Matrix*> out;
        for (const auto& l : layers) {
            out.push_back(&l.weight);
            out.push_back(&l.bias);
        }
        return out;
    }

    void validate() const {
        require(!layers.empty(), "MlpParams: no layers");
        require(slope > 0.0 && slope <= 1.0, "MlpParams: leaky-ReLU slope must be in (0, 1]");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            require(l.bias.rows() == 1 && l.bias.cols() == l.weight.cols(), "MlpParams: bias shape mismatch");
            if (i > 0) require(layers[i - 1].weight.cols() == l.weight.rows(), "MlpParams: layer dimensions do not chain");
        }
    }
};

/// He-style initialization; `dims` lists input, hidden..., output widths.
inline MlpParams make_mlp(std::span<const std::size_t> dims, OutputHead head, Rng& rng, double slope = 0.2) {
    require(dims.size() >= 2, "make_mlp: need at least input and output widths");
    MlpParams p;
    p.slope = slope;
    p.head = head;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const std::size_t in = dims[i], out = dims[i + 1];
        DenseLayer l{Matrix(in, out), Matrix(1, out)};
        const double sd = std::sqrt(2.0 / ((1.0 + slope * slope) * static_cast<double>(in)));
        for (auto& w : l.weight.values()) w = sd * rng.normal();
        p.layers.push_back(std::move(l));
    }
    return p;
}

inline MlpParams make_mlp(std::initializer_list<std::size_t> dims, OutputHead head, Rng& rng, double slope = 0.2) {
    std::vector<std::size_t> d(dims);
    return make_mlp(std::span<const std::size_t>(d), head, rng, slope);
}

/// Parameters registered on a tape.
struct BoundMlp {
    const MlpParams* params = nullptr;
    std::vector<ad::Var> vars;  // same order as MlpParams::tensors()
};

inline BoundMlp bind(ad::Tape& tape, const MlpParams& p, bool trainable = true) {
    BoundMlp b{&p, {}};
    for (const Matrix* t : p.tensors()) b.vars.push_back(trainable ? tape.parameter(*t) : tape.constant(*t));
    return b;
}

inline ad::Var forward(const BoundMlp& net, ad::Var input) {
    const MlpParams& p = *net.params;
    require(input.cols() == p.input_dim(), "forward: input width does not match first layer");
    ad::Var h = input;
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        h = ad::add_row(ad::matmul(h, net.vars[2 * i]), net.vars[2 * i + 1]);
        if (i + 1 < p.layers.size()) h = ad::leaky_relu(h, p.slope);
    }
    switch (p.head) {
        case OutputHead::sphere: h = ad::normalize_rows(h); break;
        case OutputHead::box: h = ad::tanh(h); break;
        case OutputHead::none: break;
    }
    require(h.value().all_finite(), "forward: non-finite activation");
    return h;
}

/// Value-only forward pass.
inline Matrix forward(const MlpParams& p, const Matrix& input) {
    ad::Tape tape;
    auto net = bind(tape, p, false);
    return forward(net, tape.constant(input)).value();
}

// ---------------------------------------------------------------------------

struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;
};

inline void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state) {
    require(params.size() == grads.size(), "adam_step: parameter/gradient count mismatch");
    if (state.m.empty()) {
        for (const Matrix* p : params) {
            state.m.emplace_back(p->rows(), p->cols());
            state.v.emplace_back(p->rows(), p->cols());
        }
    }
    require(state.m.size() == params.size(), "adam_step: state does not match parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        require(params[i]->same_shape(grads[i]) && params[i]->same_shape(state.m[i]), "adam_step: shape mismatch");
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i];
        Matrix& m = state.m[i];
        Matrix& v = state.v[i];
        const Matrix& g = grads[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double mh = m[j] / c1;
            const double vh = v[j] / c2;
            p[j] -= state.lr * mh / (std::sqrt(vh) + state.eps);
        }
    }
}

/// teacher ← λ·teacher + (1 − λ)·student
inline void ema_update(MlpParams& teacher, const MlpParams& student, double lambda) {
    require(lambda >= 0.0 && lambda <= 1.0, "ema_update: lambda outside [0, 1]");
    auto t = teacher.tensors();
    auto s = student.tensors();
    require(t.size() == s.size(), "ema_update: layer count mismatch");
    for (std::size_t i = 0; i < t.size(); ++i) {
        require(t[i]->same_shape(*s[i]), "ema_update: shape mismatch");
        for (std::size_t j = 0; j < t[i]->size(); ++j) (*t[i])[j] = lambda * (*t[i])[j] + (1.0 - lambda) * (*s[i])[j];
    }
}

// ---------------------------------------------------------------------------

using LossFn = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t coordinates = 0;
    std::vector<Matrix> analytic;
};

inline double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

/// Compares tape gradients with central differences. When `max_coords` is
/// nonzero only that many randomly chosen coordinates are perturbed.
inline GradCheckResult grad_check(const LossFn& loss_fn, const std::vector<Matrix>& params, double step,
                                  std::size_t max_coords = 0, std::uint64_t seed = 0) {
    require(step > 0.0, "grad_check: step must be positive");
    auto evaluate = [&](const std::vector<Matrix>& ps) {
        ad::Tape tape;
        std::vector<ad::Var> vars;
        for (const auto& p : ps) vars.push_back(tape.constant(p));
        return loss_fn(tape, vars).value().item();
    };

    GradCheckResult result;
    {
        ad::Tape tape;
        std::vector<ad::Var> vars;
        for (const auto& p : params) vars.push_back(tape.parameter(p));
        ad::Var loss = loss_fn(tape, vars);
        const double v0 = loss.value().item();
        tape.backward(loss);
        for (auto v : vars) result.analytic.push_back(tape.grad(v));
        require(evaluate(params) == v0 && evaluate(params) == v0, "grad_check: loss function is not deterministic");
    }

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t j = 0; j < params[i].size(); ++j) coords.emplace_back(i, j);
    if (max_coords > 0 && coords.size() > max_coords) {
        Rng rng(seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(max_coords);
    }

    std::vector<Matrix> work = params;
    for (auto [i, j] : coords) {
        const double orig = work[i][j];
        work[i][j] = orig + step;
        const double fp = evaluate(work);
        work[i][j] = orig - step;
        const double fm = evaluate(work);
        work[i][j] = orig;
        const double numeric = (fp - fm) / (2.0 * step);
        result.max_relative_error = std::max(result.max_relative_error, relative_error(result.analytic[i][j], numeric));
    }
    result.coordinates = coords.size();
    return result;
}

}  // namespace miner
