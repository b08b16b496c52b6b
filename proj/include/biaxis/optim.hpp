#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "biaxis/errors.hpp"
#include "biaxis/matrix.hpp"
#include "biaxis/model.hpp"

namespace biaxis {

enum class ProxMode {
    kClosedForm,     // Euclidean prox, threshold r * lambda_s; exact reference
    kWeightedNewton, // prox in Adam's diagonal metric, solved by Newton-Raphson
};

struct ProxConfig {
    double lambda_s = 0.0;
    ProxMode mode = ProxMode::kWeightedNewton;
    double newton_tol = 1e-12;
    std::size_t newton_max_iter = 100;
};

// Per-tensor first/second moment accumulators.
struct AdamTensorState {
    Vector m;
    Vector v;

    explicit AdamTensorState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t t = 0;

    AdamTensorState r, w0, b0, w1, b1;

    static AdamState init(const ModelConfig& c, double learning_rate) {
        AdamState s;
        s.learning_rate = learning_rate;
        s.r = AdamTensorState(c.rotate ? c.d * c.d : 0);
        s.w0 = AdamTensorState(c.d * c.h1);
        s.b0 = AdamTensorState(c.use_bias ? c.h1 : 0);
        s.w1 = AdamTensorState(c.h1 * c.h2);
        s.b1 = AdamTensorState(c.use_bias ? c.h2 : 0);
        return s;
    }

    double bias_correction1() const { return 1.0 - std::pow(beta1, static_cast<double>(t)); }
    double bias_correction2() const { return 1.0 - std::pow(beta2, static_cast<double>(t)); }
};

namespace detail {

inline void adam_update_span(AdamTensorState& st, double* params, const double* grads, std::size_t n,
                             const AdamState& global) {
    const double bc1 = global.bias_correction1();
    const double bc2 = global.bias_correction2();
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        st.m[i] = global.beta1 * st.m[i] + (1.0 - global.beta1) * g;
        st.v[i] = global.beta2 * st.v[i] + (1.0 - global.beta2) * g * g;
        const double m_hat = st.m[i] / bc1;
        const double v_hat = st.v[i] / bc2;
        params[i] -= global.learning_rate * m_hat / (std::sqrt(v_hat) + global.epsilon);
    }
}

} // namespace detail

// One bias-corrected Adam update over every trainable tensor. `grads` must
// already be averaged over the accumulation window.
inline void adam_step(AdamState& state, RotationGAE& model, const ModelGrads& grads) {
    state.t += 1;
    const auto& c = model.config;
    if (c.rotate) {
        detail::adam_update_span(state.r, model.r.data().data(), grads.r.data().data(),
                                 c.d * c.d, state);
    }
    detail::adam_update_span(state.w0, model.w0.data().data(), grads.w0.data().data(),
                             c.d * c.h1, state);
    detail::adam_update_span(state.w1, model.w1.data().data(), grads.w1.data().data(),
                             c.h1 * c.h2, state);
    if (c.use_bias) {
        detail::adam_update_span(state.b0, model.b0.data(), grads.b0.data(), c.h1, state);
        detail::adam_update_span(state.b1, model.b1.data(), grads.b1.data(), c.h2, state);
    }
}

// Proximal map of tau * ||.||_2 : block soft-threshold.
inline Vector prox_row(const Vector& v, double tau) {
    if (tau < 0.0) throw input_error("prox_row: tau must be >= 0");
    const double n = norm2(v);
    Vector out(v.size(), 0.0);
    if (n <= tau) return out;
    const double scale = 1.0 - tau / n;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = scale * v[i];
    return out;
}

// Proximal map of tau * ||.||_2 in the diagonal metric d:
//   argmin_x 1/2 sum_i d_i (x_i - v_i)^2 + tau ||x||_2.
// Zero iff ||diag(d) v||_2 <= tau; otherwise x_i = d_i v_i theta / (d_i theta + tau)
// where theta = ||x||_2 solves g(theta) = theta - ||x(theta)||_2 = 0, found by
// Newton-Raphson with a bisection fallback on (0, ||v||_2].
inline Vector prox_row_weighted(const Vector& v, const Vector& d_weights, double tau,
                                double newton_tol = 1e-12, std::size_t newton_max_iter = 100) {
    if (v.size() != d_weights.size()) throw dimension_error("prox_row_weighted: length mismatch");
    if (tau < 0.0) throw input_error("prox_row_weighted: tau must be >= 0");
    for (double d : d_weights) {
        if (!(d > 0.0)) throw input_error("prox_row_weighted: weights must be > 0");
    }
    const std::size_t n = v.size();
    Vector out(n, 0.0);
    if (tau == 0.0) return v;

    double dv_norm_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) dv_norm_sq += d_weights[i] * v[i] * d_weights[i] * v[i];
    if (std::sqrt(dv_norm_sq) <= tau) return out;  // subgradient optimality at 0

    const double v_norm = norm2(v);
    auto x_norm_at = [&](double theta) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double xi = d_weights[i] * v[i] * theta / (d_weights[i] * theta + tau);
            s += xi * xi;
        }
        return std::sqrt(s);
    };
    auto x_norm_deriv_at = [&](double theta, double xn) {
        // d||x||/dtheta = (sum_i x_i x_i') / ||x||,  x_i' = d_i v_i tau / (d_i theta + tau)^2
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double denom = d_weights[i] * theta + tau;
            const double xi = d_weights[i] * v[i] * theta / denom;
            const double xip = d_weights[i] * v[i] * tau / (denom * denom);
            s += xi * xip;
        }
        return xn > 0.0 ? s / xn : 0.0;
    };

    double d_min = d_weights[0];
    for (double d : d_weights) d_min = std::min(d_min, d);
    double theta = std::max(0.0, v_norm - tau / d_min);
    double lo = 0.0, hi = v_norm;  // g(lo+) < 0 <= g(hi)
    if (theta <= lo || theta > hi) theta = 0.5 * (lo + hi);

    double g = 0.0;
    bool converged = false;
    for (std::size_t it = 0; it < newton_max_iter; ++it) {
        const double xn = x_norm_at(theta);
        g = theta - xn;
        if (std::abs(g) < newton_tol) {
            converged = true;
            break;
        }
        if (g < 0.0) lo = theta; else hi = theta;
        const double gp = 1.0 - x_norm_deriv_at(theta, xn);
        double next = gp != 0.0 ? theta - g / gp : -1.0;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);  // bisection fallback
        theta = next;
    }
    if (!converged) {
        throw numerical_error("prox_row_weighted: Newton-Raphson did not converge, residual " +
                              std::to_string(std::abs(g)), std::abs(g));
    }
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = d_weights[i] * v[i] * theta / (d_weights[i] * theta + tau);
    }
    return out;
}

// Row-wise structured prox on W0, run once per optimizer update right after
// adam_step. Closed form shrinks by r*lambda_s in the Euclidean metric; the
// weighted variant solves the same problem in Adam's diagonal metric
// diag(sqrt(v_hat)+eps)/r, which is equivalent to weights sqrt(v_hat)+eps
// with threshold r*lambda_s.
inline void apply_structured_prox(RotationGAE& model, const AdamState& state, const ProxConfig& config) {
    if (config.lambda_s == 0.0) return;
    const auto& c = model.config;
    const double tau = state.learning_rate * config.lambda_s;
    const double bc2 = state.bias_correction2();
    Vector row(c.h1), weights(c.h1);
    for (std::size_t i = 0; i < c.d; ++i) {
        for (std::size_t j = 0; j < c.h1; ++j) row[j] = model.w0(i, j);
        Vector shrunk;
        if (config.mode == ProxMode::kClosedForm) {
            shrunk = prox_row(row, tau);
        } else {
            for (std::size_t j = 0; j < c.h1; ++j) {
                const double v_hat = state.w0.v[i * c.h1 + j] / (bc2 > 0.0 ? bc2 : 1.0);
                weights[j] = std::sqrt(v_hat) + state.epsilon;
            }
            shrunk = prox_row_weighted(row, weights, tau, config.newton_tol, config.newton_max_iter);
        }
        for (std::size_t j = 0; j < c.h1; ++j) model.w0(i, j) = shrunk[j];
    }
}

// Indices of rows that survived the sparsity penalty, ascending.
inline std::vector<std::size_t> active_rows(const Matrix& w0, double tol = 1e-12) {
    std::vector<std::size_t> idx;
    const Vector norms = row_norms(w0);
    for (std::size_t i = 0; i < norms.size(); ++i) {
        if (norms[i] > tol) idx.push_back(i);
    }
    return idx;
}

} // namespace biaxis
