#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "biaxis/errors.hpp"
#include "biaxis/matrix.hpp"
#include "biaxis/rng.hpp"

namespace biaxis {

// ---------------------------------------------------------------------------
// Special functions: regularized incomplete gamma and beta by series /
// continued-fraction expansions (Lentz), converged to ~1e-14.
// ---------------------------------------------------------------------------

namespace special {

inline constexpr double kEps = 1e-14;
inline constexpr double kFpMin = 1e-300;
inline constexpr int kMaxIter = 500;

// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
    if (a <= 0.0) throw input_error("gamma_p: a must be > 0");
    if (x < 0.0) throw input_error("gamma_p: x must be >= 0");
    if (x == 0.0) return 0.0;
    const double log_prefactor = -x + a * std::log(x) - std::lgamma(a);
    if (x < a + 1.0) {
        // series expansion
        double ap = a;
        double sum = 1.0 / a;
        double del = sum;
        for (int i = 0; i < kMaxIter; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * kEps) {
                return sum * std::exp(log_prefactor);
            }
        }
        throw numerical_error("gamma_p: series did not converge");
    }
    // continued fraction for Q(a, x)
    double b = x + 1.0 - a;
    double c = 1.0 / kFpMin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIter; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = b + an / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) {
            return 1.0 - std::exp(log_prefactor) * h;
        }
    }
    throw numerical_error("gamma_p: continued fraction did not converge");
}

inline double gamma_q(double a, double x) { return 1.0 - gamma_p(a, x); }

namespace detail {

inline double beta_cf(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw numerical_error("beta_inc: continued fraction did not converge");
}

} // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double beta_inc(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0) throw input_error("beta_inc: a, b must be > 0");
    if (x < 0.0 || x > 1.0) throw input_error("beta_inc: x must be in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                               a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return bt * detail::beta_cf(a, b, x) / a;
    }
    return 1.0 - bt * detail::beta_cf(b, a, 1.0 - x) / b;
}

// Survival functions used across the probes.
inline double chi2_sf(double x, double k) { return x <= 0.0 ? 1.0 : gamma_q(0.5 * k, 0.5 * x); }

inline double student_t_two_tailed(double t, double df) {
    if (!std::isfinite(t)) return 0.0;
    if (t == 0.0) return 1.0;
    return beta_inc(0.5 * df, 0.5, df / (df + t * t));
}

inline double f_sf(double f, double d1, double d2) {
    if (!std::isfinite(f)) return 0.0;
    if (f <= 0.0) return 1.0;
    return beta_inc(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f));
}

} // namespace special

// ---------------------------------------------------------------------------
// Hypothesis tests.
// ---------------------------------------------------------------------------

struct McNemarResult {
    double chi2 = 0.0;
    double p = 1.0;
};

// Continuity-corrected McNemar over discordant counts b and c. The exact
// binomial variant is exposed separately for small counts.
inline McNemarResult mcnemar(std::uint64_t b, std::uint64_t c) {
    if (b + c == 0) throw input_error("mcnemar: no discordant pairs");
    const double diff = std::abs(static_cast<double>(b) - static_cast<double>(c));
    McNemarResult res;
    // correction clamps at zero when |b - c| <= 1
    const double corrected = std::max(0.0, diff - 1.0);
    res.chi2 = corrected * corrected / static_cast<double>(b + c);
    res.p = special::chi2_sf(res.chi2, 1.0);
    return res;
}

inline McNemarResult mcnemar_exact(std::uint64_t b, std::uint64_t c) {
    if (b + c == 0) throw input_error("mcnemar: no discordant pairs");
    const std::uint64_t n = b + c;
    const std::uint64_t k = std::min(b, c);
    // two-tailed binomial(n, 1/2) tail, doubled and clamped
    double tail = 0.0;
    for (std::uint64_t i = 0; i <= k; ++i) {
        tail += std::exp(std::lgamma(static_cast<double>(n) + 1.0) -
                         std::lgamma(static_cast<double>(i) + 1.0) -
                         std::lgamma(static_cast<double>(n - i) + 1.0) -
                         static_cast<double>(n) * std::log(2.0));
    }
    McNemarResult res;
    res.chi2 = std::numeric_limits<double>::quiet_NaN();  // not defined for the exact test
    res.p = std::min(1.0, 2.0 * tail);
    return res;
}

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
    bool degenerate = false;  // both variances zero
};

inline WelchResult welch_t(const Vector& a, const Vector& b) {
    if (a.size() < 2 || b.size() < 2) throw input_error("welch_t: need >= 2 samples per side");
    auto mean_var = [](const Vector& v) {
        const double n = static_cast<double>(v.size());
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return std::make_pair(mean, ss / (n - 1.0));
    };
    const auto [ma, va] = mean_var(a);
    const auto [mb, vb] = mean_var(b);
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());

    WelchResult res;
    if (va == 0.0 && vb == 0.0) {
        res.degenerate = true;
        res.df = na + nb - 2.0;
        if (ma == mb) {
            res.t = 0.0;
            res.p = 1.0;
        } else {
            res.t = ma > mb ? std::numeric_limits<double>::infinity()
                            : -std::numeric_limits<double>::infinity();
            res.p = 0.0;
        }
        return res;
    }
    const double sa = va / na;
    const double sb = vb / nb;
    res.t = (ma - mb) / std::sqrt(sa + sb);
    res.df = (sa + sb) * (sa + sb) /
             (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    res.p = special::student_t_two_tailed(res.t, res.df);
    return res;
}

struct OlsResult {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double f_stat = 0.0;
    double p = 1.0;
};

// Simple least squares y ~ x with R^2, F(1, n-2) and its p-value.
inline OlsResult ols_r2(const Vector& x, const Vector& y) {
    if (x.size() != y.size()) throw dimension_error("ols_r2: length mismatch");
    const std::size_t n = x.size();
    if (n < 3) throw input_error("ols_r2: need at least 3 points");
    const double nd = static_cast<double>(n);
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / nd;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / nd;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw input_error("ols_r2: zero variance in x");

    OlsResult res;
    res.slope = sxy / sxx;
    res.intercept = my - res.slope * mx;
    if (syy == 0.0) {
        // constant response: nothing to explain
        res.r2 = 0.0;
        res.f_stat = 0.0;
        res.p = 1.0;
        return res;
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - (res.intercept + res.slope * x[i]);
        sse += r * r;
    }
    res.r2 = 1.0 - sse / syy;
    if (res.r2 < 0.0) res.r2 = 0.0;
    if (res.r2 >= 1.0 || sse == 0.0) {
        res.r2 = 1.0;
        res.f_stat = std::numeric_limits<double>::infinity();
        res.p = 0.0;
        return res;
    }
    res.f_stat = res.r2 * (nd - 2.0) / (1.0 - res.r2);
    res.p = special::f_sf(res.f_stat, 1.0, nd - 2.0);
    return res;
}

// ---------------------------------------------------------------------------
// Binary logistic regression, full-batch gradient descent with backtracking
// line search on the l2-regularized negative log-likelihood.
// ---------------------------------------------------------------------------

struct LabeledSet {
    Matrix features;          // n x k
    std::vector<int> labels;  // 0/1
    std::vector<std::size_t> train;
    std::vector<std::size_t> dev;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;
};

// 60/20/20 split by row, floor rule with remainder to train.
inline LabeledSet make_labeled_set(Matrix features, std::vector<int> labels, std::uint64_t seed) {
    if (features.rows() != labels.size()) throw dimension_error("make_labeled_set: rows != labels");
    if (features.rows() < 2) throw input_error("make_labeled_set: need >= 2 rows");
    for (int y : labels) {
        if (y != 0 && y != 1) throw input_error("make_labeled_set: labels must be 0/1");
    }
    LabeledSet set;
    set.features = std::move(features);
    set.labels = std::move(labels);
    set.seed = seed;
    const std::size_t n = set.labels.size();
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(seed);
    rng.shuffle(ids);
    const auto n_dev = static_cast<std::size_t>(0.2 * static_cast<double>(n));
    const auto n_test = static_cast<std::size_t>(0.2 * static_cast<double>(n));
    set.dev.assign(ids.begin(), ids.begin() + n_dev);
    set.test.assign(ids.begin() + n_dev, ids.begin() + n_dev + n_test);
    set.train.assign(ids.begin() + n_dev + n_test, ids.end());
    std::sort(set.dev.begin(), set.dev.end());
    std::sort(set.test.begin(), set.test.end());
    std::sort(set.train.begin(), set.train.end());
    return set;
}

struct LogRegModel {
    Vector weights;
    double bias = 0.0;
    double l2 = 0.0;
    std::size_t iterations = 0;
    bool converged = false;

    double decision(const double* x, std::size_t k) const {
        double z = bias;
        for (std::size_t j = 0; j < k; ++j) z += weights[j] * x[j];
        return z;
    }
};

inline LogRegModel logreg_fit(const LabeledSet& set, double l2 = 1e-4, std::size_t max_iter = 5000,
                              double tol = 1e-8) {
    const std::vector<std::size_t>& rows = set.train;
    if (rows.size() < 2) throw input_error("logreg_fit: need >= 2 training rows");
    bool has0 = false, has1 = false;
    for (std::size_t i : rows) (set.labels[i] ? has1 : has0) = true;
    if (!has0 || !has1) throw input_error("logreg_fit: single-class training set");

    const std::size_t k = set.features.cols();
    const double n = static_cast<double>(rows.size());
    LogRegModel model;
    model.weights = Vector(k, 0.0);
    model.l2 = l2;

    auto objective = [&](const Vector& w, double b) {
        double obj = 0.0;
        for (std::size_t i : rows) {
            const double* x = set.features.row_ptr(i);
            double z = b;
            for (std::size_t j = 0; j < k; ++j) z += w[j] * x[j];
            const double y = static_cast<double>(set.labels[i]);
            obj += std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
        }
        obj /= n;
        double reg = 0.0;
        for (double wj : w) reg += wj * wj;
        return obj + 0.5 * l2 * reg;
    };

    Vector grad_w(k, 0.0);
    double grad_b = 0.0;
    double step = 1.0;
    double f_cur = objective(model.weights, model.bias);
    for (std::size_t it = 0; it < max_iter; ++it) {
        std::fill(grad_w.begin(), grad_w.end(), 0.0);
        grad_b = 0.0;
        for (std::size_t i : rows) {
            const double* x = set.features.row_ptr(i);
            double z = model.bias;
            for (std::size_t j = 0; j < k; ++j) z += model.weights[j] * x[j];
            const double sig = 1.0 / (1.0 + std::exp(-z));
            const double err = sig - static_cast<double>(set.labels[i]);
            for (std::size_t j = 0; j < k; ++j) grad_w[j] += err * x[j];
            grad_b += err;
        }
        for (std::size_t j = 0; j < k; ++j) grad_w[j] = grad_w[j] / n + l2 * model.weights[j];
        grad_b /= n;

        double grad_inf = std::abs(grad_b);
        double grad_sq = grad_b * grad_b;
        for (double g : grad_w) {
            grad_inf = std::max(grad_inf, std::abs(g));
            grad_sq += g * g;
        }
        model.iterations = it;
        if (grad_inf < tol) {
            model.converged = true;
            break;
        }

        // Armijo backtracking, re-using the last accepted step as a warm start.
        step = std::min(step * 2.0, 1e6);
        Vector w_try(k);
        bool accepted = false;
        for (int back = 0; back < 80; ++back) {
            for (std::size_t j = 0; j < k; ++j) w_try[j] = model.weights[j] - step * grad_w[j];
            const double b_try = model.bias - step * grad_b;
            const double f_try = objective(w_try, b_try);
            if (f_try <= f_cur - 1e-4 * step * grad_sq) {
                model.weights = w_try;
                model.bias = b_try;
                f_cur = f_try;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            break;  // step collapsed to rounding; current point is as good as it gets
        }
    }
    return model;
}

inline std::vector<int> logreg_predict(const LogRegModel& model, const Matrix& features,
                                       const std::vector<std::size_t>& rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (std::size_t i : rows) {
        // threshold tie goes to class 1
        out.push_back(model.decision(features.row_ptr(i), features.cols()) >= 0.0 ? 1 : 0);
    }
    return out;
}

inline double logreg_accuracy(const LogRegModel& model, const Matrix& features,
                              const std::vector<int>& labels, const std::vector<std::size_t>& rows) {
    if (rows.empty()) throw input_error("logreg_accuracy: empty evaluation set");
    const std::vector<int> pred = logreg_predict(model, features, rows);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (pred[i] == labels[rows[i]]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(rows.size());
}

} // namespace biaxis
