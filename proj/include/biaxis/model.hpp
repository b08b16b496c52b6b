#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "biaxis/errors.hpp"
#include "biaxis/matrix.hpp"
#include "biaxis/rng.hpp"

namespace biaxis {

struct ModelConfig {
    std::size_t d = 0;    // embedding dimension
    std::size_t h1 = 10;  // first hidden layer
    std::size_t h2 = 10;  // second hidden layer
    double lambda_o = 0.0;
    double lambda_s = 0.0;
    bool rotate = true;   // off = full-space baseline
    bool use_bias = true;

    void validate() const {
        if (d < 1 || h1 < 1 || h2 < 1) throw input_error("ModelConfig: dims must be >= 1");
        if (d < h1) throw input_error("ModelConfig: d must be >= h1");
        if (lambda_o < 0 || lambda_s < 0) throw input_error("ModelConfig: penalties must be >= 0");
    }
};

inline std::size_t parameter_count(const ModelConfig& c) {
    std::size_t n = c.d * c.h1 + c.h1 * c.h2;
    if (c.use_bias) n += c.h1 + c.h2;
    if (c.rotate) n += c.d * c.d;
    return n;
}

// Rotation + two GCN layers + dot-product decoder.
struct RotationGAE {
    ModelConfig config;
    Matrix r;   // d x d, identity when rotation is off
    Matrix w0;  // d x h1; group sparsity acts on its rows
    Vector b0;  // h1
    Matrix w1;  // h1 x h2
    Vector b1;  // h2

    static RotationGAE init(const ModelConfig& config, std::uint64_t seed) {
        config.validate();
        RotationGAE m;
        m.config = config;
        m.r = Matrix::identity(config.d);
        m.w0 = Matrix(config.d, config.h1);
        m.b0 = Vector(config.h1, 0.0);
        m.w1 = Matrix(config.h1, config.h2);
        m.b1 = Vector(config.h2, 0.0);

        Rng rng(seed);
        auto glorot = [&rng](Matrix& w, std::size_t fan_in, std::size_t fan_out) {
            const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            for (double& v : w.data()) v = rng.uniform(-a, a);
        };
        glorot(m.w0, config.d, config.h1);
        glorot(m.w1, config.h1, config.h2);
        if (config.use_bias) {
            const double a0 = 1.0 / std::sqrt(static_cast<double>(config.d));
            for (double& v : m.b0) v = rng.uniform(-a0, a0);
            const double a1 = 1.0 / std::sqrt(static_cast<double>(config.h1));
            for (double& v : m.b1) v = rng.uniform(-a1, a1);
        }
        return m;
    }
};

// Intermediate activations kept for the backward pass.
struct ForwardCache {
    Matrix x;       // input features, |V| x d
    Matrix x_r;     // rotated input
    Matrix m0;      // A_hat * x_r
    Matrix s1;      // pre-ReLU layer-1 output
    Matrix h1;      // ReLU(s1)
    Matrix m1;      // A_hat * h1
    Matrix z;       // final node embeddings
    Matrix logits;  // z z^T
};

struct LossBreakdown {
    double l_p = 0.0;
    double l_o = 0.0;
    double l_s = 0.0;
    double total = 0.0;
};

struct ModelGrads {
    Matrix r;
    Matrix w0;
    Vector b0;
    Matrix w1;
    Vector b1;

    static ModelGrads zeros(const ModelConfig& c) {
        ModelGrads g;
        g.r = Matrix(c.d, c.d);
        g.w0 = Matrix(c.d, c.h1);
        g.b0 = Vector(c.h1, 0.0);
        g.w1 = Matrix(c.h1, c.h2);
        g.b1 = Vector(c.h2, 0.0);
        return g;
    }

    void accumulate(const ModelGrads& o) {
        r += o.r;
        w0 += o.w0;
        w1 += o.w1;
        for (std::size_t i = 0; i < b0.size(); ++i) b0[i] += o.b0[i];
        for (std::size_t i = 0; i < b1.size(); ++i) b1[i] += o.b1[i];
    }

    void scale(double s) {
        r *= s;
        w0 *= s;
        w1 *= s;
        for (double& v : b0) v *= s;
        for (double& v : b1) v *= s;
    }
};

inline ForwardCache forward(const RotationGAE& model, const Matrix& a_norm, const Matrix& x) {
    const auto& c = model.config;
    if (x.cols() != c.d) throw dimension_error("forward: feature dim != config d");
    if (a_norm.rows() != x.rows() || a_norm.cols() != x.rows()) {
        throw dimension_error("forward: adjacency shape mismatch");
    }
    ForwardCache cache;
    cache.x = x;
    cache.x_r = c.rotate ? matmul(x, model.r) : x;
    cache.m0 = matmul(a_norm, cache.x_r);
    cache.s1 = matmul(cache.m0, model.w0);
    if (c.use_bias) {
        for (std::size_t i = 0; i < cache.s1.rows(); ++i)
            for (std::size_t j = 0; j < c.h1; ++j) cache.s1(i, j) += model.b0[j];
    }
    cache.h1 = cache.s1;
    for (double& v : cache.h1.data()) v = v > 0.0 ? v : 0.0;
    cache.m1 = matmul(a_norm, cache.h1);
    cache.z = matmul(cache.m1, model.w1);
    if (c.use_bias) {
        for (std::size_t i = 0; i < cache.z.rows(); ++i)
            for (std::size_t j = 0; j < c.h2; ++j) cache.z(i, j) += model.b1[j];
    }
    cache.logits = matmul_bt(cache.z, cache.z);
    return cache;
}

// Numerically stable BCE-with-logits, averaged over all off-diagonal ordered
// pairs, with `pos_weight` applied to the positive entries.
inline double weighted_bce_with_logits(const Matrix& logits, const Matrix& target, double pos_weight) {
    const std::size_t n = logits.rows();
    if (logits.cols() != n || target.rows() != n || target.cols() != n) {
        throw dimension_error("weighted_bce_with_logits: square matrices required");
    }
    if (n < 2) throw input_error("weighted_bce_with_logits: need >= 2 nodes");
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double z = logits(i, j);
            const double y = target(i, j);
            const double w = y > 0.0 ? pos_weight : 1.0;
            // max(z,0) - z*y + log(1 + exp(-|z|)); weight multiplies the
            // positive-class log-likelihood term only.
            const double softplus_neg_abs = std::log1p(std::exp(-std::abs(z)));
            const double log_sig = -(std::max(z, 0.0) - z + softplus_neg_abs);   // log sigmoid(z)
            const double log_one_minus = -(std::max(z, 0.0) + softplus_neg_abs); // log(1 - sigmoid(z))
            sum += y > 0.0 ? -w * log_sig : -log_one_minus;
        }
    }
    return sum / static_cast<double>(n * n - n);
}

// Class weight used for the reconstruction loss: (#negative ordered pairs) /
// (#positive ordered pairs) on the off-diagonal.
inline double positive_class_weight(const Matrix& target) {
    const std::size_t n = target.rows();
    double pos = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && target(i, j) > 0.0) pos += 1.0;
    if (pos == 0.0) return 1.0;
    const double m = static_cast<double>(n * n - n);
    return (m - pos) / pos;
}

inline LossBreakdown loss(const Matrix& logits, const Matrix& target, const RotationGAE& model) {
    const auto& c = model.config;
    LossBreakdown lb;
    lb.l_p = weighted_bce_with_logits(logits, target, positive_class_weight(target));
    if (c.rotate) {
        Matrix rrt = matmul_bt(model.r, model.r);
        for (std::size_t i = 0; i < c.d; ++i) rrt(i, i) -= 1.0;
        lb.l_o = frobenius_sq(rrt);
    }
    const Vector norms = row_norms(model.w0);
    for (double v : norms) lb.l_s += v;
    lb.total = lb.l_p + c.lambda_o * lb.l_o + c.lambda_s * lb.l_s;
    return lb;
}

// Analytic gradients of L_p + lambda_o * L_o. The sparsity term is handled by
// the proximal step, never by gradients.
inline ModelGrads backward(const ForwardCache& cache, const Matrix& target, const RotationGAE& model,
                           const Matrix& a_norm) {
    const auto& c = model.config;
    const std::size_t n = cache.logits.rows();
    const double pos_weight = positive_class_weight(target);
    const double inv_m = 1.0 / static_cast<double>(n * n - n);

    Matrix g(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double z = cache.logits(i, j);
            const double sig = 1.0 / (1.0 + std::exp(-z));
            const double y = target(i, j);
            g(i, j) = inv_m * (y > 0.0 ? pos_weight * (sig - 1.0) : sig);
        }
    }

    Matrix g_sym = g + g.transposed();
    Matrix dz = matmul(g_sym, cache.z);

    ModelGrads grads = ModelGrads::zeros(c);
    if (c.use_bias) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c.h2; ++j) grads.b1[j] += dz(i, j);
    }
    grads.w1 = matmul_at(cache.m1, dz);

    Matrix dm1 = matmul_bt(dz, model.w1);
    Matrix dh1 = matmul(a_norm, dm1);  // a_norm symmetric
    // ReLU mask
    for (std::size_t idx = 0; idx < dh1.size(); ++idx) {
        if (cache.s1.data()[idx] <= 0.0) dh1.data()[idx] = 0.0;
    }
    if (c.use_bias) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c.h1; ++j) grads.b0[j] += dh1(i, j);
    }
    grads.w0 = matmul_at(cache.m0, dh1);

    if (c.rotate) {
        Matrix dm0 = matmul_bt(dh1, model.w0);
        Matrix dx_r = matmul(a_norm, dm0);
        grads.r = matmul_at(cache.x, dx_r);
        if (c.lambda_o != 0.0) {
            // dL_o/dR = 4 (R R^T - I) R
            Matrix rrt = matmul_bt(model.r, model.r);
            for (std::size_t i = 0; i < c.d; ++i) rrt(i, i) -= 1.0;
            Matrix d_orth = matmul(rrt, model.r);
            d_orth *= 4.0 * c.lambda_o;
            grads.r += d_orth;
        }
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Checkpoint file: magic `BIAXIS1`, then d/h1/h2/flags as 32-bit little-endian
// integers, then R, W0, b0, W1, b1 as little-endian doubles, row-major.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32_le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f64_le(std::ostream& out, double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline double read_f64_le(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

} // namespace detail

inline constexpr char kCheckpointMagic[] = "BIAXIS1";

inline void save_checkpoint(const RotationGAE& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, 7);
    const auto& c = model.config;
    detail::write_u32_le(out, static_cast<std::uint32_t>(c.d));
    detail::write_u32_le(out, static_cast<std::uint32_t>(c.h1));
    detail::write_u32_le(out, static_cast<std::uint32_t>(c.h2));
    std::uint32_t flags = 0;
    if (c.rotate) flags |= 1u;
    if (c.use_bias) flags |= 2u;
    detail::write_u32_le(out, flags);
    for (double v : model.r.data()) detail::write_f64_le(out, v);
    for (double v : model.w0.data()) detail::write_f64_le(out, v);
    for (double v : model.b0) detail::write_f64_le(out, v);
    for (double v : model.w1.data()) detail::write_f64_le(out, v);
    for (double v : model.b1) detail::write_f64_le(out, v);
    if (!out) throw input_error("failed writing checkpoint: " + path);
}

inline RotationGAE load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open checkpoint: " + path);
    char magic[7];
    in.read(magic, 7);
    if (!in || std::string(magic, 7) != kCheckpointMagic) {
        throw input_error("bad checkpoint magic in " + path);
    }
    RotationGAE m;
    m.config.d = detail::read_u32_le(in);
    m.config.h1 = detail::read_u32_le(in);
    m.config.h2 = detail::read_u32_le(in);
    const std::uint32_t flags = detail::read_u32_le(in);
    m.config.rotate = (flags & 1u) != 0;
    m.config.use_bias = (flags & 2u) != 0;
    m.config.validate();
    const auto& c = m.config;
    auto read_matrix = [&in, &path](std::size_t rows, std::size_t cols) {
        Matrix m2(rows, cols);
        for (double& v : m2.data()) {
            v = detail::read_f64_le(in);
            if (!in) throw input_error("truncated checkpoint: " + path);
        }
        return m2;
    };
    m.r = read_matrix(c.d, c.d);
    m.w0 = read_matrix(c.d, c.h1);
    m.b0 = Vector(c.h1);
    for (double& v : m.b0) v = detail::read_f64_le(in);
    m.w1 = read_matrix(c.h1, c.h2);
    m.b1 = Vector(c.h2);
    for (double& v : m.b1) v = detail::read_f64_le(in);
    if (!in) throw input_error("truncated checkpoint: " + path);
    return m;
}

} // namespace biaxis
