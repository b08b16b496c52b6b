#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "biaxis/errors.hpp"

namespace biaxis {

using Vector = std::vector<double>;

// Dense row-major double matrix. The minimal kernel every other module sits
// on; sizes here are a few hundred rows at most, so everything is plain
// loops, no BLAS.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    // Checked construction from explicit data: size and finiteness enforced.
    Matrix(std::size_t rows, std::size_t cols, Vector data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw dimension_error("Matrix: data length " + std::to_string(data_.size()) +
                                  " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
        for (double v : data_) {
            if (!std::isfinite(v)) throw input_error("Matrix: non-finite entry");
        }
    }

    Matrix(std::initializer_list<std::initializer_list<double>> rows)
        : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw dimension_error("Matrix: ragged initializer");
            for (double v : r) {
                if (!std::isfinite(v)) throw input_error("Matrix: non-finite entry");
                data_.push_back(v);
            }
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* row_ptr(std::size_t i) { return data_.data() + i * cols_; }
    const double* row_ptr(std::size_t i) const { return data_.data() + i * cols_; }

    Vector& data() { return data_; }
    const Vector& data() const { return data_; }

    Vector row(std::size_t i) const {
        return Vector(row_ptr(i), row_ptr(i) + cols_);
    }

    void set_row(std::size_t i, const Vector& r) {
        if (r.size() != cols_) throw dimension_error("set_row: length mismatch");
        for (std::size_t j = 0; j < cols_; ++j) (*this)(i, j) = r[j];
    }

    Vector col(std::size_t j) const {
        Vector c(rows_);
        for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
        return c;
    }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Matrix& operator+=(const Matrix& o) {
        require_same_shape(o, "+=");
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
        return *this;
    }

    Matrix& operator-=(const Matrix& o) {
        require_same_shape(o, "-=");
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
        return *this;
    }

    Matrix& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }

private:
    void require_same_shape(const Matrix& o, const char* op) const {
        if (rows_ != o.rows_ || cols_ != o.cols_) {
            throw dimension_error(std::string("Matrix ") + op + ": shape mismatch");
        }
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw dimension_error("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                              " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    Matrix c(a.rows(), b.cols());
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.row_ptr(i);
        double* ci = c.row_ptr(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            if (aip == 0.0) continue;
            const double* bp = b.row_ptr(p);
            for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
        }
    }
    return c;
}

// a * b^T without materializing the transpose.
inline Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw dimension_error("matmul_bt: inner dimension mismatch");
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row_ptr(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* bj = b.row_ptr(j);
            double s = 0.0;
            for (std::size_t p = 0; p < a.cols(); ++p) s += ai[p] * bj[p];
            c(i, j) = s;
        }
    }
    return c;
}

// a^T * b without materializing the transpose.
inline Matrix matmul_at(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw dimension_error("matmul_at: inner dimension mismatch");
    Matrix c(a.cols(), b.cols());
    for (std::size_t p = 0; p < a.rows(); ++p) {
        const double* ap = a.row_ptr(p);
        const double* bp = b.row_ptr(p);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double api = ap[i];
            if (api == 0.0) continue;
            double* ci = c.row_ptr(i);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += api * bp[j];
        }
    }
    return c;
}

inline double frobenius_sq(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return s;
}

inline double norm2(const Vector& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw dimension_error("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline Vector row_norms(const Matrix& m) {
    Vector out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* r = m.row_ptr(i);
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) s += r[j] * r[j];
        out[i] = std::sqrt(s);
    }
    return out;
}

// Matrix-vector product m*v.
inline Vector matvec(const Matrix& m, const Vector& v) {
    if (m.cols() != v.size()) throw dimension_error("matvec: length mismatch");
    Vector out(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* r = m.row_ptr(i);
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) s += r[j] * v[j];
        out[i] = s;
    }
    return out;
}

// m^T * v.
inline Vector matvec_t(const Matrix& m, const Vector& v) {
    if (m.rows() != v.size()) throw dimension_error("matvec_t: length mismatch");
    Vector out(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* r = m.row_ptr(i);
        for (std::size_t j = 0; j < m.cols(); ++j) out[j] += r[j] * v[i];
    }
    return out;
}

struct Pca2Result {
    Matrix coords;              // n x 2 scores of the centered points
    Vector explained_variance;  // top-2 eigenvalues of the sample covariance
};

namespace detail {

// Dominant eigenpair of a symmetric PSD matrix by power iteration. Starts
// from e0 and walks the basis vectors if the iteration stagnates in the
// kernel; returns eigenvalue 0 and a zero vector for the zero matrix.
inline std::pair<double, Vector> power_iteration(const Matrix& s, double tol, std::size_t max_iter) {
    const std::size_t n = s.rows();
    for (std::size_t start = 0; start <= n; ++start) {
        Vector v(n, 0.0);
        if (start < n) {
            v[start] = 1.0;
        } else {
            break;
        }
        double lambda = 0.0;
        bool stagnated = false;
        for (std::size_t it = 0; it < max_iter; ++it) {
            Vector w = matvec(s, v);
            const double wn = norm2(w);
            if (wn < 1e-300) {
                stagnated = true;  // started in the kernel; reseed from next basis vector
                break;
            }
            for (double& x : w) x /= wn;
            double diff = 0.0;
            for (std::size_t i = 0; i < n; ++i) diff += (w[i] - v[i]) * (w[i] - v[i]);
            v = std::move(w);
            lambda = wn;
            if (std::sqrt(diff) < tol) break;
        }
        if (!stagnated) {
            // Rayleigh quotient for the final eigenvalue estimate.
            Vector sv = matvec(s, v);
            lambda = dot(v, sv);
            // Deterministic sign: first entry with the largest magnitude is positive.
            std::size_t arg = 0;
            for (std::size_t i = 1; i < n; ++i)
                if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
            if (v[arg] < 0.0) {
                for (double& x : v) x = -x;
            }
            return {lambda, v};
        }
    }
    return {0.0, Vector(n, 0.0)};
}

} // namespace detail

// Top-2 principal components by power iteration with deflation.
// Deterministic; degenerate (zero-variance) directions give zero coordinates.
inline Pca2Result pca_top2(const Matrix& points, double tol = 1e-9, std::size_t max_iter = 10000) {
    const std::size_t n = points.rows();
    const std::size_t d = points.cols();
    if (n < 2) throw input_error("pca_top2: need at least 2 points");
    if (d < 1) throw input_error("pca_top2: need dimension >= 1");

    Matrix centered(n, d);
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += points(i, j);
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) centered(i, j) = points(i, j) - mean;
    }

    // Sample covariance (n-1 in the denominator).
    Matrix cov = matmul_at(centered, centered);
    cov *= 1.0 / static_cast<double>(n - 1);

    Pca2Result res;
    res.coords = Matrix(n, 2);
    res.explained_variance = Vector(2, 0.0);

    Matrix deflated = cov;
    std::vector<Vector> dirs;
    for (int comp = 0; comp < 2; ++comp) {
        auto [lambda, v] = detail::power_iteration(deflated, tol, max_iter);
        if (lambda < 0.0) lambda = 0.0;
        res.explained_variance[comp] = lambda;
        dirs.push_back(v);
        if (lambda > 0.0) {
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) deflated(i, j) -= lambda * v[i] * v[j];
        }
        if (static_cast<std::size_t>(comp) + 1 >= d) break;  // 1-D input: second component stays zero
    }

    for (std::size_t i = 0; i < n; ++i) {
        for (int comp = 0; comp < 2; ++comp) {
            if (res.explained_variance[comp] <= 0.0) {
                res.coords(i, comp) = 0.0;
                continue;
            }
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += centered(i, j) * dirs[comp][j];
            res.coords(i, comp) = s;
        }
    }
    return res;
}

// Householder QR; returns the orthogonal factor of a square matrix. Accurate
// to machine precision, which the planted-benchmark orthogonality contract
// (1e-10) relies on.
inline Matrix qr_orthonormal(const Matrix& a) {
    if (a.rows() != a.cols()) throw dimension_error("qr_orthonormal: square input required");
    const std::size_t n = a.rows();
    Matrix r = a;
    Matrix q = Matrix::identity(n);
    for (std::size_t k = 0; k + 1 <= n; ++k) {
        // Householder vector for column k.
        double norm = 0.0;
        for (std::size_t i = k; i < n; ++i) norm += r(i, k) * r(i, k);
        norm = std::sqrt(norm);
        if (norm < 1e-300) continue;
        const double alpha = r(k, k) >= 0.0 ? -norm : norm;
        Vector v(n, 0.0);
        v[k] = r(k, k) - alpha;
        for (std::size_t i = k + 1; i < n; ++i) v[i] = r(i, k);
        double vnorm_sq = 0.0;
        for (std::size_t i = k; i < n; ++i) vnorm_sq += v[i] * v[i];
        if (vnorm_sq < 1e-300) continue;
        // r <- (I - 2 v v^T / v^T v) r ; q <- q (I - 2 v v^T / v^T v)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k; i < n; ++i) s += v[i] * r(i, j);
            s = 2.0 * s / vnorm_sq;
            for (std::size_t i = k; i < n; ++i) r(i, j) -= s * v[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = k; j < n; ++j) s += q(i, j) * v[j];
            s = 2.0 * s / vnorm_sq;
            for (std::size_t j = k; j < n; ++j) q(i, j) -= s * v[j];
        }
    }
    // Fix the sign convention so the factorization is unique (R diag >= 0).
    for (std::size_t k = 0; k < n; ++k) {
        if (r(k, k) < 0.0) {
            for (std::size_t i = 0; i < n; ++i) q(i, k) = -q(i, k);
        }
    }
    return q;
}

} // namespace biaxis
