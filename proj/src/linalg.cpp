#include "vqs/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>

#include "vqs/errors.hpp"

namespace vqs {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string());
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("ragged initializer for Matrix");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::transposed() const {
    constexpr std::size_t kBlock = 32;
    Matrix t(cols_, rows_);
    for (std::size_t r0 = 0; r0 < rows_; r0 += kBlock) {
        const std::size_t r1 = std::min(rows_, r0 + kBlock);
        for (std::size_t c0 = 0; c0 < cols_; c0 += kBlock) {
            const std::size_t c1 = std::min(cols_, c0 + kBlock);
            for (std::size_t r = r0; r < r1; ++r)
                for (std::size_t c = c0; c < c1; ++c) t(c, r) = (*this)(r, c);
        }
    }
    return t;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Matrix::shape_string() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

namespace {

constexpr std::size_t kTileRows = 8;
constexpr std::size_t kTileCols = 16;

using Lane = double __attribute__((vector_size(64)));  // 8 doubles

inline Lane load_lane(const double* p) {
    Lane v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline void store_lane(double* p, Lane v) { std::memcpy(p, &v, sizeof v); }

// One kTileRows × kTileCols tile of c accumulated in registers over the
// whole contraction, k ascending. `panel` holds rhs[:, j0:j0+kTileCols]
// packed row after row; `lhs_at(i, k)` abstracts over a and aᵀ.
template <typename LhsAt>
void tile_product(Matrix& c, const double* panel, LhsAt lhs_at, std::size_t i0, std::size_t j0, std::size_t n) {
    Lane acc[kTileRows][2] = {};
    const double* b = panel;
    for (std::size_t k = 0; k < n; ++k, b += kTileCols) {
        const Lane b0 = load_lane(b);
        const Lane b1 = load_lane(b + 8);
        for (std::size_t r = 0; r < kTileRows; ++r) {
            const double a = lhs_at(i0 + r, k);
            acc[r][0] += a * b0;
            acc[r][1] += a * b1;
        }
    }
    for (std::size_t r = 0; r < kTileRows; ++r) {
        store_lane(c.row(i0 + r).data() + j0, acc[r][0]);
        store_lane(c.row(i0 + r).data() + j0 + 8, acc[r][1]);
    }
}

// Ragged edge: rows [i0, i1) × columns [j0, j1), same accumulation order.
template <typename LhsAt>
void edge_product(Matrix& c, const Matrix& rhs, LhsAt lhs_at, std::size_t i0, std::size_t i1, std::size_t j0,
                  std::size_t j1, std::size_t n) {
    for (std::size_t i = i0; i < i1; ++i) {
        double* __restrict out = c.row(i).data();
        for (std::size_t k = 0; k < n; ++k) {
            const double a = lhs_at(i, k);
            const double* __restrict b = rhs.row(k).data();
            for (std::size_t j = j0; j < j1; ++j) out[j] += a * b[j];
        }
    }
}

template <typename LhsAt>
Matrix blocked_product(std::size_t m, std::size_t n, const Matrix& rhs, LhsAt lhs_at) {
    const std::size_t p = rhs.cols();
    Matrix c(m, p);
    const std::size_t m_full = m - m % kTileRows;
    const std::size_t p_full = p - p % kTileCols;
    std::vector<double> panel(n * kTileCols);
    for (std::size_t j0 = 0; j0 < p_full && m_full > 0; j0 += kTileCols) {
        for (std::size_t k = 0; k < n; ++k) {
            const double* src = rhs.row(k).data() + j0;
            std::copy(src, src + kTileCols, panel.data() + k * kTileCols);
        }
        for (std::size_t i0 = 0; i0 < m_full; i0 += kTileRows) tile_product(c, panel.data(), lhs_at, i0, j0, n);
    }
    if (p_full < p) edge_product(c, rhs, lhs_at, 0, m_full, p_full, p, n);
    if (m_full < m) edge_product(c, rhs, lhs_at, m_full, m, 0, p, n);
    return c;
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul shape mismatch: " + a.shape_string() + " times " + b.shape_string());
    }
    return blocked_product(a.rows(), a.cols(), b, [&a](std::size_t i, std::size_t k) { return a(i, k); });
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn shape mismatch: transpose of " + a.shape_string() + " times " +
                         b.shape_string());
    }
    return blocked_product(a.cols(), a.rows(), b, [&a](std::size_t i, std::size_t k) { return a(k, i); });
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt shape mismatch: " + a.shape_string() + " times transpose of " +
                         b.shape_string());
    }
    // Transpose whichever side is smaller; both orders sum over k ascending.
    if (a.rows() < b.rows()) return matmul(b, a.transposed()).transposed();
    return matmul(a, b.transposed());
}

ColumnStats column_stats(const Matrix& m) {
    ColumnStats out;
    out.means.assign(m.cols(), 0.0);
    out.stds.assign(m.cols(), 0.0);
    if (m.rows() == 0) return out;
    const double n = static_cast<double>(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out.means[c] += m(r, c);
    for (auto& mu : out.means) mu /= n;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            const double d = m(r, c) - out.means[c];
            out.stds[c] += d * d;
        }
    }
    for (auto& s : out.stds) s = std::sqrt(s / n);
    return out;
}

void canonicalize_sign(std::span<double> v) {
    std::size_t best = 0;
    double best_mag = -1.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (std::abs(v[i]) > best_mag) {
            best_mag = std::abs(v[i]);
            best = i;
        }
    }
    if (!v.empty() && v[best] < 0.0)
        for (auto& x : v) x = -x;
}

bool all_finite(std::span<const double> v) noexcept {
    // Exponent bits all set means inf or NaN.
    constexpr std::uint64_t kExp = 0x7ff0000000000000ULL;
    std::uint64_t bad = 0;
    for (double x : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, sizeof bits);
        bad |= static_cast<std::uint64_t>((bits & kExp) == kExp);
    }
    return bad == 0;
}

EigenDecomposition sym_eigen(const Matrix& s, std::size_t top_k) {
    const std::size_t n = s.rows();
    if (s.cols() != n) throw ValidationError("sym_eigen requires a square matrix, got " + s.shape_string());
    if (top_k > n) {
        throw ValidationError("sym_eigen top_k " + std::to_string(top_k) + " exceeds dimension " +
                              std::to_string(n));
    }
    double scale = 1.0;
    for (double x : s.values()) scale = std::max(scale, std::abs(x));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(s(i, j) - s(j, i)) > 1e-9 * scale) {
                throw ValidationError("sym_eigen input is not symmetric at (" + std::to_string(i) + ", " +
                                      std::to_string(j) + ")");
            }
        }
    }

    // Work on the symmetrized copy; eigenvectors accumulate as rows of vt.
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (s(i, j) + s(j, i));
    Matrix vt(n, n);
    for (std::size_t i = 0; i < n; ++i) vt(i, i) = 1.0;

    double frob2 = 0.0;
    for (double x : a.values()) frob2 += x * x;
    const double eps = std::numeric_limits<double>::epsilon();

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        if (off == 0.0 || std::sqrt(off) <= 1e-3 * eps * std::sqrt(frob2)) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double app = a(p, p);
                const double aqq = a(q, q);
                const double g = 100.0 * std::abs(apq);
                if (std::abs(app) + g == std::abs(app) && std::abs(aqq) + g == std::abs(aqq)) {
                    a(p, q) = a(q, p) = 0.0;
                    continue;
                }
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;

                double* rp = a.row(p).data();
                double* rq = a.row(q).data();
                for (std::size_t k = 0; k < n; ++k) {
                    if (k == p || k == q) continue;
                    const double akp = rp[k];
                    const double akq = rq[k];
                    rp[k] = c * akp - sn * akq;
                    rq[k] = sn * akp + c * akq;
                    a(k, p) = rp[k];
                    a(k, q) = rq[k];
                }
                rp[p] = app - t * apq;
                rq[q] = aqq + t * apq;
                rp[q] = 0.0;
                rq[p] = 0.0;

                double* vp = vt.row(p).data();
                double* vq = vt.row(q).data();
                for (std::size_t k = 0; k < n; ++k) {
                    const double x = vp[k];
                    const double y = vq[k];
                    vp[k] = c * x - sn * y;
                    vq[k] = sn * x + c * y;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&a](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

    EigenDecomposition out;
    out.values.resize(top_k);
    out.vectors = Matrix(n, top_k);
    std::vector<double> v(n);
    for (std::size_t j = 0; j < top_k; ++j) {
        const std::size_t src = order[j];
        out.values[j] = a(src, src);
        std::copy_n(vt.row(src).data(), n, v.begin());
        canonicalize_sign(v);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v[i];
    }
    return out;
}

}  // namespace vqs
