#include <cmath>

#include "vqs/analysis.hpp"
#include "vqs/errors.hpp"

namespace vqs {

namespace {

Matrix centered(const Matrix& m) {
    const auto stats = column_stats(m);
    Matrix out = m;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] -= stats.means[c];
    }
    return out;
}

double dot_col(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    double s = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) s += a(r, i) * b(r, j);
    return s;
}

// Orthonormalise column j of v against columns [0, j). Returns the norm left
// after projection.
double orthonormalize_column(Matrix& v, std::size_t j) {
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 0; i < j; ++i) {
            const double d = dot_col(v, i, v, j);
            for (std::size_t r = 0; r < v.rows(); ++r) v(r, j) -= d * v(r, i);
        }
    }
    const double norm = std::sqrt(dot_col(v, j, v, j));
    if (norm > 0.0)
        for (std::size_t r = 0; r < v.rows(); ++r) v(r, j) /= norm;
    return norm;
}

void set_sign(Matrix& v, std::size_t j) {
    std::vector<double> col(v.rows());
    for (std::size_t r = 0; r < v.rows(); ++r) col[r] = v(r, j);
    canonicalize_sign(col);
    for (std::size_t r = 0; r < v.rows(); ++r) v(r, j) = col[r];
}

Matrix gram_components(const Matrix& xc, const EigenDecomposition& eig, std::size_t k) {
    const std::size_t n = xc.rows();
    const std::size_t p = xc.cols();
    const double scale = static_cast<double>(n - 1);
    const double lambda_max = eig.values.empty() ? 0.0 : std::max(eig.values[0], 0.0);
    const double cutoff = lambda_max * 1e-12 * static_cast<double>(n);

    Matrix u(n, k);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < k; ++j) u(r, j) = eig.vectors(r, j);
    Matrix v = matmul_tn(xc, u);  // p × k

    for (std::size_t j = 0; j < k; ++j) {
        const double lambda = eig.values[j];
        bool ok = lambda > cutoff && lambda > 0.0;
        if (ok) {
            const double s = 1.0 / std::sqrt(scale * lambda);
            for (std::size_t r = 0; r < p; ++r) v(r, j) *= s;
            ok = orthonormalize_column(v, j) > 0.5;
        }
        // Zero-variance direction: complete the basis with the unit vector
        // least covered by the columns so far.
        if (!ok) {
            std::size_t best = 0;
            double best_left = -1.0;
            for (std::size_t r = 0; r < p; ++r) {
                double covered = 0.0;
                for (std::size_t i = 0; i < j; ++i) covered += v(r, i) * v(r, i);
                if (1.0 - covered > best_left) best_left = 1.0 - covered, best = r;
            }
            for (std::size_t r = 0; r < p; ++r) v(r, j) = r == best ? 1.0 : 0.0;
            if (orthonormalize_column(v, j) <= 0.0) throw NumericError("pca: cannot complete an orthonormal basis");
        }
        set_sign(v, j);
    }
    return v;
}

}  // namespace

Projection pca(const Matrix& m, std::size_t k, PcaMethod method) {
    const std::size_t n = m.rows();
    const std::size_t p = m.cols();
    if (n < 2) throw ValidationError("pca needs at least 2 samples, got " + std::to_string(n));
    if (k < 1 || k > std::min(n, p)) {
        throw ValidationError("pca: k = " + std::to_string(k) + " must lie in [1, " + std::to_string(std::min(n, p)) +
                              "] for a " + m.shape_string() + " matrix");
    }
    if (!all_finite(m.values())) throw ValidationError("pca: input contains non-finite values");
    if (method == PcaMethod::automatic) method = p > n ? PcaMethod::gram : PcaMethod::covariance;

    const Matrix xc = centered(m);
    const double scale = static_cast<double>(n - 1);
    double trace = 0.0;
    for (double v : xc.values()) trace += v * v;
    trace /= scale;

    Projection out;
    EigenDecomposition eig;
    if (method == PcaMethod::covariance) {
        Matrix cov = matmul_tn(xc, xc);
        for (double& v : cov.values()) v /= scale;
        eig = sym_eigen(cov, k);
        out.components = std::move(eig.vectors);
    } else {
        Matrix gram = matmul_nt(xc, xc);
        for (double& v : gram.values()) v /= scale;
        eig = sym_eigen(gram, k);
        out.components = gram_components(xc, eig, k);
    }
    out.coordinates = matmul(xc, out.components);
    out.explained_ratio.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        const double lambda = std::max(eig.values[j], 0.0);
        out.explained_ratio[j] = trace > 0.0 ? std::min(lambda / trace, 1.0) : 0.0;
    }
    return out;
}

}  // namespace vqs
