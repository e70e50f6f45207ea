#include <cmath>
#include <limits>
#include <map>

#include "vqs/analysis.hpp"
#include "vqs/errors.hpp"
#include "vqs/rng.hpp"

namespace vqs {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

std::size_t group_count(const std::vector<std::size_t>& g) {
    std::size_t k = 0;
    for (auto v : g) k = std::max(k, v + 1);
    return k;
}

double choose2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

Silhouette silhouette(const Matrix& coords, const std::vector<std::size_t>& groups) {
    const std::size_t n = coords.rows();
    if (groups.size() != n) {
        throw ShapeError("silhouette: " + std::to_string(n) + " points but " + std::to_string(groups.size()) +
                         " labels");
    }
    const std::size_t k = group_count(groups);
    std::vector<std::size_t> sizes(k, 0);
    for (auto g : groups) ++sizes[g];
    std::size_t present = 0;
    for (auto s : sizes) present += s > 0 ? 1 : 0;
    if (present < 2) throw ValidationError("silhouette needs at least 2 distinct labels, got " + std::to_string(present));

    Silhouette out;
    out.per_sample.assign(n, 0.0);
    std::vector<double> sums(k);
    for (std::size_t i = 0; i < n; ++i) {
        if (sizes[groups[i]] < 2) continue;
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) sums[groups[j]] += std::sqrt(sq_dist(coords.row(i), coords.row(j)));
        }
        const double a = sums[groups[i]] / static_cast<double>(sizes[groups[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < k; ++g) {
            if (g != groups[i] && sizes[g] > 0) b = std::min(b, sums[g] / static_cast<double>(sizes[g]));
        }
        const double denom = std::max(a, b);
        out.per_sample[i] = denom > 0.0 ? (b - a) / denom : 0.0;
    }
    double total = 0.0;
    for (double s : out.per_sample) total += s;
    out.overall = total / static_cast<double>(n);
    return out;
}

Agreement cluster_agreement(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    if (a.empty() || b.empty()) throw ValidationError("cluster_agreement: empty partition");
    if (a.size() != b.size()) {
        throw ShapeError("cluster_agreement: partitions of " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " samples");
    }
    const double n = static_cast<double>(a.size());
    std::map<std::pair<std::size_t, std::size_t>, double> table;
    std::map<std::size_t, double> rows, cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        table[{a[i], b[i]}] += 1.0;
        rows[a[i]] += 1.0;
        cols[b[i]] += 1.0;
    }

    double h_a = 0.0, h_b = 0.0, mi = 0.0;
    for (const auto& [_, c] : rows) h_a -= c / n * std::log(c / n);
    for (const auto& [_, c] : cols) h_b -= c / n * std::log(c / n);
    for (const auto& [key, c] : table) mi += c / n * std::log(c * n / (rows[key.first] * cols[key.second]));

    Agreement out;
    const double mean_h = 0.5 * (h_a + h_b);
    if (mean_h > 0.0) {
        out.nmi = std::clamp(mi / mean_h, 0.0, 1.0);
    } else {
        out.nmi = 1.0;  // both partitions are a single group
    }

    double index = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [_, c] : table) index += choose2(c);
    for (const auto& [_, c] : rows) sum_a += choose2(c);
    for (const auto& [_, c] : cols) sum_b += choose2(c);
    const double pairs = choose2(n);
    const double expected = pairs > 0.0 ? sum_a * sum_b / pairs : 0.0;
    const double max_index = 0.5 * (sum_a + sum_b);
    out.ari = max_index == expected ? 1.0 : (index - expected) / (max_index - expected);
    return out;
}

namespace {

struct LloydRun {
    std::vector<std::size_t> assignment;
    Matrix centroids;
    double inertia = 0.0;
    std::vector<double> trace;
};

Matrix plus_plus_seeds(const Matrix& x, std::size_t k, SplitMix64& rng) {
    const std::size_t n = x.rows();
    Matrix c(k, x.cols());
    auto place = [&](std::size_t j, std::size_t i) { std::copy(x.row(i).begin(), x.row(i).end(), c.row(j).begin()); };
    place(0, static_cast<std::size_t>(rng.below(n)));
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(x.row(i), c.row(0));
    for (std::size_t j = 1; j < k; ++j) {
        double total = 0.0;
        for (double d : d2) total += d;
        std::size_t pick = n - 1;
        if (total > 0.0) {
            const double u = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > u && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<std::size_t>(rng.below(n));
        }
        place(j, pick);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(x.row(i), c.row(j)));
    }
    return c;
}

LloydRun lloyd(const Matrix& x, Matrix centroids, std::size_t max_iterations) {
    const std::size_t n = x.rows();
    const std::size_t k = centroids.rows();
    const std::size_t d = x.cols();
    LloydRun run;
    run.assignment.assign(n, k);
    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = sq_dist(x.row(i), centroids.row(0));
            for (std::size_t j = 1; j < k; ++j) {
                const double dj = sq_dist(x.row(i), centroids.row(j));
                if (dj < best_d) {
                    best_d = dj;
                    best = j;
                }
            }
            if (run.assignment[i] != best) changed = true;
            run.assignment[i] = best;
            inertia += best_d;
        }
        run.inertia = inertia;
        run.trace.push_back(inertia);
        if (!changed) break;

        Matrix sums(k, d);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto s = sums.row(run.assignment[i]);
            auto r = x.row(i);
            for (std::size_t c = 0; c < d; ++c) s[c] += r[c];
            ++counts[run.assignment[i]];
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] == 0) continue;  // empty cluster keeps its centroid
            auto s = sums.row(j);
            auto c = centroids.row(j);
            for (std::size_t t = 0; t < d; ++t) c[t] = s[t] / static_cast<double>(counts[j]);
        }
    }
    run.centroids = std::move(centroids);
    return run;
}

}  // namespace

KmeansResult kmeans(const Matrix& coords, std::size_t k, std::uint64_t seed, const KmeansOptions& opts) {
    if (k < 1) throw ValidationError("kmeans: k must be >= 1");
    if (k > coords.rows()) {
        throw ValidationError("kmeans: k = " + std::to_string(k) + " exceeds " + std::to_string(coords.rows()) +
                              " samples");
    }
    if (opts.restarts < 1 || opts.max_iterations < 1) throw ValidationError("kmeans: restarts and iterations must be >= 1");
    SplitMix64 rng(derive_seed(seed, 3));
    LloydRun best;
    bool have = false;
    for (std::size_t r = 0; r < opts.restarts; ++r) {
        auto run = lloyd(coords, plus_plus_seeds(coords, k, rng), opts.max_iterations);
        if (!have || run.inertia < best.inertia) {
            best = std::move(run);
            have = true;
        }
    }
    return {std::move(best.assignment), std::move(best.centroids), best.inertia, std::move(best.trace)};
}

}  // namespace vqs
