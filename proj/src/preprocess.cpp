#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "vqs/errors.hpp"
#include "vqs/ingestion.hpp"

namespace vqs {

namespace {

void require_complete(const ExpressionMatrix& m, const char* stage) {
    if (m.has_missing()) {
        for (std::size_t f = 0; f < m.n_features(); ++f)
            for (std::size_t s = 0; s < m.n_samples(); ++s)
                if (m.is_missing(f, s)) {
                    throw ValidationError(std::string(stage) + ": missing value at feature '" + m.feature_ids[f] +
                                          "', sample '" + m.sample_ids[s] + "'");
                }
    }
}

// New matrix made of the given rows and columns of `m`, in the given order.
ExpressionMatrix select(const ExpressionMatrix& m, const std::vector<std::size_t>& rows,
                        const std::vector<std::size_t>& cols) {
    ExpressionMatrix out;
    out.feature_ids.reserve(rows.size());
    for (auto r : rows) out.feature_ids.push_back(m.feature_ids[r]);
    out.sample_ids.reserve(cols.size());
    for (auto c : cols) out.sample_ids.push_back(m.sample_ids[c]);
    out.values = Matrix(rows.size(), cols.size());
    const bool masked = m.has_missing();
    if (masked) out.missing.assign(rows.size() * cols.size(), 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            out.values(i, j) = m.values(rows[i], cols[j]);
            if (masked) out.missing[i * cols.size() + j] = m.is_missing(rows[i], cols[j]) ? 1 : 0;
        }
    }
    if (out.missing_count() == 0) out.missing.clear();
    return out;
}

std::vector<std::size_t> iota_n(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

// Indices of `ids` that belong to `keep`, ordered by id.
std::vector<std::size_t> sorted_positions(const std::vector<std::string>& ids,
                                          const std::vector<std::string>& keep_sorted) {
    std::unordered_map<std::string_view, std::size_t> pos;
    for (std::size_t i = 0; i < ids.size(); ++i) pos.emplace(ids[i], i);
    std::vector<std::size_t> out;
    out.reserve(keep_sorted.size());
    for (const auto& id : keep_sorted) out.push_back(pos.at(id));
    return out;
}

std::vector<std::string> sorted_intersection(std::vector<std::string> a, std::vector<std::string> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::string> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

}  // namespace

ExpressionMatrix scaled_estimate_to_tpm(const ExpressionMatrix& m) {
    require_complete(m, "tpm");
    for (std::size_t s = 0; s < m.n_samples(); ++s) {
        double sum = 0.0;
        for (std::size_t f = 0; f < m.n_features(); ++f) {
            const double v = m.values(f, s);
            if (v < 0.0) {
                throw ValidationError("tpm: negative scaled estimate at feature '" + m.feature_ids[f] +
                                      "', sample '" + m.sample_ids[s] + "'");
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-3) {
            throw ValidationError("tpm: scaled estimates of sample '" + m.sample_ids[s] + "' sum to " +
                                  std::to_string(sum) + ", expected 1");
        }
    }
    ExpressionMatrix out = m;
    for (double& v : out.values.values()) v *= 1e6;
    return out;
}

ExpressionMatrix log_transform(const ExpressionMatrix& m) {
    require_complete(m, "log");
    ExpressionMatrix out = m;
    for (std::size_t f = 0; f < m.n_features(); ++f) {
        for (std::size_t s = 0; s < m.n_samples(); ++s) {
            double& v = out.values(f, s);
            if (v < 0.0) {
                throw ValidationError("log: negative value at feature '" + m.feature_ids[f] + "', sample '" +
                                      m.sample_ids[s] + "'");
            }
            v = std::log2(v + 1.0);
        }
    }
    return out;
}

std::pair<ExpressionMatrix, ExpressionMatrix> intersect_features(const ExpressionMatrix& a,
                                                                 const ExpressionMatrix& b) {
    const auto shared = sorted_intersection(a.feature_ids, b.feature_ids);
    if (shared.empty()) throw ValidationError("intersect: the two platforms share no feature ids");
    return {select(a, sorted_positions(a.feature_ids, shared), iota_n(a.n_samples())),
            select(b, sorted_positions(b.feature_ids, shared), iota_n(b.n_samples()))};
}

ExpressionMatrix exclude_features(const ExpressionMatrix& m, const std::set<std::string>& excluded) {
    std::vector<std::size_t> keep;
    for (std::size_t f = 0; f < m.n_features(); ++f)
        if (!excluded.contains(m.feature_ids[f])) keep.push_back(f);
    return select(m, keep, iota_n(m.n_samples()));
}

ExpressionMatrix knn_impute(const ExpressionMatrix& m, std::size_t k) {
    if (k < 1) throw ValidationError("impute: k must be at least 1");
    if (!m.has_missing()) return m;
    const std::size_t nf = m.n_features();
    const std::size_t ns = m.n_samples();

    std::vector<double> row_mean(nf, 0.0);
    std::vector<std::uint8_t> row_has_missing(nf, 0);
    for (std::size_t f = 0; f < nf; ++f) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t s = 0; s < ns; ++s) {
            if (m.is_missing(f, s)) {
                row_has_missing[f] = 1;
            } else {
                sum += m.values(f, s);
                ++n;
            }
        }
        if (n == 0) throw ValidationError("impute: feature '" + m.feature_ids[f] + "' has no observed values");
        row_mean[f] = sum / static_cast<double>(n);
    }

    ExpressionMatrix out = m;
    struct Neighbour {
        double distance;
        std::size_t row;
    };
    std::vector<Neighbour> ranked;
    ranked.reserve(nf);
    for (std::size_t f = 0; f < nf; ++f) {
        if (!row_has_missing[f]) continue;
        ranked.clear();
        for (std::size_t g = 0; g < nf; ++g) {
            if (g == f) continue;
            double sum = 0.0;
            std::size_t shared = 0;
            for (std::size_t s = 0; s < ns; ++s) {
                if (m.is_missing(f, s) || m.is_missing(g, s)) continue;
                const double d = m.values(f, s) - m.values(g, s);
                sum += d * d;
                ++shared;
            }
            if (shared > 0) ranked.push_back({sum / static_cast<double>(shared), g});
        }
        std::sort(ranked.begin(), ranked.end(), [](const Neighbour& x, const Neighbour& y) {
            return x.distance < y.distance || (x.distance == y.distance && x.row < y.row);
        });
        for (std::size_t s = 0; s < ns; ++s) {
            if (!m.is_missing(f, s)) continue;
            double sum = 0.0;
            std::size_t used = 0;
            for (const auto& nb : ranked) {
                if (used == k) break;
                if (m.is_missing(nb.row, s)) continue;
                sum += m.values(nb.row, s);
                ++used;
            }
            out.values(f, s) = used > 0 ? sum / static_cast<double>(used) : row_mean[f];
        }
    }
    out.missing.clear();
    return out;
}

ZscoreResult zscore(const ExpressionMatrix& m) {
    require_complete(m, "zscore");
    ZscoreResult res{m, {}};
    const std::size_t ns = m.n_samples();
    if (ns == 0) return res;
    for (std::size_t f = 0; f < m.n_features(); ++f) {
        auto row = res.matrix.values.row(f);
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= static_cast<double>(ns);
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / static_cast<double>(ns));
        if (sd < 1e-12) {
            std::fill(row.begin(), row.end(), 0.0);
            res.constant_features.push_back(m.feature_ids[f]);
            continue;
        }
        for (double& v : row) v = (v - mean) / sd;
    }
    return res;
}

ExpressionMatrix match_and_concat(const ExpressionMatrix& mrna, const ExpressionMatrix& mirna) {
    const auto shared = sorted_intersection(mrna.sample_ids, mirna.sample_ids);
    if (shared.empty()) throw ValidationError("match: empty sample intersection between mRNA and miRNA inputs");
    const auto a = select(mrna, iota_n(mrna.n_features()), sorted_positions(mrna.sample_ids, shared));
    const auto b = select(mirna, iota_n(mirna.n_features()), sorted_positions(mirna.sample_ids, shared));

    ExpressionMatrix out;
    out.sample_ids = shared;
    out.feature_ids = a.feature_ids;
    for (const auto& id : b.feature_ids) out.feature_ids.push_back("mir:" + id);
    out.values = Matrix(out.feature_ids.size(), shared.size());
    for (std::size_t f = 0; f < a.n_features(); ++f)
        std::copy(a.values.row(f).begin(), a.values.row(f).end(), out.values.row(f).begin());
    for (std::size_t f = 0; f < b.n_features(); ++f)
        std::copy(b.values.row(f).begin(), b.values.row(f).end(), out.values.row(a.n_features() + f).begin());
    if (a.has_missing() || b.has_missing()) {
        out.missing.assign(out.values.size(), 0);
        for (std::size_t f = 0; f < out.n_features(); ++f) {
            for (std::size_t s = 0; s < shared.size(); ++s) {
                const bool miss = f < a.n_features() ? a.is_missing(f, s) : b.is_missing(f - a.n_features(), s);
                out.missing[f * shared.size() + s] = miss ? 1 : 0;
            }
        }
    }
    out.validate();
    return out;
}

ExpressionMatrix merge_samples(const std::vector<ExpressionMatrix>& parts, std::size_t* dropped_duplicates) {
    if (parts.empty()) throw ValidationError("merge: no inputs");
    std::size_t dropped = 0;
    std::set<std::string> seen;
    std::vector<std::pair<std::size_t, std::size_t>> columns;  // (part, column)
    for (std::size_t p = 0; p < parts.size(); ++p) {
        if (parts[p].feature_ids != parts.front().feature_ids) {
            throw ValidationError("merge: platform inputs have different feature sets");
        }
        for (std::size_t s = 0; s < parts[p].n_samples(); ++s) {
            if (seen.insert(parts[p].sample_ids[s]).second) {
                columns.emplace_back(p, s);
            } else {
                ++dropped;
            }
        }
    }
    if (dropped_duplicates) *dropped_duplicates = dropped;

    ExpressionMatrix out;
    out.feature_ids = parts.front().feature_ids;
    out.values = Matrix(out.feature_ids.size(), columns.size());
    bool any_missing = false;
    for (const auto& p : parts) any_missing = any_missing || p.has_missing();
    if (any_missing) out.missing.assign(out.values.size(), 0);
    for (std::size_t j = 0; j < columns.size(); ++j) {
        const auto& src = parts[columns[j].first];
        const std::size_t s = columns[j].second;
        out.sample_ids.push_back(src.sample_ids[s]);
        for (std::size_t f = 0; f < out.feature_ids.size(); ++f) {
            out.values(f, j) = src.values(f, s);
            if (any_missing) out.missing[f * columns.size() + j] = src.is_missing(f, s) ? 1 : 0;
        }
    }
    return out;
}

Platform parse_platform(const std::string& s) {
    if (s == "hiseq") return Platform::hiseq;
    if (s == "array") return Platform::array;
    throw ValidationError("unknown platform '" + s + "' (expected hiseq or array)");
}

std::string to_string(Platform p) { return p == Platform::hiseq ? "hiseq" : "array"; }

namespace {

struct AssayOutput {
    ExpressionMatrix matrix;
    AssaySummary summary;
};

AssayOutput preprocess_assay(std::vector<PlatformInput> inputs, const PreprocessOptions& options,
                             const char* assay) {
    if (inputs.empty()) throw ValidationError(std::string(assay) + ": no input files");
    AssayOutput res;
    std::size_t total_features_in = 0;
    for (auto& in : inputs) {
        res.summary.input_shapes.emplace_back(in.matrix.n_features(), in.matrix.n_samples());
        total_features_in += in.matrix.n_features();
        try {
            in.matrix.validate();
            if (!options.excluded_features.empty()) in.matrix = exclude_features(in.matrix, options.excluded_features);
            if (in.platform == Platform::hiseq) in.matrix = log_transform(scaled_estimate_to_tpm(in.matrix));
        } catch (const Error& e) {
            throw ValidationError(std::string(assay) + " input '" + in.name + "': " + e.what());
        }
    }

    // Cross-platform intersection, folded over all inputs of this assay.
    std::vector<std::string> shared = inputs.front().matrix.feature_ids;
    std::sort(shared.begin(), shared.end());
    for (std::size_t i = 1; i < inputs.size(); ++i) {
        shared = sorted_intersection(std::move(shared), inputs[i].matrix.feature_ids);
    }
    if (shared.empty()) throw ValidationError(std::string(assay) + ": intersect: platforms share no feature ids");
    std::vector<ExpressionMatrix> parts;
    for (auto& in : inputs) {
        auto restricted = select(in.matrix, sorted_positions(in.matrix.feature_ids, shared), iota_n(in.matrix.n_samples()));
        res.summary.imputed_cells += restricted.missing_count();
        try {
            parts.push_back(knn_impute(restricted, options.impute_k));
        } catch (const Error& e) {
            throw ValidationError(std::string(assay) + " input '" + in.name + "': " + e.what());
        }
    }
    res.summary.features_after_intersect = shared.size();
    res.summary.features_dropped = total_features_in - shared.size() * inputs.size();

    auto merged = merge_samples(parts, &res.summary.duplicate_samples_dropped);
    auto z = zscore(merged);
    res.summary.samples = z.matrix.n_samples();
    res.summary.constant_features = std::move(z.constant_features);
    res.matrix = std::move(z.matrix);
    return res;
}

void describe(std::ostringstream& os, const char* name, const AssaySummary& s) {
    os << name << ":\n";
    for (std::size_t i = 0; i < s.input_shapes.size(); ++i) {
        os << "  input " << i << ": " << s.input_shapes[i].first << " features x " << s.input_shapes[i].second
           << " samples\n";
    }
    os << "  features after intersect: " << s.features_after_intersect << "\n";
    os << "  features dropped: " << s.features_dropped << "\n";
    os << "  samples: " << s.samples << "\n";
    os << "  duplicate samples dropped: " << s.duplicate_samples_dropped << "\n";
    os << "  imputed cells: " << s.imputed_cells << "\n";
    os << "  constant features zeroed: " << s.constant_features.size() << "\n";
    for (const auto& f : s.constant_features) os << "    warning: constant feature " << f << "\n";
}

}  // namespace

std::string PreprocessSummary::to_text() const {
    std::ostringstream os;
    describe(os, "mrna", mrna);
    describe(os, "mirna", mirna);
    os << "output: " << output_features << " features x " << output_samples << " samples\n";
    return os.str();
}

PreprocessResult preprocess(std::vector<PlatformInput> mrna, std::vector<PlatformInput> mirna,
                            const PreprocessOptions& options) {
    auto a = preprocess_assay(std::move(mrna), options, "mrna");
    auto b = preprocess_assay(std::move(mirna), options, "mirna");
    PreprocessResult res;
    res.matrix = match_and_concat(a.matrix, b.matrix);
    res.summary.mrna = std::move(a.summary);
    res.summary.mirna = std::move(b.summary);
    res.summary.output_features = res.matrix.n_features();
    res.summary.output_samples = res.matrix.n_samples();
    return res;
}

std::set<std::string> read_id_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::set<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        ids.insert(line);
    }
    return ids;
}

}  // namespace vqs
