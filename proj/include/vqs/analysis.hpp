#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "vqs/ingestion.hpp"
#include "vqs/linalg.hpp"
#include "vqs/training.hpp"

namespace vqs {

/// Per-sample encoder output, assigned code and quantized vector.
struct LatentTable {
    std::vector<std::string> sample_ids;
    Matrix z_e;                       // samples × D
    std::vector<std::size_t> codes;   // one per sample
    Matrix z_q;                       // samples × D

    std::size_t size() const noexcept { return sample_ids.size(); }
    /// Throws ValidationError. codebook_size == 0 skips the code range check.
    void validate(std::size_t codebook_size = 0) const;

    bool operator==(const LatentTable&) const = default;
};

/// Encode and quantize every sample (column) of `data`. Pure.
LatentTable embed(const Checkpoint& ckpt, const ExpressionMatrix& data);

/// TSV with header "sample_id code ze_0 .. ze_{D-1} zq_0 .. zq_{D-1}".
std::string format_latent_table(const LatentTable& t);
void write_latent_table(const LatentTable& t, const std::filesystem::path& path);
LatentTable parse_latent_table(std::istream& in, const std::string& source_name);
LatentTable read_latent_table(const std::filesystem::path& path);

/// sample id → subtype name.
struct SubtypeLabels {
    std::map<std::string, std::string> by_sample;

    /// Subtype per sample in the given order; a sample without a label throws
    /// ValidationError naming it.
    std::vector<std::string> lookup(const std::vector<std::string>& sample_ids) const;
};

/// Two-column TSV "sample_id<TAB>subtype". A first line whose first field is
/// "sample_id" is treated as a header.
SubtypeLabels parse_labels(std::istream& in, const std::string& source_name);
SubtypeLabels read_labels(const std::filesystem::path& path);

/// Dense group indices, numbered by sorted distinct name.
std::vector<std::size_t> encode_groups(const std::vector<std::string>& names);

enum class PcaMethod { automatic, covariance, gram };

struct Projection {
    Matrix coordinates;                  // samples × k
    Matrix components;                   // features × k, orthonormal columns
    std::vector<double> explained_ratio; // descending
};

/// PCA of a samples × features matrix. `automatic` uses the samples × samples
/// Gram matrix when features exceed samples and the covariance otherwise.
Projection pca(const Matrix& m, std::size_t k, PcaMethod method = PcaMethod::automatic);

struct Silhouette {
    double overall = 0.0;
    std::vector<double> per_sample;
};

/// Euclidean silhouette; samples alone in their group score 0.
Silhouette silhouette(const Matrix& coords, const std::vector<std::size_t>& groups);

struct Agreement {
    double nmi = 0.0;  // arithmetic-mean normalisation
    double ari = 0.0;
};

Agreement cluster_agreement(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

struct KmeansOptions {
    std::size_t restarts = 20;
    std::size_t max_iterations = 300;
};

struct KmeansResult {
    std::vector<std::size_t> assignment;
    Matrix centroids;                  // k × dims
    double inertia = 0.0;
    std::vector<double> inertia_trace; // best restart, one entry per assignment pass
};

/// Lloyd's algorithm from k-means++ seeds; the restart with the lowest
/// inertia wins (earliest on ties).
KmeansResult kmeans(const Matrix& coords, std::size_t k, std::uint64_t seed, const KmeansOptions& opts = {});

/// Standalone SVG scatter of the first two components.
std::string render_scatter_svg(const Projection& proj, const std::vector<std::string>& labels,
                               const std::string& title);
void emit_scatter(const Projection& proj, const std::vector<std::string>& labels, const std::string& title,
                  const std::filesystem::path& path);

/// Which per-sample vector stands for the latent space.
enum class LatentSpace { z_e, z_q };

struct EvaluateOptions {
    LatentSpace latent = LatentSpace::z_e;
    std::size_t pca_components = 2;
    std::size_t kmeans_restarts = 20;
    std::uint64_t seed = 0;
};

struct SpaceScores {
    std::string space;
    double silhouette = 0.0;  // NaN for the code partition
    double nmi = 0.0;
    double ari = 0.0;
};

struct EvaluationReport {
    std::vector<SpaceScores> rows;  // raw, latent, codes
    Projection raw_projection;
    Projection latent_projection;
    std::vector<std::string> sample_labels;
    LatentSpace latent = LatentSpace::z_e;

    std::string to_csv() const;
};

/// Silhouette on the PCA coordinates, k-means (k = number of subtypes) on the
/// full representation, and agreement of the code indices with the subtypes.
EvaluationReport evaluate(const LatentTable& latents, const ExpressionMatrix& data, const SubtypeLabels& labels,
                          const EvaluateOptions& opts = {});

/// report.csv, raw_pca.svg and latent_pca.svg under `dir`.
void write_evaluation(const EvaluationReport& report, const std::filesystem::path& dir);

}  // namespace vqs
