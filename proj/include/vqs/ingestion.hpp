#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "vqs/linalg.hpp"

namespace vqs {

/// Features × samples expression table with a per-cell missingness mask.
struct ExpressionMatrix {
    std::vector<std::string> feature_ids;
    std::vector<std::string> sample_ids;
    Matrix values;                     // features × samples
    std::vector<std::uint8_t> missing; // row-major, 1 = missing; empty means none

    std::size_t n_features() const noexcept { return feature_ids.size(); }
    std::size_t n_samples() const noexcept { return sample_ids.size(); }
    bool is_missing(std::size_t f, std::size_t s) const noexcept {
        return !missing.empty() && missing[f * n_samples() + s] != 0;
    }
    std::size_t missing_count() const noexcept;
    bool has_missing() const noexcept { return missing_count() > 0; }

    /// Check every structural invariant; throws ValidationError.
    void validate() const;

    bool operator==(const ExpressionMatrix&) const = default;
};

// --- file formats ---------------------------------------------------------

ExpressionMatrix parse_expression_tsv(const std::filesystem::path& path);
ExpressionMatrix parse_expression_tsv(std::istream& in, const std::string& source_name);

/// Shortest round-trip decimal for every value, "NA" for missing cells.
std::string format_expression_tsv(const ExpressionMatrix& m);
void write_expression_tsv(const ExpressionMatrix& m, const std::filesystem::path& path);

/// Binary cache, magic "VQOM". Layout in docs/formats.md.
std::vector<char> encode_matrix_cache(const ExpressionMatrix& m);
ExpressionMatrix decode_matrix_cache(std::span<const char> bytes);
void save_matrix_cache(const ExpressionMatrix& m, const std::filesystem::path& path);
ExpressionMatrix load_matrix_cache(const std::filesystem::path& path);

/// Loads either format: VQOM cache if the magic matches, TSV otherwise.
ExpressionMatrix load_expression(const std::filesystem::path& path);

// --- preprocessing steps --------------------------------------------------

/// RSEM scaled estimates (columns sum to 1) → TPM.
ExpressionMatrix scaled_estimate_to_tpm(const ExpressionMatrix& m);

/// x ↦ log2(x + 1).
ExpressionMatrix log_transform(const ExpressionMatrix& m);

/// Restrict both inputs to their shared features, sorted lexicographically.
std::pair<ExpressionMatrix, ExpressionMatrix> intersect_features(const ExpressionMatrix& a,
                                                                 const ExpressionMatrix& b);

/// Drop the listed features. Unknown ids are ignored.
ExpressionMatrix exclude_features(const ExpressionMatrix& m, const std::set<std::string>& excluded);

/// Row-wise k-nearest-neighbour imputation.
///
/// Distance between feature rows is the mean squared difference over the
/// samples observed in both rows; rows sharing no observed sample are never
/// neighbours. Neighbours are ranked by (distance, row index). A missing cell
/// (f, s) takes the mean of the first k ranked neighbours that are observed at
/// s, or the observed mean of row f if no neighbour is. Only originally
/// observed values are ever read, so the result does not depend on the order
/// in which cells are filled.
ExpressionMatrix knn_impute(const ExpressionMatrix& m, std::size_t k);

struct ZscoreResult {
    ExpressionMatrix matrix;
    std::vector<std::string> constant_features;  // zeroed rows (population std < 1e-12)
};

/// Per-feature (row) standardisation with the population standard deviation.
ZscoreResult zscore(const ExpressionMatrix& m);

/// Restrict both assays to shared samples (sorted) and stack miRNA rows,
/// prefixed "mir:", under the mRNA rows.
ExpressionMatrix match_and_concat(const ExpressionMatrix& mrna, const ExpressionMatrix& mirna);

/// Column-concatenate platforms of the same assay (identical feature order
/// required). A sample id seen in an earlier part is kept from that part.
ExpressionMatrix merge_samples(const std::vector<ExpressionMatrix>& parts, std::size_t* dropped_duplicates = nullptr);

// --- end-to-end pipeline --------------------------------------------------

enum class Platform { hiseq, array };

Platform parse_platform(const std::string& s);
std::string to_string(Platform p);

struct PlatformInput {
    ExpressionMatrix matrix;
    Platform platform = Platform::array;
    std::string name;
};

struct PreprocessOptions {
    std::size_t impute_k = 10;
    std::set<std::string> excluded_features;
};

struct AssaySummary {
    std::vector<std::pair<std::size_t, std::size_t>> input_shapes;  // per file (features, samples)
    std::size_t features_after_intersect = 0;
    std::size_t features_dropped = 0;  // excluded + cross-platform
    std::size_t samples = 0;
    std::size_t duplicate_samples_dropped = 0;
    std::size_t imputed_cells = 0;
    std::vector<std::string> constant_features;
};

struct PreprocessSummary {
    AssaySummary mrna;
    AssaySummary mirna;
    std::size_t output_features = 0;
    std::size_t output_samples = 0;

    std::string to_text() const;
};

struct PreprocessResult {
    ExpressionMatrix matrix;
    PreprocessSummary summary;
};

/// TPM → log (Hi-Seq inputs only) → intersect → impute → z-score → match/concat.
PreprocessResult preprocess(std::vector<PlatformInput> mrna, std::vector<PlatformInput> mirna,
                            const PreprocessOptions& options);

std::set<std::string> read_id_list(const std::filesystem::path& path);

// --- dataset manifest -----------------------------------------------------

struct ManifestEntry {
    std::string source;     // http(s):// URL, file:// URL or local path
    std::string sha256;     // lowercase hex
    std::string dest_name;  // plain file name inside the destination directory
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
};

DatasetManifest parse_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(std::istream& in, const std::string& source_name);

enum class FetchOutcome { fetched, skipped, failed };

struct FetchRecord {
    ManifestEntry entry;
    FetchOutcome outcome = FetchOutcome::failed;
    std::string detail;
};

struct FetchReport {
    std::vector<FetchRecord> records;  // manifest order

    std::size_t count(FetchOutcome o) const noexcept;
};

FetchReport fetch_manifest(const DatasetManifest& manifest, const std::filesystem::path& dest_dir);

std::string sha256_hex(std::span<const char> bytes);
std::string sha256_hex_file(const std::filesystem::path& path);

}  // namespace vqs
