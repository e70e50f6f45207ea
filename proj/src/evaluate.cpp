#include <cmath>
#include <set>
#include <unordered_map>

#include "vqs/analysis.hpp"
#include "vqs/binio.hpp"
#include "vqs/errors.hpp"

namespace vqs {

namespace {

Matrix raw_rows_for(const ExpressionMatrix& data, const std::vector<std::string>& sample_ids) {
    if (data.has_missing()) throw ValidationError("evaluate: expression data contains missing values");
    std::unordered_map<std::string, std::size_t> column;
    for (std::size_t j = 0; j < data.n_samples(); ++j) column.emplace(data.sample_ids[j], j);
    Matrix out(sample_ids.size(), data.n_features());
    for (std::size_t i = 0; i < sample_ids.size(); ++i) {
        auto it = column.find(sample_ids[i]);
        if (it == column.end()) throw ValidationError("evaluate: sample '" + sample_ids[i] + "' is not in the data");
        for (std::size_t f = 0; f < data.n_features(); ++f) out(i, f) = data.values(f, it->second);
    }
    return out;
}

SpaceScores score_space(const std::string& name, const Matrix& rows, const Projection& proj,
                        const std::vector<std::size_t>& truth, std::size_t k, const EvaluateOptions& opts) {
    SpaceScores s;
    s.space = name;
    s.silhouette = silhouette(proj.coordinates, truth).overall;
    const auto km = kmeans(rows, k, opts.seed, {opts.kmeans_restarts, 300});
    const auto agree = cluster_agreement(km.assignment, truth);
    s.nmi = agree.nmi;
    s.ari = agree.ari;
    return s;
}

}  // namespace

EvaluationReport evaluate(const LatentTable& latents, const ExpressionMatrix& data, const SubtypeLabels& labels,
                          const EvaluateOptions& opts) {
    latents.validate();
    if (opts.pca_components < 2) throw ValidationError("evaluate: pca_components must be >= 2");
    EvaluationReport report;
    report.sample_labels = labels.lookup(latents.sample_ids);
    const auto truth = encode_groups(report.sample_labels);
    const std::size_t k = std::set<std::string>(report.sample_labels.begin(), report.sample_labels.end()).size();
    if (k < 2) throw ValidationError("evaluate: labels name only one subtype");

    const Matrix raw = raw_rows_for(data, latents.sample_ids);
    report.raw_projection = pca(raw, opts.pca_components);
    const Matrix& latent = opts.latent == LatentSpace::z_e ? latents.z_e : latents.z_q;
    report.latent = opts.latent;
    report.latent_projection = pca(latent, opts.pca_components);
    report.rows.push_back(score_space("raw", raw, report.raw_projection, truth, k, opts));
    report.rows.push_back(score_space("latent", latent, report.latent_projection, truth, k, opts));

    const auto codes = cluster_agreement(latents.codes, truth);
    report.rows.push_back({"codes", std::nan(""), codes.nmi, codes.ari});
    return report;
}

std::string EvaluationReport::to_csv() const {
    std::string out = latent == LatentSpace::z_e ? "# latent = encoder output z_e before quantization; "
                                                   : "# latent = quantized z_q (codebook rows); ";
    out += "codes = assigned codebook index; silhouette on PCA coordinates, nmi/ari from k-means on the full space\n";
    out += "space,silhouette,nmi,ari\n";
    for (const auto& r : rows) {
        out += r.space + ',' + (std::isnan(r.silhouette) ? std::string("NA") : format_double(r.silhouette)) + ',' +
               format_double(r.nmi) + ',' + format_double(r.ari) + '\n';
    }
    return out;
}

void write_evaluation(const EvaluationReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    write_text_atomic(dir / "report.csv", report.to_csv());
    emit_scatter(report.raw_projection, report.sample_labels, "Original expression data", dir / "raw_pca.svg");
    const char* title = report.latent == LatentSpace::z_e ? "Latent features (z_e)" : "Latent features (z_q)";
    emit_scatter(report.latent_projection, report.sample_labels, title, dir / "latent_pca.svg");
}

}  // namespace vqs
