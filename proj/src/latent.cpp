#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <algorithm>

#include "vqs/analysis.hpp"
#include "vqs/binio.hpp"
#include "vqs/errors.hpp"

namespace vqs {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    return s;
}

std::vector<std::string_view> split_tabs(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto tab = s.find('\t', start);
        out.push_back(s.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
        if (tab == std::string_view::npos) return out;
        start = tab + 1;
    }
}

}  // namespace

void LatentTable::validate(std::size_t codebook_size) const {
    const auto n = sample_ids.size();
    if (z_e.rows() != n || z_q.rows() != n || codes.size() != n) {
        throw ValidationError("latent table row counts disagree: " + std::to_string(n) + " ids, z_e " +
                              z_e.shape_string() + ", z_q " + z_q.shape_string() + ", " +
                              std::to_string(codes.size()) + " codes");
    }
    if (z_e.cols() != z_q.cols()) throw ValidationError("latent table z_e and z_q widths differ");
    if (codebook_size > 0) {
        for (std::size_t i = 0; i < n; ++i) {
            if (codes[i] >= codebook_size) {
                throw ValidationError("code " + std::to_string(codes[i]) + " of sample '" + sample_ids[i] +
                                      "' is outside [0, " + std::to_string(codebook_size) + ")");
            }
        }
    }
}

LatentTable embed(const Checkpoint& ckpt, const ExpressionMatrix& data) {
    if (data.n_features() != ckpt.input_width()) {
        throw ShapeError("embed: data has " + std::to_string(data.n_features()) + " features, checkpoint expects " +
                         std::to_string(ckpt.input_width()));
    }
    LatentTable t;
    t.sample_ids = data.sample_ids;
    t.z_e = encode(ckpt.params, samples_as_rows(data));
    auto q = quantize(ckpt.codebook, t.z_e);
    t.codes = std::move(q.indices);
    t.z_q = std::move(q.z_q);
    return t;
}

std::string format_latent_table(const LatentTable& t) {
    t.validate();
    const auto d = t.z_e.cols();
    std::string out = "sample_id\tcode";
    for (std::size_t j = 0; j < d; ++j) out += "\tze_" + std::to_string(j);
    for (std::size_t j = 0; j < d; ++j) out += "\tzq_" + std::to_string(j);
    out += '\n';
    for (std::size_t i = 0; i < t.size(); ++i) {
        out += t.sample_ids[i];
        out += '\t';
        out += std::to_string(t.codes[i]);
        for (double v : t.z_e.row(i)) out += '\t' + format_double(v);
        for (double v : t.z_q.row(i)) out += '\t' + format_double(v);
        out += '\n';
    }
    return out;
}

void write_latent_table(const LatentTable& t, const std::filesystem::path& path) {
    write_text_atomic(path, format_latent_table(t));
}

LatentTable parse_latent_table(std::istream& in, const std::string& source_name) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(source_name, 1, "empty file, expected header row");
    const auto header = split_tabs(trim(line));
    if (header.size() < 4 || header.size() % 2 != 0 || header[0] != "sample_id" || header[1] != "code") {
        throw ParseError(source_name, 1, "header must be sample_id, code, ze_*, zq_* columns");
    }
    const std::size_t d = (header.size() - 2) / 2;
    for (std::size_t j = 0; j < d; ++j) {
        if (header[2 + j] != "ze_" + std::to_string(j) || header[2 + d + j] != "zq_" + std::to_string(j)) {
            throw ParseError(source_name, 1, "unexpected latent column names");
        }
    }

    LatentTable t;
    std::vector<double> ze, zq;
    std::set<std::string> seen;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = trim(line);
        if (body.empty()) continue;
        const auto fields = split_tabs(body);
        if (fields.size() != header.size()) {
            throw ParseError(source_name, line_no,
                             "expected " + std::to_string(header.size()) + " fields, found " +
                                 std::to_string(fields.size()));
        }
        std::string id(fields[0]);
        if (id.empty()) throw ParseError(source_name, line_no, "empty sample id");
        if (!seen.insert(id).second) throw ParseError(source_name, line_no, "duplicate sample id '" + id + "'");
        std::size_t code = 0;
        const auto cf = fields[1];
        if (auto [p, ec] = std::from_chars(cf.data(), cf.data() + cf.size(), code);
            ec != std::errc() || p != cf.data() + cf.size()) {
            throw ParseError(source_name, line_no, "invalid code '" + std::string(cf) + "'");
        }
        for (std::size_t j = 2; j < fields.size(); ++j) {
            double v = 0.0;
            const auto f = fields[j];
            auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc() || p != f.data() + f.size() || !std::isfinite(v)) {
                throw ParseError(source_name, line_no, "invalid value '" + std::string(f) + "' in column " +
                                                           std::to_string(j + 1));
            }
            (j < 2 + d ? ze : zq).push_back(v);
        }
        t.sample_ids.push_back(std::move(id));
        t.codes.push_back(code);
    }
    const auto n = t.sample_ids.size();
    t.z_e = Matrix(n, d, std::move(ze));
    t.z_q = Matrix(n, d, std::move(zq));
    return t;
}

LatentTable read_latent_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    return parse_latent_table(in, path.string());
}

std::vector<std::string> SubtypeLabels::lookup(const std::vector<std::string>& sample_ids) const {
    std::vector<std::string> out;
    out.reserve(sample_ids.size());
    for (const auto& id : sample_ids) {
        auto it = by_sample.find(id);
        if (it == by_sample.end()) throw ValidationError("no subtype label for sample '" + id + "'");
        out.push_back(it->second);
    }
    return out;
}

SubtypeLabels parse_labels(std::istream& in, const std::string& source_name) {
    SubtypeLabels labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto fields = split_tabs(body);
        if (fields.size() != 2) {
            throw ParseError(source_name, line_no, "expected 2 fields, found " + std::to_string(fields.size()));
        }
        const std::string id(trim(fields[0]));
        const std::string name(trim(fields[1]));
        if (line_no == 1 && id == "sample_id") continue;
        if (id.empty()) throw ParseError(source_name, line_no, "empty sample id");
        if (name.empty()) throw ParseError(source_name, line_no, "empty subtype for sample '" + id + "'");
        if (!labels.by_sample.emplace(id, name).second) {
            throw ParseError(source_name, line_no, "duplicate sample id '" + id + "'");
        }
    }
    return labels;
}

SubtypeLabels read_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    return parse_labels(in, path.string());
}

std::vector<std::size_t> encode_groups(const std::vector<std::string>& names) {
    const std::set<std::string> distinct(names.begin(), names.end());
    const std::vector<std::string> sorted(distinct.begin(), distinct.end());
    std::vector<std::size_t> out;
    out.reserve(names.size());
    for (const auto& n : names) {
        out.push_back(static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), n) - sorted.begin()));
    }
    return out;
}

}  // namespace vqs
