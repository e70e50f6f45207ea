#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string_view>
#include <unordered_set>

#include "vqs/binio.hpp"
#include "vqs/errors.hpp"
#include "vqs/ingestion.hpp"

namespace vqs {

namespace {

constexpr std::string_view kCacheMagic = "VQOM";
constexpr std::uint32_t kCacheVersion = 1;

class CacheError : public Error {
public:
    CacheError(std::uint64_t offset, const std::string& what)
        : Error("matrix cache error at byte " + std::to_string(offset) + ": " + what) {}
};

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

std::size_t ExpressionMatrix::missing_count() const noexcept {
    std::size_t n = 0;
    for (auto m : missing) n += m != 0;
    return n;
}

void ExpressionMatrix::validate() const {
    if (values.rows() != feature_ids.size() || values.cols() != sample_ids.size()) {
        throw ValidationError("expression matrix values " + values.shape_string() + " do not match " +
                              std::to_string(feature_ids.size()) + " features x " +
                              std::to_string(sample_ids.size()) + " samples");
    }
    if (!missing.empty() && missing.size() != values.size()) {
        throw ValidationError("missing mask size does not match matrix shape " + values.shape_string());
    }
    std::unordered_set<std::string_view> seen;
    for (const auto& f : feature_ids)
        if (!seen.insert(f).second) throw ValidationError("duplicate feature id '" + f + "'");
    seen.clear();
    for (const auto& s : sample_ids)
        if (!seen.insert(s).second) throw ValidationError("duplicate sample id '" + s + "'");
    for (std::size_t f = 0; f < n_features(); ++f) {
        for (std::size_t s = 0; s < n_samples(); ++s) {
            if (!is_missing(f, s) && !std::isfinite(values(f, s))) {
                throw ValidationError("non-finite value at feature '" + feature_ids[f] + "', sample '" +
                                      sample_ids[s] + "'");
            }
        }
    }
}

ExpressionMatrix parse_expression_tsv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return parse_expression_tsv(in, path.string());
}

ExpressionMatrix parse_expression_tsv(std::istream& in, const std::string& source_name) {
    ExpressionMatrix m;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError(source_name, 1, "empty file, expected header row");
    ++line_no;
    {
        auto header = split_tabs(trim(line));
        if (header.size() < 2) throw ParseError(source_name, 1, "header needs a feature column and at least one sample");
        std::unordered_set<std::string> seen;
        for (std::size_t i = 1; i < header.size(); ++i) {
            std::string id(trim(header[i]));
            if (id.empty()) throw ParseError(source_name, 1, "empty sample id in column " + std::to_string(i + 1));
            if (!seen.insert(id).second) throw ParseError(source_name, 1, "duplicate sample id '" + id + "'");
            m.sample_ids.push_back(std::move(id));
        }
    }
    const std::size_t n_samples = m.sample_ids.size();
    std::vector<double> values;
    std::vector<std::uint8_t> missing;
    std::unordered_set<std::string> seen_features;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view body = trim(line);
        if (body.empty()) continue;
        const auto fields = split_tabs(body);
        if (fields.size() != n_samples + 1) {
            throw ParseError(source_name, line_no,
                             "expected " + std::to_string(n_samples + 1) + " fields, found " +
                                 std::to_string(fields.size()));
        }
        std::string id(trim(fields[0]));
        if (id.empty()) throw ParseError(source_name, line_no, "empty feature id");
        if (!seen_features.insert(id).second) {
            throw ParseError(source_name, line_no, "duplicate feature id '" + id + "'");
        }
        for (std::size_t i = 1; i < fields.size(); ++i) {
            const std::string_view cell = trim(fields[i]);
            if (cell.empty() || cell == "NA") {
                values.push_back(0.0);
                missing.push_back(1);
                continue;
            }
            double v = 0.0;
            const char* first = cell.data();
            if (!cell.empty() && cell.front() == '+') ++first;
            const auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
                throw ParseError(source_name, line_no,
                                 "non-numeric value '" + std::string(cell) + "' in column " + std::to_string(i + 1));
            }
            values.push_back(v);
            missing.push_back(0);
        }
        m.feature_ids.push_back(std::move(id));
    }
    m.values = Matrix(m.feature_ids.size(), n_samples, std::move(values));
    m.missing = std::move(missing);
    if (m.missing_count() == 0) m.missing.clear();
    return m;
}

std::string format_expression_tsv(const ExpressionMatrix& m) {
    std::string out = "feature_id";
    for (const auto& s : m.sample_ids) {
        out += '\t';
        out += s;
    }
    out += '\n';
    char buf[64];
    for (std::size_t f = 0; f < m.n_features(); ++f) {
        out += m.feature_ids[f];
        for (std::size_t s = 0; s < m.n_samples(); ++s) {
            out += '\t';
            if (m.is_missing(f, s)) {
                out += "NA";
            } else {
                const auto res = std::to_chars(buf, buf + sizeof buf, m.values(f, s));
                out.append(buf, res.ptr);
            }
        }
        out += '\n';
    }
    return out;
}

void write_expression_tsv(const ExpressionMatrix& m, const std::filesystem::path& path) {
    write_text_atomic(path, format_expression_tsv(m));
}

std::vector<char> encode_matrix_cache(const ExpressionMatrix& m) {
    ByteWriter w;
    w.bytes(kCacheMagic);
    w.u32(kCacheVersion);
    w.u64(m.n_features());
    w.u64(m.n_samples());
    for (std::size_t f = 0; f < m.n_features(); ++f) {
        for (std::size_t s = 0; s < m.n_samples(); ++s) {
            w.f64(m.is_missing(f, s) ? std::numeric_limits<double>::quiet_NaN() : m.values(f, s));
        }
    }
    for (const auto* ids : {&m.feature_ids, &m.sample_ids}) {
        w.u64(ids->size());
        for (const auto& id : *ids) w.str(id);
    }
    return std::move(w.buffer());
}

ExpressionMatrix decode_matrix_cache(std::span<const char> bytes) {
    ByteReader<CacheError> r(bytes);
    if (r.bytes(4) != kCacheMagic) throw CacheError(0, "bad magic, expected VQOM");
    const auto version = r.u32();
    if (version != kCacheVersion) throw CacheError(4, "unsupported version " + std::to_string(version));
    const auto rows = r.u64();
    const auto cols = r.u64();
    if (cols != 0 && rows > r.remaining() / sizeof(double) / cols) {
        throw CacheError(r.offset(), "shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                                         " exceeds remaining data");
    }
    ExpressionMatrix m;
    std::vector<double> values(rows * cols);
    std::vector<std::uint8_t> missing(rows * cols, 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = r.f64();
        if (std::isnan(values[i])) {
            values[i] = 0.0;
            missing[i] = 1;
        }
    }
    for (auto* ids : {&m.feature_ids, &m.sample_ids}) {
        const auto n = r.u64();
        if (n > r.remaining()) throw CacheError(r.offset(), "id count exceeds remaining data");
        ids->reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) ids->push_back(r.str());
    }
    if (!r.done()) throw CacheError(r.offset(), "trailing bytes after id lists");
    if (m.feature_ids.size() != rows || m.sample_ids.size() != cols) {
        throw CacheError(r.offset(), "id list lengths do not match matrix shape");
    }
    m.values = Matrix(rows, cols, std::move(values));
    m.missing = std::move(missing);
    if (m.missing_count() == 0) m.missing.clear();
    m.validate();
    return m;
}

void save_matrix_cache(const ExpressionMatrix& m, const std::filesystem::path& path) {
    write_file_atomic(path, encode_matrix_cache(m));
}

ExpressionMatrix load_matrix_cache(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return decode_matrix_cache(bytes);
}

ExpressionMatrix load_expression(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() == 4 && std::string_view(magic, 4) == kCacheMagic) return load_matrix_cache(path);
    return parse_expression_tsv(path);
}

}  // namespace vqs
