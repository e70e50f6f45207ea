#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <openssl/evp.h>

#include <fstream>
#include <memory>

#include "vqs/binio.hpp"
#include "vqs/errors.hpp"
#include "vqs/ingestion.hpp"

namespace vqs {

namespace fs = std::filesystem;

namespace {

bool is_lower_hex(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

struct DigestCtx {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(), &EVP_MD_CTX_free};
    DigestCtx() {
        if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256: init failed");
    }
    void update(const char* p, std::size_t n) {
        if (EVP_DigestUpdate(ctx.get(), p, n) != 1) throw Error("sha256: update failed");
    }
    std::string hex() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) throw Error("sha256: final failed");
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i) {
            out += digits[md[i] >> 4];
            out += digits[md[i] & 0xf];
        }
        return out;
    }
};

// Download `url` into `dest`; returns an empty string on success, else the reason.
std::string download(const std::string& url, const fs::path& dest) {
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string base = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(base);
    client.set_follow_location(true);
    client.set_connection_timeout(10);
    client.set_read_timeout(60);

    std::ofstream out(dest, std::ios::binary | std::ios::trunc);
    if (!out) return "cannot write " + dest.string();
    int status = 0;
    auto res = client.Get(
        path,
        [&status](const httplib::Response& r) {
            status = r.status;
            return r.status == 200;
        },
        [&out](const char* data, std::size_t n) {
            out.write(data, static_cast<std::streamsize>(n));
            return static_cast<bool>(out);
        });
    out.close();
    if (!res) {
        if (status != 0 && status != 200) return "HTTP status " + std::to_string(status);
        return "network error: " + httplib::to_string(res.error());
    }
    if (res->status != 200) return "HTTP status " + std::to_string(res->status);
    if (!out) return "failed writing " + dest.string();
    return {};
}

std::string copy_local(const std::string& source, const fs::path& dest) {
    fs::path src = starts_with(source, "file://") ? fs::path(source.substr(7)) : fs::path(source);
    std::error_code ec;
    fs::copy_file(src, dest, fs::copy_options::overwrite_existing, ec);
    if (ec) return "cannot copy " + src.string() + ": " + ec.message();
    return {};
}

}  // namespace

std::string sha256_hex(std::span<const char> bytes) {
    DigestCtx d;
    d.update(bytes.data(), bytes.size());
    return d.hex();
}

std::string sha256_hex_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    DigestCtx d;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        d.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return d.hex();
}

DatasetManifest parse_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return parse_manifest(in, path.string());
}

DatasetManifest parse_manifest(std::istream& in, const std::string& source_name) {
    DatasetManifest m;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            const auto tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 3) {
            throw ParseError(source_name, line_no, "expected 3 tab-separated fields, found " + std::to_string(fields.size()));
        }
        if (fields[1].size() != 64 || !is_lower_hex(fields[1])) {
            throw ParseError(source_name, line_no, "checksum must be 64 lowercase hex digits (SHA-256)");
        }
        const fs::path dest(fields[2]);
        if (fields[2].empty() || dest.has_parent_path() || fields[2] == "." || fields[2] == "..") {
            throw ParseError(source_name, line_no, "destination must be a plain file name, got '" + fields[2] + "'");
        }
        m.entries.push_back({fields[0], fields[1], fields[2]});
    }
    return m;
}

std::size_t FetchReport::count(FetchOutcome o) const noexcept {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [o](const FetchRecord& r) { return r.outcome == o; }));
}

FetchReport fetch_manifest(const DatasetManifest& manifest, const fs::path& dest_dir) {
    std::error_code ec;
    fs::create_directories(dest_dir, ec);
    if (ec) throw IoError("cannot create " + dest_dir.string() + ": " + ec.message());

    FetchReport report;
    for (const auto& entry : manifest.entries) {
        FetchRecord rec{entry, FetchOutcome::failed, {}};
        const fs::path dest = dest_dir / entry.dest_name;
        if (fs::exists(dest) && sha256_hex_file(dest) == entry.sha256) {
            rec.outcome = FetchOutcome::skipped;
            rec.detail = "already present";
            report.records.push_back(std::move(rec));
            continue;
        }
        fs::path part = dest;
        part += ".part";
        const bool remote = starts_with(entry.source, "http://") || starts_with(entry.source, "https://");
        std::string err;
        try {
            err = remote ? download(entry.source, part) : copy_local(entry.source, part);
        } catch (const std::exception& e) {
            err = e.what();
        }
        if (err.empty()) {
            const auto got = sha256_hex_file(part);
            if (got != entry.sha256) err = "checksum mismatch: expected " + entry.sha256 + ", got " + got;
        }
        if (err.empty()) {
            fs::rename(part, dest, ec);
            if (ec) err = "cannot move into place: " + ec.message();
        }
        if (err.empty()) {
            rec.outcome = FetchOutcome::fetched;
        } else {
            fs::remove(part, ec);
            rec.detail = err;
        }
        report.records.push_back(std::move(rec));
    }
    return report;
}

}  // namespace vqs
