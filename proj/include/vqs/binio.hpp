#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vqs {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Append-only little-endian byte sink.
class ByteWriter {
public:
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void bytes(std::string_view s) { raw(s.data(), s.size()); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }
    void f64_array(std::span<const double> v) {
        u64(v.size());
        raw(v.data(), v.size() * sizeof(double));
    }

    const std::vector<char>& buffer() const noexcept { return buf_; }
    std::vector<char>& buffer() noexcept { return buf_; }
    std::size_t size() const noexcept { return buf_.size(); }

private:
    void raw(const void* p, std::size_t n) {
        const auto* c = static_cast<const char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    std::vector<char> buf_;
};

/// Bounds-checked little-endian reader. Throws Err(offset, message) on
/// truncation, where Err is supplied by the caller's format.
template <typename Err>
class ByteReader {
public:
    ByteReader(std::span<const char> data, std::uint64_t base_offset = 0)
        : data_(data), base_(base_offset) {}

    std::uint32_t u32() { return scalar<std::uint32_t>(); }
    std::uint64_t u64() { return scalar<std::uint64_t>(); }
    double f64() { return scalar<double>(); }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s(data_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    std::string str() { return bytes(u32()); }

    std::vector<double> f64_array() {
        const std::uint64_t n = u64();
        if (n > remaining() / sizeof(double)) throw Err(offset(), "array length exceeds remaining data");
        std::vector<double> v(n);
        std::memcpy(v.data(), data_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return v;
    }

    std::span<const char> take(std::size_t n) {
        need(n);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    std::uint64_t offset() const noexcept { return base_ + pos_; }
    bool done() const noexcept { return pos_ == data_.size(); }

private:
    void need(std::size_t n) {
        if (n > remaining()) throw Err(offset(), "unexpected end of data (need " + std::to_string(n) + " bytes)");
    }
    template <typename T>
    T scalar() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::span<const char> data_;
    std::uint64_t base_;
    std::size_t pos_ = 0;
};

std::vector<char> read_file_bytes(const std::filesystem::path& path);

/// Write via a sibling temp file and rename, so readers never observe a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::span<const char> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace vqs
