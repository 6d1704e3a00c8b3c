#include "keec/io.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "keec/errors.hpp"

namespace keec::io {

void Writer::raw(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    buf_.insert(buf_.end(), p, p + len);
}

void Writer::u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    raw(b, 4);
}

void Writer::u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    raw(b, 8);
}

void Writer::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void Writer::str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
}

void Writer::matrix(const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
}

void Writer::vector(const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
}

void Writer::commit(const std::string& path) {
    std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(0L, buf_.data(), static_cast<uInt>(buf_.size())));
    u32(crc);

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out.write(reinterpret_cast<const char*>(buf_.data()),
                  static_cast<std::streamsize>(buf_.size()));
        if (!out) throw IoError("short write to '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

Reader::Reader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open '" + path + "'");
    const auto size = static_cast<std::size_t>(in.tellg());
    if (size < 12) throw IoError("'" + path + "' is truncated");
    buf_.resize(size);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(buf_.data()), static_cast<std::streamsize>(size));
    if (!in) throw IoError("short read from '" + path + "'");

    payload_end_ = size - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
        stored |= static_cast<std::uint32_t>(buf_[payload_end_ + i]) << (8 * i);
    std::uint32_t actual = static_cast<std::uint32_t>(
        ::crc32(0L, buf_.data(), static_cast<uInt>(payload_end_)));
    if (stored != actual) throw IoError("checksum mismatch in '" + path + "'");
}

void Reader::need(std::size_t n) {
    if (pos_ + n > payload_end_) throw IoError("'" + path_ + "' is truncated");
}

void Reader::expect_magic(const char* magic8) {
    need(8);
    if (std::memcmp(buf_.data() + pos_, magic8, 8) != 0)
        throw IoError("'" + path_ + "' has wrong magic (expected " + std::string(magic8, 8) + ")");
    pos_ += 8;
}

std::uint32_t Reader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
}

std::uint64_t Reader::u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
}

double Reader::f64() { return std::bit_cast<double>(u64()); }

std::string Reader::str() {
    const std::uint64_t len = u64();
    if (len > payload_end_) throw IoError("'" + path_ + "' has an invalid string length");
    need(len);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), len);
    pos_ += len;
    return s;
}

Matrix Reader::matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = f64();
    return m;
}

Vector Reader::vector(Eigen::Index size) {
    Vector v(size);
    for (Eigen::Index i = 0; i < size; ++i) v(i) = f64();
    return v;
}

}  // namespace keec::io
