#pragma once

// Little-endian binary writer/reader with a running CRC32, shared by the
// dataset (KEECDAT1/KEECWIN1) and bundle formats. Files are written to a
// temporary sibling and renamed into place so failed runs leave no partial
// output; readers slurp the whole file and verify the trailing checksum
// before any field is parsed.

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "keec/numkit.hpp"

namespace keec::io {

class Writer {
  public:
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f64(double v);
    void str(const std::string& s);            // u64 length + raw bytes
    void matrix(const Matrix& m);              // row-major f64 block, no header
    void vector(const Vector& v);
    void raw(const void* data, std::size_t len);

    // Appends CRC32 of everything buffered so far, then writes atomically.
    void commit(const std::string& path);

    const std::vector<unsigned char>& buffer() const { return buf_; }

  private:
    std::vector<unsigned char> buf_;
};

class Reader {
  public:
    // Loads the file, checks minimum length and the trailing CRC32.
    // Throws IoError on missing file, truncation, or checksum mismatch.
    explicit Reader(const std::string& path);

    void expect_magic(const char* magic8);     // 8-byte tag, IoError on mismatch
    std::uint32_t u32();
    std::uint64_t u64();
    double f64();
    std::string str();
    Matrix matrix(Eigen::Index rows, Eigen::Index cols);
    Vector vector(Eigen::Index size);
    bool at_end() const { return pos_ == payload_end_; }

  private:
    void need(std::size_t n);
    std::vector<unsigned char> buf_;
    std::size_t pos_ = 0;
    std::size_t payload_end_ = 0;  // file size minus the 4 checksum bytes
    std::string path_;
};

}  // namespace keec::io
