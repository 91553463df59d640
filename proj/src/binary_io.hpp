#pragma once

// Raw little-endian record IO shared by the checkpoint and dataset formats.
// Readers report the byte offset of the first malformed field.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "gpm/errors.hpp"
#include "gpm/numerics.hpp"

namespace gpm::detail {

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    os_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  void put_bytes(const void* data, std::size_t n) {
    os_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }

  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    put_bytes(s.data(), s.size());
  }

  void put_matrix(const Matrix& m) {
    put<std::uint64_t>(m.rows());
    put<std::uint64_t>(m.cols());
    put_bytes(m.data().data(), m.size() * sizeof(double));
  }

 private:
  std::ostream& os_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get(const char* field) {
    T value{};
    get_bytes(&value, sizeof(T), field);
    return value;
  }

  void get_bytes(void* out, std::size_t n, const char* field) {
    is_.read(static_cast<char*>(out), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      fail(std::string("unexpected end of file while reading ") + field);
    }
    offset_ += n;
  }

  std::string get_string(const char* field, std::uint64_t max_len = 1u << 20) {
    const auto n = get<std::uint64_t>(field);
    if (n > max_len) fail(std::string("implausible length for ") + field);
    std::string s(n, '\0');
    get_bytes(s.data(), n, field);
    return s;
  }

  Matrix get_matrix(const char* field, std::uint64_t max_elems = 1ull << 32) {
    const auto rows = get<std::uint64_t>(field);
    const auto cols = get<std::uint64_t>(field);
    if (cols != 0 && rows > max_elems / cols) fail(std::string("implausible shape for ") + field);
    Matrix m(rows, cols);
    get_bytes(m.data().data(), m.size() * sizeof(double), field);
    return m;
  }

  bool at_eof() { return is_.peek() == std::char_traits<char>::eof(); }
  std::uint64_t offset() const { return offset_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(source_ + ": " + what + " (offset " + std::to_string(offset_) + ")");
  }

 private:
  std::istream& is_;
  std::string source_;
  std::uint64_t offset_ = 0;
};

}  // namespace gpm::detail
