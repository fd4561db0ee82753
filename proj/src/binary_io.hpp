#pragma once

// Little-endian primitive I/O shared by the dataset and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "funface/types.hpp"

namespace funface::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
void put(std::ostream& os, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
  char buf[sizeof(T)];
  if (!is.read(buf, sizeof(T))) throw InvalidInput(std::string("truncated file while reading ") + what);
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

inline void put_matrix(std::ostream& os, const MatrixD& m) {
  put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(m.size() * sizeof(double)));
}

inline MatrixD get_matrix(std::istream& is, const char* what) {
  const auto rows = get<std::uint64_t>(is, what);
  const auto cols = get<std::uint64_t>(is, what);
  if (rows > (1ull << 28) || cols > (1ull << 28) || rows * cols > (1ull << 30))
    throw InvalidInput(std::string("implausible matrix shape for ") + what);
  MatrixD m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  if (!is.read(reinterpret_cast<char*>(m.data()),
               static_cast<std::streamsize>(m.size() * sizeof(double))))
    throw InvalidInput(std::string("truncated file while reading ") + what);
  return m;
}

inline void put_vector(std::ostream& os, const VectorD& v) {
  put<std::uint64_t>(os, static_cast<std::uint64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline VectorD get_vector(std::istream& is, const char* what) {
  const auto n = get<std::uint64_t>(is, what);
  if (n > (1ull << 30)) throw InvalidInput(std::string("implausible vector size for ") + what);
  VectorD v(static_cast<Eigen::Index>(n));
  if (!is.read(reinterpret_cast<char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double))))
    throw InvalidInput(std::string("truncated file while reading ") + what);
  return v;
}

}  // namespace funface::io
