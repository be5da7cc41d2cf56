#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "rxlab/common.hpp"
#include "rxlab/neural.hpp"

namespace rxlab {

// Weight container: "RXWT" magic, u32 format version, u64 config hash,
// u32 tensor count, then per tensor: u32 name length, name bytes, u64 rows,
// u64 cols, row-major float64 payload. All integers and doubles little-endian.
inline constexpr char kWeightMagic[4] = {'R', 'X', 'W', 'T'};
inline constexpr std::uint32_t kWeightVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if (!host_is_little_endian())
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
      std::swap(buf[i], buf[sizeof(T) - 1 - i]);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw IoError("unexpected end of file");
  if (!host_is_little_endian())
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
      std::swap(buf[i], buf[sizeof(T) - 1 - i]);
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

inline void write_mat(std::ostream& os, const Mat& m) {
  write_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  write_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) write_le<double>(os, m(i, j));
}

inline Mat read_mat(std::istream& is) {
  const auto rows = read_le<std::uint64_t>(is);
  const auto cols = read_le<std::uint64_t>(is);
  if (rows > (1u << 24) || cols > (1u << 24)) throw IoError("implausible tensor shape");
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = read_le<double>(is);
  return m;
}

}  // namespace detail

inline void save_weights(const std::string& path, std::uint64_t config_hash,
                         const std::vector<ParamRef>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(kWeightMagic, 4);
  detail::write_le<std::uint32_t>(os, kWeightVersion);
  detail::write_le<std::uint64_t>(os, config_hash);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::write_mat(os, *p.value);
  }
  if (!os) throw IoError("write failed: " + path);
}

struct WeightFile {
  std::uint32_t version = 0;
  std::uint64_t config_hash = 0;
  std::map<std::string, Mat> tensors;
};

inline WeightFile read_weight_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kWeightMagic, 4) != 0)
    throw IoError("not a weight file: " + path);
  WeightFile f;
  f.version = detail::read_le<std::uint32_t>(is);
  if (f.version != kWeightVersion)
    throw IoError("unsupported weight format version " + std::to_string(f.version));
  f.config_hash = detail::read_le<std::uint64_t>(is);
  const auto count = detail::read_le<std::uint32_t>(is);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = detail::read_le<std::uint32_t>(is);
    if (len > 4096) throw IoError("implausible tensor name length");
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (!is) throw IoError("unexpected end of file");
    f.tensors.emplace(std::move(name), detail::read_mat(is));
  }
  return f;
}

// Strict load: every registered parameter must be present with its exact
// shape, and the stored config hash must match unless expected_hash is 0.
inline void load_weights(const std::string& path, std::uint64_t expected_hash,
                         const std::vector<ParamRef>& params) {
  const WeightFile f = read_weight_file(path);
  if (expected_hash != 0 && f.config_hash != expected_hash)
    throw IoError("weight file " + path + " was produced under a different config " +
                  "(hash mismatch)");
  for (const auto& p : params) {
    const auto it = f.tensors.find(p.name);
    if (it == f.tensors.end()) throw IoError("weight file missing tensor " + p.name);
    if (it->second.rows() != p.value->rows() || it->second.cols() != p.value->cols())
      throw IoError("tensor " + p.name + " has wrong shape");
    *p.value = it->second;
  }
}

}  // namespace rxlab
