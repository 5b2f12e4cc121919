// Copyright 2026 The prcy Authors
// SPDX-License-Identifier: Apache-2.0

#include "prcy/matio.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

namespace prcy::matio {

static_assert(std::endian::native == std::endian::little,
              "on-disk format is little-endian; big-endian hosts need byte swaps");
static_assert(sizeof(float) == 4 && sizeof(double) == 8);

namespace {

constexpr char kMagic[4] = {'P', 'R', 'C', 'Y'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 1 + 8 + 8;

void put_u32(char* p, std::uint32_t v) { std::memcpy(p, &v, 4); }
void put_u64(char* p, std::uint64_t v) { std::memcpy(p, &v, 8); }
std::uint32_t get_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}
std::uint64_t get_u64(const char* p) {
  std::uint64_t v;
  std::memcpy(&v, p, 8);
  return v;
}

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw DataError("matio: " + path.string() + ": " + what);
}

}  // namespace

void save_matrix(const std::filesystem::path& path, const Matrix& m, Dtype dtype) {
  const auto rows = static_cast<std::uint64_t>(m.rows());
  const auto cols = static_cast<std::uint64_t>(m.cols());

  char header[kHeaderBytes];
  std::memcpy(header, kMagic, 4);
  put_u32(header + 4, kFormatVersion);
  header[8] = static_cast<char>(dtype);
  put_u64(header + 9, rows);
  put_u64(header + 17, cols);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  out.write(header, kHeaderBytes);

  const std::size_t count = static_cast<std::size_t>(rows) * cols;
  if (dtype == Dtype::f64) {
    // Matrix is row-major, so the buffer is already in file order.
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(count * sizeof(double)));
  } else {
    std::vector<float> buf(count);
    const double* src = m.data();
    for (std::size_t i = 0; i < count; ++i) buf[i] = static_cast<float>(src[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(count * sizeof(float)));
  }
  out.flush();
  if (!out) fail(path, "write failed");
}

namespace {

MatrixInfo read_header(std::ifstream& in, const std::filesystem::path& path) {
  char header[kHeaderBytes];
  in.read(header, kHeaderBytes);
  if (in.gcount() != static_cast<std::streamsize>(kHeaderBytes)) {
    fail(path, "truncated header");
  }
  if (std::memcmp(header, kMagic, 4) != 0) fail(path, "bad magic, not a matrix file");
  const std::uint32_t version = get_u32(header + 4);
  if (version != kFormatVersion) {
    fail(path, "unsupported format version " + std::to_string(version));
  }
  const auto dtype_byte = static_cast<unsigned char>(header[8]);
  if (dtype_byte > 1) fail(path, "unsupported dtype tag " + std::to_string(dtype_byte));
  return MatrixInfo{static_cast<Dtype>(dtype_byte), get_u64(header + 9), get_u64(header + 17)};
}

}  // namespace

Matrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  const MatrixInfo info = read_header(in, path);

  const std::uint64_t max_index = static_cast<std::uint64_t>(std::numeric_limits<Index>::max());
  if (info.rows > max_index || info.cols > max_index ||
      (info.rows != 0 && info.cols > max_index / info.rows)) {
    fail(path, "dimensions overflow");
  }
  const std::size_t count = static_cast<std::size_t>(info.rows * info.cols);
  const std::size_t width = info.dtype == Dtype::f64 ? sizeof(double) : sizeof(float);

  Matrix m(static_cast<Index>(info.rows), static_cast<Index>(info.cols));
  if (info.dtype == Dtype::f64) {
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(count * width));
  } else {
    std::vector<float> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * width));
    if (in.gcount() == static_cast<std::streamsize>(count * width)) {
      double* dst = m.data();
      for (std::size_t i = 0; i < count; ++i) dst[i] = static_cast<double>(buf[i]);
    }
  }
  if (static_cast<std::size_t>(in.gcount()) != count * width) fail(path, "truncated payload");
  if (in.peek() != std::ifstream::traits_type::eof()) fail(path, "trailing bytes after payload");
  return m;
}

MatrixInfo matrix_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  return read_header(in, path);
}

TokenAllowlist load_allowlist(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(path, "cannot open for reading");

  TokenAllowlist ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    std::size_t e = line.find_last_not_of(" \t\r") + 1;
    if (line[b] == '#') continue;
    if (line[b] == '-') {
      fail(path, "line " + std::to_string(lineno) + ": negative token index");
    }
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(line.data() + b, line.data() + e, value);
    if (ec != std::errc{} || ptr != line.data() + e) {
      fail(path, "line " + std::to_string(lineno) + ": not a token index: '" +
                     line.substr(b, e - b) + "'");
    }
    ids.push_back(value);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

void save_allowlist(const std::filesystem::path& path, const TokenAllowlist& ids) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  for (std::size_t id : ids) out << id << '\n';
  out.flush();
  if (!out) fail(path, "write failed");
}

}  // namespace prcy::matio
