#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ken/errors.hpp"
#include "ken/tensor.hpp"

namespace ken {

// Tensor blob format: magic "KENT", u32 rank, rank x u32 dims, f32 payload,
// all little-endian. Values are stored single-precision on disk and held
// double-precision in memory; writers are expected to hand in values that are
// already exactly representable in f32 (the generator and checkpointing
// quantize first), which makes write -> read -> write byte-stable.

inline constexpr char kBlobMagic[4] = {'K', 'E', 'N', 'T'};

inline double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

inline void quantize_f32(Tensor& t) {
  for (double& v : t.data()) v = quantize_f32(v);
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  char bytes[4];
  bytes[0] = static_cast<char>(v & 0xff);
  bytes[1] = static_cast<char>((v >> 8) & 0xff);
  bytes[2] = static_cast<char>((v >> 16) & 0xff);
  bytes[3] = static_cast<char>((v >> 24) & 0xff);
  out.append(bytes, 4);
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::string encode_blob(const Shape& shape, std::span<const double> values) {
  std::string out;
  out.append(kBlobMagic, 4);
  detail::put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (int d : shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : values) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    detail::put_u32(out, bits);
  }
  return out;
}

inline void write_blob(const std::filesystem::path& path, const Tensor& t) {
  const std::string bytes = encode_blob(t.shape(), t.data());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

// `context` names the tensor for error messages, e.g. "sample s0003 tensor T".
inline Tensor read_blob(const std::filesystem::path& path, const std::string& context) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw DataError(DataError::Kind::missing_file,
                    context + ": missing blob file '" + path.string() + "'");
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());

  if (bytes.size() < 8 || std::memcmp(bytes.data(), kBlobMagic, 4) != 0) {
    throw DataError(DataError::Kind::bad_magic,
                    context + ": '" + path.string() + "' is not a tensor blob");
  }
  const std::uint32_t rank = detail::get_u32(bytes.data() + 4);
  if (rank < 1 || rank > 2) {
    throw DataError(DataError::Kind::shape_mismatch,
                    context + ": unsupported rank " + std::to_string(rank));
  }
  const std::size_t header = 8 + 4 * static_cast<std::size_t>(rank);
  if (bytes.size() < header) {
    throw DataError(DataError::Kind::byte_length, context + ": truncated header");
  }
  Shape shape;
  std::int64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t d = detail::get_u32(bytes.data() + 8 + 4 * i);
    shape.push_back(static_cast<int>(d));
    count *= d;
  }
  if (count <= 0) {
    throw DataError(DataError::Kind::shape_mismatch,
                    context + ": invalid dims " + shape_str(shape));
  }
  const std::size_t expected = header + 4 * static_cast<std::size_t>(count);
  if (bytes.size() != expected) {
    throw DataError(DataError::Kind::byte_length,
                    context + ": expected " + std::to_string(expected) + " bytes, found " +
                        std::to_string(bytes.size()));
  }

  Tensor t(shape);
  for (std::int64_t i = 0; i < count; ++i) {
    const std::uint32_t bits = detail::get_u32(bytes.data() + header + 4 * static_cast<std::size_t>(i));
    float f;
    std::memcpy(&f, &bits, 4);
    t.at(static_cast<int>(i)) = static_cast<double>(f);
  }
  return t;
}

}  // namespace ken
