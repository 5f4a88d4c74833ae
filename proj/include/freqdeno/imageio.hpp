#pragma once

// TensorFile layout (all little-endian):
//   "FDT1" | u32 rank | u32 dims[rank] | f64 payload[prod(dims)] | u64 FNV-1a(payload bytes)
//
// Gray exports are binary P5 graymaps (maxval 255) with a text sidecar
// "<path>.range" holding the linear min/max used for scaling.

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "freqdeno/tensor.hpp"

namespace freqdeno {

inline constexpr std::array<char, 4> kTensorMagic{'F', 'D', 'T', '1'};

inline std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

namespace detail {

inline void put_le(std::vector<unsigned char>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

inline std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

inline std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return bytes;
}

inline void write_all(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

/// Serialises `t` to the TensorFile byte layout.
inline std::vector<unsigned char> encode_tensor(const Tensor& t) {
  if (t.rank() == 0) throw ShapeError("TensorFile requires rank >= 1");
  std::vector<unsigned char> out(kTensorMagic.begin(), kTensorMagic.end());
  detail::put_le(out, t.rank(), 4);
  for (std::size_t d : t.shape()) {
    if (d > 0xffffffffu) throw ShapeError("TensorFile dimension exceeds u32");
    detail::put_le(out, d, 4);
  }
  const std::size_t payload_start = out.size();
  for (double v : t.data()) detail::put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  const auto checksum = fnv1a64(std::span(out).subspan(payload_start));
  detail::put_le(out, checksum, 8);
  return out;
}

inline Tensor decode_tensor(std::span<const unsigned char> bytes, const std::string& where = "<memory>") {
  if (bytes.size() < 8) throw TruncationError(where + ": file too short for TensorFile header");
  if (!std::equal(kTensorMagic.begin(), kTensorMagic.end(), bytes.begin()))
    throw FormatError(where + ": bad magic, expected FDT1");
  const std::uint64_t rank = detail::get_le(bytes.data() + 4, 4);
  if (rank == 0) throw FormatError(where + ": rank 0 is not allowed");
  std::size_t pos = 8;
  if (bytes.size() < pos + 4 * rank) throw TruncationError(where + ": truncated dimension list");
  Shape shape;
  std::size_t count = 1;
  for (std::uint64_t i = 0; i < rank; ++i, pos += 4) {
    shape.push_back(static_cast<std::size_t>(detail::get_le(bytes.data() + pos, 4)));
    count *= shape.back();
    if (count > bytes.size()) throw TruncationError(where + ": payload larger than file");
  }
  if (bytes.size() < pos + 8 * count + 8) throw TruncationError(where + ": truncated payload");
  if (bytes.size() > pos + 8 * count + 8) throw FormatError(where + ": trailing bytes after checksum");
  const auto payload = bytes.subspan(pos, 8 * count);
  const std::uint64_t stored = detail::get_le(bytes.data() + pos + 8 * count, 8);
  if (fnv1a64(payload) != stored) throw CorruptionError(where + ": checksum mismatch");
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<double>(detail::get_le(payload.data() + 8 * i, 8));
  return Tensor(std::move(shape), std::move(values));
}

inline void save_tensor(const Tensor& t, const std::filesystem::path& path) {
  detail::write_all(path, encode_tensor(t));
}

inline Tensor load_tensor(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file '" + path.string() + "'");
  return decode_tensor(detail::read_all(path), path.string());
}

struct GrayRange {
  double min = 0.0;
  double max = 0.0;
};

inline std::filesystem::path range_sidecar(const std::filesystem::path& image) {
  return std::filesystem::path(image.string() + ".range");
}

/// 8-bit pixels by min-max scaling; a constant map becomes 128 everywhere.
inline std::vector<unsigned char> quantize_gray(const Tensor& t, GrayRange& range) {
  if (t.size() == 0) throw ShapeError("export_gray: empty tensor");
  range.min = *std::min_element(t.data().begin(), t.data().end());
  range.max = *std::max_element(t.data().begin(), t.data().end());
  std::vector<unsigned char> px(t.size(), 128);
  if (range.max > range.min) {
    const double span = range.max - range.min;
    for (std::size_t i = 0; i < t.size(); ++i)
      px[i] = static_cast<unsigned char>(std::lround(std::clamp((t[i] - range.min) / span, 0.0, 1.0) * 255.0));
  }
  return px;
}

inline void export_gray(const Tensor& t, const std::filesystem::path& path) {
  if (t.rank() != 2) throw ShapeError("export_gray: expected H x W tensor, got " + to_string(t.shape()));
  GrayRange range;
  const auto px = quantize_gray(t, range);
  std::ostringstream header;
  header << "P5\n" << t.dim(1) << ' ' << t.dim(0) << "\n255\n";
  const std::string h = header.str();
  std::vector<unsigned char> bytes(h.begin(), h.end());
  bytes.insert(bytes.end(), px.begin(), px.end());
  detail::write_all(path, bytes);

  std::ostringstream side;
  side << std::setprecision(17) << "min " << range.min << "\nmax " << range.max << "\n";
  const std::string s = side.str();
  detail::write_all(range_sidecar(path), std::span(reinterpret_cast<const unsigned char*>(s.data()), s.size()));
}

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<unsigned char> pixels;
};

inline GrayImage load_pgm(const std::filesystem::path& path) {
  const auto bytes = detail::read_all(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
    return tok;
  };
  if (token() != "P5") throw FormatError(path.string() + ": not a binary P5 graymap");
  GrayImage img;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    if (std::stoul(token()) != 255) throw FormatError(path.string() + ": maxval must be 255");
  } catch (const std::logic_error&) {
    throw FormatError(path.string() + ": malformed P5 header");
  }
  ++pos;  // single whitespace after maxval
  if (bytes.size() != pos + img.width * img.height) throw TruncationError(path.string() + ": pixel data size mismatch");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

inline GrayRange load_range(const std::filesystem::path& image) {
  std::ifstream in(range_sidecar(image));
  if (!in) throw IoError("cannot open sidecar '" + range_sidecar(image).string() + "'");
  GrayRange r;
  std::string k1, k2;
  if (!(in >> k1 >> r.min >> k2 >> r.max) || k1 != "min" || k2 != "max")
    throw FormatError(range_sidecar(image).string() + ": malformed range sidecar");
  return r;
}

/// Reconstructs approximate values from a P5 export and its sidecar.
inline Tensor import_gray(const std::filesystem::path& path) {
  const GrayImage img = load_pgm(path);
  const GrayRange r = load_range(path);
  Tensor t({img.height, img.width});
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = r.max > r.min ? r.min + (r.max - r.min) * img.pixels[i] / 255.0 : r.min;
  return t;
}

}  // namespace freqdeno
