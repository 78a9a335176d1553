#include "hyq/binary_io.hpp"

#include <bit>
#include <cstring>

#include "hyq/error.hpp"

namespace hyq {

namespace {

template <typename T>
void store_le(T v, unsigned char* out) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  }
}

template <typename T>
T load_le(const unsigned char* in) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(in[i]) << (8 * i);
  }
  return v;
}

}  // namespace

BinaryWriter::BinaryWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
  if (!out_) fail(ErrorCode::IoError, "cannot open for writing: " + path.string());
}

void BinaryWriter::raw(const void* data, std::size_t n) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out_) fail(ErrorCode::IoError, "write failed: " + path_.string());
}

void BinaryWriter::magic(std::string_view tag) { raw(tag.data(), tag.size()); }

void BinaryWriter::u8(std::uint8_t v) { raw(&v, 1); }

void BinaryWriter::u32(std::uint32_t v) {
  unsigned char buf[4];
  store_le(v, buf);
  raw(buf, 4);
}

void BinaryWriter::u64(std::uint64_t v) {
  unsigned char buf[8];
  store_le(v, buf);
  raw(buf, 8);
}

void BinaryWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::str(std::string_view s) {
  u64(s.size());
  raw(s.data(), s.size());
}

void BinaryWriter::f32s(std::span<const float> values) {
  u64(values.size());
  for (float v : values) f32(v);
}

void BinaryWriter::f64s(std::span<const double> values) {
  u64(values.size());
  for (double v : values) f64(v);
}

void BinaryWriter::u32s(std::span<const std::uint32_t> values) {
  u64(values.size());
  for (auto v : values) u32(v);
}

void BinaryWriter::u64s(std::span<const std::uint64_t> values) {
  u64(values.size());
  for (auto v : values) u64(v);
}

void BinaryWriter::close() {
  out_.flush();
  if (!out_) fail(ErrorCode::IoError, "flush failed: " + path_.string());
  out_.close();
}

BinaryReader::BinaryReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) fail(ErrorCode::IoError, "cannot open for reading: " + path.string());
  std::error_code ec;
  size_ = std::filesystem::file_size(path, ec);
}

void BinaryReader::raw(void* data, std::size_t n) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) {
    fail(ErrorCode::FormatError, "unexpected end of file: " + path_.string());
  }
}

void BinaryReader::expect_magic(std::string_view tag) {
  std::string got(tag.size(), '\0');
  raw(got.data(), got.size());
  if (got != tag) fail(ErrorCode::FormatError, "bad magic in " + path_.string() + ", expected " + std::string(tag));
}

std::uint8_t BinaryReader::u8() {
  std::uint8_t v;
  raw(&v, 1);
  return v;
}

std::uint32_t BinaryReader::u32() {
  unsigned char buf[4];
  raw(buf, 4);
  return load_le<std::uint32_t>(buf);
}

std::uint64_t BinaryReader::u64() {
  unsigned char buf[8];
  raw(buf, 8);
  return load_le<std::uint64_t>(buf);
}

float BinaryReader::f32() { return std::bit_cast<float>(u32()); }
double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::uint64_t BinaryReader::length_prefix(std::size_t element_size) {
  const std::uint64_t n = u64();
  if (size_ != 0 && n > size_ / std::max<std::size_t>(element_size, 1)) {
    fail(ErrorCode::FormatError, "implausible length prefix in " + path_.string());
  }
  return n;
}

std::string BinaryReader::str() {
  std::string s(length_prefix(1), '\0');
  raw(s.data(), s.size());
  return s;
}

std::vector<float> BinaryReader::f32s() {
  std::vector<float> v(length_prefix(4));
  for (auto& x : v) x = f32();
  return v;
}

std::vector<double> BinaryReader::f64s() {
  std::vector<double> v(length_prefix(8));
  for (auto& x : v) x = f64();
  return v;
}

std::vector<std::uint32_t> BinaryReader::u32s() {
  std::vector<std::uint32_t> v(length_prefix(4));
  for (auto& x : v) x = u32();
  return v;
}

std::vector<std::uint64_t> BinaryReader::u64s() {
  std::vector<std::uint64_t> v(length_prefix(8));
  for (auto& x : v) x = u64();
  return v;
}

bool BinaryReader::at_end() { return in_.peek() == std::char_traits<char>::eof(); }

}  // namespace hyq
