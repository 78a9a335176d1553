#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hyq {

// Little-endian binary encoding shared by every persisted artifact
// (tables, indexes, histograms, networks).
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path);

  void magic(std::string_view tag);
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void str(std::string_view s);
  void f32s(std::span<const float> values);
  void f64s(std::span<const double> values);
  void u32s(std::span<const std::uint32_t> values);
  void u64s(std::span<const std::uint64_t> values);

  void close();

 private:
  void raw(const void* data, std::size_t n);

  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);

  // Throws FormatError if the next bytes are not `tag`.
  void expect_magic(std::string_view tag);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str();
  std::vector<float> f32s();
  std::vector<double> f64s();
  std::vector<std::uint32_t> u32s();
  std::vector<std::uint64_t> u64s();

  bool at_end();

 private:
  void raw(void* data, std::size_t n);
  std::uint64_t length_prefix(std::size_t element_size);

  std::filesystem::path path_;
  std::ifstream in_;
  std::uintmax_t size_ = 0;
};

}  // namespace hyq
