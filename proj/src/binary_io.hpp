#pragma once

// Little-endian primitive encoding shared by the checkpoint and dataset formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dpd/affordance.hpp"
#include "dpd/errors.hpp"

namespace dpd::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written from a little-endian host");

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_string(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  const std::vector<unsigned char>& bytes() const { return bytes_; }
  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const unsigned char* data, std::size_t size, std::uint64_t base_offset = 0)
      : data_(data), size_(size), base_(base_offset) {}

  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void get_bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    get_bytes(s.data(), n);
    return s;
  }
  std::size_t remaining() const { return size_ - pos_; }
  std::uint64_t offset() const { return base_ + pos_; }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n) {
      throw Error(ErrorCode::CorruptRecord,
                  "unexpected end of data at byte offset " + std::to_string(offset()));
    }
  }
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::uint64_t base_;
};

inline void write_spec(ByteWriter& w, const NormalizationSpec& spec) {
  for (const auto& r : spec.ranges) {
    w.put(r.lo);
    w.put(r.hi);
    w.put(r.sentinel);
  }
  w.put(spec.sentinel_margin);
}

inline NormalizationSpec read_spec(ByteReader& r) {
  NormalizationSpec spec;
  for (auto& range : spec.ranges) {
    range.lo = r.get<double>();
    range.hi = r.get<double>();
    range.sentinel = r.get<double>();
  }
  spec.sentinel_margin = r.get<double>();
  return spec;
}

}  // namespace dpd::detail
