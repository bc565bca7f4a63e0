#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairdraw {

using Bytes = std::vector<std::uint8_t>;
using ConstSpan = std::span<const std::uint8_t>;

inline ConstSpan as_span(const Bytes& b) { return ConstSpan(b.data(), b.size()); }

inline ConstSpan as_span(const std::string& s) {
  return ConstSpan(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

std::string to_hex(ConstSpan data);
Bytes from_hex(const std::string& hex);  // throws std::invalid_argument

/// Error raised by strict binary decoding; `offset` is the byte position
/// at which decoding failed.
class CodecError : public std::runtime_error {
 public:
  CodecError(std::size_t offset, const std::string& what)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Big-endian append-only byte builder.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 24));
    out_.push_back(static_cast<std::uint8_t>(v >> 16));
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
  }
  void u64(std::uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void raw(ConstSpan data) { out_.insert(out_.end(), data.begin(), data.end()); }
  void raw(const Bytes& data) { raw(as_span(data)); }

  Bytes take() { return std::move(out_); }
  const Bytes& bytes() const { return out_; }
  std::size_t size() const { return out_.size(); }

 private:
  Bytes out_;
};

/// Big-endian reader with position tracking; all reads are bounds-checked
/// and throw CodecError on truncation.
class ByteReader {
 public:
  explicit ByteReader(ConstSpan data) : data_(data) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | data_[pos_++];
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | data_[pos_++];
    return v;
  }
  ConstSpan raw(std::size_t n) {
    need(n);
    ConstSpan s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void expect_end() const {
    if (pos_ != data_.size()) throw CodecError(pos_, "trailing bytes after structure");
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CodecError(pos_, "truncated input");
  }
  ConstSpan data_;
  std::size_t pos_ = 0;
};

}  // namespace fairdraw
