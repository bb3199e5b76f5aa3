#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace hbtm {

/// Binary word-presence vector over a dictionary of W words.
///
/// Bits are packed 64 to a block so that overlap counts between two marks
/// reduce to popcounts; unused high bits of the last block are always zero.
class Mark {
public:
  Mark() = default;
  explicit Mark(std::size_t size) : size_(size), blocks_((size + 63) / 64, 0) {}

  static Mark from_bits(std::span<const std::uint8_t> bits) {
    Mark m(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (bits[i]) m.set(i);
    return m;
  }

  std::size_t size() const noexcept { return size_; }

  bool test(std::size_t i) const noexcept {
    return (blocks_[i / 64] >> (i % 64)) & 1u;
  }

  void set(std::size_t i, bool on = true) noexcept {
    const std::uint64_t bit = std::uint64_t{1} << (i % 64);
    if (on)
      blocks_[i / 64] |= bit;
    else
      blocks_[i / 64] &= ~bit;
  }

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto b : blocks_) n += static_cast<std::size_t>(std::popcount(b));
    return n;
  }

  bool none() const noexcept { return count() == 0; }

  std::span<const std::uint64_t> blocks() const noexcept { return blocks_; }

  std::vector<std::uint8_t> to_bits() const {
    std::vector<std::uint8_t> out(size_);
    for (std::size_t i = 0; i < size_; ++i) out[i] = test(i) ? 1 : 0;
    return out;
  }

  friend bool operator==(const Mark&, const Mark&) = default;

private:
  std::size_t size_ = 0;
  std::vector<std::uint64_t> blocks_;
};

}  // namespace hbtm
