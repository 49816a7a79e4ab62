#pragma once

#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddl {

inline constexpr std::size_t kMaxDim = 64;

/// Fixed-width set over {0, ..., 63}. The tag keeps latent-index sets and
/// observed-variable sets from being mixed up.
template <class Tag>
class BitSet64 {
 public:
  constexpr BitSet64() = default;

  constexpr BitSet64(std::initializer_list<std::size_t> members) {
    for (auto m : members) insert(m);
  }

  static constexpr BitSet64 from_bits(std::uint64_t bits) {
    BitSet64 s;
    s.bits_ = bits;
    return s;
  }

  static BitSet64 from_members(const std::vector<std::size_t>& members) {
    BitSet64 s;
    for (auto m : members) s.insert(m);
    return s;
  }

  /// {0, ..., n-1}
  static constexpr BitSet64 full(std::size_t n) {
    if (n > kMaxDim) throw std::invalid_argument("BitSet64::full: n exceeds 64");
    return from_bits(n == kMaxDim ? ~std::uint64_t{0} : ((std::uint64_t{1} << n) - 1));
  }

  constexpr void insert(std::size_t i) {
    if (i >= kMaxDim) throw std::out_of_range("BitSet64: index " + std::to_string(i) + " >= 64");
    bits_ |= std::uint64_t{1} << i;
  }
  constexpr void erase(std::size_t i) {
    if (i < kMaxDim) bits_ &= ~(std::uint64_t{1} << i);
  }

  constexpr bool contains(std::size_t i) const {
    return i < kMaxDim && ((bits_ >> i) & 1U) != 0;
  }
  constexpr std::size_t size() const { return static_cast<std::size_t>(std::popcount(bits_)); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint64_t bits() const { return bits_; }

  /// Highest member + 1, or 0 when empty.
  constexpr std::size_t extent() const {
    return bits_ == 0 ? 0 : kMaxDim - static_cast<std::size_t>(std::countl_zero(bits_));
  }

  constexpr bool is_subset_of(const BitSet64& other) const { return (bits_ & ~other.bits_) == 0; }

  /// Members in increasing order.
  std::vector<std::size_t> members() const {
    std::vector<std::size_t> out;
    out.reserve(size());
    for (std::uint64_t b = bits_; b != 0; b &= b - 1) {
      out.push_back(static_cast<std::size_t>(std::countr_zero(b)));
    }
    return out;
  }

  /// Smallest member; undefined for an empty set.
  constexpr std::size_t front() const { return static_cast<std::size_t>(std::countr_zero(bits_)); }

  friend constexpr BitSet64 operator|(BitSet64 a, BitSet64 b) { return from_bits(a.bits_ | b.bits_); }
  friend constexpr BitSet64 operator&(BitSet64 a, BitSet64 b) { return from_bits(a.bits_ & b.bits_); }
  friend constexpr BitSet64 operator-(BitSet64 a, BitSet64 b) { return from_bits(a.bits_ & ~b.bits_); }
  friend constexpr BitSet64 operator^(BitSet64 a, BitSet64 b) { return from_bits(a.bits_ ^ b.bits_); }
  constexpr BitSet64& operator|=(BitSet64 o) { bits_ |= o.bits_; return *this; }
  constexpr BitSet64& operator&=(BitSet64 o) { bits_ &= o.bits_; return *this; }

  friend constexpr bool operator==(BitSet64, BitSet64) = default;
  friend constexpr auto operator<=>(BitSet64 a, BitSet64 b) { return a.bits_ <=> b.bits_; }

 private:
  std::uint64_t bits_{0};
};

/// Sorted-member lexicographic order, used for deterministic tie-breaking.
template <class Tag>
bool lex_less(const BitSet64<Tag>& a, const BitSet64<Tag>& b) {
  const auto ma = a.members();
  const auto mb = b.members();
  return ma < mb;
}

template <class Tag>
std::string to_string(const BitSet64<Tag>& s) {
  std::string out = "{";
  bool first = true;
  for (auto m : s.members()) {
    if (!first) out += ",";
    out += std::to_string(m);
    first = false;
  }
  return out + "}";
}

struct LatentTag;
struct ObservedTag;

/// Set of latent indices (0-based).
using IndexSet = BitSet64<LatentTag>;
/// Set of observed-variable indices (0-based).
using ObsSet = BitSet64<ObservedTag>;

}  // namespace ddl
