#pragma once

#include <bit>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mergemix {

/// Binary dataset-selection vector. Bit i of the mask selects dataset i
/// (0-based); the text form lists dataset 0 leftmost, e.g. "10110".
class MixtureVector {
 public:
  static constexpr int kMaxSize = 64;

  MixtureVector() = default;
  MixtureVector(int size, std::uint64_t mask);

  static MixtureVector parse(std::string_view bits);
  static MixtureVector all(int size);
  static MixtureVector single(int size, int index);

  int size() const { return size_; }
  std::uint64_t mask() const { return mask_; }
  bool test(int i) const { return (mask_ >> i) & 1u; }
  int count() const { return std::popcount(mask_); }
  bool empty() const { return mask_ == 0; }
  std::vector<int> indices() const;

  MixtureVector flipped(int i) const { return {size_, mask_ ^ (std::uint64_t{1} << i)}; }

  std::string str() const;

  friend bool operator==(const MixtureVector&, const MixtureVector&) = default;

 private:
  int size_ = 0;
  std::uint64_t mask_ = 0;
};

/// Tie-break preference: fewer selected datasets first, then the
/// lexicographically smaller bit string. Returns true when a is preferred.
bool tie_break_less(const MixtureVector& a, const MixtureVector& b);

/// Lexicographic comparison of the bit strings.
std::strong_ordering compare_bits(const MixtureVector& a, const MixtureVector& b);

/// Strict ordering usable as a std::map comparator (text order).
struct MixtureLess {
  bool operator()(const MixtureVector& a, const MixtureVector& b) const {
    if (a.size() != b.size()) return a.size() < b.size();
    return compare_bits(a, b) == std::strong_ordering::less;
  }
};

}  // namespace mergemix
