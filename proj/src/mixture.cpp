#include "mergemix/mixture.hpp"

#include "mergemix/error.hpp"

namespace mergemix {

MixtureVector::MixtureVector(int size, std::uint64_t mask) : size_(size), mask_(mask) {
  require(size >= 1 && size <= kMaxSize, "mixture length must be in [1, 64]");
  require(size == kMaxSize || (mask >> size) == 0, "mixture mask has bits beyond its length");
}

MixtureVector MixtureVector::parse(std::string_view bits) {
  require(!bits.empty() && bits.size() <= kMaxSize, "invalid mixture bit string length");
  std::uint64_t mask = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    require(bits[i] == '0' || bits[i] == '1',
            "invalid mixture bit string \"" + std::string(bits) + "\"");
    if (bits[i] == '1') mask |= std::uint64_t{1} << i;
  }
  return {static_cast<int>(bits.size()), mask};
}

MixtureVector MixtureVector::all(int size) {
  require(size >= 1 && size <= kMaxSize, "mixture length must be in [1, 64]");
  return {size, size == kMaxSize ? ~std::uint64_t{0} : (std::uint64_t{1} << size) - 1};
}

MixtureVector MixtureVector::single(int size, int index) {
  require(index >= 0 && index < size, "dataset index out of range");
  return {size, std::uint64_t{1} << index};
}

std::vector<int> MixtureVector::indices() const {
  std::vector<int> out;
  for (int i = 0; i < size_; ++i)
    if (test(i)) out.push_back(i);
  return out;
}

std::string MixtureVector::str() const {
  std::string s(size_, '0');
  for (int i = 0; i < size_; ++i)
    if (test(i)) s[i] = '1';
  return s;
}

std::strong_ordering compare_bits(const MixtureVector& a, const MixtureVector& b) {
  const int n = std::min(a.size(), b.size());
  for (int i = 0; i < n; ++i) {
    if (a.test(i) != b.test(i)) return a.test(i) ? std::strong_ordering::greater : std::strong_ordering::less;
  }
  return a.size() <=> b.size();
}

bool tie_break_less(const MixtureVector& a, const MixtureVector& b) {
  if (a.count() != b.count()) return a.count() < b.count();
  return compare_bits(a, b) == std::strong_ordering::less;
}

}  // namespace mergemix
