#pragma once

// Static Elias-Fano set over a strictly increasing sequence of m integers
// below 2^n. Each element splits into q = floor(log2 m) high bits and n - q
// low bits. Low parts are packed verbatim into L; element k sets bit
// k + high_k of the bit vector H, which has m + 2^q bits. Lookups scan H
// with 64-bit popcounts; there is no auxiliary rank/select directory.

#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "agesolver/error.hpp"

namespace agesolver {

class EliasFanoSet {
 public:
  EliasFanoSet() = default;

  /// Builds with n = bit length of the largest element and q = floor(log2 m).
  static EliasFanoSet build(std::span<const std::uint64_t> sorted) {
    const std::uint64_t max = sorted.empty() ? 0 : sorted.back();
    const int n = std::bit_width(max);
    const int q = sorted.empty() ? 0 : std::bit_width(sorted.size()) - 1;
    return build(sorted, n, q);
  }

  /// Builds with explicit universe width n and high width q (q <= n).
  static EliasFanoSet build(std::span<const std::uint64_t> sorted, int n, int q) {
    if (n < 0 || n > 64 || q < 0 || q > n || q > 40)
      throw EncodingError("invalid Elias-Fano widths n=" + std::to_string(n) +
                          " q=" + std::to_string(q));
    EliasFanoSet s;
    s.m_ = sorted.size();
    s.n_ = n;
    s.q_ = q;
    s.h_bits_ = s.m_ + (std::uint64_t{1} << q);
    s.high_.assign(high_words_for(s.h_bits_), 0);
    s.low_.assign(low_words_for(s.m_, s.low_width()), 0);
    for (std::size_t k = 0; k < sorted.size(); ++k) {
      const std::uint64_t u = sorted[k];
      if (k > 0 && u <= sorted[k - 1])
        throw EncodingError("Elias-Fano input is not strictly increasing at index " +
                            std::to_string(k));
      if (n < 64 && (u >> n) != 0)
        throw EncodingError("element " + std::to_string(u) + " does not fit in " +
                            std::to_string(n) + " bits");
      const std::uint64_t h = s.high_part(u);
      const std::uint64_t pos = k + h;
      s.high_[pos / 64] |= std::uint64_t{1} << (pos % 64);
      s.set_low(k, s.low_part(u));
    }
    return s;
  }

  /// Reassembles a set from stored words; checks the word counts and popcount.
  static EliasFanoSet from_words(std::uint64_t m, int n, int q, std::vector<std::uint64_t> high,
                                 std::vector<std::uint64_t> low) {
    EliasFanoSet s;
    s.m_ = m;
    s.n_ = n;
    s.q_ = q;
    if (n < 0 || n > 64 || q < 0 || q > n || q > 40)
      throw IntegrityError("invalid Elias-Fano widths in stored set");
    s.h_bits_ = m + (std::uint64_t{1} << q);
    if (high.size() != high_words_for(s.h_bits_) || low.size() != low_words_for(m, s.low_width()))
      throw IntegrityError("Elias-Fano payload has the wrong length");
    s.high_ = std::move(high);
    s.low_ = std::move(low);
    std::uint64_t ones = 0;
    for (auto w : s.high_) ones += std::uint64_t(std::popcount(w));
    if (ones != m) throw IntegrityError("Elias-Fano high bits do not contain m ones");
    return s;
  }

  std::size_t size() const { return m_; }
  bool empty() const { return m_ == 0; }
  int universe_bits() const { return n_; }
  int high_width() const { return q_; }
  int low_width() const { return n_ - q_; }
  /// Logical length of H in bits (m + 2^q).
  std::uint64_t high_bit_length() const { return h_bits_; }
  std::span<const std::uint64_t> high_words() const { return high_; }
  std::span<const std::uint64_t> low_words() const { return low_; }
  std::uint64_t byte_size() const { return 8 * (high_.size() + low_.size()); }

  /// Rank of u among the elements, or nullopt when u is not a member.
  std::optional<std::size_t> rank(std::uint64_t u) const {
    if (m_ == 0 || (n_ < 64 && (u >> n_) != 0)) return std::nullopt;
    const std::uint64_t uh = high_part(u);
    const std::uint64_t ul = low_part(u);
    // Block uh starts right after the uh-th zero of H.
    std::uint64_t pos = 0;
    if (uh > 0) {
      const auto z = select0(uh - 1);
      if (!z) return std::nullopt;
      pos = *z + 1;
    }
    std::uint64_t k = pos - uh;  // ones before pos
    for (; pos < h_bits_ && bit(pos); ++pos, ++k) {
      const std::uint64_t l = low(k);
      if (l == ul) return std::size_t(k);
      if (l > ul) return std::nullopt;
    }
    return std::nullopt;
  }

  bool contains(std::uint64_t u) const { return rank(u).has_value(); }

  /// The k-th smallest element.
  std::uint64_t get(std::size_t k) const {
    if (k >= m_)
      throw std::out_of_range("Elias-Fano rank " + std::to_string(k) + " >= " +
                              std::to_string(m_));
    const std::uint64_t pos = select1(k);
    return combine(pos - k, low(k));
  }

  /// Calls fn(element) for every element in increasing order.
  template <class Fn>
  void for_each(Fn&& fn) const {
    std::uint64_t k = 0;
    for (std::size_t w = 0; w < high_.size() && k < m_; ++w) {
      std::uint64_t word = high_[w];
      while (word != 0 && k < m_) {
        const std::uint64_t pos = w * 64 + std::uint64_t(std::countr_zero(word));
        fn(combine(pos - k, low(k)));
        ++k;
        word &= word - 1;
      }
    }
  }

  std::vector<std::uint64_t> decode() const {
    std::vector<std::uint64_t> out;
    out.reserve(m_);
    for_each([&](std::uint64_t u) { out.push_back(u); });
    return out;
  }

  bool operator==(const EliasFanoSet&) const = default;

 private:
  // Rounded up to whole words plus one zero sentinel word.
  static std::size_t high_words_for(std::uint64_t bits) { return std::size_t((bits + 63) / 64 + 1); }

  static std::size_t low_words_for(std::uint64_t m, int width) {
    return std::size_t((m * std::uint64_t(width) + 63) / 64);
  }

  std::uint64_t high_part(std::uint64_t u) const {
    const int w = low_width();
    return w >= 64 ? 0 : u >> w;
  }
  std::uint64_t low_part(std::uint64_t u) const {
    const int w = low_width();
    return w >= 64 ? u : u & ((std::uint64_t{1} << w) - 1);
  }
  std::uint64_t combine(std::uint64_t h, std::uint64_t l) const {
    const int w = low_width();
    return w >= 64 ? l : (h << w) | l;
  }

  bool bit(std::uint64_t pos) const { return (high_[pos / 64] >> (pos % 64)) & 1u; }

  std::uint64_t low(std::uint64_t k) const {
    const int w = low_width();
    if (w == 0) return 0;
    const std::uint64_t off = k * std::uint64_t(w);
    const std::size_t word = std::size_t(off / 64);
    const int shift = int(off % 64);
    std::uint64_t v = low_[word] >> shift;
    if (shift + w > 64) v |= low_[word + 1] << (64 - shift);
    return w == 64 ? v : v & ((std::uint64_t{1} << w) - 1);
  }

  void set_low(std::uint64_t k, std::uint64_t value) {
    const int w = low_width();
    if (w == 0) return;
    const std::uint64_t off = k * std::uint64_t(w);
    const std::size_t word = std::size_t(off / 64);
    const int shift = int(off % 64);
    low_[word] |= value << shift;
    if (shift + w > 64) low_[word + 1] |= value >> (64 - shift);
  }

  // Position of the j-th one (0-based).
  std::uint64_t select1(std::uint64_t j) const {
    for (std::size_t w = 0; w < high_.size(); ++w) {
      const auto c = std::uint64_t(std::popcount(high_[w]));
      if (j < c) return w * 64 + select_in_word(high_[w], unsigned(j));
      j -= c;
    }
    throw IntegrityError("Elias-Fano select past the end of H");
  }

  // Position of the j-th zero (0-based) within the logical length of H.
  std::optional<std::uint64_t> select0(std::uint64_t j) const {
    const std::size_t words = std::size_t((h_bits_ + 63) / 64);
    for (std::size_t w = 0; w < words; ++w) {
      const std::uint64_t inv = ~high_[w];
      const auto c = std::uint64_t(std::popcount(inv));
      if (j < c) {
        const std::uint64_t pos = w * 64 + select_in_word(inv, unsigned(j));
        if (pos >= h_bits_) return std::nullopt;
        return pos;
      }
      j -= c;
    }
    return std::nullopt;
  }

  static unsigned select_in_word(std::uint64_t word, unsigned j) {
    for (unsigned i = 0; i < j; ++i) word &= word - 1;
    return unsigned(std::countr_zero(word));
  }

  std::uint64_t m_ = 0;
  int n_ = 0;
  int q_ = 0;
  std::uint64_t h_bits_ = 1;
  std::vector<std::uint64_t> high_{0, 0};
  std::vector<std::uint64_t> low_;
};

}  // namespace agesolver
