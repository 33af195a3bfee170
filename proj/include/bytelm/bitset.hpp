#pragma once

#include <bit>
#include <cstdint>
#include <cstddef>
#include <vector>

namespace bytelm {

// Fixed-size dynamic bitset sized to a vocabulary.
class Bitset {
 public:
  Bitset() = default;
  explicit Bitset(size_t n, bool value = false)
      : n_(n), w_((n + 63) / 64, value ? ~0ull : 0ull) {
    trim();
  }

  size_t size() const { return n_; }
  bool test(size_t i) const { return (w_[i >> 6] >> (i & 63)) & 1; }
  void set(size_t i) { w_[i >> 6] |= 1ull << (i & 63); }
  void reset(size_t i) { w_[i >> 6] &= ~(1ull << (i & 63)); }

  Bitset& operator&=(const Bitset& o) {
    for (size_t i = 0; i < w_.size(); ++i) w_[i] &= o.w_[i];
    return *this;
  }
  Bitset& operator|=(const Bitset& o) {
    for (size_t i = 0; i < w_.size(); ++i) w_[i] |= o.w_[i];
    return *this;
  }

  size_t count() const {
    size_t c = 0;
    for (uint64_t w : w_) c += static_cast<size_t>(std::popcount(w));
    return c;
  }
  bool any() const {
    for (uint64_t w : w_) {
      if (w) return true;
    }
    return false;
  }

  template <typename F>
  void for_each_set(F&& f) const {
    for (size_t wi = 0; wi < w_.size(); ++wi) {
      uint64_t w = w_[wi];
      while (w) {
        unsigned b = static_cast<unsigned>(std::countr_zero(w));
        f((wi << 6) + b);
        w &= w - 1;
      }
    }
  }

  bool operator==(const Bitset&) const = default;

 private:
  void trim() {
    if (n_ & 63) w_.back() &= (1ull << (n_ & 63)) - 1;
  }
  size_t n_ = 0;
  std::vector<uint64_t> w_;
};

}  // namespace bytelm
