#pragma once

#include <cstdint>
#include <vector>

#include "polaris/common.hpp"
#include "polaris/sobol_directions.hpp"

namespace polaris {

// Unscrambled Sobol sequence (Joe-Kuo direction numbers, Gray-code order).
// Point 0 is the origin; values are multiples of 2^-30.
class SobolSequence {
 public:
  static constexpr int kBits = 30;

  explicit SobolSequence(int dim) : dim_(dim), x_(dim, 0) {
    check_arg(dim >= 1 && dim <= detail::kSobolMaxDim,
              "SobolSequence: dim must be in [1, " + std::to_string(detail::kSobolMaxDim) + "]");
    v_.assign(static_cast<std::size_t>(dim) * kBits, 0);
    for (int d = 0; d < dim_; ++d) init_dimension(d);
  }

  int dim() const { return dim_; }

  // Next point in sequence order. The first call returns the origin.
  std::vector<double> next() {
    std::vector<double> out(dim_);
    next_into(out.data());
    return out;
  }

  void next_into(double* out) {
    if (index_ > 0) {
      const int c = lowest_zero_bit(index_ - 1);
      check(c < kBits, "SobolSequence: sequence exhausted (2^30 points)");
      for (int d = 0; d < dim_; ++d) x_[d] ^= v_[static_cast<std::size_t>(d) * kBits + c];
    }
    for (int d = 0; d < dim_; ++d) out[d] = static_cast<double>(x_[d]) * 0x1.0p-30;
    ++index_;
  }

  // Position the stream so the next call returns point n. O(kBits) via the
  // direct Gray-code form X_k = xor over set bits b of k^(k>>1) of v_b.
  void seek(std::uint64_t n) {
    check_arg(n < (1ull << kBits), "SobolSequence: seek past 2^30 points");
    std::fill(x_.begin(), x_.end(), 0u);
    if (n > 0) {
      const std::uint64_t gray = (n - 1) ^ ((n - 1) >> 1);
      for (int b = 0; b < kBits; ++b)
        if ((gray >> b) & 1u)
          for (int d = 0; d < dim_; ++d) x_[d] ^= v_[static_cast<std::size_t>(d) * kBits + b];
    }
    index_ = n;
  }

  void skip(std::uint64_t n) { seek(index_ + n); }

 private:
  static int lowest_zero_bit(std::uint64_t n) {
    int c = 0;
    while (n & 1) {
      n >>= 1;
      ++c;
    }
    return c;
  }

  void init_dimension(int d) {
    std::uint32_t* v = &v_[static_cast<std::size_t>(d) * kBits];
    std::uint32_t m[kBits];
    const int s = detail::kSobolDegree[d];
    if (s == 0) {
      // First dimension: van der Corput in base 2, every m_k = 1.
      for (int k = 0; k < kBits; ++k) m[k] = 1;
    } else {
      const std::uint32_t poly = detail::kSobolPoly[d];
      for (int k = 0; k < s; ++k) m[k] = detail::kSobolMinit[d][k];
      for (int k = s; k < kBits; ++k) {
        // m_k = 2 a_1 m_{k-1} ^ ... ^ 2^{s-1} a_{s-1} m_{k-s+1} ^ 2^s m_{k-s} ^ m_{k-s}
        std::uint32_t mk = m[k - s] ^ (m[k - s] << s);
        for (int i = 1; i < s; ++i) {
          const std::uint32_t a_i = (poly >> (s - i)) & 1u;
          if (a_i) mk ^= m[k - i] << i;
        }
        m[k] = mk;
      }
    }
    for (int k = 0; k < kBits; ++k) v[k] = m[k] << (kBits - 1 - k);
  }

  int dim_;
  std::uint64_t index_ = 0;
  std::vector<std::uint32_t> x_;
  std::vector<std::uint32_t> v_;
};

inline std::vector<std::vector<double>> sobol_sequence(int dim, std::size_t n) {
  SobolSequence seq(dim);
  std::vector<std::vector<double>> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pts.push_back(seq.next());
  return pts;
}

}  // namespace polaris
