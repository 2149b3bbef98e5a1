#pragma once

// Square Gray-coded QAM. The bit <-> symbol table is frozen:
//   * a symbol of order M carries log2(M) bits; the first half selects the
//     in-phase level, the second half the quadrature level,
//   * per axis, the bit group is a binary-reflected Gray label; label 0...0
//     maps to the most positive level, so the all-zero pattern lands in the
//     first quadrant,
//   * levels are the odd integers {±1, ±3, ...} scaled so the mean symbol
//     energy equals symbol_energy exactly.
// Constellation point index = i_level_index * L + q_level_index.

#include <cmath>
#include <complex>
#include <cstdint>
#include <ostream>
#include <vector>

#include "tpemimo/errors.hpp"
#include "tpemimo/model.hpp"

namespace tpemimo {

inline int gray_encode(int v) { return v ^ (v >> 1); }

inline int gray_decode(int g) {
  int v = 0;
  for (; g; g >>= 1) v ^= g;
  return v;
}

struct Constellation {
  int order = 0;           // 4, 16, or 64
  int bits_per_symbol = 0; // log2(order)
  double symbol_energy = 1.0;
  std::vector<double> levels;       // per-axis, descending from most positive
  std::vector<int> axis_gray;       // gray label of levels[i]
  std::vector<std::complex<double>> points;  // indexed i_idx * L + q_idx

  int levels_per_axis() const { return static_cast<int>(levels.size()); }

  // bits (MSB-first within each axis group) -> complex point
  std::complex<double> map_bits(const std::uint8_t* bits) const {
    const int half = bits_per_symbol / 2;
    int gi = 0, gq = 0;
    for (int b = 0; b < half; ++b) gi = (gi << 1) | (bits[b] & 1);
    for (int b = 0; b < half; ++b) gq = (gq << 1) | (bits[half + b] & 1);
    return {levels[gray_decode(gi)], levels[gray_decode(gq)]};
  }

  void bits_of_point(int point_index, std::uint8_t* bits_out) const {
    const int l = levels_per_axis();
    const int half = bits_per_symbol / 2;
    const int gi = axis_gray[point_index / l];
    const int gq = axis_gray[point_index % l];
    for (int b = 0; b < half; ++b) bits_out[b] = (gi >> (half - 1 - b)) & 1;
    for (int b = 0; b < half; ++b) bits_out[half + b] = (gq >> (half - 1 - b)) & 1;
  }

  // nearest point, ties toward the smaller point index
  int nearest_point(std::complex<double> z) const {
    int best = 0;
    double best_d2 = std::norm(z - points[0]);
    for (int p = 1; p < static_cast<int>(points.size()); ++p) {
      const double d2 = std::norm(z - points[p]);
      if (d2 < best_d2) {
        best_d2 = d2;
        best = p;
      }
    }
    return best;
  }
};

inline Constellation make_qam(int order, double symbol_energy = 1.0) {
  if (order != 4 && order != 16 && order != 64)
    throw ValidationError("make_qam: order must be 4, 16, or 64");
  if (symbol_energy <= 0.0) throw ValidationError("make_qam: Ex must be > 0");

  Constellation c;
  c.order = order;
  c.bits_per_symbol = static_cast<int>(std::lround(std::log2(order)));
  c.symbol_energy = symbol_energy;

  const int l = static_cast<int>(std::lround(std::sqrt(order)));
  // mean energy of {±1, ±3, ..., ±(l-1)} on both axes is 2(M-1)/3
  const double scale = std::sqrt(3.0 * symbol_energy / (2.0 * (order - 1)));
  c.levels.resize(l);
  c.axis_gray.resize(l);
  for (int i = 0; i < l; ++i) {
    c.levels[i] = scale * static_cast<double>(l - 1 - 2 * i);
    c.axis_gray[i] = gray_encode(i);
  }
  c.points.resize(order);
  for (int i = 0; i < l; ++i)
    for (int q = 0; q < l; ++q) c.points[i * l + q] = {c.levels[i], c.levels[q]};
  return c;
}

// bits.size() must equal K * bits_per_symbol; returns K complex symbols
inline VectorXcd modulate(const std::vector<std::uint8_t>& bits,
                          const Constellation& c, int k_users) {
  if (static_cast<int>(bits.size()) != k_users * c.bits_per_symbol)
    throw ValidationError("modulate: bit vector length mismatch");
  VectorXcd x(k_users);
  for (int u = 0; u < k_users; ++u)
    x(u) = c.map_bits(bits.data() + static_cast<std::size_t>(u) * c.bits_per_symbol);
  return x;
}

// hard decision on the recombined complex estimate, per user
inline std::vector<std::uint8_t> demodulate(const VectorXd& xhat_real,
                                            const Constellation& c) {
  const int k = static_cast<int>(xhat_real.size() / 2);
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(k) * c.bits_per_symbol);
  for (int u = 0; u < k; ++u) {
    const std::complex<double> z(xhat_real(u), xhat_real(u + k));
    const int p = c.nearest_point(z);
    c.bits_of_point(p, bits.data() + static_cast<std::size_t>(u) * c.bits_per_symbol);
  }
  return bits;
}

// audit table: point index, bits, I, Q
inline void export_constellation_csv(const Constellation& c, std::ostream& os) {
  os << "point_index,bits,i,q\n";
  std::vector<std::uint8_t> bits(c.bits_per_symbol);
  char buf[64];
  for (int p = 0; p < static_cast<int>(c.points.size()); ++p) {
    c.bits_of_point(p, bits.data());
    os << p << ',';
    for (int b = 0; b < c.bits_per_symbol; ++b) os << static_cast<int>(bits[b]);
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g\n", c.points[p].real(),
                  c.points[p].imag());
    os << buf;
  }
}

}  // namespace tpemimo
