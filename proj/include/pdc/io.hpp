// File formats: CSV tables with shortest round-trip numbers, and the portable
// little-endian binary dumps for channels ("PDCH") and sketch windows ("PDCS").
#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "pdc/channel_sim.hpp"
#include "pdc/clustering.hpp"
#include "pdc/sparse_psf.hpp"
#include "pdc/system_sim.hpp"

namespace pdc::io {

inline constexpr std::uint32_t kFormatVersion = 1;

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return {buf.data(), res.ptr};
}

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw config_error("truncated binary file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw config_error("truncated binary file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

inline void expect_magic(std::istream& is, const char* magic) {
  char m[4];
  if (!is.read(m, 4) || std::memcmp(m, magic, 4) != 0)
    throw config_error(std::string("bad magic, expected ") + std::string(magic, 4));
  const auto version = get_u32(is);
  if (version != kFormatVersion) throw config_error("unsupported format version " + std::to_string(version));
}

}  // namespace detail

/// Channel dump: "PDCH", version, M, N, count, then count M x N matrices as
/// (re, im) float64 pairs in column-major order.
inline void write_channels(std::ostream& os, const std::vector<CMat>& channels) {
  const long m = channels.empty() ? 0 : channels.front().rows();
  const long n = channels.empty() ? 0 : channels.front().cols();
  os.write("PDCH", 4);
  detail::put_u32(os, kFormatVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(m));
  detail::put_u32(os, static_cast<std::uint32_t>(n));
  detail::put_u32(os, static_cast<std::uint32_t>(channels.size()));
  for (const auto& h : channels) {
    if (h.rows() != m || h.cols() != n) throw shape_error("write_channels: inconsistent matrix sizes");
    for (long k = 0; k < h.size(); ++k) {
      detail::put_f64(os, h.data()[k].real());
      detail::put_f64(os, h.data()[k].imag());
    }
  }
}

inline std::vector<CMat> read_channels(std::istream& is) {
  detail::expect_magic(is, "PDCH");
  const auto m = detail::get_u32(is);
  const auto n = detail::get_u32(is);
  const auto count = detail::get_u32(is);
  std::vector<CMat> out;
  for (std::uint32_t c = 0; c < count; ++c) {
    CMat h(m, n);
    for (long k = 0; k < h.size(); ++k) {
      const double re = detail::get_f64(is);
      h.data()[k] = {re, detail::get_f64(is)};
    }
    out.push_back(std::move(h));
  }
  return out;
}

/// A recorded sketch window together with the array size it was taken on.
struct SketchFile {
  int num_antennas = 0;
  int num_subcarriers = 0;
  SketchWindow window;
};

/// Sketch dump: "PDCS", version, M, N, w, m, n, then per column the m antenna
/// indices and n subcarrier indices (u32) followed by the m n samples in
/// sketch order as (re, im) float64 pairs.
inline void write_sketches(std::ostream& os, const SketchFile& f) {
  const auto& win = f.window;
  if (win.patterns.size() != static_cast<std::size_t>(win.data.cols()))
    throw shape_error("write_sketches: one pattern per column is required");
  const int m = win.patterns.empty() ? 0 : win.patterns.front().m();
  const int n = win.patterns.empty() ? 0 : win.patterns.front().n();
  os.write("PDCS", 4);
  detail::put_u32(os, kFormatVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(f.num_antennas));
  detail::put_u32(os, static_cast<std::uint32_t>(f.num_subcarriers));
  detail::put_u32(os, static_cast<std::uint32_t>(win.data.cols()));
  detail::put_u32(os, static_cast<std::uint32_t>(m));
  detail::put_u32(os, static_cast<std::uint32_t>(n));
  for (long c = 0; c < win.data.cols(); ++c) {
    const auto& p = win.patterns[c];
    if (p.m() != m || p.n() != n) throw shape_error("write_sketches: inconsistent pattern sizes");
    for (int a : p.antenna_indices) detail::put_u32(os, static_cast<std::uint32_t>(a));
    for (int s : p.subcarrier_indices) detail::put_u32(os, static_cast<std::uint32_t>(s));
    for (long r = 0; r < win.data.rows(); ++r) {
      detail::put_f64(os, win.data(r, c).real());
      detail::put_f64(os, win.data(r, c).imag());
    }
  }
}

inline SketchFile read_sketches(std::istream& is) {
  detail::expect_magic(is, "PDCS");
  SketchFile f;
  f.num_antennas = static_cast<int>(detail::get_u32(is));
  f.num_subcarriers = static_cast<int>(detail::get_u32(is));
  const auto w = detail::get_u32(is);
  const auto m = detail::get_u32(is);
  const auto n = detail::get_u32(is);
  if (w == 0 || m == 0 || n == 0) throw config_error("sketch file holds no samples");
  if (f.num_antennas <= 0 || f.num_subcarriers <= 0) throw config_error("sketch file has an empty array size");
  f.window.data.resize(static_cast<long>(m) * n, w);
  for (std::uint32_t c = 0; c < w; ++c) {
    SamplingPattern p;
    p.slot = c;
    for (std::uint32_t i = 0; i < m; ++i) p.antenna_indices.push_back(static_cast<int>(detail::get_u32(is)));
    for (std::uint32_t i = 0; i < n; ++i) p.subcarrier_indices.push_back(static_cast<int>(detail::get_u32(is)));
    try {
      p.validate(f.num_antennas, f.num_subcarriers);
    } catch (const shape_error& e) {
      throw config_error(std::string("sketch file: ") + e.what());
    }
    for (long r = 0; r < f.window.data.rows(); ++r) {
      const double re = detail::get_f64(is);
      f.window.data(r, c) = {re, detail::get_f64(is)};
    }
    f.window.patterns.push_back(std::move(p));
  }
  return f;
}

inline void write_psf_csv(std::ostream& os, const Psf& psf, const AngleDelayGrid& grid) {
  os << "angle_index,delay_index,theta_rad,tau_s,weight\n";
  for (int j = 0; j < psf.delay_size; ++j)
    for (int i = 0; i < psf.angle_size; ++i)
      os << i << ',' << j << ',' << format_double(grid.angle_points()[i]) << ',' << format_double(grid.delay_points()[j])
         << ',' << format_double(psf(i, j)) << '\n';
}

/// Objective trace with the bound f(W_last) + 4β‖W_last‖² / (k + 1)², the
/// last iterate standing in for the minimizer.
inline void write_trace_csv(std::ostream& os, const PsfSolution& sol) {
  os << "iteration,objective,bound\n";
  const double f_ref = sol.objective.back();
  const double ref_sq = sol.coefficients.squaredNorm();
  for (std::size_t k = 0; k < sol.objective.size(); ++k) {
    os << k << ',' << format_double(sol.objective[k]) << ',';
    if (k == 0) os << "inf";
    else os << format_double(convergence_bound(f_ref, sol.beta, ref_sq, static_cast<int>(k) - 1));
    os << '\n';
  }
}

inline void write_mask_csv(std::ostream& os, const MaskPair& masks) {
  os << "angle_index,delay_index,label\n";
  for (long j = 0; j < masks.signal.cols(); ++j)
    for (long i = 0; i < masks.signal.rows(); ++i) {
      const char* label = masks.signal(i, j) ? "signal" : masks.interference(i, j) ? "interference" : "none";
      os << i << ',' << j << ',' << label << '\n';
    }
}

inline void write_cdf_csv(std::ostream& os, const CdfTable& cdf) {
  os << "rate_bits_s_hz,cdf_contaminated,cdf_decontaminated\n";
  for (std::size_t i = 0; i < cdf.rate.size(); ++i)
    os << format_double(cdf.rate[i]) << ',' << format_double(cdf.contaminated[i]) << ','
       << format_double(cdf.decontaminated[i]) << '\n';
}

}  // namespace pdc::io
