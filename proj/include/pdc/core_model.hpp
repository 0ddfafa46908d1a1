// Array/OFDM configuration, the quantized angle-delay grid, steering vectors
// and the grid dictionary with its FFT realization.
//
// Conventions shared by every module:
//  * Space-frequency matrices are M x N (antennas x subcarriers) and are
//    vectorized column-major, antenna index fastest: flat = k + M * w.
//  * Grid coefficients are Gθ x Gτ arrays, vectorized the same way:
//    l = i + Gθ * j with i the angle index and j the delay index.
//  * All indices are zero-based.
#pragma once

#include <cstdint>
#include <vector>

#include "pdc/fft.hpp"
#include "pdc/types.hpp"

namespace pdc {

struct ArrayConfig {
  int num_antennas = 32;
  double max_aoa = kPi / 3.0;  ///< θ_max [rad]

  /// Element spacing over wavelength, d/λ = 1 / (2 sin θ_max).
  double spacing_ratio() const { return 0.5 / std::sin(max_aoa); }

  void validate() const {
    if (num_antennas < 1) throw domain_error("ArrayConfig: num_antennas must be >= 1");
    if (!(max_aoa > 0.0 && max_aoa <= kPi / 2.0 + 1e-15))
      throw domain_error("ArrayConfig: max_aoa must lie in (0, pi/2]");
  }
};

struct OfdmConfig {
  int num_subcarriers = 32;                  ///< N
  double subcarrier_spacing = 15e3;          ///< Δf [Hz]
  double max_delay = 10e-6;                  ///< Δτ_max [s]
  int coherence_block_subcarriers = 4;       ///< D^c_OFDM
  int symbols_per_slot = 7;                  ///< B
  double slot_duration = 0.532e-3;           ///< T_s [s]

  double useful_symbol_duration() const { return 1.0 / subcarrier_spacing; }  ///< T_u
  double bandwidth() const { return num_subcarriers * subcarrier_spacing; }  ///< W = N / T_u

  /// Number of delay taps of width 1/W needed to cover [0, Δτ_max).
  int delay_taps() const {
    return static_cast<int>(std::ceil(max_delay * bandwidth() - 1e-9));
  }

  void validate() const {
    if (num_subcarriers < 1) throw domain_error("OfdmConfig: num_subcarriers must be >= 1");
    if (!(subcarrier_spacing > 0.0)) throw domain_error("OfdmConfig: subcarrier_spacing must be > 0");
    if (!(max_delay > 0.0)) throw domain_error("OfdmConfig: max_delay must be > 0");
    if (max_delay * bandwidth() > num_subcarriers * (1.0 + 1e-12))
      throw domain_error("OfdmConfig: max_delay * bandwidth exceeds the number of subcarriers");
    if (coherence_block_subcarriers < 1 || num_subcarriers % coherence_block_subcarriers != 0)
      throw domain_error("OfdmConfig: coherence_block_subcarriers must divide num_subcarriers");
    if (symbols_per_slot < 1) throw domain_error("OfdmConfig: symbols_per_slot must be >= 1");
  }
};

inline bool is_power_of_two(long v) { return v > 0 && (v & (v - 1)) == 0; }

/// [a]_k = exp(j k π u) with u = sin θ / sin θ_max; no range check.
inline CVec array_kernel(int num_antennas, double u) {
  CVec a(num_antennas);
  for (int k = 0; k < num_antennas; ++k) a[k] = std::polar(1.0, kPi * k * u);
  return a;
}

/// [b]_ω = exp(j 2π W τ ω / N); no range check. Periodic in τ with period N / W.
inline CVec delay_kernel(int num_subcarriers, double bandwidth, double tau) {
  CVec b(num_subcarriers);
  const double step = 2.0 * kPi * bandwidth * tau / num_subcarriers;
  for (int w = 0; w < num_subcarriers; ++w) b[w] = std::polar(1.0, step * w);
  return b;
}

/// ULA response a(θ), length M.
inline CVec array_response(const ArrayConfig& cfg, double theta) {
  if (!(std::abs(theta) <= cfg.max_aoa * (1.0 + 1e-12)))
    throw domain_error("array_response: angle outside [-max_aoa, max_aoa]");
  return array_kernel(cfg.num_antennas, std::sin(theta) / std::sin(cfg.max_aoa));
}

/// Frequency response b(τ) of a unit delay, length N.
inline CVec delay_response(const OfdmConfig& cfg, double tau) {
  if (!(tau >= 0.0 && tau < cfg.max_delay))
    throw domain_error("delay_response: delay outside [0, max_delay)");
  return delay_kernel(cfg.num_subcarriers, cfg.bandwidth(), tau);
}

/// Uniform angle-delay grid. Angles are uniform in sin θ over
/// [-sin θ_max, sin θ_max); delays are uniform over one DFT period [0, N/W),
/// which contains the physical delay range [0, Δτ_max).
class AngleDelayGrid {
 public:
  AngleDelayGrid(const ArrayConfig& arr, const OfdmConfig& ofdm, int angle_oversampling = 2,
                 int delay_oversampling = 2)
      : num_antennas_(arr.num_antennas),
        num_subcarriers_(ofdm.num_subcarriers),
        angle_size_(arr.num_antennas * angle_oversampling),
        delay_size_(ofdm.num_subcarriers * delay_oversampling),
        max_aoa_(arr.max_aoa),
        bandwidth_(ofdm.bandwidth()) {
    arr.validate();
    if (angle_oversampling < 1 || delay_oversampling < 1)
      throw domain_error("AngleDelayGrid: oversampling factors must be >= 1");
    if (!is_power_of_two(angle_size_) || !is_power_of_two(delay_size_))
      throw domain_error("AngleDelayGrid: grid sizes must be powers of two");
    if (!(bandwidth_ > 0.0)) throw domain_error("AngleDelayGrid: bandwidth must be > 0");

    angle_points_.resize(angle_size_);
    for (int i = 0; i < angle_size_; ++i) angle_points_[i] = std::asin(spatial_frequency(i) * std::sin(max_aoa_));
    delay_points_.resize(delay_size_);
    for (int j = 0; j < delay_size_; ++j) delay_points_[j] = delay_period() * j / delay_size_;
  }

  int num_antennas() const { return num_antennas_; }
  int num_subcarriers() const { return num_subcarriers_; }
  int angle_size() const { return angle_size_; }  ///< Gθ
  int delay_size() const { return delay_size_; }  ///< Gτ
  long size() const { return static_cast<long>(angle_size_) * delay_size_; }  ///< G
  double angle_oversampling() const { return static_cast<double>(angle_size_) / num_antennas_; }
  double delay_oversampling() const { return static_cast<double>(delay_size_) / num_subcarriers_; }
  double max_aoa() const { return max_aoa_; }
  double bandwidth() const { return bandwidth_; }
  /// Length N / W of the delay axis.
  double delay_period() const { return num_subcarriers_ / bandwidth_; }

  const std::vector<double>& angle_points() const { return angle_points_; }
  const std::vector<double>& delay_points() const { return delay_points_; }

  /// sin θ_i / sin θ_max = -1 + 2 i / Gθ.
  double spatial_frequency(int angle_index) const { return -1.0 + 2.0 * angle_index / angle_size_; }

  int angle_index(long l) const { return static_cast<int>(l % angle_size_); }
  int delay_index(long l) const { return static_cast<int>(l / angle_size_); }
  long flat_index(int angle_index, int delay_index) const {
    return angle_index + static_cast<long>(angle_size_) * delay_index;
  }

  double theta(long l) const { return angle_points_[angle_index(l)]; }
  double tau(long l) const { return delay_points_[delay_index(l)]; }

  void check_index(long l) const {
    if (l < 0 || l >= size()) throw std::out_of_range("grid index out of range");
  }

 private:
  int num_antennas_;
  int num_subcarriers_;
  int angle_size_;
  int delay_size_;
  double max_aoa_;
  double bandwidth_;
  std::vector<double> angle_points_;
  std::vector<double> delay_points_;
};

/// vec(a(θ_l) b(τ_l)^H) for grid point l; norm √(MN).
inline CVec steering(const AngleDelayGrid& grid, long l) {
  grid.check_index(l);
  const int m = grid.num_antennas();
  const int n = grid.num_subcarriers();
  // Exact grid phases: a_k = exp(jπk u_i), conj(b_ω) = exp(-j2π ω j / Gτ).
  const CVec a = array_kernel(m, grid.spatial_frequency(grid.angle_index(l)));
  CVec out(static_cast<long>(m) * n);
  const double step = -2.0 * kPi * grid.delay_index(l) / grid.delay_size();
  for (int w = 0; w < n; ++w) out.segment(static_cast<long>(w) * m, m) = a * std::polar(1.0, step * w);
  return out;
}

/// Overload taking the configs, for callers that hold them rather than a grid.
inline CVec steering(const AngleDelayGrid& grid, const ArrayConfig& arr, const OfdmConfig& ofdm, long l) {
  if (arr.num_antennas != grid.num_antennas() || ofdm.num_subcarriers != grid.num_subcarriers())
    throw shape_error("steering: configs do not match grid");
  return steering(grid, l);
}

/// Dictionary of normalized grid atoms ā_l = steering(l) / √(MN).
///
/// Internally everything reduces to the unnormalized synthesis
///   T(U)(k, ω) = Σ_{i,j} U(i, j) (-1)^k e^{+j2πki/Gθ} e^{-j2πωj/Gτ},
/// computed as a 2D FFT of the Gθ x Gτ coefficient array cropped to M x N,
/// and its adjoint (zero-embed, 2D FFT). The dictionary and the unitary
/// oversampled transform F^ovs are both scaled versions of these:
///   𝔸 x = vec T(x) / √(MN),  𝔸^H y = vec T^H(y) / √(MN),
///   F^ovs(H) = T^H(H) / √G,  (F^ovs)^H(U) = T(U) / √G.
class Dictionary {
 public:
  explicit Dictionary(AngleDelayGrid grid) : grid_(std::move(grid)) {}

  const AngleDelayGrid& grid() const { return grid_; }
  long rows() const { return static_cast<long>(grid_.num_antennas()) * grid_.num_subcarriers(); }
  long cols() const { return grid_.size(); }

  /// T(U): Gθ x Gτ coefficients -> M x N matrix.
  CMat synthesize(const CMat& coeffs) const {
    check_grid_shape(coeffs);
    const int m = grid_.num_antennas();
    const int n = grid_.num_subcarriers();
    CMat work = coeffs;
    fft::transform(work, fft::Axis::rows, fft::Sign::positive);
    fft::transform(work, fft::Axis::cols, fft::Sign::negative, m);
    CMat out = work.topLeftCorner(m, n);
    for (int k = 1; k < m; k += 2) out.row(k) *= -1.0;
    return out;
  }

  /// T^H(Y): M x N matrix -> Gθ x Gτ coefficients.
  CMat analyze(const CMat& y) const {
    const int m = grid_.num_antennas();
    const int n = grid_.num_subcarriers();
    if (y.rows() != m || y.cols() != n) throw shape_error("Dictionary::analyze: expected M x N input");
    CMat work = CMat::Zero(grid_.angle_size(), grid_.delay_size());
    work.topLeftCorner(m, n) = y;
    for (int k = 1; k < m; k += 2) work.row(k).head(n) *= -1.0;
    fft::transform(work, fft::Axis::cols, fft::Sign::positive, m);
    fft::transform(work, fft::Axis::rows, fft::Sign::negative);
    return work;
  }

  /// 𝔸 x for a length-G coefficient vector; returns vec of the M x N matrix.
  CVec apply(const CVec& x) const {
    if (x.size() != cols()) throw shape_error("Dictionary::apply: expected length-G input");
    CMat u = Eigen::Map<const CMat>(x.data(), grid_.angle_size(), grid_.delay_size());
    CMat y = synthesize(u) / std::sqrt(static_cast<double>(rows()));
    return Eigen::Map<const CVec>(y.data(), y.size());
  }

  /// 𝔸^H y for a length-MN vector.
  CVec adjoint(const CVec& y) const {
    if (y.size() != rows()) throw shape_error("Dictionary::adjoint: expected length-MN input");
    CMat ym = Eigen::Map<const CMat>(y.data(), grid_.num_antennas(), grid_.num_subcarriers());
    CMat u = analyze(ym) / std::sqrt(static_cast<double>(rows()));
    return Eigen::Map<const CVec>(u.data(), u.size());
  }

  /// Unitary oversampled transform F^ovs: M x N -> Gθ x Gτ (isometry).
  CMat to_transform(const CMat& h) const { return analyze(h) / std::sqrt(static_cast<double>(cols())); }

  /// Adjoint of F^ovs: inverse unitary 2D DFT cropped to M x N.
  CMat from_transform(const CMat& coeffs) const {
    return synthesize(coeffs) / std::sqrt(static_cast<double>(cols()));
  }

  /// Normalized atom ā_l.
  CVec column(long l) const { return steering(grid_, l) / std::sqrt(static_cast<double>(rows())); }

  /// Dense MN x G matrix; test scale only.
  CMat dense() const {
    CMat a(rows(), cols());
    for (long l = 0; l < cols(); ++l) a.col(l) = column(l);
    return a;
  }

 private:
  void check_grid_shape(const CMat& coeffs) const {
    if (coeffs.rows() != grid_.angle_size() || coeffs.cols() != grid_.delay_size())
      throw shape_error("Dictionary: expected Gθ x Gτ coefficient array");
  }

  AngleDelayGrid grid_;
};

}  // namespace pdc
