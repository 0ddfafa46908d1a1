// Angle-delay PSF estimation by l2,1-regularized least squares (FISTA) and the
// covariance estimates built from it.
#pragma once

#include <optional>
#include <vector>

#include "pdc/channel_sim.hpp"
#include "pdc/core_model.hpp"

namespace pdc {

struct SolverConfig {
  int max_iterations = 500;
  double objective_tolerance = 1e-6;
  int patience = 5;  ///< consecutive iterations below tolerance before stopping
  std::optional<double> lipschitz_override;
  std::optional<double> regularization_weight;  ///< ζ; √w when unset
  bool approximate_lipschitz = false;           ///< use G / (ζ mn) instead of power iteration
  int power_iterations = 20;

  void validate() const {
    if (max_iterations < 1) throw domain_error("SolverConfig: max_iterations must be >= 1");
    if (!(objective_tolerance >= 0.0)) throw domain_error("SolverConfig: objective_tolerance must be >= 0");
    if (patience < 1) throw domain_error("SolverConfig: patience must be >= 1");
    if (lipschitz_override && !(*lipschitz_override > 0.0))
      throw domain_error("SolverConfig: lipschitz_override must be > 0");
    if (regularization_weight && !(*regularization_weight > 0.0))
      throw domain_error("SolverConfig: regularization_weight must be > 0");
  }
};

/// mn x w sketches, one sampling pattern per column, already divided by σ.
struct SketchWindow {
  CMat data;
  std::vector<SamplingPattern> patterns;

  long width() const { return data.cols(); }
};

/// Nonnegative weights γ on the grid, flat index l = i + Gθ j.
struct Psf {
  int angle_size = 0;
  int delay_size = 0;
  RVec weights;

  double operator()(int i, int j) const { return weights[i + static_cast<long>(angle_size) * j]; }
  RMat as_matrix() const { return Eigen::Map<const RMat>(weights.data(), angle_size, delay_size); }
  double total() const { return weights.sum(); }

  /// γ restricted to `mask` (zero elsewhere).
  Psf masked(const Mask& mask) const {
    Psf out = *this;
    for (long l = 0; l < weights.size(); ++l)
      if (!mask(l % angle_size, l / angle_size)) out.weights[l] = 0.0;
    return out;
  }
};

/// Row-wise group soft thresholding: row -> (1 - α / ‖row‖)_+ row.
inline CMat prox_l21(const CMat& w, double alpha) {
  if (!(alpha >= 0.0)) throw domain_error("prox_l21: alpha must be >= 0");
  const RVec norms = w.cwiseAbs2().rowwise().sum().cwiseSqrt();
  RVec scale(norms.size());
  for (long i = 0; i < norms.size(); ++i) scale[i] = norms[i] > alpha ? (norms[i] - alpha) / norms[i] : 0.0;
  return scale.asDiagonal() * w;
}

inline double l21_norm(const CMat& w) { return w.cwiseAbs2().rowwise().sum().cwiseSqrt().sum(); }

/// The per-slot sensing operators Ã_c = √(MN/mn) 𝕊_c 𝔸 applied column by column.
class SketchOperator {
 public:
  SketchOperator(const Dictionary& dict, const std::vector<SamplingPattern>& patterns)
      : dict_(dict), patterns_(patterns) {
    if (patterns_.empty()) throw shape_error("SketchOperator: no sampling patterns");
    const auto& g = dict_.grid();
    sample_size_ = patterns_.front().size();
    for (const auto& p : patterns_) {
      p.validate(g.num_antennas(), g.num_subcarriers());
      if (p.size() != sample_size_) throw shape_error("SketchOperator: all patterns must have the same size");
    }
    scale_ = 1.0 / std::sqrt(static_cast<double>(sample_size_));
  }

  long sample_size() const { return sample_size_; }
  long width() const { return static_cast<long>(patterns_.size()); }
  const Dictionary& dictionary() const { return dict_; }
  const std::vector<SamplingPattern>& patterns() const { return patterns_; }

  CVec forward_column(const CMat& coeffs, long c) const {
    return patterns_[c].select(dict_.synthesize(coeffs)) * scale_;
  }

  CMat adjoint_column(const CVec& r, long c) const {
    const auto& g = dict_.grid();
    return dict_.analyze(patterns_[c].embed(r, g.num_antennas(), g.num_subcarriers())) * scale_;
  }

  /// G x w -> mn x w. All columns are transformed in one batch.
  CMat forward(const CMat& w) const {
    check_width(w.cols());
    const auto& g = dict_.grid();
    const int ga = g.angle_size(), gd = g.delay_size(), m = g.num_antennas();
    const long cols = w.cols();
    CMat work = w;
    fft::transform(work.data(), ga, static_cast<int>(gd * cols), fft::Axis::rows, fft::Sign::positive);
    CMat out(sample_size_, cols);
    for (long c = 0; c < cols; ++c) {
      cplx* block = work.data() + c * dict_.cols();
      fft::transform(block, ga, gd, fft::Axis::cols, fft::Sign::negative, m);
      long t = 0;
      for (int f : patterns_[c].subcarrier_indices)
        for (int a : patterns_[c].antenna_indices)
          out(t++, c) = block[a + static_cast<long>(ga) * f] * ((a & 1) ? -scale_ : scale_);
    }
    return out;
  }

  /// mn x w -> G x w. All columns are transformed in one batch.
  CMat adjoint(const CMat& r) const {
    check_width(r.cols());
    const auto& g = dict_.grid();
    const int ga = g.angle_size(), gd = g.delay_size(), m = g.num_antennas();
    const long cols = r.cols();
    CMat work = CMat::Zero(dict_.cols(), cols);
    for (long c = 0; c < cols; ++c) {
      cplx* block = work.data() + c * dict_.cols();
      long t = 0;
      for (int f : patterns_[c].subcarrier_indices)
        for (int a : patterns_[c].antenna_indices)
          block[a + static_cast<long>(ga) * f] = r(t++, c) * ((a & 1) ? -scale_ : scale_);
      fft::transform(block, ga, gd, fft::Axis::cols, fft::Sign::positive, m);
    }
    fft::transform(work.data(), ga, static_cast<int>(gd * cols), fft::Axis::rows, fft::Sign::negative);
    return work;
  }

  /// Dense Ã_c (test scale).
  CMat dense(long c) const {
    const CMat a = dict_.dense();
    CMat out(sample_size_, a.cols());
    const auto idx = patterns_[c].flat_indices(dict_.grid().num_antennas());
    const double s = std::sqrt(static_cast<double>(dict_.rows()) / sample_size_);
    for (long r = 0; r < sample_size_; ++r) out.row(r) = a.row(idx[r]) * s;
    return out;
  }

 private:
  void check_width(long w) const {
    if (w != width()) throw shape_error("SketchOperator: column count does not match the number of patterns");
  }

  const Dictionary& dict_;
  const std::vector<SamplingPattern>& patterns_;
  long sample_size_ = 0;
  double scale_ = 1.0;
};

/// Lipschitz constant β of the data-fit gradient: max_c λ_max(Ã_c^H Ã_c) / ζ by
/// power iteration, or the closed form G / (ζ mn).
inline double lipschitz_estimate(const Dictionary& dict, const std::vector<SamplingPattern>& patterns, double zeta,
                                 bool approximate = false, int iterations = 20) {
  if (patterns.empty()) throw shape_error("lipschitz_estimate: no sampling patterns");
  if (!(zeta > 0.0)) throw domain_error("lipschitz_estimate: zeta must be > 0");
  if (approximate) return static_cast<double>(dict.cols()) / (zeta * static_cast<double>(patterns.front().size()));
  const SketchOperator op(dict, patterns);
  Rng rng = make_rng(0x6c697073ULL);
  double lambda = 0.0;
  for (long c = 0; c < op.width(); ++c) {
    // Power iteration on Ã_c Ã_c^H, which has the same nonzero spectrum and is only mn x mn.
    CVec v = complex_normal_vector(rng, op.sample_size());
    v.normalize();
    double est = 0.0;
    for (int it = 0; it < iterations; ++it) {
      const CMat u = op.adjoint_column(v, c);
      CVec y = op.forward_column(u, c);
      est = y.norm();
      if (est == 0.0) break;
      v = y / est;
    }
    lambda = std::max(lambda, est);
  }
  return lambda / zeta;
}

struct PsfSolution {
  CMat coefficients;               ///< W*, G x w
  Psf psf;
  std::vector<double> objective;   ///< f(W^(k)), k = 0 .. iterations
  double beta = 0.0;
  double zeta = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// f(W) = (1 / 2ζ) Σ_c ‖Ã_c W_c - X_c‖² + ‖W‖_{2,1}.
inline double psf_objective(const SketchOperator& op, const CMat& x, const CMat& w, double zeta) {
  return 0.5 / zeta * (op.forward(w) - x).squaredNorm() + l21_norm(w);
}

/// γ_l = ‖W_l‖ / mn.
inline Psf psf_from_coefficients(const AngleDelayGrid& grid, const CMat& w, long sample_size) {
  Psf psf{grid.angle_size(), grid.delay_size(), w.cwiseAbs2().rowwise().sum().cwiseSqrt() / static_cast<double>(sample_size)};
  return psf;
}

/// Forward-backward splitting with Nesterov momentum, started at W = 0.
inline PsfSolution solve_psf(const SketchWindow& window, const Dictionary& dict, const SolverConfig& cfg = {}) {
  cfg.validate();
  if (window.data.cols() != static_cast<long>(window.patterns.size()))
    throw shape_error("solve_psf: one sampling pattern per sketch column is required");
  const SketchOperator op(dict, window.patterns);
  if (window.data.rows() != op.sample_size()) throw shape_error("solve_psf: sketch length does not match the patterns");

  PsfSolution out;
  const long w = window.width();
  out.zeta = cfg.regularization_weight.value_or(std::sqrt(static_cast<double>(w)));
  out.beta = cfg.lipschitz_override ? *cfg.lipschitz_override
                                    : lipschitz_estimate(dict, window.patterns, out.zeta, cfg.approximate_lipschitz,
                                                         cfg.power_iterations);
  const double step = 1.0 / out.beta;

  CMat current = CMat::Zero(dict.cols(), w);
  CMat z = current;
  // Images under the sensing operator, carried along by linearity so each
  // iteration costs one forward and one adjoint application.
  CMat a_current = CMat::Zero(op.sample_size(), w);
  CMat a_z = a_current;
  double t = 1.0;
  double f_prev = 0.5 / out.zeta * window.data.squaredNorm();
  out.objective.push_back(f_prev);
  int calm = 0;
  for (int k = 1; k <= cfg.max_iterations; ++k) {
    const CMat grad = op.adjoint(a_z - window.data) / out.zeta;
    CMat next = prox_l21(z - step * grad, step);
    CMat a_next = op.forward(next);
    const double t_next = 0.5 * (1.0 + std::sqrt(4.0 * t * t + 1.0));
    const double momentum = (t - 1.0) / t_next;
    z = next + momentum * (next - current);
    a_z = a_next + momentum * (a_next - a_current);
    current = std::move(next);
    a_current = std::move(a_next);
    t = t_next;

    const double f = 0.5 / out.zeta * (a_current - window.data).squaredNorm() + l21_norm(current);
    if (!std::isfinite(f)) throw numerical_failure("solve_psf: non-finite objective", k);
    out.objective.push_back(f);
    out.iterations = k;
    const double rel = std::abs(f - f_prev) / std::max(std::abs(f_prev), 1e-300);
    calm = (rel < cfg.objective_tolerance || f == f_prev) ? calm + 1 : 0;
    f_prev = f;
    if (calm >= cfg.patience) {
      out.converged = true;
      break;
    }
  }
  out.psf = psf_from_coefficients(dict.grid(), current, op.sample_size());
  out.coefficients = std::move(current);
  return out;
}

/// Upper bound f(W_ref) + 4β‖W_ref - W0‖² / (k + 1)² on f(W^(k+1)), with W0 = 0.
inline double convergence_bound(double f_ref, double beta, double ref_sq_norm, int k) {
  return f_ref + 4.0 * beta * ref_sq_norm / (static_cast<double>(k + 1) * (k + 1));
}

/// Covariance Σ_l s_l ā_l ā_l^H kept as weighted grid atoms.
class CovarianceEstimate {
 public:
  CovarianceEstimate(const AngleDelayGrid& grid, std::vector<long> atoms, std::vector<double> weights)
      : grid_(grid), atoms_(std::move(atoms)), weights_(std::move(weights)) {
    if (atoms_.size() != weights_.size()) throw shape_error("CovarianceEstimate: atoms/weights length mismatch");
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      grid_.check_index(atoms_[i]);
      if (!(weights_[i] >= 0.0)) throw domain_error("CovarianceEstimate: weights must be nonnegative");
    }
  }

  const AngleDelayGrid& grid() const { return grid_; }
  const std::vector<long>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }
  double trace() const {
    double s = 0.0;
    for (double v : weights_) s += v;
    return s;
  }

  CovarianceEstimate scaled(double factor) const {
    if (!(factor >= 0.0)) throw domain_error("CovarianceEstimate::scaled: negative factor");
    std::vector<double> w = weights_;
    for (double& v : w) v *= factor;
    return {grid_, atoms_, std::move(w)};
  }

  /// Normalized atom ā_l.
  CVec atom(std::size_t i) const {
    return steering(grid_, atoms_[i]) / std::sqrt(static_cast<double>(grid_.num_antennas()) * grid_.num_subcarriers());
  }

  /// Dense MN x MN matrix (test scale).
  CMat dense() const {
    const long mn = static_cast<long>(grid_.num_antennas()) * grid_.num_subcarriers();
    CMat a(mn, static_cast<long>(atoms_.size()));
    for (std::size_t i = 0; i < atoms_.size(); ++i) a.col(static_cast<long>(i)) = atom(i) * std::sqrt(weights_[i]);
    CMat c = CMat::Zero(mn, mn);
    c.selfadjointView<Eigen::Lower>().rankUpdate(a);
    return c.selfadjointView<Eigen::Lower>();
  }

  /// Spatial block Σ_l s_l a(θ_l) a(θ_l)^H / (MN): the covariance of any one
  /// subcarrier column, shared by all columns.
  CMat spatial() const {
    const int m = grid_.num_antennas();
    const double norm = static_cast<double>(m) * grid_.num_subcarriers();
    RVec by_angle = RVec::Zero(grid_.angle_size());
    for (std::size_t i = 0; i < atoms_.size(); ++i) by_angle[grid_.angle_index(atoms_[i])] += weights_[i];
    // Hermitian Toeplitz: only the first column is needed.
    CVec first = CVec::Zero(m);
    for (int i = 0; i < grid_.angle_size(); ++i) {
      if (by_angle[i] == 0.0) continue;
      const double u = grid_.spatial_frequency(i);
      for (int k = 0; k < m; ++k) first[k] += by_angle[i] * std::polar(1.0, kPi * k * u);
    }
    first /= norm;
    CMat c(m, m);
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i) c(i, j) = i >= j ? first[i - j] : std::conj(first[j - i]);
    return c;
  }

 private:
  AngleDelayGrid grid_;
  std::vector<long> atoms_;
  std::vector<double> weights_;
};

/// C* = Σ_l γ_l ā_l ā_l^H over the support of `psf` (optionally restricted to `mask`).
inline CovarianceEstimate covariance_from_psf(const Psf& psf, const AngleDelayGrid& grid, const Mask* mask = nullptr) {
  if (psf.angle_size != grid.angle_size() || psf.delay_size != grid.delay_size())
    throw shape_error("covariance_from_psf: PSF does not match grid");
  std::vector<long> atoms;
  std::vector<double> weights;
  for (long l = 0; l < psf.weights.size(); ++l) {
    const double v = psf.weights[l];
    if (v < 0.0) throw domain_error("covariance_from_psf: negative weight");
    if (v == 0.0) continue;
    if (mask && !(*mask)(grid.angle_index(l), grid.delay_index(l))) continue;
    atoms.push_back(l);
    weights.push_back(v);
  }
  return {grid, std::move(atoms), std::move(weights)};
}

inline CMat spatial_covariance_from_psf(const Psf& psf, const AngleDelayGrid& grid, const Mask* mask = nullptr) {
  return covariance_from_psf(psf, grid, mask).spatial();
}

/// Scale factor that makes the covariance trace match the noise-corrected
/// sketch power: MN (mean |x|² - 1)_+ / trace. Sketches are noise-normalized.
inline double trace_calibration(const CovarianceEstimate& cov, const CMat& sketches) {
  const double tr = cov.trace();
  if (tr <= 0.0 || sketches.size() == 0) return 0.0;
  const double excess = std::max(0.0, sketches.squaredNorm() / static_cast<double>(sketches.size()) - 1.0);
  const double mn = static_cast<double>(cov.grid().num_antennas()) * cov.grid().num_subcarriers();
  return mn * excess / tr;
}

}  // namespace pdc
