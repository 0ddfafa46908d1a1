// Single-slot decontamination and interpolation filters: plug-in MMSE (full
// and column-wise), column interpolation, and masked ADMM reconstruction.
#pragma once

#include <vector>

#include "pdc/channel_sim.hpp"
#include "pdc/clustering.hpp"
#include "pdc/core_model.hpp"
#include "pdc/sparse_psf.hpp"

namespace pdc {

namespace detail {

inline void check_psd(const CMat& c, const char* who) {
  if (c.rows() != c.cols()) throw shape_error(std::string(who) + ": covariance must be square");
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  if ((c - c.adjoint()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw domain_error(std::string(who) + ": covariance is not Hermitian");
  const Eigen::SelfAdjointEigenSolver<CMat> es(c, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-9 * scale) throw domain_error(std::string(who) + ": covariance is not PSD");
}

inline Eigen::LLT<CMat> factor_hpd(const CMat& a, const char* who) {
  Eigen::LLT<CMat> llt(a);
  if (llt.info() != Eigen::Success) throw numerical_failure(std::string(who) + ": factorization failed", 0);
  return llt;
}

}  // namespace detail

/// Plug-in MMSE estimator-interpolator for one sampling pattern:
/// ĥ = C_ℍ 𝕊^H (σ² I + 𝕊 (C_ℍ + C_𝕚) 𝕊^H)^{-1} 𝕩. Only mn x mn systems are formed.
class MmseFilter {
 public:
  /// Dense covariances (MN x MN).
  MmseFilter(const SamplingPattern& pattern, const CMat& c_signal, const CMat& c_interference, double sigma,
             int num_antennas)
      : num_antennas_(num_antennas), num_subcarriers_(static_cast<int>(c_signal.rows() / num_antennas)) {
    if (!(sigma > 0.0)) throw domain_error("MmseFilter: sigma must be > 0");
    if (c_signal.rows() != c_interference.rows() || c_signal.cols() != c_interference.cols() ||
        c_signal.rows() % num_antennas != 0)
      throw shape_error("MmseFilter: covariance dimensions mismatch");
    detail::check_psd(c_signal, "MmseFilter");
    detail::check_psd(c_interference, "MmseFilter");
    pattern.validate(num_antennas_, num_subcarriers_);
    const auto idx = pattern.flat_indices(num_antennas_);
    const long k = static_cast<long>(idx.size());
    cross_.resize(c_signal.rows(), k);
    CMat sys(k, k);
    for (long b = 0; b < k; ++b) {
      cross_.col(b) = c_signal.col(idx[b]);
      for (long a = 0; a < k; ++a) sys(a, b) = c_signal(idx[a], idx[b]) + c_interference(idx[a], idx[b]);
    }
    sys.diagonal().array() += sigma * sigma;
    llt_ = detail::factor_hpd(sys, "MmseFilter");
  }

  /// Covariances as weighted grid atoms.
  MmseFilter(const SamplingPattern& pattern, const CovarianceEstimate& c_signal, const CovarianceEstimate& c_interference,
             double sigma)
      : num_antennas_(c_signal.grid().num_antennas()), num_subcarriers_(c_signal.grid().num_subcarriers()) {
    if (!(sigma > 0.0)) throw domain_error("MmseFilter: sigma must be > 0");
    pattern.validate(num_antennas_, num_subcarriers_);
    const auto idx = pattern.flat_indices(num_antennas_);
    const long k = static_cast<long>(idx.size());
    const long mn = static_cast<long>(num_antennas_) * num_subcarriers_;
    auto sampled_atoms = [&](const CovarianceEstimate& c, CMat* full) {
      CMat s(k, static_cast<long>(c.atoms().size()));
      if (full) full->resize(mn, s.cols());
      for (std::size_t i = 0; i < c.atoms().size(); ++i) {
        const CVec a = c.atom(i) * std::sqrt(c.weights()[i]);
        for (long r = 0; r < k; ++r) s(r, static_cast<long>(i)) = a[idx[r]];
        if (full) full->col(static_cast<long>(i)) = a;
      }
      return s;
    };
    CMat full_signal;
    const CMat sh = sampled_atoms(c_signal, &full_signal);
    const CMat si = sampled_atoms(c_interference, nullptr);
    CMat sys = sh * sh.adjoint() + si * si.adjoint();
    sys.diagonal().array() += sigma * sigma;
    llt_ = detail::factor_hpd(sys, "MmseFilter");
    cross_ = full_signal * sh.adjoint();
  }

  /// MN-vector estimate from an mn-sketch.
  CVec apply(const CVec& x) const {
    if (x.size() != cross_.cols()) throw shape_error("MmseFilter::apply: sketch length mismatch");
    return cross_ * llt_.solve(x);
  }

  CMat apply_matrix(const CVec& x) const {
    const CVec h = apply(x);
    return Eigen::Map<const CMat>(h.data(), num_antennas_, num_subcarriers_);
  }

 private:
  int num_antennas_;
  int num_subcarriers_;
  CMat cross_;  ///< C_ℍ 𝕊^H
  Eigen::LLT<CMat> llt_;
};

inline CVec mmse_full(const CVec& x, const SamplingPattern& pattern, const CMat& c_signal, const CMat& c_interference,
                      double sigma, int num_antennas) {
  return MmseFilter(pattern, c_signal, c_interference, sigma, num_antennas).apply(x);
}

inline CVec mmse_full(const CVec& x, const SamplingPattern& pattern, const CovarianceEstimate& c_signal,
                      const CovarianceEstimate& c_interference, double sigma) {
  return MmseFilter(pattern, c_signal, c_interference, sigma).apply(x);
}

/// ĥ[ω] = C_h 𝕊_a^H (σ² I + 𝕊_a (C_h + C_e) 𝕊_a^H)^{-1} y[ω], shared by every column.
class ColumnMmseFilter {
 public:
  ColumnMmseFilter(const CMat& c_h, const CMat& c_e, double sigma, std::vector<int> antennas = {}) {
    if (!(sigma > 0.0)) throw domain_error("ColumnMmseFilter: sigma must be > 0");
    if (c_h.rows() != c_e.rows() || c_h.cols() != c_e.cols()) throw shape_error("ColumnMmseFilter: covariance mismatch");
    detail::check_psd(c_h, "ColumnMmseFilter");
    detail::check_psd(c_e, "ColumnMmseFilter");
    const long m_full = c_h.rows();
    if (antennas.empty()) {
      antennas.resize(m_full);
      for (long i = 0; i < m_full; ++i) antennas[i] = static_cast<int>(i);
    }
    SamplingPattern check{antennas, {0}, 0};
    check.validate(static_cast<int>(m_full), 1);
    const long m = static_cast<long>(antennas.size());
    CMat sys(m, m);
    CMat cross(m_full, m);
    for (long b = 0; b < m; ++b) {
      cross.col(b) = c_h.col(antennas[b]);
      for (long a = 0; a < m; ++a) sys(a, b) = c_h(antennas[a], antennas[b]) + c_e(antennas[a], antennas[b]);
    }
    sys.diagonal().array() += sigma * sigma;
    const auto llt = detail::factor_hpd(sys, "ColumnMmseFilter");
    filter_ = cross * llt.solve(CMat::Identity(m, m));
  }

  /// M x m linear map.
  const CMat& matrix() const { return filter_; }

  /// Applies the filter to every column of `y` (m x cols).
  CMat apply(const CMat& y) const {
    if (y.rows() != filter_.cols()) throw shape_error("ColumnMmseFilter::apply: row count mismatch");
    return filter_ * y;
  }

 private:
  CMat filter_;
};

inline CMat mmse_columnwise(const CMat& y, const CMat& c_h, const CMat& c_e, double sigma,
                            std::vector<int> antennas = {}) {
  return ColumnMmseFilter(c_h, c_e, sigma, std::move(antennas)).apply(y);
}

enum class InterpMethod { piecewise_constant, linear, dft };

/// Fills the unprobed subcarrier columns from estimates at the probed ones.
/// `delay_taps` is used by the dft method; a non-positive value selects
/// ⌈Δτ_max W⌉ from `ofdm`.
inline CMat interpolate_unprobed_columns(const CMat& columns, const std::vector<int>& probed, const OfdmConfig& ofdm,
                                         InterpMethod method, int delay_taps = 0) {
  const int n_total = ofdm.num_subcarriers;
  const int n = static_cast<int>(probed.size());
  if (n == 0) throw shape_error("interpolate_unprobed_columns: no probed columns");
  if (columns.cols() != n) throw shape_error("interpolate_unprobed_columns: column count mismatch");
  for (int i = 0; i < n; ++i) {
    if (probed[i] < 0 || probed[i] >= n_total) throw shape_error("interpolate_unprobed_columns: index out of range");
    if (i > 0 && probed[i] <= probed[i - 1])
      throw shape_error("interpolate_unprobed_columns: probed indices must be strictly increasing");
  }
  const long m = columns.rows();
  CMat out(m, n_total);
  switch (method) {
    case InterpMethod::piecewise_constant: {
      int k = 0;
      for (int w = 0; w < n_total; ++w) {
        while (k + 1 < n && std::abs(probed[k + 1] - w) < std::abs(probed[k] - w)) ++k;
        out.col(w) = columns.col(k);
      }
      break;
    }
    case InterpMethod::linear: {
      int k = 0;
      for (int w = 0; w < n_total; ++w) {
        while (k + 1 < n && probed[k + 1] <= w) ++k;
        if (w <= probed.front()) out.col(w) = columns.col(0);
        else if (w >= probed.back()) out.col(w) = columns.col(n - 1);
        else {
          const double t = static_cast<double>(w - probed[k]) / (probed[k + 1] - probed[k]);
          out.col(w) = (1.0 - t) * columns.col(k) + t * columns.col(k + 1);
        }
      }
      break;
    }
    case InterpMethod::dft: {
      const int taps = delay_taps > 0 ? delay_taps : ofdm.delay_taps();
      if (n < taps) throw domain_error("interpolate_unprobed_columns: fewer probed columns than delay taps");
      auto basis = [&](int w, int t) { return std::polar(1.0, -2.0 * kPi * t * w / n_total); };
      CMat b(n, taps);
      for (int i = 0; i < n; ++i)
        for (int t = 0; t < taps; ++t) b(i, t) = basis(probed[i], t);
      Eigen::ColPivHouseholderQR<CMat> qr(b);
      if (qr.rank() < taps) throw domain_error("interpolate_unprobed_columns: rank-deficient delay basis");
      const CMat g = qr.solve(columns.transpose());  // taps x m
      CMat full(n_total, taps);
      for (int w = 0; w < n_total; ++w)
        for (int t = 0; t < taps; ++t) full(w, t) = basis(w, t);
      out = (full * g).transpose();
      break;
    }
  }
  for (int i = 0; i < n; ++i) out.col(probed[i]) = columns.col(i);
  return out;
}

struct AdmmConfig {
  double upsilon = 0.2;
  int max_iterations = 1000;
  double tolerance = 1e-6;  ///< residual threshold relative to √G

  void validate() const {
    if (!(upsilon > 0.0)) throw domain_error("AdmmConfig: upsilon must be > 0");
    if (max_iterations < 1) throw domain_error("AdmmConfig: max_iterations must be >= 1");
    if (!(tolerance >= 0.0)) throw domain_error("AdmmConfig: tolerance must be >= 0");
  }
};

struct AdmmResiduals {
  double primal = 0.0;
  double dual = 0.0;
};

/// ADMM for min ½‖x̌ - 𝕊(p + q)‖² with p = F^H(P_f), q = F^H(Q_f),
/// P_f supported on M^h and Q_f on M^i. The transform-domain variables are
/// split into a free copy U (absorbing the data term) and the masked copy
/// P_f (absorbing the indicator), linked by U = P_f with multiplier Λ.
class AdmmState {
 public:
  AdmmState(const Dictionary& dict, const CMat& sketch_matrix, const SamplingPattern& pattern, const MaskPair& masks,
            double upsilon)
      : dict_(dict), masks_(masks), upsilon_(upsilon) {
    const auto& g = dict_.grid();
    const int m_full = g.num_antennas();
    const int n_full = g.num_subcarriers();
    if (!(upsilon > 0.0)) throw domain_error("admm: upsilon must be > 0");
    pattern.validate(m_full, n_full);
    if (sketch_matrix.rows() != pattern.m() || sketch_matrix.cols() != pattern.n())
      throw shape_error("admm: sketch matrix must be m x n");
    if (masks.signal.rows() != g.angle_size() || masks.signal.cols() != g.delay_size() ||
        masks.interference.rows() != g.angle_size() || masks.interference.cols() != g.delay_size())
      throw shape_error("admm: masks do not match grid");
    if (!masks.disjoint()) throw domain_error("admm: masks must be disjoint");

    x_check_ = CMat::Zero(m_full, n_full);
    sampled_ = Mask::Constant(m_full, n_full, false);
    for (int j = 0; j < pattern.n(); ++j)
      for (int i = 0; i < pattern.m(); ++i) {
        x_check_(pattern.antenna_indices[i], pattern.subcarrier_indices[j]) = sketch_matrix(i, j);
        sampled_(pattern.antenna_indices[i], pattern.subcarrier_indices[j]) = true;
      }
    const CMat zero_grid = CMat::Zero(g.angle_size(), g.delay_size());
    p_f_ = q_f_ = lambda_p_ = lambda_q_ = v_p_ = v_q_ = zero_grid;
    delta_ = CMat::Zero(m_full, n_full);
  }

  /// One sweep: primal (P, Q, U) update, masked projection, dual ascent.
  void step() {
    const double inv = 1.0 / upsilon_;
    const long g = p_f_.size();
    cplx* pf = p_f_.data();
    cplx* qf = q_f_.data();
    cplx* lp = lambda_p_.data();
    cplx* lq = lambda_q_.data();
    cplx* vp = v_p_.data();
    cplx* vq = v_q_.data();
    for (long l = 0; l < g; ++l) {
      vp[l] = pf[l] + inv * lp[l];
      vq[l] = qf[l] + inv * lq[l];
    }
    // Closed form of min ½‖x̌ - 𝕊(p+q)‖² + υ/2‖p - p_t‖² + υ/2‖q - q_t‖² with
    // p_t = F^H V_p, q_t = F^H V_q: both primals move by D (x̌ - p_t - q_t),
    // D = 1/(υ+2) on sampled entries and 0 elsewhere.
    delta_ = (x_check_ - dict_.from_transform(v_p_ + v_q_)) / (upsilon_ + 2.0);
    for (long k = 0; k < delta_.size(); ++k)
      if (!sampled_.data()[k]) delta_.data()[k] = 0.0;
    const CMat lift = dict_.to_transform(delta_);

    // U = V + F(δ); P_f = Proj(U - Λ/υ) = Proj(P_f + F(δ)); Λ += υ (P_f - U).
    const cplx* lf = lift.data();
    const bool* mh = masks_.signal.data();
    const bool* mi = masks_.interference.data();
    double primal_p = 0.0, primal_q = 0.0, dual_p = 0.0, dual_q = 0.0;
    for (long l = 0; l < g; ++l) {
      const cplx up = vp[l] + lf[l];
      const cplx uq = vq[l] + lf[l];
      const cplx pn = mh[l] ? pf[l] + lf[l] : cplx(0.0);
      const cplx qn = mi[l] ? qf[l] + lf[l] : cplx(0.0);
      dual_p += std::norm(pn - pf[l]);
      dual_q += std::norm(qn - qf[l]);
      primal_p += std::norm(pn - up);
      primal_q += std::norm(qn - uq);
      lp[l] += upsilon_ * (pn - up);
      lq[l] += upsilon_ * (qn - uq);
      pf[l] = pn;
      qf[l] = qn;
    }
    residuals_.primal = std::sqrt(primal_p) + std::sqrt(primal_q);
    residuals_.dual = upsilon_ * (std::sqrt(dual_p) + std::sqrt(dual_q));
    ++iteration_;
    if (!std::isfinite(residuals_.primal) || !std::isfinite(residuals_.dual))
      throw numerical_failure("admm: non-finite state", iteration_);
  }

  /// Primal ‖P_f - U_p‖ + ‖Q_f - U_q‖ and dual υ(‖ΔP_f‖ + ‖ΔQ_f‖) of the last step.
  AdmmResiduals residuals() const { return residuals_; }

  /// Feasible estimates F^H(P_f), F^H(Q_f).
  CMat signal_estimate() const { return dict_.from_transform(p_f_); }
  CMat interference_estimate() const { return dict_.from_transform(q_f_); }

  /// Primal iterates P = F^H V_p + D(...), Q likewise, of the last step.
  CMat p() const { return dict_.from_transform(v_p_) + delta_; }
  CMat q() const { return dict_.from_transform(v_q_) + delta_; }
  const CMat& p_f() const { return p_f_; }
  const CMat& q_f() const { return q_f_; }
  const CMat& lambda_p() const { return lambda_p_; }
  const CMat& lambda_q() const { return lambda_q_; }
  double upsilon() const { return upsilon_; }
  int iteration() const { return iteration_; }

  /// ½‖x̌ - 𝕊(F^H P_f + F^H Q_f)‖² at the current masked iterates.
  double objective() const {
    CMat r = x_check_ - signal_estimate() - interference_estimate();
    for (long k = 0; k < r.size(); ++k)
      if (!sampled_.data()[k]) r.data()[k] = 0.0;
    return 0.5 * r.squaredNorm();
  }

 private:
  const Dictionary& dict_;
  MaskPair masks_;
  double upsilon_;
  CMat x_check_;
  Mask sampled_;
  CMat delta_;
  CMat p_f_, q_f_, lambda_p_, lambda_q_, v_p_, v_q_;
  AdmmResiduals residuals_;
  int iteration_ = 0;
};

struct AdmmResult {
  CMat p;  ///< signal estimate, M x N
  CMat q;  ///< interference estimate, M x N
  int iterations = 0;
  bool converged = false;
  AdmmResiduals residuals;
};

/// Runs ADMM from the all-zero state until both residuals drop below
/// tolerance √G or the iteration cap is reached.
inline AdmmResult admm_interpolate(const CMat& sketch_matrix, const SamplingPattern& pattern, const MaskPair& masks,
                                   const Dictionary& dict, const AdmmConfig& cfg = {}) {
  cfg.validate();
  AdmmState state(dict, sketch_matrix, pattern, masks, cfg.upsilon);
  const double threshold = cfg.tolerance * std::sqrt(static_cast<double>(dict.cols()));
  AdmmResult out;
  for (int k = 0; k < cfg.max_iterations; ++k) {
    state.step();
    const auto r = state.residuals();
    if (r.primal < threshold && r.dual < threshold) {
      out.converged = true;
      break;
    }
  }
  out.p = state.signal_estimate();
  out.q = state.interference_estimate();
  out.iterations = state.iteration();
  out.residuals = state.residuals();
  return out;
}

/// Reshapes an mn sketch (sketch order) to the m x n matrix X_s.
inline CMat sketch_matrix(const CVec& x, const SamplingPattern& pattern) {
  if (x.size() != pattern.size()) throw shape_error("sketch_matrix: length mismatch");
  return Eigen::Map<const CMat>(x.data(), pattern.m(), pattern.n());
}

}  // namespace pdc
