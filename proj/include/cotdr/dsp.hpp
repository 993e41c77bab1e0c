#pragma once

// Scalar-generic correlation and peak-model kernels. Everything here works
// on plain Eigen vectors; the domain wrappers in correlator.hpp attach time
// axes.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>
#include <unsupported/Eigen/FFT>

namespace cotdr::dsp {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// out[k] = sum_j h[j] * x[j + m], with m = first_shift + k and x taken as
/// zero outside its support.
template <typename DX, typename DH>
Vector<typename DX::Scalar> correlate_direct(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DH>& h,
                                             std::int64_t first_shift, Eigen::Index count) {
  using Scalar = typename DX::Scalar;
  const auto n = static_cast<std::int64_t>(x.size());
  const auto m_len = static_cast<std::int64_t>(h.size());
  Vector<Scalar> out(count);
  for (Eigen::Index k = 0; k < count; ++k) {
    const std::int64_t shift = first_shift + k;
    const std::int64_t j0 = std::max<std::int64_t>(0, -shift);
    const std::int64_t j1 = std::min<std::int64_t>(m_len, n - shift);
    if (j1 <= j0) {
      out[k] = Scalar(0);
      continue;
    }
    out[k] = h.segment(j0, j1 - j0).dot(x.segment(j0 + shift, j1 - j0));
  }
  return out;
}

/// Full linear cross-correlation over shifts [-(M-1), N-1], evaluated by
/// overlap-save FFT blocks, so long records cost O(N log M).
template <typename DX, typename DH>
Vector<typename DX::Scalar> correlate_fft(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DH>& h) {
  using Scalar = typename DX::Scalar;
  using Complex = std::complex<Scalar>;
  const auto n = static_cast<std::int64_t>(x.size());
  const auto m_len = static_cast<std::int64_t>(h.size());
  const std::int64_t out_len = n + m_len - 1;
  Vector<Scalar> out(out_len);
  if (n == 0 || m_len == 0) return Vector<Scalar>::Zero(std::max<std::int64_t>(out_len, 0));

  // x padded with M-1 zeros on both sides; valid correlation of the padded
  // record with h is the full correlation of x with h.
  const std::int64_t padded = n + 2 * (m_len - 1);
  std::int64_t block = 1;
  while (block < std::min<std::int64_t>(padded, std::max<std::int64_t>(8 * m_len, 4096))) block <<= 1;
  while (block < m_len) block <<= 1;
  const std::int64_t step = block - m_len + 1;

  Eigen::FFT<Scalar> fft;
  std::vector<Scalar> h_buf(block, Scalar(0));
  for (std::int64_t j = 0; j < m_len; ++j) h_buf[j] = h[j];
  std::vector<Complex> h_spec;
  fft.fwd(h_spec, h_buf);
  for (auto& c : h_spec) c = std::conj(c);

  std::vector<Scalar> x_buf(block);
  std::vector<Complex> x_spec;
  std::vector<Scalar> y;
  for (std::int64_t s = 0; s < out_len; s += step) {
    for (std::int64_t i = 0; i < block; ++i) {
      const std::int64_t src = s + i - (m_len - 1);
      x_buf[i] = (src >= 0 && src < n) ? x[src] : Scalar(0);
    }
    fft.fwd(x_spec, x_buf);
    for (std::int64_t i = 0; i < block; ++i) x_spec[i] *= h_spec[i];
    fft.inv(y, x_spec);
    const std::int64_t take = std::min(step, out_len - s);
    for (std::int64_t k = 0; k < take; ++k) out[s + k] = y[k];
  }
  return out;
}

/// Raised-cosine main lobe a * (1 + cos(pi (x - c) / w)) / 2 for |x - c| < w,
/// zero elsewhere.
template <typename Scalar>
struct RaisedCosine {
  Scalar center{};
  Scalar amplitude{};
  Scalar width{};

  Scalar operator()(Scalar x) const {
    const Scalar z = (x - center) / width;
    if (std::abs(z) >= Scalar(1)) return Scalar(0);
    return amplitude * Scalar(0.5) * (Scalar(1) + std::cos(std::numbers::pi_v<Scalar> * z));
  }
};

template <typename Scalar, typename DX>
Vector<Scalar> evaluate(const RaisedCosine<Scalar>& lobe, const Eigen::MatrixBase<DX>& x) {
  return x.derived().unaryExpr([&lobe](Scalar v) { return lobe(v); });
}

template <typename Scalar>
struct FitControls {
  int max_iterations = 200;
  Scalar min_width = Scalar(0.5);
  Scalar max_width = Scalar(64);
  Scalar center_tolerance = Scalar(1e-10);
};

template <typename Scalar>
struct RaisedCosineFit {
  RaisedCosine<Scalar> lobe;
  Scalar rss = Scalar(0);
  Eigen::Matrix<Scalar, 3, 3> covariance = Eigen::Matrix<Scalar, 3, 3>::Zero();  // center, amplitude, width
  int iterations = 0;
  bool converged = false;
  std::string failure;
};

/// Damped Gauss-Newton (Levenberg-Marquardt) least-squares fit of a raised
/// cosine to (x, y), with the centre held inside [x.min, x.max] and the width
/// inside the control bounds.
template <typename DX, typename DY>
RaisedCosineFit<typename DX::Scalar> fit_raised_cosine(const Eigen::MatrixBase<DX>& x,
                                                        const Eigen::MatrixBase<DY>& y,
                                                        RaisedCosine<typename DX::Scalar> init,
                                                        const FitControls<typename DX::Scalar>& controls = {}) {
  using Scalar = typename DX::Scalar;
  using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  const Eigen::Index n = x.size();
  const Scalar pi = std::numbers::pi_v<Scalar>;
  const Scalar x_lo = x.minCoeff();
  const Scalar x_hi = x.maxCoeff();

  RaisedCosineFit<Scalar> fit;
  if (n < 4) {
    fit.failure = "fewer than 4 samples in fit window";
    return fit;
  }

  auto clamp = [&](Vec3 p) {
    p[0] = std::clamp(p[0], x_lo, x_hi);
    p[1] = std::max(p[1], std::numeric_limits<Scalar>::min());
    p[2] = std::clamp(p[2], controls.min_width, controls.max_width);
    return p;
  };
  auto lobe_of = [](const Vec3& p) { return RaisedCosine<Scalar>{p[0], p[1], p[2]}; };
  auto residual_ss = [&](const Vec3& p) { return (y - evaluate(lobe_of(p), x)).squaredNorm(); };
  auto normal_equations = [&](const Vec3& p, Mat3& a, Vec3& g) {
    a.setZero();
    g.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const Scalar z = (x[i] - p[0]) / p[2];
      Vec3 jac = Vec3::Zero();
      Scalar f = 0;
      if (std::abs(z) < Scalar(1)) {
        const Scalar s = std::sin(pi * z);
        f = p[1] * Scalar(0.5) * (Scalar(1) + std::cos(pi * z));
        jac[0] = p[1] * Scalar(0.5) * s * pi / p[2];
        jac[1] = Scalar(0.5) * (Scalar(1) + std::cos(pi * z));
        jac[2] = p[1] * Scalar(0.5) * s * pi * z / p[2];
      }
      a.noalias() += jac * jac.transpose();
      g.noalias() += jac * (y[i] - f);
    }
  };

  Vec3 p = clamp(Vec3(init.center, init.amplitude, init.width));
  Scalar rss = residual_ss(p);
  Mat3 a;
  Vec3 g;
  normal_equations(p, a, g);
  Scalar lambda = Scalar(1e-3);

  for (fit.iterations = 1; fit.iterations <= controls.max_iterations; ++fit.iterations) {
    Mat3 damped = a;
    for (int d = 0; d < 3; ++d) damped(d, d) += lambda * (a(d, d) + std::numeric_limits<Scalar>::epsilon());
    const Vec3 candidate = clamp(p + damped.fullPivLu().solve(g));
    const Scalar candidate_rss = residual_ss(candidate);
    if (std::isfinite(candidate_rss) && candidate_rss <= rss) {
      const Scalar moved = std::abs(candidate[0] - p[0]);
      const Scalar improvement = rss - candidate_rss;
      p = candidate;
      rss = candidate_rss;
      normal_equations(p, a, g);
      lambda = std::max(lambda / Scalar(3), Scalar(1e-12));
      if (moved < controls.center_tolerance && improvement <= Scalar(1e-14) * (rss + Scalar(1e-300))) {
        fit.converged = true;
        break;
      }
    } else {
      lambda *= Scalar(4);
      if (lambda > Scalar(1e12)) {
        // No descent left at working precision: p is a stationary point.
        fit.converged = true;
        break;
      }
    }
  }

  fit.lobe = lobe_of(p);
  fit.rss = rss;
  if (!fit.converged) {
    fit.failure = "no convergence after " + std::to_string(controls.max_iterations) + " iterations";
    return fit;
  }
  const Scalar edge_margin = Scalar(1e-9) * (x_hi - x_lo);
  if (p[0] <= x_lo + edge_margin || p[0] >= x_hi - edge_margin) {
    fit.converged = false;
    fit.failure = "fitted centre on the window edge";
    return fit;
  }
  if (p[2] <= controls.min_width || p[2] >= controls.max_width) {
    fit.converged = false;
    fit.failure = "fitted width at its bound";
    return fit;
  }
  const Scalar dof = static_cast<Scalar>(n - 3);
  Eigen::FullPivLU<Mat3> lu(a);
  if (!lu.isInvertible()) {
    fit.converged = false;
    fit.failure = "singular normal matrix";
    return fit;
  }
  fit.covariance = lu.inverse() * (rss / dof);
  return fit;
}

}  // namespace cotdr::dsp
