#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cotdr/dsp.hpp"
#include "cotdr/signal_gen.hpp"

namespace cotdr {

/// Correlation against lag. Entry k sits at lag (first_lag_index + k) *
/// sample_period, in receiver-clock seconds.
struct CorrelationTrace {
  Eigen::VectorXd values;
  std::int64_t first_lag_index = 0;
  double sample_period = 0.0;

  Eigen::Index size() const { return values.size(); }
  double lag(Eigen::Index k) const { return static_cast<double>(first_lag_index + k) * sample_period; }
  Eigen::VectorXd lags() const;
};

enum class CorrelationMethod { direct, fft };

/// Full cross-correlation, value at lag l = sum_t received(t) * reference(t - l)
/// over the overlap. Both records are mean-removed first unless
/// `remove_mean` is false. Throws std::invalid_argument when the sample
/// rates differ or the two sample grids are not offset by a whole number of
/// periods.
CorrelationTrace cross_correlate(const SampledWaveform& received, const SampledWaveform& reference,
                                 CorrelationMethod method = CorrelationMethod::fft, bool remove_mean = true);

/// Direct-form correlation restricted to lag indices
/// [first_lag_index, first_lag_index + count).
CorrelationTrace cross_correlate_lags(const SampledWaveform& received, const SampledWaveform& reference,
                                      std::int64_t first_lag_index, Eigen::Index count, bool remove_mean = true);

struct PeakCandidate {
  Eigen::Index index = 0;
  double value = 0.0;
};

/// 1.4826 * median absolute deviation, a Gaussian-consistent spread estimate.
double robust_noise_floor(const Eigen::Ref<const Eigen::VectorXd>& values);

/// Correlation sidelobes of a finite burst: a weaker maximum within `span`
/// samples of a stronger one is dropped when below `ratio` times it.
struct SidelobeMask {
  Eigen::Index span = 0;
  double ratio = 0.3;
};

/// Local maxima above threshold_factor * robust_noise_floor, thinned so that
/// no two survivors are closer than `min_separation` samples (the larger
/// wins, the earlier lag on ties). Sorted by lag.
std::vector<PeakCandidate> detect_peaks(const CorrelationTrace& trace, double threshold_factor,
                                        Eigen::Index min_separation = 2, SidelobeMask mask = {});

struct DelayEstimate {
  double delay = 0.0;  // receiver-clock seconds
  double amplitude = 0.0;
  double fit_residual = 0.0;  // RMS over the fit window
  double uncertainty = 0.0;   // s, 1 sigma from the fit covariance
  double width = 0.0;         // s, lobe half-width
};

struct PeakFit {
  bool ok = false;
  std::string failure;
  DelayEstimate estimate;
  dsp::RaisedCosine<double> lobe;  // in samples relative to the candidate index
  Eigen::Index candidate = 0;
  int window_halfwidth = 0;
  int iterations = 0;
};

/// Raised-cosine least-squares fit over [candidate - halfwidth,
/// candidate + halfwidth], seeded by parabolic interpolation. A fit that
/// does not converge comes back with ok == false and a reason.
/// Throws std::invalid_argument if the window leaves the trace or
/// window_halfwidth < 2.
PeakFit fit_peak(const CorrelationTrace& trace, Eigen::Index candidate, int window_halfwidth);

/// Index of the largest value in [begin, end); earliest on ties.
Eigen::Index argmax(const CorrelationTrace& trace, Eigen::Index begin, Eigen::Index end);

}  // namespace cotdr
