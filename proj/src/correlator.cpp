#include "cotdr/correlator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cotdr {

namespace {

std::int64_t grid_offset(const SampledWaveform& received, const SampledWaveform& reference) {
  if (!(received.sample_rate > 0.0) || !(reference.sample_rate > 0.0)) {
    throw std::invalid_argument("waveform sample_rate must be positive");
  }
  if (std::abs(received.sample_rate - reference.sample_rate) > 1e-12 * reference.sample_rate) {
    throw std::invalid_argument("received and reference sample rates differ");
  }
  const double shift = (received.start_time - reference.start_time) * reference.sample_rate;
  const double rounded = std::round(shift);
  if (std::abs(shift - rounded) > 1e-6) {
    throw std::invalid_argument("received and reference sample grids are not aligned");
  }
  return static_cast<std::int64_t>(rounded);
}

Eigen::VectorXd centred(const Eigen::VectorXd& v, bool remove_mean) {
  if (!remove_mean || v.size() == 0) return v;
  return v.array() - v.mean();
}

}  // namespace

Eigen::VectorXd CorrelationTrace::lags() const {
  Eigen::VectorXd out(values.size());
  for (Eigen::Index k = 0; k < values.size(); ++k) out[k] = lag(k);
  return out;
}

CorrelationTrace cross_correlate(const SampledWaveform& received, const SampledWaveform& reference,
                                 CorrelationMethod method, bool remove_mean) {
  const std::int64_t offset = grid_offset(received, reference);
  if (received.size() == 0 || reference.size() == 0) {
    throw std::invalid_argument("cannot correlate an empty waveform");
  }
  const Eigen::VectorXd x = centred(received.samples, remove_mean);
  const Eigen::VectorXd h = centred(reference.samples, remove_mean);
  CorrelationTrace trace;
  trace.sample_period = reference.sample_period();
  trace.first_lag_index = offset - (h.size() - 1);
  if (method == CorrelationMethod::direct) {
    trace.values = dsp::correlate_direct(x, h, -(h.size() - 1), x.size() + h.size() - 1);
  } else {
    trace.values = dsp::correlate_fft(x, h);
  }
  return trace;
}

CorrelationTrace cross_correlate_lags(const SampledWaveform& received, const SampledWaveform& reference,
                                      std::int64_t first_lag_index, Eigen::Index count, bool remove_mean) {
  const std::int64_t offset = grid_offset(received, reference);
  if (count <= 0) throw std::invalid_argument("lag count must be positive");
  const Eigen::VectorXd x = centred(received.samples, remove_mean);
  const Eigen::VectorXd h = centred(reference.samples, remove_mean);
  CorrelationTrace trace;
  trace.sample_period = reference.sample_period();
  trace.first_lag_index = first_lag_index;
  trace.values = dsp::correlate_direct(x, h, first_lag_index - offset, count);
  return trace;
}

double robust_noise_floor(const Eigen::Ref<const Eigen::VectorXd>& values) {
  if (values.size() == 0) return 0.0;
  std::vector<double> buf(values.data(), values.data() + values.size());
  const auto mid = buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2);
  std::nth_element(buf.begin(), mid, buf.end());
  const double median = *mid;
  for (auto& v : buf) v = std::abs(v - median);
  std::nth_element(buf.begin(), mid, buf.end());
  return 1.4826 * *mid;
}

std::vector<PeakCandidate> detect_peaks(const CorrelationTrace& trace, double threshold_factor,
                                        Eigen::Index min_separation, SidelobeMask mask) {
  if (!(threshold_factor > 0.0)) throw std::invalid_argument("threshold_factor must be positive");
  const auto& v = trace.values;
  const Eigen::Index n = v.size();
  std::vector<PeakCandidate> out;
  if (n < 3) return out;

  // A noiseless trace has a zero MAD; fall back to a floor far below any
  // real peak so genuine lobes still register.
  const double scale = v.cwiseAbs().maxCoeff();
  const double floor = std::max(robust_noise_floor(v), 1e-12 * scale);
  const double threshold = threshold_factor * floor;

  std::vector<PeakCandidate> maxima;
  for (Eigen::Index i = 1; i + 1 < n; ++i) {
    if (v[i] > threshold && v[i] > v[i - 1] && v[i] >= v[i + 1]) maxima.push_back({i, v[i]});
  }
  std::stable_sort(maxima.begin(), maxima.end(),
                   [](const PeakCandidate& a, const PeakCandidate& b) { return a.value > b.value; });
  for (const auto& c : maxima) {
    const bool clear = std::none_of(out.begin(), out.end(), [&](const PeakCandidate& kept) {
      const auto gap = std::abs(kept.index - c.index);
      return gap < min_separation || (gap < mask.span && c.value < mask.ratio * kept.value);
    });
    if (clear) out.push_back(c);
  }
  std::sort(out.begin(), out.end(), [](const PeakCandidate& a, const PeakCandidate& b) { return a.index < b.index; });
  return out;
}

Eigen::Index argmax(const CorrelationTrace& trace, Eigen::Index begin, Eigen::Index end) {
  begin = std::max<Eigen::Index>(begin, 0);
  end = std::min(end, trace.size());
  if (end <= begin) throw std::invalid_argument("empty argmax range");
  Eigen::Index best = begin;
  for (Eigen::Index i = begin + 1; i < end; ++i) {
    if (trace.values[i] > trace.values[best]) best = i;
  }
  return best;
}

PeakFit fit_peak(const CorrelationTrace& trace, Eigen::Index candidate, int window_halfwidth) {
  if (window_halfwidth < 2) throw std::invalid_argument("window_halfwidth must be >= 2");
  if (candidate - window_halfwidth < 0 || candidate + window_halfwidth >= trace.size()) {
    throw std::invalid_argument("fit window leaves the correlation trace");
  }
  const auto& v = trace.values;
  const int hw = window_halfwidth;
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(2 * hw + 1, -hw, hw);
  const Eigen::VectorXd y = v.segment(candidate - hw, 2 * hw + 1);

  // Parabolic vertex through the three samples around the candidate.
  const double ym = y[hw - 1];
  const double y0 = y[hw];
  const double yp = y[hw + 1];
  const double curvature = ym - 2.0 * y0 + yp;
  double centre = 0.0;
  double peak = y0;
  if (curvature < 0.0) {
    centre = std::clamp(0.5 * (ym - yp) / curvature, -0.5, 0.5);
    peak = y0 - 0.25 * (ym - yp) * centre;
  }
  // Half-maximum crossings give the full width at half maximum, which is the
  // raised-cosine half-width.
  auto crossing = [&](int dir) {
    for (int k = 1; k <= hw; ++k) {
      const double inner = y[hw + dir * (k - 1)];
      const double outer = y[hw + dir * k];
      if (outer <= 0.5 * peak) {
        const double f = (inner - 0.5 * peak) / std::max(inner - outer, 1e-300);
        return static_cast<double>(k - 1) + std::clamp(f, 0.0, 1.0);
      }
    }
    return static_cast<double>(hw);
  };
  const double width0 = std::max(crossing(-1) + crossing(+1), 1.0);

  dsp::FitControls<double> controls;
  controls.max_width = 4.0 * hw;
  const auto fit = dsp::fit_raised_cosine(x, y, dsp::RaisedCosine<double>{centre, std::max(peak, 1e-300), width0}, controls);

  PeakFit out;
  out.candidate = candidate;
  out.window_halfwidth = hw;
  out.iterations = fit.iterations;
  out.lobe = fit.lobe;
  if (!fit.converged) {
    out.failure = fit.failure;
    return out;
  }
  const double period = trace.sample_period;
  out.ok = true;
  out.estimate.delay = trace.lag(candidate) + fit.lobe.center * period;
  out.estimate.amplitude = fit.lobe.amplitude;
  out.estimate.fit_residual = std::sqrt(fit.rss / static_cast<double>(y.size()));
  out.estimate.width = fit.lobe.width * period;
  const double sigma_samples = std::sqrt(std::max(fit.covariance(0, 0), 0.0));
  out.estimate.uncertainty = std::max(sigma_samples, 1e-9) * period;
  return out;
}

}  // namespace cotdr
