#include <cmath>
#include <random>

#include "doctest.h"

#include "cotdr/correlator.hpp"
#include "cotdr/link_sim.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cotdr;

namespace {

SampledWaveform random_waveform(std::mt19937_64& rng, Eigen::Index n, double rate, std::int64_t start_index) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SampledWaveform w;
  w.sample_rate = rate;
  w.start_time = (static_cast<double>(start_index) + 0.5) / rate;
  w.samples.resize(n);
  for (auto& v : w.samples) v = u(rng);
  return w;
}

double max_relative_difference(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff();
}

CorrelationTrace trace_of(std::vector<double> v) {
  CorrelationTrace t;
  t.values = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  t.sample_period = 1.0;
  return t;
}

}  // namespace

TEST_CASE("autocorrelation has its global maximum at lag 0") {
  const auto w = shape_waveform(generate_probe(5, 256, 10e9), 4, 1.0);
  for (auto method : {CorrelationMethod::direct, CorrelationMethod::fft}) {
    const auto t = cross_correlate(w, w, method);
    Eigen::Index best = 0;
    t.values.maxCoeff(&best);
    CHECK(t.lag(best) == 0.0);
  }
}

TEST_CASE("a record delayed by 1 us correlates at lag 1 us") {
  const auto ref = shape_waveform(generate_probe(5, 256, 10e9), 4, 1.0);
  SampledWaveform shifted = ref;
  shifted.start_time += 1e-6;
  const auto t = cross_correlate(shifted, ref);
  Eigen::Index best = 0;
  t.values.maxCoeff(&best);
  CHECK(std::abs(t.lag(best) - 1e-6) <= 0.5 * ref.sample_period());
}

TEST_CASE("direct correlation matches the definition sample by sample") {
  std::mt19937_64 rng(3);
  const auto rx = random_waveform(rng, 97, 40e9, 12);
  const auto ref = random_waveform(rng, 31, 40e9, -3);
  const auto expected = oracle::correlate_by_definition(rx, ref);
  for (auto method : {CorrelationMethod::direct, CorrelationMethod::fft}) {
    const auto t = cross_correlate(rx, ref, method, false);
    REQUIRE(t.first_lag_index == expected.first_lag_index);
    REQUIRE(t.size() == static_cast<Eigen::Index>(expected.values.size()));
    for (Eigen::Index k = 0; k < t.size(); ++k) CHECK(t.values[k] == doctest::Approx(expected.values[k]).epsilon(1e-12));
  }
}

TEST_CASE("fft and direct correlation agree to 1e-9 on 1e4-sample inputs") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const auto rx = random_waveform(rng, 10000, 40e9, 0);
    const auto ref = random_waveform(rng, 10000, 40e9, 0);
    const auto d = cross_correlate(rx, ref, CorrelationMethod::direct);
    const auto f = cross_correlate(rx, ref, CorrelationMethod::fft);
    CHECK(max_relative_difference(f.values, d.values) < 1e-9);
  }
}

TEST_CASE("ranged correlation equals the matching slice of the full trace") {
  std::mt19937_64 rng(4);
  const auto rx = random_waveform(rng, 500, 40e9, 100);
  const auto ref = random_waveform(rng, 64, 40e9, 0);
  const auto full = cross_correlate(rx, ref, CorrelationMethod::direct);
  const auto part = cross_correlate_lags(rx, ref, 120, 40);
  for (Eigen::Index k = 0; k < part.size(); ++k) {
    CHECK(part.values[k] == doctest::Approx(full.values[120 - full.first_lag_index + k]).epsilon(1e-12));
  }
}

TEST_CASE("mismatched sample rates are rejected") {
  std::mt19937_64 rng(1);
  const auto a = random_waveform(rng, 100, 40e9, 0);
  const auto b = random_waveform(rng, 100, 10e9, 0);
  CHECK_THROWS_AS(cross_correlate(a, b), std::invalid_argument);
  auto c = a;
  c.start_time += 0.3 / 40e9;
  CHECK_THROWS_AS(cross_correlate(c, a), std::invalid_argument);
}

TEST_CASE("detect_peaks finds both echoes of a two-echo record 10 us apart") {
  const auto probe = generate_probe(1, 1024, 10e9);
  const ProbeSignal signal(probe, 1.0);
  const auto ref = shape_waveform(probe, 1, 1.0);
  const EchoList echoes{{5e-6, 1.0}, {15e-6, 0.3}};
  const auto rx = synthesize_received(echoes, signal, ClockModel{}, {10e9, 0.05, 9});
  const auto t = cross_correlate(rx, ref);
  const auto peaks = detect_peaks(t, 8.0, 2, {.span = 1024, .ratio = 0.25});
  REQUIRE(peaks.size() == 2);
  CHECK(std::abs(t.lag(peaks[0].index) - 5e-6) <= 100e-12);
  CHECK(std::abs(t.lag(peaks[1].index) - 15e-6) <= 100e-12);
}

TEST_CASE("detect_peaks: a single echo yields one candidate at its lag +/- 1 sample") {
  const auto probe = generate_probe(2, 1024, 10e9);
  const auto ref = shape_waveform(probe, 4, 1.0);
  const EchoList echoes{{2.5e-6 + 7e-12, 0.5}};
  const auto rx = synthesize_received(echoes, ProbeSignal(probe, 1.0), ClockModel{}, {40e9, 0.05, 3});
  const auto t = cross_correlate(rx, ref);
  const auto peaks = detect_peaks(t, 8.0, 8, {.span = 4096, .ratio = 0.25});
  REQUIRE(peaks.size() == 1);
  CHECK(std::abs(t.lag(peaks[0].index) - 2.5e-6) <= ref.sample_period() + 7e-12);
}

TEST_CASE("detect_peaks on pure noise stays silent in at least 99 of 100 seeds") {
  const auto ref = shape_waveform(generate_probe(1, 1024, 10e9), 1, 1.0);
  int noisy = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto rx = synthesize_received({}, ProbeSignal(generate_probe(1, 1024, 10e9), 1.0), ClockModel{},
                                        {10e9, 1.0, seed}, AcquisitionWindow{0.0, 2e-6});
    if (!detect_peaks(cross_correlate(rx, ref), 8.0, 2).empty()) ++noisy;
  }
  CHECK(noisy <= 1);
}

TEST_CASE("detect_peaks keeps the earlier of two equal adjacent maxima") {
  const auto t = trace_of({0, 0, 0, 1, 5, 5, 1, 0, 0, 0, 0});
  const auto peaks = detect_peaks(t, 0.5, 2);
  REQUIRE(peaks.size() == 1);
  CHECK(peaks[0].index == 4);
}

TEST_CASE("detect_peaks enforces the minimum separation, larger peak wins") {
  const auto t = trace_of({0, 0, 3, 0, 5, 0, 0, 0, 0, 0, 0, 4, 0, 0});
  const auto peaks = detect_peaks(t, 0.5, 4);
  REQUIRE(peaks.size() == 2);
  CHECK(peaks[0].index == 4);
  CHECK(peaks[1].index == 11);
  CHECK_THROWS_AS(detect_peaks(t, 0.0), std::invalid_argument);
}

TEST_CASE("fit_peak recovers a synthetic raised cosine centred at sample 10.35") {
  auto t = CorrelationTrace{};
  t.values = oracle::raised_cosine_samples(21, 10.35, 3.0, 4.0);
  t.sample_period = 1.0;
  const auto fit = fit_peak(t, 10, 6);
  REQUIRE(fit.ok);
  CHECK(fit.estimate.delay == doctest::Approx(10.35).epsilon(0.001));
  CHECK(std::abs(fit.estimate.delay - 10.35) < 0.01);
  CHECK(fit.estimate.uncertainty > 0.0);
}

TEST_CASE("fit_peak on a grid-centred peak returns that grid point") {
  auto t = CorrelationTrace{};
  t.values = oracle::raised_cosine_samples(31, 15.0, 1.0, 5.0);
  t.sample_period = 25e-12;
  t.first_lag_index = 100;
  const auto fit = fit_peak(t, 15, 8);
  REQUIRE(fit.ok);
  CHECK(std::abs(fit.estimate.delay - 115 * 25e-12) < 1e-6 * 25e-12);
}

TEST_CASE("fit_peak window preconditions") {
  auto t = CorrelationTrace{};
  t.values = oracle::raised_cosine_samples(11, 5.0, 1.0, 3.0);
  t.sample_period = 1.0;
  CHECK_THROWS_AS(fit_peak(t, 5, 1), std::invalid_argument);
  CHECK_THROWS_AS(fit_peak(t, 2, 4), std::invalid_argument);
}

TEST_CASE("fit_peak reports failure instead of a value on a flat window") {
  auto t = CorrelationTrace{};
  t.values = Eigen::VectorXd::Zero(21);
  t.sample_period = 1.0;
  const auto fit = fit_peak(t, 10, 5);
  CHECK_FALSE(fit.ok);
  CHECK_FALSE(fit.failure.empty());
}

TEST_CASE("noiseless echo at 100 us with oversampling 4 is located to < 1 ps") {
  for (double frac : {0.0, 0.13, 0.29, 0.5, 0.71, 0.96}) {
    const double delay = 100e-6 + frac * 25e-12;
    const auto shot = fixture::single_echo(delay, 1.0, 0.0, 0);
    REQUIRE(shot.fit.ok);
    CHECK(std::abs(shot.fit.estimate.delay - delay) < 1e-12);
  }
}

TEST_CASE("shift by whole samples moves the fitted centre by the same amount") {
  const double base = 3e-6 + 0.37 * 25e-12;
  const auto a = fixture::single_echo(base, 1.0, 0.0, 0);
  for (int k : {1, 5, 40}) {
    const auto b = fixture::single_echo(base + k * 25e-12, 1.0, 0.0, 0);
    CHECK(std::abs((b.fit.estimate.delay - a.fit.estimate.delay) / 25e-12 - k) < 1e-3);
  }
}

TEST_CASE("scaling the received amplitude leaves the fitted centre unchanged") {
  const double delay = 7e-6 + 0.61 * 25e-12;
  const auto ref = fixture::single_echo(delay, 1.0, 0.0, 0);
  for (double scale : {1e-4, 0.02, 3.0, 250.0}) {
    const auto s = fixture::single_echo(delay, scale, 0.0, 0);
    CHECK(std::abs(s.fit.estimate.delay - ref.fit.estimate.delay) / 25e-12 < 0.01);
  }
}

TEST_CASE("fitted-centre RMS error does not grow with SNR") {
  const double delay = 4e-6 + 0.42 * 25e-12;
  double previous = std::numeric_limits<double>::infinity();
  for (double snr_db : {-10.0, 0.0, 10.0, 20.0}) {
    const double sigma = std::pow(10.0, -snr_db / 20.0);
    double ss = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto shot = fixture::single_echo(delay, 1.0, sigma, 100 + seed);
      REQUIRE(shot.fit.ok);
      ss += std::pow(shot.fit.estimate.delay - delay, 2);
    }
    const double rms = std::sqrt(ss / 20.0);
    MESSAGE("SNR " << snr_db << " dB: RMS " << rms * 1e12 << " ps");
    CHECK(rms <= previous);
    previous = rms;
  }
}
