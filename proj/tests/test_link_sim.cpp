#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "cotdr/correlator.hpp"
#include "cotdr/link_sim.hpp"

using namespace cotdr;

namespace {

FiberSpan span_m(double length) {
  FiberSpan s;
  s.length_m = length;
  return s;
}

// span - node - span, instrument sites at every reflector.
LinkTopology span_node_span_link(double node_delay = 50e-9) {
  LinkTopology link;
  link.sections = {span_m(10e3), NodeDevice{node_delay, 15.0, true}, span_m(20e3)};
  link.reflectors.assign(4, DelimitingReflector{});
  return link;
}

}  // namespace

TEST_CASE("fiber span delay model") {
  FiberSpan s = span_m(10e3);
  CHECK(s.one_way_delay() == doctest::Approx(50e-6));
  CHECK(s.round_trip_delay() == 2.0 * s.one_way_delay());
  s.temperature_offset_k = 3.0;
  FiberSpan ref = span_m(10e3);
  CHECK(s.one_way_delay() / ref.one_way_delay() == doctest::Approx(1.0 + 7e-6 * 3.0).epsilon(1e-15));
}

TEST_CASE("temperature scaling of a 100 km span reproduces 35 ps per 0.01 K") {
  FiberSpan cold = span_m(100e3);
  FiberSpan warm = cold;
  warm.temperature_offset_k = 0.01;
  CHECK(std::abs((warm.one_way_delay() - cold.one_way_delay()) - 35e-12) < 0.1e-12);
}

TEST_CASE("sw1 on a 10 km span gives two echoes 100 us apart") {
  LinkTopology link;
  link.sections = {span_m(10e3)};
  link.reflectors.assign(2, DelimitingReflector{});
  const auto echoes = enumerate_echoes(link, 1, {true, false});
  REQUIRE(echoes.size() == 2);
  CHECK(echoes[1].delay - echoes[0].delay == doctest::Approx(100e-6).epsilon(1e-12));
  CHECK(echoes[0].element == 1);
  CHECK(echoes[1].element == 0);
  CHECK(echoes[0].amplitude > echoes[1].amplitude);
}

TEST_CASE("zero-length span: both echoes coincide up to the calibration offset") {
  LinkTopology link;
  link.sections = {span_m(0.0)};
  link.reflectors.assign(2, DelimitingReflector{});
  auto echoes = enumerate_echoes(link, 1, {true, false});
  REQUIRE(echoes.size() == 2);
  CHECK(echoes[0].delay == echoes[1].delay);

  link.reflectors[0].kind = ReflectorKind::tff;
  link.reflectors[0].calibration_offset = 2e-9;
  echoes = enumerate_echoes(link, 1, {true, false});
  CHECK(echoes[1].delay - echoes[0].delay == doctest::Approx(2e-9));
}

TEST_CASE("both switches on the node give exactly one transmissive echo") {
  const auto link = span_node_span_link();
  const auto echoes = enumerate_echoes(link, 1, {true, true});
  REQUIRE(echoes.size() == 1);
  CHECK(echoes[0].path == EchoPath::transmissive);
  // jumper to reflector 1 + node + jumper from reflector 2, 2 m each at 5 ns/m
  CHECK(echoes[0].delay == doctest::Approx(10e-9 + 50e-9 + 10e-9));
  const auto out = enumerate_echoes(link, 1, {false, true});
  REQUIRE(out.size() == 1);
  CHECK(out[0].element == 2);
  CHECK(out[0].delay == doctest::Approx(20e-9));
}

TEST_CASE("an isolator blocks every reverse path through the node") {
  const auto link = span_node_span_link();
  // Instrument after the second span looks upstream: only the second span's
  // reflectors are visible.
  const auto echoes = enumerate_echoes(link, 3, {true, false});
  REQUIRE(echoes.size() == 2);
  for (const auto& e : echoes) CHECK(e.element >= 2);

  auto passive = link;
  std::get<NodeDevice>(passive.sections[1]).unidirectional = false;
  const auto through = enumerate_echoes(passive, 3, {true, false});
  CHECK(through.size() == 4);
  CHECK(std::any_of(through.begin(), through.end(), [](const Echo& e) { return e.element == 0; }));
}

TEST_CASE("echo lists are sorted with positive delays and amplitudes") {
  auto link = span_node_span_link();
  std::get<FiberSpan>(link.sections[0]).connectors = {{2500.0, -40.0}, {7000.0, -45.0}};
  std::get<NodeDevice>(link.sections[1]).unidirectional = false;
  const auto echoes = enumerate_echoes(link, 3, {true, false});
  CHECK(echoes.size() == 6);
  CHECK(std::is_sorted(echoes.begin(), echoes.end(), [](const Echo& a, const Echo& b) { return a.delay < b.delay; }));
  for (const auto& e : echoes) {
    CHECK(e.delay > 0.0);
    CHECK(e.amplitude > 0.0);
  }
}

TEST_CASE("invalid switch states and topologies are rejected") {
  const auto link = span_node_span_link();
  CHECK_THROWS_AS(enumerate_echoes(link, 1, {false, false}), std::invalid_argument);
  CHECK_THROWS_AS(enumerate_echoes(link, 0, {false, true}), std::invalid_argument);
  CHECK_THROWS_AS(enumerate_echoes(link, 7, {true, false}), std::invalid_argument);

  auto bad = link;
  bad.reflectors.pop_back();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = link;
  std::get<FiberSpan>(bad.sections[0]).length_m = -1.0;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("sections[0].length_m"), std::invalid_argument);
  bad = link;
  bad.reflectors[1].probe_reflectance_db = 0.5;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("reflectors[1]"), std::invalid_argument);
  bad = link;
  bad.reflectors[2].calibration_offset = 1e-9;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("reversing a fiber-only link keeps the total one-way delay") {
  LinkTopology link;
  link.sections = {span_m(1234.5), span_m(20e3), span_m(3.3e3)};
  link.reflectors.assign(4, DelimitingReflector{});
  std::get<FiberSpan>(link.sections[1]).connectors = {{100.0, -40.0}};
  const auto rev = link.reversed();
  CHECK(rev.total_one_way_delay() == doctest::Approx(link.total_one_way_delay()).epsilon(1e-15));
  CHECK(std::get<FiberSpan>(rev.sections[1]).connectors[0].position_m == doctest::Approx(19900.0));
  CHECK_NOTHROW(rev.validate());
}

TEST_CASE("single echo, ideal clock, no noise: the record is the probe shifted by 1 us") {
  const auto probe = generate_probe(1, 256, 10e9);
  const ProbeSignal signal(probe, 1.0);
  const auto ref = shape_waveform(probe, 4, 1.0);
  const auto rx = synthesize_received({{1e-6, 1.0}}, signal, ClockModel{}, {40e9, 0.0, 0},
                                      AcquisitionWindow{1e-6, 1e-6 + probe.burst_duration()});
  REQUIRE(rx.size() == ref.size());
  CHECK(rx.start_time - ref.start_time == doctest::Approx(1e-6).epsilon(1e-12));
  // ulp(1 us) ~ 2e-22 s times an edge slope ~ 1.6e10 /s
  CHECK((rx.samples - ref.samples).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("a +100 ppm clock makes a 500 us echo appear 50 ns early") {
  ClockModel clock;
  clock.fractional_offset = 100e-6;
  CHECK(500e-6 - clock.apparent(500e-6) == doctest::Approx(50e-9).epsilon(1e-3));
  CHECK(clock.apparent(500e-6) * (1.0 + clock.fractional_offset) == doctest::Approx(500e-6).epsilon(1e-15));

  const auto probe = generate_probe(1, 256, 10e9);
  const ProbeSignal signal(probe, 1.0);
  const auto ref = shape_waveform(probe, 4, 1.0);
  const double apparent = clock.apparent(500e-6);
  const auto rx = synthesize_received({{500e-6, 1.0}}, signal, clock, {40e9, 0.0, 0},
                                      AcquisitionWindow{apparent - 1e-9, apparent + 30e-9});
  const auto t = cross_correlate(rx, ref);
  Eigen::Index best = 0;
  t.values.maxCoeff(&best);
  const auto fit = fit_peak(t, best, 8);
  REQUIRE(fit.ok);
  CHECK(std::abs(fit.estimate.delay - apparent) < 1e-12);
  CHECK(500e-6 - fit.estimate.delay == doctest::Approx(50e-9).epsilon(1e-3));
}

TEST_CASE("two echoes with amplitudes 1.0 and 0.5 give correlation peaks in ratio 2:1") {
  const auto probe = generate_probe(1, 1024, 10e9);
  const auto ref = shape_waveform(probe, 4, 1.0);
  const auto rx = synthesize_received({{1e-6, 1.0}, {2e-6, 0.5}}, ProbeSignal(probe, 1.0), ClockModel{},
                                      {40e9, 0.0, 0});
  const auto t = cross_correlate(rx, ref);
  const auto a = fit_peak(t, argmax(t, -t.first_lag_index + 39990, -t.first_lag_index + 40010), 8);
  const auto b = fit_peak(t, argmax(t, -t.first_lag_index + 79990, -t.first_lag_index + 80010), 8);
  REQUIRE(a.ok);
  REQUIRE(b.ok);
  CHECK(a.estimate.amplitude / b.estimate.amplitude == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("a window that cuts through an echo burst is rejected") {
  const auto probe = generate_probe(1, 256, 10e9);
  const ProbeSignal signal(probe, 1.0);
  CHECK_THROWS_AS(synthesize_received({{1e-6, 1.0}}, signal, ClockModel{}, {40e9, 0.0, 0},
                                      AcquisitionWindow{1e-6 + 5e-9, 2e-6}),
                  std::invalid_argument);
  CHECK_NOTHROW(synthesize_received({{1e-6, 1.0}}, signal, ClockModel{}, {40e9, 0.0, 0},
                                    AcquisitionWindow{2e-6, 3e-6}));
}

TEST_CASE("synthesis is deterministic for fixed seeds, noise level matches") {
  const auto probe = generate_probe(1, 256, 10e9);
  const ProbeSignal signal(probe, 1.0);
  ClockModel clock;
  clock.jitter_rms = 0.5e-12;
  clock.seed = 4;
  const auto a = synthesize_received({{1e-6, 1.0}}, signal, clock, {40e9, 0.1, 77});
  const auto b = synthesize_received({{1e-6, 1.0}}, signal, clock, {40e9, 0.1, 77});
  CHECK(a.samples == b.samples);
  const auto noise = synthesize_received({}, signal, clock, {40e9, 0.1, 77}, AcquisitionWindow{0.0, 5e-6});
  const double sd = std::sqrt((noise.samples.array() - noise.samples.mean()).square().mean());
  CHECK(sd == doctest::Approx(0.1).epsilon(0.02));
}

TEST_CASE("linear-interpolation synthesis reproduces a whole-sample shift exactly") {
  const auto probe = generate_probe(1, 128, 10e9);
  const auto ref = shape_waveform(probe, 4, 0.5);
  const double shift = 300 * ref.sample_period();
  const auto rx = synthesize_received({{shift, 2.0}}, ref, ClockModel{}, 0.0, 0,
                                      AcquisitionWindow{shift, shift + probe.burst_duration()});
  REQUIRE(rx.size() == ref.size());
  CHECK((rx.samples - 2.0 * ref.samples).cwiseAbs().maxCoeff() < 1e-12);
}
