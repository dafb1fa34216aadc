// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "emert/error.hpp"
#include "emert/eyeprep.hpp"

using namespace emert;
using namespace emert::eye;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Uniform fixation stream with a smooth gaze path and pupil 4 + small wave.
RawEyeStream make_stream(std::size_t n, double period = 10.0) {
  RawEyeStream s;
  for (std::size_t i = 0; i < n; ++i) {
    EyeRecord r;
    r.timestamp_ms = static_cast<double>(i) * period;
    r.gaze_x = 0.5 + 0.1 * std::sin(0.1 * static_cast<double>(i));
    r.gaze_y = 0.4 + 0.05 * std::cos(0.07 * static_cast<double>(i));
    r.gaze_dir_x = 0.01 * static_cast<double>(i % 5);
    r.gaze_dir_y = -0.02;
    r.pupil_mm = 4.0 + 0.2 * std::sin(0.05 * static_cast<double>(i));
    r.eye_pos_x = 30.0;
    r.eye_pos_y = -5.0;
    r.eye_pos_z = 600.0;
    s.records.push_back(r);
  }
  return s;
}

void mark_blink(RawEyeStream& s, std::size_t first, std::size_t count, bool drop_pupil) {
  for (std::size_t i = first; i < first + count; ++i) {
    s.records[i].event = EventType::kBlink;
    if (drop_pupil) s.records[i].pupil_mm = kNaN;
  }
}

bool same_records(const RawEyeStream& a, const RawEyeStream& b) {
  if (a.records.size() != b.records.size()) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    if (a.records[i].timestamp_ms != b.records[i].timestamp_ms || a.records[i].event != b.records[i].event)
      return false;
    for (std::size_t c = 0; c < kChannels; ++c) {
      const double x = channel(a.records[i], c), y = channel(b.records[i], c);
      if (!(x == y || (std::isnan(x) && std::isnan(y)))) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("blink validity at the three boundary fixtures") {
  CHECK_FALSE(blink_duration_valid(50.0));
  CHECK(blink_duration_valid(200.0));
  CHECK_FALSE(blink_duration_valid(500.0));
  CHECK(blink_duration_valid(75.0));
  CHECK(blink_duration_valid(425.0));

  for (auto [records, valid] : {std::pair{5u, false}, std::pair{20u, true}, std::pair{50u, false}}) {
    auto s = make_stream(120);
    mark_blink(s, 30, records, false);
    const auto blinks = detect_blinks(s);
    REQUIRE(blinks.size() == 1);
    CHECK(blinks[0].first == 30);
    CHECK(blinks[0].last == 30 + records - 1);
    CHECK(blinks[0].duration_ms() == doctest::Approx(10.0 * records));
    CHECK(blinks[0].valid == valid);
  }
}

TEST_CASE("blink evidence sources") {
  auto s = make_stream(100);
  mark_blink(s, 10, 3, false);                       // flag only
  for (std::size_t i = 50; i < 54; ++i) s.records[i].pupil_mm = kNaN;  // dropout only
  CHECK(detect_blinks(s, BlinkEvidence::kEventFlag).size() == 1);
  CHECK(detect_blinks(s, BlinkEvidence::kPupilDropout).size() == 1);
  CHECK(detect_blinks(s, BlinkEvidence::kUnion).size() == 2);
  CHECK(detect_blinks(make_stream(40)).empty());
}

TEST_CASE("invalid blink interpolates to the midpoint") {
  RawEyeStream s = make_stream(3, 50.0);
  s.records[0].pupil_mm = 4.0;
  s.records[1].pupil_mm = kNaN;
  s.records[1].event = EventType::kBlink;
  s.records[2].pupil_mm = 5.0;
  const auto blinks = detect_blinks(s);
  REQUIRE(blinks.size() == 1);
  CHECK_FALSE(blinks[0].valid);
  const auto fixed = correct_blinks(s, blinks);
  CHECK(fixed.records[1].pupil_mm == doctest::Approx(4.5).epsilon(1e-12));
}

TEST_CASE("valid blinks are left unchanged") {
  auto s = make_stream(100);
  mark_blink(s, 40, 20, false);
  const auto blinks = detect_blinks(s);
  REQUIRE(blinks.size() == 1);
  CHECK(blinks[0].valid);
  CHECK(same_records(correct_blinks(s, blinks), s));
}

TEST_CASE("invalid blinks replace gaze and pupil by linear interpolation") {
  auto s = make_stream(100);
  mark_blink(s, 40, 4, true);
  const auto fixed = correct_blinks(s, detect_blinks(s));
  const auto& a = fixed.records[39];
  const auto& b = fixed.records[44];
  for (std::size_t i = 40; i < 44; ++i) {
    const double w = (fixed.records[i].timestamp_ms - a.timestamp_ms) / (b.timestamp_ms - a.timestamp_ms);
    CHECK(fixed.records[i].pupil_mm == doctest::Approx(a.pupil_mm + w * (b.pupil_mm - a.pupil_mm)).epsilon(1e-12));
    CHECK(fixed.records[i].gaze_x == doctest::Approx(a.gaze_x + w * (b.gaze_x - a.gaze_x)).epsilon(1e-12));
    CHECK_FALSE(has_missing(fixed.records[i]));
  }
}

TEST_CASE("invalid blink at the stream start takes the first valid value") {
  auto s = make_stream(50);
  mark_blink(s, 0, 3, true);
  for (std::size_t i = 0; i < 3; ++i) s.records[i].gaze_x = kNaN;
  const auto blinks = detect_blinks(s);
  REQUIRE(blinks.size() == 1);
  CHECK_FALSE(blinks[0].valid);
  const auto fixed = correct_blinks(s, blinks);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(fixed.records[i].pupil_mm == s.records[3].pupil_mm);
    CHECK(fixed.records[i].gaze_x == s.records[3].gaze_x);
  }
}

TEST_CASE("blink correction is idempotent") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto s = synthetic_stream(seed);
    const auto blinks = detect_blinks(s);
    const auto once = correct_blinks(s, blinks);
    const auto twice = correct_blinks(once, blinks);
    CHECK(same_records(once, twice));
  }
}

TEST_CASE("all-blink stream is unrecoverable") {
  auto s = make_stream(30);
  mark_blink(s, 0, 30, true);
  for (auto& r : s.records) r.gaze_x = r.gaze_y = kNaN;
  CHECK_THROWS_AS(correct_blinks(s, detect_blinks(s)), DataError);
}

TEST_CASE("saccade interpolation") {
  auto s = make_stream(3);
  s.records[0].pupil_mm = 4.0;
  s.records[1].event = EventType::kSaccade;
  s.records[2].pupil_mm = 6.0;
  const auto one = correct_saccades(s);
  CHECK(one.records[1].pupil_mm == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(one.records[1].event == EventType::kSaccade);

  auto t = make_stream(4);
  t.records[0].pupil_mm = 4.0;
  t.records[1].event = t.records[2].event = EventType::kSaccade;
  t.records[3].pupil_mm = 6.0;
  const auto two = correct_saccades(t);
  CHECK(std::abs(two.records[1].pupil_mm - 14.0 / 3.0) < 1e-9);
  CHECK(std::abs(two.records[2].pupil_mm - 16.0 / 3.0) < 1e-9);

  const auto plain = make_stream(20);
  CHECK(same_records(correct_saccades(plain), plain));
}

TEST_CASE("pupil fluctuation examples") {
  auto s = make_stream(5);
  for (auto& r : s.records) r.pupil_mm = 4.0;
  for (const auto& r : pupil_fluctuation(s).records) CHECK(r.pupil_mm == 0.0);

  auto t = make_stream(3);
  t.records[0].pupil_mm = 4.0;
  t.records[1].pupil_mm = 4.2;
  t.records[2].pupil_mm = 4.1;
  const auto d = pupil_fluctuation(t);
  CHECK(d.records[0].pupil_mm == 0.0);
  CHECK(d.records[1].pupil_mm == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(d.records[2].pupil_mm == doctest::Approx(-0.1).epsilon(1e-12));
}

TEST_CASE("pupil fluctuation telescopes") {
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> pupil(2.0, 8.0);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = make_stream(2 + trial % 50);
    for (auto& r : s.records) r.pupil_mm = pupil(rng);
    const auto d = pupil_fluctuation(s);
    double sum = 0.0;
    for (const auto& r : d.records) sum += r.pupil_mm;
    CHECK(std::abs(sum - (s.records.back().pupil_mm - s.records.front().pupil_mm)) < 1e-12);
  }
}

TEST_CASE("fixation filtering") {
  std::vector<FixationFrame> frames;
  for (int i = 0; i < 100; ++i) frames.push_back({10.0 * i, {static_cast<double>(i)}});
  CHECK(filter_fixations(frames, {}).size() == 100);

  BlinkInterval one;
  one.start_ms = 250.0;
  one.end_ms = 260.0;
  const auto minus_one = filter_fixations(frames, {one});
  CHECK(minus_one.size() == 99);
  for (const auto& f : minus_one) CHECK(f.timestamp_ms != 250.0);

  BlinkInterval valid = one;
  valid.valid = true;
  CHECK(filter_fixations(frames, {valid}).size() == 100);

  BlinkInterval a, b, c;
  a.start_ms = 100.0, a.end_ms = 130.0;
  b.start_ms = 400.0, b.end_ms = 440.0;
  c.start_ms = 700.0, c.end_ms = 730.0;
  CHECK(filter_fixations(frames, {a, b, c}).size() == 90);
}

TEST_CASE("uniform resampling") {
  const auto s = make_stream(32);
  const Tensor same = resample_uniform(s, 32);
  REQUIRE(same.rows() == 32);
  REQUIRE(same.cols() == kChannels);
  for (std::size_t i = 0; i < 32; ++i)
    for (std::size_t c = 0; c < kChannels; ++c) CHECK(same.at(i, c) == doctest::Approx(channel(s.records[i], c)).epsilon(1e-12));

  const auto s64 = make_stream(64);
  const Tensor half = resample_uniform(s64, 32);
  for (std::size_t i = 0; i < 32; ++i)
    for (std::size_t c = 0; c < kChannels; ++c)
      CHECK(half.at(i, c) == doctest::Approx(channel(s64.records[2 * i], c)).epsilon(1e-12));

  CHECK_THROWS_AS(resample_uniform(make_stream(1), 4), DataError);
}

TEST_CASE("a linear ramp stays a linear ramp under resampling") {
  for (std::size_t n : {7u, 40u, 101u}) {
    auto s = make_stream(n, 7.5);
    for (auto& r : s.records) r.gaze_x = 0.25 + 0.003 * r.timestamp_ms;
    for (std::size_t len : {2u, 5u, 32u, 77u}) {
      const Tensor t = resample_uniform(s, len);
      const double d = t.at(1, 0) - t.at(0, 0);
      for (std::size_t i = 1; i < len; ++i) CHECK(std::abs(t.at(i, 0) - t.at(i - 1, 0) - d) < 1e-9);
    }
  }
}

TEST_CASE("full pipeline output has no missing values and monotone time") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const auto s = synthetic_stream(seed);
    CHECK_NOTHROW(check_monotone(s));
    std::vector<FixationFrame> frames;
    for (std::size_t i = 0; i < s.records.size(); i += 3) frames.push_back({s.records[i].timestamp_ms, {1.0, 2.0}});
    const auto out = preprocess(s, frames);
    CHECK(out.sequence.rows() == 32);
    CHECK(out.sequence.all_finite());
    CHECK_NOTHROW(check_monotone(out.cleaned));
    for (const auto& r : out.cleaned.records) CHECK_FALSE(has_missing(r));
    CHECK(out.pupil_fluct.size() == out.cleaned.records.size());
    CHECK(out.report.fixations_kept <= out.report.fixations_in);
    CHECK(out.fixations.size() == out.report.fixations_kept);
  }
}

TEST_CASE("non-monotone timestamps are rejected") {
  auto s = make_stream(5);
  s.records[3].timestamp_ms = s.records[2].timestamp_ms;
  CHECK_THROWS_AS(check_monotone(s), DataError);
}

TEST_CASE("raw CSV round trip") {
  auto s = synthetic_stream(3, 50);
  std::stringstream buf;
  write_raw_csv(buf, s);
  const auto back = read_raw_csv(buf);
  REQUIRE(back.records.size() == s.records.size());
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    CHECK(back.records[i].event == s.records[i].event);
    CHECK(back.records[i].timestamp_ms == doctest::Approx(s.records[i].timestamp_ms));
    CHECK(std::isnan(back.records[i].pupil_mm) == std::isnan(s.records[i].pupil_mm));
  }
  std::stringstream bad("timestamp_ms,gaze_x\n1,2\n");
  CHECK_THROWS_AS(read_raw_csv(bad), DataError);
}
