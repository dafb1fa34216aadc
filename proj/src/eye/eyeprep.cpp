// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "emert/eyeprep.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

#include <json.hpp>

#include "emert/error.hpp"
#include "emert/log.hpp"

namespace emert::eye {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::array<std::size_t, 5> kGazePupil = {0, 1, 2, 3, 4};
constexpr std::size_t kPupil = 4;

const std::array<const char*, 10> kColumns = {"timestamp_ms", "gaze_x",    "gaze_y",    "gaze_dir_x",
                                              "gaze_dir_y",   "pupil_mm",  "eye_pos_x", "eye_pos_y",
                                              "eye_pos_z",    "event_type"};

const char* event_name(EventType e) {
  switch (e) {
    case EventType::kFixation: return "fixation";
    case EventType::kSaccade: return "saccade";
    case EventType::kBlink: return "blink";
  }
  return "fixation";
}

// Nearest index in the given direction whose channel value is present and
// which is not excluded.
template <typename Excluded>
std::optional<std::size_t> nearest_present(const std::vector<EyeRecord>& recs, long from, long step,
                                           std::size_t ch, Excluded excluded) {
  for (long i = from; i >= 0 && i < static_cast<long>(recs.size()); i += step) {
    const auto u = static_cast<std::size_t>(i);
    if (!excluded(u) && !std::isnan(channel(recs[u], ch))) return u;
  }
  return std::nullopt;
}

// Rewrites channel `ch` on records [first, last] from the flanking present
// values, time-linearly, or by extension at the edges.
template <typename Excluded>
void bridge(std::vector<EyeRecord>& recs, std::size_t first, std::size_t last, std::size_t ch,
            bool only_missing, Excluded excluded) {
  const auto before = nearest_present(recs, static_cast<long>(first) - 1, -1, ch, excluded);
  const auto after = nearest_present(recs, static_cast<long>(last) + 1, +1, ch, excluded);
  if (!before && !after)
    throw DataError("unrecoverable eye stream: no valid samples for channel " + std::string(kColumns[ch + 1]));
  for (std::size_t i = first; i <= last; ++i) {
    double& v = channel(recs[i], ch);
    if (only_missing && !std::isnan(v)) continue;
    if (before && after) {
      const EyeRecord& a = recs[*before];
      const EyeRecord& b = recs[*after];
      const double w = (recs[i].timestamp_ms - a.timestamp_ms) / (b.timestamp_ms - a.timestamp_ms);
      v = channel(a, ch) + w * (channel(b, ch) - channel(a, ch));
    } else {
      v = channel(recs[before ? *before : *after], ch);
    }
  }
}


double parse_cell(const std::string& cell, std::size_t line, const char* column) {
  if (cell.empty() || cell == "nan" || cell == "NaN" || cell == "NA") return kNaN;
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line) + ": field '" + column + "': cannot parse '" +
                    cell + "'");
  }
}

void write_number(std::ostream& out, double v) {
  if (std::isnan(v)) return;
  out << v;
}

}  // namespace

double channel(const EyeRecord& r, std::size_t i) {
  return channel(const_cast<EyeRecord&>(r), i);
}

double& channel(EyeRecord& r, std::size_t i) {
  switch (i) {
    case 0: return r.gaze_x;
    case 1: return r.gaze_y;
    case 2: return r.gaze_dir_x;
    case 3: return r.gaze_dir_y;
    case 4: return r.pupil_mm;
    case 5: return r.eye_pos_x;
    case 6: return r.eye_pos_y;
    case 7: return r.eye_pos_z;
    default: throw DimensionError("eye channel index " + std::to_string(i) + " out of range");
  }
}

bool has_missing(const EyeRecord& r) {
  for (std::size_t c = 0; c < kChannels; ++c)
    if (std::isnan(channel(r, c))) return true;
  return false;
}

void check_monotone(const RawEyeStream& stream) {
  for (std::size_t i = 1; i < stream.records.size(); ++i)
    if (!(stream.records[i].timestamp_ms > stream.records[i - 1].timestamp_ms))
      throw DataError("eye stream timestamps not strictly increasing at record " + std::to_string(i));
}

bool blink_duration_valid(double duration_ms) {
  return duration_ms >= kMinBlinkMs && duration_ms <= kMaxBlinkMs;
}

std::vector<BlinkInterval> detect_blinks(const RawEyeStream& stream, BlinkEvidence evidence) {
  const auto& recs = stream.records;
  if (recs.empty()) throw ParameterError("detect_blinks on an empty stream");
  auto is_blink = [&](const EyeRecord& r) {
    const bool flag = r.event == EventType::kBlink;
    const bool dropout = std::isnan(r.pupil_mm);
    switch (evidence) {
      case BlinkEvidence::kEventFlag: return flag;
      case BlinkEvidence::kPupilDropout: return dropout;
      case BlinkEvidence::kUnion: return flag || dropout;
    }
    return flag || dropout;
  };
  // Mean sampling interval closes a run that reaches the end of the stream.
  const double period = recs.size() > 1
                            ? (recs.back().timestamp_ms - recs.front().timestamp_ms) /
                                  static_cast<double>(recs.size() - 1)
                            : 0.0;
  std::vector<BlinkInterval> out;
  std::size_t i = 0;
  while (i < recs.size()) {
    if (!is_blink(recs[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < recs.size() && is_blink(recs[j + 1])) ++j;
    BlinkInterval b;
    b.first = i;
    b.last = j;
    b.start_ms = recs[i].timestamp_ms;
    b.end_ms = j + 1 < recs.size() ? recs[j + 1].timestamp_ms : recs[j].timestamp_ms + period;
    b.valid = blink_duration_valid(b.duration_ms());
    out.push_back(b);
    i = j + 1;
  }
  return out;
}

RawEyeStream correct_blinks(const RawEyeStream& stream, const std::vector<BlinkInterval>& intervals) {
  RawEyeStream out = stream;
  auto& recs = out.records;
  std::vector<bool> in_interval(recs.size(), false);
  for (const auto& b : intervals) {
    if (b.last >= recs.size() || b.first > b.last)
      throw ParameterError("blink interval does not belong to this stream");
    for (std::size_t i = b.first; i <= b.last; ++i) in_interval[i] = true;
  }
  if (!recs.empty() && std::all_of(in_interval.begin(), in_interval.end(), [](bool x) { return x; }))
    throw DataError("unrecoverable eye stream: every record lies inside a blink");
  auto excluded = [&](std::size_t i) { return in_interval[i]; };
  for (const auto& b : intervals)
    for (std::size_t ch : kGazePupil) bridge(recs, b.first, b.last, ch, b.valid, excluded);
  return out;
}

RawEyeStream correct_saccades(const RawEyeStream& stream) {
  RawEyeStream out = stream;
  auto& recs = out.records;
  auto is_saccade = [&](std::size_t i) { return recs[i].event == EventType::kSaccade; };
  std::size_t i = 0;
  while (i < recs.size()) {
    if (!is_saccade(i)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < recs.size() && is_saccade(j + 1)) ++j;
    if (i > 0 || j + 1 < recs.size())
      for (std::size_t ch : kGazePupil) bridge(recs, i, j, ch, false, is_saccade);
    i = j + 1;
  }
  return out;
}

RawEyeStream fill_missing(const RawEyeStream& stream) {
  RawEyeStream out = stream;
  auto& recs = out.records;
  auto none = [](std::size_t) { return false; };
  for (std::size_t ch = 0; ch < kChannels; ++ch) {
    std::size_t i = 0;
    while (i < recs.size()) {
      if (!std::isnan(channel(recs[i], ch))) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j + 1 < recs.size() && std::isnan(channel(recs[j + 1], ch))) ++j;
      bridge(recs, i, j, ch, true, none);
      i = j + 1;
    }
  }
  return out;
}

RawEyeStream pupil_fluctuation(const RawEyeStream& stream) {
  RawEyeStream out = stream;
  auto& recs = out.records;
  double previous = 0.0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const double p = recs[i].pupil_mm;
    if (std::isnan(p))
      throw ContractError("pupil_fluctuation requires a complete pupil channel (record " +
                          std::to_string(i) + " missing)");
    recs[i].pupil_mm = i == 0 ? 0.0 : p - previous;
    previous = p;
  }
  return out;
}

std::vector<FixationFrame> filter_fixations(const std::vector<FixationFrame>& frames,
                                            const std::vector<BlinkInterval>& intervals) {
  std::vector<FixationFrame> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    const bool inside = std::any_of(intervals.begin(), intervals.end(), [&](const BlinkInterval& b) {
      return !b.valid && f.timestamp_ms >= b.start_ms && f.timestamp_ms < b.end_ms;
    });
    if (!inside) out.push_back(f);
  }
  if (out.empty() && !frames.empty()) log_warning("filter_fixations: every fixation frame was dropped");
  return out;
}

namespace {

template <typename TimeAt, typename ValueAt>
Tensor resample(std::size_t n, std::size_t width, std::size_t target_len, TimeAt time_at,
                ValueAt value_at) {
  if (target_len < 2) throw ParameterError("resample target length must be >= 2");
  if (n < 2) throw DataError("resample needs at least 2 records, got " + std::to_string(n));
  const double t0 = time_at(0);
  const double t_last = time_at(n - 1);
  // When upsampling, spread the grid over the span instead of running past it.
  const double step = std::min((t_last - t0) / static_cast<double>(n - 1) * static_cast<double>(n) /
                                   static_cast<double>(target_len),
                               (t_last - t0) / static_cast<double>(target_len - 1));
  Tensor out = Tensor::zeros(target_len, width);
  std::size_t seg = 0;
  for (std::size_t i = 0; i < target_len; ++i) {
    const double t = std::min(t0 + static_cast<double>(i) * step, t_last);
    while (seg + 2 < n && time_at(seg + 1) <= t) ++seg;
    const double ta = time_at(seg), tb = time_at(seg + 1);
    const double w = std::clamp((t - ta) / (tb - ta), 0.0, 1.0);
    for (std::size_t c = 0; c < width; ++c) {
      const double a = value_at(seg, c), b = value_at(seg + 1, c);
      const double v = w == 0.0 ? a : (w == 1.0 ? b : a + w * (b - a));
      if (std::isnan(v)) throw DataError("resample encountered a missing value; correct the stream first");
      out.at(i, c) = v;
    }
  }
  return out;
}

}  // namespace

Tensor resample_uniform(const RawEyeStream& stream, std::size_t target_len) {
  const auto& recs = stream.records;
  return resample(
      recs.size(), kChannels, target_len, [&](std::size_t i) { return recs[i].timestamp_ms; },
      [&](std::size_t i, std::size_t c) { return channel(recs[i], c); });
}

Tensor resample_frames(const std::vector<FixationFrame>& frames, std::size_t target_len) {
  const std::size_t width = frames.empty() ? 0 : frames.front().values.size();
  for (const auto& f : frames)
    if (f.values.size() != width) throw DimensionError("fixation frames differ in width");
  if (width == 0 && !frames.empty()) throw DimensionError("fixation frames are empty");
  return resample(
      frames.size(), width, target_len, [&](std::size_t i) { return frames[i].timestamp_ms; },
      [&](std::size_t i, std::size_t c) { return frames[i].values[c]; });
}

PreprocessResult preprocess(const RawEyeStream& stream, const std::vector<FixationFrame>& fixations,
                            const PreprocessOptions& options) {
  check_monotone(stream);
  PreprocessResult res;
  res.report.blinks = detect_blinks(stream, options.evidence);
  res.report.invalid_blinks = static_cast<std::size_t>(std::count_if(
      res.report.blinks.begin(), res.report.blinks.end(), [](const BlinkInterval& b) { return !b.valid; }));
  res.report.saccade_records = static_cast<std::size_t>(
      std::count_if(stream.records.begin(), stream.records.end(),
                    [](const EyeRecord& r) { return r.event == EventType::kSaccade; }));
  res.cleaned = fill_missing(correct_saccades(correct_blinks(stream, res.report.blinks)));
  const RawEyeStream fluct = pupil_fluctuation(res.cleaned);
  res.pupil_fluct.reserve(fluct.records.size());
  for (const auto& r : fluct.records) res.pupil_fluct.push_back(r.pupil_mm);
  res.sequence = resample_uniform(fluct, options.target_len);
  res.report.fixations_in = fixations.size();
  res.fixations = filter_fixations(fixations, res.report.blinks);
  res.report.fixations_kept = res.fixations.size();
  return res;
}

RawEyeStream read_raw_csv(std::istream& in) {
  RawEyeStream stream;
  std::string line;
  std::size_t number = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (!header_seen) {
      header_seen = true;
      if (cells.size() < kColumns.size())
        throw DataError("line 1: expected header with " + std::to_string(kColumns.size()) + " columns");
      for (std::size_t c = 0; c < kColumns.size(); ++c)
        if (cells[c] != kColumns[c])
          throw DataError("line 1: field '" + std::string(kColumns[c]) + "': header mismatch ('" +
                          cells[c] + "')");
      continue;
    }
    if (cells.size() < kColumns.size())
      throw DataError("line " + std::to_string(number) + ": expected " +
                      std::to_string(kColumns.size()) + " fields, got " + std::to_string(cells.size()));
    EyeRecord r;
    r.timestamp_ms = parse_cell(cells[0], number, kColumns[0]);
    if (std::isnan(r.timestamp_ms))
      throw DataError("line " + std::to_string(number) + ": field 'timestamp_ms': missing");
    for (std::size_t c = 0; c < kChannels; ++c) channel(r, c) = parse_cell(cells[c + 1], number, kColumns[c + 1]);
    const std::string& ev = cells[9];
    if (ev == "fixation") r.event = EventType::kFixation;
    else if (ev == "saccade") r.event = EventType::kSaccade;
    else if (ev == "blink") r.event = EventType::kBlink;
    else
      throw DataError("line " + std::to_string(number) + ": field 'event_type': unknown value '" + ev + "'");
    if (!stream.records.empty() && !(r.timestamp_ms > stream.records.back().timestamp_ms))
      throw DataError("line " + std::to_string(number) + ": field 'timestamp_ms': not strictly increasing");
    stream.records.push_back(r);
  }
  return stream;
}

RawEyeStream read_raw_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open eye stream " + path.string());
  return read_raw_csv(in);
}

void write_raw_csv(std::ostream& out, const RawEyeStream& stream) {
  write_cleaned_csv(out, stream, {});
}

void write_cleaned_csv(std::ostream& out, const RawEyeStream& cleaned,
                       const std::vector<double>& pupil_fluct) {
  const bool with_fluct = !pupil_fluct.empty();
  if (with_fluct && pupil_fluct.size() != cleaned.records.size())
    throw DimensionError("pupil_fluct length differs from the stream");
  const auto old_precision = out.precision(17);
  for (std::size_t c = 0; c < kColumns.size(); ++c) out << (c ? "," : "") << kColumns[c];
  if (with_fluct) out << ",pupil_fluct";
  out << '\n';
  for (std::size_t i = 0; i < cleaned.records.size(); ++i) {
    const EyeRecord& r = cleaned.records[i];
    out << r.timestamp_ms;
    for (std::size_t c = 0; c < kChannels; ++c) {
      out << ',';
      write_number(out, channel(r, c));
    }
    out << ',' << event_name(r.event);
    if (with_fluct) {
      out << ',';
      write_number(out, pupil_fluct[i]);
    }
    out << '\n';
  }
  out.precision(old_precision);
}

std::string report_json(const PreprocessReport& report) {
  nlohmann::json j;
  j["blinks"] = nlohmann::json::array();
  for (const auto& b : report.blinks)
    j["blinks"].push_back({{"start_ms", b.start_ms},
                           {"end_ms", b.end_ms},
                           {"duration_ms", b.duration_ms()},
                           {"valid", b.valid},
                           {"corrected", !b.valid},
                           {"records", b.last - b.first + 1}});
  j["invalid_blinks"] = report.invalid_blinks;
  j["valid_blinks"] = report.blinks.size() - report.invalid_blinks;
  j["saccade_records_corrected"] = report.saccade_records;
  j["fixations_in"] = report.fixations_in;
  j["fixations_kept"] = report.fixations_kept;
  j["blink_validity_ms"] = {kMinBlinkMs, kMaxBlinkMs};
  return j.dump(2);
}

RawEyeStream synthetic_stream(std::uint64_t seed, std::size_t records, double period_ms) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RawEyeStream s;
  s.records.resize(records);
  double gx = 0.5, gy = 0.5;
  for (std::size_t i = 0; i < records; ++i) {
    EyeRecord& r = s.records[i];
    r.timestamp_ms = static_cast<double>(i) * period_ms;
    gx = std::clamp(gx + 0.005 * noise(rng), 0.0, 1.0);
    gy = std::clamp(gy + 0.005 * noise(rng), 0.0, 1.0);
    r.gaze_x = gx;
    r.gaze_y = gy;
    r.gaze_dir_x = gx - 0.5;
    r.gaze_dir_y = gy - 0.5;
    r.pupil_mm = 3.5 + 0.3 * std::sin(static_cast<double>(i) * 0.02) + 0.02 * noise(rng);
    r.eye_pos_x = 30.0 + 0.1 * noise(rng);
    r.eye_pos_y = 10.0 + 0.1 * noise(rng);
    r.eye_pos_z = 600.0 + 0.5 * noise(rng);
    r.event = EventType::kFixation;
  }
  // Occasional saccades: short runs with a jump in gaze.
  for (std::size_t i = 20; i + 4 < records; i += 47 + static_cast<std::size_t>(unit(rng) * 30)) {
    for (std::size_t k = 0; k < 3; ++k) {
      s.records[i + k].event = EventType::kSaccade;
      s.records[i + k].gaze_x += 0.1 * noise(rng);
    }
  }
  // Blinks of 50, 200 and 500 ms spread through the recording.
  const std::array<double, 3> lengths = {50.0, 200.0, 500.0};
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    const std::size_t start = (b + 1) * records / (lengths.size() + 1);
    const auto count = static_cast<std::size_t>(lengths[b] / period_ms);
    for (std::size_t k = 0; k < count && start + k < records; ++k) {
      EyeRecord& r = s.records[start + k];
      r.event = EventType::kBlink;
      r.pupil_mm = kNaN;
      r.gaze_x = r.gaze_y = r.gaze_dir_x = r.gaze_dir_y = kNaN;
    }
  }
  return s;
}

}  // namespace emert::eye
