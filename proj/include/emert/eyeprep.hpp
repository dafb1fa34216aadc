// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "emert/tensor.hpp"

namespace emert::eye {

using diff::Tensor;

enum class EventType { kFixation, kSaccade, kBlink };

// Missing channel values are stored as NaN.
struct EyeRecord {
  double timestamp_ms = 0.0;
  double gaze_x = 0.0;
  double gaze_y = 0.0;
  double gaze_dir_x = 0.0;
  double gaze_dir_y = 0.0;
  double pupil_mm = 0.0;
  double eye_pos_x = 0.0;
  double eye_pos_y = 0.0;
  double eye_pos_z = 0.0;
  EventType event = EventType::kFixation;
};

inline constexpr std::size_t kChannels = 8;  // every numeric field except the timestamp

// Channel i of a record, in CSV column order (gaze_x .. eye_pos_z).
double channel(const EyeRecord& r, std::size_t i);
double& channel(EyeRecord& r, std::size_t i);
bool has_missing(const EyeRecord& r);

struct RawEyeStream {
  std::vector<EyeRecord> records;
};

// Throws DataError unless timestamps strictly increase.
void check_monotone(const RawEyeStream& stream);

inline constexpr double kMinBlinkMs = 75.0;
inline constexpr double kMaxBlinkMs = 425.0;

struct BlinkInterval {
  std::size_t first = 0;  // record index range [first, last]
  std::size_t last = 0;
  double start_ms = 0.0;  // first record of the run
  double end_ms = 0.0;    // first record after the run (or extrapolated)
  bool valid = false;
  double duration_ms() const { return end_ms - start_ms; }
};

bool blink_duration_valid(double duration_ms);

enum class BlinkEvidence { kEventFlag, kPupilDropout, kUnion };

std::vector<BlinkInterval> detect_blinks(const RawEyeStream& stream,
                                         BlinkEvidence evidence = BlinkEvidence::kUnion);

// Interpolates gaze and pupil across invalid intervals; inside valid blinks
// only missing values are filled. Throws DataError when no record is usable.
RawEyeStream correct_blinks(const RawEyeStream& stream, const std::vector<BlinkInterval>& intervals);

// Interpolates gaze and pupil across saccade runs from the flanking
// non-saccade records. Event labels are kept.
RawEyeStream correct_saccades(const RawEyeStream& stream);

// Fills any remaining NaN in any channel by time-linear interpolation,
// extending the nearest value at the edges.
RawEyeStream fill_missing(const RawEyeStream& stream);

// Pupil channel replaced by its first difference, d_0 = 0.
RawEyeStream pupil_fluctuation(const RawEyeStream& stream);

struct FixationFrame {
  double timestamp_ms = 0.0;
  std::vector<double> values;
};

// Drops frames whose timestamp falls in [start_ms, end_ms) of an invalid
// interval. Valid intervals are ignored.
std::vector<FixationFrame> filter_fixations(const std::vector<FixationFrame>& frames,
                                            const std::vector<BlinkInterval>& intervals);

// `target_len` points, spaced by the stream's mean interval scaled by
// records/target_len (never beyond the last timestamp, so upsampling spans
// the stream evenly); channels linearly interpolated in time.
Tensor resample_uniform(const RawEyeStream& stream, std::size_t target_len);
Tensor resample_frames(const std::vector<FixationFrame>& frames, std::size_t target_len);

struct PreprocessOptions {
  BlinkEvidence evidence = BlinkEvidence::kUnion;
  std::size_t target_len = 32;
};

struct PreprocessReport {
  std::vector<BlinkInterval> blinks;
  std::size_t invalid_blinks = 0;
  std::size_t saccade_records = 0;
  std::size_t fixations_in = 0;
  std::size_t fixations_kept = 0;
};

struct PreprocessResult {
  RawEyeStream cleaned;           // corrected, pupil in mm
  std::vector<double> pupil_fluct;
  Tensor sequence;                // [target_len, kChannels], pupil as fluctuation
  std::vector<FixationFrame> fixations;
  PreprocessReport report;
};

PreprocessResult preprocess(const RawEyeStream& stream, const std::vector<FixationFrame>& fixations,
                            const PreprocessOptions& options = {});

// CSV columns: timestamp_ms, gaze_x, gaze_y, gaze_dir_x, gaze_dir_y,
// pupil_mm, eye_pos_x, eye_pos_y, eye_pos_z, event_type. Empty or "nan"
// cells are missing values.
RawEyeStream read_raw_csv(std::istream& in);
RawEyeStream read_raw_csv(const std::filesystem::path& path);
void write_raw_csv(std::ostream& out, const RawEyeStream& stream);
// Same schema plus a trailing pupil_fluct column.
void write_cleaned_csv(std::ostream& out, const RawEyeStream& cleaned,
                       const std::vector<double>& pupil_fluct);
std::string report_json(const PreprocessReport& report);

// Plausible recording with a few blinks of assorted lengths and saccades.
RawEyeStream synthetic_stream(std::uint64_t seed, std::size_t records = 600, double period_ms = 10.0);

}  // namespace emert::eye
