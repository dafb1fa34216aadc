// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emert/tensor.hpp"

namespace emert::data {

using diff::Tensor;

inline constexpr std::size_t kCoarseClasses = 3;
inline constexpr std::size_t kFineClasses = 7;

enum class Coarse : int { kPositive = 0, kNegative = 1, kNeutral = 2 };
enum class Fine : int {
  kHappiness = 0,
  kSadness = 1,
  kFear = 2,
  kSurprise = 3,
  kDisgust = 4,
  kAnger = 5,
  kNeutral = 6,
};

std::string_view to_string(Coarse c);
std::string_view to_string(Fine f);
std::optional<Coarse> parse_coarse(std::string_view s);
std::optional<Fine> parse_fine(std::string_view s);

// Fine -> coarse. Surprise is the one class whose polarity is a choice.
struct CoarseMapping {
  bool surprise_positive = true;
  Coarse operator()(Fine f) const;
};

struct LabelSet {
  Coarse er_coarse = Coarse::kNeutral;
  Fine er_fine = Fine::kNeutral;
  Coarse fer_coarse = Coarse::kNeutral;
  Fine fer_fine = Fine::kNeutral;
  double er_valence = 0.0;
  double er_arousal = 0.0;
  double fer_valence = 0.0;
  double fer_arousal = 0.0;
  double fer_intensity = 0.0;

  // Throws ValidationError naming the offending field.
  void validate(const CoarseMapping& mapping = {}) const;

  friend bool operator==(const LabelSet&, const LabelSet&) = default;
};

// Sets both fine labels and derives their coarse labels.
LabelSet make_labels(Fine er, Fine fer, const CoarseMapping& mapping = {});

struct SequenceDims {
  std::size_t face_len = 8;
  std::size_t face_width = 32;
  std::size_t eyemove_len = 32;
  std::size_t eyemove_width = 8;
  std::size_t fixation_len = 32;
  std::size_t fixation_width = 16;

  friend bool operator==(const SequenceDims&, const SequenceDims&) = default;
};

struct MultimodalSample {
  std::string sample_id;
  Tensor face_seq;      // [face_len, face_width]
  Tensor eyemove_seq;   // [eyemove_len, eyemove_width]
  Tensor fixation_seq;  // [fixation_len, fixation_width]
  LabelSet labels;

  friend bool operator==(const MultimodalSample&, const MultimodalSample&) = default;
};

struct GapSpec {
  double gap_rate = 0.3;
  std::array<double, kFineClasses> class_priors = {1.0 / 7, 1.0 / 7, 1.0 / 7, 1.0 / 7,
                                                   1.0 / 7, 1.0 / 7, 1.0 / 7};
  std::uint64_t seed = 0;
  // Scale of class prototypes relative to the per-frame noise (sd 1).
  double signal = 1.0;
  CoarseMapping mapping;
};

// Class-conditional synthetic corpus. Face frames follow fer_fine; both eye
// channels follow er_fine; with probability gap_rate the two differ.
std::vector<MultimodalSample> generate_synthetic(std::size_t n, const GapSpec& spec,
                                                 const SequenceDims& dims = {});

// Distribution of the displayed (FER) class given the felt (ER) class when
// they differ. Row er, column fer; zero diagonal, rows sum to 1.
const std::array<std::array<double, kFineClasses>, kFineClasses>& gap_kernel();

struct DatasetSplit {
  std::size_t fold_count = 0;
  std::vector<int> fold_of;  // indexed like the sample list
  std::map<std::string, int> assignments;
  bool stratified = false;

  std::vector<std::size_t> train_indices(int fold) const;
  std::vector<std::size_t> test_indices(int fold) const;
};

// Deterministic in `seed`. Stratified by er_fine when every class present
// has at least k members; otherwise plain shuffled folds with a warning.
DatasetSplit kfold_split(const std::vector<MultimodalSample>& samples, std::size_t k,
                         std::uint64_t seed);

// JSONL, one sample per line. Loading validates every label.
std::vector<MultimodalSample> load_dataset(const std::filesystem::path& path,
                                           const CoarseMapping& mapping = {});
void save_dataset(const std::vector<MultimodalSample>& samples, const std::filesystem::path& path);

// In-memory forms of the same records.
std::string sample_to_json_line(const MultimodalSample& sample);
MultimodalSample sample_from_json_line(std::string_view line, std::size_t line_number,
                                       const CoarseMapping& mapping = {});

}  // namespace emert::data
