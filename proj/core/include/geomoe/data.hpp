#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "geomoe/tensor.hpp"

namespace geomoe {

inline constexpr int kNumTargets = 12;

// Exact score key names used by the dataset metadata.
inline constexpr std::array<const char*, kNumTargets> kScoreKeys = {
    "Openness (O)",
    "Conscientiousness (C)",
    "Extraversion (E)",
    "Agreeableness (A)",
    "Neuroticism (N)",
    "overall_personality",
    "interview_score",
    "answer_score",
    "speaking_skills",
    "confidence_score",
    "facial_expression",
    "overall_performance",
};

struct ClipRecord {
  std::string id;
  std::string video_id;
  std::string video_filename;
  std::string duration;
  std::string question_id;
  std::string question;
  std::string video_quality;
  std::string user_no;
  std::array<double, kNumTargets> scores{};
  std::string transcript;
};

// UTF-8 JSON array with the Appendix-style field names; a missing or
// non-finite score key raises an error naming the key and entry id.
std::vector<ClipRecord> load_metadata(const std::string& path);
void write_metadata(const std::string& path,
                    std::span<const ClipRecord> records);

struct SplitSpec {
  std::vector<std::string> train, val, test;
};

// Shuffles users under the seed and assigns each user's clips to the split
// with the largest remaining clip deficit. No user_no ever spans splits.
// Throws with fewer than 3 users or fractions not summing to 1.
SplitSpec grouped_split(std::span<const ClipRecord> records, double f_train,
                        double f_val, double f_test, std::uint64_t seed);
void write_split(const std::string& path, const SplitSpec& split);
SplitSpec load_split(const std::string& path);

// Already-embedded modality sequences for one clip, all at the model width.
struct FeatureBundle {
  std::string clip_id;
  Tensor text;    // [N_t, d]
  Tensor audio;   // [N_a, d]
  Tensor video;   // [T', d]
  std::vector<double> targets;  // kNumTargets when labeled, empty otherwise
};

// Binary container: magic "GMOEFEAT", u32 header length, JSON header (clip
// id, per-modality length/dim, endianness tag, version), payload of
// contiguous little-endian float32 per modality in header order.
void write_feature_container(const std::string& path, const FeatureBundle& b);
FeatureBundle read_feature_container(const std::string& path);

// Reads dir/<id>.gmf for each id, validates the feature width, joins targets
// from the metadata records.
std::vector<FeatureBundle> load_features(const std::string& features_dir,
                                         std::span<const ClipRecord> records,
                                         std::span<const std::string> ids,
                                         int expected_dim);

// Synthetic benchmark: three signal families embedded in three streams.
//  - a hierarchy (random binary-tree path) carried by the text stream,
//  - a random unit direction carried by the audio stream,
//  - a linear Gaussian factor carried by the video stream.
// Targets mix the families through a low-rank 12-column map; each clip has a
// dominant family that contributes most of its target signal, and the
// dominant stream is emitted with higher energy so the cue is learnable.
struct SyntheticSpec {
  std::uint64_t seed = 1;
  int clips = 2000;
  int users = 40;
  int dim = 48;  // stream feature width (must equal the model d_model)
  int text_len = 4;
  int audio_len = 4;
  int video_len = 6;
  int tree_depth = 3;
  double target_noise = 0.25;
  double feature_noise = 0.05;
  double dominant_share = 0.70;  // dominant family's weight in the target mix
  double stream_gain = 1.6;      // energy multiplier for the dominant stream
  // Per-family signal weights; zeroing two of them yields a single-family
  // dataset (a linear-only spec with zero noise is exactly fit by a linear
  // map from the video stream). Dominance cycles over active families only.
  double hier_weight = 1.0;
  double dir_weight = 1.0;
  double lin_weight = 1.0;
};

struct SyntheticData {
  std::vector<ClipRecord> records;
  std::vector<FeatureBundle> bundles;
  std::string recipe_json;  // generative recipe for auditing
};

SyntheticData synth_generate(const SyntheticSpec& spec);

// Writes dir/metadata.json, dir/features/<id>.gmf, dir/recipe.json.
void write_dataset(const std::string& dir, const SyntheticData& data);

}  // namespace geomoe
