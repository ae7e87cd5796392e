#pragma once

#include <string>
#include <utility>
#include <vector>

#include "meta4/audio/frontend.hpp"
#include "meta4/core/rng.hpp"
#include "meta4/data/types.hpp"

namespace meta4::data {

// One 4.266 s segment = 68256 samples at 16 kHz, paired with 64 pose frames.
inline constexpr size_t kSegmentSamples = 68256;

struct GestureSample {
    audio::Waveform audio;
    std::string transcript;
    SchemaLabel label = SchemaLabel::kCenterPeriphery;
    PoseSequence poses;  // normalized coordinates
    std::string speaker_id;
};

// ---- pose normalization --------------------------------------------------

// Translates the Neck to the origin in every frame and scales so the
// frame-0 shoulder distance is 1. Invertible via the returned params and
// idempotent on already-normalized sequences.
std::pair<PoseSequence, NormalizationParams> normalize_poses(
    const PoseSequence& raw);
PoseSequence denormalize_poses(const PoseSequence& normalized,
                               const NormalizationParams& params);

// ---- the synthetic oracle ------------------------------------------------

// Rest pose in normalized coordinates (y up); speaker styling moves the
// wrist rest positions and nose height, never the neck.
PoseSequence rest_pose(size_t speaker_idx);

// Closed-form wrist displacement template for a class at phase u in [0,1];
// returns {dx, dy} for the given side (0 = right, 1 = left). The shapes are
// the dataset's ground truth: each class gets a distinct trajectory, so the
// class identity is required to predict the pose from audio loudness alone.
std::pair<double, double> wrist_template(SchemaLabel label, double u,
                                         int side);

// Deterministic oracle pose for one segment: rest pose + speaker styling +
// rms-scaled class template on the wrists, elbows at midpoint(shoulder,
// wrist) plus a fixed lateral bias.
PoseSequence oracle_poses(SchemaLabel label, size_t speaker_idx, double rms);

double waveform_rms(const audio::Waveform& w);

// Amplitude-modulated tone; f0 encodes the speaker, the random envelope
// drives the gesture amplitude.
audio::Waveform synth_waveform(size_t speaker_idx, SeededRng& rng);

// Sentence with class-specific keywords; shared by the schema corpus and
// the gesture transcripts.
std::string synth_sentence(SchemaLabel label, SeededRng& rng);

// n_samples segments round-robined over `speakers` named speaker ids, class
// drawn per sample; byte-determined by seed.
std::vector<GestureSample> synth_gesture_dataset(size_t n_samples,
                                                 size_t speakers,
                                                 uint64_t seed);

// Imbalanced labeled-sentence corpus (fixed per-class proportions).
std::vector<TextSample> synth_schema_corpus(size_t n_samples, uint64_t seed);

std::string speaker_name(size_t speaker_idx);
size_t speaker_index(const std::string& speaker_id);

}  // namespace meta4::data
