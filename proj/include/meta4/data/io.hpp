#pragma once

#include <string>
#include <vector>

#include "meta4/data/datagen.hpp"
#include "meta4/data/types.hpp"

namespace meta4::data {

// ---- csv -------------------------------------------------------------------

// Minimal csv: comma separators, double-quote quoting with "" escapes,
// quoted fields may contain commas and newlines.
std::vector<std::vector<std::string>> parse_csv_text(const std::string& text);
std::string format_csv_text(const std::vector<std::vector<std::string>>& rows);
std::vector<std::vector<std::string>> load_csv(const std::string& path);
void save_csv(const std::string& path,
              const std::vector<std::vector<std::string>>& rows);

// ---- pose csv ---------------------------------------------------------------

// Header row Nose_x,Nose_y,...,LHip_y then exactly 64 frame rows of 22
// values, printed with enough digits to round-trip doubles exactly.
void save_pose_csv(const std::string& path, const PoseSequence& poses);
PoseSequence load_pose_csv(const std::string& path);

// ---- schema corpus ----------------------------------------------------------

// csv with header text,label; label is one of the 14 class names.
void save_schema_corpus(const std::string& path,
                        const std::vector<TextSample>& corpus);
std::vector<TextSample> load_schema_corpus(const std::string& path);

// ---- gesture dataset ---------------------------------------------------------

// Directory layout:
//   manifest.txt              count, sample rate, pose frames, label set
//   sample_00000/audio.wav    16 kHz mono pcm16
//   sample_00000/transcript.txt
//   sample_00000/poses.csv
//   sample_00000/meta.txt     speaker_id, schema
void save_gesture_dataset(const std::string& dir,
                          const std::vector<GestureSample>& samples);
std::vector<GestureSample> load_gesture_dataset(const std::string& dir);

std::string sample_dir_name(size_t index);

}  // namespace meta4::data
