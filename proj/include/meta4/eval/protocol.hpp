#pragma once

#include <string>
#include <vector>

#include "meta4/eval/metrics.hpp"
#include "meta4/model/meta4.hpp"

namespace meta4::eval {

// The three evaluation conditions: the schema vector fed alongside the audio
// state is the classifier's distribution, a zero vector, or a deliberately
// wrong one-hot label.
enum class Condition { kFull, kIsAblated, kMismatched };

std::string condition_tag(Condition condition);       // "full", ...
Condition parse_condition(const std::string& tag);

struct MetricsReport {
    std::string split;      // "seen" / "unseen"; empty for standalone runs
    std::string condition;  // condition tag
    double rmse = 0.0;
    double mae = 0.0;
    double pcc = 0.0;
    double cosine_similarity = 0.0;
    size_t n_samples = 0;
};

// Deliberately wrong labels: each label moves to the next *distinct* label
// present in `base` (ascending enum order, cyclic), so no sample keeps its
// own. Requires >= 2 distinct labels.
std::vector<data::SchemaLabel> mismatched_labels(
    const std::vector<data::SchemaLabel>& base);

// The label a sample evaluates against when one must be invented: the
// dataset label when present, otherwise the classifier's argmax.
data::SchemaLabel base_label(const model::SegmentSample& sample,
                             const bertis::BertisModel& schema_model,
                             const bertis::Vocabulary& schema_vocab);

// Generates poses for every sample under one condition and averages the
// per-sample metrics (fixed order). Errors on an empty dataset; the
// mismatched condition additionally requires >= 2 distinct labels.
MetricsReport run_condition(const model::Meta4Model& model,
                            const bertis::BertisModel& schema_model,
                            const bertis::Vocabulary& schema_vocab,
                            const std::vector<model::SegmentSample>& samples,
                            Condition condition);

// Partition by speaker id. Every sample's speaker must belong to exactly
// one of the two lists; the lists must be disjoint and both splits
// non-empty.
struct SpeakerSplit {
    std::vector<model::SegmentSample> seen, unseen;
};
SpeakerSplit split_by_speaker(
    const std::vector<model::SegmentSample>& samples,
    const std::vector<std::string>& train_speakers,
    const std::vector<std::string>& held_out_speakers);

// All three conditions on both speaker splits: exactly six rows, seen
// first.
std::vector<MetricsReport> seen_unseen_protocol(
    const model::Meta4Model& model, const bertis::BertisModel& schema_model,
    const bertis::Vocabulary& schema_vocab,
    const std::vector<model::SegmentSample>& samples,
    const std::vector<std::string>& train_speakers,
    const std::vector<std::string>& held_out_speakers);

std::string format_report_text(const std::vector<MetricsReport>& rows);
// Header: split,condition,rmse,mae,pcc,cosine_similarity (6 decimals).
std::string format_report_csv(const std::vector<MetricsReport>& rows);

}  // namespace meta4::eval
