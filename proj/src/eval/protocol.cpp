#include "meta4/eval/protocol.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <unordered_set>

namespace meta4::eval {

namespace {

struct Encoded {
    const model::SegmentSample* sample;
    Tensor h_audio;  // 1 x 64, no graph attached
};

std::vector<Encoded> encode_all(const model::Meta4Model& model,
                                const std::vector<model::SegmentSample>& ds) {
    NoGradGuard guard;
    nn::ForwardCtx ctx;
    std::vector<Encoded> out;
    out.reserve(ds.size());
    for (const auto& s : ds) out.push_back({&s, model.encode_audio(s.mel, ctx)});
    return out;
}

std::vector<std::vector<double>> schema_vectors(
    const std::vector<Encoded>& encoded,
    const bertis::BertisModel& schema_model,
    const bertis::Vocabulary& schema_vocab, Condition condition) {
    std::vector<std::vector<double>> out;
    out.reserve(encoded.size());
    switch (condition) {
        case Condition::kFull:
            for (const auto& e : encoded) {
                out.push_back(bertis::classify_schema(e.sample->transcript,
                                                      schema_model,
                                                      schema_vocab)
                                  .distribution);
            }
            break;
        case Condition::kIsAblated:
            out.assign(encoded.size(),
                       std::vector<double>(data::kNumSchemaClasses, 0.0));
            break;
        case Condition::kMismatched: {
            std::vector<data::SchemaLabel> base;
            base.reserve(encoded.size());
            for (const auto& e : encoded) {
                base.push_back(
                    base_label(*e.sample, schema_model, schema_vocab));
            }
            for (data::SchemaLabel wrong : mismatched_labels(base)) {
                out.push_back(model::one_hot_schema(wrong));
            }
            break;
        }
    }
    return out;
}

MetricsReport eval_encoded(const model::Meta4Model& model,
                           const std::vector<Encoded>& encoded,
                           const std::vector<std::vector<double>>& vectors,
                           Condition condition) {
    MetricsReport report;
    report.condition = condition_tag(condition);
    report.n_samples = encoded.size();
    NoGradGuard guard;
    for (size_t i = 0; i < encoded.size(); ++i) {
        Tensor h_fused =
            model::fuse(encoded[i].h_audio, model::schema_tensor(vectors[i]));
        data::PoseSequence gen = model.generate(h_fused);
        const std::vector<double>& gt = encoded[i].sample->poses.values;
        report.rmse += rmse(gen.values, gt);
        report.mae += mae(gen.values, gt);
        report.pcc += pcc(gen.values, gt);
        report.cosine_similarity += cosine_similarity(gen.values, gt);
    }
    double inv = 1.0 / static_cast<double>(encoded.size());
    report.rmse *= inv;
    report.mae *= inv;
    report.pcc *= inv;
    report.cosine_similarity *= inv;
    return report;
}

}  // namespace

std::string condition_tag(Condition condition) {
    switch (condition) {
        case Condition::kFull: return "full";
        case Condition::kIsAblated: return "is_ablated";
        case Condition::kMismatched: return "mismatched";
    }
    raise("condition_tag: unknown condition");
}

Condition parse_condition(const std::string& tag) {
    if (tag == "full") return Condition::kFull;
    if (tag == "is_ablated") return Condition::kIsAblated;
    if (tag == "mismatched") return Condition::kMismatched;
    raise("parse_condition: unknown condition \"", tag,
          "\" (expected full, is_ablated, or mismatched)");
}

std::vector<data::SchemaLabel> mismatched_labels(
    const std::vector<data::SchemaLabel>& base) {
    std::set<data::SchemaLabel> distinct(base.begin(), base.end());
    require(distinct.size() >= 2,
            "mismatched_labels: need at least 2 distinct labels, got ",
            distinct.size());
    std::vector<data::SchemaLabel> order(distinct.begin(), distinct.end());
    std::vector<data::SchemaLabel> out;
    out.reserve(base.size());
    for (data::SchemaLabel l : base) {
        size_t at = static_cast<size_t>(
            std::find(order.begin(), order.end(), l) - order.begin());
        out.push_back(order[(at + 1) % order.size()]);
    }
    return out;
}

data::SchemaLabel base_label(const model::SegmentSample& sample,
                             const bertis::BertisModel& schema_model,
                             const bertis::Vocabulary& schema_vocab) {
    if (sample.schema) return *sample.schema;
    return bertis::classify_schema(sample.transcript, schema_model,
                                   schema_vocab)
        .label;
}

MetricsReport run_condition(const model::Meta4Model& model,
                            const bertis::BertisModel& schema_model,
                            const bertis::Vocabulary& schema_vocab,
                            const std::vector<model::SegmentSample>& samples,
                            Condition condition) {
    require(!samples.empty(), "run_condition: cannot evaluate an empty dataset");
    std::vector<Encoded> encoded = encode_all(model, samples);
    return eval_encoded(
        model, encoded,
        schema_vectors(encoded, schema_model, schema_vocab, condition),
        condition);
}

SpeakerSplit split_by_speaker(
    const std::vector<model::SegmentSample>& samples,
    const std::vector<std::string>& train_speakers,
    const std::vector<std::string>& held_out_speakers) {
    std::unordered_set<std::string> seen_ids(train_speakers.begin(),
                                             train_speakers.end());
    std::unordered_set<std::string> unseen_ids(held_out_speakers.begin(),
                                               held_out_speakers.end());
    for (const auto& id : seen_ids) {
        require(!unseen_ids.count(id),
                "seen_unseen_protocol: speaker \"", id,
                "\" appears in both splits");
    }

    SpeakerSplit out;
    for (const auto& s : samples) {
        bool in_seen = seen_ids.count(s.speaker_id) > 0;
        bool in_unseen = unseen_ids.count(s.speaker_id) > 0;
        require(in_seen || in_unseen, "seen_unseen_protocol: speaker \"",
                s.speaker_id, "\" belongs to neither split");
        (in_seen ? out.seen : out.unseen).push_back(s);
    }
    require(!out.seen.empty(),
            "seen_unseen_protocol: no seen-speaker samples");
    require(!out.unseen.empty(),
            "seen_unseen_protocol: no unseen-speaker samples");
    return out;
}

std::vector<MetricsReport> seen_unseen_protocol(
    const model::Meta4Model& model, const bertis::BertisModel& schema_model,
    const bertis::Vocabulary& schema_vocab,
    const std::vector<model::SegmentSample>& samples,
    const std::vector<std::string>& train_speakers,
    const std::vector<std::string>& held_out_speakers) {
    SpeakerSplit parts =
        split_by_speaker(samples, train_speakers, held_out_speakers);
    const auto& seen = parts.seen;
    const auto& unseen = parts.unseen;

    std::vector<MetricsReport> rows;
    for (const auto* split : {&seen, &unseen}) {
        std::vector<Encoded> encoded = encode_all(model, *split);
        for (Condition c : {Condition::kFull, Condition::kIsAblated,
                            Condition::kMismatched}) {
            MetricsReport r = eval_encoded(
                model, encoded,
                schema_vectors(encoded, schema_model, schema_vocab, c), c);
            r.split = (split == &seen) ? "seen" : "unseen";
            rows.push_back(r);
        }
    }
    return rows;
}

std::string format_report_text(const std::vector<MetricsReport>& rows) {
    std::string out =
        "split    condition    rmse       mae        pcc        cosine     "
        "n\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf,
                      "%-8s %-12s %-10.6f %-10.6f %-10.6f %-10.6f %zu\n",
                      r.split.empty() ? "-" : r.split.c_str(),
                      r.condition.c_str(), r.rmse, r.mae, r.pcc,
                      r.cosine_similarity, r.n_samples);
        out += buf;
    }
    return out;
}

std::string format_report_csv(const std::vector<MetricsReport>& rows) {
    std::string out = "split,condition,rmse,mae,pcc,cosine_similarity\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%.6f,%.6f\n",
                      r.split.c_str(), r.condition.c_str(), r.rmse, r.mae,
                      r.pcc, r.cosine_similarity);
        out += buf;
    }
    return out;
}

}  // namespace meta4::eval
