#include <cmath>

#include "meta4/bertis/bertis.hpp"

namespace meta4::bertis {

void BertisConfig::validate() const {
    require(n_layers >= 1, "bertis: need at least one encoder layer");
    require(max_len >= 2 && max_len <= kMaxSeqLen,
            "bertis: max_len must be in [2, ", kMaxSeqLen, "]");
    block.validate();
}

BertisModel::BertisModel(const BertisConfig& cfg, size_t vocab_size,
                         SeededRng& rng)
    : cfg_(cfg), vocab_size_(vocab_size) {
    cfg.validate();
    require(vocab_size > kNumSpecials, "bertis: vocabulary too small (",
            vocab_size, ")");
    size_t d = cfg.block.d_model;
    tok_emb_ = nn::EmbeddingTable(vocab_size, d, rng);
    seg_emb_ = nn::EmbeddingTable(2, d, rng);
    pos_emb_ = nn::EmbeddingTable(cfg.max_len, d, rng);
    layers_.reserve(cfg.n_layers);
    for (size_t i = 0; i < cfg.n_layers; ++i) {
        layers_.emplace_back(cfg.block, rng);
    }
    final_ln_ = nn::LayerNorm(d);
    head_ = nn::Linear(d, data::kNumSchemaClasses, rng);
}

Tensor BertisModel::forward(const TokenSequence& seq,
                            const nn::ForwardCtx& ctx) const {
    require(vocab_size_ > 0, "bertis: model not constructed");
    require(seq.token_ids.size() == cfg_.max_len &&
                seq.attention.size() == cfg_.max_len,
            "bertis: sequence length ", seq.token_ids.size(),
            " does not match model max_len ", cfg_.max_len);

    Tensor x = nn::sum_input_embeddings(seq.token_ids, seq.segment_ids,
                                        seq.position_ids, tok_emb_, seg_emb_,
                                        pos_emb_);
    if (ctx.training && cfg_.block.dropout_rate > 0.0) {
        require(ctx.rng != nullptr, "bertis: training forward needs an rng");
        x = dropout(x, cfg_.block.dropout_rate, *ctx.rng);
    }

    // Every query may look only at real tokens.
    nn::AttnMask mask;
    mask.rows = cfg_.max_len;
    mask.cols = cfg_.max_len;
    mask.allow.assign(cfg_.max_len * cfg_.max_len, 0);
    for (size_t i = 0; i < cfg_.max_len; ++i) {
        for (size_t j = 0; j < cfg_.max_len; ++j) {
            mask.allow[i * cfg_.max_len + j] = seq.attention[j];
        }
    }

    for (const auto& layer : layers_) x = layer.forward(x, ctx, &mask);
    x = final_ln_.forward(x);
    Tensor cls = slice_rows(x, 0, 1);
    return head_.forward(cls);
}

nn::NamedTensors BertisModel::parameters() const {
    nn::NamedTensors out;
    tok_emb_.collect("bertis.tok_emb", out);
    seg_emb_.collect("bertis.seg_emb", out);
    pos_emb_.collect("bertis.pos_emb", out);
    for (size_t i = 0; i < layers_.size(); ++i) {
        layers_[i].collect("bertis.layer" + std::to_string(i), out);
    }
    final_ln_.collect("bertis.final_ln", out);
    head_.collect("bertis.head", out);
    return out;
}

SchemaPrediction classify_schema(const std::string& text,
                                 const BertisModel& model,
                                 const Vocabulary& vocab) {
    require(model.trained(),
            "classify_schema: model has not been trained or loaded");
    NoGradGuard guard;
    nn::ForwardCtx ctx;
    TokenSequence seq = tokenize(text, vocab);
    Tensor probs = softmax(model.forward(seq, ctx), 1);

    SchemaPrediction pred;
    pred.distribution = probs.data();
    size_t best = 0;
    for (size_t c = 1; c < data::kNumSchemaClasses; ++c) {
        if (pred.distribution[c] > pred.distribution[best]) best = c;
    }
    pred.label = static_cast<data::SchemaLabel>(best);
    return pred;
}

}  // namespace meta4::bertis
