#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "meta4/core/optim.hpp"
#include "meta4/core/tensor.hpp"

namespace meta4::nn {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Copies values from `loaded` into matching names in `params`.
// Every parameter must be present with the right shape.
void load_into(const NamedTensors& loaded, NamedTensors params);

struct BlockConfig {
    size_t d_model = 64;
    size_t n_heads = 8;
    size_t d_ff = 256;  // 4 * d_model by convention
    double dropout_rate = 0.1;

    void validate() const;
    size_t d_head() const { return d_model / n_heads; }
};

// Runtime knobs for a forward pass. Dropout fires only when training is set
// and then needs a random source.
struct ForwardCtx {
    bool training = false;
    SeededRng* rng = nullptr;
};

// Boolean attention mask; allow[i*cols + j] nonzero lets query i see key j.
struct AttnMask {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<uint8_t> allow;

    static AttnMask causal(size_t n);
    bool at(size_t i, size_t j) const { return allow[i * cols + j] != 0; }
};

struct Linear {
    Tensor weight;  // in x out
    Tensor bias;    // out

    Linear() = default;
    Linear(size_t in, size_t out, SeededRng& rng);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, NamedTensors& out) const;
};

struct LayerNorm {
    Tensor gamma;
    Tensor beta;

    LayerNorm() = default;
    explicit LayerNorm(size_t width);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, NamedTensors& out) const;
};

// Scaled dot-product attention over n_heads column slices; masked positions
// receive exactly zero attention weight (additive -1e30 before softmax).
struct MultiHeadAttention {
    BlockConfig cfg;
    Linear wq, wk, wv, wo;

    MultiHeadAttention() = default;
    MultiHeadAttention(const BlockConfig& cfg, SeededRng& rng);
    // q: len_q x d_model, k/v: len_k x d_model, mask: len_q x len_k or null.
    // weights_out, when given, receives the per-head attention matrices.
    Tensor forward(const Tensor& q, const Tensor& k, const Tensor& v,
                   const AttnMask* mask, const ForwardCtx& ctx,
                   std::vector<Tensor>* weights_out = nullptr) const;
    void collect(const std::string& prefix, NamedTensors& out) const;
};

struct FeedForward {
    BlockConfig cfg;
    Linear lin1, lin2;

    FeedForward() = default;
    FeedForward(const BlockConfig& cfg, SeededRng& rng);
    Tensor forward(const Tensor& x, const ForwardCtx& ctx) const;
    void collect(const std::string& prefix, NamedTensors& out) const;
};

// Pre-norm residual encoder layer: x + attn(ln1(x)), then + ff(ln2(.)).
struct EncoderLayer {
    BlockConfig cfg;
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    FeedForward ff;

    EncoderLayer() = default;
    EncoderLayer(const BlockConfig& cfg, SeededRng& rng);
    Tensor forward(const Tensor& x, const ForwardCtx& ctx,
                   const AttnMask* mask = nullptr) const;
    void collect(const std::string& prefix, NamedTensors& out) const;
};

// Pre-norm residual decoder layer: masked self-attention, cross-attention
// over the memory, feed-forward.
struct DecoderLayer {
    BlockConfig cfg;
    LayerNorm ln1, ln2, ln3;
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ff;

    DecoderLayer() = default;
    DecoderLayer(const BlockConfig& cfg, SeededRng& rng);
    Tensor forward(const Tensor& x, const Tensor& memory,
                   const AttnMask* self_mask, const ForwardCtx& ctx) const;
    void collect(const std::string& prefix, NamedTensors& out) const;
};

// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(same).
Tensor sinusoidal_positional_encoding(size_t length, size_t d_model);

struct EmbeddingTable {
    size_t vocab_size = 0;
    size_t d_model = 0;
    Tensor weight;

    EmbeddingTable() = default;
    EmbeddingTable(size_t vocab_size, size_t d_model, SeededRng& rng);
    Tensor lookup(const std::vector<int>& ids) const;
    void collect(const std::string& prefix, NamedTensors& out) const;
};

// Token + segment + position embeddings, one row per token.
Tensor sum_input_embeddings(const std::vector<int>& token_ids,
                            const std::vector<int>& segment_ids,
                            const std::vector<int>& position_ids,
                            const EmbeddingTable& token_table,
                            const EmbeddingTable& segment_table,
                            const EmbeddingTable& position_table);

}  // namespace meta4::nn
