#include "meta4/nn/blocks.hpp"

#include <cmath>
#include <unordered_map>

namespace meta4::nn {

namespace {

constexpr double kMaskedScore = -1e30;

Tensor maybe_dropout(const Tensor& x, const BlockConfig& cfg,
                     const ForwardCtx& ctx) {
    if (!ctx.training || cfg.dropout_rate == 0.0) return x;
    require(ctx.rng != nullptr,
            "training forward pass with dropout needs a random source");
    return dropout(x, cfg.dropout_rate, *ctx.rng);
}

}  // namespace

void load_into(const NamedTensors& loaded, NamedTensors params) {
    std::unordered_map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : loaded) by_name[name] = &t;
    for (auto& [name, t] : params) {
        auto it = by_name.find(name);
        require(it != by_name.end(), "checkpoint is missing tensor '", name,
                "'");
        require(it->second->shape() == t.shape(), "checkpoint tensor '", name,
                "' has shape ", shape_str(it->second->shape()), ", expected ",
                shape_str(t.shape()));
        t.data() = it->second->data();
    }
}

void BlockConfig::validate() const {
    require(d_model > 0 && n_heads > 0 && d_ff > 0,
            "block config fields must be positive");
    require(d_model % n_heads == 0, "d_model ", d_model,
            " is not divisible by n_heads ", n_heads);
    require(dropout_rate >= 0.0 && dropout_rate < 1.0,
            "dropout_rate must be in [0,1), got ", dropout_rate);
}

AttnMask AttnMask::causal(size_t n) {
    AttnMask m;
    m.rows = n;
    m.cols = n;
    m.allow.assign(n * n, 0);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j <= i; ++j) m.allow[i * n + j] = 1;
    }
    return m;
}

Linear::Linear(size_t in, size_t out, SeededRng& rng)
    : weight(Tensor::xavier_uniform(in, out, rng)),
      bias(Tensor::zeros({out}, true)) {}

Tensor Linear::forward(const Tensor& x) const {
    require(x.rank() == 2 && x.dim(1) == weight.dim(0),
            "linear layer expects width ", weight.dim(0), ", got ",
            shape_str(x.shape()));
    return add_rowwise(matmul(x, weight), bias);
}

void Linear::collect(const std::string& prefix, NamedTensors& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(size_t width)
    : gamma(Tensor::full({width}, 1.0, true)),
      beta(Tensor::zeros({width}, true)) {}

Tensor LayerNorm::forward(const Tensor& x) const {
    return layer_norm(x, gamma, beta);
}

void LayerNorm::collect(const std::string& prefix, NamedTensors& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

MultiHeadAttention::MultiHeadAttention(const BlockConfig& cfg_, SeededRng& rng)
    : cfg(cfg_),
      wq(cfg_.d_model, cfg_.d_model, rng),
      wk(cfg_.d_model, cfg_.d_model, rng),
      wv(cfg_.d_model, cfg_.d_model, rng),
      wo(cfg_.d_model, cfg_.d_model, rng) {
    cfg.validate();
}

Tensor MultiHeadAttention::forward(const Tensor& q, const Tensor& k,
                                   const Tensor& v, const AttnMask* mask,
                                   const ForwardCtx&,
                                   std::vector<Tensor>* weights_out) const {
    require(q.rank() == 2 && k.rank() == 2 && v.rank() == 2,
            "attention inputs must be rank-2");
    require(q.dim(1) == cfg.d_model && k.dim(1) == cfg.d_model &&
                v.dim(1) == cfg.d_model,
            "attention width mismatch: q ", shape_str(q.shape()), ", k ",
            shape_str(k.shape()), ", v ", shape_str(v.shape()),
            ", d_model ", cfg.d_model);
    size_t len_q = q.dim(0), len_k = k.dim(0);
    require(v.dim(0) == len_k, "attention k/v length mismatch: ", len_k,
            " vs ", v.dim(0));

    std::vector<double> mask_bias;
    if (mask != nullptr) {
        require(mask->rows == len_q && mask->cols == len_k,
                "attention mask is ", mask->rows, "x", mask->cols,
                ", expected ", len_q, "x", len_k);
        mask_bias.assign(len_q * len_k, 0.0);
        for (size_t i = 0; i < len_q; ++i) {
            bool any = false;
            for (size_t j = 0; j < len_k; ++j) {
                if (mask->at(i, j)) {
                    any = true;
                } else {
                    mask_bias[i * len_k + j] = kMaskedScore;
                }
            }
            require(any, "attention mask leaves query row ", i,
                    " with no allowed positions");
        }
    }

    Tensor Q = wq.forward(q);
    Tensor K = wk.forward(k);
    Tensor V = wv.forward(v);

    size_t dh = cfg.d_head();
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> heads;
    heads.reserve(cfg.n_heads);
    for (size_t h = 0; h < cfg.n_heads; ++h) {
        Tensor Qh = slice_cols(Q, h * dh, (h + 1) * dh);
        Tensor Kh = slice_cols(K, h * dh, (h + 1) * dh);
        Tensor Vh = slice_cols(V, h * dh, (h + 1) * dh);
        Tensor scores = scale(matmul(Qh, transpose(Kh)), inv_sqrt);
        if (mask != nullptr) scores = add_constant(scores, mask_bias);
        Tensor weights = softmax(scores, 1);
        if (weights_out != nullptr) weights_out->push_back(weights);
        heads.push_back(matmul(weights, Vh));
    }
    return wo.forward(concat_cols(heads));
}

void MultiHeadAttention::collect(const std::string& prefix,
                                 NamedTensors& out) const {
    wq.collect(prefix + ".wq", out);
    wk.collect(prefix + ".wk", out);
    wv.collect(prefix + ".wv", out);
    wo.collect(prefix + ".wo", out);
}

FeedForward::FeedForward(const BlockConfig& cfg_, SeededRng& rng)
    : cfg(cfg_),
      lin1(cfg_.d_model, cfg_.d_ff, rng),
      lin2(cfg_.d_ff, cfg_.d_model, rng) {}

Tensor FeedForward::forward(const Tensor& x, const ForwardCtx& ctx) const {
    return lin2.forward(maybe_dropout(gelu(lin1.forward(x)), cfg, ctx));
}

void FeedForward::collect(const std::string& prefix, NamedTensors& out) const {
    lin1.collect(prefix + ".lin1", out);
    lin2.collect(prefix + ".lin2", out);
}

EncoderLayer::EncoderLayer(const BlockConfig& cfg_, SeededRng& rng)
    : cfg(cfg_),
      ln1(cfg_.d_model),
      ln2(cfg_.d_model),
      attn(cfg_, rng),
      ff(cfg_, rng) {}

Tensor EncoderLayer::forward(const Tensor& x, const ForwardCtx& ctx,
                             const AttnMask* mask) const {
    require(x.rank() == 2 && x.dim(1) == cfg.d_model,
            "encoder layer expects width ", cfg.d_model, ", got ",
            shape_str(x.shape()));
    Tensor n1 = ln1.forward(x);
    Tensor a = add(x, maybe_dropout(attn.forward(n1, n1, n1, mask, ctx),
                                    cfg, ctx));
    Tensor o = add(a, maybe_dropout(ff.forward(ln2.forward(a), ctx), cfg, ctx));
    return o;
}

void EncoderLayer::collect(const std::string& prefix,
                           NamedTensors& out) const {
    ln1.collect(prefix + ".ln1", out);
    ln2.collect(prefix + ".ln2", out);
    attn.collect(prefix + ".attn", out);
    ff.collect(prefix + ".ff", out);
}

DecoderLayer::DecoderLayer(const BlockConfig& cfg_, SeededRng& rng)
    : cfg(cfg_),
      ln1(cfg_.d_model),
      ln2(cfg_.d_model),
      ln3(cfg_.d_model),
      self_attn(cfg_, rng),
      cross_attn(cfg_, rng),
      ff(cfg_, rng) {}

Tensor DecoderLayer::forward(const Tensor& x, const Tensor& memory,
                             const AttnMask* self_mask,
                             const ForwardCtx& ctx) const {
    require(x.rank() == 2 && x.dim(1) == cfg.d_model,
            "decoder layer expects width ", cfg.d_model, ", got ",
            shape_str(x.shape()));
    require(memory.rank() == 2 && memory.dim(1) == cfg.d_model,
            "decoder memory width must be ", cfg.d_model, ", got ",
            shape_str(memory.shape()));
    Tensor n1 = ln1.forward(x);
    Tensor a = add(
        x, maybe_dropout(self_attn.forward(n1, n1, n1, self_mask, ctx), cfg,
                         ctx));
    Tensor n2 = ln2.forward(a);
    Tensor b = add(a, maybe_dropout(
                          cross_attn.forward(n2, memory, memory, nullptr, ctx),
                          cfg, ctx));
    Tensor o =
        add(b, maybe_dropout(ff.forward(ln3.forward(b), ctx), cfg, ctx));
    return o;
}

void DecoderLayer::collect(const std::string& prefix,
                           NamedTensors& out) const {
    ln1.collect(prefix + ".ln1", out);
    ln2.collect(prefix + ".ln2", out);
    ln3.collect(prefix + ".ln3", out);
    self_attn.collect(prefix + ".self_attn", out);
    cross_attn.collect(prefix + ".cross_attn", out);
    ff.collect(prefix + ".ff", out);
}

Tensor sinusoidal_positional_encoding(size_t length, size_t d_model) {
    require(length > 0 && d_model > 0,
            "positional encoding needs positive length and width");
    std::vector<double> pe(length * d_model);
    for (size_t pos = 0; pos < length; ++pos) {
        for (size_t i = 0; i < d_model; i += 2) {
            double rate = std::pow(
                10000.0, static_cast<double>(i) / static_cast<double>(d_model));
            double angle = static_cast<double>(pos) / rate;
            pe[pos * d_model + i] = std::sin(angle);
            if (i + 1 < d_model) pe[pos * d_model + i + 1] = std::cos(angle);
        }
    }
    return Tensor::from_data({length, d_model}, std::move(pe));
}

EmbeddingTable::EmbeddingTable(size_t vocab_size_, size_t d_model_,
                               SeededRng& rng)
    : vocab_size(vocab_size_), d_model(d_model_) {
    require(vocab_size > 0 && d_model > 0,
            "embedding table needs positive sizes");
    std::vector<double> w(vocab_size * d_model);
    for (auto& v : w) v = 0.02 * rng.normal();
    weight = Tensor::from_data({vocab_size, d_model}, std::move(w), true);
}

Tensor EmbeddingTable::lookup(const std::vector<int>& ids) const {
    return embedding_lookup(weight, ids);
}

void EmbeddingTable::collect(const std::string& prefix,
                             NamedTensors& out) const {
    out.emplace_back(prefix + ".weight", weight);
}

Tensor sum_input_embeddings(const std::vector<int>& token_ids,
                            const std::vector<int>& segment_ids,
                            const std::vector<int>& position_ids,
                            const EmbeddingTable& token_table,
                            const EmbeddingTable& segment_table,
                            const EmbeddingTable& position_table) {
    require(token_ids.size() == segment_ids.size() &&
                token_ids.size() == position_ids.size(),
            "input embedding id lists differ in length");
    require(token_table.d_model == segment_table.d_model &&
                token_table.d_model == position_table.d_model,
            "input embedding tables differ in width");
    return add(add(token_table.lookup(token_ids),
                   segment_table.lookup(segment_ids)),
               position_table.lookup(position_ids));
}

}  // namespace meta4::nn
