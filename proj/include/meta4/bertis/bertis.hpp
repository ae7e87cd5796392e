#pragma once

#include <string>
#include <vector>

#include "meta4/bertis/tokenizer.hpp"
#include "meta4/data/types.hpp"
#include "meta4/nn/blocks.hpp"

namespace meta4::bertis {

struct BertisConfig {
    size_t n_layers = 4;
    nn::BlockConfig block{128, 4, 256, 0.1};
    size_t max_len = kMaxSeqLen;

    void validate() const;
};

// Text -> image-schema classifier: summed token/segment/position embeddings
// into a pre-norm encoder stack; a dense 14-way head reads the [CLS] row.
class BertisModel {
  public:
    BertisModel() = default;
    BertisModel(const BertisConfig& cfg, size_t vocab_size, SeededRng& rng);

    // Logits, shape 1 x 14.
    Tensor forward(const TokenSequence& seq, const nn::ForwardCtx& ctx) const;

    nn::NamedTensors parameters() const;
    const BertisConfig& config() const { return cfg_; }
    size_t vocab_size() const { return vocab_size_; }

    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }

  private:
    BertisConfig cfg_;
    size_t vocab_size_ = 0;
    nn::EmbeddingTable tok_emb_, seg_emb_, pos_emb_;
    std::vector<nn::EncoderLayer> layers_;
    nn::LayerNorm final_ln_;
    nn::Linear head_;
    bool trained_ = false;
};

struct SchemaPrediction {
    std::vector<double> distribution;  // 14 probabilities, sums to 1
    data::SchemaLabel label;           // argmax
};

SchemaPrediction classify_schema(const std::string& text,
                                 const BertisModel& model,
                                 const Vocabulary& vocab);

// ---- corpus handling -------------------------------------------------------

struct SplitCorpus {
    std::vector<data::TextSample> train, val, test;
};

// Stratified 80/10/10 by label (classes with fewer than 3 samples stay in
// train); deterministic in the seed.
SplitCorpus split_corpus(const std::vector<data::TextSample>& corpus,
                         uint64_t seed);

// Duplicates minority-class samples (with replacement) until every class
// present reaches the maximum class count. Originals are all retained.
std::vector<data::TextSample> oversample(
    const std::vector<data::TextSample>& dataset, SeededRng& rng);

// ---- training ----------------------------------------------------------------

struct TrainSettings {
    size_t max_epochs = 100;
    size_t patience = 5;  // epochs without val-accuracy improvement
    size_t batch_size = 32;
    double lr = 1e-3;
    uint64_t seed = 1;
};

struct TrainHistory {
    std::vector<double> step_losses;      // mean batch loss per optimizer step
    std::vector<double> epoch_losses;     // mean over the epoch's steps
    std::vector<double> val_accuracies;   // one per epoch
    size_t best_epoch = 0;                // 1-based epoch of the kept weights
    double best_val_accuracy = 0.0;
};

struct TrainedBertis {
    BertisModel model;
    TrainHistory history;
};

// Cross-entropy + Adam with early stopping on validation accuracy; returns
// the best-validation checkpoint. Throws DivergenceError (with the epoch)
// when the loss leaves the finite range.
TrainedBertis train_bertis(const std::vector<data::TextSample>& train,
                           const std::vector<data::TextSample>& val,
                           const Vocabulary& vocab, const BertisConfig& cfg,
                           const TrainSettings& settings);

// Throws DivergenceError naming the epoch when the loss is NaN/inf.
void require_finite_loss(double loss, size_t epoch);

double evaluate_accuracy(const BertisModel& model, const Vocabulary& vocab,
                         const std::vector<data::TextSample>& samples);

// ---- checkpoints --------------------------------------------------------------

void save_bertis(const std::string& dir, const BertisModel& model,
                 const Vocabulary& vocab);

struct LoadedBertis {
    BertisModel model;
    Vocabulary vocab;
};

LoadedBertis load_bertis(const std::string& dir);

}  // namespace meta4::bertis
