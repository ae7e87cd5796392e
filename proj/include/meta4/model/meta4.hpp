#pragma once

#include <optional>
#include <string>
#include <vector>

#include "meta4/audio/frontend.hpp"
#include "meta4/bertis/bertis.hpp"
#include "meta4/data/datagen.hpp"
#include "meta4/nn/blocks.hpp"

namespace meta4::model {

// One aligned evaluation/training unit: mel features, transcript, optional
// label override, normalized target poses.
struct SegmentSample {
    audio::MelSpectrogram mel;
    std::string transcript;
    std::optional<data::SchemaLabel> schema;
    data::PoseSequence poses;
    std::string speaker_id;
};

SegmentSample segment_from_gesture(const data::GestureSample& g);
std::vector<SegmentSample> segments_from_gestures(
    const std::vector<data::GestureSample>& gestures);

std::vector<double> one_hot_schema(data::SchemaLabel label);

struct Meta4Config {
    // Fixed by the fusion contract.
    static constexpr size_t kAudioWidth = 64;
    static constexpr size_t kFusionWidth =
        kAudioWidth + data::kNumSchemaClasses;  // 78
    static constexpr size_t kPoseWidth = data::kPoseWidth;  // 22

    size_t audio_layers = 4;
    size_t audio_heads = 8;
    size_t audio_d_ff = 256;
    size_t decoder_heads = 6;  // must divide 78
    size_t decoder_d_ff = 312;
    double dropout_rate = 0.1;

    void validate() const;
    nn::BlockConfig audio_block() const;
    nn::BlockConfig decoder_block() const;
};

// Audio-spectrogram encoder + schema fusion + single-layer pose decoder.
class Meta4Model {
  public:
    Meta4Model() = default;
    Meta4Model(const Meta4Config& cfg, SeededRng& rng);

    // Patchify -> project -> [CLS] + positions -> encoder stack -> [CLS] row.
    Tensor encode_audio(const audio::MelSpectrogram& mel,
                        const nn::ForwardCtx& ctx) const;  // 1 x 64

    // Teacher forcing: decoder input is [SOS, gt frames 0..62]; returns the
    // predicted frames, shape 64 x 22, with gradients attached.
    Tensor decode_teacher_forced(const Tensor& h_fused,
                                 const data::PoseSequence& gt,
                                 const nn::ForwardCtx& ctx) const;

    // Deterministic autoregressive rollout of all 64 frames.
    data::PoseSequence generate(const Tensor& h_fused) const;

    nn::NamedTensors parameters() const;
    const Meta4Config& config() const { return cfg_; }
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }

  private:
    Tensor decode_rows(const Tensor& h_fused, const Tensor& input_rows,
                       const nn::ForwardCtx& ctx) const;

    Meta4Config cfg_;
    nn::Linear patch_proj_;  // 256 -> 64
    Tensor cls_;             // learned 1 x 64
    std::vector<nn::EncoderLayer> audio_layers_;
    nn::LayerNorm audio_ln_;
    nn::Linear dec_in_proj_;  // 22 -> 78
    nn::DecoderLayer decoder_;
    nn::LayerNorm dec_ln_;
    nn::Linear out_proj_;  // 78 -> 22
    bool trained_ = false;
};

// Plain concatenation, audio first; errors on width mismatch.
Tensor fuse(const Tensor& h_audio, const Tensor& schema_vec);
Tensor schema_tensor(const std::vector<double>& distribution);

data::PoseSequence pose_from_tensor(const Tensor& frames);
Tensor tensor_from_pose(const data::PoseSequence& poses);

// ---- training ----------------------------------------------------------------

struct Meta4TrainSettings {
    size_t max_epochs = 40;
    size_t patience = 5;
    size_t batch_size = 8;
    double lr = 1e-3;
    uint64_t seed = 1;
    size_t max_steps = 0;  // 0 = no step cap
};

struct Meta4History {
    std::vector<double> step_losses;  // mean batch MSE per optimizer step
    std::vector<double> epoch_losses;
    std::vector<double> val_rmse;  // mean per-sample eval::rmse, teacher-forced
    size_t best_epoch = 0;         // 1-based
    double best_val_rmse = 0.0;
};

struct TrainedMeta4 {
    Meta4Model model;
    Meta4History history;
};

// MSE on normalized coordinates, Adam, best-validation-RMSE checkpoint.
// Schema vector per sample: one-hot of the override label when present,
// otherwise the (frozen) BERTIS distribution for the transcript.
TrainedMeta4 train_meta4(const std::vector<SegmentSample>& train,
                         const std::vector<SegmentSample>& val,
                         const bertis::BertisModel& schema_model,
                         const bertis::Vocabulary& schema_vocab,
                         const Meta4Config& cfg,
                         const Meta4TrainSettings& settings);

std::vector<double> schema_vector_for_training(
    const SegmentSample& sample, const bertis::BertisModel& schema_model,
    const bertis::Vocabulary& schema_vocab);

// ---- checkpoints --------------------------------------------------------------

void save_meta4(const std::string& dir, const Meta4Model& model);
Meta4Model load_meta4(const std::string& dir);

}  // namespace meta4::model
