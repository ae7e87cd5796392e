#include "meta4/model/meta4.hpp"

#include <cmath>
#include <filesystem>

#include "meta4/core/kv.hpp"
#include "meta4/core/serialize.hpp"

namespace meta4::model {

SegmentSample segment_from_gesture(const data::GestureSample& g) {
    SegmentSample s;
    s.mel = audio::compute_mel(g.audio);
    s.transcript = g.transcript;
    s.schema = g.label;
    s.poses = g.poses;
    s.speaker_id = g.speaker_id;
    return s;
}

std::vector<SegmentSample> segments_from_gestures(
    const std::vector<data::GestureSample>& gestures) {
    std::vector<SegmentSample> out;
    out.reserve(gestures.size());
    for (const auto& g : gestures) out.push_back(segment_from_gesture(g));
    return out;
}

std::vector<double> one_hot_schema(data::SchemaLabel label) {
    std::vector<double> v(data::kNumSchemaClasses, 0.0);
    v[static_cast<size_t>(label)] = 1.0;
    return v;
}

void Meta4Config::validate() const {
    audio_block().validate();
    decoder_block().validate();
}

nn::BlockConfig Meta4Config::audio_block() const {
    return {kAudioWidth, audio_heads, audio_d_ff, dropout_rate};
}

nn::BlockConfig Meta4Config::decoder_block() const {
    return {kFusionWidth, decoder_heads, decoder_d_ff, dropout_rate};
}

Meta4Model::Meta4Model(const Meta4Config& cfg, SeededRng& rng) : cfg_(cfg) {
    cfg.validate();
    require(cfg.audio_layers >= 1, "meta4: need at least one audio layer");
    size_t patch_width = audio::kPatchSize * audio::kPatchSize;
    patch_proj_ = nn::Linear(patch_width, Meta4Config::kAudioWidth, rng);
    cls_ = Tensor::uniform({1, Meta4Config::kAudioWidth}, -0.1, 0.1, rng,
                           true);
    audio_layers_.reserve(cfg.audio_layers);
    for (size_t i = 0; i < cfg.audio_layers; ++i) {
        audio_layers_.emplace_back(cfg.audio_block(), rng);
    }
    audio_ln_ = nn::LayerNorm(Meta4Config::kAudioWidth);
    dec_in_proj_ = nn::Linear(Meta4Config::kPoseWidth,
                              Meta4Config::kFusionWidth, rng);
    decoder_ = nn::DecoderLayer(cfg.decoder_block(), rng);
    dec_ln_ = nn::LayerNorm(Meta4Config::kFusionWidth);
    out_proj_ = nn::Linear(Meta4Config::kFusionWidth,
                           Meta4Config::kPoseWidth, rng);
}

Tensor Meta4Model::encode_audio(const audio::MelSpectrogram& mel,
                                const nn::ForwardCtx& ctx) const {
    require(!audio_layers_.empty(), "meta4: model not constructed");
    Tensor patches = audio::patchify(mel);  // n x 256
    Tensor projected = patch_proj_.forward(patches);
    Tensor x = concat_rows({cls_, projected});
    Tensor pe = nn::sinusoidal_positional_encoding(x.dim(0),
                                                   Meta4Config::kAudioWidth);
    x = add(x, pe);
    for (const auto& layer : audio_layers_) x = layer.forward(x, ctx);
    x = audio_ln_.forward(x);
    return slice_rows(x, 0, 1);
}

Tensor fuse(const Tensor& h_audio, const Tensor& schema_vec) {
    require(h_audio.rank() == 2 && h_audio.dim(0) == 1 &&
                h_audio.dim(1) == Meta4Config::kAudioWidth,
            "fuse: audio vector must be 1 x ", Meta4Config::kAudioWidth,
            ", got ", shape_str(h_audio.shape()));
    require(schema_vec.rank() == 2 && schema_vec.dim(0) == 1 &&
                schema_vec.dim(1) == data::kNumSchemaClasses,
            "fuse: schema vector must be 1 x ", data::kNumSchemaClasses,
            ", got ", shape_str(schema_vec.shape()));
    return concat_cols({h_audio, schema_vec});
}

Tensor schema_tensor(const std::vector<double>& distribution) {
    require(distribution.size() == data::kNumSchemaClasses,
            "schema_tensor: expected ", data::kNumSchemaClasses,
            " values, got ", distribution.size());
    return Tensor::from_data({1, data::kNumSchemaClasses}, distribution);
}

data::PoseSequence pose_from_tensor(const Tensor& frames) {
    require(frames.rank() == 2 && frames.dim(0) == data::kPoseFrames &&
                frames.dim(1) == data::kPoseWidth,
            "pose_from_tensor: expected ", data::kPoseFrames, " x ",
            data::kPoseWidth, ", got ", shape_str(frames.shape()));
    data::PoseSequence p;
    p.values = frames.data();
    return p;
}

Tensor tensor_from_pose(const data::PoseSequence& poses) {
    poses.validate();
    return Tensor::from_data({data::kPoseFrames, data::kPoseWidth},
                             poses.values);
}

Tensor Meta4Model::decode_rows(const Tensor& h_fused,
                               const Tensor& input_rows,
                               const nn::ForwardCtx& ctx) const {
    require(h_fused.rank() == 2 && h_fused.dim(0) == 1 &&
                h_fused.dim(1) == Meta4Config::kFusionWidth,
            "meta4: fused vector must be 1 x ", Meta4Config::kFusionWidth,
            ", got ", shape_str(h_fused.shape()));
    size_t len = input_rows.dim(0);
    Tensor x = dec_in_proj_.forward(input_rows);
    Tensor pe = nn::sinusoidal_positional_encoding(
        len, Meta4Config::kFusionWidth);
    x = add(x, pe);
    nn::AttnMask mask = nn::AttnMask::causal(len);
    x = decoder_.forward(x, h_fused, &mask, ctx);
    x = dec_ln_.forward(x);
    return out_proj_.forward(x);
}

Tensor Meta4Model::decode_teacher_forced(const Tensor& h_fused,
                                         const data::PoseSequence& gt,
                                         const nn::ForwardCtx& ctx) const {
    gt.validate();
    // Shift right: SOS (zero frame), then gt frames 0..62.
    std::vector<double> rows(data::kPoseFrames * data::kPoseWidth, 0.0);
    std::copy(gt.values.begin(),
              gt.values.end() - data::kPoseWidth,
              rows.begin() + data::kPoseWidth);
    Tensor input = Tensor::from_data({data::kPoseFrames, data::kPoseWidth},
                                     std::move(rows));
    return decode_rows(h_fused, input, ctx);
}

data::PoseSequence Meta4Model::generate(const Tensor& h_fused) const {
    require(trained_, "meta4: generate requires a trained model");
    NoGradGuard guard;
    nn::ForwardCtx ctx;

    std::vector<double> rows(data::kPoseWidth, 0.0);  // SOS frame
    std::vector<double> out;
    out.reserve(data::kPoseFrames * data::kPoseWidth);
    for (size_t t = 0; t < data::kPoseFrames; ++t) {
        Tensor input = Tensor::from_data({t + 1, data::kPoseWidth}, rows);
        Tensor pred = decode_rows(h_fused, input, ctx);
        const double* last = pred.data().data() + t * data::kPoseWidth;
        out.insert(out.end(), last, last + data::kPoseWidth);
        if (t + 1 < data::kPoseFrames) {
            rows.insert(rows.end(), last, last + data::kPoseWidth);
        }
    }
    data::PoseSequence p;
    p.values = std::move(out);
    p.validate();
    return p;
}

nn::NamedTensors Meta4Model::parameters() const {
    nn::NamedTensors out;
    patch_proj_.collect("meta4.patch_proj", out);
    out.emplace_back("meta4.cls", cls_);
    for (size_t i = 0; i < audio_layers_.size(); ++i) {
        audio_layers_[i].collect("meta4.audio" + std::to_string(i), out);
    }
    audio_ln_.collect("meta4.audio_ln", out);
    dec_in_proj_.collect("meta4.dec_in_proj", out);
    decoder_.collect("meta4.decoder", out);
    dec_ln_.collect("meta4.dec_ln", out);
    out_proj_.collect("meta4.out_proj", out);
    return out;
}

void save_meta4(const std::string& dir, const Meta4Model& model) {
    require(model.trained(), "save_meta4: refusing to save an untrained model");
    std::filesystem::create_directories(dir);
    nn::NamedTensors params = model.parameters();
    save_named_tensors(dir + "/model.bin", params);

    const Meta4Config& cfg = model.config();
    KvPairs manifest;
    manifest.emplace_back("kind", "meta4");
    manifest.emplace_back("format_version", "1");
    manifest.emplace_back("audio_width",
                          std::to_string(Meta4Config::kAudioWidth));
    manifest.emplace_back("fusion_width",
                          std::to_string(Meta4Config::kFusionWidth));
    manifest.emplace_back("pose_width",
                          std::to_string(Meta4Config::kPoseWidth));
    manifest.emplace_back("audio_layers", std::to_string(cfg.audio_layers));
    manifest.emplace_back("audio_heads", std::to_string(cfg.audio_heads));
    manifest.emplace_back("audio_d_ff", std::to_string(cfg.audio_d_ff));
    manifest.emplace_back("decoder_heads", std::to_string(cfg.decoder_heads));
    manifest.emplace_back("decoder_d_ff", std::to_string(cfg.decoder_d_ff));
    manifest.emplace_back("dropout", std::to_string(cfg.dropout_rate));
    for (const auto& [name, t] : params) {
        std::string shape;
        for (size_t i = 0; i < t.rank(); ++i) {
            if (i) shape += "x";
            shape += std::to_string(t.dim(i));
        }
        manifest.emplace_back("tensor." + name, shape);
    }
    save_kv_file(dir + "/manifest.txt", manifest);
}

Meta4Model load_meta4(const std::string& dir) {
    KvPairs manifest = load_kv_file(dir + "/manifest.txt");
    require(kv_get(manifest, "kind") == "meta4", dir,
            ": manifest kind is not 'meta4'");
    // The fusion-width invariant is checked loudly before any tensor I/O.
    size_t fusion = std::stoul(kv_get(manifest, "fusion_width"));
    size_t audio_w = std::stoul(kv_get(manifest, "audio_width"));
    require(audio_w == Meta4Config::kAudioWidth &&
                fusion == Meta4Config::kFusionWidth,
            dir, ": fusion width ", fusion, " (audio ", audio_w,
            ") does not match the required ", Meta4Config::kFusionWidth,
            " = ", Meta4Config::kAudioWidth, " + ", data::kNumSchemaClasses);
    require(std::stoul(kv_get(manifest, "pose_width")) ==
                Meta4Config::kPoseWidth,
            dir, ": pose width mismatch");

    Meta4Config cfg;
    cfg.audio_layers = std::stoul(kv_get(manifest, "audio_layers"));
    cfg.audio_heads = std::stoul(kv_get(manifest, "audio_heads"));
    cfg.audio_d_ff = std::stoul(kv_get(manifest, "audio_d_ff"));
    cfg.decoder_heads = std::stoul(kv_get(manifest, "decoder_heads"));
    cfg.decoder_d_ff = std::stoul(kv_get(manifest, "decoder_d_ff"));
    cfg.dropout_rate = std::stod(kv_get(manifest, "dropout"));

    SeededRng rng(0);
    Meta4Model model(cfg, rng);
    nn::load_into(load_named_tensors(dir + "/model.bin"),
                  model.parameters());
    model.mark_trained();
    return model;
}

}  // namespace meta4::model
