#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "meta4/core/kv.hpp"
#include "meta4/eval/metrics.hpp"
#include "meta4/model/meta4.hpp"
#include "support/gradcheck.hpp"

using namespace meta4;
using namespace meta4::model;
using data::SchemaLabel;

namespace fs = std::filesystem;

namespace {

Meta4Config tiny_config(double dropout = 0.0) {
    Meta4Config cfg;
    cfg.audio_layers = 1;
    cfg.audio_heads = 4;
    cfg.audio_d_ff = 128;
    cfg.decoder_heads = 6;
    cfg.decoder_d_ff = 156;
    cfg.dropout_rate = dropout;
    return cfg;
}

audio::MelSpectrogram random_mel(size_t frames, SeededRng& rng) {
    audio::MelSpectrogram m;
    m.frames = frames;
    m.data.resize(frames * audio::kNumMels);
    for (double& v : m.data) v = rng.uniform(-4.0, 0.0);
    return m;
}

data::PoseSequence random_pose(SeededRng& rng) {
    data::PoseSequence p;
    for (double& v : p.values) v = rng.uniform(-0.5, 0.5);
    return p;
}

SegmentSample random_segment(SeededRng& rng, SchemaLabel label,
                             const std::string& speaker) {
    SegmentSample s;
    s.mel = random_mel(18, rng);
    s.transcript = "push the door";
    s.schema = label;
    s.poses = random_pose(rng);
    s.speaker_id = speaker;
    return s;
}

// A minimal trained-enough BERTIS stand-in for the frozen schema side.
struct SchemaSide {
    bertis::Vocabulary vocab;
    bertis::BertisModel model;
};

SchemaSide schema_side() {
    SchemaSide side;
    side.vocab = bertis::build_vocab({"push the door open"}, 100);
    bertis::BertisConfig cfg;
    cfg.n_layers = 1;
    cfg.block.d_model = 16;
    cfg.block.n_heads = 2;
    cfg.block.d_ff = 32;
    cfg.block.dropout_rate = 0.0;
    SeededRng rng(17);
    side.model = bertis::BertisModel(cfg, side.vocab.size(), rng);
    side.model.mark_trained();
    return side;
}

}  // namespace

TEST_CASE("config and fusion width contracts") {
    CHECK(Meta4Config::kFusionWidth == 78);
    Meta4Config bad = tiny_config();
    bad.decoder_heads = 8;  // 78 % 8 != 0
    CHECK_THROWS_AS(bad.validate(), Error);

    SeededRng rng(1);
    Tensor h = Tensor::zeros({1, 64});
    Tensor s = Tensor::zeros({1, 14});
    Tensor f = fuse(h, s);
    CHECK(f.shape() == std::vector<size_t>{1, 78});
    for (double v : f.data()) CHECK(v == 0.0);

    Tensor ha = Tensor::uniform({1, 64}, -1, 1, rng, false);
    Tensor sa = Tensor::uniform({1, 14}, 0, 1, rng, false);
    Tensor fa = fuse(ha, sa);
    for (size_t i = 0; i < 64; ++i) CHECK(fa.data()[i] == ha.data()[i]);
    for (size_t i = 0; i < 14; ++i) CHECK(fa.data()[64 + i] == sa.data()[i]);

    CHECK_THROWS_AS(fuse(Tensor::zeros({1, 63}), s), Error);
    CHECK_THROWS_AS(fuse(h, Tensor::zeros({1, 13})), Error);
    CHECK_THROWS_AS(schema_tensor(std::vector<double>(13, 0.0)), Error);

    std::vector<double> oh = one_hot_schema(SchemaLabel::kLink);
    CHECK(oh.size() == 14);
    CHECK(oh[5] == 1.0);
    double total = 0.0;
    for (double v : oh) total += v;
    CHECK(total == 1.0);
}

TEST_CASE("pose/tensor conversions") {
    SeededRng rng(2);
    data::PoseSequence p = random_pose(rng);
    Tensor t = tensor_from_pose(p);
    CHECK(t.shape() == std::vector<size_t>{64, 22});
    data::PoseSequence back = pose_from_tensor(t);
    CHECK(back.values == p.values);
    CHECK_THROWS_AS(pose_from_tensor(Tensor::zeros({64, 21})), Error);
}

TEST_CASE("encode_audio: shape, collision, model-level gradients") {
    SeededRng rng(3);
    Meta4Model model(tiny_config(), rng);
    nn::ForwardCtx ctx;

    audio::MelSpectrogram mel = random_mel(18, rng);
    Tensor h = model.encode_audio(mel, ctx);
    CHECK(h.shape() == std::vector<size_t>{1, 64});

    // Distinct inputs must not collide for a random model.
    audio::MelSpectrogram mel2 = random_mel(18, rng);
    Tensor h2 = model.encode_audio(mel2, ctx);
    CHECK(h.data() != h2.data());

    // Finite differences through the whole encoder via the learned [CLS]
    // row (the per-block weights get their own exhaustive checks).
    nn::NamedTensors params = model.parameters();
    Tensor cls, out_bias;
    for (auto& [name, t] : params) {
        if (name == "meta4.cls") cls = t;
        if (name == "meta4.out_proj.bias") out_bias = t;
    }
    REQUIRE(cls.size() == 64);
    auto res = testing::grad_check(
        {cls}, [&] { return sum(model.encode_audio(mel, ctx)); }, 1e-5);
    CHECK(res.max_rel_err < 1e-5);

    // And through the decoder via the output projection bias.
    REQUIRE(out_bias.size() == 22);
    Tensor h_fused = fuse(h, schema_tensor(one_hot_schema(
                                 data::SchemaLabel::kContainment)));
    data::PoseSequence gt = random_pose(rng);
    Tensor target = tensor_from_pose(gt);
    auto res2 = testing::grad_check(
        {out_bias},
        [&] {
            return mse_loss(model.decode_teacher_forced(h_fused, gt, ctx),
                            target);
        },
        1e-5);
    CHECK(res2.max_rel_err < 1e-5);
}

TEST_CASE("decoder: shape, causality, SOS independence") {
    SeededRng rng(4);
    Meta4Model model(tiny_config(), rng);
    nn::ForwardCtx ctx;
    NoGradGuard guard;

    Tensor h_fused = fuse(Tensor::uniform({1, 64}, -1, 1, rng, false),
                          schema_tensor(one_hot_schema(SchemaLabel::kForce)));
    data::PoseSequence gt = random_pose(rng);
    Tensor pred = model.decode_teacher_forced(h_fused, gt, ctx);
    CHECK(pred.shape() == std::vector<size_t>{64, 22});

    // Perturbing ground-truth frames >= t never changes outputs < t.
    for (size_t t : {1ul, 13ul, 40ul, 63ul}) {
        data::PoseSequence tampered = gt;
        for (size_t f = t; f < data::kPoseFrames; ++f) {
            for (size_t c = 0; c < data::kPoseWidth; ++c) {
                tampered.values[f * data::kPoseWidth + c] +=
                    rng.uniform(0.5, 2.0);
            }
        }
        Tensor pred2 = model.decode_teacher_forced(h_fused, tampered, ctx);
        double max_diff = 0.0;
        // Output frame t sees gt frames < t only; frames up to and
        // including t must be unchanged.
        for (size_t f = 0; f <= t && f < data::kPoseFrames; ++f) {
            for (size_t c = 0; c < data::kPoseWidth; ++c) {
                max_diff = std::max(
                    max_diff,
                    std::abs(pred2.data()[f * data::kPoseWidth + c] -
                             pred.data()[f * data::kPoseWidth + c]));
            }
        }
        CHECK(max_diff <= 1e-12);
    }

    // Frame 0 depends only on the SOS frame: replace all of gt.
    data::PoseSequence other = random_pose(rng);
    Tensor pred3 = model.decode_teacher_forced(h_fused, other, ctx);
    for (size_t c = 0; c < data::kPoseWidth; ++c) {
        CHECK(pred3.data()[c] == pred.data()[c]);
    }
}

TEST_CASE("end-to-end gradient reaches the patch projection") {
    SeededRng rng(5);
    Meta4Model model(tiny_config(), rng);
    nn::ForwardCtx ctx;
    audio::MelSpectrogram mel = random_mel(17, rng);
    data::PoseSequence gt = random_pose(rng);

    Tensor h_audio = model.encode_audio(mel, ctx);
    Tensor h_fused = fuse(h_audio,
                          schema_tensor(one_hot_schema(SchemaLabel::kScale)));
    Tensor loss = mse_loss(model.decode_teacher_forced(h_fused, gt, ctx),
                           tensor_from_pose(gt));
    backward(loss);

    for (auto& [name, t] : model.parameters()) {
        if (name != "meta4.patch_proj.weight") continue;
        REQUIRE(!t.grad().empty());
        double norm = 0.0;
        for (double g : t.grad()) norm += g * g;
        CHECK(norm > 0.0);
    }
}

TEST_CASE("generate: trained gate, determinism, shape") {
    SeededRng rng(6);
    Meta4Model model(tiny_config(), rng);
    Tensor h_fused = fuse(Tensor::uniform({1, 64}, -1, 1, rng, false),
                          schema_tensor(one_hot_schema(SchemaLabel::kObject)));
    CHECK_THROWS_WITH_AS(model.generate(h_fused),
                         doctest::Contains("trained"), Error);

    model.mark_trained();
    data::PoseSequence a = model.generate(h_fused);
    data::PoseSequence b = model.generate(h_fused);
    CHECK(a.values == b.values);
    CHECK(a.values.size() == data::kPoseFrames * data::kPoseWidth);
    a.validate();

    // Rollout agrees with teacher forcing fed its own output: frame t of
    // generate equals decode_teacher_forced(generate_output) at frame t.
    NoGradGuard guard;
    nn::ForwardCtx ctx;
    Tensor tf = model.decode_teacher_forced(h_fused, a, ctx);
    double max_diff = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        max_diff = std::max(max_diff, std::abs(tf.data()[i] - a.values[i]));
    }
    CHECK(max_diff <= 1e-9);
}

TEST_CASE("schema vector rule: override one-hot, else frozen classifier") {
    SchemaSide side = schema_side();
    SeededRng rng(7);
    SegmentSample with = random_segment(rng, SchemaLabel::kCovering, "sp");
    CHECK(schema_vector_for_training(with, side.model, side.vocab) ==
          one_hot_schema(SchemaLabel::kCovering));

    SegmentSample without = with;
    without.schema.reset();
    auto vec = schema_vector_for_training(without, side.model, side.vocab);
    auto direct = bertis::classify_schema(without.transcript, side.model,
                                          side.vocab);
    CHECK(vec == direct.distribution);
}

TEST_CASE("training memorizes one sample and reports consistent rmse") {
    SchemaSide side = schema_side();
    SeededRng rng(8);
    std::vector<SegmentSample> ds = {
        random_segment(rng, SchemaLabel::kForce, "sp0")};

    Meta4TrainSettings st;
    st.max_epochs = 500;
    st.max_steps = 500;
    st.patience = 500;
    st.batch_size = 1;
    st.lr = 2e-3;
    st.seed = 9;
    TrainedMeta4 tm = train_meta4(ds, ds, side.model, side.vocab,
                                  tiny_config(), st);

    // Loss decreases over the first 10 steps (trend, not strict per-step).
    REQUIRE(tm.history.step_losses.size() >= 10);
    CHECK(tm.history.step_losses[9] < tm.history.step_losses[0]);
    double min_loss = *std::min_element(tm.history.step_losses.begin(),
                                        tm.history.step_losses.end());
    CHECK(min_loss < 1e-3);

    CHECK(tm.history.best_val_rmse ==
          *std::min_element(tm.history.val_rmse.begin(),
                            tm.history.val_rmse.end()));

    // The recorded best validation rmse is reproducible with eval::rmse on
    // the restored weights.
    NoGradGuard guard;
    nn::ForwardCtx ctx;
    Tensor h = tm.model.encode_audio(ds[0].mel, ctx);
    Tensor f = fuse(h, schema_tensor(one_hot_schema(SchemaLabel::kForce)));
    Tensor pred = tm.model.decode_teacher_forced(f, ds[0].poses, ctx);
    double recomputed = eval::rmse(pred.data(), ds[0].poses.values);
    CHECK(recomputed == doctest::Approx(tm.history.best_val_rmse)
                            .epsilon(1e-12));

    // The overfit model beats a constant mean-pose predictor on its sample.
    data::PoseSequence gen = tm.model.generate(f);
    double model_rmse = eval::rmse(gen.values, ds[0].poses.values);
    std::vector<double> mean_frame(data::kPoseWidth, 0.0);
    for (size_t t = 0; t < data::kPoseFrames; ++t) {
        for (size_t c = 0; c < data::kPoseWidth; ++c) {
            mean_frame[c] += ds[0].poses.values[t * data::kPoseWidth + c] /
                             static_cast<double>(data::kPoseFrames);
        }
    }
    std::vector<double> mean_pred(data::kPoseFrames * data::kPoseWidth);
    for (size_t t = 0; t < data::kPoseFrames; ++t) {
        std::copy(mean_frame.begin(), mean_frame.end(),
                  mean_pred.begin() + t * data::kPoseWidth);
    }
    double mean_rmse = eval::rmse(mean_pred, ds[0].poses.values);
    CHECK(model_rmse < mean_rmse);
}

TEST_CASE("training determinism: same seed, same first-10 losses") {
    SchemaSide side = schema_side();
    SeededRng rng(10);
    std::vector<SegmentSample> ds;
    for (int i = 0; i < 4; ++i) {
        ds.push_back(random_segment(
            rng, static_cast<SchemaLabel>(i), "sp" + std::to_string(i % 2)));
    }
    std::vector<SegmentSample> val = {ds[0]};

    Meta4TrainSettings st;
    st.max_epochs = 3;
    st.patience = 100;
    st.batch_size = 2;
    st.lr = 1e-3;
    st.seed = 21;

    TrainedMeta4 a = train_meta4(ds, val, side.model, side.vocab,
                                 tiny_config(0.1), st);
    TrainedMeta4 b = train_meta4(ds, val, side.model, side.vocab,
                                 tiny_config(0.1), st);
    REQUIRE(a.history.step_losses.size() == b.history.step_losses.size());
    size_t n = std::min<size_t>(10, a.history.step_losses.size());
    for (size_t i = 0; i < n; ++i) {
        CHECK(a.history.step_losses[i] == b.history.step_losses[i]);
    }
    CHECK(a.history.val_rmse == b.history.val_rmse);

    Meta4TrainSettings other = st;
    other.seed = 22;
    TrainedMeta4 c = train_meta4(ds, val, side.model, side.vocab,
                                 tiny_config(0.1), other);
    CHECK(a.history.step_losses != c.history.step_losses);
}

TEST_CASE("checkpoint: exact behavior round trip and width validation") {
    SchemaSide side = schema_side();
    SeededRng rng(11);
    std::vector<SegmentSample> ds = {
        random_segment(rng, SchemaLabel::kLink, "sp0")};
    Meta4TrainSettings st;
    st.max_epochs = 2;
    st.patience = 10;
    st.batch_size = 1;
    st.lr = 1e-3;
    st.seed = 33;
    TrainedMeta4 tm = train_meta4(ds, ds, side.model, side.vocab,
                                  tiny_config(), st);

    fs::path dir = fs::temp_directory_path() / "meta4_model_ckpt";
    fs::remove_all(dir);
    save_meta4(dir.string(), tm.model);
    Meta4Model loaded = load_meta4(dir.string());
    CHECK(loaded.config().audio_layers == 1);

    NoGradGuard guard;
    nn::ForwardCtx ctx;
    Tensor h = tm.model.encode_audio(ds[0].mel, ctx);
    Tensor f = fuse(h, schema_tensor(one_hot_schema(SchemaLabel::kLink)));
    data::PoseSequence g1 = tm.model.generate(f);

    Tensor h2 = loaded.encode_audio(ds[0].mel, ctx);
    Tensor f2 = fuse(h2, schema_tensor(one_hot_schema(SchemaLabel::kLink)));
    data::PoseSequence g2 = loaded.generate(f2);
    CHECK(g1.values == g2.values);

    // A manifest with the wrong fusion width must fail loudly.
    KvPairs manifest = load_kv_file((dir / "manifest.txt").string());
    for (auto& [k, v] : manifest) {
        if (k == "fusion_width") v = "80";
    }
    save_kv_file((dir / "manifest.txt").string(), manifest);
    CHECK_THROWS_WITH_AS(load_meta4(dir.string()),
                         doctest::Contains("fusion"), Error);

    SeededRng rng2(1);
    Meta4Model untrained(tiny_config(), rng2);
    CHECK_THROWS_AS(save_meta4(dir.string(), untrained), Error);
}
