#include "meta4/data/datagen.hpp"

#include <algorithm>
#include <cmath>

namespace meta4::data {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Maps waveform RMS (roughly 0.07..0.34 for the synthesized envelopes) to a
// gesture amplitude multiplier.
constexpr double kRmsToAmplitude = 2.0;
constexpr double kElbowLateralBias = 0.12;

double smootherstep(double u) { return u * u * u * (u * (6.0 * u - 15.0) + 10.0); }

// Rise to 1 during the first half, then hold.
double rise_hold(double u) { return smootherstep(std::min(2.0 * u, 1.0)); }

struct SpeakerStyle {
    double wrist_dx;  // outward shift of both wrist rest positions
    double wrist_dy;
    double nose_dy;
};

SpeakerStyle speaker_style(size_t idx) {
    double k = static_cast<double>(idx + 1);
    return {0.06 * std::sin(1.7 * k), 0.05 * std::cos(2.3 * k),
            0.02 * std::sin(3.1 * k)};
}

}  // namespace

std::pair<PoseSequence, NormalizationParams> normalize_poses(
    const PoseSequence& raw) {
    raw.validate();
    double sx = raw.x(0, kRShoulder) - raw.x(0, kLShoulder);
    double sy = raw.y(0, kRShoulder) - raw.y(0, kLShoulder);
    double scale = std::sqrt(sx * sx + sy * sy);
    require(scale > 1e-9,
            "cannot normalize poses: shoulders coincide in the reference "
            "frame");

    NormalizationParams params;
    params.scale = scale;
    params.neck_path.resize(kPoseFrames * 2);
    PoseSequence out;
    for (size_t t = 0; t < kPoseFrames; ++t) {
        double nx = raw.x(t, kNeck), ny = raw.y(t, kNeck);
        params.neck_path[t * 2] = nx;
        params.neck_path[t * 2 + 1] = ny;
        for (size_t j = 0; j < kNumJoints; ++j) {
            out.set(t, j, (raw.x(t, j) - nx) / scale,
                    (raw.y(t, j) - ny) / scale);
        }
    }
    return {out, params};
}

PoseSequence denormalize_poses(const PoseSequence& normalized,
                               const NormalizationParams& params) {
    normalized.validate();
    params.validate();
    PoseSequence out;
    for (size_t t = 0; t < kPoseFrames; ++t) {
        double nx = params.neck_path[t * 2], ny = params.neck_path[t * 2 + 1];
        for (size_t j = 0; j < kNumJoints; ++j) {
            out.set(t, j, normalized.x(t, j) * params.scale + nx,
                    normalized.y(t, j) * params.scale + ny);
        }
    }
    return out;
}

PoseSequence rest_pose(size_t speaker_idx) {
    SpeakerStyle st = speaker_style(speaker_idx);
    PoseSequence p;
    for (size_t t = 0; t < kPoseFrames; ++t) {
        p.set(t, kNose, 0.0, 0.32 + st.nose_dy);
        p.set(t, kNeck, 0.0, 0.0);
        p.set(t, kRShoulder, -0.5, 0.0);
        p.set(t, kLShoulder, 0.5, 0.0);
        p.set(t, kRWrist, -0.58 - st.wrist_dx, -0.75 + st.wrist_dy);
        p.set(t, kLWrist, 0.58 + st.wrist_dx, -0.75 + st.wrist_dy);
        p.set(t, kMidHip, 0.0, -1.05);
        p.set(t, kRHip, -0.16, -1.05);
        p.set(t, kLHip, 0.16, -1.05);
        // Elbows are filled in from the wrists below.
    }
    for (size_t t = 0; t < kPoseFrames; ++t) {
        double rex = 0.5 * (p.x(t, kRShoulder) + p.x(t, kRWrist)) -
                     kElbowLateralBias;
        double rey = 0.5 * (p.y(t, kRShoulder) + p.y(t, kRWrist));
        p.set(t, kRElbow, rex, rey);
        double lex = 0.5 * (p.x(t, kLShoulder) + p.x(t, kLWrist)) +
                     kElbowLateralBias;
        double ley = 0.5 * (p.y(t, kLShoulder) + p.y(t, kLWrist));
        p.set(t, kLElbow, lex, ley);
    }
    return p;
}

std::pair<double, double> wrist_template(SchemaLabel label, double u,
                                         int side) {
    require(side == 0 || side == 1, "wrist_template: side must be 0 or 1");
    require(u >= 0.0 && u <= 1.0, "wrist_template: phase out of range");
    // sign points outward: the right wrist sits at negative x.
    double sign = side == 0 ? -1.0 : 1.0;
    double s = smootherstep(u);
    double h = rise_hold(u);
    switch (label) {
        case SchemaLabel::kCenterPeriphery:
            // Sweep outward to the periphery and back.
            return {sign * 0.55 * std::sin(kPi * u), 0.0};
        case SchemaLabel::kContact:
            // Hands move to the midline, touch, and hold.
            return {-sign * 0.50 * h, 0.20 * h};
        case SchemaLabel::kContainment:
            // Inward scooping arc.
            return {-sign * 0.45 * std::sin(kPi * u),
                    -0.25 * std::sin(2.0 * kPi * u)};
        case SchemaLabel::kCovering:
            // Press down over an area, drifting out and back.
            return {sign * 0.25 * std::sin(2.0 * kPi * u),
                    -0.35 * std::sin(kPi * u)};
        case SchemaLabel::kForce:
            // Single decisive push, down and slightly inward.
            return {-sign * 0.15 * s, -0.45 * s};
        case SchemaLabel::kLink:
            // Hands meet low and stay linked.
            return {-sign * 0.40 * s, -0.30 * s};
        case SchemaLabel::kObject:
            // Right hand traces a small circle around a held object.
            if (side == 0) {
                return {0.25 * std::sin(2.0 * kPi * u),
                        0.22 * (1.0 - std::cos(2.0 * kPi * u))};
            }
            return {0.0, 0.0};
        case SchemaLabel::kPartWhole:
            // Right hand sweeps across while marking three parts.
            if (side == 0) {
                return {0.5 * u - 0.25,
                        -0.11 * (1.0 - std::cos(6.0 * kPi * u))};
            }
            return {0.0, 0.0};
        case SchemaLabel::kScale:
            // Hands grow apart and upward.
            return {sign * 0.35 * s, 0.45 * s};
        case SchemaLabel::kSourcePathGoal:
            // Both hands travel left to right; x strictly increases.
            return {-0.45 * std::cos(kPi * u), 0.0};
        case SchemaLabel::kSplitting:
            // Quick symmetric split that stays apart.
            return {sign * 0.55 * h, 0.0};
        case SchemaLabel::kSubstance:
            // Kneading wobble.
            return {sign * 0.10 * std::cos(4.0 * kPi * u),
                    0.18 * std::sin(4.0 * kPi * u)};
        case SchemaLabel::kSupport:
            // Palms rise slightly outward and hold, carrying a weight.
            return {sign * 0.15 * h, 0.30 * h};
        case SchemaLabel::kVerticality:
            // Straight vertical raise.
            return {0.0, 0.75 * s};
    }
    raise("wrist_template: bad label");
}

PoseSequence oracle_poses(SchemaLabel label, size_t speaker_idx, double rms) {
    require(rms >= 0.0, "oracle_poses: negative rms");
    PoseSequence p = rest_pose(speaker_idx);
    double amp = kRmsToAmplitude * rms;
    for (size_t t = 0; t < kPoseFrames; ++t) {
        double u = static_cast<double>(t) / static_cast<double>(kPoseFrames - 1);
        auto [rdx, rdy] = wrist_template(label, u, 0);
        auto [ldx, ldy] = wrist_template(label, u, 1);
        p.set(t, kRWrist, p.x(t, kRWrist) + amp * rdx,
              p.y(t, kRWrist) + amp * rdy);
        p.set(t, kLWrist, p.x(t, kLWrist) + amp * ldx,
              p.y(t, kLWrist) + amp * ldy);
        p.set(t, kRElbow,
              0.5 * (p.x(t, kRShoulder) + p.x(t, kRWrist)) - kElbowLateralBias,
              0.5 * (p.y(t, kRShoulder) + p.y(t, kRWrist)));
        p.set(t, kLElbow,
              0.5 * (p.x(t, kLShoulder) + p.x(t, kLWrist)) + kElbowLateralBias,
              0.5 * (p.y(t, kLShoulder) + p.y(t, kLWrist)));
    }
    return p;
}

double waveform_rms(const audio::Waveform& w) {
    require(!w.samples.empty(), "waveform_rms: empty waveform");
    double acc = 0.0;
    for (double v : w.samples) acc += v * v;
    return std::sqrt(acc / static_cast<double>(w.samples.size()));
}

audio::Waveform synth_waveform(size_t speaker_idx, SeededRng& rng) {
    double a = rng.uniform(0.15, 0.7);
    double fm = rng.uniform(0.7, 2.4);
    double phase = rng.uniform(0.0, 2.0 * kPi);
    double f0 = 240.0 + 180.0 * static_cast<double>(speaker_idx);

    audio::Waveform w;
    w.sample_rate = audio::kSampleRate;
    w.samples.resize(kSegmentSamples);
    for (size_t n = 0; n < kSegmentSamples; ++n) {
        double ts = static_cast<double>(n) /
                    static_cast<double>(audio::kSampleRate);
        double envelope = a * (0.62 + 0.38 * std::sin(2.0 * kPi * fm * ts +
                                                      phase));
        w.samples[n] = envelope * std::sin(2.0 * kPi * f0 * ts);
    }
    return w;
}

namespace {

struct SentenceBank {
    std::vector<std::string> cores;
    std::vector<std::string> keywords;
};

const std::array<SentenceBank, kNumSchemaClasses>& sentence_banks() {
    static const std::array<SentenceBank, kNumSchemaClasses> banks = {{
        {{"the idea stays at the edge of the debate",
          "keep the main point in the center",
          "details drift to the margin",
          "the core matters more than the periphery"},
         {"edge", "margin", "center", "core"}},
        {{"their hands touch briefly",
          "stay in contact with the team",
          "she gave the glass a light tap",
          "the wires brush against the frame"},
         {"touch", "contact", "tap", "brush"}},
        {{"keep it inside the box",
          "the plan contains three steps",
          "the answer is held within the walls",
          "the notes stay in the container"},
         {"inside", "contain", "within", "box"}},
        {{"clouds cover the valley",
          "a blanket covers the chair",
          "wrap the gift in paper",
          "a veil covers the window"},
         {"cover", "blanket", "wrap", "veil"}},
        {{"push the door with force",
          "the current presses on the dam",
          "a strong force drives the wheel",
          "shove the crate forward"},
         {"push", "force", "press", "shove"}},
        {{"the bridge links both banks",
          "these clues connect the cases",
          "a chain links the posts",
          "a steady bond connects them"},
         {"link", "connect", "chain", "bond"}},
        {{"a small object rests on the desk",
          "hand me that thing",
          "each item sits on the shelf",
          "the stone is a heavy object"},
         {"object", "thing", "item", "stone"}},
        {{"each part belongs to the whole",
          "a piece of the puzzle is missing",
          "the sum of parts forms the whole",
          "a fraction of the story is told"},
         {"part", "whole", "piece", "fraction"}},
        {{"the project grows in scale",
          "prices move to a larger scale",
          "the map shrinks the world to scale",
          "expand the model to full scale"},
         {"scale", "grow", "shrink", "larger"}},
        {{"the journey follows a long path",
          "take the route from source to goal",
          "walk the path to the gate",
          "the road leads to the goal"},
         {"path", "journey", "route", "goal"}},
        {{"split the log down the middle",
          "divide the group into halves",
          "cut the rope apart",
          "the river splits the town"},
         {"split", "divide", "cut", "apart"}},
        {{"the jar holds a thick substance",
          "clay is a soft material",
          "the liquid turns to sticky paste",
          "knead the clay with both hands"},
         {"substance", "material", "clay", "liquid"}},
        {{"the beam supports the roof",
          "pillars hold the bridge",
          "she can hold the tray steadily",
          "a prop supports the shelf"},
         {"support", "hold", "carry", "prop"}},
        {{"the tower rises to a great height",
          "the cliff stands tall and vertical",
          "smoke rises straight up",
          "the rocket climbs to a great height"},
         {"rise", "tall", "vertical", "height"}},
    }};
    return banks;
}

const std::vector<std::string>& sentence_prefixes() {
    static const std::vector<std::string> p = {
        "", "I think ", "You know ", "Honestly ", "In the story ",
        "They said "};
    return p;
}

const std::vector<std::string>& sentence_suffixes() {
    static const std::vector<std::string> s = {"", " today", " again",
                                               " somehow", " as expected"};
    return s;
}

}  // namespace

std::string synth_sentence(SchemaLabel label, SeededRng& rng) {
    const auto& banks = sentence_banks();
    const auto& bank = banks[static_cast<size_t>(label)];
    std::string text = sentence_prefixes()[rng.uniform_index(
        sentence_prefixes().size())];
    text += bank.cores[rng.uniform_index(bank.cores.size())];
    text += sentence_suffixes()[rng.uniform_index(sentence_suffixes().size())];
    // A light sprinkle of off-class keywords keeps the corpus from being
    // perfectly separable.
    if (rng.uniform() < 0.08) {
        size_t other =
            (static_cast<size_t>(label) + 1 + rng.uniform_index(13)) %
            kNumSchemaClasses;
        const auto& kw = banks[other].keywords;
        text += " " + kw[rng.uniform_index(kw.size())];
    }
    text += ".";
    return text;
}

std::string speaker_name(size_t speaker_idx) {
    return "speaker_" + std::to_string(speaker_idx);
}

size_t speaker_index(const std::string& speaker_id) {
    const std::string prefix = "speaker_";
    require(speaker_id.rfind(prefix, 0) == 0 &&
                speaker_id.size() > prefix.size(),
            "malformed speaker id '", speaker_id, "'");
    size_t idx = 0;
    for (size_t i = prefix.size(); i < speaker_id.size(); ++i) {
        char c = speaker_id[i];
        require(c >= '0' && c <= '9', "malformed speaker id '", speaker_id,
                "'");
        idx = idx * 10 + static_cast<size_t>(c - '0');
    }
    return idx;
}

std::vector<GestureSample> synth_gesture_dataset(size_t n_samples,
                                                 size_t speakers,
                                                 uint64_t seed) {
    require(n_samples >= 1, "synth_gesture_dataset: need at least 1 sample");
    require(speakers >= 1, "synth_gesture_dataset: need at least 1 speaker");
    SeededRng root(seed);
    std::vector<GestureSample> out(n_samples);
    for (size_t i = 0; i < n_samples; ++i) {
        SeededRng rng = root.derive(i);
        GestureSample& s = out[i];
        size_t speaker_idx = i % speakers;
        s.speaker_id = speaker_name(speaker_idx);
        s.label = static_cast<SchemaLabel>(rng.uniform_index(kNumSchemaClasses));
        s.audio = synth_waveform(speaker_idx, rng);
        s.transcript = synth_sentence(s.label, rng);
        s.poses = oracle_poses(s.label, speaker_idx, waveform_rms(s.audio));
    }
    return out;
}

std::vector<TextSample> synth_schema_corpus(size_t n_samples, uint64_t seed) {
    require(n_samples >= kNumSchemaClasses,
            "synth_schema_corpus: need at least one sample per class");
    // Fixed imbalanced class profile, scaled to n_samples.
    const std::array<double, kNumSchemaClasses> weights = {
        300, 250, 200, 150, 100, 80, 70, 60, 50, 40, 30, 25, 25, 20};
    double wsum = 0.0;
    for (double w : weights) wsum += w;

    std::vector<size_t> counts(kNumSchemaClasses);
    size_t assigned = 0;
    for (size_t c = 0; c < kNumSchemaClasses; ++c) {
        counts[c] = std::max<size_t>(
            1, static_cast<size_t>(std::llround(
                   weights[c] / wsum * static_cast<double>(n_samples))));
        assigned += counts[c];
    }
    // Settle rounding drift on the largest class.
    while (assigned > n_samples && counts[0] > 1) {
        --counts[0];
        --assigned;
    }
    while (assigned < n_samples) {
        ++counts[0];
        ++assigned;
    }

    SeededRng rng(seed);
    std::vector<TextSample> out;
    out.reserve(n_samples);
    for (size_t c = 0; c < kNumSchemaClasses; ++c) {
        for (size_t i = 0; i < counts[c]; ++i) {
            TextSample s;
            s.label = static_cast<SchemaLabel>(c);
            s.text = synth_sentence(s.label, rng);
            out.push_back(std::move(s));
        }
    }
    rng.shuffle(out);
    return out;
}

}  // namespace meta4::data
