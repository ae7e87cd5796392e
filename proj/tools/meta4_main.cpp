#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "meta4/bertis/bertis.hpp"
#include "meta4/core/kv.hpp"
#include "meta4/data/datagen.hpp"
#include "meta4/data/io.hpp"
#include "meta4/eval/protocol.hpp"
#include "meta4/model/meta4.hpp"
#include "meta4/viz/svg.hpp"

namespace fs = std::filesystem;
using namespace meta4;

namespace {

// META4_OUT_ROOT relocates relative output paths; nothing else.
std::string out_path(const std::string& out) {
    const char* root = std::getenv("META4_OUT_ROOT");
    if (root && *root && fs::path(out).is_relative()) {
        return (fs::path(root) / out).string();
    }
    return out;
}

size_t to_size(const std::string& key, const std::string& text) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(text.c_str(), &end, 10);
    require(end && *end == '\0' && !text.empty(), "config key ", key,
            ": \"", text, "\" is not a non-negative integer");
    return static_cast<size_t>(v);
}

double to_double(const std::string& key, const std::string& text) {
    char* end = nullptr;
    double v = std::strtod(text.c_str(), &end);
    require(end && *end == '\0' && !text.empty(), "config key ", key, ": \"",
            text, "\" is not a number");
    return v;
}

size_t cfg_size(const KvPairs& kv, const std::string& key, size_t dflt) {
    return kv_has(kv, key) ? to_size(key, kv_get(kv, key)) : dflt;
}

double cfg_double(const KvPairs& kv, const std::string& key, double dflt) {
    return kv_has(kv, key) ? to_double(key, kv_get(kv, key)) : dflt;
}

bool cfg_flag(const KvPairs& kv, const std::string& key, bool dflt) {
    if (!kv_has(kv, key)) return dflt;
    const std::string& v = kv_get(kv, key);
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    raise("config key ", key, ": \"", v, "\" is not a boolean (0/1)");
}

KvPairs load_config(const std::string& path,
                    const std::vector<std::string>& allowed) {
    if (path.empty()) return {};
    KvPairs kv = load_kv_file(path);
    for (const auto& [k, v] : kv) {
        bool ok = false;
        for (const auto& a : allowed) ok = ok || a == k;
        if (!ok) {
            std::string names;
            for (const auto& a : allowed) {
                if (!names.empty()) names += ", ";
                names += a;
            }
            raise("config key \"", k, "\" is not recognized (expected one of: ",
                  names, ")");
        }
    }
    return kv;
}

// Every run directory records the config file bytes (when given) and the
// effective settings actually used.
void echo_config(const fs::path& dir, const std::string& config_path,
                 const KvPairs& effective) {
    fs::create_directories(dir);
    if (!config_path.empty()) {
        std::ifstream in(config_path, std::ios::binary);
        require(in.good(), "cannot read config file ", config_path);
        std::ostringstream ss;
        ss << in.rdbuf();
        std::ofstream out(dir / "config.txt", std::ios::binary);
        out << ss.str();
    }
    save_kv_file((dir / "effective_config.txt").string(), effective);
}

std::vector<std::string> split_commas(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(text);
    while (std::getline(in, cur, ',')) {
        while (!cur.empty() && cur.front() == ' ') cur.erase(cur.begin());
        while (!cur.empty() && cur.back() == ' ') cur.pop_back();
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// ---- subcommand bodies -----------------------------------------------------

struct SynthDataArgs {
    size_t n = 0;
    size_t speakers = 4;
    uint64_t seed = 1;
    std::string out;
};

void run_synth_data(const SynthDataArgs& a) {
    auto dataset = data::synth_gesture_dataset(a.n, a.speakers, a.seed);
    std::string dir = out_path(a.out);
    data::save_gesture_dataset(dir, dataset);
    echo_config(dir, "",
                {{"command", "synth-data"},
                 {"n", std::to_string(a.n)},
                 {"speakers", std::to_string(a.speakers)},
                 {"seed", std::to_string(a.seed)}});
    std::cout << "wrote " << dataset.size() << " samples to " << dir << "\n";
}

struct SynthCorpusArgs {
    size_t n = 0;
    uint64_t seed = 1;
    std::string out;
};

void run_synth_corpus(const SynthCorpusArgs& a) {
    auto corpus = data::synth_schema_corpus(a.n, a.seed);
    std::string path = out_path(a.out);
    if (fs::path(path).has_parent_path()) {
        fs::create_directories(fs::path(path).parent_path());
    }
    data::save_schema_corpus(path, corpus);
    std::cout << "wrote " << corpus.size() << " labeled sentences to " << path
              << "\n";
}

struct TrainBertisArgs {
    std::string corpus, config, out;
    uint64_t seed = 1;
};

void run_train_bertis(const TrainBertisArgs& a) {
    KvPairs kv = load_config(
        a.config, {"layers", "d_model", "heads", "d_ff", "dropout",
                   "vocab_size", "oversample", "max_epochs", "patience",
                   "batch_size", "lr"});
    auto corpus = data::load_schema_corpus(a.corpus);
    bertis::SplitCorpus split = bertis::split_corpus(corpus, a.seed);

    bertis::BertisConfig cfg;
    cfg.n_layers = cfg_size(kv, "layers", cfg.n_layers);
    cfg.block.d_model = cfg_size(kv, "d_model", cfg.block.d_model);
    cfg.block.n_heads = cfg_size(kv, "heads", cfg.block.n_heads);
    cfg.block.d_ff = cfg_size(kv, "d_ff", cfg.block.d_ff);
    cfg.block.dropout_rate = cfg_double(kv, "dropout", cfg.block.dropout_rate);
    size_t vocab_size = cfg_size(kv, "vocab_size", 4000);
    bool do_oversample = cfg_flag(kv, "oversample", true);

    bertis::TrainSettings st;
    st.max_epochs = cfg_size(kv, "max_epochs", st.max_epochs);
    st.patience = cfg_size(kv, "patience", st.patience);
    st.batch_size = cfg_size(kv, "batch_size", st.batch_size);
    st.lr = cfg_double(kv, "lr", st.lr);
    st.seed = a.seed;

    std::vector<std::string> texts;
    texts.reserve(split.train.size());
    for (const auto& s : split.train) texts.push_back(s.text);
    bertis::Vocabulary vocab = bertis::build_vocab(texts, vocab_size);

    std::vector<data::TextSample> train = split.train;
    if (do_oversample) {
        SeededRng root(a.seed);
        SeededRng os_rng = root.derive(0x05A);
        train = bertis::oversample(train, os_rng);
    }

    bertis::TrainedBertis tb =
        bertis::train_bertis(train, split.val, vocab, cfg, st);
    double test_acc =
        bertis::evaluate_accuracy(tb.model, vocab, split.test);

    std::string dir = out_path(a.out);
    fs::create_directories(dir);
    bertis::save_bertis(dir, tb.model, vocab);
    echo_config(dir, a.config,
                {{"command", "train-bertis"},
                 {"seed", std::to_string(a.seed)},
                 {"layers", std::to_string(cfg.n_layers)},
                 {"d_model", std::to_string(cfg.block.d_model)},
                 {"heads", std::to_string(cfg.block.n_heads)},
                 {"d_ff", std::to_string(cfg.block.d_ff)},
                 {"dropout", fmt(cfg.block.dropout_rate)},
                 {"vocab_size", std::to_string(vocab_size)},
                 {"oversample", do_oversample ? "1" : "0"},
                 {"max_epochs", std::to_string(st.max_epochs)},
                 {"patience", std::to_string(st.patience)},
                 {"batch_size", std::to_string(st.batch_size)},
                 {"lr", fmt(st.lr)}});
    save_kv_file(
        (fs::path(dir) / "metrics.txt").string(),
        {{"best_epoch", std::to_string(tb.history.best_epoch)},
         {"best_val_accuracy", fmt(tb.history.best_val_accuracy)},
         {"test_accuracy", fmt(test_acc)},
         {"train_size", std::to_string(train.size())},
         {"val_size", std::to_string(split.val.size())},
         {"test_size", std::to_string(split.test.size())}});
    std::cout << "val accuracy " << fmt(tb.history.best_val_accuracy)
              << " (epoch " << tb.history.best_epoch << "), test accuracy "
              << fmt(test_acc) << "\nmodel saved to " << dir << "\n";
}

struct ClassifyArgs {
    std::string model, text;
};

void run_classify(const ClassifyArgs& a) {
    bertis::LoadedBertis lb = bertis::load_bertis(a.model);
    bertis::SchemaPrediction pred =
        bertis::classify_schema(a.text, lb.model, lb.vocab);
    std::cout << "label: " << data::schema_label_name(pred.label) << "\n"
              << "distribution:\n";
    for (size_t i = 0; i < data::kNumSchemaClasses; ++i) {
        std::cout << "  " << data::schema_label_names()[i] << " "
                  << fmt(pred.distribution[i]) << "\n";
    }
}

struct TrainMeta4Args {
    std::string data, bertis, config, out;
    uint64_t seed = 1;
};

void run_train_meta4(const TrainMeta4Args& a) {
    KvPairs kv = load_config(
        a.config,
        {"audio_layers", "audio_heads", "audio_d_ff", "decoder_heads",
         "decoder_d_ff", "dropout", "val_fraction", "max_epochs", "patience",
         "batch_size", "lr", "max_steps"});
    auto gestures = data::load_gesture_dataset(a.data);
    auto segments = model::segments_from_gestures(gestures);
    bertis::LoadedBertis lb = bertis::load_bertis(a.bertis);

    model::Meta4Config cfg;
    cfg.audio_layers = cfg_size(kv, "audio_layers", cfg.audio_layers);
    cfg.audio_heads = cfg_size(kv, "audio_heads", cfg.audio_heads);
    cfg.audio_d_ff = cfg_size(kv, "audio_d_ff", cfg.audio_d_ff);
    cfg.decoder_heads = cfg_size(kv, "decoder_heads", cfg.decoder_heads);
    cfg.decoder_d_ff = cfg_size(kv, "decoder_d_ff", cfg.decoder_d_ff);
    cfg.dropout_rate = cfg_double(kv, "dropout", cfg.dropout_rate);

    model::Meta4TrainSettings st;
    st.max_epochs = cfg_size(kv, "max_epochs", st.max_epochs);
    st.patience = cfg_size(kv, "patience", st.patience);
    st.batch_size = cfg_size(kv, "batch_size", st.batch_size);
    st.lr = cfg_double(kv, "lr", st.lr);
    st.max_steps = cfg_size(kv, "max_steps", st.max_steps);
    st.seed = a.seed;

    double val_fraction = cfg_double(kv, "val_fraction", 0.1);
    require(val_fraction > 0.0 && val_fraction < 1.0,
            "val_fraction must lie in (0, 1), got ", val_fraction);
    require(segments.size() >= 2, "need at least 2 segments, got ",
            segments.size());
    SeededRng root(a.seed);
    SeededRng split_rng = root.derive(0x5B117);
    std::vector<size_t> order(segments.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    split_rng.shuffle(order);
    size_t n_val = static_cast<size_t>(
        std::llround(val_fraction * static_cast<double>(segments.size())));
    n_val = std::min(std::max<size_t>(n_val, 1), segments.size() - 1);
    std::vector<model::SegmentSample> train, val;
    for (size_t i = 0; i < order.size(); ++i) {
        (i < n_val ? val : train).push_back(segments[order[i]]);
    }

    model::TrainedMeta4 tm =
        model::train_meta4(train, val, lb.model, lb.vocab, cfg, st);

    std::string dir = out_path(a.out);
    fs::create_directories(dir);
    model::save_meta4(dir, tm.model);
    echo_config(dir, a.config,
                {{"command", "train-meta4"},
                 {"seed", std::to_string(a.seed)},
                 {"audio_layers", std::to_string(cfg.audio_layers)},
                 {"audio_heads", std::to_string(cfg.audio_heads)},
                 {"audio_d_ff", std::to_string(cfg.audio_d_ff)},
                 {"decoder_heads", std::to_string(cfg.decoder_heads)},
                 {"decoder_d_ff", std::to_string(cfg.decoder_d_ff)},
                 {"dropout", fmt(cfg.dropout_rate)},
                 {"val_fraction", fmt(val_fraction)},
                 {"max_epochs", std::to_string(st.max_epochs)},
                 {"patience", std::to_string(st.patience)},
                 {"batch_size", std::to_string(st.batch_size)},
                 {"lr", fmt(st.lr)},
                 {"max_steps", std::to_string(st.max_steps)}});
    save_kv_file((fs::path(dir) / "metrics.txt").string(),
                 {{"best_epoch", std::to_string(tm.history.best_epoch)},
                  {"best_val_rmse", fmt(tm.history.best_val_rmse)},
                  {"train_size", std::to_string(train.size())},
                  {"val_size", std::to_string(val.size())}});
    std::cout << "best val rmse " << fmt(tm.history.best_val_rmse)
              << " (epoch " << tm.history.best_epoch << ")\nmodel saved to "
              << dir << "\n";
}

struct GenerateArgs {
    std::string model, bertis, audio, text, schema, out;
    bool stills = false;
};

void run_generate(const GenerateArgs& a) {
    model::Meta4Model m = model::load_meta4(a.model);
    audio::Waveform w = audio::load_wav(a.audio);
    audio::MelSpectrogram mel = audio::compute_mel(w);

    std::vector<double> schema_vec;
    std::string source;
    if (!a.schema.empty()) {
        schema_vec = model::one_hot_schema(data::parse_schema_label(a.schema));
        source = "label " + a.schema;
    } else {
        require(!a.text.empty(),
                "generate needs --schema or a non-empty --text");
        bertis::LoadedBertis lb = bertis::load_bertis(a.bertis);
        bertis::SchemaPrediction pred =
            bertis::classify_schema(a.text, lb.model, lb.vocab);
        schema_vec = pred.distribution;
        source = "classified " + data::schema_label_name(pred.label);
    }

    NoGradGuard guard;
    nn::ForwardCtx ctx;
    Tensor h_fused = model::fuse(m.encode_audio(mel, ctx),
                                 model::schema_tensor(schema_vec));
    data::PoseSequence poses = m.generate(h_fused);

    fs::path dir = out_path(a.out);
    fs::create_directories(dir);
    data::save_pose_csv((dir / "poses.csv").string(), poses);
    viz::render_svg(poses, (dir / "gesture.svg").string(), a.stills);
    echo_config(dir, "",
                {{"command", "generate"},
                 {"model", a.model},
                 {"audio", a.audio},
                 {"schema_source", source}});
    std::cout << "schema: " << source << "\nwrote " << (dir / "poses.csv").string()
              << " and " << (dir / "gesture.svg").string() << "\n";
}

struct EvaluateArgs {
    std::string model, bertis, data, train_speakers, held_out, out;
    std::string condition, split;
};

void run_evaluate(const EvaluateArgs& a) {
    model::Meta4Model m = model::load_meta4(a.model);
    bertis::LoadedBertis lb = bertis::load_bertis(a.bertis);
    auto segments =
        model::segments_from_gestures(data::load_gesture_dataset(a.data));

    std::vector<std::string> seen_ids = split_commas(a.train_speakers);
    std::vector<std::string> unseen_ids = split_commas(a.held_out);
    if (seen_ids.empty() && unseen_ids.empty()) {
        // Default: hold out the lexicographically last speaker.
        std::set<std::string> ids;
        for (const auto& s : segments) ids.insert(s.speaker_id);
        require(ids.size() >= 2,
                "default split needs at least 2 speakers, got ", ids.size());
        for (const auto& id : ids) seen_ids.push_back(id);
        unseen_ids.push_back(seen_ids.back());
        seen_ids.pop_back();
    }
    require(!seen_ids.empty() && !unseen_ids.empty(),
            "--train-speakers and --held-out must be given together");

    std::vector<eval::MetricsReport> rows;
    if (a.condition.empty() && a.split.empty()) {
        rows = eval::seen_unseen_protocol(m, lb.model, lb.vocab, segments,
                                          seen_ids, unseen_ids);
    } else {
        // Run only what was asked for, so e.g. --condition full works on
        // datasets the mismatched condition would reject.
        eval::SpeakerSplit parts =
            eval::split_by_speaker(segments, seen_ids, unseen_ids);
        std::vector<std::string> splits =
            a.split.empty() ? std::vector<std::string>{"seen", "unseen"}
                            : std::vector<std::string>{a.split};
        std::vector<eval::Condition> conditions;
        if (a.condition.empty()) {
            conditions = {eval::Condition::kFull, eval::Condition::kIsAblated,
                          eval::Condition::kMismatched};
        } else {
            std::string tag = a.condition;
            for (char& c : tag) c = (c == '-') ? '_' : c;
            conditions = {eval::parse_condition(tag)};
        }
        for (const auto& split_name : splits) {
            require(split_name == "seen" || split_name == "unseen",
                    "--split must be seen or unseen, got \"", split_name,
                    "\"");
            const auto& samples =
                split_name == "seen" ? parts.seen : parts.unseen;
            for (eval::Condition c : conditions) {
                eval::MetricsReport r = eval::run_condition(
                    m, lb.model, lb.vocab, samples, c);
                r.split = split_name;
                rows.push_back(r);
            }
        }
    }

    std::string text = eval::format_report_text(rows);
    std::string csv = eval::format_report_csv(rows);
    fs::path dir = out_path(a.out);
    fs::create_directories(dir);
    {
        std::ofstream f(dir / "report.txt", std::ios::binary);
        f << text;
    }
    {
        std::ofstream f(dir / "report.csv", std::ios::binary);
        f << csv;
    }
    echo_config(dir, "",
                {{"command", "evaluate"},
                 {"model", a.model},
                 {"data", a.data},
                 {"condition", a.condition.empty() ? "all" : a.condition},
                 {"split", a.split.empty() ? "both" : a.split}});
    std::cout << text << "report written to " << (dir / "report.csv").string()
              << "\n";
}

struct RenderArgs {
    std::string poses, out;
    bool stills = false;
};

void run_render(const RenderArgs& a) {
    data::PoseSequence poses = data::load_pose_csv(a.poses);
    std::string path = out_path(a.out);
    viz::render_svg(poses, path, a.stills);
    std::cout << "wrote " << path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"metaphoric gesture pipeline"};
    app.require_subcommand(1);

    SynthDataArgs sd;
    auto* c_sd = app.add_subcommand("synth-data",
                                    "synthesize an oracle gesture dataset");
    c_sd->add_option("--n", sd.n, "number of samples")
        ->required()
        ->check(CLI::Range(1, 1000000000));
    c_sd->add_option("--speakers", sd.speakers, "number of speakers")
        ->check(CLI::Range(1, 1000000000));
    c_sd->add_option("--seed", sd.seed, "rng seed");
    c_sd->add_option("--out", sd.out, "output directory")->required();

    SynthCorpusArgs sc;
    auto* c_sc = app.add_subcommand("synth-corpus",
                                    "synthesize a labeled sentence corpus");
    c_sc->add_option("--n", sc.n, "number of sentences")
        ->required()
        ->check(CLI::Range(1, 1000000000));
    c_sc->add_option("--seed", sc.seed, "rng seed");
    c_sc->add_option("--out", sc.out, "output csv path")->required();

    TrainBertisArgs tb;
    auto* c_tb =
        app.add_subcommand("train-bertis", "train the schema classifier");
    c_tb->add_option("--corpus", tb.corpus, "labeled corpus csv")->required();
    c_tb->add_option("--config", tb.config, "key = value config file");
    c_tb->add_option("--seed", tb.seed, "rng seed");
    c_tb->add_option("--out", tb.out, "run directory")->required();

    ClassifyArgs cl;
    auto* c_cl = app.add_subcommand("classify", "classify one utterance");
    c_cl->add_option("--model", cl.model, "trained classifier directory")
        ->required();
    c_cl->add_option("--text", cl.text, "utterance text")->required();

    TrainMeta4Args tm;
    auto* c_tm =
        app.add_subcommand("train-meta4", "train the gesture generator");
    c_tm->add_option("--data", tm.data, "gesture dataset directory")
        ->required();
    c_tm->add_option("--bertis", tm.bertis, "trained classifier directory")
        ->required();
    c_tm->add_option("--config", tm.config, "key = value config file");
    c_tm->add_option("--seed", tm.seed, "rng seed");
    c_tm->add_option("--out", tm.out, "run directory")->required();

    GenerateArgs ge;
    auto* c_ge =
        app.add_subcommand("generate", "generate poses for one segment");
    c_ge->add_option("--model", ge.model, "trained generator directory")
        ->required();
    c_ge->add_option("--bertis", ge.bertis, "trained classifier directory");
    c_ge->add_option("--audio", ge.audio, "input wav file")->required();
    c_ge->add_option("--text", ge.text, "utterance text");
    c_ge->add_option("--schema", ge.schema, "override schema label");
    c_ge->add_flag("--stills", ge.stills, "also write per-frame stills");
    c_ge->add_option("--out", ge.out, "output directory")->required();

    EvaluateArgs ev;
    auto* c_ev =
        app.add_subcommand("evaluate", "run the evaluation protocol");
    c_ev->add_option("--model", ev.model, "trained generator directory")
        ->required();
    c_ev->add_option("--bertis", ev.bertis, "trained classifier directory")
        ->required();
    c_ev->add_option("--data", ev.data, "gesture dataset directory")
        ->required();
    c_ev->add_option("--train-speakers", ev.train_speakers,
                     "comma-separated seen speaker ids");
    c_ev->add_option("--held-out", ev.held_out,
                     "comma-separated unseen speaker ids");
    c_ev->add_option("--condition", ev.condition,
                     "full | is-ablated | mismatched (default: all)");
    c_ev->add_option("--split", ev.split, "seen | unseen (default: both)");
    c_ev->add_option("--out", ev.out, "output directory")->required();

    RenderArgs re;
    auto* c_re = app.add_subcommand("render-svg",
                                    "render a pose csv as animated svg");
    c_re->add_option("--poses", re.poses, "poses.csv path")->required();
    c_re->add_flag("--stills", re.stills, "also write per-frame stills");
    c_re->add_option("--out", re.out, "output svg path")->required();

    try {
        app.parse(argc, argv);
        if (c_sd->parsed()) run_synth_data(sd);
        if (c_sc->parsed()) run_synth_corpus(sc);
        if (c_tb->parsed()) run_train_bertis(tb);
        if (c_cl->parsed()) run_classify(cl);
        if (c_tm->parsed()) run_train_meta4(tm);
        if (c_ge->parsed()) run_generate(ge);
        if (c_ev->parsed()) run_evaluate(ev);
        if (c_re->parsed()) run_render(re);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
