#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <unordered_map>

#include "meta4/bertis/bertis.hpp"
#include "meta4/core/kv.hpp"
#include "meta4/core/serialize.hpp"

namespace meta4::bertis {

namespace {

std::array<std::vector<size_t>, data::kNumSchemaClasses> indices_by_class(
    const std::vector<data::TextSample>& samples) {
    std::array<std::vector<size_t>, data::kNumSchemaClasses> by_class;
    for (size_t i = 0; i < samples.size(); ++i) {
        by_class[static_cast<size_t>(samples[i].label)].push_back(i);
    }
    return by_class;
}

}  // namespace

SplitCorpus split_corpus(const std::vector<data::TextSample>& corpus,
                         uint64_t seed) {
    require(corpus.size() >= 10, "split_corpus: need at least 10 samples, got ",
            corpus.size());
    SeededRng rng(seed);
    auto by_class = indices_by_class(corpus);

    SplitCorpus out;
    for (auto& idx : by_class) {
        rng.shuffle(idx);
        size_t n = idx.size();
        if (n == 0) continue;
        // Classes too small to stratify stay in train.
        size_t n_test = n >= 3 ? std::max<size_t>(1, n / 10) : 0;
        size_t n_val = n_test;
        for (size_t k = 0; k < n; ++k) {
            const data::TextSample& s = corpus[idx[k]];
            if (k < n_test) {
                out.test.push_back(s);
            } else if (k < n_test + n_val) {
                out.val.push_back(s);
            } else {
                out.train.push_back(s);
            }
        }
    }
    require(!out.train.empty() && !out.val.empty() && !out.test.empty(),
            "split_corpus: a split came out empty");
    return out;
}

std::vector<data::TextSample> oversample(
    const std::vector<data::TextSample>& dataset, SeededRng& rng) {
    require(!dataset.empty(), "oversample: empty dataset");
    auto by_class = indices_by_class(dataset);
    size_t max_count = 0;
    for (const auto& idx : by_class) max_count = std::max(max_count, idx.size());

    std::vector<data::TextSample> out = dataset;
    for (const auto& idx : by_class) {
        if (idx.empty()) continue;
        for (size_t k = idx.size(); k < max_count; ++k) {
            out.push_back(dataset[idx[rng.uniform_index(idx.size())]]);
        }
    }
    return out;
}

void require_finite_loss(double loss, size_t epoch) {
    if (!std::isfinite(loss)) {
        throw DivergenceError(detail::concat("training diverged at epoch ",
                                             epoch, ": loss is not finite"));
    }
}

double evaluate_accuracy(const BertisModel& model, const Vocabulary& vocab,
                         const std::vector<data::TextSample>& samples) {
    require(!samples.empty(), "evaluate_accuracy: no samples");
    NoGradGuard guard;
    nn::ForwardCtx ctx;
    size_t correct = 0;
    for (const auto& s : samples) {
        Tensor logits = model.forward(tokenize(s.text, vocab), ctx);
        const auto& v = logits.data();
        size_t best = 0;
        for (size_t c = 1; c < data::kNumSchemaClasses; ++c) {
            if (v[c] > v[best]) best = c;
        }
        if (best == static_cast<size_t>(s.label)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

TrainedBertis train_bertis(const std::vector<data::TextSample>& train,
                           const std::vector<data::TextSample>& val,
                           const Vocabulary& vocab, const BertisConfig& cfg,
                           const TrainSettings& settings) {
    require(!train.empty() && !val.empty(),
            "train_bertis: empty train or val split");
    require(settings.batch_size >= 1 && settings.max_epochs >= 1,
            "train_bertis: bad settings");

    SeededRng rng(settings.seed);
    SeededRng init_rng = rng.derive(0xB0D1);
    TrainedBertis result{BertisModel(cfg, vocab.size(), init_rng), {}};
    BertisModel& model = result.model;
    TrainHistory& hist = result.history;

    // Encode once; training touches only ids after this.
    std::vector<TokenSequence> enc;
    std::vector<int> labels;
    enc.reserve(train.size());
    for (const auto& s : train) {
        enc.push_back(tokenize(s.text, vocab));
        labels.push_back(static_cast<int>(s.label));
    }

    nn::NamedTensors params = model.parameters();
    std::vector<Tensor> param_tensors;
    for (auto& [name, t] : params) param_tensors.push_back(t);
    AdamConfig adam_cfg;
    adam_cfg.lr = settings.lr;
    Adam adam(param_tensors, adam_cfg);

    std::unordered_map<std::string, std::vector<double>> best_values;
    size_t since_best = 0;

    std::vector<size_t> order(enc.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (size_t epoch = 1; epoch <= settings.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_sum = 0.0;
        size_t epoch_steps = 0;
        for (size_t start = 0; start < order.size();
             start += settings.batch_size) {
            size_t stop = std::min(order.size(), start + settings.batch_size);
            double inv = 1.0 / static_cast<double>(stop - start);
            adam.zero_grad();
            double batch_loss = 0.0;
            for (size_t k = start; k < stop; ++k) {
                nn::ForwardCtx ctx{true, &rng};
                Tensor logits = model.forward(enc[order[k]], ctx);
                Tensor loss =
                    cross_entropy_loss(logits, {labels[order[k]]});
                batch_loss += loss.item() * inv;
                backward(scale(loss, inv));
            }
            require_finite_loss(batch_loss, epoch);
            adam.step();
            hist.step_losses.push_back(batch_loss);
            epoch_sum += batch_loss;
            ++epoch_steps;
        }
        hist.epoch_losses.push_back(epoch_sum /
                                    static_cast<double>(epoch_steps));

        double acc = evaluate_accuracy(model, vocab, val);
        hist.val_accuracies.push_back(acc);
        if (acc > hist.best_val_accuracy || best_values.empty()) {
            hist.best_val_accuracy = acc;
            hist.best_epoch = epoch;
            since_best = 0;
            best_values.clear();
            for (const auto& [name, t] : params) best_values[name] = t.data();
        } else if (++since_best >= settings.patience) {
            break;
        }
    }

    for (auto& [name, t] : params) t.data() = best_values.at(name);
    model.mark_trained();
    return result;
}

void save_bertis(const std::string& dir, const BertisModel& model,
                 const Vocabulary& vocab) {
    require(model.trained(), "save_bertis: refusing to save an untrained model");
    std::filesystem::create_directories(dir);
    nn::NamedTensors params = model.parameters();
    save_named_tensors(dir + "/model.bin", params);
    vocab.save(dir + "/vocab.txt");

    const BertisConfig& cfg = model.config();
    KvPairs manifest;
    manifest.emplace_back("kind", "bertis");
    manifest.emplace_back("format_version", "1");
    manifest.emplace_back("n_layers", std::to_string(cfg.n_layers));
    manifest.emplace_back("d_model", std::to_string(cfg.block.d_model));
    manifest.emplace_back("n_heads", std::to_string(cfg.block.n_heads));
    manifest.emplace_back("d_ff", std::to_string(cfg.block.d_ff));
    manifest.emplace_back("dropout", std::to_string(cfg.block.dropout_rate));
    manifest.emplace_back("max_len", std::to_string(cfg.max_len));
    manifest.emplace_back("vocab_size", std::to_string(model.vocab_size()));
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

LoadedBertis load_bertis(const std::string& dir) {
    KvPairs manifest = load_kv_file(dir + "/manifest.txt");
    require(kv_get(manifest, "kind") == "bertis", dir,
            ": manifest kind is not 'bertis'");

    BertisConfig cfg;
    cfg.n_layers = std::stoul(kv_get(manifest, "n_layers"));
    cfg.block.d_model = std::stoul(kv_get(manifest, "d_model"));
    cfg.block.n_heads = std::stoul(kv_get(manifest, "n_heads"));
    cfg.block.d_ff = std::stoul(kv_get(manifest, "d_ff"));
    cfg.block.dropout_rate = std::stod(kv_get(manifest, "dropout"));
    cfg.max_len = std::stoul(kv_get(manifest, "max_len"));
    size_t vocab_size = std::stoul(kv_get(manifest, "vocab_size"));

    LoadedBertis out{BertisModel(), Vocabulary::load(dir + "/vocab.txt")};
    require(out.vocab.size() == vocab_size, dir, ": vocab.txt has ",
            out.vocab.size(), " entries, manifest says ", vocab_size);

    SeededRng rng(0);
    out.model = BertisModel(cfg, vocab_size, rng);
    nn::NamedTensors loaded = load_named_tensors(dir + "/model.bin");
    nn::load_into(loaded, out.model.parameters());
    out.model.mark_trained();
    return out;
}

}  // namespace meta4::bertis
