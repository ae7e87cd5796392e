#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "meta4/eval/metrics.hpp"
#include "meta4/model/meta4.hpp"

namespace meta4::model {

std::vector<double> schema_vector_for_training(
    const SegmentSample& sample, const bertis::BertisModel& schema_model,
    const bertis::Vocabulary& schema_vocab) {
    if (sample.schema.has_value()) return one_hot_schema(*sample.schema);
    return bertis::classify_schema(sample.transcript, schema_model,
                                   schema_vocab)
        .distribution;
}

namespace {

// Mean per-sample teacher-forced rmse; the same eval::rmse the report uses.
double validation_rmse(const Meta4Model& model,
                       const std::vector<SegmentSample>& val,
                       const std::vector<Tensor>& fused) {
    NoGradGuard guard;
    nn::ForwardCtx ctx;
    double acc = 0.0;
    for (size_t i = 0; i < val.size(); ++i) {
        Tensor pred = model.decode_teacher_forced(fused[i], val[i].poses,
                                                  ctx);
        acc += eval::rmse(pred.data(), val[i].poses.values);
    }
    return acc / static_cast<double>(val.size());
}

}  // namespace

TrainedMeta4 train_meta4(const std::vector<SegmentSample>& train,
                         const std::vector<SegmentSample>& val,
                         const bertis::BertisModel& schema_model,
                         const bertis::Vocabulary& schema_vocab,
                         const Meta4Config& cfg,
                         const Meta4TrainSettings& settings) {
    require(!train.empty() && !val.empty(),
            "train_meta4: empty train or val split");
    require(settings.batch_size >= 1 && settings.max_epochs >= 1,
            "train_meta4: bad settings");

    SeededRng rng(settings.seed);
    SeededRng init_rng = rng.derive(0x4E74);
    TrainedMeta4 result{Meta4Model(cfg, init_rng), {}};
    Meta4Model& model = result.model;
    Meta4History& hist = result.history;

    // The schema side is frozen: precompute every fused input's schema half
    // and every target tensor once.
    std::vector<Tensor> train_schema, train_gt;
    train_schema.reserve(train.size());
    train_gt.reserve(train.size());
    for (const auto& s : train) {
        train_schema.push_back(schema_tensor(
            schema_vector_for_training(s, schema_model, schema_vocab)));
        train_gt.push_back(tensor_from_pose(s.poses));
    }

    nn::NamedTensors params = model.parameters();
    std::vector<Tensor> param_tensors;
    for (auto& [name, t] : params) param_tensors.push_back(t);
    AdamConfig adam_cfg;
    adam_cfg.lr = settings.lr;
    Adam adam(param_tensors, adam_cfg);

    std::unordered_map<std::string, std::vector<double>> best_values;
    size_t since_best = 0;
    size_t steps_done = 0;
    bool stop = false;

    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (size_t epoch = 1; epoch <= settings.max_epochs && !stop; ++epoch) {
        rng.shuffle(order);
        double epoch_sum = 0.0;
        size_t epoch_steps = 0;
        for (size_t start = 0; start < order.size() && !stop;
             start += settings.batch_size) {
            size_t end = std::min(order.size(), start + settings.batch_size);
            double inv = 1.0 / static_cast<double>(end - start);
            adam.zero_grad();
            double batch_loss = 0.0;
            for (size_t k = start; k < end; ++k) {
                size_t idx = order[k];
                nn::ForwardCtx ctx{true, &rng};
                Tensor h_audio = model.encode_audio(train[idx].mel, ctx);
                Tensor h_fused = fuse(h_audio, train_schema[idx]);
                Tensor pred = model.decode_teacher_forced(
                    h_fused, train[idx].poses, ctx);
                Tensor loss = mse_loss(pred, train_gt[idx]);
                batch_loss += loss.item() * inv;
                backward(scale(loss, inv));
            }
            bertis::require_finite_loss(batch_loss, epoch);
            adam.step();
            hist.step_losses.push_back(batch_loss);
            epoch_sum += batch_loss;
            ++epoch_steps;
            if (settings.max_steps > 0 &&
                ++steps_done >= settings.max_steps) {
                stop = true;
            }
        }
        hist.epoch_losses.push_back(epoch_sum /
                                    static_cast<double>(epoch_steps));

        // Validation RMSE under the training-time schema rule.
        std::vector<Tensor> val_fused;
        val_fused.reserve(val.size());
        {
            NoGradGuard guard;
            nn::ForwardCtx ctx;
            for (const auto& s : val) {
                Tensor h_audio = model.encode_audio(s.mel, ctx);
                val_fused.push_back(fuse(
                    h_audio, schema_tensor(schema_vector_for_training(
                                 s, schema_model, schema_vocab))));
            }
        }
        double vrmse = validation_rmse(model, val, val_fused);
        hist.val_rmse.push_back(vrmse);
        if (best_values.empty() || vrmse < hist.best_val_rmse) {
            hist.best_val_rmse = vrmse;
            hist.best_epoch = epoch;
            since_best = 0;
            best_values.clear();
            for (const auto& [name, t] : params) best_values[name] = t.data();
        } else if (++since_best >= settings.patience) {
            stop = true;
        }
    }

    for (auto& [name, t] : params) t.data() = best_values.at(name);
    model.mark_trained();
    return result;
}

}  // namespace meta4::model
