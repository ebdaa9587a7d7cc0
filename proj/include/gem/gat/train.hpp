#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gem/dialogue/corpus.hpp"
#include "gem/gat/model.hpp"

namespace gem::gat {

struct TrainOptions {
    int epochs = 30;
    double learning_rate = 0.01;
    std::uint64_t seed = 1234;
    LossWeights loss_weights;
};

struct EpochRecord {
    int epoch = 0;
    double train_total = 0.0;
    double train_intent = 0.0;
    double train_domain = 0.0;
    double train_slot = 0.0;
    double val_intent_acc = 0.0;
    double val_slot_acc = 0.0;
};

struct ExpertAccuracy {
    double intent = 0.0;
    double domain = 0.0;
    double slot = 0.0;
};

struct TrainResult {
    GatModel model;  // best-on-validation parameters
    std::vector<EpochRecord> log;
    int best_epoch = 0;
};

// Exact set-match accuracy of the current-turn prediction over all user
// turns of a corpus.
inline ExpertAccuracy expert_accuracy(const GatModel& model, const Corpus& corpus,
                                      retrieval::EmbeddingProvider& provider) {
    std::size_t turns = 0, intent_ok = 0, domain_ok = 0, slot_ok = 0;
    for (const auto& d : corpus.dialogues) {
        for (std::size_t t = 0; t < d.turns.size(); ++t) {
            if (d.turns[t].speaker != Speaker::User) continue;
            ContextWindow ctx = build_context_window(d, t, model.config.context_window);
            TurnPrediction pred = predict_turn(model, ctx, provider);
            ++turns;
            if (pred.intents == d.turns[t].gold_intents) ++intent_ok;
            if (pred.domains == d.turns[t].gold_domains) ++domain_ok;
            if (pred.slots == d.turns[t].gold_slots) ++slot_ok;
        }
    }
    if (turns == 0) throw ContractError("expert_accuracy: corpus has no user turns");
    ExpertAccuracy acc;
    acc.intent = static_cast<double>(intent_ok) / static_cast<double>(turns);
    acc.domain = static_cast<double>(domain_ok) / static_cast<double>(turns);
    acc.slot = static_cast<double>(slot_ok) / static_cast<double>(turns);
    return acc;
}

// Multi-task training over per-turn context-window graphs. One optimizer
// step per user turn, all iteration orders fixed, so identical seeds give
// bit-identical checkpoints.
inline TrainResult train(const Corpus& train_corpus, const Corpus& val_corpus,
                         const GatConfig& config, const TrainOptions& options,
                         retrieval::EmbeddingProvider& provider) {
    options.loss_weights.validate();
    if (train_corpus.dialogues.empty()) throw ContractError("train: empty training corpus");

    GatModel model =
        GatModel::init(config, provider.dimension(), train_corpus.ontology, options.seed);

    TrainResult result;
    result.best_epoch = 0;
    GatModel best = model;
    best.params = model.params.snapshot_values();
    double best_slot = -1.0, best_intent = -1.0;

    if (options.epochs == 0) {
        result.model = std::move(best);
        return result;
    }

    // Graphs do not change across epochs; build them once.
    struct Sample {
        DialogueGraph graph;
        autodiff::Tensor intent_targets;
        autodiff::Tensor domain_targets;
        autodiff::Tensor slot_targets;
        std::vector<double> user_mask;
        std::string dialogue_id;
        std::size_t turn = 0;
    };
    std::vector<Sample> samples;
    for (const auto& d : train_corpus.dialogues) {
        for (std::size_t t = 0; t < d.turns.size(); ++t) {
            if (d.turns[t].speaker != Speaker::User) continue;
            Sample s;
            ContextWindow ctx = build_context_window(d, t, config.context_window);
            s.graph = build_graph(ctx, provider, config.bidirectional_edges);
            std::vector<std::set<std::string>> intents, domains, slots;
            for (const auto& turn : ctx.turns) {
                intents.push_back(turn.gold_intents);
                domains.push_back(turn.gold_domains);
                slots.push_back(turn.gold_slots);
                s.user_mask.push_back(turn.speaker == Speaker::User ? 1.0 : 0.0);
            }
            s.intent_targets = multi_hot_rows(intents, model.intent_labels);
            s.domain_targets = multi_hot_rows(domains, model.domain_labels);
            s.slot_targets = multi_hot_rows(slots, model.slot_labels);
            s.dialogue_id = d.id;
            s.turn = t;
            samples.push_back(std::move(s));
        }
    }
    if (samples.empty()) throw ContractError("train: training corpus has no user turns");

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        double sum_total = 0, sum_intent = 0, sum_domain = 0, sum_slot = 0;
        std::size_t step = 0;
        for (const auto& s : samples) {
            autodiff::Tape tape;
            auto bound = model.params.bind(tape);
            GatForwardVars fwd = gat_forward(tape, bound, model.config, s.graph);
            MultitaskLossVars loss =
                multitask_loss(tape, fwd, s.intent_targets, s.domain_targets, s.slot_targets,
                               s.user_mask, options.loss_weights);
            double total = tape.value(loss.total).scalar_value();
            if (!std::isfinite(total))
                throw TrainingError("training diverged (non-finite loss) at epoch " +
                                    std::to_string(epoch) + " step " + std::to_string(step) +
                                    " (dialogue '" + s.dialogue_id + "' turn " +
                                    std::to_string(s.turn) + ")");
            sum_total += total;
            sum_intent += tape.value(loss.intent).scalar_value();
            sum_domain += tape.value(loss.domain).scalar_value();
            sum_slot += tape.value(loss.slot).scalar_value();
            tape.backward(loss.total);
            model.params.step(tape, bound, options.learning_rate);
            ++step;
        }

        ExpertAccuracy val = expert_accuracy(model, val_corpus, provider);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_total = sum_total / static_cast<double>(samples.size());
        rec.train_intent = sum_intent / static_cast<double>(samples.size());
        rec.train_domain = sum_domain / static_cast<double>(samples.size());
        rec.train_slot = sum_slot / static_cast<double>(samples.size());
        rec.val_intent_acc = val.intent;
        rec.val_slot_acc = val.slot;
        result.log.push_back(rec);

        if (val.slot > best_slot || (val.slot == best_slot && val.intent > best_intent)) {
            best_slot = val.slot;
            best_intent = val.intent;
            best.params = model.params.snapshot_values();
            result.best_epoch = epoch;
        }
    }
    result.model = std::move(best);
    return result;
}

inline nlohmann::json epoch_record_to_json(const EpochRecord& r) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["train_total"] = r.train_total;
    j["train_intent"] = r.train_intent;
    j["train_domain"] = r.train_domain;
    j["train_slot"] = r.train_slot;
    j["val_intent_acc"] = r.val_intent_acc;
    j["val_slot_acc"] = r.val_slot_acc;
    return j;
}

// Training log as line-delimited JSON records.
inline void save_training_log(const std::vector<EpochRecord>& log,
                              const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    for (const auto& r : log) out << epoch_record_to_json(r).dump() << "\n";
}

}  // namespace gem::gat
