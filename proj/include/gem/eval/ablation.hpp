#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gem/dialogue/corpus.hpp"
#include "gem/gat/train.hpp"

namespace gem::eval {

// One sweep cell: a named configuration to train and evaluate.
struct SweepCell {
    std::string name;
    gat::GatConfig gat;
    gat::TrainOptions train;
};

struct SweepRow {
    std::string name;
    double val_intent_acc = 0.0;
    double val_slot_acc = 0.0;
    int best_epoch = 0;
    bool failed = false;
    std::string error;
};

// One training + validation-evaluation run per cell, fixed seeds. A cell
// failure is recorded and the sweep continues.
inline std::vector<SweepRow> ablation_sweep(const std::vector<SweepCell>& grid,
                                            const Corpus& train_corpus, const Corpus& val_corpus,
                                            retrieval::EmbeddingProvider& provider) {
    if (grid.empty()) throw ContractError("ablation_sweep: empty grid");
    std::vector<SweepRow> rows;
    for (const auto& cell : grid) {
        SweepRow row;
        row.name = cell.name;
        try {
            gat::TrainResult result =
                gat::train(train_corpus, val_corpus, cell.gat, cell.train, provider);
            gat::ExpertAccuracy acc =
                gat::expert_accuracy(result.model, val_corpus, provider);
            row.val_intent_acc = acc.intent;
            row.val_slot_acc = acc.slot;
            row.best_epoch = result.best_epoch;
        } catch (const Error& e) {
            row.failed = true;
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "cell,val_intent_acc,val_slot_acc,best_epoch,failed\n";
    out << std::setprecision(17);
    for (const auto& r : rows)
        out << r.name << "," << r.val_intent_acc << "," << r.val_slot_acc << "," << r.best_epoch
            << "," << (r.failed ? "yes" : "no") << "\n";
    return out.str();
}

inline nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json row;
        row["cell"] = r.name;
        row["val_intent_acc"] = r.val_intent_acc;
        row["val_slot_acc"] = r.val_slot_acc;
        row["best_epoch"] = r.best_epoch;
        row["failed"] = r.failed;
        if (r.failed) row["error"] = r.error;
        j.push_back(std::move(row));
    }
    return j;
}

}  // namespace gem::eval
