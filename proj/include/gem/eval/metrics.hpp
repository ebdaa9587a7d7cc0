#pragma once

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gem/core/error.hpp"
#include "gem/dialogue/types.hpp"
#include "gem/router/router.hpp"

namespace gem::eval {

struct ComponentTimings {
    double classify_ms = 0.0;
    double route_ms = 0.0;
    double expert_ms = 0.0;
    double retrieval_ms = 0.0;
    double generation_ms = 0.0;
    double total_ms = 0.0;
};

// Everything recorded for one user turn; the persisted results are
// sufficient to recompute every reported metric.
struct TurnResult {
    std::string dialogue_id;
    std::size_t turn_index = 0;
    router::RouteDecision route;
    std::set<std::string> predicted_intents;
    std::set<std::string> predicted_domains;
    std::set<std::string> predicted_slots;
    SlotValues predicted_turn_pairs;
    DialogueState predicted_state;
    std::set<std::string> gold_intents;
    std::set<std::string> gold_domains;
    std::set<std::string> gold_slots;
    SlotValues gold_turn_pairs;
    DialogueState gold_state;
    ComponentTimings timings;
    bool failed = false;
    int repair_count = 0;
};

enum class LabelTask { Intent, Slot, Domain };

namespace detail {

// "none"-valued and absent slots are equivalent; accumulate_state never
// stores the marker, but hand-built results might.
inline SlotValues scrub_none(const SlotValues& pairs) {
    SlotValues out;
    for (const auto& [slot, value] : pairs) {
        std::string v = normalize_value(value);
        if (v != kDeletionMarker) out[slot] = v;
    }
    return out;
}

}  // namespace detail

// Fraction of user turns whose cumulative predicted state exactly matches
// the gold state (all pairs, after normalization).
inline double joint_goal_accuracy(const std::vector<TurnResult>& results) {
    if (results.empty()) throw ContractError("joint_goal_accuracy: empty result set");
    std::size_t ok = 0;
    for (const auto& r : results)
        if (detail::scrub_none(r.predicted_state.pairs) == detail::scrub_none(r.gold_state.pairs))
            ++ok;
    return static_cast<double>(ok) / static_cast<double>(results.size());
}

// Fraction of user turns whose predicted turn-level update set exactly
// matches the gold update set.
inline double joint_turn_accuracy(const std::vector<TurnResult>& results) {
    if (results.empty()) throw ContractError("joint_turn_accuracy: empty result set");
    std::size_t ok = 0;
    for (const auto& r : results) {
        SlotValues pred, gold;
        for (const auto& [s, v] : r.predicted_turn_pairs) pred[s] = normalize_value(v);
        for (const auto& [s, v] : r.gold_turn_pairs) gold[s] = normalize_value(v);
        if (pred == gold) ++ok;
    }
    return static_cast<double>(ok) / static_cast<double>(results.size());
}

// Fraction of user turns with exact label-set equality for the task.
inline double turn_level_accuracy(const std::vector<TurnResult>& results, LabelTask task) {
    if (results.empty()) throw ContractError("turn_level_accuracy: empty result set");
    std::size_t ok = 0;
    for (const auto& r : results) {
        switch (task) {
            case LabelTask::Intent:
                if (r.predicted_intents == r.gold_intents) ++ok;
                break;
            case LabelTask::Slot:
                if (r.predicted_slots == r.gold_slots) ++ok;
                break;
            case LabelTask::Domain:
                if (r.predicted_domains == r.gold_domains) ++ok;
                break;
        }
    }
    return static_cast<double>(ok) / static_cast<double>(results.size());
}

// ---- serialization ------------------------------------------------------

inline nlohmann::json turn_result_to_json(const TurnResult& r) {
    nlohmann::json j;
    j["dialogue_id"] = r.dialogue_id;
    j["turn_index"] = r.turn_index;
    j["route"] = {{"chosen", router::expert_name(r.route.chosen)},
                  {"votes_gnn", r.route.votes_gnn},
                  {"votes_seq", r.route.votes_seq},
                  {"domains", r.route.domains}};
    j["predicted"] = {{"intents", r.predicted_intents},
                      {"domains", r.predicted_domains},
                      {"slots", r.predicted_slots},
                      {"turn_pairs", r.predicted_turn_pairs},
                      {"state", r.predicted_state.pairs}};
    j["gold"] = {{"intents", r.gold_intents},
                 {"domains", r.gold_domains},
                 {"slots", r.gold_slots},
                 {"turn_pairs", r.gold_turn_pairs},
                 {"state", r.gold_state.pairs}};
    j["timings_ms"] = {{"classify", r.timings.classify_ms}, {"route", r.timings.route_ms},
                       {"expert", r.timings.expert_ms},     {"retrieval", r.timings.retrieval_ms},
                       {"generation", r.timings.generation_ms}, {"total", r.timings.total_ms}};
    j["failed"] = r.failed;
    j["repair_count"] = r.repair_count;
    return j;
}

inline TurnResult turn_result_from_json(const nlohmann::json& j) {
    TurnResult r;
    r.dialogue_id = j.at("dialogue_id").get<std::string>();
    r.turn_index = j.at("turn_index").get<std::size_t>();
    const auto& route = j.at("route");
    r.route.chosen = route.at("chosen").get<std::string>() == "gnn" ? router::ExpertKind::Gnn
                                                                    : router::ExpertKind::Seq;
    r.route.votes_gnn = route.at("votes_gnn").get<int>();
    r.route.votes_seq = route.at("votes_seq").get<int>();
    r.route.domains = route.at("domains").get<std::set<std::string>>();
    const auto& pred = j.at("predicted");
    r.predicted_intents = pred.at("intents").get<std::set<std::string>>();
    r.predicted_domains = pred.at("domains").get<std::set<std::string>>();
    r.predicted_slots = pred.at("slots").get<std::set<std::string>>();
    r.predicted_turn_pairs = pred.at("turn_pairs").get<SlotValues>();
    r.predicted_state.pairs = pred.at("state").get<SlotValues>();
    const auto& gold = j.at("gold");
    r.gold_intents = gold.at("intents").get<std::set<std::string>>();
    r.gold_domains = gold.at("domains").get<std::set<std::string>>();
    r.gold_slots = gold.at("slots").get<std::set<std::string>>();
    r.gold_turn_pairs = gold.at("turn_pairs").get<SlotValues>();
    r.gold_state.pairs = gold.at("state").get<SlotValues>();
    const auto& t = j.at("timings_ms");
    r.timings.classify_ms = t.at("classify").get<double>();
    r.timings.route_ms = t.at("route").get<double>();
    r.timings.expert_ms = t.at("expert").get<double>();
    r.timings.retrieval_ms = t.at("retrieval").get<double>();
    r.timings.generation_ms = t.at("generation").get<double>();
    r.timings.total_ms = t.at("total").get<double>();
    r.failed = j.at("failed").get<bool>();
    r.repair_count = j.at("repair_count").get<int>();
    return r;
}

inline void save_turn_results(const std::vector<TurnResult>& results,
                              const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    for (const auto& r : results) out << turn_result_to_json(r).dump() << "\n";
}

inline std::vector<TurnResult> load_turn_results(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<TurnResult> results;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            results.push_back(turn_result_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("turn results '" + path.string() + "' line " +
                             std::to_string(lineno) + ": " + e.what());
        }
    }
    return results;
}

}  // namespace gem::eval
