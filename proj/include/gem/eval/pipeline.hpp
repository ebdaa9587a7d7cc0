#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gem/dialogue/corpus.hpp"
#include "gem/eval/metrics.hpp"
#include "gem/gat/model.hpp"
#include "gem/retrieval/index.hpp"
#include "gem/router/router.hpp"
#include "gem/seq/expert.hpp"
#include "gem/valuegen/generate.hpp"

namespace gem::eval {

struct PipelineConfig {
    valuegen::GenerationMode mode = valuegen::GenerationMode::FewShot;
    valuegen::GenerateOptions generate_options;
    std::size_t retrieval_k = 5;
    double retrieval_tau = 0.3;
    WindowSize context_window = WindowSize::full();  // for prompts and the seq expert
    int dialogue_concurrency = 1;
    bool timing_enabled = true;  // disable for byte-reproducible reports
};

struct Pipeline {
    const gat::GatModel* gat_model = nullptr;  // may be null when routing never picks GNN
    seq::SeqExpert* seq_expert = nullptr;
    router::DomainClassifier* classifier = nullptr;
    router::AccuracyTable accuracy_table;
    const retrieval::VectorIndex* index = nullptr;
    retrieval::EmbeddingProvider* embedder = nullptr;
    valuegen::LlmClient* llm = nullptr;
    valuegen::PromptSpec prompt_spec;
    PipelineConfig config;
};

struct LatencySummary {
    double mean = 0.0;
    double p50 = 0.0;
    double p95 = 0.0;
    double max = 0.0;
};

struct FailureCounts {
    std::size_t failed_turns = 0;
    std::size_t generation_failures = 0;
    std::size_t parse_repairs = 0;
};

struct RunReport {
    double jga = 0.0;
    double jta = 0.0;
    double intent_acc = 0.0;
    double slot_acc = 0.0;
    std::vector<router::DomainRoutingShare> routing;
    std::map<std::string, LatencySummary> latency;  // per component
    FailureCounts failures;
    nlohmann::json config_snapshot;
    std::size_t turn_count = 0;
};

namespace detail {

class Stopwatch {
public:
    explicit Stopwatch(bool enabled) : enabled_(enabled) {}
    void start() {
        if (enabled_) t0_ = std::chrono::steady_clock::now();
    }
    double stop_ms() {
        if (!enabled_) return 0.0;
        auto dt = std::chrono::steady_clock::now() - t0_;
        return std::chrono::duration<double, std::milli>(dt).count();
    }

private:
    bool enabled_;
    std::chrono::steady_clock::time_point t0_;
};

inline LatencySummary summarize(std::vector<double> samples) {
    LatencySummary s;
    if (samples.empty()) return s;
    std::sort(samples.begin(), samples.end());
    double sum = 0.0;
    for (double v : samples) sum += v;
    s.mean = sum / static_cast<double>(samples.size());
    auto quantile = [&](double q) {
        double pos = q * static_cast<double>(samples.size() - 1);
        std::size_t lo = static_cast<std::size_t>(pos);
        std::size_t hi = std::min(lo + 1, samples.size() - 1);
        double frac = pos - static_cast<double>(lo);
        return samples[lo] * (1.0 - frac) + samples[hi] * frac;
    };
    s.p50 = quantile(0.5);
    s.p95 = quantile(0.95);
    s.max = samples.back();
    return s;
}

}  // namespace detail

// Evaluate one dialogue: per user turn, classify domains, route, run the
// chosen expert, retrieve examples, generate and validate values, and fold
// the update into the running predicted state. A component failure marks
// the turn failed (empty prediction) and the run continues.
inline std::vector<TurnResult> run_dialogue(const Pipeline& p, const Corpus& corpus,
                                            const Dialogue& d) {
    std::vector<TurnResult> results;
    DialogueState predicted_state;
    DialogueState gold_state;
    std::string prev_system;
    bool timing = p.config.timing_enabled;

    for (std::size_t t = 0; t < d.turns.size(); ++t) {
        const Turn& turn = d.turns[t];
        apply_turn_update(gold_state, turn.gold_turn_values);
        if (turn.speaker != Speaker::User) {
            prev_system = turn.text;
            continue;
        }

        TurnResult r;
        r.dialogue_id = d.id;
        r.turn_index = t;
        r.gold_intents = turn.gold_intents;
        r.gold_domains = turn.gold_domains;
        r.gold_slots = turn.gold_slots;
        r.gold_turn_pairs = turn.gold_turn_values;

        detail::Stopwatch total(timing);
        total.start();
        try {
            std::vector<Turn> history(d.turns.begin(),
                                      d.turns.begin() + static_cast<std::ptrdiff_t>(t));

            detail::Stopwatch sw(timing);
            sw.start();
            std::set<std::string> domains = p.classifier->classify(history, turn.text);
            r.timings.classify_ms = sw.stop_ms();

            sw.start();
            r.route = router::route(domains, p.accuracy_table);
            r.timings.route_ms = sw.stop_ms();

            sw.start();
            ContextWindow ctx = build_context_window(d, t, p.config.context_window);
            if (r.route.chosen == router::ExpertKind::Gnn) {
                if (!p.gat_model)
                    throw ContractError("pipeline: routed to GNN but no model is loaded");
                ContextWindow gat_ctx =
                    build_context_window(d, t, p.gat_model->config.context_window);
                gat::TurnPrediction pred = gat::predict_turn(*p.gat_model, gat_ctx, *p.embedder);
                r.predicted_intents = pred.intents;
                r.predicted_domains = pred.domains;
                r.predicted_slots = pred.slots;
            } else {
                seq::SeqExpertOutput out = p.seq_expert->predict(ctx);
                r.predicted_intents = out.intents;
                r.predicted_domains = out.domains;
                r.predicted_slots = out.slots;
            }
            r.timings.expert_ms = sw.stop_ms();

            sw.start();
            std::string combined =
                retrieval::combine_fields(prev_system, turn.text, r.predicted_slots);
            std::vector<retrieval::ExampleRecord> examples;
            if (p.index && p.index->size() > 0) {
                std::vector<double> query = p.embedder->embed(combined);
                examples =
                    p.index->query_topk(query, p.config.retrieval_k, p.config.retrieval_tau);
            }
            r.timings.retrieval_ms = sw.stop_ms();

            sw.start();
            valuegen::SlotValuePrediction prediction;
            if (p.config.mode == valuegen::GenerationMode::ReAct) {
                valuegen::ReactTrace trace =
                    valuegen::react_generate(*p.llm, p.prompt_spec, examples, history, turn,
                                             r.predicted_slots, p.config.generate_options);
                prediction = trace.final;
            } else {
                const auto& shots =
                    p.config.mode == valuegen::GenerationMode::ZeroShot
                        ? std::vector<retrieval::ExampleRecord>{}
                        : examples;
                prediction = valuegen::generate(*p.llm, p.prompt_spec, shots, history, turn,
                                                r.predicted_slots, p.config.generate_options);
            }
            r.timings.generation_ms = sw.stop_ms();
            r.repair_count = prediction.repair_count;
            if (prediction.failed) r.failed = true;

            valuegen::ValidationResult validated =
                valuegen::validate_pairs(prediction.pairs, corpus.ontology);
            r.predicted_turn_pairs = validated.accepted;
        } catch (const Error&) {
            r.failed = true;
        }
        apply_turn_update(predicted_state, r.predicted_turn_pairs);
        r.predicted_state = predicted_state;
        r.gold_state = gold_state;
        r.timings.total_ms = total.stop_ms();
        results.push_back(std::move(r));
    }
    return results;
}

inline RunReport assemble_report(const std::vector<TurnResult>& results,
                                 nlohmann::json config_snapshot) {
    RunReport report;
    report.turn_count = results.size();
    report.config_snapshot = std::move(config_snapshot);
    if (results.empty()) return report;
    report.jga = joint_goal_accuracy(results);
    report.jta = joint_turn_accuracy(results);
    report.intent_acc = turn_level_accuracy(results, LabelTask::Intent);
    report.slot_acc = turn_level_accuracy(results, LabelTask::Slot);

    std::vector<router::RouteDecision> decisions;
    decisions.reserve(results.size());
    for (const auto& r : results) decisions.push_back(r.route);
    report.routing = router::routing_report(decisions);

    std::map<std::string, std::vector<double>> samples;
    for (const auto& r : results) {
        samples["classify"].push_back(r.timings.classify_ms);
        samples["route"].push_back(r.timings.route_ms);
        samples["expert"].push_back(r.timings.expert_ms);
        samples["retrieval"].push_back(r.timings.retrieval_ms);
        samples["generation"].push_back(r.timings.generation_ms);
        samples["total"].push_back(r.timings.total_ms);
    }
    for (auto& [name, s] : samples) report.latency[name] = detail::summarize(std::move(s));

    for (const auto& r : results) {
        if (r.failed) {
            ++report.failures.failed_turns;
            ++report.failures.generation_failures;
        }
        report.failures.parse_repairs += static_cast<std::size_t>(r.repair_count);
    }
    return report;
}

// Dialogues are independent and may be evaluated concurrently; turns within
// a dialogue stay sequential. Results are merged in corpus order, so the
// output is independent of scheduling.
inline std::pair<std::vector<TurnResult>, RunReport> run_pipeline(
    const Pipeline& p, const Corpus& corpus, nlohmann::json config_snapshot = {}) {
    if (!p.seq_expert || !p.classifier || !p.embedder || !p.llm)
        throw ContractError("pipeline: missing component");

    std::size_t n = corpus.dialogues.size();
    std::vector<std::vector<TurnResult>> per_dialogue(n);
    int workers = std::max(1, p.config.dialogue_concurrency);
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i)
            per_dialogue[i] = run_dialogue(p, corpus, corpus.dialogues[i]);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                per_dialogue[i] = run_dialogue(p, corpus, corpus.dialogues[i]);
            }
        };
        std::vector<std::thread> threads;
        for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    std::vector<TurnResult> results;
    for (auto& part : per_dialogue)
        for (auto& r : part) results.push_back(std::move(r));
    RunReport report = assemble_report(results, std::move(config_snapshot));
    return {std::move(results), std::move(report)};
}

// ---- report serialization ----------------------------------------------

inline constexpr const char* kReportFormat = "gem.run_report";
inline constexpr int kReportVersion = 1;

inline nlohmann::json run_report_to_json(const RunReport& r) {
    nlohmann::json j;
    j["format"] = kReportFormat;
    j["version"] = kReportVersion;
    j["metrics"] = {{"jga", r.jga},
                    {"jta", r.jta},
                    {"intent_acc", r.intent_acc},
                    {"slot_acc", r.slot_acc}};
    nlohmann::json routing = nlohmann::json::array();
    for (const auto& share : r.routing)
        routing.push_back({{"domain", share.domain},
                           {"turns", share.turns},
                           {"gnn_pct", share.gnn_pct},
                           {"seq_pct", share.seq_pct}});
    j["routing"] = std::move(routing);
    nlohmann::json latency;
    for (const auto& [name, s] : r.latency)
        latency[name] = {{"mean_ms", s.mean}, {"p50_ms", s.p50}, {"p95_ms", s.p95},
                         {"max_ms", s.max}};
    j["latency"] = std::move(latency);
    j["failures"] = {{"failed_turns", r.failures.failed_turns},
                     {"generation_failures", r.failures.generation_failures},
                     {"parse_repairs", r.failures.parse_repairs}};
    j["turn_count"] = r.turn_count;
    // JTA here means exact match of turn-level update sets.
    j["jta_definition"] = "exact match of turn-level update sets";
    j["config"] = r.config_snapshot;
    return j;
}

inline std::string run_report_summary(const RunReport& r) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "turns evaluated: " << r.turn_count << "\n";
    out << "JGA: " << r.jga << "  JTA: " << r.jta << "\n";
    out << "intent accuracy: " << r.intent_acc << "  slot accuracy: " << r.slot_acc << "\n";
    out << "failed turns: " << r.failures.failed_turns
        << "  repairs: " << r.failures.parse_repairs << "\n";
    out << "routing (% of turns containing each domain):\n";
    out << std::setprecision(2);
    for (const auto& share : r.routing)
        out << "  " << share.domain << ": gnn " << share.gnn_pct << "% / seq " << share.seq_pct
            << "% over " << share.turns << " turns\n";
    out << "latency per turn (ms, mean/p50/p95/max):\n";
    for (const auto& [name, s] : r.latency)
        out << "  " << name << ": " << s.mean << " / " << s.p50 << " / " << s.p95 << " / "
            << s.max << "\n";
    return out.str();
}

inline void save_run_report(const RunReport& report, const std::filesystem::path& path) {
    write_file(path, run_report_to_json(report).dump(2) + "\n");
}

}  // namespace gem::eval
