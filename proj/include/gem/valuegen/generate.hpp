#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gem/core/error.hpp"
#include "gem/core/text.hpp"
#include "gem/dialogue/types.hpp"
#include "gem/valuegen/llm_client.hpp"
#include "gem/valuegen/prompt.hpp"

namespace gem::valuegen {

struct SlotValuePrediction {
    SlotValues pairs;
    std::string raw_completion;
    int repair_count = 0;
    bool failed = false;

    bool operator==(const SlotValuePrediction&) const = default;
};

struct ReactTrace {
    std::string analysis;
    std::string reasoning;
    std::string json_stage;
    SlotValuePrediction final;
};

struct RejectedPair {
    std::string slot;
    std::string value;
    std::string reason;  // "unknown-slot" or "bad-value"
};

struct ValidationResult {
    SlotValues accepted;
    std::vector<RejectedPair> rejects;
};

// Normalize values, drop unknown slots and out-of-set categorical values.
inline ValidationResult validate_pairs(const SlotValues& pairs, const Ontology& ontology) {
    ValidationResult result;
    for (const auto& [slot, value] : pairs) {
        std::string v = normalize_value(value);
        if (!ontology.has_slot(slot)) {
            result.rejects.push_back({slot, v, "unknown-slot"});
            continue;
        }
        if (v != kDeletionMarker && ontology.is_categorical(slot) &&
            !ontology.categorical_values.at(slot).count(v)) {
            result.rejects.push_back({slot, v, "bad-value"});
            continue;
        }
        result.accepted[slot] = v;
    }
    return result;
}

// Outermost balanced-brace JSON object in a completion, tolerating
// surrounding prose. Quote- and escape-aware.
inline std::optional<std::string> extract_json_object(const std::string& text) {
    std::size_t start = text.find('{');
    if (start == std::string::npos) return std::nullopt;
    int depth = 0;
    bool in_string = false, escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            --depth;
            if (depth == 0) return text.substr(start, i - start + 1);
        }
    }
    return std::nullopt;
}

// Parse a completion as a flat slot -> value object. Non-string values are
// stringified; nested objects or arrays fail the parse.
inline std::optional<SlotValues> parse_completion_pairs(const std::string& completion) {
    auto body = extract_json_object(completion);
    if (!body) return std::nullopt;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(*body);
    } catch (const nlohmann::json::parse_error&) {
        return std::nullopt;
    }
    if (!j.is_object()) return std::nullopt;
    SlotValues pairs;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.value().is_string())
            pairs[it.key()] = it.value().get<std::string>();
        else if (it.value().is_number_integer())
            pairs[it.key()] = std::to_string(it.value().get<long long>());
        else if (it.value().is_boolean())
            pairs[it.key()] = it.value().get<bool>() ? "true" : "false";
        else if (it.value().is_null())
            pairs[it.key()] = kDeletionMarker;
        else
            return std::nullopt;
    }
    return pairs;
}

inline constexpr const char* kRepairInstruction =
    "Your previous response could not be parsed. Respond again with only one valid JSON "
    "object mapping slot names to string values, and nothing else.";

struct GenerateOptions {
    GenerationParams params;
    std::size_t max_prompt_chars = 0;  // 0 = unbounded
};

namespace detail {

// Shared parse-with-one-repair policy. The repair round appends the failed
// completion and a correction instruction to the original prompt.
inline SlotValuePrediction complete_and_parse(LlmClient& client, const std::string& prompt,
                                              const GenerateOptions& options) {
    SlotValuePrediction pred;
    pred.raw_completion = client.complete(prompt, options.params);
    auto pairs = parse_completion_pairs(pred.raw_completion);
    if (!pairs) {
        pred.repair_count = 1;
        std::string repair_prompt =
            prompt + "\n\n" + pred.raw_completion + "\n\n" + kRepairInstruction;
        pred.raw_completion = client.complete(repair_prompt, options.params);
        pairs = parse_completion_pairs(pred.raw_completion);
    }
    if (pairs) {
        pred.pairs = std::move(*pairs);
    } else {
        pred.failed = true;
    }
    return pred;
}

}  // namespace detail

// Zero/few-shot generation: one completion, at most one repair round-trip.
inline SlotValuePrediction generate(LlmClient& client, const PromptSpec& spec,
                                    const std::vector<retrieval::ExampleRecord>& examples,
                                    const std::vector<Turn>& history, const Turn& current,
                                    const std::set<std::string>& slots,
                                    const GenerateOptions& options = {}) {
    std::string prompt =
        assemble_prompt(spec, examples, history, current, slots, options.max_prompt_chars);
    return detail::complete_and_parse(client, prompt, options);
}

// Three-stage generation executed within a single dialogue turn: context
// analysis over the retrieved examples, per-slot reasoning over the
// analysis, then strict JSON emission parsed with the shared repair policy.
// A stage failure returns the trace reached so far with the final marked
// failed.
inline ReactTrace react_generate(LlmClient& client, const PromptSpec& spec,
                                 const std::vector<retrieval::ExampleRecord>& examples,
                                 const std::vector<Turn>& history, const Turn& current,
                                 const std::set<std::string>& slots,
                                 const GenerateOptions& options = {}) {
    spec.validate();
    ReactTrace trace;
    std::string current_line = std::string(speaker_tag(current.speaker)) + " " + current.text;

    std::vector<Turn> hist = history;
    auto build_analysis = [&](const std::vector<Turn>& h) {
        std::string p = detail::substitute(spec.analysis_template, "{examples}",
                                           render_examples(examples));
        p = detail::substitute(p, "{history}", render_history(h));
        return detail::substitute(p, "{current}", current_line);
    };
    std::string analysis_prompt = build_analysis(hist);
    while (options.max_prompt_chars != 0 && analysis_prompt.size() > options.max_prompt_chars &&
           !hist.empty()) {
        hist.erase(hist.begin());
        analysis_prompt = build_analysis(hist);
    }

    try {
        trace.analysis = client.complete(analysis_prompt, options.params);
    } catch (const Error&) {
        trace.final.failed = true;
        return trace;
    }

    std::string reasoning_prompt =
        detail::substitute(spec.reasoning_template, "{analysis}", trace.analysis);
    reasoning_prompt = detail::substitute(reasoning_prompt, "{current}", current_line);
    reasoning_prompt = detail::substitute(reasoning_prompt, "{slots}", render_slots(slots));
    try {
        trace.reasoning = client.complete(reasoning_prompt, options.params);
    } catch (const Error&) {
        trace.final.failed = true;
        return trace;
    }

    std::string json_prompt =
        detail::substitute(spec.json_template, "{reasoning}", trace.reasoning);
    json_prompt = detail::substitute(json_prompt, "{slots}", render_slots(slots));
    try {
        trace.final = detail::complete_and_parse(client, json_prompt, options);
        trace.json_stage = trace.final.raw_completion;
    } catch (const Error&) {
        trace.final = SlotValuePrediction{};
        trace.final.failed = true;
    }
    return trace;
}

}  // namespace gem::valuegen
