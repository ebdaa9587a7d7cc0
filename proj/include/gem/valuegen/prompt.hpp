#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gem/core/error.hpp"
#include "gem/core/text.hpp"
#include "gem/dialogue/types.hpp"
#include "gem/retrieval/index.hpp"

namespace gem::valuegen {

enum class GenerationMode { ZeroShot, FewShot, ReAct };

inline GenerationMode generation_mode_from_string(const std::string& s) {
    if (s == "zero_shot") return GenerationMode::ZeroShot;
    if (s == "few_shot") return GenerationMode::FewShot;
    if (s == "react") return GenerationMode::ReAct;
    throw ConfigError("unknown generation mode '" + s + "'");
}

inline std::string generation_mode_to_string(GenerationMode m) {
    switch (m) {
        case GenerationMode::ZeroShot: return "zero_shot";
        case GenerationMode::FewShot: return "few_shot";
        case GenerationMode::ReAct: return "react";
    }
    return "few_shot";
}

namespace defaults {

inline constexpr const char* kPrefix =
    "You are a dialogue state tracker. Given the dialogue and the slots to fill, respond with "
    "one JSON object mapping each slot name to its value. Use the value \"none\" to remove a "
    "slot. Respond with the JSON object only.";

inline constexpr const char* kHistoryDelim = "Dialogue history:";
inline constexpr const char* kCurrentDelim = "Current turn:";
inline constexpr const char* kSlotsDelim = "Slots to fill:";

inline constexpr const char* kAnalysisTemplate =
    "Analyze the dialogue below. Similar solved examples are listed first.\n"
    "\n"
    "Examples:\n"
    "{examples}\n"
    "\n"
    "Dialogue history:\n"
    "{history}\n"
    "\n"
    "Current turn:\n"
    "{current}\n"
    "\n"
    "Describe what the user is asking for and which pieces of information the current turn "
    "adds or changes.";

inline constexpr const char* kReasoningTemplate =
    "Context analysis:\n"
    "{analysis}\n"
    "\n"
    "Current turn:\n"
    "{current}\n"
    "\n"
    "Slots to fill:\n"
    "{slots}\n"
    "\n"
    "For each slot, reason step by step about its value in this turn. State the evidence.";

inline constexpr const char* kJsonTemplate =
    "Reasoning:\n"
    "{reasoning}\n"
    "\n"
    "Slots to fill:\n"
    "{slots}\n"
    "\n"
    "Now answer with one JSON object mapping each slot name to its value. Use the value "
    "\"none\" to remove a slot. Respond with the JSON object only.";

}  // namespace defaults

namespace detail {

inline void require_placeholder(const std::string& tmpl, const std::string& placeholder,
                                const std::string& what) {
    if (tmpl.find(placeholder) == std::string::npos)
        throw ConfigError(what + " template is missing required placeholder " + placeholder);
}

inline std::string substitute(std::string tmpl, const std::string& placeholder,
                              const std::string& value) {
    std::size_t pos = 0;
    while ((pos = tmpl.find(placeholder, pos)) != std::string::npos) {
        tmpl.replace(pos, placeholder.size(), value);
        pos += value.size();
    }
    return tmpl;
}

}  // namespace detail

// Delimiters and stage templates for prompt assembly. Templates are plain
// text assets; placeholder presence is checked at load time so a bad
// template never fails mid-run.
struct PromptSpec {
    std::string prefix = defaults::kPrefix;
    std::string history_delim = defaults::kHistoryDelim;
    std::string current_delim = defaults::kCurrentDelim;
    std::string slots_delim = defaults::kSlotsDelim;
    GenerationMode mode = GenerationMode::FewShot;
    std::string analysis_template = defaults::kAnalysisTemplate;
    std::string reasoning_template = defaults::kReasoningTemplate;
    std::string json_template = defaults::kJsonTemplate;

    static PromptSpec with_mode(GenerationMode mode) {
        PromptSpec spec;
        spec.mode = mode;
        spec.validate();
        return spec;
    }

    // Optional overrides from a template directory: delimiters.json plus
    // react_analysis.txt / react_reasoning.txt / react_json.txt. Missing
    // files keep the built-in defaults.
    static PromptSpec load(const std::filesystem::path& dir, GenerationMode mode) {
        PromptSpec spec;
        spec.mode = mode;
        namespace fs = std::filesystem;
        if (!fs::is_directory(dir))
            throw ConfigError("template directory '" + dir.string() + "' does not exist");
        fs::path delims = dir / "delimiters.json";
        if (fs::exists(delims)) {
            std::ifstream in(delims);
            nlohmann::json j;
            try {
                in >> j;
            } catch (const nlohmann::json::parse_error& e) {
                throw ConfigError("delimiters.json: " + std::string(e.what()));
            }
            spec.prefix = j.value("prefix", spec.prefix);
            spec.history_delim = j.value("history", spec.history_delim);
            spec.current_delim = j.value("current", spec.current_delim);
            spec.slots_delim = j.value("slots", spec.slots_delim);
        }
        auto read_if_present = [&](const char* name, std::string& target) {
            fs::path p = dir / name;
            if (!fs::exists(p)) return;
            std::ifstream in(p, std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            target = ss.str();
        };
        read_if_present("react_analysis.txt", spec.analysis_template);
        read_if_present("react_reasoning.txt", spec.reasoning_template);
        read_if_present("react_json.txt", spec.json_template);
        spec.validate();
        return spec;
    }

    void validate() const {
        detail::require_placeholder(analysis_template, "{examples}", "analysis");
        detail::require_placeholder(analysis_template, "{current}", "analysis");
        detail::require_placeholder(reasoning_template, "{analysis}", "reasoning");
        detail::require_placeholder(reasoning_template, "{slots}", "reasoning");
        detail::require_placeholder(json_template, "{reasoning}", "json");
        detail::require_placeholder(json_template, "{slots}", "json");
    }
};

// A retrieved example rendered for the prompt: its combined text plus the
// gold pairs as a JSON object (keys sorted, so rendering is byte-stable).
inline std::string render_example(const retrieval::ExampleRecord& record) {
    nlohmann::json pairs(record.gold_pairs);
    return record.combined_text + "\n" + pairs.dump();
}

inline std::string render_examples(const std::vector<retrieval::ExampleRecord>& examples) {
    std::vector<std::string> parts;
    parts.reserve(examples.size());
    for (const auto& e : examples) parts.push_back(render_example(e));
    return join(parts, "\n\n");
}

inline std::string render_history(const std::vector<Turn>& history) {
    std::vector<std::string> lines;
    lines.reserve(history.size());
    for (const auto& t : history)
        lines.push_back(std::string(speaker_tag(t.speaker)) + " " + t.text);
    return join(lines, "\n");
}

inline std::string render_slots(const std::set<std::string>& slots) {
    return join(slots, ", ");
}

// Prompt concatenation, in order: prefix, retrieved examples, history
// delimiter + history, current delimiter + current turn, slots delimiter +
// slot list. History is truncated oldest-first to fit max_chars (0 = no
// budget); the current turn is never dropped.
inline std::string assemble_prompt(const PromptSpec& spec,
                                   const std::vector<retrieval::ExampleRecord>& examples,
                                   const std::vector<Turn>& history, const Turn& current,
                                   const std::set<std::string>& slots,
                                   std::size_t max_chars = 0) {
    auto build = [&](const std::vector<Turn>& hist) {
        std::string prompt = spec.prefix;
        if (!examples.empty()) prompt += "\n\n" + render_examples(examples);
        prompt += "\n\n" + spec.history_delim + "\n" + render_history(hist);
        prompt += "\n\n" + spec.current_delim + "\n" +
                  std::string(speaker_tag(current.speaker)) + " " + current.text;
        prompt += "\n\n" + spec.slots_delim + "\n" + render_slots(slots);
        return prompt;
    };
    std::vector<Turn> hist = history;
    std::string prompt = build(hist);
    while (max_chars != 0 && prompt.size() > max_chars && !hist.empty()) {
        hist.erase(hist.begin());
        prompt = build(hist);
    }
    return prompt;
}

}  // namespace gem::valuegen
