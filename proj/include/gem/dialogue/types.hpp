#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gem/core/error.hpp"
#include "gem/core/text.hpp"

namespace gem {

// Slot values keyed by fully-qualified slot name; doubles as the per-turn
// update set (unique slot per turn) and as cumulative state.
using SlotValues = std::map<std::string, std::string>;

// A turn-level value equal to this marker (after normalization) removes the
// slot from cumulative state.
inline constexpr const char* kDeletionMarker = "none";

// Strict mode turns out-of-ontology labels and malformed structures into
// errors; lenient mode drops them with a recorded warning.
enum class ParseMode { Strict, Lenient };

inline constexpr const char* kUserTag = "[USER]";
inline constexpr const char* kAssistantTag = "[ASSISTANT]";

struct Ontology {
    std::set<std::string> domains;
    std::set<std::string> intents;
    std::set<std::string> slots;
    // slot -> allowed normalized values; absent or empty set means free-form.
    std::map<std::string, std::set<std::string>> categorical_values;

    bool has_domain(const std::string& d) const { return domains.count(d) > 0; }
    bool has_intent(const std::string& i) const { return intents.count(i) > 0; }
    bool has_slot(const std::string& s) const { return slots.count(s) > 0; }

    // Slot names are domain-prefixed: everything before the first '-'.
    static std::string slot_domain(const std::string& slot) {
        auto pos = slot.find('-');
        return pos == std::string::npos ? std::string() : slot.substr(0, pos);
    }

    bool is_categorical(const std::string& slot) const {
        auto it = categorical_values.find(slot);
        return it != categorical_values.end() && !it->second.empty();
    }

    void validate() const {
        if (domains.empty()) throw ContractError("ontology: domain set is empty");
        if (intents.empty()) throw ContractError("ontology: intent set is empty");
        if (slots.empty()) throw ContractError("ontology: slot set is empty");
        for (const auto& slot : slots) {
            std::string d = slot_domain(slot);
            if (d.empty())
                throw ContractError("ontology: slot '" + slot + "' has no domain prefix");
            if (!has_domain(d))
                throw ContractError("ontology: slot '" + slot + "' names unknown domain '" + d +
                                    "'");
        }
        for (const auto& [slot, values] : categorical_values) {
            if (!has_slot(slot))
                throw ContractError("ontology: categorical values for unknown slot '" + slot +
                                    "'");
            (void)values;
        }
    }
};

enum class Speaker { User, Assistant };

inline const char* speaker_tag(Speaker s) {
    return s == Speaker::User ? kUserTag : kAssistantTag;
}

struct Turn {
    Speaker speaker = Speaker::User;
    std::string text;
    std::set<std::string> gold_intents;
    std::set<std::string> gold_domains;
    std::set<std::string> gold_slots;
    SlotValues gold_turn_values;  // pairs introduced or updated this turn

    bool operator==(const Turn&) const = default;
};

struct Dialogue {
    std::string id;
    std::vector<Turn> turns;

    bool operator==(const Dialogue&) const = default;
};

struct DialogueState {
    SlotValues pairs;

    bool operator==(const DialogueState&) const = default;
};

// Window width in prior user/system exchanges; a bounded window keeps the
// 2w preceding utterances plus the current one.
struct WindowSize {
    static constexpr int kFull = -1;
    int value = kFull;

    static WindowSize full() { return WindowSize{kFull}; }
    static WindowSize exchanges(int w) {
        if (w < 0) throw ContractError("window size must be >= 0");
        return WindowSize{w};
    }
    bool is_full() const { return value < 0; }

    bool operator==(const WindowSize&) const = default;
};

struct ContextWindow {
    std::vector<Turn> turns;  // ends at the current turn
    WindowSize window;

    const Turn& current() const {
        if (turns.empty()) throw ContractError("context window is empty");
        return turns.back();
    }
};

inline ContextWindow build_context_window(const Dialogue& d, std::size_t t, WindowSize w) {
    if (t >= d.turns.size())
        throw ContractError("turn index " + std::to_string(t) + " out of range for dialogue '" +
                            d.id + "' with " + std::to_string(d.turns.size()) + " turns");
    std::size_t count;
    if (w.is_full()) {
        count = t + 1;
    } else {
        std::size_t cap = 2 * static_cast<std::size_t>(w.value) + 1;
        count = std::min(t + 1, cap);
    }
    ContextWindow ctx;
    ctx.window = w;
    ctx.turns.assign(d.turns.begin() + static_cast<std::ptrdiff_t>(t + 1 - count),
                     d.turns.begin() + static_cast<std::ptrdiff_t>(t + 1));
    return ctx;
}

// Fold per-turn updates 0..upto into cumulative state. Later updates
// overwrite earlier values; a normalized value equal to kDeletionMarker
// removes the slot.
inline DialogueState accumulate_state(std::span<const SlotValues> turn_updates, std::size_t upto) {
    if (!turn_updates.empty() && upto >= turn_updates.size())
        throw ContractError("accumulate_state: upto index out of range");
    DialogueState state;
    for (std::size_t i = 0; i < turn_updates.size() && i <= upto; ++i) {
        for (const auto& [slot, value] : turn_updates[i]) {
            std::string v = normalize_value(value);
            if (v == kDeletionMarker)
                state.pairs.erase(slot);
            else
                state.pairs[slot] = v;
        }
    }
    return state;
}

// Apply one turn's updates to an existing state, in place.
inline void apply_turn_update(DialogueState& state, const SlotValues& update) {
    for (const auto& [slot, value] : update) {
        std::string v = normalize_value(value);
        if (v == kDeletionMarker)
            state.pairs.erase(slot);
        else
            state.pairs[slot] = v;
    }
}

inline DialogueState gold_state_at(const Dialogue& d, std::size_t upto) {
    if (upto >= d.turns.size()) throw ContractError("gold_state_at: turn index out of range");
    DialogueState state;
    for (std::size_t i = 0; i <= upto; ++i) apply_turn_update(state, d.turns[i].gold_turn_values);
    return state;
}

}  // namespace gem
