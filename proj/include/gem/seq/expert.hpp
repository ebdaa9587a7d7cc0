#pragma once

#include <map>
#include <memory>
#include <semaphore>
#include <set>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "gem/core/error.hpp"
#include "gem/core/text.hpp"
#include "gem/dialogue/types.hpp"

namespace gem::seq {

// Speaker-tagged utterances joined by newlines; the model input format.
inline std::string linearize(const ContextWindow& ctx) {
    if (ctx.turns.empty()) throw ContractError("linearize: empty context window");
    std::vector<std::string> lines;
    lines.reserve(ctx.turns.size());
    for (const auto& turn : ctx.turns)
        lines.push_back(std::string(speaker_tag(turn.speaker)) + " " + turn.text);
    return join(lines, "\n");
}

struct SeqExpertOutput {
    std::set<std::string> intents;
    std::set<std::string> domains;
    std::set<std::string> slots;
    std::string raw_text;

    bool operator==(const SeqExpertOutput&) const = default;
};

// Structured output linearization: one block per domain, blocks separated by
// ';', fields separated by '|':
//   "hotel | find_hotel | hotel-area, hotel-stars ; train | find_train | train-day"
// Intent and slot fields are comma-separated lists; empty text means all
// sets empty.
inline std::string serialize_structured_output(const SeqExpertOutput& out) {
    // Group slots and intents under their domain prefix; unprefixed labels
    // go to the first block.
    std::vector<std::string> blocks;
    std::set<std::string> domains = out.domains;
    if (domains.empty() && (!out.intents.empty() || !out.slots.empty())) domains.insert("");
    for (const auto& domain : domains) {
        std::vector<std::string> intents, slots;
        for (const auto& intent : out.intents) {
            bool mine = domain.empty() || intent.find(domain) != std::string::npos;
            if (mine) intents.push_back(intent);
        }
        for (const auto& slot : out.slots) {
            bool mine = domain.empty() || Ontology::slot_domain(slot) == domain;
            if (mine) slots.push_back(slot);
        }
        blocks.push_back(domain + " | " + join(intents, ", ") + " | " + join(slots, ", "));
    }
    return join(blocks, " ; ");
}

// Parse the documented "domain | intent | slot-list" linearization. In
// strict mode unknown labels and malformed blocks raise ParseError; lenient
// mode drops them and records a warning.
inline SeqExpertOutput parse_structured_output(const std::string& text, const Ontology& ontology,
                                               ParseMode mode = ParseMode::Strict,
                                               std::vector<std::string>* warnings = nullptr) {
    SeqExpertOutput out;
    out.raw_text = text;
    if (trim(text).empty()) return out;

    auto warn_or_throw = [&](const std::string& msg) {
        if (mode == ParseMode::Strict) throw ParseError(msg);
        if (warnings) warnings->push_back(msg);
    };

    for (const auto& raw_block : split(text, ';')) {
        std::string block = trim(raw_block);
        if (block.empty()) continue;
        auto fields = split(block, '|');
        if (fields.size() != 3) {
            warn_or_throw("structured output: malformed block '" + block +
                          "' (expected domain | intents | slots)");
            continue;
        }
        std::string domain = trim(fields[0]);
        if (!domain.empty()) {
            if (ontology.has_domain(domain))
                out.domains.insert(domain);
            else
                warn_or_throw("structured output: unknown domain '" + domain + "'");
        }
        for (const auto& raw : split(fields[1], ',')) {
            std::string intent = trim(raw);
            if (intent.empty()) continue;
            if (ontology.has_intent(intent))
                out.intents.insert(intent);
            else
                warn_or_throw("structured output: unknown intent '" + intent + "'");
        }
        for (const auto& raw : split(fields[2], ',')) {
            std::string slot = trim(raw);
            if (slot.empty()) continue;
            if (ontology.has_slot(slot))
                out.slots.insert(slot);
            else
                warn_or_throw("structured output: unknown slot '" + slot + "'");
        }
    }
    return out;
}

class SeqExpert {
public:
    virtual ~SeqExpert() = default;
    virtual SeqExpertOutput predict(const ContextWindow& ctx) = 0;
};

// Deterministic lookup table keyed by the linearized input. Unmatched
// inputs yield the (all-empty) fallback output.
class StubSeqExpert : public SeqExpert {
public:
    StubSeqExpert(const Ontology& ontology, std::map<std::string, std::string> table,
                  ParseMode mode = ParseMode::Lenient)
        : ontology_(ontology), table_(std::move(table)), mode_(mode) {}

    SeqExpertOutput predict(const ContextWindow& ctx) override {
        std::string key = linearize(ctx);
        auto it = table_.find(key);
        if (it == table_.end()) return SeqExpertOutput{};
        return parse_structured_output(it->second, ontology_, mode_);
    }

private:
    Ontology ontology_;
    std::map<std::string, std::string> table_;
    ParseMode mode_;
};

// Client for the sequence-expert HTTP contract:
//   POST /predict {"input": string} -> {"output": string}
// One retry per request; in-flight requests capped.
class RemoteSeqExpert : public SeqExpert {
public:
    RemoteSeqExpert(const Ontology& ontology, std::string host, int port, int timeout_ms = 5000,
                    int max_in_flight = 4, std::string bearer_token = {},
                    ParseMode mode = ParseMode::Lenient)
        : ontology_(ontology),
          host_(std::move(host)),
          port_(port),
          timeout_ms_(timeout_ms),
          in_flight_(max_in_flight > 0 ? max_in_flight : 1),
          token_(std::move(bearer_token)),
          mode_(mode) {}

    SeqExpertOutput predict(const ContextWindow& ctx) override {
        in_flight_.acquire();
        struct Release {
            std::counting_semaphore<>& sem;
            ~Release() { sem.release(); }
        } release{in_flight_};

        httplib::Client client(host_, port_);
        client.set_connection_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
        client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
        httplib::Headers headers;
        if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

        nlohmann::json body;
        body["input"] = linearize(ctx);
        std::string payload = body.dump();
        for (int attempt = 0; attempt < 2; ++attempt) {
            auto res = client.Post("/predict", headers, payload, "application/json");
            if (res && res->status == 200) {
                try {
                    nlohmann::json reply = nlohmann::json::parse(res->body);
                    return parse_structured_output(reply.at("output").get<std::string>(),
                                                   ontology_, mode_);
                } catch (const nlohmann::json::exception&) {
                    throw TransportError("sequence expert returned malformed JSON");
                }
            }
        }
        throw TransportError("sequence expert request to " + host_ + ":" +
                             std::to_string(port_) + "/predict failed after retry");
    }

private:
    Ontology ontology_;
    std::string host_;
    int port_;
    int timeout_ms_;
    std::counting_semaphore<> in_flight_;
    std::string token_;
    ParseMode mode_;
};

}  // namespace gem::seq
