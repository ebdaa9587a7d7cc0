#pragma once

#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "gem/core/error.hpp"
#include "gem/core/text.hpp"

namespace gem::valuegen {

struct GenerationParams {
    int max_tokens = 256;
    double temperature = 0.0;
};

class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual std::string complete(const std::string& prompt, const GenerationParams& params) = 0;
};

// Replays a fixture transcript: an ordered list of (prompt-hash, completion)
// pairs. Entries for the same hash are consumed first-in-first-out, so
// replay stays deterministic even when independent dialogues interleave.
// An empty hash matches any prompt; prompts with no entry fall back to
// default_completion when one is set, otherwise raise GenerationError.
class ScriptedLlmClient : public LlmClient {
public:
    struct ScriptEntry {
        std::string prompt_hash;  // fnv1a64 hex of the exact prompt; "" matches anything
        std::string completion;
    };

    explicit ScriptedLlmClient(std::vector<ScriptEntry> entries = {},
                               std::string default_completion = {},
                               bool has_default = false)
        : has_default_(has_default), default_completion_(std::move(default_completion)) {
        for (auto& e : entries) {
            if (e.prompt_hash.empty())
                wildcard_.push_back(std::move(e.completion));
            else
                by_hash_[e.prompt_hash].push_back(std::move(e.completion));
        }
    }

    static ScriptedLlmClient with_default(std::string completion) {
        return ScriptedLlmClient({}, std::move(completion), true);
    }

    // Fixture file: JSON list of {"prompt_hash": ..., "completion": ...}.
    static ScriptedLlmClient load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
        nlohmann::json doc;
        try {
            in >> doc;
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("script '" + path.string() + "': " + e.what());
        }
        if (!doc.is_array()) throw ParseError("script: expected a JSON array");
        std::vector<ScriptEntry> entries;
        for (const auto& j : doc) {
            ScriptEntry e;
            e.prompt_hash = j.value("prompt_hash", std::string());
            e.completion = j.at("completion").get<std::string>();
            entries.push_back(std::move(e));
        }
        return ScriptedLlmClient(std::move(entries));
    }

    static void save(const std::vector<ScriptEntry>& entries,
                     const std::filesystem::path& path) {
        nlohmann::json doc = nlohmann::json::array();
        for (const auto& e : entries)
            doc.push_back({{"prompt_hash", e.prompt_hash}, {"completion", e.completion}});
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path);
        if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
        out << doc.dump(2) << "\n";
    }

    static ScriptEntry entry_for(const std::string& prompt, std::string completion) {
        return ScriptEntry{fnv1a64_hex(prompt), std::move(completion)};
    }

    std::string complete(const std::string& prompt, const GenerationParams&) override {
        std::lock_guard<std::mutex> lock(*mutex_);
        std::string hash = fnv1a64_hex(prompt);
        auto it = by_hash_.find(hash);
        if (it != by_hash_.end() && !it->second.empty()) {
            std::string completion = std::move(it->second.front());
            it->second.pop_front();
            return completion;
        }
        if (!wildcard_.empty()) {
            std::string completion = std::move(wildcard_.front());
            wildcard_.pop_front();
            return completion;
        }
        if (has_default_) return default_completion_;
        throw GenerationError("scripted client has no completion for prompt hash " + hash +
                              " (prompt starts with '" + prompt.substr(0, 60) + "')");
    }

private:
    std::unique_ptr<std::mutex> mutex_ = std::make_unique<std::mutex>();
    std::map<std::string, std::deque<std::string>> by_hash_;
    std::deque<std::string> wildcard_;
    bool has_default_ = false;
    std::string default_completion_;
};

// Client for the completion HTTP contract:
//   POST /complete {"prompt": s, "max_tokens": n, "temperature": x}
//     -> {"completion": s}
// Bounded retries; an Authorization header is attached when a token is set
// (credentials come from the environment, never from config files).
class RemoteLlmClient : public LlmClient {
public:
    RemoteLlmClient(std::string host, int port, int timeout_ms = 30000, int retries = 1,
                    int max_in_flight = 4, std::string bearer_token = {})
        : host_(std::move(host)),
          port_(port),
          timeout_ms_(timeout_ms),
          retries_(retries >= 0 ? retries : 0),
          in_flight_(max_in_flight > 0 ? max_in_flight : 1),
          token_(std::move(bearer_token)) {}

    std::string complete(const std::string& prompt, const GenerationParams& params) override {
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
        body["prompt"] = prompt;
        body["max_tokens"] = params.max_tokens;
        body["temperature"] = params.temperature;
        std::string payload = body.dump();

        for (int attempt = 0; attempt <= retries_; ++attempt) {
            auto res = client.Post("/complete", headers, payload, "application/json");
            if (res && res->status == 200) {
                try {
                    nlohmann::json reply = nlohmann::json::parse(res->body);
                    return reply.at("completion").get<std::string>();
                } catch (const nlohmann::json::exception&) {
                    throw TransportError("completion service returned malformed JSON");
                }
            }
        }
        throw TransportError("completion request to " + host_ + ":" + std::to_string(port_) +
                             "/complete failed after " + std::to_string(retries_ + 1) +
                             " attempts");
    }

private:
    std::string host_;
    int port_;
    int timeout_ms_;
    int retries_;
    std::counting_semaphore<> in_flight_;
    std::string token_;
};

}  // namespace gem::valuegen
