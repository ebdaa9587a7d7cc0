#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "gem/core/error.hpp"
#include "gem/core/text.hpp"

namespace gem::retrieval {

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<double> embed(const std::string& text) = 0;

    virtual std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) {
        std::vector<std::vector<double>> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embed(t));
        return out;
    }
};

// Deterministic feature-hashing embedder for offline runs and tests: each
// token lands in a signed bucket chosen by a platform-stable hash, then the
// vector is L2-normalized.
class HashEmbeddingProvider : public EmbeddingProvider {
public:
    explicit HashEmbeddingProvider(std::size_t dim) : dim_(dim) {
        if (dim == 0) throw ContractError("hash embedding: dimension must be positive");
    }

    std::size_t dimension() const override { return dim_; }

    std::vector<double> embed(const std::string& text) override {
        std::vector<double> v(dim_, 0.0);
        for (const auto& token : tokenize(text)) {
            std::uint64_t h = fnv1a64(token);
            std::size_t bucket = static_cast<std::size_t>(h % dim_);
            double sign = ((h >> 32) & 1) ? 1.0 : -1.0;
            v[bucket] += sign;
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        if (norm > 0.0) {
            norm = std::sqrt(norm);
            for (double& x : v) x /= norm;
        }
        return v;
    }

private:
    std::size_t dim_;
};

// Client for the embedding HTTP contract:
//   POST /embed {"texts": [...]} -> {"vectors": [[...], ...]}
// In-flight requests are capped; each request gets one retry.
class RemoteEmbeddingClient : public EmbeddingProvider {
public:
    RemoteEmbeddingClient(std::string host, int port, std::size_t dim, int timeout_ms = 5000,
                          int max_in_flight = 4, std::string bearer_token = {})
        : host_(std::move(host)),
          port_(port),
          dim_(dim),
          timeout_ms_(timeout_ms),
          in_flight_(max_in_flight > 0 ? max_in_flight : 1),
          token_(std::move(bearer_token)) {}

    std::size_t dimension() const override { return dim_; }

    std::vector<double> embed(const std::string& text) override {
        return embed_batch({text}).front();
    }

    std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) override {
        if (texts.empty()) return {};
        nlohmann::json body;
        body["texts"] = texts;
        nlohmann::json reply = post_json("/embed", body);
        if (!reply.contains("vectors") || !reply["vectors"].is_array() ||
            reply["vectors"].size() != texts.size())
            throw TransportError("embedding service returned a malformed vector list");
        std::vector<std::vector<double>> out;
        out.reserve(texts.size());
        for (const auto& jv : reply["vectors"]) {
            auto v = jv.get<std::vector<double>>();
            if (v.size() != dim_)
                throw TransportError("embedding service returned dimension " +
                                     std::to_string(v.size()) + ", expected " +
                                     std::to_string(dim_));
            out.push_back(std::move(v));
        }
        return out;
    }

private:
    nlohmann::json post_json(const std::string& path, const nlohmann::json& body) {
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

        std::string payload = body.dump();
        for (int attempt = 0; attempt < 2; ++attempt) {
            auto res = client.Post(path, headers, payload, "application/json");
            if (res && res->status == 200) {
                try {
                    return nlohmann::json::parse(res->body);
                } catch (const nlohmann::json::parse_error&) {
                    throw TransportError("embedding service returned invalid JSON");
                }
            }
        }
        throw TransportError("embedding request to " + host_ + ":" + std::to_string(port_) +
                             path + " failed after retry");
    }

    std::string host_;
    int port_;
    std::size_t dim_;
    int timeout_ms_;
    std::counting_semaphore<> in_flight_;
    std::string token_;
};

}  // namespace gem::retrieval
