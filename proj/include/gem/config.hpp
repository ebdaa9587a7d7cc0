#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gem/core/error.hpp"
#include "gem/dialogue/corpus.hpp"
#include "gem/gat/model.hpp"
#include "gem/valuegen/prompt.hpp"

namespace gem {

// Single structured run configuration. Precedence: flags > file > defaults.
// Unknown keys are rejected; validation collects field-level errors. Every
// run embeds its fully resolved config in the outputs.
struct RunConfig {
    struct Paths {
        std::string corpus;        // canonical corpus for train/track
        std::string train_corpus;  // overrides corpus for training/index
        std::string val_corpus;
        std::string eval_corpus;
        std::string checkpoint;
        std::string index;
        std::string accuracy_table;
        std::string templates_dir;
        std::string out_dir = "out";
    } paths;

    gat::GatConfig gat;
    gat::LossWeights loss_weights;

    struct Train {
        int epochs = 30;
        double learning_rate = 0.01;
        double val_fraction = 0.2;  // used when no explicit val corpus is given
    } train;

    struct Router {
        std::string classifier = "stub";  // stub | model
        std::map<std::string, std::vector<std::string>> keywords;
    } router;

    struct Retrieval {
        std::size_t k = 5;
        double tau = 0.3;
        std::string provider = "hash";  // hash | remote
        std::size_t dim = 64;
        std::string host = "127.0.0.1";
        int port = 8080;
        int timeout_ms = 5000;
        int max_in_flight = 4;
    } retrieval;

    struct Generator {
        std::string mode = "few_shot";      // zero_shot | few_shot | react
        std::string provider = "scripted";  // scripted | remote
        std::string script;                 // fixture transcript path (scripted)
        std::string default_completion = "{}";
        std::string host = "127.0.0.1";
        int port = 8081;
        int timeout_ms = 30000;
        int retries = 1;
        int max_in_flight = 4;
        int max_tokens = 256;
        double temperature = 0.0;
        std::size_t max_prompt_chars = 0;
    } generator;

    struct SeqExpertCfg {
        std::string provider = "stub";  // stub | remote
        std::string table;              // stub lookup table path (JSON object)
        std::string host = "127.0.0.1";
        int port = 8082;
        int timeout_ms = 5000;
        int max_in_flight = 4;
    } seq_expert;

    struct Seeds {
        std::uint64_t train = 1234;
        std::uint64_t eval = 7;
    } seeds;

    struct Concurrency {
        int eval_dialogues = 1;
    } concurrency;

    bool timing = true;
    bool strict = false;

    nlohmann::json sweep = nlohmann::json::array();  // list of cell overrides

    nlohmann::json snapshot;  // fully resolved config as loaded
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& scope, std::vector<std::string>& errors) {
    if (!j.is_object()) {
        errors.push_back(scope + ": expected an object");
        return;
    }
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) errors.push_back(scope + ": unknown key '" + it.key() + "'");
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& target, const std::string& scope,
                std::vector<std::string>& errors) {
    if (!j.contains(key)) return;
    try {
        target = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        errors.push_back(scope + "." + key + ": wrong type");
    }
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    std::vector<std::string> errors;
    RunConfig cfg;

    detail::reject_unknown_keys(
        j,
        {"paths", "gat", "loss_weights", "train", "router", "retrieval", "generator",
         "seq_expert", "seeds", "concurrency", "timing", "strict", "sweep"},
        "config", errors);

    if (j.contains("paths")) {
        const auto& p = j["paths"];
        detail::reject_unknown_keys(p,
                                    {"corpus", "train_corpus", "val_corpus", "eval_corpus",
                                     "checkpoint", "index", "accuracy_table", "templates_dir",
                                     "out_dir"},
                                    "paths", errors);
        detail::read_field(p, "corpus", cfg.paths.corpus, "paths", errors);
        detail::read_field(p, "train_corpus", cfg.paths.train_corpus, "paths", errors);
        detail::read_field(p, "val_corpus", cfg.paths.val_corpus, "paths", errors);
        detail::read_field(p, "eval_corpus", cfg.paths.eval_corpus, "paths", errors);
        detail::read_field(p, "checkpoint", cfg.paths.checkpoint, "paths", errors);
        detail::read_field(p, "index", cfg.paths.index, "paths", errors);
        detail::read_field(p, "accuracy_table", cfg.paths.accuracy_table, "paths", errors);
        detail::read_field(p, "templates_dir", cfg.paths.templates_dir, "paths", errors);
        detail::read_field(p, "out_dir", cfg.paths.out_dir, "paths", errors);
    }

    if (j.contains("gat")) {
        const auto& g = j["gat"];
        detail::reject_unknown_keys(g,
                                    {"layers", "heads", "hidden", "residual", "sigma",
                                     "bidirectional_edges", "context_window", "scoring",
                                     "decoder_hidden", "leaky_relu_slope"},
                                    "gat", errors);
        try {
            cfg.gat = gat::gat_config_from_json(g);
        } catch (const Error& e) {
            errors.push_back(std::string("gat: ") + e.what());
        }
    }

    if (j.contains("loss_weights")) {
        const auto& w = j["loss_weights"];
        detail::reject_unknown_keys(w, {"alpha", "beta", "gamma"}, "loss_weights", errors);
        detail::read_field(w, "alpha", cfg.loss_weights.alpha, "loss_weights", errors);
        detail::read_field(w, "beta", cfg.loss_weights.beta, "loss_weights", errors);
        detail::read_field(w, "gamma", cfg.loss_weights.gamma, "loss_weights", errors);
        try {
            cfg.loss_weights.validate();
        } catch (const Error& e) {
            errors.push_back(std::string("loss_weights: ") + e.what());
        }
    }

    if (j.contains("train")) {
        const auto& t = j["train"];
        detail::reject_unknown_keys(t, {"epochs", "learning_rate", "val_fraction"}, "train",
                                    errors);
        detail::read_field(t, "epochs", cfg.train.epochs, "train", errors);
        detail::read_field(t, "learning_rate", cfg.train.learning_rate, "train", errors);
        detail::read_field(t, "val_fraction", cfg.train.val_fraction, "train", errors);
        if (cfg.train.epochs < 0) errors.push_back("train.epochs: must be >= 0");
        if (cfg.train.val_fraction < 0.0 || cfg.train.val_fraction >= 1.0)
            errors.push_back("train.val_fraction: must lie in [0,1)");
    }

    if (j.contains("router")) {
        const auto& r = j["router"];
        detail::reject_unknown_keys(r, {"classifier", "keywords"}, "router", errors);
        detail::read_field(r, "classifier", cfg.router.classifier, "router", errors);
        detail::read_field(r, "keywords", cfg.router.keywords, "router", errors);
        if (cfg.router.classifier != "stub" && cfg.router.classifier != "model")
            errors.push_back("router.classifier: must be 'stub' or 'model'");
    }

    if (j.contains("retrieval")) {
        const auto& r = j["retrieval"];
        detail::reject_unknown_keys(
            r, {"k", "tau", "provider", "dim", "host", "port", "timeout_ms", "max_in_flight"},
            "retrieval", errors);
        detail::read_field(r, "k", cfg.retrieval.k, "retrieval", errors);
        detail::read_field(r, "tau", cfg.retrieval.tau, "retrieval", errors);
        detail::read_field(r, "provider", cfg.retrieval.provider, "retrieval", errors);
        detail::read_field(r, "dim", cfg.retrieval.dim, "retrieval", errors);
        detail::read_field(r, "host", cfg.retrieval.host, "retrieval", errors);
        detail::read_field(r, "port", cfg.retrieval.port, "retrieval", errors);
        detail::read_field(r, "timeout_ms", cfg.retrieval.timeout_ms, "retrieval", errors);
        detail::read_field(r, "max_in_flight", cfg.retrieval.max_in_flight, "retrieval", errors);
        if (cfg.retrieval.provider != "hash" && cfg.retrieval.provider != "remote")
            errors.push_back("retrieval.provider: must be 'hash' or 'remote'");
        if (cfg.retrieval.tau < -1.0 || cfg.retrieval.tau > 1.0)
            errors.push_back("retrieval.tau: must lie in [-1,1]");
        if (cfg.retrieval.dim == 0) errors.push_back("retrieval.dim: must be positive");
    }

    if (j.contains("generator")) {
        const auto& g = j["generator"];
        detail::reject_unknown_keys(g,
                                    {"mode", "provider", "script", "default_completion", "host",
                                     "port", "timeout_ms", "retries", "max_in_flight",
                                     "max_tokens", "temperature", "max_prompt_chars"},
                                    "generator", errors);
        detail::read_field(g, "mode", cfg.generator.mode, "generator", errors);
        detail::read_field(g, "provider", cfg.generator.provider, "generator", errors);
        detail::read_field(g, "script", cfg.generator.script, "generator", errors);
        detail::read_field(g, "default_completion", cfg.generator.default_completion, "generator",
                           errors);
        detail::read_field(g, "host", cfg.generator.host, "generator", errors);
        detail::read_field(g, "port", cfg.generator.port, "generator", errors);
        detail::read_field(g, "timeout_ms", cfg.generator.timeout_ms, "generator", errors);
        detail::read_field(g, "retries", cfg.generator.retries, "generator", errors);
        detail::read_field(g, "max_in_flight", cfg.generator.max_in_flight, "generator", errors);
        detail::read_field(g, "max_tokens", cfg.generator.max_tokens, "generator", errors);
        detail::read_field(g, "temperature", cfg.generator.temperature, "generator", errors);
        detail::read_field(g, "max_prompt_chars", cfg.generator.max_prompt_chars, "generator",
                           errors);
        if (cfg.generator.provider != "scripted" && cfg.generator.provider != "remote")
            errors.push_back("generator.provider: must be 'scripted' or 'remote'");
        try {
            valuegen::generation_mode_from_string(cfg.generator.mode);
        } catch (const Error&) {
            errors.push_back("generator.mode: must be 'zero_shot', 'few_shot', or 'react'");
        }
    }

    if (j.contains("seq_expert")) {
        const auto& s = j["seq_expert"];
        detail::reject_unknown_keys(
            s, {"provider", "table", "host", "port", "timeout_ms", "max_in_flight"}, "seq_expert",
            errors);
        detail::read_field(s, "provider", cfg.seq_expert.provider, "seq_expert", errors);
        detail::read_field(s, "table", cfg.seq_expert.table, "seq_expert", errors);
        detail::read_field(s, "host", cfg.seq_expert.host, "seq_expert", errors);
        detail::read_field(s, "port", cfg.seq_expert.port, "seq_expert", errors);
        detail::read_field(s, "timeout_ms", cfg.seq_expert.timeout_ms, "seq_expert", errors);
        detail::read_field(s, "max_in_flight", cfg.seq_expert.max_in_flight, "seq_expert",
                           errors);
        if (cfg.seq_expert.provider != "stub" && cfg.seq_expert.provider != "remote")
            errors.push_back("seq_expert.provider: must be 'stub' or 'remote'");
    }

    if (j.contains("seeds")) {
        const auto& s = j["seeds"];
        detail::reject_unknown_keys(s, {"train", "eval"}, "seeds", errors);
        detail::read_field(s, "train", cfg.seeds.train, "seeds", errors);
        detail::read_field(s, "eval", cfg.seeds.eval, "seeds", errors);
    }

    if (j.contains("concurrency")) {
        const auto& c = j["concurrency"];
        detail::reject_unknown_keys(c, {"eval_dialogues"}, "concurrency", errors);
        detail::read_field(c, "eval_dialogues", cfg.concurrency.eval_dialogues, "concurrency",
                           errors);
        if (cfg.concurrency.eval_dialogues < 1)
            errors.push_back("concurrency.eval_dialogues: must be >= 1");
    }

    detail::read_field(j, "timing", cfg.timing, "config", errors);
    detail::read_field(j, "strict", cfg.strict, "config", errors);
    if (j.contains("sweep")) {
        if (!j["sweep"].is_array())
            errors.push_back("sweep: expected an array of cell configurations");
        else
            cfg.sweep = j["sweep"];
    }

    if (!errors.empty()) {
        std::string msg = "configuration invalid:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    cfg.snapshot = j;
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "': " + e.what());
    }
    return run_config_from_json(j);
}

}  // namespace gem
