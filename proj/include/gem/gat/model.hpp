#pragma once

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gem/autodiff/checkpoint.hpp"
#include "gem/autodiff/optimizer.hpp"
#include "gem/autodiff/tape.hpp"
#include "gem/core/error.hpp"
#include "gem/dialogue/types.hpp"
#include "gem/gat/graph.hpp"

namespace gem::gat {

enum class Activation { Elu, LeakyRelu, Identity };

inline Activation activation_from_string(const std::string& s) {
    if (s == "elu") return Activation::Elu;
    if (s == "leaky_relu") return Activation::LeakyRelu;
    if (s == "identity") return Activation::Identity;
    throw ConfigError("unknown activation '" + s + "'");
}

inline std::string activation_to_string(Activation a) {
    switch (a) {
        case Activation::Elu: return "elu";
        case Activation::LeakyRelu: return "leaky_relu";
        case Activation::Identity: return "identity";
    }
    return "elu";
}

// Attention scoring variant: Gat applies the nonlinearity after the
// attention dot product, GatV2 before it.
enum class AttentionScoring { Gat, GatV2 };

inline AttentionScoring scoring_from_string(const std::string& s) {
    if (s == "gat") return AttentionScoring::Gat;
    if (s == "gatv2") return AttentionScoring::GatV2;
    throw ConfigError("unknown attention scoring '" + s + "'");
}

inline std::string scoring_to_string(AttentionScoring s) {
    return s == AttentionScoring::Gat ? "gat" : "gatv2";
}

struct GatConfig {
    int layers = 3;
    int heads = 12;
    int hidden = 512;
    bool residual = true;
    Activation sigma = Activation::Elu;
    bool bidirectional_edges = false;
    WindowSize context_window = WindowSize::full();
    AttentionScoring scoring = AttentionScoring::Gat;
    int decoder_hidden = 64;
    double leaky_relu_slope = 0.2;

    void validate() const {
        if (layers < 1) throw ConfigError("gat: layers must be >= 1");
        if (heads < 1) throw ConfigError("gat: heads must be >= 1");
        if (hidden < 1) throw ConfigError("gat: hidden must be >= 1");
        if (decoder_hidden < 1) throw ConfigError("gat: decoder_hidden must be >= 1");
    }

    std::size_t layer_input_dim(int layer, std::size_t input_dim) const {
        return layer == 0 ? input_dim
                          : static_cast<std::size_t>(heads) * static_cast<std::size_t>(hidden);
    }
    std::size_t layer_output_dim(int layer) const {
        bool final_layer = layer == layers - 1;
        return final_layer ? static_cast<std::size_t>(hidden)
                           : static_cast<std::size_t>(heads) * static_cast<std::size_t>(hidden);
    }
};

struct LossWeights {
    double alpha = 1.0;  // intent
    double beta = 0.5;   // domain
    double gamma = 2.0;  // slot

    void validate() const {
        if (alpha < 0 || beta < 0 || gamma < 0)
            throw ConfigError("loss weights must be non-negative");
        if (alpha + beta + gamma <= 0.0) throw ConfigError("loss weights must not all be zero");
    }
};

namespace names {
inline std::string head_weight(int layer, int head) {
    return "gat.l" + std::to_string(layer) + ".h" + std::to_string(head) + ".W";
}
inline std::string head_attention(int layer, int head) {
    return "gat.l" + std::to_string(layer) + ".h" + std::to_string(head) + ".a";
}
inline std::string residual_weight(int layer) {
    return "gat.l" + std::to_string(layer) + ".res.W";
}
inline std::string decoder(const std::string& task, const std::string& part) {
    return "dec." + task + "." + part;
}
}  // namespace names

// Graph-attention expert: stacked multi-head attention layers plus three
// parallel one-hidden-layer MLP decoders for intent, domain, and slot
// multi-label prediction.
struct GatModel {
    GatConfig config;
    std::size_t input_dim = 0;
    std::vector<std::string> intent_labels;
    std::vector<std::string> domain_labels;
    std::vector<std::string> slot_labels;
    autodiff::ParameterSet params;

    static GatModel init(const GatConfig& config, std::size_t input_dim,
                         const Ontology& ontology, std::uint64_t seed) {
        config.validate();
        if (input_dim == 0) throw ContractError("gat: input dimension must be positive");
        GatModel model;
        model.config = config;
        model.input_dim = input_dim;
        model.intent_labels.assign(ontology.intents.begin(), ontology.intents.end());
        model.domain_labels.assign(ontology.domains.begin(), ontology.domains.end());
        model.slot_labels.assign(ontology.slots.begin(), ontology.slots.end());

        std::mt19937_64 rng(seed);
        std::size_t fp = static_cast<std::size_t>(config.hidden);
        for (int l = 0; l < config.layers; ++l) {
            std::size_t fin = config.layer_input_dim(l, input_dim);
            for (int k = 0; k < config.heads; ++k) {
                model.params.create(names::head_weight(l, k),
                                    autodiff::glorot_init(fp, fin, rng));
                double limit = std::sqrt(6.0 / static_cast<double>(2 * fp + 1));
                model.params.create(names::head_attention(l, k),
                                    autodiff::random_uniform({2 * fp}, -limit, limit, rng));
            }
            if (config.residual && fin != config.layer_output_dim(l)) {
                model.params.create(names::residual_weight(l),
                                    autodiff::glorot_init(config.layer_output_dim(l), fin, rng));
            }
        }
        std::size_t dh = static_cast<std::size_t>(config.decoder_hidden);
        auto make_decoder = [&](const std::string& task, std::size_t labels) {
            model.params.create(names::decoder(task, "W1"), autodiff::glorot_init(dh, fp, rng));
            model.params.create(names::decoder(task, "b1"), autodiff::Tensor::zeros({dh}));
            model.params.create(names::decoder(task, "W2"),
                                autodiff::glorot_init(labels, dh, rng));
            model.params.create(names::decoder(task, "b2"), autodiff::Tensor::zeros({labels}));
        };
        make_decoder("intent", model.intent_labels.size());
        make_decoder("domain", model.domain_labels.size());
        make_decoder("slot", model.slot_labels.size());
        return model;
    }
};

namespace detail {

inline autodiff::Var apply_activation(autodiff::Tape& tape, autodiff::Var x, Activation act,
                                      double slope) {
    switch (act) {
        case Activation::Elu: return tape.elu(x);
        case Activation::LeakyRelu: return tape.leaky_relu(x, slope);
        case Activation::Identity: return x;
    }
    return x;
}

}  // namespace detail

// One attention head, pre-activation: softmax-normalized attention over each
// destination's neighborhood, then the weighted sum of transformed sources.
inline autodiff::Var gat_head_forward(autodiff::Tape& tape, autodiff::Var h, autodiff::Var W,
                                      autodiff::Var a, const DialogueGraph& graph, double slope,
                                      AttentionScoring scoring,
                                      autodiff::Var* attention_out = nullptr) {
    auto srcs = graph.sources();
    auto dsts = graph.destinations();
    std::size_t fp = tape.value(W).rows();

    autodiff::Var wh = tape.matmul(h, tape.transpose(W));         // [N, F']
    autodiff::Var dst_feats = tape.gather_rows(wh, dsts);         // [E, F'] (W h_i)
    autodiff::Var src_feats = tape.gather_rows(wh, srcs);         // [E, F'] (W h_j)
    autodiff::Var cat = tape.concat_last_dim(dst_feats, src_feats);
    autodiff::Var a_col = tape.reshape(a, {2 * fp, 1});

    autodiff::Var scores;
    if (scoring == AttentionScoring::Gat) {
        scores = tape.leaky_relu(tape.reshape(tape.matmul(cat, a_col), {srcs.size()}), slope);
    } else {
        scores = tape.reshape(tape.matmul(tape.leaky_relu(cat, slope), a_col), {srcs.size()});
    }
    autodiff::Var alpha = tape.segment_softmax(scores, dsts);
    if (attention_out) *attention_out = alpha;
    autodiff::Var messages = tape.scale_rows(src_feats, alpha);
    return tape.segment_sum(messages, dsts, graph.node_count);
}

// Single-head attention layer with activation applied.
inline autodiff::Var gat_layer_forward(autodiff::Tape& tape, autodiff::Var h, autodiff::Var W,
                                       autodiff::Var a, const DialogueGraph& graph, double slope,
                                       Activation sigma = Activation::Elu,
                                       AttentionScoring scoring = AttentionScoring::Gat) {
    graph.validate();
    autodiff::Var agg = gat_head_forward(tape, h, W, a, graph, slope, scoring);
    return detail::apply_activation(tape, agg, sigma, slope);
}

// Full multi-head layer: intermediate layers concatenate per-head activated
// outputs, the final layer averages head aggregates before the activation.
// Residual adds the layer input (projected when shapes differ).
inline autodiff::Var multi_head_forward(autodiff::Tape& tape, autodiff::Var h,
                                        const std::map<std::string, autodiff::Var>& bound,
                                        const GatConfig& config, int layer,
                                        const DialogueGraph& graph, bool final_layer,
                                        std::vector<autodiff::Var>* attention_per_head = nullptr) {
    std::vector<autodiff::Var> heads;
    heads.reserve(static_cast<std::size_t>(config.heads));
    for (int k = 0; k < config.heads; ++k) {
        autodiff::Var attn;
        autodiff::Var agg =
            gat_head_forward(tape, h, bound.at(names::head_weight(layer, k)),
                             bound.at(names::head_attention(layer, k)), graph,
                             config.leaky_relu_slope, config.scoring,
                             attention_per_head ? &attn : nullptr);
        if (attention_per_head) attention_per_head->push_back(attn);
        heads.push_back(agg);
    }

    autodiff::Var out;
    if (final_layer) {
        autodiff::Var mean = tape.mean_over_heads(heads);
        out = detail::apply_activation(tape, mean, config.sigma, config.leaky_relu_slope);
    } else {
        autodiff::Var acc =
            detail::apply_activation(tape, heads[0], config.sigma, config.leaky_relu_slope);
        for (std::size_t k = 1; k < heads.size(); ++k)
            acc = tape.concat_last_dim(
                acc,
                detail::apply_activation(tape, heads[k], config.sigma, config.leaky_relu_slope));
        out = acc;
    }

    if (config.residual) {
        auto res_name = names::residual_weight(layer);
        if (bound.count(res_name)) {
            out = tape.add(out, tape.matmul(h, tape.transpose(bound.at(res_name))));
        } else if (tape.value(h).same_shape(tape.value(out))) {
            out = tape.add(out, h);
        }
        // If shapes differ and no projection exists the residual is skipped;
        // init() always creates the projection, so this only affects
        // hand-built parameter sets.
    }
    return out;
}

struct GatForwardVars {
    autodiff::Var final_features;  // [N, hidden]
    autodiff::Var intent_logits;
    autodiff::Var domain_logits;
    autodiff::Var slot_logits;
    std::vector<std::vector<autodiff::Var>> attention;  // [layer][head] -> [E]
};

inline autodiff::Var decoder_forward(autodiff::Tape& tape,
                                     const std::map<std::string, autodiff::Var>& bound,
                                     const std::string& task, autodiff::Var features) {
    autodiff::Var h1 = tape.add(
        tape.matmul(features, tape.transpose(bound.at(names::decoder(task, "W1")))),
        bound.at(names::decoder(task, "b1")));
    autodiff::Var h1a = tape.elu(h1);
    return tape.add(tape.matmul(h1a, tape.transpose(bound.at(names::decoder(task, "W2")))),
                    bound.at(names::decoder(task, "b2")));
}

inline GatForwardVars gat_forward(autodiff::Tape& tape,
                                  const std::map<std::string, autodiff::Var>& bound,
                                  const GatConfig& config, const DialogueGraph& graph,
                                  bool record_attention = false) {
    graph.validate();
    GatForwardVars out;
    autodiff::Var h = tape.input(graph.node_features);
    for (int l = 0; l < config.layers; ++l) {
        std::vector<autodiff::Var> attn;
        h = multi_head_forward(tape, h, bound, config, l, graph, l == config.layers - 1,
                               record_attention ? &attn : nullptr);
        if (record_attention) out.attention.push_back(std::move(attn));
    }
    out.final_features = h;
    out.intent_logits = decoder_forward(tape, bound, "intent", h);
    out.domain_logits = decoder_forward(tape, bound, "domain", h);
    out.slot_logits = decoder_forward(tape, bound, "slot", h);
    return out;
}

struct NodePredictions {
    // Per node, per label, sigmoid probabilities in label order.
    std::vector<std::vector<double>> intent_probs;
    std::vector<std::vector<double>> domain_probs;
    std::vector<std::vector<double>> slot_probs;
};

inline std::set<std::string> threshold_labels(const std::vector<double>& probs,
                                              const std::vector<std::string>& labels,
                                              double threshold = 0.5) {
    std::set<std::string> out;
    for (std::size_t i = 0; i < probs.size(); ++i)
        if (probs[i] > threshold) out.insert(labels[i]);
    return out;
}

inline NodePredictions predict(const GatModel& model, const DialogueGraph& graph) {
    if (graph.node_features.cols() != model.input_dim)
        throw ContractError("predict: graph feature dimension " +
                            std::to_string(graph.node_features.cols()) +
                            " does not match model input dimension " +
                            std::to_string(model.input_dim));
    autodiff::Tape tape;
    auto bound = model.params.bind(tape);
    GatForwardVars fwd = gat_forward(tape, bound, model.config, graph);

    auto to_probs = [&](autodiff::Var logits) {
        const autodiff::Tensor& t = tape.value(tape.sigmoid(logits));
        std::vector<std::vector<double>> rows(t.rows());
        for (std::size_t i = 0; i < t.rows(); ++i) {
            rows[i].resize(t.cols());
            for (std::size_t j = 0; j < t.cols(); ++j) rows[i][j] = t.at(i, j);
        }
        return rows;
    };
    NodePredictions preds;
    preds.intent_probs = to_probs(fwd.intent_logits);
    preds.domain_probs = to_probs(fwd.domain_logits);
    preds.slot_probs = to_probs(fwd.slot_logits);
    return preds;
}

struct TurnPrediction {
    std::set<std::string> intents;
    std::set<std::string> domains;
    std::set<std::string> slots;
};

// Prediction for the current (final) node of a context window.
inline TurnPrediction predict_turn(const GatModel& model, const ContextWindow& ctx,
                                   retrieval::EmbeddingProvider& provider) {
    DialogueGraph graph = build_graph(ctx, provider, model.config.bidirectional_edges);
    NodePredictions preds = predict(model, graph);
    std::size_t last = graph.node_count - 1;
    TurnPrediction out;
    out.intents = threshold_labels(preds.intent_probs[last], model.intent_labels);
    out.domains = threshold_labels(preds.domain_probs[last], model.domain_labels);
    out.slots = threshold_labels(preds.slot_probs[last], model.slot_labels);
    return out;
}

struct MultitaskLossVars {
    autodiff::Var total;
    autodiff::Var intent;
    autodiff::Var domain;
    autodiff::Var slot;
};

// Normalized weighted sum of the three per-task BCE losses:
// (alpha*L_intent + beta*L_domain + gamma*L_slot) / (alpha+beta+gamma).
inline MultitaskLossVars multitask_loss(autodiff::Tape& tape, const GatForwardVars& fwd,
                                        const autodiff::Tensor& intent_targets,
                                        const autodiff::Tensor& domain_targets,
                                        const autodiff::Tensor& slot_targets,
                                        const std::vector<double>& user_mask,
                                        const LossWeights& w) {
    w.validate();
    MultitaskLossVars out;
    out.intent = tape.bce_with_logits(fwd.intent_logits, intent_targets, user_mask);
    out.domain = tape.bce_with_logits(fwd.domain_logits, domain_targets, user_mask);
    out.slot = tape.bce_with_logits(fwd.slot_logits, slot_targets, user_mask);
    double denom = w.alpha + w.beta + w.gamma;
    autodiff::Var weighted = tape.add(
        tape.add(tape.scale(out.intent, w.alpha), tape.scale(out.domain, w.beta)),
        tape.scale(out.slot, w.gamma));
    out.total = tape.scale(weighted, 1.0 / denom);
    return out;
}

inline autodiff::Tensor multi_hot(const std::set<std::string>& gold,
                                  const std::vector<std::string>& labels) {
    autodiff::Tensor t = autodiff::Tensor::zeros({1, labels.size()});
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (gold.count(labels[i])) t.values[i] = 1.0;
    return t;
}

inline autodiff::Tensor multi_hot_rows(const std::vector<std::set<std::string>>& golds,
                                       const std::vector<std::string>& labels) {
    autodiff::Tensor t = autodiff::Tensor::zeros({golds.size(), labels.size()});
    for (std::size_t r = 0; r < golds.size(); ++r)
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (golds[r].count(labels[i])) t.at(r, i) = 1.0;
    return t;
}

// ---- persistence ------------------------------------------------------

inline nlohmann::json gat_config_to_json(const GatConfig& c) {
    nlohmann::json j;
    j["layers"] = c.layers;
    j["heads"] = c.heads;
    j["hidden"] = c.hidden;
    j["residual"] = c.residual;
    j["sigma"] = activation_to_string(c.sigma);
    j["bidirectional_edges"] = c.bidirectional_edges;
    j["context_window"] = c.context_window.is_full() ? nlohmann::json("full")
                                                     : nlohmann::json(c.context_window.value);
    j["scoring"] = scoring_to_string(c.scoring);
    j["decoder_hidden"] = c.decoder_hidden;
    j["leaky_relu_slope"] = c.leaky_relu_slope;
    return j;
}

inline GatConfig gat_config_from_json(const nlohmann::json& j) {
    GatConfig c;
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.hidden = j.value("hidden", c.hidden);
    c.residual = j.value("residual", c.residual);
    if (j.contains("sigma")) c.sigma = activation_from_string(j["sigma"].get<std::string>());
    c.bidirectional_edges = j.value("bidirectional_edges", c.bidirectional_edges);
    if (j.contains("context_window")) {
        const auto& w = j["context_window"];
        c.context_window =
            w.is_string() ? WindowSize::full() : WindowSize::exchanges(w.get<int>());
    }
    if (j.contains("scoring")) c.scoring = scoring_from_string(j["scoring"].get<std::string>());
    c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
    c.leaky_relu_slope = j.value("leaky_relu_slope", c.leaky_relu_slope);
    c.validate();
    return c;
}

// Binary parameter checkpoint plus a JSON sidecar describing the
// architecture and label orderings.
inline void save_model(const GatModel& model, const std::filesystem::path& path) {
    autodiff::save_checkpoint(model.params, path);
    nlohmann::json side;
    side["format"] = "gem.gat_model";
    side["version"] = 1;
    side["config"] = gat_config_to_json(model.config);
    side["input_dim"] = model.input_dim;
    side["intent_labels"] = model.intent_labels;
    side["domain_labels"] = model.domain_labels;
    side["slot_labels"] = model.slot_labels;
    std::ofstream out(path.string() + ".json");
    if (!out) throw IoError("cannot open '" + path.string() + ".json' for writing");
    out << side.dump(2) << "\n";
}

inline GatModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path.string() + ".json");
    if (!in) throw IoError("cannot open '" + path.string() + ".json' for reading");
    nlohmann::json side;
    try {
        in >> side;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("model sidecar '" + path.string() + ".json': " + e.what());
    }
    if (side.value("format", std::string()) != "gem.gat_model")
        throw ParseError("model sidecar: unrecognized format marker");
    GatModel model;
    model.config = gat_config_from_json(side.at("config"));
    model.input_dim = side.at("input_dim").get<std::size_t>();
    model.intent_labels = side.at("intent_labels").get<std::vector<std::string>>();
    model.domain_labels = side.at("domain_labels").get<std::vector<std::string>>();
    model.slot_labels = side.at("slot_labels").get<std::vector<std::string>>();
    model.params = autodiff::load_checkpoint(path);
    return model;
}

}  // namespace gem::gat
