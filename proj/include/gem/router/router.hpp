#pragma once

#include <iomanip>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gem/core/error.hpp"
#include "gem/core/text.hpp"
#include "gem/dialogue/corpus.hpp"
#include "gem/dialogue/types.hpp"
#include "gem/gat/model.hpp"

namespace gem::router {

enum class ExpertKind { Gnn, Seq };

inline const char* expert_name(ExpertKind k) { return k == ExpertKind::Gnn ? "gnn" : "seq"; }

class DomainClassifier {
public:
    virtual ~DomainClassifier() = default;
    // Active domains for the current utterance given the prior turns.
    virtual std::set<std::string> classify(const std::vector<Turn>& history,
                                           const std::string& utterance) = 0;
};

// Keyword lookup for offline runs: a domain is active when any of its
// keywords occurs as a word in the current utterance.
class StubDomainClassifier : public DomainClassifier {
public:
    StubDomainClassifier(const Ontology& ontology,
                         std::map<std::string, std::vector<std::string>> keywords)
        : keywords_(std::move(keywords)) {
        for (const auto& [domain, words] : keywords_) {
            (void)words;
            if (!ontology.has_domain(domain))
                throw ConfigError("domain classifier: unknown domain '" + domain + "'");
        }
    }

    // Default map: each domain triggered by its own name.
    static StubDomainClassifier with_domain_names(const Ontology& ontology) {
        std::map<std::string, std::vector<std::string>> kw;
        for (const auto& d : ontology.domains) kw[d] = {d};
        return StubDomainClassifier(ontology, std::move(kw));
    }

    std::set<std::string> classify(const std::vector<Turn>& /*history*/,
                                   const std::string& utterance) override {
        std::set<std::string> out;
        for (const auto& [domain, words] : keywords_) {
            for (const auto& word : words) {
                if (contains_word(utterance, word)) {
                    out.insert(domain);
                    break;
                }
            }
        }
        return out;
    }

private:
    std::map<std::string, std::vector<std::string>> keywords_;
};

// Uses the graph expert's domain decoder head on the current turn.
class ModelDomainClassifier : public DomainClassifier {
public:
    ModelDomainClassifier(const gat::GatModel& model, retrieval::EmbeddingProvider& provider)
        : model_(model), provider_(provider) {}

    std::set<std::string> classify(const std::vector<Turn>& history,
                                   const std::string& utterance) override {
        ContextWindow ctx;
        ctx.window = model_.config.context_window;
        Turn current;
        current.speaker = Speaker::User;
        current.text = utterance;
        if (!model_.config.context_window.is_full()) {
            std::size_t keep = 2 * static_cast<std::size_t>(model_.config.context_window.value);
            std::size_t start = history.size() > keep ? history.size() - keep : 0;
            ctx.turns.assign(history.begin() + static_cast<std::ptrdiff_t>(start), history.end());
        } else {
            ctx.turns = history;
        }
        ctx.turns.push_back(std::move(current));
        return gat::predict_turn(model_, ctx, provider_).domains;
    }

private:
    const gat::GatModel& model_;
    retrieval::EmbeddingProvider& provider_;
};

// Per-domain validation slot accuracies for the two experts.
class AccuracyTable {
public:
    struct Entry {
        double gnn = 0.0;
        double seq = 0.0;
        bool missing = false;  // no validation turns for this domain
    };

    AccuracyTable() = default;

    void set(const std::string& domain, double acc_gnn, double acc_seq) {
        if (acc_gnn < 0.0 || acc_gnn > 1.0 || acc_seq < 0.0 || acc_seq > 1.0)
            throw ContractError("accuracy table: values must lie in [0,1]");
        entries_[domain] = Entry{acc_gnn, acc_seq, false};
    }

    void set_missing(const std::string& domain) { entries_[domain] = Entry{0.0, 0.0, true}; }

    bool has(const std::string& domain) const {
        auto it = entries_.find(domain);
        return it != entries_.end() && !it->second.missing;
    }

    const Entry& at(const std::string& domain) const {
        auto it = entries_.find(domain);
        if (it == entries_.end())
            throw CalibrationError("accuracy table has no entry for domain '" + domain + "'");
        if (it->second.missing)
            throw CalibrationError("accuracy table entry for domain '" + domain +
                                   "' is missing (no validation turns)");
        return it->second;
    }

    const std::map<std::string, Entry>& entries() const { return entries_; }

    void validate_against(const Ontology& ontology) const {
        for (const auto& d : ontology.domains)
            if (!entries_.count(d))
                throw CalibrationError("accuracy table lacks ontology domain '" + d + "'");
    }

private:
    std::map<std::string, Entry> entries_;
};

struct RouteDecision {
    ExpertKind chosen = ExpertKind::Gnn;
    int votes_gnn = 0;
    int votes_seq = 0;
    std::set<std::string> domains;
};

// Domain-weighted voting: each classified domain votes for the expert with
// strictly higher accuracy (ties vote SEQ); the final comparison routes to
// GNN when votes_gnn >= votes_seq, so an empty domain set routes to GNN.
inline RouteDecision route(const std::set<std::string>& domains, const AccuracyTable& table) {
    RouteDecision decision;
    decision.domains = domains;
    for (const auto& d : domains) {
        const AccuracyTable::Entry& e = table.at(d);
        if (e.gnn > e.seq)
            ++decision.votes_gnn;
        else
            ++decision.votes_seq;
    }
    decision.chosen =
        decision.votes_gnn >= decision.votes_seq ? ExpertKind::Gnn : ExpertKind::Seq;
    return decision;
}

// One expert's slot prediction for a validation turn, with the gold labels.
struct CalibrationTurn {
    std::set<std::string> gold_domains;
    std::set<std::string> gold_slots;
    std::set<std::string> predicted_slots_gnn;
    std::set<std::string> predicted_slots_seq;
};

// Per-domain slot accuracy over the turns whose gold domain set contains the
// domain; multi-domain turns count toward each of their domains.
inline AccuracyTable calibrate(const std::vector<CalibrationTurn>& turns,
                               const Ontology& ontology) {
    std::map<std::string, std::size_t> total, ok_gnn, ok_seq;
    for (const auto& turn : turns) {
        for (const auto& d : turn.gold_domains) {
            if (!ontology.has_domain(d))
                throw CalibrationError("calibrate: gold domain '" + d + "' not in ontology");
            ++total[d];
            if (turn.predicted_slots_gnn == turn.gold_slots) ++ok_gnn[d];
            if (turn.predicted_slots_seq == turn.gold_slots) ++ok_seq[d];
        }
    }
    AccuracyTable table;
    for (const auto& d : ontology.domains) {
        auto it = total.find(d);
        if (it == total.end() || it->second == 0) {
            table.set_missing(d);
        } else {
            double n = static_cast<double>(it->second);
            table.set(d, static_cast<double>(ok_gnn[d]) / n,
                      static_cast<double>(ok_seq[d]) / n);
        }
    }
    return table;
}

struct DomainRoutingShare {
    std::string domain;
    std::size_t turns = 0;
    double gnn_pct = 0.0;
    double seq_pct = 0.0;
};

// For each domain, the share of turns containing that domain that each
// expert received. Shares per domain sum to 100%.
inline std::vector<DomainRoutingShare> routing_report(
    const std::vector<RouteDecision>& decisions) {
    if (decisions.empty()) throw ContractError("routing_report: no decisions");
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // domain -> (gnn, seq)
    for (const auto& dec : decisions) {
        for (const auto& d : dec.domains) {
            auto& c = counts[d];
            if (dec.chosen == ExpertKind::Gnn)
                ++c.first;
            else
                ++c.second;
        }
    }
    std::vector<DomainRoutingShare> report;
    for (const auto& [domain, c] : counts) {
        DomainRoutingShare share;
        share.domain = domain;
        share.turns = c.first + c.second;
        share.gnn_pct = 100.0 * static_cast<double>(c.first) / static_cast<double>(share.turns);
        share.seq_pct = 100.0 * static_cast<double>(c.second) / static_cast<double>(share.turns);
        report.push_back(share);
    }
    return report;
}

// ---- persistence ------------------------------------------------------

// Small tabular format: "domain,acc_gnn,acc_seq"; missing entries keep
// empty value fields.
inline std::string accuracy_table_to_csv(const AccuracyTable& table) {
    std::ostringstream out;
    out << "domain,acc_gnn,acc_seq\n";
    out << std::setprecision(17);
    for (const auto& [domain, e] : table.entries()) {
        if (e.missing)
            out << domain << ",,\n";
        else
            out << domain << "," << e.gnn << "," << e.seq << "\n";
    }
    return out.str();
}

inline AccuracyTable accuracy_table_from_csv(const std::string& csv) {
    AccuracyTable table;
    auto lines = split(csv, '\n');
    if (lines.empty() || trim(lines[0]) != "domain,acc_gnn,acc_seq")
        throw ParseError("accuracy table: missing or unrecognized header");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::string line = trim(lines[i]);
        if (line.empty()) continue;
        auto fields = split(line, ',');
        if (fields.size() != 3)
            throw ParseError("accuracy table: malformed line '" + line + "'");
        std::string domain = trim(fields[0]);
        std::string g = trim(fields[1]), s = trim(fields[2]);
        if (g.empty() && s.empty()) {
            table.set_missing(domain);
        } else {
            try {
                table.set(domain, std::stod(g), std::stod(s));
            } catch (const std::exception&) {
                throw ParseError("accuracy table: bad accuracy values in line '" + line + "'");
            }
        }
    }
    return table;
}

inline std::string routing_report_to_csv(const std::vector<DomainRoutingShare>& report) {
    std::ostringstream out;
    out << "domain,turns,gnn_routing_pct,seq_routing_pct\n";
    out << std::fixed << std::setprecision(2);
    for (const auto& share : report)
        out << share.domain << "," << share.turns << "," << share.gnn_pct << ","
            << share.seq_pct << "\n";
    return out.str();
}

}  // namespace gem::router
