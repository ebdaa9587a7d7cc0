#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gem/core/error.hpp"
#include "gem/core/text.hpp"
#include "gem/dialogue/types.hpp"

namespace gem {

struct Corpus {
    Ontology ontology;
    std::vector<Dialogue> dialogues;

    std::size_t user_turn_count() const {
        std::size_t n = 0;
        for (const auto& d : dialogues)
            for (const auto& t : d.turns)
                if (t.speaker == Speaker::User) ++n;
        return n;
    }
};

struct ParseResult {
    std::vector<Dialogue> dialogues;
    std::vector<std::string> warnings;
};

namespace detail {

inline nlohmann::json parse_json_document(const std::string& bytes, const std::string& what) {
    if (trim(bytes).empty()) throw ParseError(what + ": empty document");
    try {
        return nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(what + ": malformed JSON at byte " + std::to_string(e.byte) + ": " +
                         e.what());
    }
}

inline void check_label(const std::string& kind, const std::string& label, bool known,
                        const std::string& dialogue_id, ParseMode mode,
                        std::vector<std::string>& warnings, bool& keep) {
    keep = known;
    if (known) return;
    std::string msg = kind + " '" + label + "' not in ontology (dialogue '" + dialogue_id + "')";
    if (mode == ParseMode::Strict) throw ParseError(msg);
    warnings.push_back(msg);
}

}  // namespace detail

// MultiWOZ 2.2 schema file: a JSON list of services, each carrying its slot
// and intent inventories. Categorical values are normalized on load.
inline Ontology parse_schema(const std::string& bytes) {
    nlohmann::json doc = detail::parse_json_document(bytes, "schema");
    if (!doc.is_array()) throw ParseError("schema: expected a JSON array of services");
    Ontology onto;
    for (const auto& service : doc) {
        std::string name = service.at("service_name").get<std::string>();
        onto.domains.insert(name);
        for (const auto& slot : service.value("slots", nlohmann::json::array())) {
            std::string slot_name = slot.at("name").get<std::string>();
            onto.slots.insert(slot_name);
            if (slot.value("is_categorical", false)) {
                std::set<std::string> values;
                for (const auto& v : slot.value("possible_values", nlohmann::json::array()))
                    values.insert(normalize_value(v.get<std::string>()));
                if (!values.empty()) onto.categorical_values[slot_name] = values;
            }
        }
        for (const auto& intent : service.value("intents", nlohmann::json::array()))
            onto.intents.insert(intent.at("name").get<std::string>());
    }
    onto.validate();
    return onto;
}

// One MultiWOZ 2.2 dialogue-act/state document: a JSON list of dialogues with
// per-turn frames carrying cumulative slot_values. Turn-level updates are the
// diff against the previous user turn's cumulative state; a slot that
// disappears from the cumulative state emits a deletion-marker update.
inline ParseResult parse_corpus(const std::string& bytes, const Ontology& ontology,
                                ParseMode mode = ParseMode::Strict) {
    nlohmann::json doc = detail::parse_json_document(bytes, "corpus");
    if (!doc.is_array()) throw ParseError("corpus: expected a JSON array of dialogues");

    ParseResult result;
    for (const auto& jd : doc) {
        Dialogue dialogue;
        dialogue.id = jd.at("dialogue_id").get<std::string>();
        SlotValues prev_cumulative;
        for (const auto& jt : jd.at("turns")) {
            Turn turn;
            std::string speaker = jt.at("speaker").get<std::string>();
            turn.speaker = (to_lower(speaker) == "user") ? Speaker::User : Speaker::Assistant;
            turn.text = jt.at("utterance").get<std::string>();

            SlotValues cumulative;
            bool has_state = false;
            for (const auto& frame : jt.value("frames", nlohmann::json::array())) {
                std::string service = frame.value("service", std::string());
                if (!frame.contains("state")) continue;
                const auto& state = frame.at("state");
                has_state = true;

                std::string intent = state.value("active_intent", std::string("NONE"));
                bool active = intent != "NONE" && !intent.empty();
                if (active) {
                    bool keep = false;
                    detail::check_label("intent", intent, ontology.has_intent(intent), dialogue.id,
                                        mode, result.warnings, keep);
                    if (keep) turn.gold_intents.insert(intent);
                }

                const auto slot_values = state.value("slot_values", nlohmann::json::object());
                for (auto it = slot_values.begin(); it != slot_values.end(); ++it) {
                    bool keep = false;
                    detail::check_label("slot", it.key(), ontology.has_slot(it.key()), dialogue.id,
                                        mode, result.warnings, keep);
                    if (!keep) continue;
                    // Alternatives are listed; the first one is canonical.
                    std::string value;
                    if (it.value().is_array() && !it.value().empty())
                        value = it.value().front().get<std::string>();
                    else if (it.value().is_string())
                        value = it.value().get<std::string>();
                    cumulative[it.key()] = normalize_value(value);
                }

                bool frame_active = active || !slot_values.empty();
                if (frame_active && !service.empty()) {
                    bool keep = false;
                    detail::check_label("domain", service, ontology.has_domain(service),
                                        dialogue.id, mode, result.warnings, keep);
                    if (keep) turn.gold_domains.insert(service);
                }
            }

            if (has_state) {
                for (const auto& [slot, value] : cumulative) {
                    auto prev = prev_cumulative.find(slot);
                    if (prev == prev_cumulative.end() || prev->second != value)
                        turn.gold_turn_values[slot] = value;
                }
                for (const auto& [slot, value] : prev_cumulative) {
                    (void)value;
                    if (!cumulative.count(slot)) turn.gold_turn_values[slot] = kDeletionMarker;
                }
                for (const auto& [slot, value] : turn.gold_turn_values) {
                    (void)value;
                    turn.gold_slots.insert(slot);
                }
                prev_cumulative = std::move(cumulative);
            }
            dialogue.turns.push_back(std::move(turn));
        }
        if (dialogue.turns.empty())
            throw ParseError("corpus: dialogue '" + dialogue.id + "' has no turns");
        result.dialogues.push_back(std::move(dialogue));
    }
    return result;
}

inline constexpr const char* kCorpusFormat = "gem.corpus";
inline constexpr int kCorpusVersion = 1;

inline nlohmann::json ontology_to_json(const Ontology& onto) {
    nlohmann::json j;
    j["domains"] = onto.domains;
    j["intents"] = onto.intents;
    j["slots"] = onto.slots;
    j["categorical_values"] = onto.categorical_values;
    return j;
}

inline Ontology ontology_from_json(const nlohmann::json& j) {
    Ontology onto;
    onto.domains = j.at("domains").get<std::set<std::string>>();
    onto.intents = j.at("intents").get<std::set<std::string>>();
    onto.slots = j.at("slots").get<std::set<std::string>>();
    if (j.contains("categorical_values"))
        onto.categorical_values =
            j.at("categorical_values").get<std::map<std::string, std::set<std::string>>>();
    onto.validate();
    return onto;
}

// Canonical internal serialization, used for fast reload after ingestion.
inline nlohmann::json corpus_to_json(const Corpus& corpus) {
    nlohmann::json j;
    j["format"] = kCorpusFormat;
    j["version"] = kCorpusVersion;
    j["ontology"] = ontology_to_json(corpus.ontology);
    nlohmann::json dialogues = nlohmann::json::array();
    for (const auto& d : corpus.dialogues) {
        nlohmann::json jd;
        jd["id"] = d.id;
        nlohmann::json turns = nlohmann::json::array();
        for (const auto& t : d.turns) {
            nlohmann::json jt;
            jt["speaker"] = t.speaker == Speaker::User ? "user" : "assistant";
            jt["text"] = t.text;
            jt["intents"] = t.gold_intents;
            jt["domains"] = t.gold_domains;
            jt["slots"] = t.gold_slots;
            jt["turn_values"] = t.gold_turn_values;
            turns.push_back(std::move(jt));
        }
        jd["turns"] = std::move(turns);
        dialogues.push_back(std::move(jd));
    }
    j["dialogues"] = std::move(dialogues);
    return j;
}

inline Corpus corpus_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string()) != kCorpusFormat)
        throw ParseError("corpus file: unrecognized format marker");
    if (j.value("version", 0) != kCorpusVersion)
        throw ParseError("corpus file: unsupported version " + std::to_string(j.value("version", 0)));
    Corpus corpus;
    corpus.ontology = ontology_from_json(j.at("ontology"));
    for (const auto& jd : j.at("dialogues")) {
        Dialogue d;
        d.id = jd.at("id").get<std::string>();
        for (const auto& jt : jd.at("turns")) {
            Turn t;
            t.speaker =
                jt.at("speaker").get<std::string>() == "user" ? Speaker::User : Speaker::Assistant;
            t.text = jt.at("text").get<std::string>();
            t.gold_intents = jt.at("intents").get<std::set<std::string>>();
            t.gold_domains = jt.at("domains").get<std::set<std::string>>();
            t.gold_slots = jt.at("slots").get<std::set<std::string>>();
            t.gold_turn_values = jt.at("turn_values").get<SlotValues>();
            d.turns.push_back(std::move(t));
        }
        if (d.turns.empty()) throw ParseError("corpus file: dialogue '" + d.id + "' has no turns");
        corpus.dialogues.push_back(std::move(d));
    }
    return corpus;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << contents;
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    write_file(path, corpus_to_json(corpus).dump(2) + "\n");
}

inline Corpus load_corpus(const std::filesystem::path& path) {
    return corpus_from_json(detail::parse_json_document(read_file(path), path.string()));
}

// MultiWOZ 2.2 directory layout: schema.json plus any number of dialogue
// documents (every other *.json file, read in name order).
inline Corpus load_multiwoz_dir(const std::filesystem::path& dir, ParseMode mode,
                                std::vector<std::string>* warnings = nullptr) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
    fs::path schema_path = dir / "schema.json";
    if (!fs::exists(schema_path))
        throw IoError("missing schema file '" + schema_path.string() + "'");

    Corpus corpus;
    corpus.ontology = parse_schema(read_file(schema_path));

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().extension() != ".json") continue;
        if (entry.path().filename() == "schema.json") continue;
        files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no dialogue files found in '" + dir.string() + "'");

    for (const auto& file : files) {
        ParseResult part = parse_corpus(read_file(file), corpus.ontology, mode);
        for (auto& d : part.dialogues) corpus.dialogues.push_back(std::move(d));
        if (warnings)
            warnings->insert(warnings->end(), part.warnings.begin(), part.warnings.end());
    }
    return corpus;
}

}  // namespace gem
