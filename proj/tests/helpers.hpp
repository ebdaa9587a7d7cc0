#pragma once

// Shared fixture builders for the test suites and the acceptance runner.

#include <random>
#include <set>
#include <string>
#include <vector>

#include "gem/gem.hpp"

namespace gemtest {

inline gem::Ontology mini_ontology() {
    gem::Ontology onto;
    onto.domains = {"hotel", "train"};
    onto.intents = {"find_hotel", "book_hotel", "find_train", "book_train"};
    onto.slots = {"hotel-area", "hotel-stars", "train-day", "train-people"};
    onto.categorical_values["hotel-area"] = {"north", "south", "east", "west", "centre"};
    onto.categorical_values["train-day"] = {"monday", "tuesday", "wednesday", "thursday",
                                            "friday", "saturday", "sunday"};
    return onto;
}

inline gem::Turn user_turn(std::string text, std::set<std::string> intents = {},
                           std::set<std::string> domains = {}, std::set<std::string> slots = {},
                           gem::SlotValues values = {}) {
    gem::Turn t;
    t.speaker = gem::Speaker::User;
    t.text = std::move(text);
    t.gold_intents = std::move(intents);
    t.gold_domains = std::move(domains);
    t.gold_slots = std::move(slots);
    t.gold_turn_values = std::move(values);
    return t;
}

inline gem::Turn assistant_turn(std::string text) {
    gem::Turn t;
    t.speaker = gem::Speaker::Assistant;
    t.text = std::move(text);
    return t;
}

// Two short dialogues with full gold annotations; used as the offline
// evaluation fixture.
inline gem::Corpus fixture_corpus() {
    gem::Corpus corpus;
    corpus.ontology = mini_ontology();

    gem::Dialogue d1;
    d1.id = "fix-hotel-1";
    d1.turns.push_back(user_turn("i need a hotel in the north", {"find_hotel"}, {"hotel"},
                                 {"hotel-area"}, {{"hotel-area", "north"}}));
    d1.turns.push_back(assistant_turn("the alpha lodge is in the north"));
    d1.turns.push_back(user_turn("book the hotel with 3 stars", {"book_hotel"}, {"hotel"},
                                 {"hotel-stars"}, {{"hotel-stars", "3"}}));
    d1.turns.push_back(assistant_turn("booked"));
    corpus.dialogues.push_back(std::move(d1));

    gem::Dialogue d2;
    d2.id = "fix-train-1";
    d2.turns.push_back(user_turn("i want a train on monday", {"find_train"}, {"train"},
                                 {"train-day"}, {{"train-day", "monday"}}));
    d2.turns.push_back(assistant_turn("there are 12 trains on monday"));
    d2.turns.push_back(user_turn("book the train for 2 people", {"book_train"}, {"train"},
                                 {"train-people"}, {{"train-people", "2"}}));
    d2.turns.push_back(assistant_turn("done"));
    corpus.dialogues.push_back(std::move(d2));
    return corpus;
}

// A distinct training-side corpus feeding the few-shot example index.
inline gem::Corpus fixture_train_corpus() {
    gem::Corpus corpus;
    corpus.ontology = mini_ontology();
    gem::Dialogue d;
    d.id = "train-hotel-1";
    d.turns.push_back(user_turn("looking for a hotel in the south", {"find_hotel"}, {"hotel"},
                                {"hotel-area"}, {{"hotel-area", "south"}}));
    d.turns.push_back(assistant_turn("the beta inn is in the south"));
    d.turns.push_back(user_turn("a train on friday please", {"find_train"}, {"train"},
                                {"train-day"}, {{"train-day", "friday"}}));
    d.turns.push_back(assistant_turn("plenty of trains on friday"));
    corpus.dialogues.push_back(std::move(d));
    return corpus;
}

struct SyntheticVocab {
    // token -> (intent label, domain label) and slot trigger tokens
    std::vector<std::pair<std::string, std::string>> intents = {
        {"find hotel", "find_hotel"},
        {"book hotel", "book_hotel"},
        {"find train", "find_train"},
        {"book train", "book_train"}};
    std::vector<std::pair<std::string, std::string>> hotel_slots = {
        {"area", "hotel-area"}, {"stars", "hotel-stars"}};
    std::vector<std::pair<std::string, std::string>> train_slots = {
        {"day", "train-day"}, {"people", "train-people"}};
};

// Labels decodable from the current utterance by a linear rule: every label
// has a dedicated trigger token, so hash embeddings make the tasks linearly
// separable.
inline gem::Corpus synthetic_separable_corpus(std::size_t n_dialogues, std::uint64_t seed) {
    SyntheticVocab vocab;
    gem::Corpus corpus;
    corpus.ontology = mini_ontology();
    std::mt19937_64 rng(seed);

    for (std::size_t i = 0; i < n_dialogues; ++i) {
        gem::Dialogue d;
        d.id = "syn-" + std::to_string(i);
        for (int j = 0; j < 3; ++j) {
            std::size_t intent_idx = rng() % vocab.intents.size();
            const auto& [intent_text, intent_label] = vocab.intents[intent_idx];
            bool hotel = intent_label.find("hotel") != std::string::npos;
            const auto& slot_vocab = hotel ? vocab.hotel_slots : vocab.train_slots;
            std::string domain = hotel ? "hotel" : "train";

            std::set<std::string> slots;
            std::string text = intent_text;
            std::size_t n_slots = 1 + rng() % slot_vocab.size();
            std::vector<std::size_t> order = {0, 1};
            if (rng() % 2) std::swap(order[0], order[1]);
            for (std::size_t s = 0; s < n_slots; ++s) {
                text += " " + slot_vocab[order[s]].first;
                slots.insert(slot_vocab[order[s]].second);
            }
            gem::SlotValues values;
            for (const auto& slot : slots) values[slot] = "x";
            d.turns.push_back(user_turn(text, {intent_label}, {domain}, slots, values));
            d.turns.push_back(assistant_turn("ok noted"));
        }
        corpus.dialogues.push_back(std::move(d));
    }
    return corpus;
}

// All components stubbed/scripted so the full pipeline runs offline with
// gold-oracle outputs: the stub sequence expert replays gold label sets, the
// scripted client replays gold turn values keyed by the exact prompt.
struct OraclePipelineSetup {
    gem::Corpus eval_corpus;
    gem::Corpus train_corpus;
    std::unique_ptr<gem::retrieval::HashEmbeddingProvider> embedder;
    std::unique_ptr<gem::retrieval::VectorIndex> index;
    std::unique_ptr<gem::seq::StubSeqExpert> seq;
    std::unique_ptr<gem::router::StubDomainClassifier> classifier;
    std::unique_ptr<gem::valuegen::ScriptedLlmClient> llm;
    gem::eval::Pipeline pipeline;
};

inline OraclePipelineSetup make_oracle_pipeline(
    gem::valuegen::GenerationMode mode = gem::valuegen::GenerationMode::FewShot,
    bool timing = false, int concurrency = 1) {
    using namespace gem;
    OraclePipelineSetup s;
    s.eval_corpus = fixture_corpus();
    s.train_corpus = fixture_train_corpus();
    s.embedder = std::make_unique<retrieval::HashEmbeddingProvider>(48);
    s.index = std::make_unique<retrieval::VectorIndex>(
        retrieval::build_index(s.train_corpus, *s.embedder));
    s.classifier = std::make_unique<router::StubDomainClassifier>(
        router::StubDomainClassifier::with_domain_names(s.eval_corpus.ontology));

    valuegen::PromptSpec spec = valuegen::PromptSpec::with_mode(mode);
    s.pipeline.prompt_spec = spec;
    s.pipeline.config.mode = mode;
    s.pipeline.config.timing_enabled = timing;
    s.pipeline.config.dialogue_concurrency = concurrency;

    // Stub expert lookup: gold label sets per full-window linearization.
    std::map<std::string, std::string> seq_table;
    std::vector<valuegen::ScriptedLlmClient::ScriptEntry> script;
    for (const auto& d : s.eval_corpus.dialogues) {
        std::string prev_system;
        for (std::size_t t = 0; t < d.turns.size(); ++t) {
            const Turn& turn = d.turns[t];
            if (turn.speaker != Speaker::User) {
                prev_system = turn.text;
                continue;
            }
            ContextWindow ctx = build_context_window(d, t, s.pipeline.config.context_window);
            seq::SeqExpertOutput gold;
            gold.intents = turn.gold_intents;
            gold.domains = turn.gold_domains;
            gold.slots = turn.gold_slots;
            seq_table[seq::linearize(ctx)] = seq::serialize_structured_output(gold);

            // Reproduce the pipeline's prompts with the same library calls.
            std::vector<Turn> history(d.turns.begin(),
                                      d.turns.begin() + static_cast<std::ptrdiff_t>(t));
            std::string combined =
                retrieval::combine_fields(prev_system, turn.text, turn.gold_slots);
            std::vector<retrieval::ExampleRecord> examples = s.index->query_topk(
                s.embedder->embed(combined), s.pipeline.config.retrieval_k,
                s.pipeline.config.retrieval_tau);
            std::string gold_json = nlohmann::json(turn.gold_turn_values).dump();
            if (mode == valuegen::GenerationMode::ReAct) {
                std::string current_line =
                    std::string(speaker_tag(turn.speaker)) + " " + turn.text;
                std::string analysis_prompt = valuegen::detail::substitute(
                    spec.analysis_template, "{examples}", valuegen::render_examples(examples));
                analysis_prompt = valuegen::detail::substitute(
                    analysis_prompt, "{history}", valuegen::render_history(history));
                analysis_prompt =
                    valuegen::detail::substitute(analysis_prompt, "{current}", current_line);
                std::string analysis = "analysis for " + d.id + "#" + std::to_string(t);
                script.push_back(
                    valuegen::ScriptedLlmClient::entry_for(analysis_prompt, analysis));

                std::string reasoning_prompt = valuegen::detail::substitute(
                    spec.reasoning_template, "{analysis}", analysis);
                reasoning_prompt =
                    valuegen::detail::substitute(reasoning_prompt, "{current}", current_line);
                reasoning_prompt = valuegen::detail::substitute(
                    reasoning_prompt, "{slots}", valuegen::render_slots(turn.gold_slots));
                std::string reasoning = "reasoning for " + d.id + "#" + std::to_string(t);
                script.push_back(
                    valuegen::ScriptedLlmClient::entry_for(reasoning_prompt, reasoning));

                std::string json_prompt = valuegen::detail::substitute(
                    spec.json_template, "{reasoning}", reasoning);
                json_prompt = valuegen::detail::substitute(
                    json_prompt, "{slots}", valuegen::render_slots(turn.gold_slots));
                script.push_back(valuegen::ScriptedLlmClient::entry_for(json_prompt, gold_json));
            } else {
                const auto& shots = mode == valuegen::GenerationMode::ZeroShot
                                        ? std::vector<retrieval::ExampleRecord>{}
                                        : examples;
                std::string prompt = valuegen::assemble_prompt(spec, shots, history, turn,
                                                               turn.gold_slots);
                script.push_back(valuegen::ScriptedLlmClient::entry_for(prompt, gold_json));
            }
        }
    }
    s.seq = std::make_unique<seq::StubSeqExpert>(s.eval_corpus.ontology, std::move(seq_table));
    s.llm = std::make_unique<valuegen::ScriptedLlmClient>(std::move(script));

    for (const auto& d : s.eval_corpus.ontology.domains)
        s.pipeline.accuracy_table.set(d, 0.2, 0.8);  // SEQ everywhere

    s.pipeline.seq_expert = s.seq.get();
    s.pipeline.classifier = s.classifier.get();
    s.pipeline.index = s.index.get();
    s.pipeline.embedder = s.embedder.get();
    s.pipeline.llm = s.llm.get();
    return s;
}

// Labels on the accept turns depend only on the previous assistant turn, so
// a window-0 model cannot beat guessing on them.
inline gem::Corpus synthetic_history_corpus(std::size_t n_dialogues, std::uint64_t seed) {
    gem::Corpus corpus;
    corpus.ontology = mini_ontology();
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n_dialogues; ++i) {
        gem::Dialogue d;
        d.id = "hist-" + std::to_string(i);
        d.turns.push_back(
            user_turn("find hotel", {"find_hotel"}, {"hotel"}, {}, {}));
        d.turns.push_back(assistant_turn("welcome"));
        for (int j = 0; j < 3; ++j) {
            bool stars = rng() % 2 == 0;
            d.turns.push_back(assistant_turn(stars ? "i can offer stars" : "i can offer area"));
            std::string slot = stars ? "hotel-stars" : "hotel-area";
            d.turns.push_back(user_turn("yes please", {"find_hotel"}, {"hotel"}, {slot},
                                        {{slot, stars ? "3" : "north"}}));
        }
        corpus.dialogues.push_back(std::move(d));
    }
    return corpus;
}

}  // namespace gemtest
