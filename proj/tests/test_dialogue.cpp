#include <catch2/catch_amalgamated.hpp>

#include "gem/dialogue/corpus.hpp"
#include "gem/dialogue/types.hpp"
#include "helpers.hpp"

using namespace gem;

namespace {
const std::string kFixturesDir = GEM_FIXTURES_DIR;
}

TEST_CASE("value normalization lowercases, trims, collapses whitespace") {
    CHECK(normalize_value("  North  ") == "north");
    CHECK(normalize_value("alpha   LODGE\t") == "alpha lodge");
    CHECK(normalize_value(normalize_value(" A  b ")) == normalize_value(" A  b "));
}

TEST_CASE("ontology validation rejects prefix-less and unknown-domain slots") {
    Ontology onto = gemtest::mini_ontology();
    CHECK_NOTHROW(onto.validate());

    Ontology bad = onto;
    bad.slots.insert("parking");
    CHECK_THROWS_AS(bad.validate(), ContractError);

    Ontology bad2 = onto;
    bad2.slots.insert("spaceship-fuel");
    CHECK_THROWS_AS(bad2.validate(), ContractError);
}

TEST_CASE("multiwoz directory ingestion") {
    Corpus corpus = load_multiwoz_dir(kFixturesDir + "/multiwoz_mini", ParseMode::Strict);
    REQUIRE(corpus.dialogues.size() == 2);
    CHECK(corpus.ontology.domains == std::set<std::string>{"hotel", "train"});
    CHECK(corpus.ontology.slots.size() == 5);
    CHECK(corpus.ontology.is_categorical("hotel-area"));
    CHECK_FALSE(corpus.ontology.is_categorical("hotel-name"));

    const Dialogue& d1 = corpus.dialogues[0];
    REQUIRE(d1.id == "FIX0001");
    REQUIRE(d1.turns.size() == 4);
    CHECK(d1.turns[0].speaker == Speaker::User);
    CHECK(d1.turns[1].speaker == Speaker::Assistant);

    // First user turn introduces two pairs.
    CHECK(d1.turns[0].gold_turn_values ==
          SlotValues{{"hotel-area", "north"}, {"hotel-pricerange", "cheap"}});
    CHECK(d1.turns[0].gold_intents == std::set<std::string>{"find_hotel"});
    // Second user turn only adds the (normalized) hotel name.
    CHECK(d1.turns[2].gold_turn_values == SlotValues{{"hotel-name", "alpha lodge"}});
    CHECK(d1.turns[2].gold_slots == std::set<std::string>{"hotel-name"});

    // Multi-domain turn: the train frame still carries state, so both
    // domains are gold-active, but the update only touches the hotel slot.
    const Dialogue& d2 = corpus.dialogues[1];
    CHECK(d2.turns[2].gold_domains == std::set<std::string>{"hotel", "train"});
    CHECK(d2.turns[2].gold_turn_values == SlotValues{{"hotel-pricerange", "expensive"}});
}

TEST_CASE("single-dialogue two-turn fixture parses to one dialogue with two turns") {
    Corpus base = load_multiwoz_dir(kFixturesDir + "/multiwoz_mini", ParseMode::Strict);
    std::string doc = R"([
      {"dialogue_id": "TINY", "services": ["hotel"], "turns": [
        {"turn_id": "0", "speaker": "USER", "utterance": "hotel in the south",
         "frames": [{"service": "hotel", "state": {"active_intent": "find_hotel",
                     "requested_slots": [], "slot_values": {"hotel-area": ["south"]}}}]},
        {"turn_id": "1", "speaker": "SYSTEM", "utterance": "sure", "frames": []}
      ]}
    ])";
    ParseResult result = parse_corpus(doc, base.ontology, ParseMode::Strict);
    REQUIRE(result.dialogues.size() == 1);
    CHECK(result.dialogues[0].turns.size() == 2);
    CHECK(result.warnings.empty());
}

TEST_CASE("empty document is a parse error") {
    Ontology onto = gemtest::mini_ontology();
    CHECK_THROWS_AS(parse_corpus("", onto), ParseError);
    CHECK_THROWS_AS(parse_corpus("   \n", onto), ParseError);
}

TEST_CASE("malformed document reports byte offset") {
    Ontology onto = gemtest::mini_ontology();
    try {
        parse_corpus("[{\"dialogue_id\": }]", onto);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
}

TEST_CASE("unknown label: strict errors naming it, lenient warns and drops") {
    Ontology onto = gemtest::mini_ontology();
    std::string doc = R"([
      {"dialogue_id": "BAD", "services": ["hotel"], "turns": [
        {"turn_id": "0", "speaker": "USER", "utterance": "hotel with parking",
         "frames": [{"service": "hotel", "state": {"active_intent": "find_hotel",
                     "requested_slots": [], "slot_values": {"hotel-parking": ["yes"]}}}]}
      ]}
    ])";
    try {
        parse_corpus(doc, onto, ParseMode::Strict);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("hotel-parking") != std::string::npos);
    }

    ParseResult lenient = parse_corpus(doc, onto, ParseMode::Lenient);
    REQUIRE(lenient.dialogues.size() == 1);
    CHECK(lenient.dialogues[0].turns[0].gold_turn_values.empty());
    REQUIRE_FALSE(lenient.warnings.empty());
    CHECK(lenient.warnings[0].find("hotel-parking") != std::string::npos);
}

TEST_CASE("context windows") {
    Dialogue d;
    d.id = "w";
    for (int i = 0; i < 10; ++i) {
        Turn t;
        t.speaker = i % 2 == 0 ? Speaker::User : Speaker::Assistant;
        t.text = "turn " + std::to_string(i);
        d.turns.push_back(t);
    }

    SECTION("window 0 keeps only the current turn") {
        ContextWindow ctx = build_context_window(d, 9, WindowSize::exchanges(0));
        REQUIRE(ctx.turns.size() == 1);
        CHECK(ctx.turns[0].text == "turn 9");
    }
    SECTION("turn 0 always yields a single-turn window") {
        CHECK(build_context_window(d, 0, WindowSize::exchanges(3)).turns.size() == 1);
        CHECK(build_context_window(d, 0, WindowSize::full()).turns.size() == 1);
    }
    SECTION("full window keeps the whole prefix") {
        CHECK(build_context_window(d, 9, WindowSize::full()).turns.size() == 10);
    }
    SECTION("bounded window keeps 2w prior utterances plus the current") {
        ContextWindow ctx = build_context_window(d, 9, WindowSize::exchanges(2));
        REQUIRE(ctx.turns.size() == 5);
        CHECK(ctx.turns.front().text == "turn 5");
        CHECK(ctx.turns.back().text == "turn 9");
    }
    SECTION("out-of-range index raises") {
        CHECK_THROWS_AS(build_context_window(d, 10, WindowSize::full()), ContractError);
    }
    SECTION("bounded window is a suffix of the full window") {
        for (std::size_t t = 0; t < d.turns.size(); ++t) {
            ContextWindow full = build_context_window(d, t, WindowSize::full());
            for (int w = 0; w < 6; ++w) {
                ContextWindow bounded = build_context_window(d, t, WindowSize::exchanges(w));
                REQUIRE(bounded.turns.size() <= full.turns.size());
                REQUIRE(bounded.turns.size() <= 2 * static_cast<std::size_t>(w) + 1);
                std::size_t offset = full.turns.size() - bounded.turns.size();
                for (std::size_t i = 0; i < bounded.turns.size(); ++i)
                    CHECK(bounded.turns[i] == full.turns[offset + i]);
            }
        }
    }
}

TEST_CASE("state accumulation") {
    SECTION("last write wins") {
        std::vector<SlotValues> updates = {{{"hotel-area", "north"}}, {{"hotel-area", "south"}}};
        DialogueState s = accumulate_state(updates, 1);
        CHECK(s.pairs == SlotValues{{"hotel-area", "south"}});
    }
    SECTION("empty updates produce empty state") {
        std::vector<SlotValues> updates = {{}, {}};
        CHECK(accumulate_state(updates, 1).pairs.empty());
    }
    SECTION("disjoint updates union") {
        std::vector<SlotValues> updates = {{{"a-x", "1"}}, {{"b-y", "2"}}};
        CHECK(accumulate_state(updates, 1).pairs == SlotValues{{"a-x", "1"}, {"b-y", "2"}});
    }
    SECTION("deletion marker removes a slot") {
        std::vector<SlotValues> updates = {{{"hotel-area", "north"}}, {{"hotel-area", "none"}}};
        CHECK(accumulate_state(updates, 1).pairs.empty());
    }
    SECTION("upto truncates") {
        std::vector<SlotValues> updates = {{{"hotel-area", "north"}}, {{"hotel-area", "south"}}};
        CHECK(accumulate_state(updates, 0).pairs == SlotValues{{"hotel-area", "north"}});
    }
    SECTION("idempotent on repeated identical updates") {
        std::vector<SlotValues> once = {{{"hotel-area", "North"}}};
        std::vector<SlotValues> twice = {{{"hotel-area", "North"}}, {{"hotel-area", "North"}}};
        CHECK(accumulate_state(once, 0) == accumulate_state(twice, 1));
    }
    SECTION("values are normalized on the way in") {
        std::vector<SlotValues> updates = {{{"hotel-name", "  Alpha   Lodge "}}};
        CHECK(accumulate_state(updates, 0).pairs == SlotValues{{"hotel-name", "alpha lodge"}});
    }
}

TEST_CASE("canonical corpus serialization round-trips") {
    Corpus corpus = load_multiwoz_dir(kFixturesDir + "/multiwoz_mini", ParseMode::Strict);
    nlohmann::json j = corpus_to_json(corpus);
    Corpus back = corpus_from_json(j);
    CHECK(back.dialogues == corpus.dialogues);
    CHECK(back.ontology.domains == corpus.ontology.domains);
    CHECK(back.ontology.intents == corpus.ontology.intents);
    CHECK(back.ontology.slots == corpus.ontology.slots);
    CHECK(back.ontology.categorical_values == corpus.ontology.categorical_values);

    // Twice round: parse(serialize(parse(x))) structurally equal.
    Corpus again = corpus_from_json(corpus_to_json(back));
    CHECK(again.dialogues == corpus.dialogues);
}

TEST_CASE("corpus file save/load") {
    namespace fs = std::filesystem;
    Corpus corpus = gemtest::fixture_corpus();
    fs::path path = fs::temp_directory_path() / "gem_test_corpus.json";
    save_corpus(corpus, path);
    Corpus back = load_corpus(path);
    CHECK(back.dialogues == corpus.dialogues);
    fs::remove(path);

    CHECK_THROWS_AS(load_corpus(fs::temp_directory_path() / "gem_no_such_file.json"), IoError);
}

TEST_CASE("corpus file version is checked") {
    Corpus corpus = gemtest::fixture_corpus();
    nlohmann::json j = corpus_to_json(corpus);
    j["version"] = 999;
    CHECK_THROWS_AS(corpus_from_json(j), ParseError);
    j["version"] = kCorpusVersion;
    j["format"] = "something.else";
    CHECK_THROWS_AS(corpus_from_json(j), ParseError);
}

TEST_CASE("gold state accumulates over a dialogue") {
    Corpus corpus = gemtest::fixture_corpus();
    const Dialogue& d = corpus.dialogues[0];
    DialogueState s = gold_state_at(d, d.turns.size() - 1);
    CHECK(s.pairs == SlotValues{{"hotel-area", "north"}, {"hotel-stars", "3"}});
}
