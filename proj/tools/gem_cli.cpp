#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gem/gem.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    bool stub_providers = false;
    bool strict = false;
};

// Flag overrides are applied to the raw JSON before parsing, so the resolved
// snapshot embedded in every output reflects exactly what ran.
gem::RunConfig load_config(const GlobalFlags& flags) {
    json j = json::object();
    if (!flags.config_path.empty()) {
        try {
            j = json::parse(gem::read_file(flags.config_path));
        } catch (const json::parse_error& e) {
            throw gem::ConfigError("config '" + flags.config_path + "': " + e.what());
        }
    }
    if (flags.seed) {
        j["seeds"]["train"] = *flags.seed;
        j["seeds"]["eval"] = *flags.seed;
    }
    if (flags.out_dir) j["paths"]["out_dir"] = *flags.out_dir;
    if (flags.strict) j["strict"] = true;
    if (flags.stub_providers) {
        j["retrieval"]["provider"] = "hash";
        j["generator"]["provider"] = "scripted";
        j["seq_expert"]["provider"] = "stub";
        j["router"]["classifier"] = "stub";
    }
    return gem::run_config_from_json(j);
}

std::string api_token() {
    const char* token = std::getenv("GEM_API_TOKEN");
    return token ? std::string(token) : std::string();
}

std::unique_ptr<gem::retrieval::EmbeddingProvider> make_embedder(const gem::RunConfig& cfg) {
    if (cfg.retrieval.provider == "hash")
        return std::make_unique<gem::retrieval::HashEmbeddingProvider>(cfg.retrieval.dim);
    return std::make_unique<gem::retrieval::RemoteEmbeddingClient>(
        cfg.retrieval.host, cfg.retrieval.port, cfg.retrieval.dim, cfg.retrieval.timeout_ms,
        cfg.retrieval.max_in_flight, api_token());
}

std::unique_ptr<gem::valuegen::LlmClient> make_llm(const gem::RunConfig& cfg) {
    if (cfg.generator.provider == "scripted") {
        if (!cfg.generator.script.empty()) {
            auto client = std::make_unique<gem::valuegen::ScriptedLlmClient>(
                gem::valuegen::ScriptedLlmClient::load(cfg.generator.script));
            return client;
        }
        return std::make_unique<gem::valuegen::ScriptedLlmClient>(
            gem::valuegen::ScriptedLlmClient::with_default(cfg.generator.default_completion));
    }
    return std::make_unique<gem::valuegen::RemoteLlmClient>(
        cfg.generator.host, cfg.generator.port, cfg.generator.timeout_ms, cfg.generator.retries,
        cfg.generator.max_in_flight, api_token());
}

std::unique_ptr<gem::seq::SeqExpert> make_seq_expert(const gem::RunConfig& cfg,
                                                     const gem::Ontology& ontology) {
    gem::ParseMode mode = cfg.strict ? gem::ParseMode::Strict : gem::ParseMode::Lenient;
    if (cfg.seq_expert.provider == "stub") {
        std::map<std::string, std::string> table;
        if (!cfg.seq_expert.table.empty()) {
            json j = json::parse(gem::read_file(cfg.seq_expert.table));
            table = j.get<std::map<std::string, std::string>>();
        }
        return std::make_unique<gem::seq::StubSeqExpert>(ontology, std::move(table), mode);
    }
    return std::make_unique<gem::seq::RemoteSeqExpert>(
        ontology, cfg.seq_expert.host, cfg.seq_expert.port, cfg.seq_expert.timeout_ms,
        cfg.seq_expert.max_in_flight, api_token(), mode);
}

std::unique_ptr<gem::router::DomainClassifier> make_classifier(
    const gem::RunConfig& cfg, const gem::Ontology& ontology, const gem::gat::GatModel* model,
    gem::retrieval::EmbeddingProvider& embedder) {
    if (cfg.router.classifier == "model") {
        if (!model)
            throw gem::ConfigError("router.classifier = model requires paths.checkpoint");
        return std::make_unique<gem::router::ModelDomainClassifier>(*model, embedder);
    }
    if (!cfg.router.keywords.empty())
        return std::make_unique<gem::router::StubDomainClassifier>(ontology,
                                                                   cfg.router.keywords);
    return std::make_unique<gem::router::StubDomainClassifier>(
        gem::router::StubDomainClassifier::with_domain_names(ontology));
}

gem::router::AccuracyTable load_or_default_table(const gem::RunConfig& cfg,
                                                 const gem::Ontology& ontology) {
    if (!cfg.paths.accuracy_table.empty())
        return gem::router::accuracy_table_from_csv(gem::read_file(cfg.paths.accuracy_table));
    // Uncalibrated default: every domain present with equal accuracies, so
    // each domain votes SEQ and empty domain sets route GNN.
    gem::router::AccuracyTable table;
    for (const auto& d : ontology.domains) table.set(d, 0.0, 0.0);
    return table;
}

std::string required_corpus_path(const std::string& primary, const std::string& fallback,
                                 const std::string& what) {
    if (!primary.empty()) return primary;
    if (!fallback.empty()) return fallback;
    throw gem::ConfigError("no corpus configured for " + what +
                           " (set paths." + what + " or paths.corpus)");
}

void write_resolved_config(const gem::RunConfig& cfg, const std::string& command) {
    fs::path out = fs::path(cfg.paths.out_dir) / (command + "_config.json");
    gem::write_file(out, cfg.snapshot.dump(2) + "\n");
}

// Deterministic train/val split when no explicit validation corpus is given:
// every stride-th dialogue goes to validation.
std::pair<gem::Corpus, gem::Corpus> split_corpus(const gem::Corpus& corpus,
                                                 double val_fraction) {
    gem::Corpus train, val;
    train.ontology = corpus.ontology;
    val.ontology = corpus.ontology;
    std::size_t stride =
        val_fraction > 0.0 ? static_cast<std::size_t>(std::max(2.0, 1.0 / val_fraction))
                           : corpus.dialogues.size() + 1;
    for (std::size_t i = 0; i < corpus.dialogues.size(); ++i) {
        if (val_fraction > 0.0 && i % stride == 0)
            val.dialogues.push_back(corpus.dialogues[i]);
        else
            train.dialogues.push_back(corpus.dialogues[i]);
    }
    if (train.dialogues.empty()) train.dialogues = corpus.dialogues;
    if (val.dialogues.empty()) val.dialogues = train.dialogues;
    return {std::move(train), std::move(val)};
}

int cmd_ingest(const GlobalFlags& flags, const std::string& in_dir, std::string out_file) {
    gem::RunConfig cfg = load_config(flags);
    gem::ParseMode mode = cfg.strict ? gem::ParseMode::Strict : gem::ParseMode::Lenient;
    std::vector<std::string> warnings;
    gem::Corpus corpus = gem::load_multiwoz_dir(in_dir, mode, &warnings);
    if (out_file.empty()) out_file = (fs::path(cfg.paths.out_dir) / "corpus.json").string();
    gem::save_corpus(corpus, out_file);
    write_resolved_config(cfg, "ingest");
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "ingested " << corpus.dialogues.size() << " dialogues ("
              << corpus.user_turn_count() << " user turns) -> " << out_file << "\n";
    return 0;
}

int cmd_train_gat(const GlobalFlags& flags) {
    gem::RunConfig cfg = load_config(flags);
    std::string train_path =
        required_corpus_path(cfg.paths.train_corpus, cfg.paths.corpus, "train_corpus");
    gem::Corpus full = gem::load_corpus(train_path);

    gem::Corpus train, val;
    if (!cfg.paths.val_corpus.empty()) {
        train = full;
        val = gem::load_corpus(cfg.paths.val_corpus);
    } else {
        std::tie(train, val) = split_corpus(full, cfg.train.val_fraction);
    }

    auto embedder = make_embedder(cfg);
    gem::gat::TrainOptions options;
    options.epochs = cfg.train.epochs;
    options.learning_rate = cfg.train.learning_rate;
    options.seed = cfg.seeds.train;
    options.loss_weights = cfg.loss_weights;

    gem::gat::TrainResult result = gem::gat::train(train, val, cfg.gat, options, *embedder);

    fs::path ckpt = cfg.paths.checkpoint.empty()
                        ? fs::path(cfg.paths.out_dir) / "gat_model.bin"
                        : fs::path(cfg.paths.checkpoint);
    gem::gat::save_model(result.model, ckpt);
    gem::gat::save_training_log(result.log, fs::path(cfg.paths.out_dir) / "train_log.jsonl");
    write_resolved_config(cfg, "train_gat");

    std::cout << "trained " << options.epochs << " epochs; best epoch " << result.best_epoch
              << "; checkpoint -> " << ckpt.string() << "\n";
    if (!result.log.empty()) {
        const auto& last = result.log.back();
        std::cout << "final val intent acc " << last.val_intent_acc << ", slot acc "
                  << last.val_slot_acc << "\n";
    }
    return 0;
}

int cmd_build_index(const GlobalFlags& flags) {
    gem::RunConfig cfg = load_config(flags);
    std::string train_path =
        required_corpus_path(cfg.paths.train_corpus, cfg.paths.corpus, "train_corpus");
    gem::Corpus corpus = gem::load_corpus(train_path);
    auto embedder = make_embedder(cfg);
    gem::retrieval::VectorIndex index = gem::retrieval::build_index(corpus, *embedder);
    fs::path out = cfg.paths.index.empty() ? fs::path(cfg.paths.out_dir) / "index.bin"
                                           : fs::path(cfg.paths.index);
    gem::retrieval::persist_index(index, out);
    write_resolved_config(cfg, "build_index");
    std::cout << "indexed " << index.size() << " examples (dim " << index.dimension()
              << ") -> " << out.string() << "\n";
    return 0;
}

int cmd_calibrate(const GlobalFlags& flags) {
    gem::RunConfig cfg = load_config(flags);
    if (cfg.paths.checkpoint.empty())
        throw gem::ConfigError("calibrate-router requires paths.checkpoint");
    std::string val_path =
        required_corpus_path(cfg.paths.val_corpus, cfg.paths.corpus, "val_corpus");
    gem::Corpus val = gem::load_corpus(val_path);

    gem::gat::GatModel model = gem::gat::load_model(cfg.paths.checkpoint);
    auto embedder = make_embedder(cfg);
    auto seq = make_seq_expert(cfg, val.ontology);

    std::vector<gem::router::CalibrationTurn> turns;
    for (const auto& d : val.dialogues) {
        for (std::size_t t = 0; t < d.turns.size(); ++t) {
            if (d.turns[t].speaker != gem::Speaker::User) continue;
            gem::router::CalibrationTurn ct;
            ct.gold_domains = d.turns[t].gold_domains;
            ct.gold_slots = d.turns[t].gold_slots;
            gem::ContextWindow gat_ctx =
                gem::build_context_window(d, t, model.config.context_window);
            ct.predicted_slots_gnn =
                gem::gat::predict_turn(model, gat_ctx, *embedder).slots;
            gem::ContextWindow seq_ctx =
                gem::build_context_window(d, t, cfg.gat.context_window);
            ct.predicted_slots_seq = seq->predict(seq_ctx).slots;
            turns.push_back(std::move(ct));
        }
    }
    gem::router::AccuracyTable table = gem::router::calibrate(turns, val.ontology);
    fs::path out = cfg.paths.accuracy_table.empty()
                       ? fs::path(cfg.paths.out_dir) / "accuracy_table.csv"
                       : fs::path(cfg.paths.accuracy_table);
    gem::write_file(out, gem::router::accuracy_table_to_csv(table));
    write_resolved_config(cfg, "calibrate_router");
    std::cout << "calibrated over " << turns.size() << " validation turns -> " << out.string()
              << "\n";
    return 0;
}

struct PipelineBundle {
    std::unique_ptr<gem::gat::GatModel> model;
    std::unique_ptr<gem::retrieval::EmbeddingProvider> embedder;
    std::unique_ptr<gem::seq::SeqExpert> seq;
    std::unique_ptr<gem::router::DomainClassifier> classifier;
    std::unique_ptr<gem::valuegen::LlmClient> llm;
    std::unique_ptr<gem::retrieval::VectorIndex> index;
    gem::eval::Pipeline pipeline;
};

PipelineBundle build_pipeline(const gem::RunConfig& cfg, const gem::Corpus& corpus) {
    PipelineBundle b;
    if (!cfg.paths.checkpoint.empty() && fs::exists(cfg.paths.checkpoint))
        b.model = std::make_unique<gem::gat::GatModel>(gem::gat::load_model(cfg.paths.checkpoint));
    b.embedder = make_embedder(cfg);
    b.seq = make_seq_expert(cfg, corpus.ontology);
    b.classifier = make_classifier(cfg, corpus.ontology, b.model.get(), *b.embedder);
    b.llm = make_llm(cfg);
    if (!cfg.paths.index.empty())
        b.index = std::make_unique<gem::retrieval::VectorIndex>(
            gem::retrieval::load_index(cfg.paths.index, b.embedder->dimension()));

    b.pipeline.gat_model = b.model.get();
    b.pipeline.seq_expert = b.seq.get();
    b.pipeline.classifier = b.classifier.get();
    b.pipeline.accuracy_table = load_or_default_table(cfg, corpus.ontology);
    b.pipeline.index = b.index.get();
    b.pipeline.embedder = b.embedder.get();
    b.pipeline.llm = b.llm.get();
    b.pipeline.prompt_spec =
        cfg.paths.templates_dir.empty()
            ? gem::valuegen::PromptSpec::with_mode(
                  gem::valuegen::generation_mode_from_string(cfg.generator.mode))
            : gem::valuegen::PromptSpec::load(
                  cfg.paths.templates_dir,
                  gem::valuegen::generation_mode_from_string(cfg.generator.mode));
    b.pipeline.config.mode = b.pipeline.prompt_spec.mode;
    b.pipeline.config.generate_options.params.max_tokens = cfg.generator.max_tokens;
    b.pipeline.config.generate_options.params.temperature = cfg.generator.temperature;
    b.pipeline.config.generate_options.max_prompt_chars = cfg.generator.max_prompt_chars;
    b.pipeline.config.retrieval_k = cfg.retrieval.k;
    b.pipeline.config.retrieval_tau = cfg.retrieval.tau;
    b.pipeline.config.context_window = cfg.gat.context_window;
    b.pipeline.config.dialogue_concurrency = cfg.concurrency.eval_dialogues;
    b.pipeline.config.timing_enabled = cfg.timing;
    return b;
}

int cmd_evaluate(const GlobalFlags& flags) {
    gem::RunConfig cfg = load_config(flags);
    std::string eval_path =
        required_corpus_path(cfg.paths.eval_corpus, cfg.paths.corpus, "eval_corpus");
    gem::Corpus corpus = gem::load_corpus(eval_path);
    PipelineBundle b = build_pipeline(cfg, corpus);

    auto [results, report] = gem::eval::run_pipeline(b.pipeline, corpus, cfg.snapshot);

    fs::path out_dir(cfg.paths.out_dir);
    gem::eval::save_run_report(report, out_dir / "run_report.json");
    gem::eval::save_turn_results(results, out_dir / "turn_results.jsonl");
    gem::write_file(out_dir / "routing_report.csv",
                    gem::router::routing_report_to_csv(report.routing));
    write_resolved_config(cfg, "evaluate");
    std::cout << gem::eval::run_report_summary(report);
    std::cout << "report -> " << (out_dir / "run_report.json").string() << "\n";
    return 0;
}

int cmd_track(const GlobalFlags& flags, const std::string& in_file) {
    gem::RunConfig cfg = load_config(flags);
    std::string path = in_file.empty()
                           ? required_corpus_path(cfg.paths.eval_corpus, cfg.paths.corpus,
                                                  "eval_corpus")
                           : in_file;
    gem::Corpus corpus = gem::load_corpus(path);
    PipelineBundle b = build_pipeline(cfg, corpus);

    for (const auto& d : corpus.dialogues) {
        std::vector<gem::eval::TurnResult> results =
            gem::eval::run_dialogue(b.pipeline, corpus, d);
        for (const auto& r : results) {
            json line;
            line["dialogue"] = r.dialogue_id;
            line["turn"] = r.turn_index;
            line["state"] = r.predicted_state.pairs;
            line["turn_pairs"] = r.predicted_turn_pairs;
            line["failed"] = r.failed;
            std::cout << line.dump() << "\n";
        }
    }
    write_resolved_config(cfg, "track");
    return 0;
}

int cmd_sweep(const GlobalFlags& flags) {
    gem::RunConfig cfg = load_config(flags);
    if (cfg.sweep.empty()) throw gem::ConfigError("sweep: config has no sweep cells");
    std::string train_path =
        required_corpus_path(cfg.paths.train_corpus, cfg.paths.corpus, "train_corpus");
    gem::Corpus full = gem::load_corpus(train_path);
    gem::Corpus train, val;
    if (!cfg.paths.val_corpus.empty()) {
        train = full;
        val = gem::load_corpus(cfg.paths.val_corpus);
    } else {
        std::tie(train, val) = split_corpus(full, cfg.train.val_fraction);
    }
    auto embedder = make_embedder(cfg);

    std::vector<gem::eval::SweepCell> cells;
    for (const auto& jc : cfg.sweep) {
        gem::eval::SweepCell cell;
        cell.name = jc.value("name", "cell" + std::to_string(cells.size()));
        json gat_json = cfg.snapshot.value("gat", json::object());
        if (jc.contains("gat")) gat_json.update(jc["gat"]);
        cell.gat = gem::gat::gat_config_from_json(gat_json);
        cell.train.epochs = jc.value("epochs", cfg.train.epochs);
        cell.train.learning_rate = jc.value("learning_rate", cfg.train.learning_rate);
        cell.train.seed = cfg.seeds.train;
        cell.train.loss_weights = cfg.loss_weights;
        if (jc.contains("loss_weights")) {
            const auto& w = jc["loss_weights"];
            cell.train.loss_weights.alpha = w.value("alpha", cell.train.loss_weights.alpha);
            cell.train.loss_weights.beta = w.value("beta", cell.train.loss_weights.beta);
            cell.train.loss_weights.gamma = w.value("gamma", cell.train.loss_weights.gamma);
        }
        cells.push_back(std::move(cell));
    }

    std::vector<gem::eval::SweepRow> rows =
        gem::eval::ablation_sweep(cells, train, val, *embedder);
    fs::path out_dir(cfg.paths.out_dir);
    gem::write_file(out_dir / "sweep_results.csv", gem::eval::sweep_to_csv(rows));
    gem::write_file(out_dir / "sweep_results.json", gem::eval::sweep_to_json(rows).dump(2) + "\n");
    write_resolved_config(cfg, "sweep");
    for (const auto& r : rows)
        std::cout << r.name << ": intent " << r.val_intent_acc << ", slot " << r.val_slot_acc
                  << (r.failed ? " FAILED: " + r.error : "") << "\n";
    return 0;
}

const char* error_type_name(const gem::Error& e) {
    if (dynamic_cast<const gem::ConfigError*>(&e)) return "config";
    if (dynamic_cast<const gem::ParseError*>(&e)) return "parse";
    if (dynamic_cast<const gem::ContractError*>(&e)) return "contract";
    if (dynamic_cast<const gem::CalibrationError*>(&e)) return "calibration";
    if (dynamic_cast<const gem::TrainingError*>(&e)) return "training";
    if (dynamic_cast<const gem::GenerationError*>(&e)) return "generation";
    if (dynamic_cast<const gem::TransportError*>(&e)) return "transport";
    if (dynamic_cast<const gem::IoError*>(&e)) return "io";
    return "error";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dialogue state tracking pipeline: graph + sequence experts, "
                 "domain-voted routing, retrieval-augmented value generation"};
    app.require_subcommand(1);

    GlobalFlags flags;
    app.add_option("--config", flags.config_path, "run configuration file (JSON)");
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "override train/eval seeds");
    std::string out_dir_value;
    auto* out_opt = app.add_option("--out-dir", out_dir_value, "override output directory");
    app.add_flag("--stub-providers", flags.stub_providers,
                 "force offline providers (hash embeddings, scripted LLM, stub experts)");
    app.add_flag("--strict", flags.strict, "treat ingestion/parsing warnings as errors");

    std::string ingest_in, ingest_out, track_in;
    auto* ingest = app.add_subcommand("ingest", "parse a MultiWOZ 2.2 directory");
    ingest->add_option("--in", ingest_in, "MultiWOZ directory (schema.json + dialogues)")
        ->required();
    ingest->add_option("--out", ingest_out, "canonical corpus output path");
    auto* train = app.add_subcommand("train-gat", "train the graph expert");
    auto* calibrate = app.add_subcommand("calibrate-router", "compute the accuracy table");
    auto* build_index = app.add_subcommand("build-index", "build the few-shot example index");
    auto* track = app.add_subcommand("track", "print per-turn predicted states");
    track->add_option("--in", track_in, "canonical corpus file (defaults to config corpus)");
    auto* evaluate = app.add_subcommand("evaluate", "run the full pipeline and report metrics");
    auto* sweep = app.add_subcommand("sweep", "train/evaluate every sweep cell in the config");

    CLI11_PARSE(app, argc, argv);
    if (*seed_opt) flags.seed = seed_value;
    if (*out_opt) flags.out_dir = out_dir_value;

    try {
        if (*ingest) return cmd_ingest(flags, ingest_in, ingest_out);
        if (*train) return cmd_train_gat(flags);
        if (*calibrate) return cmd_calibrate(flags);
        if (*build_index) return cmd_build_index(flags);
        if (*track) return cmd_track(flags, track_in);
        if (*evaluate) return cmd_evaluate(flags);
        if (*sweep) return cmd_sweep(flags);
    } catch (const gem::Error& e) {
        json err;
        err["error"] = {{"type", error_type_name(e)}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        json err;
        err["error"] = {{"type", "internal"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
