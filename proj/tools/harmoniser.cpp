#include "harmoniser/corpus.hpp"
#include "harmoniser/embedding_store.hpp"
#include "harmoniser/error.hpp"
#include "harmoniser/evaluation.hpp"
#include "harmoniser/hybrid_scorer.hpp"
#include "harmoniser/lexical_index.hpp"
#include "harmoniser/ranking_pipeline.hpp"
#include "harmoniser/service.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

using namespace harmoniser;
using nlohmann::ordered_json;

namespace {

struct Settings {
    std::string config_path;
    std::string corpus;
    std::string taxonomy;
    std::string output;
    std::string index;
    std::string embeddings;
    std::string base;
    std::string scores;
    std::string manifest;
    std::string model = "bm25";
    std::string mode = "e2e";
    std::string weights;
    std::vector<std::string> runs;
    std::string runs_dir;
    std::string annotations;
    std::string host = "127.0.0.1";
    std::string token;
    std::string static_dir;
    std::size_t k = 50;
    std::size_t depth = kDefaultRerankDepth;
    std::size_t n = 203;
    std::size_t workers = 0;
    std::uint64_t seed = 0;
    int port = 8080;
    bool code_list_only = false;
    bool stopwords = false;
    bool weighted = false;
};

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    return in;
}

void make_parent_dirs(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

void write_text_atomic(const std::string& path, const std::string& text) {
    make_parent_dirs(path);
    const auto tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp);
        out << text;
        if (!out.flush()) throw Error(ErrorCode::Io, "write to " + tmp + " failed");
    }
    std::filesystem::rename(tmp, path);
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw Error(ErrorCode::InvalidArgument, fmt::format("{} is required", flag));
}

/// Config file values fill in anything not given on the command line.
struct RankConfig {
    Bm25Params bm25;
    FusionWeights fusion;
    std::size_t depth = kDefaultRerankDepth;
    std::size_t workers = 1;
};

RankConfig load_config(const Settings& s, const CLI::App& cmd) {
    RankConfig c;
    if (!s.config_path.empty()) {
        auto in = open_in(s.config_path);
        const auto j = nlohmann::json::parse(in);
        if (j.contains("bm25")) {
            c.bm25.k1 = j["bm25"].value("k1", c.bm25.k1);
            c.bm25.b = j["bm25"].value("b", c.bm25.b);
        }
        if (j.contains("fusion")) {
            c.fusion.dense = j["fusion"].value("w_dense", c.fusion.dense);
            c.fusion.lex = j["fusion"].value("w_lex", c.fusion.lex);
            c.fusion.multi = j["fusion"].value("w_multi", c.fusion.multi);
        }
        if (j.contains("rerank")) c.depth = j["rerank"].value("depth", c.depth);
        c.workers = j.value("workers", c.workers);
    }
    if (!s.weights.empty()) c.fusion = parse_weights(s.weights);
    if (cmd.count("--depth")) c.depth = s.depth;
    if (s.workers > 0) c.workers = s.workers;
    c.bm25.validate();
    c.fusion.validate();
    return c;
}

Model model_flag(const std::string& name) {
    auto m = parse_model(name);
    if (!m) throw Error(ErrorCode::InvalidArgument, "unknown model " + name);
    return *m;
}

ordered_json bm25_json(const Bm25Params& p) { return {{"k1", p.k1}, {"b", p.b}}; }
ordered_json fusion_json(const FusionWeights& w) { return {{"w_dense", w.dense}, {"w_lex", w.lex}, {"w_multi", w.multi}}; }
ordered_json store_json(const EmbeddingStore& s) {
    return {{"model_tag", s.model_tag()},
            {"rep_kind", s.rep_kind() == RepKind::Mean ? "mean" : "sst"},
            {"dim", s.dim()},
            {"token_level", s.has_token_level()}};
}

InvertedIndex load_or_build_index(const Settings& s, const Corpus& corpus, bool stopwords) {
    if (s.index.empty()) return build_index(corpus, stopwords ? Tokenizer(english_stopwords()) : Tokenizer());
    auto in = open_in(s.index);
    auto index = InvertedIndex::read(in);
    for (const auto& q : corpus) {
        if (q.is_code_list && !index.doc_number(q.id)) {
            throw Error(ErrorCode::InvalidArgument, "index " + s.index + " does not cover question " + q.id);
        }
    }
    return index;
}

int cmd_ingest(const Settings& s) {
    require(s.corpus, "--corpus");
    auto corpus = load_corpus(s.corpus);
    if (!s.taxonomy.empty()) {
        auto in = open_in(s.taxonomy);
        validate_topics(corpus, parse_taxonomy(in));
    }
    const auto code_list = filter_code_list(corpus);
    fmt::print("questions: {}\ncode-list questions: {}\nquestionnaires: {}\n", corpus.size(), code_list.size(),
               corpus.questionnaire_count());
    if (!s.output.empty()) {
        std::ostringstream out;
        write_corpus(out, s.code_list_only ? code_list : corpus);
        write_text_atomic(s.output, out.str());
        fmt::print("wrote {}\n", s.output);
    }
    return 0;
}

int cmd_index(const Settings& s) {
    require(s.corpus, "--corpus");
    require(s.output, "--output");
    const auto corpus = load_corpus(s.corpus);
    const auto index = build_index(corpus, s.stopwords ? Tokenizer(english_stopwords()) : Tokenizer());
    std::ostringstream out;
    index.write(out);
    write_text_atomic(s.output, out.str());
    fmt::print("documents: {}\nterms: {}\naverage length: {:.2f}\nwrote {}\n", index.doc_count(), index.term_count(),
               index.avg_doc_length(), s.output);
    return 0;
}

int cmd_rerank(const Settings& s, const CLI::App& cmd);

int cmd_rank(const Settings& s, const CLI::App& cmd) {
    const auto mode = parse_mode(s.mode);
    if (!mode) throw Error(ErrorCode::InvalidArgument, "unknown mode " + s.mode);
    if (*mode == Mode::Rerank) return cmd_rerank(s, cmd);
    require(s.corpus, "--corpus");
    require(s.output, "--output");
    const auto cfg = load_config(s, cmd);
    const auto corpus = load_corpus(s.corpus);
    const auto model = model_flag(s.model);
    ordered_json config;
    config["model"] = to_string(model);
    config["k"] = s.k;
    RankingRun run;
    const PipelineOptions options{cfg.workers};

    if (model == Model::Bm25) {
        const auto index = load_or_build_index(s, corpus, s.stopwords);
        const Bm25Searcher searcher(index, cfg.bm25);
        config["bm25"] = bm25_json(cfg.bm25);
        config["stopwords"] = !index.tokenizer().stopwords().empty();
        run = end_to_end_rank(Bm25Retriever(searcher), corpus, s.k, config, options);
    } else if (model == Model::Dense) {
        require(s.embeddings, "--embeddings");
        const auto store = load_store_file(s.embeddings);
        config["embeddings"] = store_json(store);
        run = end_to_end_rank(DenseRetriever(store), corpus, s.k, config, options);
    } else if (model == Model::Hybrid) {
        require(s.embeddings, "--embeddings");
        const auto store = load_store_file(s.embeddings);
        const auto index = load_or_build_index(s, corpus, s.stopwords);
        const Bm25Searcher searcher(index, cfg.bm25);
        const HybridScorer scorer(searcher, store, cfg.fusion);
        config["bm25"] = bm25_json(cfg.bm25);
        config["fusion"] = fusion_json(cfg.fusion);
        config["embeddings"] = store_json(store);
        run = end_to_end_rank(HybridRetriever(scorer, index), corpus, s.k, config, options);
    } else {
        throw Error(ErrorCode::InvalidArgument, "external scores can only re-rank; use rerank --model external");
    }
    make_parent_dirs(s.output);
    write_run_file(s.output, run);
    fmt::print("{} queries ranked, run {}\nwrote {}\n", run.per_query.size(), run.run_id, s.output);
    return 0;
}

int cmd_rerank(const Settings& s, const CLI::App& cmd) {
    require(s.base, "--base");
    const auto cfg = load_config(s, cmd);
    const auto base = read_run_file(s.base);
    if (!s.manifest.empty()) {
        const auto pairs = rerank_pairs(base, cfg.depth);
        std::ostringstream out;
        write_pair_manifest(out, pairs);
        write_text_atomic(s.manifest, out.str());
        fmt::print("{} pairs\nwrote {}\n", pairs.size(), s.manifest);
        return 0;
    }
    require(s.output, "--output");
    const auto model = model_flag(s.model);
    ordered_json config;
    config["model"] = to_string(model);
    config["k"] = s.k;
    const PipelineOptions options{cfg.workers};
    RankingRun run;

    if (model == Model::Dense) {
        require(s.embeddings, "--embeddings");
        const auto store = load_store_file(s.embeddings);
        config["embeddings"] = store_json(store);
        run = rerank(base, DenseCandidateScorer(store), cfg.depth, s.k, config, options);
    } else if (model == Model::Hybrid) {
        require(s.corpus, "--corpus");
        require(s.embeddings, "--embeddings");
        const auto corpus = load_corpus(s.corpus);
        const auto store = load_store_file(s.embeddings);
        const auto index = load_or_build_index(s, corpus, s.stopwords);
        const Bm25Searcher searcher(index, cfg.bm25);
        const HybridScorer scorer(searcher, store, cfg.fusion);
        config["bm25"] = bm25_json(cfg.bm25);
        config["fusion"] = fusion_json(cfg.fusion);
        config["embeddings"] = store_json(store);
        run = rerank(base, HybridCandidateScorer(scorer), cfg.depth, s.k, config, options);
    } else if (model == Model::External) {
        require(s.scores, "--scores");
        auto in = open_in(s.scores);
        auto scores = read_pair_scores(in);
        check_pairs_match(rerank_pairs(base, cfg.depth), scores);
        config["scores"] = std::filesystem::path(s.scores).filename().string();
        run = rerank(base, ExternalScorer(std::move(scores)), cfg.depth, s.k, config, options);
    } else {
        throw Error(ErrorCode::InvalidArgument, "bm25 is the base model; pick dense, hybrid or external");
    }
    make_parent_dirs(s.output);
    write_run_file(s.output, run);
    fmt::print("{} queries re-ranked, run {}\nwrote {}\n", run.per_query.size(), run.run_id, s.output);
    return 0;
}

int cmd_eval(const Settings& s) {
    require(s.corpus, "--corpus");
    if (s.runs.empty() && s.annotations.empty()) throw Error(ErrorCode::InvalidArgument, "give --run or --annotations");
    const auto corpus = load_corpus(s.corpus);
    const auto averaging = s.weighted ? Averaging::Weighted : Averaging::Macro;
    std::vector<std::pair<std::string, Metrics>> rows;
    auto report = ordered_json::object();
    report["runs"] = ordered_json::array();
    for (const auto& path : s.runs) {
        const auto run = read_run_file(path);
        const auto m = topic_match_metrics(run, corpus, averaging);
        report["runs"].push_back(metrics_to_json(m, run.run_id));
        rows.emplace_back(run.run_id, m);
    }
    if (!rows.empty()) std::cout << format_metrics_table(rows);
    if (!s.annotations.empty()) {
        auto in = open_in(s.annotations);
        const auto anns = read_annotations(in);
        std::map<std::string, std::vector<Annotation>> by_run;
        for (const auto& a : anns) by_run[a.run_id].push_back(a);
        std::vector<std::pair<std::string, LabelDistribution>> labels;
        report["labels"] = ordered_json::object();
        for (const auto& [run_id, list] : by_run) {
            labels.emplace_back(run_id, label_distribution(list));
            report["labels"][run_id] = distribution_to_json(labels.back().second);
        }
        if (labels.empty()) throw Error(ErrorCode::NoAnnotations, s.annotations);
        if (!rows.empty()) std::cout << '\n';
        std::cout << format_label_table(labels);
    }
    if (!s.output.empty()) write_text_atomic(s.output, report.dump(2) + "\n");
    return 0;
}

int cmd_sample(const Settings& s) {
    if (s.runs.size() != 1) throw Error(ErrorCode::InvalidArgument, "give exactly one --run");
    const auto run = read_run_file(s.runs.front());
    const auto pairs = sample_for_review(run, s.n, s.seed);
    std::ostringstream out;
    for (const auto& [q, c] : pairs) {
        ordered_json j;
        j["query_id"] = q;
        j["candidate_id"] = c;
        j["run_id"] = run.run_id;
        j["seed"] = s.seed;
        out << j.dump() << '\n';
    }
    if (s.output.empty()) {
        std::cout << out.str();
    } else {
        write_text_atomic(s.output, out.str());
        fmt::print("{} pairs\nwrote {}\n", pairs.size(), s.output);
    }
    return 0;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const Settings& s) {
    require(s.corpus, "--corpus");
    require(s.runs_dir, "--runs");
    require(s.annotations, "--annotations");
    auto corpus = load_corpus(s.corpus);
    auto runs = load_runs_dir(s.runs_dir);
    AnnotationStore store(s.annotations);
    ServiceOptions options;
    if (!s.token.empty()) options.token = s.token;
    if (!s.static_dir.empty()) options.static_dir = s.static_dir;
    Service service(std::move(corpus), std::move(runs), store, options);
    httplib::Server server;
    service.mount(server);
    g_server = &server;
    std::signal(SIGINT, [](int) { g_server->stop(); });
    std::signal(SIGTERM, [](int) { g_server->stop(); });
    fmt::print("serving {} runs, {} annotations on http://{}:{}\n", service.list_runs().size(), store.size(), s.host,
               s.port);
    std::fflush(stdout);
    if (!server.listen(s.host, s.port)) throw Error(ErrorCode::Io, fmt::format("cannot listen on {}:{}", s.host, s.port));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Survey question harmonisation: ranking, evaluation and review service"};
    app.require_subcommand(1);
    Settings s;

    auto corpus_opt = [&](CLI::App* c) { c->add_option("--corpus", s.corpus, "Corpus JSONL file"); };
    auto config_opt = [&](CLI::App* c) { c->add_option("--config", s.config_path, "JSON config file"); };

    auto* ingest = app.add_subcommand("ingest", "Validate a corpus and report counts");
    corpus_opt(ingest);
    ingest->add_option("--taxonomy", s.taxonomy, "Topic taxonomy JSON");
    ingest->add_option("--output,-o", s.output, "Write the normalised corpus here");
    ingest->add_flag("--code-list-only", s.code_list_only, "Keep only code-list questions in the output");

    auto* index = app.add_subcommand("index", "Build the BM25 index cache");
    corpus_opt(index);
    index->add_option("--output,-o", s.output, "Index file");
    index->add_flag("--stopwords", s.stopwords, "Drop English stopwords");

    auto add_ranking = [&](CLI::App* c) {
        corpus_opt(c);
        config_opt(c);
        c->add_option("--model", s.model, "bm25 | dense | hybrid | external");
        c->add_option("--k", s.k, "Candidates kept per query")->check(CLI::PositiveNumber);
        c->add_option("--depth", s.depth, "Re-rank depth")->check(CLI::PositiveNumber);
        c->add_option("--weights", s.weights, "Fusion weights dense,lex,multi");
        c->add_option("--embeddings", s.embeddings, "HEMB file");
        c->add_option("--index", s.index, "Index cache from `index`");
        c->add_option("--workers", s.workers, "Worker threads");
        c->add_flag("--stopwords", s.stopwords, "Drop English stopwords when building the index");
        c->add_option("--base", s.base, "Base end-to-end run");
        c->add_option("--scores", s.scores, "Pair score file for --model external");
        c->add_option("--export-manifest", s.manifest, "Write the pair manifest for --base and stop");
        c->add_option("--output,-o", s.output, "Run file");
    };
    auto* rank = app.add_subcommand("rank", "End-to-end ranking over all code-list questions");
    add_ranking(rank);
    rank->add_option("--mode", s.mode, "e2e | rerank");
    auto* rerank_cmd = app.add_subcommand("rerank", "Re-rank the top of a base run");
    add_ranking(rerank_cmd);

    auto* eval = app.add_subcommand("eval", "Topic-match metrics and label distributions");
    corpus_opt(eval);
    eval->add_option("--run", s.runs, "Run file (repeatable)");
    eval->add_option("--annotations", s.annotations, "Annotation JSONL");
    eval->add_flag("--weighted", s.weighted, "Support-weighted instead of macro averaging");
    eval->add_option("--output,-o", s.output, "Also write the JSON report here");

    auto* sample = app.add_subcommand("sample", "Seeded review sample of (query, top-1) pairs");
    sample->add_option("--run", s.runs, "Run file")->required();
    sample->add_option("--n", s.n, "Sample size");
    sample->add_option("--seed", s.seed, "Seed");
    sample->add_option("--output,-o", s.output, "Output JSONL (default stdout)");

    auto* serve = app.add_subcommand("serve", "HTTP API for the review UI");
    corpus_opt(serve);
    serve->add_option("--runs", s.runs_dir, "Directory of *.run.jsonl files");
    serve->add_option("--annotations", s.annotations, "Annotation log (created if missing)");
    serve->add_option("--host", s.host, "Bind address");
    serve->add_option("--port", s.port, "Port");
    serve->add_option("--token", s.token, "Require this bearer token");
    serve->add_option("--static", s.static_dir, "Serve files from this directory at /");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) return cmd_ingest(s);
        if (*index) return cmd_index(s);
        if (*rank) return cmd_rank(s, *rank);
        if (*rerank_cmd) return cmd_rerank(s, *rerank_cmd);
        if (*eval) return cmd_eval(s);
        if (*sample) return cmd_sample(s);
        if (*serve) return cmd_serve(s);
    } catch (const Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 0;
}
