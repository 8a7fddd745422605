#include "harmoniser/ranking_pipeline.hpp"

#include "harmoniser/error.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace harmoniser {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kRunFormat = "harmoniser-run";
constexpr int kRunVersion = 1;

// Runs fn(i) for i in [0, n) on `workers` threads, striding the indices.
// Each index is handled by exactly one worker, so output slots indexed by i
// are written without sharing.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::uint64_t fnv1a(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

[[noreturn]] void bad_run(std::size_t line, const std::string& why) {
    throw Error(ErrorCode::MalformedRecord, "run file line " + std::to_string(line) + ": " + why);
}

ordered_json parse_line(const std::string& text, std::size_t line) {
    try {
        auto j = ordered_json::parse(text);
        if (!j.is_object()) bad_run(line, "record is not an object");
        return j;
    } catch (const nlohmann::json::parse_error& e) {
        bad_run(line, e.what());
    }
}

std::string string_field(const ordered_json& j, const char* key, std::size_t line) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) bad_run(line, std::string("missing string field '") + key + "'");
    return it->get<std::string>();
}

}  // namespace

std::string_view to_string(Model m) noexcept {
    switch (m) {
    case Model::Bm25: return "bm25";
    case Model::Dense: return "dense";
    case Model::Hybrid: return "hybrid";
    case Model::External: return "external";
    }
    return "bm25";
}

std::string_view to_string(Mode m) noexcept { return m == Mode::EndToEnd ? "end_to_end" : "rerank"; }

std::optional<Model> parse_model(std::string_view s) noexcept {
    if (s == "bm25") return Model::Bm25;
    if (s == "dense") return Model::Dense;
    if (s == "hybrid") return Model::Hybrid;
    if (s == "external") return Model::External;
    return std::nullopt;
}

std::optional<Mode> parse_mode(std::string_view s) noexcept {
    if (s == "end_to_end" || s == "e2e") return Mode::EndToEnd;
    if (s == "rerank") return Mode::Rerank;
    return std::nullopt;
}

void validate_run(const RankingRun& run) {
    const bool ascending = run.model == Model::Dense && run.mode == Mode::EndToEnd;
    for (const auto& [query, list] : run.per_query) {
        auto fail = [&](const std::string& why) {
            throw Error(ErrorCode::MalformedRecord, "run " + run.run_id + ", query " + query + ": " + why);
        };
        if (list.size() > run.k) fail("more than k candidates");
        std::set<std::string_view> seen;
        for (std::size_t i = 0; i < list.size(); ++i) {
            if (list[i].id == query) fail("query ranked against itself");
            if (!seen.insert(list[i].id).second) fail("candidate '" + list[i].id + "' listed twice");
            if (i > 0 && run.mode == Mode::EndToEnd) {
                const bool ordered = ascending ? list[i - 1].score <= list[i].score : list[i - 1].score >= list[i].score;
                if (!ordered) fail("candidates out of order at rank " + std::to_string(i + 1));
            }
        }
    }
}

std::string derive_run_id(Model model, Mode mode, std::size_t k, const ordered_json& config) {
    std::string key = std::string(to_string(model)) + '|' + std::string(to_string(mode)) + '|' + std::to_string(k) +
                      '|' + config.dump();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(key)));
    return std::string(to_string(model)) + "-" + std::string(to_string(mode)) + "-" + std::string(buf, 12);
}

std::vector<std::string> Bm25Retriever::universe() const {
    auto ids = searcher_->index().doc_ids();
    return {ids.begin(), ids.end()};
}

std::vector<ScoredId> Bm25Retriever::top_k(const std::string& query_id, std::size_t k, const IdSet& exclude) const {
    auto doc = searcher_->index().doc_number(query_id);
    if (!doc) throw Error(ErrorCode::UnknownQuestion, "'" + query_id + "' is not indexed");
    IdSet ex = exclude;
    ex.insert(query_id);
    return searcher_->top_k_terms(searcher_->index().doc_terms(*doc), k, ex);
}

std::vector<std::string> DenseRetriever::universe() const {
    std::vector<std::string> ids;
    ids.reserve(store_->size());
    for (const auto& r : store_->records()) ids.push_back(r.question_id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<ScoredId> DenseRetriever::top_k(const std::string& query_id, std::size_t k, const IdSet& exclude) const {
    return dense_top_k(query_id, k, exclude, *store_);
}

std::vector<std::string> HybridRetriever::universe() const {
    auto ids = index_->doc_ids();
    return {ids.begin(), ids.end()};
}

std::vector<ScoredId> HybridRetriever::top_k(const std::string& query_id, std::size_t k, const IdSet& exclude) const {
    return scorer_->top_k(query_id, k, exclude);
}

std::vector<double> PairScorer::score(const std::string& query_id, std::span<const std::string> candidates) const {
    std::vector<double> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.push_back(fn_(query_id, c));
    return out;
}

std::vector<double> DenseCandidateScorer::score(const std::string& query_id,
                                                std::span<const std::string> candidates) const {
    auto q = store_->position(query_id);
    if (!q) throw Error(ErrorCode::ScorerFailure, query_id + ": no embedding");
    std::vector<double> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) {
        auto pos = store_->position(c);
        if (!pos) throw Error(ErrorCode::ScorerFailure, query_id + ", " + c + ": no embedding for candidate");
        out.push_back(1.0 - store_->distance(*q, *pos));
    }
    return out;
}

std::vector<double> HybridCandidateScorer::score(const std::string& query_id,
                                                 std::span<const std::string> candidates) const {
    try {
        return scorer_->score_pool(query_id, candidates);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::UnknownQuestion) throw Error(ErrorCode::ScorerFailure, query_id + ": " + e.detail());
        throw;
    }
}

std::vector<double> ExternalScorer::score(const std::string& query_id, std::span<const std::string> candidates) const {
    std::vector<double> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) {
        auto it = scores_.find(PairKey{query_id, c});
        if (it == scores_.end()) throw Error(ErrorCode::ScorerFailure, query_id + ", " + c + ": no score for pair");
        out.push_back(it->second);
    }
    return out;
}

RankingRun end_to_end_rank(const Retriever& retriever, const Corpus& corpus, std::size_t k, ordered_json config,
                           const PipelineOptions& options) {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    std::vector<std::string> queries;
    std::unordered_set<std::string_view> code_list;
    for (const auto& q : corpus) {
        if (!q.is_code_list) continue;
        queries.push_back(q.id);
        code_list.insert(q.id);
    }
    IdSet outside;
    for (auto& id : retriever.universe()) {
        if (!code_list.contains(id)) outside.insert(std::move(id));
    }

    std::vector<std::vector<ScoredId>> lists(queries.size());
    parallel_for(queries.size(), options.workers, [&](std::size_t i) {
        // The retriever excludes the query itself; everything outside the
        // code-list corpus is excluded here.
        lists[i] = retriever.top_k(queries[i], k, outside);
    });

    RankingRun run;
    run.model = retriever.model();
    run.mode = Mode::EndToEnd;
    run.k = k;
    run.config = std::move(config);
    run.run_id = derive_run_id(run.model, run.mode, run.k, run.config);
    for (std::size_t i = 0; i < queries.size(); ++i) run.per_query.emplace(std::move(queries[i]), std::move(lists[i]));
    validate_run(run);
    return run;
}

RankingRun rerank(const RankingRun& base, const CandidateScorer& scorer, std::size_t depth, std::size_t k,
                  ordered_json config, const PipelineOptions& options) {
    if (base.mode != Mode::EndToEnd) {
        throw Error(ErrorCode::MissingBaseRun, "base run " + base.run_id + " is not an end-to-end run");
    }
    if (depth == 0 || k == 0) throw Error(ErrorCode::InvalidArgument, "depth and k must be >= 1");

    std::vector<const std::string*> queries;
    std::vector<const std::vector<ScoredId>*> bases;
    for (const auto& [q, list] : base.per_query) {
        queries.push_back(&q);
        bases.push_back(&list);
    }
    std::vector<std::vector<ScoredId>> lists(queries.size());
    parallel_for(queries.size(), options.workers, [&](std::size_t i) {
        const auto& list = *bases[i];
        const auto n = std::min(depth, list.size());
        std::vector<std::string> pool;
        pool.reserve(n);
        for (std::size_t j = 0; j < n; ++j) pool.push_back(list[j].id);
        const auto scores = scorer.score(*queries[i], pool);
        if (scores.size() != pool.size()) {
            throw Error(ErrorCode::ScorerFailure, *queries[i] + ": scorer returned the wrong number of scores");
        }
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
        auto& out = lists[i];
        out.reserve(std::min(n, k));
        for (std::size_t j = 0; j < n && j < k; ++j) out.push_back({pool[order[j]], scores[order[j]]});
    });

    RankingRun run;
    run.model = scorer.model();
    run.mode = Mode::Rerank;
    run.k = k;
    config["base_run"] = base.run_id;
    config["depth"] = depth;
    run.config = std::move(config);
    run.run_id = derive_run_id(run.model, run.mode, run.k, run.config);
    for (std::size_t i = 0; i < queries.size(); ++i) run.per_query.emplace(*queries[i], std::move(lists[i]));
    validate_run(run);
    return run;
}

void write_run(std::ostream& out, const RankingRun& run) {
    ordered_json header;
    header["format"] = kRunFormat;
    header["version"] = kRunVersion;
    header["run_id"] = run.run_id;
    header["model"] = to_string(run.model);
    header["mode"] = to_string(run.mode);
    header["k"] = run.k;
    auto empty = ordered_json::array();
    for (const auto& [q, list] : run.per_query) {
        if (list.empty()) empty.push_back(q);
    }
    header["empty_queries"] = std::move(empty);
    header["config"] = run.config;
    out << header.dump() << '\n';
    for (const auto& [q, list] : run.per_query) {
        for (std::size_t i = 0; i < list.size(); ++i) {
            ordered_json rec;
            rec["query_id"] = q;
            rec["rank"] = i + 1;
            rec["candidate_id"] = list[i].id;
            rec["score"] = list[i].score;
            out << rec.dump() << '\n';
        }
    }
    if (!out) throw Error(ErrorCode::Io, "run write failed");
}

std::string run_to_string(const RankingRun& run) {
    std::ostringstream out;
    write_run(out, run);
    return out.str();
}

void write_run_file(const std::string& path, const RankingRun& run) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot create " + tmp);
        write_run(out, run);
        out.flush();
        if (!out) throw Error(ErrorCode::Io, "write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

RankingRun read_run(std::istream& in) {
    std::string text;
    std::size_t line = 0;
    if (!std::getline(in, text)) throw Error(ErrorCode::EmptyRun, "run file is empty");
    ++line;
    const auto header = parse_line(text, line);
    if (header.value("format", "") != kRunFormat) bad_run(line, "not a run file");
    if (header.value("version", 0) != kRunVersion) {
        throw Error(ErrorCode::UnsupportedVersion, "run file version " + header.value("version", ordered_json()).dump());
    }
    RankingRun run;
    run.run_id = string_field(header, "run_id", line);
    auto model = parse_model(string_field(header, "model", line));
    auto mode = parse_mode(string_field(header, "mode", line));
    if (!model || !mode) bad_run(line, "unknown model or mode");
    run.model = *model;
    run.mode = *mode;
    auto k = header.find("k");
    if (k == header.end() || !k->is_number_unsigned()) bad_run(line, "missing k");
    run.k = k->get<std::size_t>();
    if (auto it = header.find("config"); it != header.end()) run.config = *it;
    if (auto it = header.find("empty_queries"); it != header.end()) {
        for (const auto& q : *it) run.per_query[q.get<std::string>()];
    }

    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) continue;
        const auto rec = parse_line(text, line);
        auto query = string_field(rec, "query_id", line);
        auto cand = string_field(rec, "candidate_id", line);
        auto rank = rec.find("rank");
        auto score = rec.find("score");
        if (rank == rec.end() || !rank->is_number_unsigned()) bad_run(line, "missing rank");
        if (score == rec.end() || !score->is_number()) bad_run(line, "missing score");
        auto& list = run.per_query[query];
        if (rank->get<std::size_t>() != list.size() + 1) bad_run(line, "ranks must be consecutive from 1");
        list.push_back({std::move(cand), score->get<double>()});
    }
    validate_run(run);
    return run;
}

RankingRun read_run_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingBaseRun, "cannot open run file " + path);
    return read_run(in);
}

std::vector<PairKey> rerank_pairs(const RankingRun& base, std::size_t depth) {
    std::vector<PairKey> pairs;
    for (const auto& [q, list] : base.per_query) {
        for (std::size_t j = 0; j < list.size() && j < depth; ++j) pairs.emplace_back(q, list[j].id);
    }
    return pairs;
}

void write_pair_manifest(std::ostream& out, std::span<const PairKey> pairs) {
    for (const auto& [q, c] : pairs) {
        ordered_json rec;
        rec["query_id"] = q;
        rec["candidate_id"] = c;
        out << rec.dump() << '\n';
    }
}

std::vector<PairKey> read_pair_manifest(std::istream& in) {
    std::vector<PairKey> pairs;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) continue;
        const auto rec = parse_line(text, line);
        pairs.emplace_back(string_field(rec, "query_id", line), string_field(rec, "candidate_id", line));
    }
    return pairs;
}

PairScores read_pair_scores(std::istream& in) {
    PairScores scores;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) continue;
        const auto rec = parse_line(text, line);
        PairKey key{string_field(rec, "query_id", line), string_field(rec, "candidate_id", line)};
        auto s = rec.find("score");
        if (s == rec.end() || !s->is_number()) bad_run(line, "missing score");
        if (!scores.emplace(std::move(key), s->get<double>()).second) bad_run(line, "pair scored twice");
    }
    return scores;
}

void write_pair_scores(std::ostream& out, const PairScores& scores) {
    for (const auto& [key, score] : scores) {
        ordered_json rec;
        rec["query_id"] = key.first;
        rec["candidate_id"] = key.second;
        rec["score"] = score;
        out << rec.dump() << '\n';
    }
}

void check_pairs_match(std::span<const PairKey> manifest, const PairScores& scores) {
    std::set<PairKey> wanted(manifest.begin(), manifest.end());
    for (const auto& key : wanted) {
        if (!scores.contains(key)) {
            throw Error(ErrorCode::ScorerFailure, key.first + ", " + key.second + ": pair missing from score file");
        }
    }
    for (const auto& [key, _] : scores) {
        if (!wanted.contains(key)) {
            throw Error(ErrorCode::ScorerFailure, key.first + ", " + key.second + ": scored pair not in manifest");
        }
    }
}

}  // namespace harmoniser
