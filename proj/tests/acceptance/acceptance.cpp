// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include "harmoniser/corpus.hpp"
#include "harmoniser/embedding_store.hpp"
#include "harmoniser/error.hpp"
#include "harmoniser/evaluation.hpp"
#include "harmoniser/hybrid_scorer.hpp"
#include "harmoniser/lexical_index.hpp"
#include "harmoniser/ranking_pipeline.hpp"

#include "support/oracles.hpp"
#include "support/synthetic.hpp"

#include <fmt/format.h>

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace harmoniser;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = HARMONISER_FIXTURES;

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

double peak_rss_mb() {
    rusage u{};
    getrusage(RUSAGE_SELF, &u);
    return static_cast<double>(u.ru_maxrss) / 1024.0;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::string> ids(const std::vector<ScoredId>& v) {
    std::vector<std::string> out;
    out.reserve(v.size());
    for (const auto& s : v) out.push_back(s.id);
    return out;
}

Corpus fixture_corpus() { return load_corpus((kFixtures / "corpus.jsonl").string()); }

RankingRun fixture_run(const std::string& prefix) {
    for (const auto& e : fs::directory_iterator(kFixtures / "runs")) {
        if (e.path().filename().string().rfind(prefix, 0) == 0) return read_run_file(e.path().string());
    }
    throw Error(ErrorCode::UnknownRun, prefix);
}

Outcome bm25_oracle_equivalence() {
    const auto start = Clock::now();
    std::mt19937_64 rng(558);
    std::size_t queries = 0;
    double worst = 0.0;
    for (int corpus_no = 0; corpus_no < 100; ++corpus_no) {
        const auto n = 1 + synth::draw(rng, 200);
        const auto docs = synth::random_docs(n, 30, 20 + synth::draw(rng, 200), rng);
        const auto index = InvertedIndex::from_documents(docs);
        std::vector<oracle::Doc> od;
        for (const auto& [id, toks] : docs) od.push_back({id, toks});
        const Bm25Params params;
        for (int qn = 0; qn < 5; ++qn) {
            std::vector<std::string> query = docs[synth::draw(rng, n)].second;
            if (qn == 4) query.push_back("unseen-token");
            const std::size_t k = 1 + synth::draw(rng, n + 2);
            std::set<std::string> ex;
            if (qn % 2 == 0) ex.insert(docs[synth::draw(rng, n)].first);
            const auto got = retrieve_top_k(query, k, IdSet(ex.begin(), ex.end()), index, params);
            const auto want = oracle::bm25_rank(query, od, params.k1, params.b, k, ex);
            ++queries;
            if (got.size() != want.size()) {
                return {false, fmt::format("corpus {} query {}: {} hits, oracle {}", corpus_no, qn, got.size(), want.size())};
            }
            for (std::size_t i = 0; i < got.size(); ++i) {
                if (got[i].id != want[i].id) {
                    return {false, fmt::format("corpus {} query {} rank {}: {} vs oracle {}", corpus_no, qn, i + 1,
                                               got[i].id, want[i].id)};
                }
                worst = std::max(worst, std::abs(got[i].score - want[i].score));
            }
        }
    }
    const double elapsed = seconds_since(start);
    const bool ok = worst <= 1e-9 && elapsed < 10.0;
    return {ok, fmt::format("100 corpora, {} queries, max |score diff| {:.1e} (tol 1e-9), {:.2f} s (limit 10 s)",
                            queries, worst, elapsed)};
}

Outcome micro_f1_identity() {
    std::mt19937_64 rng(559);
    const auto& topics = synth::topic_names();
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const auto n = 1 + synth::draw(rng, 500);
        std::vector<std::string> truth, pred;
        for (std::size_t i = 0; i < n; ++i) {
            truth.push_back(topics[synth::draw(rng, 16)]);
            pred.push_back(synth::draw(rng, 2) == 0 ? truth.back() : topics[synth::draw(rng, 16)]);
        }
        const auto m = classification_metrics(truth, pred);
        worst = std::max(worst, std::abs(micro_f1(truth, pred) - m.accuracy));
    }
    const std::vector<std::string> truth{"A", "A", "B"}, pred{"A", "B", "B"};
    const auto m = classification_metrics(truth, pred);
    const bool hand = m.accuracy == 2.0 / 3.0 && m.precision == 0.75 && m.recall == 0.75 && m.f1 == 2.0 / 3.0;
    return {worst <= 1e-12 && hand,
            fmt::format("1000 sets x 16 classes, max |micro-F1 - accuracy| {:.1e} (tol 1e-12); 3-sample case "
                        "acc {:.17g} P {:.17g} R {:.17g} F1 {:.17g}",
                        worst, m.accuracy, m.precision, m.recall, m.f1)};
}

Outcome degenerate_fusion() {
    const auto corpus = fixture_corpus();
    const auto store = load_store_file((kFixtures / "corpus.hemb").string());
    const auto index = build_index(corpus);
    const Bm25Searcher searcher(index, {});
    const HybridScorer dense_only(searcher, store, {1, 0, 0});
    const HybridScorer lex_only(searcher, store, {0, 1, 0});
    const HybridScorer multi_only(searcher, store, {0, 0, 1});
    const auto all = corpus.size();
    std::size_t checked = 0;
    for (const auto& q : corpus) {
        const auto terms = index.doc_terms(*index.doc_number(q.id));
        const std::pair<std::vector<ScoredId>, std::vector<ScoredId>> cases[] = {
            {dense_only.top_k(q.id, all, {}), dense_top_k(q.id, all, {}, store)},
            {lex_only.top_k(q.id, all, {}), searcher.top_k_terms(terms, all, {q.id})},
            {multi_only.top_k(q.id, all, {}), multi_vector_top_k(q.id, all, {}, store)},
        };
        const char* names[] = {"(1,0,0) vs dense", "(0,1,0) vs BM25", "(0,0,1) vs MaxSim"};
        for (int c = 0; c < 3; ++c) {
            if (ids(cases[c].first) != ids(cases[c].second)) {
                return {false, fmt::format("query {}: {} rankings differ", q.id, names[c])};
            }
        }
        ++checked;
    }
    return {true, fmt::format("{} queries x 3 weightings, full rankings of {} candidates identical", checked, all - 1)};
}

Outcome rerank_contract() {
    const auto corpus = fixture_corpus();
    const auto store = load_store_file((kFixtures / "corpus.hemb").string());
    const auto index = build_index(corpus);
    const Bm25Searcher searcher(index, {});
    const HybridScorer hybrid(searcher, store, {});
    const auto base = fixture_run("bm25-");

    std::map<PairKey, double> base_scores;
    for (const auto& [q, list] : base.per_query) {
        for (const auto& s : list) base_scores[{q, s.id}] = s.score;
    }
    const auto fused = rerank(base, HybridCandidateScorer(hybrid), 50, 50);
    const auto constant = rerank(base, PairScorer([](auto&, auto&) { return 1.0; }), 50, 50);
    const auto negated =
        rerank(base, PairScorer([&](const std::string& q, const std::string& c) { return -base_scores.at({q, c}); }), 50, 50);
    for (const auto& [q, list] : base.per_query) {
        std::vector<std::string> top(ids(list));
        if (top.size() > 50) top.resize(50);
        auto perm = ids(fused.per_query.at(q));
        auto a = perm, b = top;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        if (a != b) return {false, "hybrid re-rank of " + q + " is not a permutation of the base top-50"};
        if (ids(constant.per_query.at(q)) != top) return {false, "constant scorer changed the order for " + q};
        std::reverse(top.begin(), top.end());
        if (ids(negated.per_query.at(q)) != top) return {false, "negated scorer did not reverse " + q};
    }
    return {true, fmt::format("{} queries: hybrid output is a permutation of the top-50, constant keeps order, "
                              "negated reverses",
                              base.per_query.size())};
}

Outcome planted_duplicates() {
    const auto corpus = load_corpus((kFixtures / "planted.jsonl").string());
    const auto index = build_index(corpus);
    const Bm25Searcher searcher(index, {});
    const auto run = end_to_end_rank(Bm25Retriever(searcher), corpus, 10);
    RankingRun subset = run;
    subset.per_query.clear();
    std::size_t twins = 0, at_one = 0;
    for (const auto& [q, list] : run.per_query) {
        if (q[0] == 'x') continue;
        ++twins;
        const auto twin = q.substr(0, q.size() - 1) + (q.back() == 'a' ? "b" : "a");
        if (!list.empty() && list[0].id == twin) ++at_one;
        subset.per_query[q] = list;
    }
    const auto m = topic_match_metrics(subset, corpus);
    const bool ok = twins == 20 && at_one == 20 && m.accuracy == 1.0;
    return {ok, fmt::format("{} pairs: {}/{} members retrieve their twin at rank 1, subset accuracy {:.2f}",
                            twins / 2, at_one, twins, m.accuracy)};
}

Outcome determinism() {
    const auto corpus = fixture_corpus();
    const auto store = load_store_file((kFixtures / "corpus.hemb").string());
    const auto index = build_index(corpus);
    const Bm25Searcher searcher(index, {});
    const HybridScorer hybrid(searcher, store, {});
    const auto committed = fixture_run("bm25-");
    const auto committed_text = slurp(kFixtures / "runs" / (committed.run_id + ".run.jsonl"));

    const Bm25Retriever bm25(searcher);
    const DenseRetriever dense(store);
    const HybridRetriever fused(hybrid, index);
    std::size_t compared = 0;
    for (const Retriever* r : {static_cast<const Retriever*>(&bm25), static_cast<const Retriever*>(&dense),
                               static_cast<const Retriever*>(&fused)}) {
        const auto config = r == &bm25 ? committed.config : nlohmann::ordered_json{{"model", to_string(r->model())}};
        const auto one = run_to_string(end_to_end_rank(*r, corpus, 50, config, {.workers = 1}));
        const auto again = run_to_string(end_to_end_rank(*r, corpus, 50, config, {.workers = 1}));
        const auto eight = run_to_string(end_to_end_rank(*r, corpus, 50, config, {.workers = 8}));
        if (one != again) return {false, fmt::format("{}: two identical runs differ", to_string(r->model()))};
        if (one != eight) return {false, fmt::format("{}: 1 vs 8 workers differ", to_string(r->model()))};
        if (r == &bm25 && one != committed_text) return {false, "bm25 run differs from the committed run file"};
        compared += 3;
    }
    const auto base = end_to_end_rank(bm25, corpus, 50, committed.config);
    const auto r1 = run_to_string(rerank(base, HybridCandidateScorer(hybrid), 50, 50, {}, {.workers = 1}));
    const auto r8 = run_to_string(rerank(base, HybridCandidateScorer(hybrid), 50, 50, {}, {.workers = 8}));
    if (r1 != r8) return {false, "hybrid re-rank: 1 vs 8 workers differ"};
    return {true, fmt::format("bm25/dense/hybrid runs byte-identical across repeats and 1 vs 8 workers ({} files), "
                              "bm25 equals committed file, re-rank 1 vs 8 identical",
                              compared)};
}

Outcome hemb_robustness() {
    const auto bytes = slurp(kFixtures / "corpus.hemb");
    const auto store = load_store_bytes(bytes);
    if (store_bytes(store) != bytes) return {false, "round trip is not bit-exact"};
    constexpr std::size_t kPreamble = 20;  // magic, version, flags, dim, count
    std::mt19937_64 rng(564);
    std::map<ErrorCode, int> codes;
    int accepted = 0;
    for (int i = 0; i < 1000; ++i) {
        auto m = bytes;
        const auto pos = synth::draw(rng, kPreamble);
        m[pos] = static_cast<char>(m[pos] ^ static_cast<char>(1 + synth::draw(rng, 255)));
        try {
            load_store_bytes(m);
            ++accepted;
        } catch (const Error& e) {
            ++codes[e.code()];
        }
    }
    std::string mix;
    for (const auto& [c, n] : codes) mix += fmt::format(" {}={}", to_string(c), n);
    return {accepted == 0, fmt::format("round trip bit-exact ({} bytes); 1000 header mutations, {} accepted;{}",
                                       bytes.size(), accepted, mix)};
}

Outcome bm25_performance() {
    const auto corpus = synth::survey_corpus({.questions = 30000, .seed = 565, .questionnaires = 400, .padding_words = 24});
    const auto start = Clock::now();
    const auto index = build_index(corpus);
    const Bm25Searcher searcher(index, {});
    const auto run = end_to_end_rank(Bm25Retriever(searcher), corpus, 50, {}, {.workers = 1});
    const double elapsed = seconds_since(start);
    const double rss = peak_rss_mb();
    const bool ok = elapsed < 120.0 && rss < 2048.0 && run.per_query.size() == 30000;
    return {ok, fmt::format("30000 questions, {:.1f} tokens avg, k=50, single thread: {:.1f} s (limit 120 s), "
                            "peak RSS {:.0f} MB (limit 2048 MB)",
                            index.avg_doc_length(), elapsed, rss)};
}

Outcome hybrid_performance() {
    const auto corpus = synth::survey_corpus({.questions = 5000, .seed = 566, .questionnaires = 100, .padding_words = 24});
    const auto store = synth::embeddings(corpus, 1024, 3, true, 8, "perf-1024");
    const auto index = build_index(corpus);
    const Bm25Searcher searcher(index, {});
    auto base = end_to_end_rank(Bm25Retriever(searcher), corpus, 50);
    while (base.per_query.size() > 1000) base.per_query.erase(std::prev(base.per_query.end()));
    const HybridScorer hybrid(searcher, store, {});
    const auto start = Clock::now();
    const auto run = rerank(base, HybridCandidateScorer(hybrid), 50, 50, {}, {.workers = 1});
    const double elapsed = seconds_since(start);
    return {elapsed < 60.0 && run.per_query.size() == 1000,
            fmt::format("1000 queries x top-50, dim 1024, 8 token rows, single thread: {:.2f} s (limit 60 s)", elapsed)};
}

/// Macro metrics computed directly from counts, independent of the library.
std::array<double, 4> naive_macro(const RankingRun& run, const Corpus& corpus) {
    std::map<std::string, std::array<double, 3>> c;  // tp, fp, fn
    double right = 0, total = 0;
    for (const auto& [q, list] : run.per_query) {
        if (list.empty()) continue;
        const auto& t = corpus.find(q)->topic.top_level;
        const auto& p = corpus.find(list[0].id)->topic.top_level;
        total += 1;
        if (t == p) {
            right += 1;
            c[t][0] += 1;
        } else {
            c[p][1] += 1;
            c[t][2] += 1;
        }
    }
    double ps = 0, rs = 0, fs_ = 0;
    for (const auto& [k, v] : c) {
        const double p = v[0] + v[1] > 0 ? v[0] / (v[0] + v[1]) : 0;
        const double r = v[0] + v[2] > 0 ? v[0] / (v[0] + v[2]) : 0;
        ps += p;
        rs += r;
        fs_ += p + r > 0 ? 2 * p * r / (p + r) : 0;
    }
    const double n = static_cast<double>(c.size());
    return {ps / n, rs / n, fs_ / n, right / total};
}

Outcome report_formats() {
    const auto corpus = fixture_corpus();
    std::vector<RankingRun> runs;
    for (const char* prefix : {"bm25-", "dense-", "hybrid-"}) runs.push_back(fixture_run(prefix));
    std::vector<std::pair<std::string, Metrics>> rows;
    for (const auto& r : runs) rows.emplace_back(r.run_id, topic_match_metrics(r, corpus));
    const auto metrics = format_metrics_table(rows);

    std::ifstream ann_in(kFixtures / "annotations.jsonl");
    const auto anns = read_annotations(ann_in);
    std::vector<std::pair<std::string, LabelDistribution>> labels;
    for (const auto* r : {&runs[0], &runs[2]}) {
        std::vector<Annotation> mine;
        for (const auto& a : anns) {
            if (a.run_id == r->run_id) mine.push_back(a);
        }
        labels.emplace_back(r->run_id, label_distribution(mine));
    }
    const auto label_table = format_label_table(labels);

    if (metrics != slurp(kFixtures / "golden" / "metrics_table.txt")) return {false, "metrics table differs from golden"};
    if (label_table != slurp(kFixtures / "golden" / "label_table.txt")) return {false, "label table differs from golden"};
    const auto header = metrics.substr(metrics.find('\n') + 1, metrics.find('\n', metrics.find('\n') + 1) - metrics.find('\n') - 1);
    const auto p = header.find("Precision"), r = header.find("Recall"), f = header.find("F1"), a = header.find("Accuracy");
    if (!(p < r && r < f && f < a && a != std::string::npos)) return {false, "metric columns out of order: " + header};
    const auto lh = label_table.substr(0, label_table.find('\n'));
    const auto l1 = lh.find("| 1 "), l1a = lh.find("| 1a"), l2 = lh.find("| 2 "), l3 = lh.find("| 3 ");
    if (!(l1 < l1a && l1a < l2 && l2 < l3 && l3 != std::string::npos)) return {false, "label columns out of order: " + lh};
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto want = naive_macro(runs[i], corpus);
        const auto& m = rows[i].second;
        const double got[] = {m.precision, m.recall, m.f1, m.accuracy};
        for (int j = 0; j < 4; ++j) {
            if (std::abs(got[j] - want[j]) > 1e-12) return {false, "metrics disagree with direct count for " + runs[i].run_id};
        }
    }
    for (const auto& [run_id, d] : labels) {
        const long sum = d.hundredths[0] + d.hundredths[1] + d.hundredths[2] + d.hundredths[3];
        if (sum < 9999 || sum > 10001) return {false, "label percentages of " + run_id + " do not sum to 100"};
    }
    return {true, fmt::format("metrics table ({} runs) and label table ({} runs) match golden files; columns "
                              "Precision|Recall|F1|Accuracy and 1|1a|2|3; values agree with direct counts",
                              rows.size(), labels.size())};
}

}  // namespace

int main() {
    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"BM25 oracle equivalence", bm25_oracle_equivalence},
        {"Micro-F1 equals accuracy; 3-sample macro case", micro_f1_identity},
        {"Degenerate fusion weights", degenerate_fusion},
        {"Re-rank contract", rerank_contract},
        {"Planted duplicates", planted_duplicates},
        {"Determinism and sharding", determinism},
        {"HEMB robustness", hemb_robustness},
        {"Desk-scale BM25 end-to-end", bm25_performance},
        {"Desk-scale hybrid re-rank", hybrid_performance},
        {"Report formats", report_formats},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        fmt::print("{} | {} | {}\n", o.pass ? "PASS" : "FAIL", name, o.detail);
        std::fflush(stdout);
    }
    fmt::print("{} of {} criteria passed\n", std::size(criteria) - static_cast<std::size_t>(failed), std::size(criteria));
    return failed == 0 ? 0 : 1;
}
