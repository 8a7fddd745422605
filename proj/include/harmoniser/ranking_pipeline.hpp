#pragma once

#include "harmoniser/corpus.hpp"
#include "harmoniser/embedding_store.hpp"
#include "harmoniser/hybrid_scorer.hpp"
#include "harmoniser/lexical_index.hpp"

#include <json.hpp>

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace harmoniser {

enum class Model { Bm25, Dense, Hybrid, External };
enum class Mode { EndToEnd, Rerank };

std::string_view to_string(Model m) noexcept;
std::string_view to_string(Mode m) noexcept;
std::optional<Model> parse_model(std::string_view s) noexcept;
std::optional<Mode> parse_mode(std::string_view s) noexcept;

struct RankingRun {
    std::string run_id;
    Model model = Model::Bm25;
    Mode mode = Mode::EndToEnd;
    std::size_t k = 0;
    /// Ordered by query id. Every query of the run has an entry, possibly
    /// an empty list.
    std::map<std::string, std::vector<ScoredId>> per_query;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();

    bool operator==(const RankingRun&) const = default;
};

/// Throws MalformedRecord if a list contains its own query, is longer
/// than k, or is out of order for the run's model (descending score for end
/// to end runs).
void validate_run(const RankingRun& run);

/// Deterministic id derived from the model, mode, k and config.
std::string derive_run_id(Model model, Mode mode, std::size_t k, const nlohmann::ordered_json& config);

/// First-stage retrieval over a fixed collection.
class Retriever {
public:
    virtual ~Retriever() = default;
    virtual Model model() const = 0;
    /// Ids the retriever can return.
    virtual std::vector<std::string> universe() const = 0;
    virtual std::vector<ScoredId> top_k(const std::string& query_id, std::size_t k, const IdSet& exclude) const = 0;
};

class Bm25Retriever final : public Retriever {
public:
    explicit Bm25Retriever(const Bm25Searcher& searcher) : searcher_(&searcher) {}
    Model model() const override { return Model::Bm25; }
    std::vector<std::string> universe() const override;
    std::vector<ScoredId> top_k(const std::string& query_id, std::size_t k, const IdSet& exclude) const override;

private:
    const Bm25Searcher* searcher_;
};

/// Scores are cosine distances, so lists ascend.
class DenseRetriever final : public Retriever {
public:
    explicit DenseRetriever(const EmbeddingStore& store) : store_(&store) {}
    Model model() const override { return Model::Dense; }
    std::vector<std::string> universe() const override;
    std::vector<ScoredId> top_k(const std::string& query_id, std::size_t k, const IdSet& exclude) const override;

private:
    const EmbeddingStore* store_;
};

class HybridRetriever final : public Retriever {
public:
    explicit HybridRetriever(const HybridScorer& scorer, const InvertedIndex& index)
        : scorer_(&scorer), index_(&index) {}
    Model model() const override { return Model::Hybrid; }
    std::vector<std::string> universe() const override;
    std::vector<ScoredId> top_k(const std::string& query_id, std::size_t k, const IdSet& exclude) const override;

private:
    const HybridScorer* scorer_;
    const InvertedIndex* index_;
};

/// Second-stage scorer over a query's candidate pool; higher is better.
class CandidateScorer {
public:
    virtual ~CandidateScorer() = default;
    virtual Model model() const = 0;
    virtual std::vector<double> score(const std::string& query_id, std::span<const std::string> candidates) const = 0;
};

/// Adapts a plain (query, candidate) -> score function.
class PairScorer final : public CandidateScorer {
public:
    using Fn = std::function<double(const std::string&, const std::string&)>;
    PairScorer(Fn fn, Model model = Model::External) : fn_(std::move(fn)), model_(model) {}
    Model model() const override { return model_; }
    std::vector<double> score(const std::string& query_id, std::span<const std::string> candidates) const override;

private:
    Fn fn_;
    Model model_;
};

/// 1 - cosine distance.
class DenseCandidateScorer final : public CandidateScorer {
public:
    explicit DenseCandidateScorer(const EmbeddingStore& store) : store_(&store) {}
    Model model() const override { return Model::Dense; }
    std::vector<double> score(const std::string& query_id, std::span<const std::string> candidates) const override;

private:
    const EmbeddingStore* store_;
};

/// Fused score, signals normalised within the re-ranked pool.
class HybridCandidateScorer final : public CandidateScorer {
public:
    explicit HybridCandidateScorer(const HybridScorer& scorer) : scorer_(&scorer) {}
    Model model() const override { return Model::Hybrid; }
    std::vector<double> score(const std::string& query_id, std::span<const std::string> candidates) const override;

private:
    const HybridScorer* scorer_;
};

using PairKey = std::pair<std::string, std::string>;
using PairScores = std::map<PairKey, double>;

/// Scores computed out of process (e.g. by a cross-encoder) and read back
/// from a score file. A pair without a score raises ScorerFailure.
class ExternalScorer final : public CandidateScorer {
public:
    explicit ExternalScorer(PairScores scores) : scores_(std::move(scores)) {}
    Model model() const override { return Model::External; }
    std::vector<double> score(const std::string& query_id, std::span<const std::string> candidates) const override;
    const PairScores& scores() const noexcept { return scores_; }

private:
    PairScores scores_;
};

struct PipelineOptions {
    std::size_t workers = 1;
};

/// Leave-one-out ranking: every code-list question of `corpus` is a query
/// and its candidates are the other code-list questions known to the
/// retriever. Throws UnknownQuestion if a query cannot be scored.
RankingRun end_to_end_rank(const Retriever& retriever, const Corpus& corpus, std::size_t k,
                           nlohmann::ordered_json config = nlohmann::ordered_json::object(),
                           const PipelineOptions& options = {});

inline constexpr std::size_t kDefaultRerankDepth = 50;

/// Re-scores each query's first `depth` base candidates and keeps the best
/// k. Equal new scores keep their base order. Throws MissingBaseRun when
/// `base` is not an end-to-end run, ScorerFailure when the scorer cannot
/// score a pair.
RankingRun rerank(const RankingRun& base, const CandidateScorer& scorer, std::size_t depth, std::size_t k,
                  nlohmann::ordered_json config = nlohmann::ordered_json::object(),
                  const PipelineOptions& options = {});

/// Run file: a header line carrying the run metadata and config snapshot,
/// then one {query_id, rank, candidate_id, score} line per entry.
void write_run(std::ostream& out, const RankingRun& run);
std::string run_to_string(const RankingRun& run);
/// Writes to a temporary sibling and renames, so a partial run never
/// appears at `path`.
void write_run_file(const std::string& path, const RankingRun& run);
RankingRun read_run(std::istream& in);
RankingRun read_run_file(const std::string& path);

/// Pairs a re-ranker must score: each query's first `depth` candidates.
std::vector<PairKey> rerank_pairs(const RankingRun& base, std::size_t depth);
void write_pair_manifest(std::ostream& out, std::span<const PairKey> pairs);
std::vector<PairKey> read_pair_manifest(std::istream& in);
PairScores read_pair_scores(std::istream& in);
void write_pair_scores(std::ostream& out, const PairScores& scores);
/// Throws ScorerFailure naming the first pair that is in one side only.
void check_pairs_match(std::span<const PairKey> manifest, const PairScores& scores);

}  // namespace harmoniser
