#pragma once

#include "harmoniser/embedding_store.hpp"
#include "harmoniser/lexical_index.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace harmoniser {

/// Defaults are the dense/lexical/multi-vector hybrid weights published for
/// M3-Embedding.
struct FusionWeights {
    double dense = 0.4;
    double lex = 0.2;
    double multi = 0.4;

    /// Throws InvalidArgument on a negative or non-finite weight, or when
    /// all three are zero.
    void validate() const;
    double total() const noexcept { return dense + lex + multi; }
};

/// Parses "d,l,m", e.g. "0.4,0.2,0.4".
FusionWeights parse_weights(std::string_view text);

/// An absent signal is std::nullopt, never a silent zero.
struct SignalVector {
    std::optional<double> dense;
    std::optional<double> lex;
    std::optional<double> multi;
};

/// Mean over query rows of the best dot product against any document row.
/// Rows are expected to be unit length. Throws DimensionMismatch or
/// EmptyMatrix.
double max_sim(const MatrixView& query, const MatrixView& doc);

/// Same as above for rows of arbitrary length: row i of each matrix is
/// scaled by the matching inverse norm.
double max_sim(const MatrixView& query, std::span<const double> query_inv_norms, const MatrixView& doc,
               std::span<const double> doc_inv_norms);

/// Min-max normalisation within one query's pool. A constant pool maps to
/// 1.0 everywhere.
std::vector<double> normalise_signals(std::span<const double> raw);

/// Weighted mean of the signals. Throws MissingSignal when a signal with a
/// positive weight is absent.
double fuse(const SignalVector& signals, const FusionWeights& weights);

/// Scores candidate pools for one query with the three signals. Signals
/// with zero weight are not computed. Holds references to the searcher and
/// store.
class HybridScorer {
public:
    HybridScorer(const Bm25Searcher& lexical, const EmbeddingStore& store, FusionWeights weights);

    const FusionWeights& weights() const noexcept { return weights_; }

    /// Raw (unnormalised) signals per candidate, in candidate order.
    std::vector<SignalVector> raw_signals(std::string_view query_id, std::span<const std::string> candidates) const;

    /// Fused scores, with each signal normalised over `candidates`.
    std::vector<double> score_pool(std::string_view query_id, std::span<const std::string> candidates) const;

    /// Fused ranking over every indexed question except the query and
    /// `exclude`. Descending score, ties by ascending id.
    std::vector<ScoredId> top_k(std::string_view query_id, std::size_t k, const IdSet& exclude) const;

private:
    std::size_t store_position(std::string_view id) const;
    std::uint32_t doc_number(std::string_view id) const;
    std::vector<double> lexical_raw(std::string_view query_id, std::span<const std::string> candidates) const;

    const Bm25Searcher* lexical_;
    const EmbeddingStore* store_;
    FusionWeights weights_;
};

std::vector<ScoredId> hybrid_top_k(std::string_view query_id, std::size_t k, const IdSet& exclude,
                                   const InvertedIndex& index, const Bm25Params& params, const EmbeddingStore& store,
                                   const FusionWeights& weights);

/// MaxSim-only ranking: descending score, ties by ascending id.
std::vector<ScoredId> multi_vector_top_k(std::string_view query_id, std::size_t k, const IdSet& exclude,
                                         const EmbeddingStore& store);

/// Sorts descending by score, ties by ascending id, and truncates to k.
void rank_descending(std::vector<ScoredId>& items, std::size_t k);

}  // namespace harmoniser
