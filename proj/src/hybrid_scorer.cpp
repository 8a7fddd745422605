#include "harmoniser/hybrid_scorer.hpp"

#include "harmoniser/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

namespace harmoniser {

void FusionWeights::validate() const {
    for (double w : {dense, lex, multi}) {
        if (!std::isfinite(w) || w < 0.0) throw Error(ErrorCode::InvalidArgument, "fusion weights must be finite and >= 0");
    }
    if (!(total() > 0.0)) throw Error(ErrorCode::InvalidArgument, "fusion weights must not all be zero");
}

FusionWeights parse_weights(std::string_view text) {
    double parts[3];
    std::size_t n = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find(',', start);
        if (end == std::string_view::npos) end = text.size();
        if (n == 3) throw Error(ErrorCode::InvalidArgument, "expected three weights: " + std::string(text));
        auto field = text.substr(start, end - start);
        while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
        while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
        auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), parts[n]);
        if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty()) {
            throw Error(ErrorCode::InvalidArgument, "bad weight '" + std::string(field) + "'");
        }
        ++n;
        start = end + 1;
    }
    if (n != 3) throw Error(ErrorCode::InvalidArgument, "expected three weights: " + std::string(text));
    FusionWeights w{parts[0], parts[1], parts[2]};
    w.validate();
    return w;
}

double max_sim(const MatrixView& query, const MatrixView& doc) { return max_sim(query, {}, doc, {}); }

double max_sim(const MatrixView& query, std::span<const double> query_inv_norms, const MatrixView& doc,
               std::span<const double> doc_inv_norms) {
    if (query.dim != doc.dim) {
        throw Error(ErrorCode::DimensionMismatch, std::to_string(query.dim) + " vs " + std::to_string(doc.dim));
    }
    if (query.rows == 0 || doc.rows == 0) throw Error(ErrorCode::EmptyMatrix, "max_sim needs at least one row per side");
    double total = 0.0;
    for (std::size_t i = 0; i < query.rows; ++i) {
        const auto q = query.row(i);
        const double qs = query_inv_norms.empty() ? 1.0 : query_inv_norms[i];
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < doc.rows; ++j) {
            const double ds = doc_inv_norms.empty() ? 1.0 : doc_inv_norms[j];
            best = std::max(best, dot(q, doc.row(j)) * qs * ds);
        }
        total += best;
    }
    return total / static_cast<double>(query.rows);
}

std::vector<double> normalise_signals(std::span<const double> raw) {
    std::vector<double> out(raw.size(), 1.0);
    if (raw.empty()) return out;
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / range;
    return out;
}

double fuse(const SignalVector& s, const FusionWeights& w) {
    auto term = [](double weight, const std::optional<double>& signal, const char* name) {
        if (weight == 0.0) return 0.0;
        if (!signal) throw Error(ErrorCode::MissingSignal, name);
        return weight * *signal;
    };
    const double num = term(w.dense, s.dense, "dense") + term(w.lex, s.lex, "lexical") + term(w.multi, s.multi, "multi");
    return num / w.total();
}

void rank_descending(std::vector<ScoredId>& items, std::size_t k) {
    auto better = [](const ScoredId& a, const ScoredId& b) {
        return a.score > b.score || (a.score == b.score && a.id < b.id);
    };
    const auto n = std::min(k, items.size());
    std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n), items.end(), better);
    items.resize(n);
}

HybridScorer::HybridScorer(const Bm25Searcher& lexical, const EmbeddingStore& store, FusionWeights weights)
    : lexical_(&lexical), store_(&store), weights_(weights) {
    weights_.validate();
    if (weights_.multi > 0.0 && !store.has_token_level()) {
        throw Error(ErrorCode::MissingSignal, "multi-vector weight is positive but the store has no token matrices");
    }
}

std::size_t HybridScorer::store_position(std::string_view id) const {
    auto pos = store_->position(id);
    if (!pos) throw Error(ErrorCode::UnknownQuestion, "no embedding for '" + std::string(id) + "'");
    return *pos;
}

std::uint32_t HybridScorer::doc_number(std::string_view id) const {
    auto d = lexical_->index().doc_number(id);
    if (!d) throw Error(ErrorCode::UnknownQuestion, "'" + std::string(id) + "' is not indexed");
    return *d;
}

std::vector<double> HybridScorer::lexical_raw(std::string_view query_id, std::span<const std::string> candidates) const {
    const auto& index = lexical_->index();
    const auto query_terms = index.doc_terms(doc_number(query_id));
    std::vector<double> raw;
    raw.reserve(candidates.size());
    // Small pools: per-document lookups; large pools: one accumulator pass.
    if (candidates.size() * 8 < index.doc_count()) {
        for (const auto& c : candidates) raw.push_back(lexical_->score_terms(query_terms, doc_number(c)));
    } else {
        const auto all = lexical_->score_all_terms(query_terms);
        for (const auto& c : candidates) raw.push_back(all[doc_number(c)]);
    }
    return raw;
}

std::vector<SignalVector> HybridScorer::raw_signals(std::string_view query_id,
                                                    std::span<const std::string> candidates) const {
    std::vector<SignalVector> out(candidates.size());
    if (weights_.lex > 0.0) {
        const auto lex = lexical_raw(query_id, candidates);
        for (std::size_t i = 0; i < out.size(); ++i) out[i].lex = lex[i];
    }
    if (weights_.dense > 0.0 || weights_.multi > 0.0) {
        const auto q = store_position(query_id);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const auto c = store_position(candidates[i]);
            if (weights_.dense > 0.0) out[i].dense = 1.0 - store_->distance(q, c);
            if (weights_.multi > 0.0) {
                out[i].multi = max_sim(store_->tokens(q), store_->token_inv_norms(q), store_->tokens(c),
                                       store_->token_inv_norms(c));
            }
        }
    }
    return out;
}

std::vector<double> HybridScorer::score_pool(std::string_view query_id, std::span<const std::string> candidates) const {
    auto signals = raw_signals(query_id, candidates);
    if (signals.empty()) return {};
    auto normalise = [&](std::optional<double> SignalVector::*field) {
        if (!(signals.front().*field)) return;
        std::vector<double> raw;
        raw.reserve(signals.size());
        for (const auto& s : signals) raw.push_back(*(s.*field));
        const auto norm = normalise_signals(raw);
        for (std::size_t i = 0; i < signals.size(); ++i) signals[i].*field = norm[i];
    };
    normalise(&SignalVector::dense);
    normalise(&SignalVector::lex);
    normalise(&SignalVector::multi);
    std::vector<double> scores;
    scores.reserve(signals.size());
    for (const auto& s : signals) scores.push_back(fuse(s, weights_));
    return scores;
}

std::vector<ScoredId> HybridScorer::top_k(std::string_view query_id, std::size_t k, const IdSet& exclude) const {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    doc_number(query_id);
    if (weights_.dense > 0.0 || weights_.multi > 0.0) store_position(query_id);
    std::vector<std::string> pool;
    for (const auto& id : lexical_->index().doc_ids()) {
        if (id != query_id && !exclude.contains(id)) pool.push_back(id);
    }
    const auto scores = score_pool(query_id, pool);
    std::vector<ScoredId> ranked;
    ranked.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) ranked.push_back({std::move(pool[i]), scores[i]});
    rank_descending(ranked, k);
    return ranked;
}

std::vector<ScoredId> hybrid_top_k(std::string_view query_id, std::size_t k, const IdSet& exclude,
                                   const InvertedIndex& index, const Bm25Params& params, const EmbeddingStore& store,
                                   const FusionWeights& weights) {
    Bm25Searcher searcher(index, params);
    return HybridScorer(searcher, store, weights).top_k(query_id, k, exclude);
}

std::vector<ScoredId> multi_vector_top_k(std::string_view query_id, std::size_t k, const IdSet& exclude,
                                         const EmbeddingStore& store) {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    if (!store.has_token_level()) throw Error(ErrorCode::MissingSignal, "store has no token matrices");
    auto q = store.position(query_id);
    if (!q) throw Error(ErrorCode::UnknownQuestion, std::string(query_id));
    std::vector<ScoredId> ranked;
    for (std::size_t i = 0; i < store.size(); ++i) {
        if (i == *q || exclude.contains(store.id(i))) continue;
        ranked.push_back({store.id(i), max_sim(store.tokens(*q), store.token_inv_norms(*q), store.tokens(i),
                                               store.token_inv_norms(i))});
    }
    rank_descending(ranked, k);
    return ranked;
}

}  // namespace harmoniser
