#pragma once

#include "harmoniser/corpus.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace harmoniser {

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;

    /// Throws InvalidArgument unless k1 >= 0 and b in [0, 1].
    void validate() const;
};

/// Lower-cases ASCII letters and splits on every byte that is not an ASCII
/// letter or digit. Bytes >= 0x80 are kept inside tokens so UTF-8 words stay
/// whole.
class Tokenizer {
public:
    Tokenizer() = default;
    explicit Tokenizer(std::set<std::string> stopwords) : stopwords_(std::move(stopwords)) {}

    std::vector<std::string> operator()(std::string_view text) const;
    const std::set<std::string>& stopwords() const noexcept { return stopwords_; }

private:
    std::set<std::string> stopwords_;
};

std::vector<std::string> tokenize(std::string_view text);
const std::set<std::string>& english_stopwords();

struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;

    bool operator==(const Posting&) const = default;
};

struct ScoredId {
    std::string id;
    double score;

    bool operator==(const ScoredId&) const = default;
};

using IdSet = std::unordered_set<std::string>;

/// Documents are numbered by ascending id, so a smaller document number
/// always means a smaller id.
class InvertedIndex {
public:
    using Document = std::pair<std::string, std::vector<std::string>>;

    /// Throws EmptyCorpus or DuplicateId.
    static InvertedIndex from_documents(std::vector<Document> docs, Tokenizer tokenizer = {});

    std::size_t doc_count() const noexcept { return doc_ids_.size(); }
    double avg_doc_length() const noexcept { return avg_doc_length_; }
    std::uint64_t total_length() const noexcept { return total_length_; }
    std::uint32_t doc_length(std::uint32_t doc) const { return doc_lengths_[doc]; }
    const std::string& doc_id(std::uint32_t doc) const { return doc_ids_[doc]; }
    std::span<const std::string> doc_ids() const noexcept { return doc_ids_; }
    std::optional<std::uint32_t> doc_number(std::string_view id) const;

    std::size_t term_count() const noexcept { return terms_.size(); }
    std::span<const std::string> terms() const noexcept { return terms_; }
    std::optional<std::uint32_t> term_number(std::string_view term) const;
    std::span<const Posting> postings(std::uint32_t term) const { return postings_[term]; }
    std::span<const Posting> postings(std::string_view term) const;

    /// Term numbers of a document in token order.
    std::span<const std::uint32_t> doc_terms(std::uint32_t doc) const { return doc_terms_[doc]; }
    std::vector<std::string> doc_tokens(std::uint32_t doc) const;

    const Tokenizer& tokenizer() const noexcept { return tokenizer_; }

    /// Versioned binary cache. read() rejects a bad magic or version.
    void write(std::ostream& out) const;
    static InvertedIndex read(std::istream& in);

    bool operator==(const InvertedIndex& other) const;

private:
    void finish();

    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
    std::uint64_t total_length_ = 0;
    std::vector<std::string> terms_;
    std::vector<std::vector<Posting>> postings_;
    std::vector<std::vector<std::uint32_t>> doc_terms_;
    std::unordered_map<std::string, std::uint32_t> term_numbers_;
    std::unordered_map<std::string, std::uint32_t> doc_numbers_;
    Tokenizer tokenizer_;
};

/// Indexes the input sequences of the code-list questions; other questions
/// have no sequence and are skipped. Throws EmptyCorpus when none remain.
InvertedIndex build_index(const Corpus& corpus, Tokenizer tokenizer = {});

/// tf (k1 + 1) / (tf + k1 (1 - b + b len / avg_len)), evaluated in exact
/// rational arithmetic and rounded once. Equal fractions give equal doubles
/// whichever (tf, len) produced them.
double bm25_saturation(std::uint32_t tf, std::uint32_t doc_len, std::uint64_t total_len, std::size_t doc_count,
                       const Bm25Params& params);

/// Lucene-style non-negative idf: ln(1 + (N - n + 0.5) / (n + 0.5)).
double bm25_idf(std::size_t doc_count, std::size_t doc_freq) noexcept;

/// Scores one document. Repeated query tokens contribute once per
/// occurrence; tokens absent from the index contribute nothing.
double bm25_score(std::span<const std::string> query_tokens, std::string_view doc_id,
                  const InvertedIndex& index, const Bm25Params& params);

/// Term-at-a-time scorer with per-posting contributions precomputed once.
/// Holds a reference to the index; the index must outlive it.
class Bm25Searcher {
public:
    Bm25Searcher(const InvertedIndex& index, Bm25Params params);

    const InvertedIndex& index() const noexcept { return *index_; }
    const Bm25Params& params() const noexcept { return params_; }

    /// Scores every document; entry i belongs to document number i.
    std::vector<double> score_all(std::span<const std::string> query_tokens) const;
    std::vector<double> score_all_terms(std::span<const std::uint32_t> query_terms) const;
    double score(std::span<const std::string> query_tokens, std::uint32_t doc) const;
    double score_terms(std::span<const std::uint32_t> query_terms, std::uint32_t doc) const;

    /// Highest scores first, ties by ascending id. Documents that share no
    /// term with the query are candidates too, with score 0.
    std::vector<ScoredId> top_k(std::span<const std::string> query_tokens, std::size_t k,
                                const IdSet& exclude) const;
    std::vector<ScoredId> top_k_terms(std::span<const std::uint32_t> query_terms, std::size_t k,
                                      const IdSet& exclude) const;

private:
    std::vector<std::uint32_t> term_numbers(std::span<const std::string> tokens) const;

    const InvertedIndex* index_;
    Bm25Params params_;
    std::vector<double> idf_;
    /// Contribution of every posting in 64.64 fixed point, aligned with
    /// index().postings(t). Integer sums make scores independent of term order.
    std::vector<std::vector<unsigned __int128>> contribution_;
};

std::vector<ScoredId> retrieve_top_k(std::span<const std::string> query_tokens, std::size_t k,
                                     const IdSet& exclude, const InvertedIndex& index,
                                     const Bm25Params& params);

/// Bounded min-heap selection of the k best (score, number) pairs, best
/// first: higher score wins, equal scores go to the smaller number. A nonzero
/// entry in `excluded` (when non-empty) removes that number.
std::vector<std::pair<double, std::uint32_t>> select_top_k(std::span<const double> scores,
                                                           std::size_t k,
                                                           std::span<const std::uint8_t> excluded);

}  // namespace harmoniser
