#include "harmoniser/lexical_index.hpp"

#include "binary_io.hpp"
#include "harmoniser/error.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>

namespace harmoniser {

namespace {

constexpr std::string_view kIndexMagic = "HIDX";
constexpr std::uint16_t kIndexVersion = 1;

bool is_token_byte(unsigned char c) noexcept {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

// Shared by every scoring path so term contributions are bit-identical
// whichever route computes them.
inline double term_contribution(double idf, double saturation) noexcept { return idf * saturation; }

// Exact fixed-point accumulation with 64 fractional bits: a score depends
// only on the multiset of its term contributions, not on their order.
using Fixed = unsigned __int128;

inline Fixed to_fixed(double x) noexcept {
    const auto whole = static_cast<std::uint64_t>(x);
    const double frac = x - static_cast<double>(whole);
    return (static_cast<Fixed>(whole) << 64) | static_cast<std::uint64_t>(frac * 0x1p64);
}

inline double from_fixed(Fixed v) noexcept { return static_cast<double>(v) * 0x1p-64; }


}  // namespace

void Bm25Params::validate() const {
    if (!(k1 >= 0.0) || !std::isfinite(k1)) throw Error(ErrorCode::InvalidArgument, "bm25 k1 must be >= 0");
    if (!(b >= 0.0 && b <= 1.0)) throw Error(ErrorCode::InvalidArgument, "bm25 b must be in [0, 1]");
}

std::vector<std::string> Tokenizer::operator()(std::string_view text) const {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            if (stopwords_.empty() || !stopwords_.contains(current)) tokens.push_back(std::move(current));
            current.clear();
        }
    };
    for (unsigned char c : text) {
        if (is_token_byte(c)) {
            current += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

std::vector<std::string> tokenize(std::string_view text) { return Tokenizer{}(text); }

const std::set<std::string>& english_stopwords() {
    static const std::set<std::string> words = {
        "a",     "about", "an",   "and",  "are",   "as",    "at",    "be",   "but",  "by",
        "for",   "from",  "has",  "have", "he",    "her",   "his",   "i",    "if",   "in",
        "into",  "is",    "it",   "its",  "me",    "my",    "of",    "on",   "or",   "our",
        "she",   "so",    "that", "the",  "their", "them",  "then",  "there", "these", "they",
        "this",  "to",    "was",  "we",   "were",  "what",  "when",  "which", "who",  "will",
        "with",  "would", "you",  "your"};
    return words;
}

InvertedIndex InvertedIndex::from_documents(std::vector<Document> docs, Tokenizer tokenizer) {
    if (docs.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot index an empty corpus");
    std::sort(docs.begin(), docs.end(), [](const Document& a, const Document& b) { return a.first < b.first; });

    InvertedIndex index;
    index.tokenizer_ = std::move(tokenizer);
    index.doc_ids_.reserve(docs.size());
    index.doc_lengths_.reserve(docs.size());

    // Ordered map keeps term numbering independent of hashing.
    std::map<std::string, std::vector<Posting>, std::less<>> postings;
    for (std::uint32_t d = 0; d < docs.size(); ++d) {
        auto& [id, tokens] = docs[d];
        if (d > 0 && id == docs[d - 1].first) throw Error(ErrorCode::DuplicateId, id);
        std::map<std::string_view, std::uint32_t> counts;
        for (const auto& t : tokens) ++counts[t];
        for (const auto& [term, tf] : counts) {
            auto it = postings.find(term);
            if (it == postings.end()) it = postings.emplace(std::string(term), std::vector<Posting>{}).first;
            it->second.push_back({d, tf});
        }
        index.doc_ids_.push_back(std::move(id));
        index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
    }
    index.terms_.reserve(postings.size());
    index.postings_.reserve(postings.size());
    for (auto& [term, list] : postings) {
        index.terms_.push_back(term);
        index.postings_.push_back(std::move(list));
    }
    index.finish();
    index.doc_terms_.resize(docs.size());
    for (std::size_t d = 0; d < docs.size(); ++d) {
        auto& seq = index.doc_terms_[d];
        seq.reserve(docs[d].second.size());
        for (const auto& t : docs[d].second) seq.push_back(index.term_numbers_.at(t));
    }
    return index;
}

void InvertedIndex::finish() {
    total_length_ = 0;
    for (auto len : doc_lengths_) total_length_ += len;
    avg_doc_length_ =
        doc_lengths_.empty() ? 0.0 : static_cast<double>(total_length_) / static_cast<double>(doc_lengths_.size());
    term_numbers_.clear();
    term_numbers_.reserve(terms_.size());
    for (std::uint32_t t = 0; t < terms_.size(); ++t) term_numbers_.emplace(terms_[t], t);
    doc_numbers_.clear();
    doc_numbers_.reserve(doc_ids_.size());
    for (std::uint32_t d = 0; d < doc_ids_.size(); ++d) doc_numbers_.emplace(doc_ids_[d], d);
}

std::optional<std::uint32_t> InvertedIndex::doc_number(std::string_view id) const {
    auto it = doc_numbers_.find(std::string(id));
    if (it == doc_numbers_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::uint32_t> InvertedIndex::term_number(std::string_view term) const {
    auto it = term_numbers_.find(std::string(term));
    if (it == term_numbers_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> InvertedIndex::doc_tokens(std::uint32_t doc) const {
    std::vector<std::string> out;
    out.reserve(doc_terms_[doc].size());
    for (auto t : doc_terms_[doc]) out.push_back(terms_[t]);
    return out;
}

std::span<const Posting> InvertedIndex::postings(std::string_view term) const {
    auto t = term_number(term);
    if (!t) return {};
    return postings_[*t];
}

bool InvertedIndex::operator==(const InvertedIndex& other) const {
    return doc_ids_ == other.doc_ids_ && doc_lengths_ == other.doc_lengths_ && terms_ == other.terms_ &&
           postings_ == other.postings_ && doc_terms_ == other.doc_terms_ && tokenizer_.stopwords() == other.tokenizer_.stopwords();
}

void InvertedIndex::write(std::ostream& out) const {
    detail::ByteWriter w;
    w.put_bytes(kIndexMagic);
    w.put<std::uint16_t>(kIndexVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(tokenizer_.stopwords().size()));
    for (const auto& s : tokenizer_.stopwords()) w.put_short_string(s);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(doc_ids_.size()));
    for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
        w.put_short_string(doc_ids_[d]);
        w.put<std::uint32_t>(doc_lengths_[d]);
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(terms_.size()));
    for (std::size_t t = 0; t < terms_.size(); ++t) {
        w.put_short_string(terms_[t]);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(postings_[t].size()));
        for (const auto& p : postings_[t]) {
            w.put<std::uint32_t>(p.doc);
            w.put<std::uint32_t>(p.tf);
        }
    }
    for (const auto& seq : doc_terms_) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(seq.size()));
        for (auto t : seq) w.put<std::uint32_t>(t);
    }
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw Error(ErrorCode::Io, "index write failed");
}

InvertedIndex InvertedIndex::read(std::istream& in) {
    const std::string data = detail::slurp(in);
    detail::ByteReader r(data);
    if (r.remaining() < kIndexMagic.size() || r.get_bytes(kIndexMagic.size()) != kIndexMagic) {
        throw Error(ErrorCode::BadMagic, "not an index cache");
    }
    const auto version = r.get<std::uint16_t>();
    if (version != kIndexVersion) {
        throw Error(ErrorCode::UnsupportedVersion, "index cache version " + std::to_string(version));
    }
    auto corrupt = [](const std::string& why) { return Error(ErrorCode::MalformedRecord, "index cache: " + why); };

    std::set<std::string> stopwords;
    const auto n_stop = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_stop; ++i) stopwords.insert(r.get_short_string());

    InvertedIndex index;
    index.tokenizer_ = Tokenizer(std::move(stopwords));
    const auto n_docs = r.get<std::uint32_t>();
    if (n_docs == 0) throw Error(ErrorCode::EmptyCorpus, "index cache has no documents");
    for (std::uint32_t d = 0; d < n_docs; ++d) {
        auto id = r.get_short_string();
        if (d > 0 && !(index.doc_ids_.back() < id)) throw corrupt("document ids not strictly ascending");
        index.doc_ids_.push_back(std::move(id));
        index.doc_lengths_.push_back(r.get<std::uint32_t>());
    }
    const auto n_terms = r.get<std::uint32_t>();
    for (std::uint32_t t = 0; t < n_terms; ++t) {
        auto term = r.get_short_string();
        if (t > 0 && !(index.terms_.back() < term)) throw corrupt("terms not strictly ascending");
        const auto n_post = r.get<std::uint32_t>();
        if (n_post == 0 || n_post > n_docs) throw corrupt("bad posting count for '" + term + "'");
        std::vector<Posting> list;
        list.reserve(n_post);
        for (std::uint32_t i = 0; i < n_post; ++i) {
            Posting p{r.get<std::uint32_t>(), r.get<std::uint32_t>()};
            if (p.doc >= n_docs || p.tf == 0) throw corrupt("bad posting for '" + term + "'");
            if (!list.empty() && list.back().doc >= p.doc) throw corrupt("postings not sorted");
            list.push_back(p);
        }
        index.terms_.push_back(std::move(term));
        index.postings_.push_back(std::move(list));
    }
    index.doc_terms_.resize(n_docs);
    for (std::uint32_t d = 0; d < n_docs; ++d) {
        const auto len = r.get<std::uint32_t>();
        if (len != index.doc_lengths_[d]) throw corrupt("token sequence length differs from document length");
        auto& seq = index.doc_terms_[d];
        seq.reserve(len);
        for (std::uint32_t i = 0; i < len; ++i) {
            const auto t = r.get<std::uint32_t>();
            if (t >= n_terms) throw corrupt("term number out of range");
            seq.push_back(t);
        }
    }
    if (r.remaining() != 0) throw Error(ErrorCode::TrailingBytes, std::to_string(r.remaining()) + " bytes");
    index.finish();
    return index;
}

InvertedIndex build_index(const Corpus& corpus, Tokenizer tokenizer) {
    if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot index an empty corpus");
    std::vector<InvertedIndex::Document> docs;
    docs.reserve(corpus.size());
    for (const auto& q : corpus) {
        if (q.is_code_list) docs.emplace_back(q.id, tokenizer(build_input_sequence(q)));
    }
    if (docs.empty()) throw Error(ErrorCode::EmptyCorpus, "no code-list questions to index");
    return InvertedIndex::from_documents(std::move(docs), std::move(tokenizer));
}

double bm25_saturation(std::uint32_t tf, std::uint32_t doc_len, std::uint64_t total_len, std::size_t doc_count,
                       const Bm25Params& params) {
    using Rational = boost::multiprecision::cpp_rational;
    const Rational k1(params.k1), b(params.b), f(tf);
    Rational ratio(0);
    if (total_len > 0) ratio = Rational(doc_len) * Rational(doc_count) / Rational(total_len);
    const Rational norm = k1 * (Rational(1) - b + b * ratio);
    return static_cast<double>(f * (k1 + 1) / (f + norm));
}

double bm25_idf(std::size_t doc_count, std::size_t doc_freq) noexcept {
    const double n = static_cast<double>(doc_count);
    const double df = static_cast<double>(doc_freq);
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double bm25_score(std::span<const std::string> query_tokens, std::string_view doc_id, const InvertedIndex& index,
                  const Bm25Params& params) {
    auto doc = index.doc_number(doc_id);
    if (!doc) throw Error(ErrorCode::UnknownDoc, std::string(doc_id));
    Fixed score = 0;
    for (const auto& token : query_tokens) {
        auto list = index.postings(token);
        auto it = std::lower_bound(list.begin(), list.end(), *doc,
                                   [](const Posting& p, std::uint32_t d) { return p.doc < d; });
        if (it == list.end() || it->doc != *doc) continue;
        const double sat = bm25_saturation(it->tf, index.doc_length(*doc), index.total_length(), index.doc_count(), params);
        score += to_fixed(term_contribution(bm25_idf(index.doc_count(), list.size()), sat));
    }
    return from_fixed(score);
}

Bm25Searcher::Bm25Searcher(const InvertedIndex& index, Bm25Params params) : index_(&index), params_(params) {
    params_.validate();
    idf_.resize(index.term_count());
    for (std::uint32_t t = 0; t < index.term_count(); ++t) {
        idf_[t] = bm25_idf(index.doc_count(), index.postings(t).size());
    }
    std::unordered_map<std::uint64_t, double> cache;
    contribution_.resize(index.term_count());
    for (std::uint32_t t = 0; t < index.term_count(); ++t) {
        const auto list = index.postings(t);
        auto& out = contribution_[t];
        out.reserve(list.size());
        for (const auto& p : list) {
            const auto len = index.doc_length(p.doc);
            const auto key = (static_cast<std::uint64_t>(p.tf) << 32) | len;
            auto it = cache.find(key);
            if (it == cache.end()) {
                it = cache.emplace(key, bm25_saturation(p.tf, len, index.total_length(), index.doc_count(), params_))
                         .first;
            }
            out.push_back(to_fixed(term_contribution(idf_[t], it->second)));
        }
    }
}

std::vector<std::uint32_t> Bm25Searcher::term_numbers(std::span<const std::string> tokens) const {
    std::vector<std::uint32_t> out;
    out.reserve(tokens.size());
    for (const auto& token : tokens) {
        if (auto t = index_->term_number(token)) out.push_back(*t);
    }
    return out;
}

std::vector<double> Bm25Searcher::score_all(std::span<const std::string> query_tokens) const {
    return score_all_terms(term_numbers(query_tokens));
}

std::vector<double> Bm25Searcher::score_all_terms(std::span<const std::uint32_t> query_terms) const {
    std::vector<Fixed> acc(index_->doc_count(), 0);
    for (auto t : query_terms) {
        const auto list = index_->postings(t);
        const auto& contrib = contribution_[t];
        for (std::size_t i = 0; i < list.size(); ++i) acc[list[i].doc] += contrib[i];
    }
    std::vector<double> scores(acc.size());
    std::transform(acc.begin(), acc.end(), scores.begin(), from_fixed);
    return scores;
}

double Bm25Searcher::score(std::span<const std::string> query_tokens, std::uint32_t doc) const {
    return score_terms(term_numbers(query_tokens), doc);
}

double Bm25Searcher::score_terms(std::span<const std::uint32_t> query_terms, std::uint32_t doc) const {
    if (doc >= index_->doc_count()) throw Error(ErrorCode::UnknownDoc, "document number " + std::to_string(doc));
    Fixed score = 0;
    for (auto t : query_terms) {
        auto list = index_->postings(t);
        auto it = std::lower_bound(list.begin(), list.end(), doc,
                                   [](const Posting& p, std::uint32_t d) { return p.doc < d; });
        if (it == list.end() || it->doc != doc) continue;
        score += contribution_[t][static_cast<std::size_t>(it - list.begin())];
    }
    return from_fixed(score);
}

std::vector<ScoredId> Bm25Searcher::top_k(std::span<const std::string> query_tokens, std::size_t k,
                                          const IdSet& exclude) const {
    return top_k_terms(term_numbers(query_tokens), k, exclude);
}

std::vector<ScoredId> Bm25Searcher::top_k_terms(std::span<const std::uint32_t> query_terms, std::size_t k,
                                                const IdSet& exclude) const {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    const auto scores = score_all_terms(query_terms);
    std::vector<std::uint8_t> excluded(index_->doc_count(), 0);
    for (const auto& id : exclude) {
        if (auto d = index_->doc_number(id)) excluded[*d] = 1;
    }
    std::vector<ScoredId> out;
    for (const auto& [score, doc] : select_top_k(scores, k, excluded)) {
        out.push_back({index_->doc_id(doc), score});
    }
    return out;
}

std::vector<ScoredId> retrieve_top_k(std::span<const std::string> query_tokens, std::size_t k, const IdSet& exclude,
                                     const InvertedIndex& index, const Bm25Params& params) {
    return Bm25Searcher(index, params).top_k(query_tokens, k, exclude);
}

std::vector<std::pair<double, std::uint32_t>> select_top_k(std::span<const double> scores, std::size_t k,
                                                           std::span<const std::uint8_t> excluded) {
    using Entry = std::pair<double, std::uint32_t>;
    // "a before b" in ranking order.
    auto better = [](const Entry& a, const Entry& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
    };
    // Min-heap on ranking order: the top is the worst retained entry.
    std::priority_queue<Entry, std::vector<Entry>, decltype(better)> heap(better);
    for (std::uint32_t d = 0; d < scores.size(); ++d) {
        if (!excluded.empty() && excluded[d]) continue;
        Entry e{scores[d], d};
        if (heap.size() < k) {
            heap.push(e);
        } else if (better(e, heap.top())) {
            heap.pop();
            heap.push(e);
        }
    }
    std::vector<Entry> out;
    out.reserve(heap.size());
    while (!heap.empty()) {
        out.push_back(heap.top());
        heap.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
}

}  // namespace harmoniser
