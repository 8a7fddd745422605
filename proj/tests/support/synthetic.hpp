#pragma once

// Deterministic generators for survey-like corpora and embedding stores.

#include "harmoniser/corpus.hpp"
#include "harmoniser/embedding_store.hpp"
#include "harmoniser/lexical_index.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace synth {

std::uint64_t draw(std::mt19937_64& rng, std::uint64_t bound);

const std::vector<std::string>& topic_names();
harmoniser::TopicTaxonomy taxonomy();

struct CorpusSpec {
    std::size_t questions = 120;
    std::uint64_t seed = 1;
    /// Fraction of questions that are code-list questions.
    double code_list_fraction = 1.0;
    std::size_t questionnaires = 24;
    /// Extra words appended to each question text, one in five drawn
    /// from the topic vocabulary, the rest generic filler.
    std::size_t padding_words = 0;
};

/// Unique input sequences; ids "q000000", "q000001", ...
harmoniser::Corpus survey_corpus(const CorpusSpec& spec);

/// `pairs` verbatim duplicate pairs (different id and questionnaire, same
/// text, options and topic) plus `distractors` other questions.
harmoniser::Corpus planted_duplicates(std::size_t pairs, std::size_t distractors, std::uint64_t seed);

/// Bag-of-words embeddings: each token maps to a seeded random vector, and
/// words of a topic vocabulary share a topic direction. The
/// dense vector is the mean of the sequence's token vectors plus a small
/// per-question perturbation, and the token matrix holds the first
/// `max_tokens` token vectors.
harmoniser::EmbeddingStore embeddings(const harmoniser::Corpus& corpus, std::uint32_t dim, std::uint64_t seed,
                                      bool with_tokens, std::size_t max_tokens = 12,
                                      std::string model_tag = "synthetic-bow");

/// Random token documents over a vocabulary of `vocab` words, lengths in
/// [1, max_len]. Ids "d0000", "d0001", ...
std::vector<harmoniser::InvertedIndex::Document> random_docs(std::size_t n, std::size_t max_len, std::size_t vocab,
                                                             std::mt19937_64& rng);

}  // namespace synth
