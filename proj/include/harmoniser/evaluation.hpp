#pragma once

#include "harmoniser/corpus.hpp"
#include "harmoniser/ranking_pipeline.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace harmoniser {

enum class Averaging { Macro, Weighted };

std::string_view to_string(Averaging a) noexcept;

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;

    bool operator==(const ClassMetrics&) const = default;
};

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    Averaging averaging = Averaging::Macro;
    std::size_t evaluated = 0;
    std::map<std::string, ClassMetrics> per_class;

    bool operator==(const Metrics&) const = default;
};

/// Single-label multi-class metrics. Classes absent from both truth and
/// prediction do not enter the average. Per-class F1 is the harmonic mean of
/// that class's precision and recall (0 when both are 0); the averaged F1 is
/// the mean of per-class F1 values. Throws EmptyRun on empty input.
Metrics classification_metrics(std::span<const std::string> truth, std::span<const std::string> predicted,
                               Averaging averaging = Averaging::Macro);

/// Micro-averaged F1 from pooled counts, 2TP / (2TP + FP + FN).
double micro_f1(std::span<const std::string> truth, std::span<const std::string> predicted);

/// Truth = each query's top-level topic, prediction = its top-1
/// candidate's. Queries with an empty list are skipped. Throws MissingTopic
/// when a query or candidate is not in the corpus, EmptyRun when nothing is
/// left to evaluate.
std::pair<std::vector<std::string>, std::vector<std::string>> top1_topics(const RankingRun& run, const Corpus& corpus);

Metrics topic_match_metrics(const RankingRun& run, const Corpus& corpus, Averaging averaging = Averaging::Macro);
double micro_f1(const RankingRun& run, const Corpus& corpus);

/// Uniform sample without replacement of n (query, top-1) pairs, order
/// given by a seeded shuffle. Throws SampleTooLarge.
std::vector<PairKey> sample_for_review(const RankingRun& run, std::size_t n, std::uint64_t seed);

enum class Label { Exact, Equivalent, SubConceptMismatch, TotalMismatch };

inline constexpr std::array<Label, 4> kLabels = {Label::Exact, Label::Equivalent, Label::SubConceptMismatch,
                                                 Label::TotalMismatch};

/// "1", "1a", "2", "3".
std::string_view to_string(Label label) noexcept;
/// Throws InvalidLabel.
Label parse_label(std::string_view text);

struct Annotation {
    std::string query_id;
    std::string candidate_id;
    Label label = Label::Exact;
    std::string annotator;
    std::string run_id;
    std::string timestamp;

    bool operator==(const Annotation&) const = default;
};

nlohmann::ordered_json to_json(const Annotation& a);
/// Throws MalformedRecord or InvalidLabel.
Annotation annotation_from_json(const nlohmann::json& j);
void write_annotations(std::ostream& out, std::span<const Annotation> annotations);
std::vector<Annotation> read_annotations(std::istream& in);

struct LabelDistribution {
    std::array<std::size_t, 4> counts{};
    /// Percentages in hundredths of a percent, indexed like kLabels.
    std::array<long, 4> hundredths{};

    std::size_t total() const noexcept;
    double percent(Label label) const noexcept;
    bool operator==(const LabelDistribution&) const = default;
};

/// Each share is rounded half-up to 0.01%. If independent rounding drifts
/// more than 0.01 from 100, the largest-remainder rule redistributes the
/// excess. Throws NoAnnotations.
LabelDistribution label_distribution(std::span<const Annotation> annotations);
LabelDistribution label_distribution_from_counts(const std::array<std::size_t, 4>& counts);

nlohmann::ordered_json metrics_to_json(const Metrics& metrics, std::string_view run_id);
nlohmann::ordered_json distribution_to_json(const LabelDistribution& dist);

/// Text table with columns Model, Precision, Recall, F1, Accuracy.
std::string format_metrics_table(std::span<const std::pair<std::string, Metrics>> rows);
/// Text table with columns Model, 1, 1a, 2, 3 in percent.
std::string format_label_table(std::span<const std::pair<std::string, LabelDistribution>> rows);

}  // namespace harmoniser
