#include "harmoniser/evaluation.hpp"

#include "harmoniser/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

namespace harmoniser {

using ordered_json = nlohmann::ordered_json;

namespace {

struct Counts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

std::map<std::string, Counts> confusion(std::span<const std::string> truth, std::span<const std::string> predicted) {
    if (truth.size() != predicted.size()) {
        throw Error(ErrorCode::InvalidArgument, "truth and prediction lengths differ");
    }
    if (truth.empty()) throw Error(ErrorCode::EmptyRun, "nothing to evaluate");
    std::map<std::string, Counts> counts;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == predicted[i]) {
            ++counts[truth[i]].tp;
        } else {
            ++counts[truth[i]].fn;
            ++counts[predicted[i]].fp;
        }
    }
    return counts;
}

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

// Uniform draw in [0, bound) by rejection; independent of the standard
// library's distribution implementation.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> widths(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) widths[c] = header[c].size();
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
        std::string out = "|";
        for (std::size_t c = 0; c < cells.size(); ++c) out += " " + pad(cells[c], widths[c]) + " |";
        return out + "\n";
    };
    std::string out = line(header);
    out += "|";
    for (auto w : widths) out += std::string(w + 2, '-') + "|";
    out += "\n";
    for (const auto& row : rows) out += line(row);
    return out;
}

}  // namespace

std::string_view to_string(Averaging a) noexcept { return a == Averaging::Macro ? "macro" : "weighted"; }

Metrics classification_metrics(std::span<const std::string> truth, std::span<const std::string> predicted,
                               Averaging averaging) {
    const auto counts = confusion(truth, predicted);
    Metrics m;
    m.averaging = averaging;
    m.evaluated = truth.size();
    std::size_t correct = 0;
    double sum_p = 0.0;
    double sum_r = 0.0;
    double sum_f = 0.0;
    double total_weight = 0.0;
    for (const auto& [label, c] : counts) {
        ClassMetrics cm;
        cm.precision = ratio(c.tp, c.tp + c.fp);
        cm.recall = ratio(c.tp, c.tp + c.fn);
        cm.f1 = cm.precision + cm.recall > 0.0 ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall) : 0.0;
        cm.support = c.tp + c.fn;
        correct += c.tp;
        const double w = averaging == Averaging::Macro ? 1.0 : static_cast<double>(cm.support);
        sum_p += w * cm.precision;
        sum_r += w * cm.recall;
        sum_f += w * cm.f1;
        total_weight += w;
        m.per_class.emplace(label, cm);
    }
    m.precision = sum_p / total_weight;
    m.recall = sum_r / total_weight;
    m.f1 = sum_f / total_weight;
    m.accuracy = ratio(correct, truth.size());
    return m;
}

double micro_f1(std::span<const std::string> truth, std::span<const std::string> predicted) {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (const auto& [_, c] : confusion(truth, predicted)) {
        tp += c.tp;
        fp += c.fp;
        fn += c.fn;
    }
    return ratio(2 * tp, 2 * tp + fp + fn);
}

std::pair<std::vector<std::string>, std::vector<std::string>> top1_topics(const RankingRun& run, const Corpus& corpus) {
    std::vector<std::string> truth;
    std::vector<std::string> predicted;
    for (const auto& [query, list] : run.per_query) {
        if (list.empty()) continue;
        const auto* q = corpus.find(query);
        if (!q) throw Error(ErrorCode::MissingTopic, query);
        const auto* top = corpus.find(list.front().id);
        if (!top) throw Error(ErrorCode::MissingTopic, list.front().id);
        truth.push_back(q->topic.top_level);
        predicted.push_back(top->topic.top_level);
    }
    if (truth.empty()) throw Error(ErrorCode::EmptyRun, "run " + run.run_id + " has no ranked queries");
    return {std::move(truth), std::move(predicted)};
}

Metrics topic_match_metrics(const RankingRun& run, const Corpus& corpus, Averaging averaging) {
    const auto [truth, predicted] = top1_topics(run, corpus);
    return classification_metrics(truth, predicted, averaging);
}

double micro_f1(const RankingRun& run, const Corpus& corpus) {
    const auto [truth, predicted] = top1_topics(run, corpus);
    return micro_f1(truth, predicted);
}

std::vector<PairKey> sample_for_review(const RankingRun& run, std::size_t n, std::uint64_t seed) {
    std::vector<PairKey> population;
    for (const auto& [query, list] : run.per_query) {
        if (!list.empty()) population.emplace_back(query, list.front().id);
    }
    if (n > population.size()) {
        throw Error(ErrorCode::SampleTooLarge,
                    std::to_string(n) + " requested, " + std::to_string(population.size()) + " available");
    }
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first n slots end up as the sample.
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = i + static_cast<std::size_t>(bounded(rng, population.size() - i));
        std::swap(population[i], population[j]);
    }
    population.resize(n);
    return population;
}

std::string_view to_string(Label label) noexcept {
    switch (label) {
    case Label::Exact: return "1";
    case Label::Equivalent: return "1a";
    case Label::SubConceptMismatch: return "2";
    case Label::TotalMismatch: return "3";
    }
    return "1";
}

Label parse_label(std::string_view text) {
    for (auto l : kLabels) {
        if (to_string(l) == text) return l;
    }
    throw Error(ErrorCode::InvalidLabel, "'" + std::string(text) + "' is not one of 1, 1a, 2, 3");
}

ordered_json to_json(const Annotation& a) {
    ordered_json j;
    j["query_id"] = a.query_id;
    j["candidate_id"] = a.candidate_id;
    j["label"] = to_string(a.label);
    j["annotator"] = a.annotator;
    j["run_id"] = a.run_id;
    j["timestamp"] = a.timestamp;
    return j;
}

Annotation annotation_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::MalformedRecord, "annotation must be an object");
    auto field = [&](const char* key) {
        auto it = j.find(key);
        if (it == j.end() || !it->is_string()) {
            throw Error(ErrorCode::MalformedRecord, std::string("annotation field '") + key + "' must be a string");
        }
        return it->get<std::string>();
    };
    Annotation a;
    a.query_id = field("query_id");
    a.candidate_id = field("candidate_id");
    a.label = parse_label(field("label"));
    a.annotator = field("annotator");
    a.run_id = field("run_id");
    a.timestamp = j.contains("timestamp") ? field("timestamp") : std::string();
    return a;
}

void write_annotations(std::ostream& out, std::span<const Annotation> annotations) {
    for (const auto& a : annotations) out << to_json(a).dump() << '\n';
}

std::vector<Annotation> read_annotations(std::istream& in) {
    std::vector<Annotation> out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) continue;
        try {
            out.push_back(annotation_from_json(nlohmann::json::parse(text)));
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorCode::MalformedRecord, "annotation line " + std::to_string(line) + ": " + e.what());
        }
    }
    return out;
}

std::size_t LabelDistribution::total() const noexcept { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

double LabelDistribution::percent(Label label) const noexcept {
    return static_cast<double>(hundredths[static_cast<std::size_t>(label)]) / 100.0;
}

LabelDistribution label_distribution_from_counts(const std::array<std::size_t, 4>& counts) {
    LabelDistribution d;
    d.counts = counts;
    const auto total = d.total();
    if (total == 0) throw Error(ErrorCode::NoAnnotations, "no annotations to summarise");
    // Work in hundredths of a percent: share = 10000 * count / total.
    std::array<std::size_t, 4> floors{};
    std::array<std::size_t, 4> remainders{};
    long sum = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        const std::size_t scaled = 10000 * counts[i];
        floors[i] = scaled / total;
        remainders[i] = scaled % total;
        d.hundredths[i] = static_cast<long>(floors[i] + (2 * remainders[i] >= total ? 1 : 0));
        sum += d.hundredths[i];
    }
    if (sum < 9999 || sum > 10001) {
        std::array<std::size_t, 4> order{0, 1, 2, 3};
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
        long assigned = 0;
        for (std::size_t i = 0; i < 4; ++i) {
            d.hundredths[i] = static_cast<long>(floors[i]);
            assigned += d.hundredths[i];
        }
        for (std::size_t i = 0; assigned < 10000; ++i, ++assigned) ++d.hundredths[order[i]];
    }
    return d;
}

LabelDistribution label_distribution(std::span<const Annotation> annotations) {
    std::array<std::size_t, 4> counts{};
    for (const auto& a : annotations) ++counts[static_cast<std::size_t>(a.label)];
    return label_distribution_from_counts(counts);
}

ordered_json metrics_to_json(const Metrics& m, std::string_view run_id) {
    ordered_json j;
    j["run_id"] = run_id;
    j["averaging"] = to_string(m.averaging);
    j["evaluated"] = m.evaluated;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
    j["accuracy"] = m.accuracy;
    auto per_class = ordered_json::object();
    for (const auto& [label, c] : m.per_class) {
        per_class[label] = {{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
    }
    j["per_class"] = std::move(per_class);
    return j;
}

ordered_json distribution_to_json(const LabelDistribution& d) {
    ordered_json j;
    j["total"] = d.total();
    auto counts = ordered_json::object();
    auto percents = ordered_json::object();
    for (auto l : kLabels) {
        const auto i = static_cast<std::size_t>(l);
        counts[std::string(to_string(l))] = d.counts[i];
        percents[std::string(to_string(l))] = fmt::format("{}.{:02}", d.hundredths[i] / 100, d.hundredths[i] % 100);
    }
    j["counts"] = std::move(counts);
    j["percent"] = std::move(percents);
    return j;
}

std::string format_metrics_table(std::span<const std::pair<std::string, Metrics>> rows) {
    std::set<std::string_view> modes;
    std::vector<std::vector<std::string>> cells;
    for (const auto& [name, m] : rows) {
        modes.insert(to_string(m.averaging));
        cells.push_back({name, fmt::format("{:.2f}", m.precision), fmt::format("{:.2f}", m.recall),
                         fmt::format("{:.2f}", m.f1), fmt::format("{:.2f}", m.accuracy)});
    }
    std::string out = fmt::format("averaging: {}\n", fmt::join(modes, ", "));
    return out + render_table({"Model", "Precision", "Recall", "F1", "Accuracy"}, cells);
}

std::string format_label_table(std::span<const std::pair<std::string, LabelDistribution>> rows) {
    std::vector<std::vector<std::string>> cells;
    for (const auto& [name, d] : rows) {
        std::vector<std::string> row{name};
        for (auto h : d.hundredths) row.push_back(fmt::format("{}.{:02}%", h / 100, h % 100));
        cells.push_back(std::move(row));
    }
    return render_table({"Model", "1", "1a", "2", "3"}, cells);
}

}  // namespace harmoniser
