#pragma once

#include "harmoniser/corpus.hpp"
#include "harmoniser/error.hpp"
#include "harmoniser/evaluation.hpp"
#include "harmoniser/ranking_pipeline.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace httplib {
class Server;
}

namespace harmoniser {

/// Append-only annotation log (one JSON record per line). Construction
/// replays the log; submit() validates uniqueness of (query, candidate,
/// annotator, run) and returns only after the record is flushed and synced.
/// An empty path keeps the log in memory.
class AnnotationStore {
public:
    explicit AnnotationStore(std::string path = {});

    /// Returns the stored annotation id. Throws DuplicateAnnotation.
    std::string submit(const Annotation& a);
    std::vector<Annotation> annotations(const std::optional<std::string>& run_id = std::nullopt) const;
    std::size_t size() const;
    const std::string& path() const noexcept { return path_; }

private:
    using Key = std::tuple<std::string, std::string, std::string, std::string>;
    static Key key_of(const Annotation& a);
    static std::string id_for(std::size_t n);

    std::string path_;
    mutable std::mutex mutex_;
    std::vector<Annotation> log_;
    std::set<Key> keys_;
};

struct ServiceOptions {
    /// When set, every /api request must carry "Authorization: Bearer <token>".
    std::optional<std::string> token;
    /// Optional directory of static files served at "/".
    std::optional<std::string> static_dir;
};

/// Read-mostly facade over a corpus, precomputed runs and the annotation
/// store. Methods return JSON bodies or throw Error; mount() wires them to
/// HTTP routes.
class Service {
public:
    Service(Corpus corpus, std::map<std::string, RankingRun> runs, AnnotationStore& store, ServiceOptions options = {});

    nlohmann::ordered_json list_questions(std::size_t offset, std::size_t limit) const;
    nlohmann::ordered_json get_question(const std::string& id) const;
    nlohmann::ordered_json list_runs() const;
    /// k defaults to the run's k. Throws UnknownRun or UnknownQuestion.
    nlohmann::ordered_json get_candidates(const std::string& run_id, const std::string& query_id,
                                          std::optional<std::size_t> k) const;
    nlohmann::ordered_json sample(const std::string& run_id, std::size_t n, std::uint64_t seed) const;
    /// Throws UnknownQuestion, UnknownRun, InvalidLabel, DuplicateAnnotation.
    nlohmann::ordered_json submit_annotation(const nlohmann::json& body);
    nlohmann::ordered_json annotation_stats(const std::optional<std::string>& run_id) const;
    nlohmann::ordered_json evaluate(const std::string& run_id, Averaging averaging) const;

    void mount(httplib::Server& server);
    const ServiceOptions& options() const noexcept { return options_; }

private:
    const RankingRun& run(const std::string& run_id) const;
    nlohmann::ordered_json question_json(const Question& q) const;

    Corpus corpus_;
    std::map<std::string, RankingRun> runs_;
    AnnotationStore* store_;
    ServiceOptions options_;
};

/// HTTP status used for an error code.
int http_status(ErrorCode code) noexcept;

/// Loads every "*.run.jsonl" file in a directory, keyed by run id.
std::map<std::string, RankingRun> load_runs_dir(const std::string& dir);

/// Current UTC time as an ISO-8601 string with seconds precision.
std::string utc_timestamp();

}  // namespace harmoniser
