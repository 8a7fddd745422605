#include "harmoniser/service.hpp"

#include "harmoniser/error.hpp"

#include <httplib.h>

#include <fmt/format.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <unistd.h>

namespace harmoniser {

using ordered_json = nlohmann::ordered_json;

namespace {

std::size_t parse_size(const std::string& text, const char* name) {
    std::size_t pos = 0;
    unsigned long long value = 0;
    try {
        value = std::stoull(text, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != text.size() || text.empty() || text.front() == '-') {
        throw Error(ErrorCode::InvalidArgument, fmt::format("parameter '{}' must be a non-negative integer", name));
    }
    return static_cast<std::size_t>(value);
}

void send_json(httplib::Response& res, int status, const ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    ordered_json body;
    body["code"] = code;
    body["message"] = message;
    send_json(res, status, body);
}

}  // namespace

AnnotationStore::AnnotationStore(std::string path) : path_(std::move(path)) {
    if (path_.empty()) return;
    std::ifstream in(path_);
    if (!in) return;
    for (auto& a : read_annotations(in)) {
        if (!keys_.insert(key_of(a)).second) {
            throw Error(ErrorCode::DuplicateAnnotation, "annotation log " + path_ + " repeats a key");
        }
        log_.push_back(std::move(a));
    }
}

AnnotationStore::Key AnnotationStore::key_of(const Annotation& a) {
    return {a.query_id, a.candidate_id, a.annotator, a.run_id};
}

std::string AnnotationStore::id_for(std::size_t n) { return fmt::format("ann-{:06}", n); }

std::string AnnotationStore::submit(const Annotation& a) {
    std::lock_guard lock(mutex_);
    if (keys_.contains(key_of(a))) {
        throw Error(ErrorCode::DuplicateAnnotation,
                    fmt::format("{} / {} already labelled by '{}' in run {}", a.query_id, a.candidate_id, a.annotator,
                                a.run_id));
    }
    if (!path_.empty()) {
        const auto line = to_json(a).dump() + "\n";
        std::FILE* f = std::fopen(path_.c_str(), "ab");
        if (!f) throw Error(ErrorCode::Io, "cannot open annotation log " + path_ + ": " + std::strerror(errno));
        const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() && std::fflush(f) == 0 &&
                        ::fsync(::fileno(f)) == 0;
        std::fclose(f);
        if (!ok) throw Error(ErrorCode::Io, "append to annotation log " + path_ + " failed");
    }
    keys_.insert(key_of(a));
    log_.push_back(a);
    return id_for(log_.size());
}

std::vector<Annotation> AnnotationStore::annotations(const std::optional<std::string>& run_id) const {
    std::lock_guard lock(mutex_);
    if (!run_id) return log_;
    std::vector<Annotation> out;
    for (const auto& a : log_) {
        if (a.run_id == *run_id) out.push_back(a);
    }
    return out;
}

std::size_t AnnotationStore::size() const {
    std::lock_guard lock(mutex_);
    return log_.size();
}

Service::Service(Corpus corpus, std::map<std::string, RankingRun> runs, AnnotationStore& store, ServiceOptions options)
    : corpus_(std::move(corpus)), runs_(std::move(runs)), store_(&store), options_(std::move(options)) {}

const RankingRun& Service::run(const std::string& run_id) const {
    auto it = runs_.find(run_id);
    if (it == runs_.end()) throw Error(ErrorCode::UnknownRun, run_id);
    return it->second;
}

ordered_json Service::question_json(const Question& q) const {
    auto j = ordered_json::parse(serialize_question(q));
    if (!q.options.empty()) j["input_sequence"] = build_input_sequence(q);
    return j;
}

ordered_json Service::list_questions(std::size_t offset, std::size_t limit) const {
    ordered_json out;
    out["total"] = corpus_.size();
    out["offset"] = offset;
    auto items = ordered_json::array();
    for (std::size_t i = offset; i < corpus_.size() && i - offset < limit; ++i) items.push_back(question_json(corpus_[i]));
    out["items"] = std::move(items);
    return out;
}

ordered_json Service::get_question(const std::string& id) const {
    const auto* q = corpus_.find(id);
    if (!q) throw Error(ErrorCode::UnknownQuestion, id);
    return question_json(*q);
}

ordered_json Service::list_runs() const {
    auto out = ordered_json::array();
    for (const auto& [id, r] : runs_) {
        ordered_json j;
        j["run_id"] = id;
        j["model"] = to_string(r.model);
        j["mode"] = to_string(r.mode);
        j["k"] = r.k;
        j["queries"] = r.per_query.size();
        j["config"] = r.config;
        out.push_back(std::move(j));
    }
    return out;
}

ordered_json Service::get_candidates(const std::string& run_id, const std::string& query_id,
                                     std::optional<std::size_t> k) const {
    const auto& r = run(run_id);
    auto it = r.per_query.find(query_id);
    if (it == r.per_query.end()) throw Error(ErrorCode::UnknownQuestion, query_id + " is not a query of run " + run_id);
    const auto* query = corpus_.find(query_id);
    if (!query) throw Error(ErrorCode::UnknownQuestion, query_id);
    const auto limit = std::min(k.value_or(r.k), it->second.size());
    ordered_json out;
    out["run_id"] = run_id;
    out["query"] = question_json(*query);
    auto cands = ordered_json::array();
    for (std::size_t i = 0; i < limit; ++i) {
        const auto& c = it->second[i];
        const auto* q = corpus_.find(c.id);
        if (!q) throw Error(ErrorCode::UnknownQuestion, c.id);
        ordered_json j;
        j["rank"] = i + 1;
        j["score"] = c.score;
        j["question"] = question_json(*q);
        cands.push_back(std::move(j));
    }
    out["candidates"] = std::move(cands);
    return out;
}

ordered_json Service::sample(const std::string& run_id, std::size_t n, std::uint64_t seed) const {
    const auto pairs = sample_for_review(run(run_id), n, seed);
    ordered_json out;
    out["run_id"] = run_id;
    out["n"] = n;
    out["seed"] = seed;
    auto items = ordered_json::array();
    for (const auto& [q, c] : pairs) items.push_back({{"query_id", q}, {"candidate_id", c}});
    out["pairs"] = std::move(items);
    return out;
}

ordered_json Service::submit_annotation(const nlohmann::json& body) {
    auto a = annotation_from_json(body);
    if (!corpus_.contains(a.query_id)) throw Error(ErrorCode::UnknownQuestion, a.query_id);
    if (!corpus_.contains(a.candidate_id)) throw Error(ErrorCode::UnknownQuestion, a.candidate_id);
    run(a.run_id);
    if (a.annotator.empty()) throw Error(ErrorCode::InvalidArgument, "annotator must not be empty");
    if (a.timestamp.empty()) a.timestamp = utc_timestamp();
    const auto id = store_->submit(a);
    ordered_json out;
    out["id"] = id;
    out["annotation"] = to_json(a);
    return out;
}

ordered_json Service::annotation_stats(const std::optional<std::string>& run_id) const {
    if (run_id) run(*run_id);
    const auto anns = store_->annotations(run_id);
    ordered_json out;
    if (run_id) out["run_id"] = *run_id;
    if (anns.empty()) {
        out["total"] = 0;
        auto counts = ordered_json::object();
        for (auto l : kLabels) counts[std::string(to_string(l))] = 0;
        out["counts"] = std::move(counts);
        out["percent"] = nullptr;
        return out;
    }
    const auto dist = distribution_to_json(label_distribution(anns));
    for (const auto& [k, v] : dist.items()) out[k] = v;
    return out;
}

ordered_json Service::evaluate(const std::string& run_id, Averaging averaging) const {
    const auto& r = run(run_id);
    const auto m = topic_match_metrics(r, corpus_, averaging);
    auto out = metrics_to_json(m, run_id);
    std::vector<std::pair<std::string, Metrics>> rows{{std::string(to_string(r.model)), m}};
    out["table"] = format_metrics_table(rows);
    return out;
}

int http_status(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::UnknownQuestion:
    case ErrorCode::UnknownRun:
    case ErrorCode::UnknownDoc: return 404;
    case ErrorCode::DuplicateAnnotation:
    case ErrorCode::DuplicateId: return 409;
    case ErrorCode::Io: return 500;
    default: return 400;
    }
}

void Service::mount(httplib::Server& server) {
    using Handler = std::function<ordered_json(const httplib::Request&)>;
    auto wrap = [this](Handler h) {
        return [this, h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
            if (options_.token) {
                const auto auth = req.get_header_value("Authorization");
                if (auth != "Bearer " + *options_.token) {
                    send_error(res, 401, "Unauthorized", "missing or wrong bearer token");
                    return;
                }
            }
            try {
                send_json(res, 200, h(req));
            } catch (const Error& e) {
                send_error(res, http_status(e.code()), to_string(e.code()), e.detail());
            } catch (const nlohmann::json::exception& e) {
                send_error(res, 400, "MalformedRecord", e.what());
            } catch (const std::exception& e) {
                send_error(res, 500, "Internal", e.what());
            }
        };
    };
    auto param = [](const httplib::Request& req, const char* name) -> std::optional<std::string> {
        if (!req.has_param(name)) return std::nullopt;
        return req.get_param_value(name);
    };

    server.Get("/api/questions", wrap([this, param](const httplib::Request& req) {
        const auto offset = param(req, "offset");
        const auto limit = param(req, "limit");
        return list_questions(offset ? parse_size(*offset, "offset") : 0, limit ? parse_size(*limit, "limit") : 50);
    }));
    server.Get(R"(/api/questions/([^/]+))",
               wrap([this](const httplib::Request& req) { return get_question(req.matches[1]); }));
    server.Get("/api/runs", wrap([this](const httplib::Request&) { return ordered_json(list_runs()); }));
    server.Get(R"(/api/runs/([^/]+)/candidates/([^/]+))", wrap([this, param](const httplib::Request& req) {
        const auto k = param(req, "k");
        return get_candidates(req.matches[1], req.matches[2],
                              k ? std::optional<std::size_t>(parse_size(*k, "k")) : std::nullopt);
    }));
    server.Get("/api/sample", wrap([this, param](const httplib::Request& req) {
        const auto run_id = param(req, "run_id");
        if (!run_id) throw Error(ErrorCode::InvalidArgument, "run_id is required");
        const auto n = param(req, "n");
        const auto seed = param(req, "seed");
        return sample(*run_id, n ? parse_size(*n, "n") : 203, seed ? parse_size(*seed, "seed") : 0);
    }));
    server.Post("/api/annotations", wrap([this](const httplib::Request& req) {
        return submit_annotation(nlohmann::json::parse(req.body));
    }));
    server.Get("/api/annotations/stats", wrap([this, param](const httplib::Request& req) {
        return annotation_stats(param(req, "run_id"));
    }));
    server.Get(R"(/api/eval/([^/]+))", wrap([this, param](const httplib::Request& req) {
        const auto avg = param(req, "averaging");
        Averaging a = Averaging::Macro;
        if (avg && *avg == "weighted") {
            a = Averaging::Weighted;
        } else if (avg && *avg != "macro") {
            throw Error(ErrorCode::InvalidArgument, "averaging must be macro or weighted");
        }
        return evaluate(req.matches[1], a);
    }));
    if (options_.static_dir) server.set_mount_point("/", *options_.static_dir);
}

std::map<std::string, RankingRun> load_runs_dir(const std::string& dir) {
    std::map<std::string, RankingRun> runs;
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::Io, dir + " is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.size() > 10 && name.ends_with(".run.jsonl")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        auto r = read_run_file(f.string());
        auto id = r.run_id;
        if (!runs.emplace(id, std::move(r)).second) throw Error(ErrorCode::DuplicateId, "run " + id);
    }
    return runs;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace harmoniser
