#include "harmoniser/corpus.hpp"

#include "harmoniser/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

namespace harmoniser {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, 10> kFields = {
    "id",   "questionnaire", "study",    "year",      "text",
    "options", "typology",   "topic_top", "topic_sub", "is_code_list"};

[[noreturn]] void malformed(std::size_t line, const std::string& reason) {
    throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(line) + ": " + reason);
}

const ordered_json& require(const ordered_json& rec, std::string_view key, std::size_t line) {
    auto it = rec.find(key);
    if (it == rec.end()) malformed(line, "missing field '" + std::string(key) + "'");
    return *it;
}

std::string require_string(const ordered_json& rec, std::string_view key, std::size_t line) {
    const auto& v = require(rec, key, line);
    if (!v.is_string()) malformed(line, "field '" + std::string(key) + "' must be a string");
    return v.get<std::string>();
}

void check_question(const Question& q, const std::string& where) {
    auto fail = [&](const std::string& why) {
        throw Error(ErrorCode::MalformedRecord, where + ": " + why);
    };
    if (q.id.empty()) fail("empty id");
    if (q.year < kMinYear || q.year > kMaxYear) fail("year " + std::to_string(q.year) + " out of range");
    if (q.topic.top_level.empty()) fail("empty topic_top");
    if (q.is_code_list && q.options.empty()) fail("code list question without options");
    for (const auto& opt : q.options) {
        if (opt.code.empty()) fail("response option with empty code");
    }
}

Question parse_record(const std::string& text, std::size_t line) {
    ordered_json rec;
    try {
        rec = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        malformed(line, std::string("invalid JSON: ") + e.what());
    }
    if (!rec.is_object()) malformed(line, "record is not an object");
    for (const auto& [key, _] : rec.items()) {
        if (std::find(kFields.begin(), kFields.end(), key) == kFields.end()) {
            malformed(line, "unknown field '" + key + "'");
        }
    }

    Question q;
    q.id = require_string(rec, "id", line);
    q.questionnaire = require_string(rec, "questionnaire", line);
    q.study = require_string(rec, "study", line);
    const auto& year = require(rec, "year", line);
    if (!year.is_number_integer()) malformed(line, "field 'year' must be an integer");
    auto y = year.get<std::int64_t>();
    if (y < kMinYear || y > kMaxYear) malformed(line, "year " + std::to_string(y) + " out of range");
    q.year = static_cast<int>(y);
    q.text = require_string(rec, "text", line);

    const auto& options = require(rec, "options", line);
    if (!options.is_array()) malformed(line, "field 'options' must be an array");
    for (const auto& o : options) {
        if (!o.is_object() || o.size() != 2) malformed(line, "option must be {code, label}");
        ResponseOption opt;
        opt.code = require_string(o, "code", line);
        opt.label = require_string(o, "label", line);
        q.options.push_back(std::move(opt));
    }

    auto typology = parse_typology(require_string(rec, "typology", line));
    if (!typology) malformed(line, "typology must be standard, qualified or compound");
    q.typology = *typology;

    q.topic.top_level = require_string(rec, "topic_top", line);
    const auto& sub = require(rec, "topic_sub", line);
    if (sub.is_string()) {
        q.topic.sub_topic = sub.get<std::string>();
    } else if (!sub.is_null()) {
        malformed(line, "field 'topic_sub' must be a string or null");
    }

    const auto& code_list = require(rec, "is_code_list", line);
    if (!code_list.is_boolean()) malformed(line, "field 'is_code_list' must be a boolean");
    q.is_code_list = code_list.get<bool>();

    check_question(q, "line " + std::to_string(line));
    return q;
}

}  // namespace

std::string_view to_string(Typology t) noexcept {
    switch (t) {
    case Typology::Standard: return "standard";
    case Typology::Qualified: return "qualified";
    case Typology::Compound: return "compound";
    }
    return "standard";
}

std::optional<Typology> parse_typology(std::string_view s) noexcept {
    if (s == "standard") return Typology::Standard;
    if (s == "qualified") return Typology::Qualified;
    if (s == "compound") return Typology::Compound;
    return std::nullopt;
}

Corpus::Corpus(std::vector<Question> questions) : questions_(std::move(questions)) {
    std::sort(questions_.begin(), questions_.end(),
              [](const Question& a, const Question& b) { return a.id < b.id; });
    std::unordered_set<std::string_view> questionnaires;
    by_id_.reserve(questions_.size());
    for (std::size_t i = 0; i < questions_.size(); ++i) {
        const auto& q = questions_[i];
        check_question(q, "question '" + q.id + "'");
        if (!by_id_.emplace(q.id, i).second) throw Error(ErrorCode::DuplicateId, q.id);
        questionnaires.insert(q.questionnaire);
    }
    questionnaire_count_ = questionnaires.size();
}

const Question* Corpus::find(std::string_view id) const {
    auto pos = position(id);
    return pos ? &questions_[*pos] : nullptr;
}

std::optional<std::size_t> Corpus::position(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

Corpus parse_corpus(std::istream& in) {
    std::vector<Question> questions;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto q = parse_record(line, line_no);
        if (!seen.insert(q.id).second) throw Error(ErrorCode::DuplicateId, q.id);
        questions.push_back(std::move(q));
    }
    return Corpus(std::move(questions));
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open corpus file " + path);
    return parse_corpus(in);
}

std::string serialize_question(const Question& q) {
    ordered_json rec;
    rec["id"] = q.id;
    rec["questionnaire"] = q.questionnaire;
    rec["study"] = q.study;
    rec["year"] = q.year;
    rec["text"] = q.text;
    auto options = ordered_json::array();
    for (const auto& o : q.options) {
        ordered_json opt;
        opt["code"] = o.code;
        opt["label"] = o.label;
        options.push_back(std::move(opt));
    }
    rec["options"] = std::move(options);
    rec["typology"] = std::string(to_string(q.typology));
    rec["topic_top"] = q.topic.top_level;
    rec["topic_sub"] = q.topic.sub_topic ? ordered_json(*q.topic.sub_topic) : ordered_json(nullptr);
    rec["is_code_list"] = q.is_code_list;
    return rec.dump();
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
    for (const auto& q : corpus) out << serialize_question(q) << '\n';
}

TopicTaxonomy parse_taxonomy(std::istream& in) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::MalformedRecord, std::string("taxonomy: ") + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorCode::MalformedRecord, "taxonomy must be an object");
    TopicTaxonomy taxonomy;
    for (const auto& [top, subs] : doc.items()) {
        if (!subs.is_array()) throw Error(ErrorCode::MalformedRecord, "taxonomy: '" + top + "' must map to an array");
        auto& children = taxonomy[top];
        for (const auto& s : subs) {
            if (!s.is_string()) throw Error(ErrorCode::MalformedRecord, "taxonomy: sub-topics must be strings");
            children.insert(s.get<std::string>());
        }
    }
    return taxonomy;
}

void validate_topics(const Corpus& corpus, const TopicTaxonomy& taxonomy) {
    for (const auto& q : corpus) {
        auto it = taxonomy.find(q.topic.top_level);
        if (it == taxonomy.end()) {
            throw Error(ErrorCode::MalformedRecord,
                        "question '" + q.id + "': unknown top-level topic '" + q.topic.top_level + "'");
        }
        if (q.topic.sub_topic && !it->second.contains(*q.topic.sub_topic)) {
            throw Error(ErrorCode::MalformedRecord, "question '" + q.id + "': sub-topic '" +
                                                        *q.topic.sub_topic + "' is not a child of '" +
                                                        q.topic.top_level + "'");
        }
    }
}

Corpus filter_code_list(const Corpus& corpus) {
    std::vector<Question> kept;
    for (const auto& q : corpus) {
        if (q.is_code_list) kept.push_back(q);
    }
    return Corpus(std::move(kept));
}

std::string build_input_sequence(const Question& q) {
    if (q.options.empty()) throw Error(ErrorCode::NotCodeList, q.id);
    std::string out = q.text;
    out += ' ';
    for (std::size_t i = 0; i < q.options.size(); ++i) {
        if (i > 0) out += " | ";
        out += q.options[i].code;
        out += ", ";
        out += q.options[i].label;
    }
    return out;
}

}  // namespace harmoniser
