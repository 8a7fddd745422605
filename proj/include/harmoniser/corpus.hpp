#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace harmoniser {

struct ResponseOption {
    std::string code;
    std::string label;

    bool operator==(const ResponseOption&) const = default;
};

enum class Typology { Standard, Qualified, Compound };

std::string_view to_string(Typology t) noexcept;
std::optional<Typology> parse_typology(std::string_view s) noexcept;

struct TopicCode {
    std::string top_level;
    std::optional<std::string> sub_topic;

    bool operator==(const TopicCode&) const = default;
};

struct Question {
    std::string id;
    std::string questionnaire;
    std::string study;
    int year = 0;
    std::string text;
    std::vector<ResponseOption> options;
    Typology typology = Typology::Standard;
    TopicCode topic;
    bool is_code_list = false;

    bool operator==(const Question&) const = default;
};

inline constexpr int kMinYear = 1900;
inline constexpr int kMaxYear = 2100;

/// Immutable, id-keyed set of questions. Questions are held in ascending id
/// order, so positional order doubles as the tie-break order used by every
/// ranking in the library.
class Corpus {
public:
    Corpus() = default;
    /// Throws DuplicateId or MalformedRecord when an invariant is violated.
    explicit Corpus(std::vector<Question> questions);

    std::size_t size() const noexcept { return questions_.size(); }
    bool empty() const noexcept { return questions_.empty(); }
    std::size_t questionnaire_count() const noexcept { return questionnaire_count_; }

    std::span<const Question> questions() const noexcept { return questions_; }
    const Question& operator[](std::size_t i) const { return questions_[i]; }
    auto begin() const noexcept { return questions_.begin(); }
    auto end() const noexcept { return questions_.end(); }

    const Question* find(std::string_view id) const;
    std::optional<std::size_t> position(std::string_view id) const;
    bool contains(std::string_view id) const { return position(id).has_value(); }

    bool operator==(const Corpus& other) const { return questions_ == other.questions_; }

private:
    std::vector<Question> questions_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::size_t questionnaire_count_ = 0;
};

/// Allowed sub-topics per top-level topic.
using TopicTaxonomy = std::map<std::string, std::set<std::string>, std::less<>>;

/// Reads one JSON record per line. Blank lines are skipped; any malformed
/// line rejects the whole input with its 1-based line number.
Corpus parse_corpus(std::istream& in);
Corpus load_corpus(const std::string& path);

void write_corpus(std::ostream& out, const Corpus& corpus);
std::string serialize_question(const Question& q);

/// Throws MalformedRecord naming the first question whose topic is not in
/// the taxonomy.
void validate_topics(const Corpus& corpus, const TopicTaxonomy& taxonomy);
TopicTaxonomy parse_taxonomy(std::istream& in);

Corpus filter_code_list(const Corpus& corpus);

/// Question text, a space, then the options rendered as "code, label"
/// joined by " | ". Throws NotCodeList when there are no options.
std::string build_input_sequence(const Question& q);

}  // namespace harmoniser
