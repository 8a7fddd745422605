#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

namespace synth {

using namespace harmoniser;

namespace {

struct TopicBank {
    std::string name;
    std::vector<std::string> subs;
    std::vector<std::string> words;
};

const std::vector<TopicBank>& banks() {
    static const std::vector<TopicBank> b = {
        {"Housing", {"Tenure", "Heating", "Amenities", "Neighbourhood", "Overcrowding", "Repairs", "Rent", "Mobility"},
         {"house", "home", "accommodation", "rent", "landlord", "mortgage", "heating", "kitchen", "bathroom", "damp", "district", "area", "gas", "cooking"}},
        {"Health", {"General health", "Illness", "Disability", "Medication", "Hospital", "Smoking", "Alcohol"},
         {"health", "illness", "doctor", "hospital", "medicine", "pain", "asthma", "eczema", "smoke", "cigarettes", "drink", "allergy", "treatment", "symptoms"}},
        {"Education", {"School", "Qualifications", "Homework", "Teachers", "Further study", "Truancy", "Exams", "Reading"},
         {"school", "class", "teacher", "homework", "lessons", "exam", "qualification", "college", "university", "reading", "maths", "questions", "pupils", "subjects"}},
        {"Employment", {"Occupation", "Hours", "Job search", "Self-employment", "Workplace", "Unemployment", "Retirement", "Training"},
         {"job", "work", "employer", "occupation", "manager", "hours", "overtime", "paid", "self-employed", "unemployed", "career", "workplace", "colleagues", "shift"}},
        {"Income and Finance", {"Earnings", "Benefits", "Savings", "Debt", "Pensions", "Expenditure", "Financial strain"},
         {"income", "money", "wages", "salary", "benefits", "savings", "debt", "pension", "bills", "afford", "bank", "loan", "spending", "allowance"}},
        {"Family and Household", {"Partnership", "Children", "Siblings", "Parents", "Household composition", "Marriage", "Divorce", "Contact"},
         {"partner", "husband", "wife", "children", "baby", "brother", "sister", "mother", "father", "household", "married", "family", "relatives", "contact"}},
        {"Childcare", {"Arrangements", "Nursery", "Grandparents", "Costs", "Hours of care", "Babysitting", "Preferences"},
         {"childcare", "nursery", "grandparent", "childminder", "looking", "after", "arrangements", "care", "creche", "nanny", "playgroup", "minding", "babysitter", "begin"}},
        {"Transport", {"Car ownership", "Commuting", "Public transport", "Cycling", "Driving licence", "Travel time", "Accidents"},
         {"car", "bus", "train", "travel", "journey", "commute", "bicycle", "drive", "licence", "walk", "transport", "station", "van", "road"}},
        {"Leisure", {"Sport", "Holidays", "Television", "Clubs", "Hobbies", "Reading for pleasure", "Outings", "Music"},
         {"sport", "holiday", "television", "club", "hobby", "music", "cinema", "football", "swimming", "games", "weekend", "leisure", "outings", "library"}},
        {"Politics and Attitudes", {"Voting", "Democracy", "Trust", "Party support", "Gender roles", "Immigration", "Europe", "Interest"},
         {"vote", "election", "democracy", "government", "party", "politics", "trust", "parliament", "immigration", "opinion", "agree", "country", "rights", "europe"}},
        {"Religion", {"Affiliation", "Attendance", "Prayer", "Belief", "Upbringing", "Importance", "Religious school"},
         {"religion", "church", "mosque", "prayer", "belief", "god", "faith", "worship", "services", "christian", "religious", "attend", "temple", "denomination"}},
        {"Crime and Safety", {"Victimisation", "Police", "Fear of crime", "Offending", "Neighbourhood safety", "Courts", "Burglary"},
         {"crime", "police", "burglary", "theft", "safe", "dark", "attacked", "victim", "court", "arrested", "vandalism", "stolen", "violence", "afraid"}},
        {"Environment", {"Pollution", "Recycling", "Climate", "Green space", "Energy use", "Noise", "Water"},
         {"pollution", "recycling", "climate", "energy", "environment", "noise", "litter", "park", "green", "water", "waste", "air", "traffic", "fumes"}},
        {"Food and Diet", {"Meals", "Fruit and vegetables", "Snacks", "Breastfeeding", "Vegetarian", "Shopping", "Dieting"},
         {"food", "meal", "breakfast", "fruit", "vegetables", "sweets", "crisps", "diet", "breastfeed", "milk", "eat", "vegetarian", "shopping", "lunch"}},
        {"Technology and Media", {"Internet", "Computer", "Mobile phone", "Social media", "Newspapers", "Gaming", "Screen time", "Online safety"},
         {"internet", "computer", "phone", "online", "email", "newspaper", "radio", "website", "tablet", "screen", "social", "media", "messages", "video"}},
        {"Wellbeing", {"Life satisfaction", "Happiness", "Stress", "Loneliness", "Self-esteem", "Worries", "Sleep", "Mood"},
         {"satisfied", "happy", "worried", "lonely", "stress", "sleep", "feel", "life", "mood", "confident", "anxious", "depressed", "energy", "tired"}},
    };
    return b;
}

const std::vector<std::string>& templates() {
    static const std::vector<std::string> t = {
        "Do you {0} {1}?",
        "How satisfied are you with your {0} and {1}?",
        "How often do you {0} the {1} {2}?",
        "In the last twelve months, have you had any {0} {1}?",
        "What is your current {0} {1}?",
        "Does anyone in the household {0} {1} {2}?",
        "How important is {0} to your {1}?",
        "Thinking about your {0}, would you say {1} {2} is",
        "How much do you like {0} {1}?",
        "Has your {0} changed since the last {1} {2}?",
    };
    return t;
}

const std::vector<std::vector<ResponseOption>>& scales() {
    static const std::vector<std::vector<ResponseOption>> s = {
        {{"1", "yes"}, {"2", "no"}, {"9", "don't know"}},
        {{"1", "very satisfied"}, {"2", "fairly satisfied"}, {"3", "a little dissatisfied"}, {"4", "very dissatisfied"}, {"8", "don't know"}},
        {{"1", "never"}, {"2", "sometimes"}, {"3", "often"}, {"4", "always"}},
        {{"1", "every day"}, {"2", "at least once a week"}, {"3", "at least once a month"}, {"4", "less often"}, {"5", "never"}},
        {{"1", "strongly agree"}, {"2", "agree"}, {"3", "neither agree nor disagree"}, {"4", "disagree"}, {"5", "strongly disagree"}},
        {{"1", "very good"}, {"2", "good"}, {"3", "fair"}, {"4", "poor"}, {"5", "very poor"}},
        {{"1", "a lot"}, {"2", "a little"}, {"3", "not at all"}},
        {{"1", "very important"}, {"2", "quite important"}, {"3", "not very important"}, {"4", "not at all important"}},
    };
    return s;
}

const std::vector<std::string>& filler() {
    static const std::vector<std::string> f = {
        "please", "include", "only", "current", "usual", "main", "regular", "any", "other", "time",
        "period", "present", "past", "recent", "weekly", "daily", "generally", "mostly", "overall", "previous"};
    return f;
}

std::string fill(const std::string& tmpl, const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (tmpl[i] == '{' && i + 2 < tmpl.size() && tmpl[i + 2] == '}') {
            out += words[static_cast<std::size_t>(tmpl[i + 1] - '0')];
            i += 2;
        } else {
            out += tmpl[i];
        }
    }
    return out;
}

std::string format_id(char prefix, std::size_t n, int width) {
    std::string digits = std::to_string(n);
    if (digits.size() < static_cast<std::size_t>(width)) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
    return std::string(1, prefix) + digits;
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_string(const std::string& s, std::uint64_t seed) {
    std::uint64_t h = seed ^ 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix(h);
}

// Uniform in [-1, 1), derived from 24 random bits so the value is exact in
// f32.
float unit_uniform(std::uint64_t& state) {
    state = splitmix(state);
    return static_cast<float>(static_cast<double>(state >> 40) / 8388608.0 - 1.0);
}

const std::unordered_map<std::string, std::string>& topic_of_word() {
    static const auto m = [] {
        std::unordered_map<std::string, std::string> out;
        for (const auto& b : banks()) {
            for (const auto& w : b.words) {
                for (const auto& t : tokenize(w)) out.emplace(t, b.name);
            }
        }
        return out;
    }();
    return m;
}

Question make_question(std::mt19937_64& rng, std::size_t index, const CorpusSpec& spec) {
    const auto& bank = banks()[draw(rng, banks().size())];
    Question q;
    q.id = format_id('q', index, 6);
    const auto qn = draw(rng, spec.questionnaires);
    q.questionnaire = "Questionnaire " + std::to_string(qn + 1);
    q.study = "Study " + std::string(1, static_cast<char>('A' + qn % 6));
    q.year = 1946 + static_cast<int>(draw(rng, 75));
    std::vector<std::string> words;
    for (int i = 0; i < 3; ++i) words.push_back(bank.words[draw(rng, bank.words.size())]);
    q.text = fill(templates()[draw(rng, templates().size())], words);
    for (std::size_t i = 0; i < spec.padding_words; ++i) {
        q.text += " " + (draw(rng, 5) == 0 ? bank.words[draw(rng, bank.words.size())] : filler()[draw(rng, filler().size())]);
    }
    q.is_code_list = static_cast<double>(draw(rng, 1000)) < spec.code_list_fraction * 1000.0;
    if (q.is_code_list) q.options = scales()[draw(rng, scales().size())];
    q.typology = q.is_code_list ? Typology::Standard : (draw(rng, 2) == 0 ? Typology::Qualified : Typology::Compound);
    q.topic.top_level = bank.name;
    if (draw(rng, 5) != 0) q.topic.sub_topic = bank.subs[draw(rng, bank.subs.size())];
    return q;
}

}  // namespace

std::uint64_t draw(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

const std::vector<std::string>& topic_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& b : banks()) n.push_back(b.name);
        return n;
    }();
    return names;
}

TopicTaxonomy taxonomy() {
    TopicTaxonomy t;
    for (const auto& b : banks()) t[b.name] = std::set<std::string>(b.subs.begin(), b.subs.end());
    return t;
}

Corpus survey_corpus(const CorpusSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    std::vector<Question> questions;
    std::set<std::string> sequences;
    questions.reserve(spec.questions);
    while (questions.size() < spec.questions) {
        auto q = make_question(rng, questions.size(), spec);
        const auto key = q.text + "\x1f" + (q.options.empty() ? std::string() : build_input_sequence(q));
        if (!sequences.insert(key).second) continue;
        questions.push_back(std::move(q));
    }
    return Corpus(std::move(questions));
}

Corpus planted_duplicates(std::size_t pairs, std::size_t distractors, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    CorpusSpec spec;
    spec.seed = seed;
    std::vector<Question> questions;
    std::set<std::string> sequences;
    auto add_unique = [&](Question q) {
        if (!sequences.insert(build_input_sequence(q)).second) return false;
        questions.push_back(std::move(q));
        return true;
    };

    Question gas;
    gas.id = "dup00a";
    gas.questionnaire = "Your Health Events and Feelings";
    gas.study = "Study A";
    gas.year = 1992;
    gas.text = "Do you use gas for cooking?";
    gas.options = {{"1", "yes, ring(s) only"}, {"2", "yes, oven only"}, {"3", "yes, both rings and oven"}, {"4", "no, not at all"}};
    gas.typology = Typology::Standard;
    gas.topic = {"Housing", std::string("Amenities")};
    gas.is_code_list = true;
    add_unique(gas);

    std::size_t made = 1;
    std::size_t counter = 0;
    while (made < pairs) {
        auto q = make_question(rng, counter++, spec);
        q.is_code_list = true;
        if (q.options.empty()) q.options = scales()[draw(rng, scales().size())];
        // Make the base wording specific enough to be retrievable.
        const auto& bank = banks()[made % banks().size()];
        q.topic = {bank.name, bank.subs[made % bank.subs.size()]};
        q.text = fill(templates()[made % templates().size()],
                      {bank.words[made % bank.words.size()], bank.words[(made * 3 + 1) % bank.words.size()],
                       bank.words[(made * 5 + 2) % bank.words.size()]}) +
                 " (item " + std::to_string(made) + ")";
        q.id = format_id('p', made, 2) + "a";
        if (add_unique(q)) ++made;
    }
    const auto bases = questions;
    for (const auto& base : bases) {
        Question twin = base;
        twin.id = base.id.substr(0, base.id.size() - 1) + "b";
        twin.questionnaire = base.questionnaire + " (follow-up)";
        twin.year = std::min(base.year + 4, kMaxYear);
        questions.push_back(std::move(twin));
    }
    std::size_t added = 0;
    while (added < distractors) {
        auto q = make_question(rng, counter++, spec);
        q.is_code_list = true;
        if (q.options.empty()) q.options = scales()[draw(rng, scales().size())];
        q.id = format_id('x', added, 4);
        if (add_unique(q)) ++added;
    }
    return Corpus(std::move(questions));
}

EmbeddingStore embeddings(const Corpus& corpus, std::uint32_t dim, std::uint64_t seed, bool with_tokens,
                          std::size_t max_tokens, std::string model_tag) {
    std::unordered_map<std::string, std::vector<float>> cache;
    auto token_vector = [&](const std::string& token) -> const std::vector<float>& {
        auto it = cache.find(token);
        if (it != cache.end()) return it->second;
        std::uint64_t state = hash_string(token, seed);
        std::vector<float> v(dim);
        for (auto& x : v) x = unit_uniform(state);
        // Words of a topic bank share a topic direction, so that vectors
        // carry topical similarity the way a trained encoder would.
        if (auto t = topic_of_word().find(token); t != topic_of_word().end()) {
            std::uint64_t topic_state = hash_string(t->second, seed + 2);
            for (auto& x : v) x = static_cast<float>(0.5 * x + 1.5 * unit_uniform(topic_state));
        }
        return cache.emplace(token, std::move(v)).first->second;
    };
    std::vector<EmbeddingRecord> records;
    records.reserve(corpus.size());
    for (const auto& q : corpus) {
        if (!q.is_code_list) continue;
        const auto tokens = tokenize(build_input_sequence(q));
        EmbeddingRecord rec;
        rec.question_id = q.id;
        std::vector<double> mean(dim, 0.0);
        for (const auto& t : tokens) {
            const auto& v = token_vector(t);
            for (std::uint32_t i = 0; i < dim; ++i) mean[i] += v[i];
        }
        std::uint64_t state = hash_string(q.id, seed + 1);
        rec.dense.resize(dim);
        for (std::uint32_t i = 0; i < dim; ++i) {
            rec.dense[i] = static_cast<float>(mean[i] / static_cast<double>(tokens.size()) + 0.05 * unit_uniform(state));
        }
        if (with_tokens) {
            const auto rows = std::min(tokens.size(), max_tokens);
            rec.tokens.reserve(rows * dim);
            for (std::size_t r = 0; r < rows; ++r) {
                const auto& v = token_vector(tokens[r]);
                rec.tokens.insert(rec.tokens.end(), v.begin(), v.end());
            }
        }
        records.push_back(std::move(rec));
    }
    return EmbeddingStore(std::move(records), dim, RepKind::Mean, std::move(model_tag), with_tokens);
}

std::vector<InvertedIndex::Document> random_docs(std::size_t n, std::size_t max_len, std::size_t vocab,
                                                 std::mt19937_64& rng) {
    std::vector<InvertedIndex::Document> docs;
    docs.reserve(n);
    for (std::size_t d = 0; d < n; ++d) {
        const auto len = 1 + draw(rng, max_len);
        std::vector<std::string> tokens;
        for (std::size_t i = 0; i < len; ++i) tokens.push_back("w" + std::to_string(draw(rng, vocab)));
        docs.emplace_back(format_id('d', d, 4), std::move(tokens));
    }
    return docs;
}

}  // namespace synth
