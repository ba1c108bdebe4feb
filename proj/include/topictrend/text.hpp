#ifndef TOPICTREND_TEXT_HPP
#define TOPICTREND_TEXT_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "topictrend/common.hpp"

namespace topictrend {

using TokenStream = std::vector<std::string>;

// English stop-word list (318 entries); identical to data/stopwords_en.txt.
inline constexpr std::string_view kEnglishStopWords[] = {
    "a", "about", "above", "across", "after", "afterwards", "again", "against", "all", "almost",
    "alone", "along", "already", "also", "although", "always", "am", "among", "amongst",
    "amoungst", "amount", "an", "and", "another", "any", "anyhow", "anyone", "anything", "anyway",
    "anywhere", "are", "around", "as", "at", "back", "be", "became", "because", "become",
    "becomes", "becoming", "been", "before", "beforehand", "behind", "being", "below", "beside",
    "besides", "between", "beyond", "bill", "both", "bottom", "but", "by", "call", "can", "cannot",
    "cant", "co", "con", "could", "couldnt", "cry", "de", "describe", "detail", "do", "done",
    "down", "due", "during", "each", "eg", "eight", "either", "eleven", "else", "elsewhere",
    "empty", "enough", "etc", "even", "ever", "every", "everyone", "everything", "everywhere",
    "except", "few", "fifteen", "fifty", "fill", "find", "fire", "first", "five", "for", "former",
    "formerly", "forty", "found", "four", "from", "front", "full", "further", "get", "give", "go",
    "had", "has", "hasnt", "have", "he", "hence", "her", "here", "hereafter", "hereby", "herein",
    "hereupon", "hers", "herself", "him", "himself", "his", "how", "however", "hundred", "i", "ie",
    "if", "in", "inc", "indeed", "interest", "into", "is", "it", "its", "itself", "keep", "last",
    "latter", "latterly", "least", "less", "ltd", "made", "many", "may", "me", "meanwhile",
    "might", "mill", "mine", "more", "moreover", "most", "mostly", "move", "much", "must", "my",
    "myself", "name", "namely", "neither", "never", "nevertheless", "next", "nine", "no", "nobody",
    "none", "noone", "nor", "not", "nothing", "now", "nowhere", "of", "off", "often", "on", "once",
    "one", "only", "onto", "or", "other", "others", "otherwise", "our", "ours", "ourselves", "out",
    "over", "own", "part", "per", "perhaps", "please", "put", "rather", "re", "same", "see",
    "seem", "seemed", "seeming", "seems", "serious", "several", "she", "should", "show", "side",
    "since", "sincere", "six", "sixty", "so", "some", "somehow", "someone", "something",
    "sometime", "sometimes", "somewhere", "still", "such", "system", "take", "ten", "than", "that",
    "the", "their", "them", "themselves", "then", "thence", "there", "thereafter", "thereby",
    "therefore", "therein", "thereupon", "these", "they", "thick", "thin", "third", "this",
    "those", "though", "three", "through", "throughout", "thru", "thus", "to", "together", "too",
    "top", "toward", "towards", "twelve", "twenty", "two", "un", "under", "until", "up", "upon",
    "us", "very", "via", "was", "we", "well", "were", "what", "whatever", "when", "whence",
    "whenever", "where", "whereafter", "whereas", "whereby", "wherein", "whereupon", "wherever",
    "whether", "which", "while", "whither", "who", "whoever", "whole", "whom", "whose", "why",
    "will", "with", "within", "without", "would", "yet", "you", "your", "yours", "yourself",
    "yourselves",
};

class StopWords {
public:
    StopWords() = default;

    template <class Range>
    explicit StopWords(const Range& words) {
        for (const auto& w : words) words_.emplace(w);
    }

    static const StopWords& english() {
        static const StopWords list(kEnglishStopWords);
        return list;
    }

    /// Plain text, one token per line; blank lines and surrounding whitespace ignored.
    static StopWords load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open stop-word list " + path.string());
        StopWords sw;
        std::string line;
        while (std::getline(in, line)) {
            auto t = trim(line);
            if (t.empty()) continue;
            std::string lower(t);
            for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            sw.words_.insert(std::move(lower));
        }
        return sw;
    }

    bool contains(const std::string& token) const { return words_.contains(token); }
    std::size_t size() const { return words_.size(); }

private:
    std::unordered_set<std::string> words_;
};

/// Lowercases, splits on every non-alphanumeric byte (non-ASCII bytes count
/// as separators), then drops purely numeric tokens, tokens shorter than two
/// characters, and stop-words.
inline TokenStream tokenize(std::string_view text, const StopWords& stop_words = StopWords::english()) {
    TokenStream out;
    std::string cur;
    bool has_letter = false;
    auto flush = [&] {
        if (cur.size() >= 2 && has_letter && !stop_words.contains(cur)) out.push_back(cur);
        cur.clear();
        has_letter = false;
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c < 0x80 && std::isalnum(c)) {
            if (std::isalpha(c)) has_letter = true;
            cur += static_cast<char>(std::tolower(c));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

/// Corpus vocabulary with document frequencies and (once fitted) IDF weights.
/// Token indices follow lexicographic order.
struct TfIdfModel {
    std::vector<std::string> tokens;
    std::vector<std::size_t> document_frequency;
    std::vector<std::size_t> corpus_count;
    std::vector<double> idf;  // empty until fit_tfidf
    std::size_t corpus_size = 0;
    std::size_t min_count = 50;

    std::size_t size() const { return tokens.size(); }
    bool fitted() const { return idf.size() == tokens.size() && !tokens.empty(); }

    std::optional<std::size_t> find(std::string_view token) const {
        auto it = std::lower_bound(tokens.begin(), tokens.end(), token);
        if (it == tokens.end() || *it != token) return std::nullopt;
        return static_cast<std::size_t>(it - tokens.begin());
    }

    bool operator==(const TfIdfModel&) const = default;
};

inline TfIdfModel build_vocabulary(std::span<const TokenStream> documents, std::size_t min_count) {
    if (min_count < 1) throw ArgumentError("min_count must be >= 1");
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // token -> (total, df)
    for (const auto& doc : documents) {
        std::unordered_set<std::string_view> seen;
        for (const auto& t : doc) {
            auto& c = counts[t];
            ++c.first;
            if (seen.insert(t).second) ++c.second;
        }
    }
    TfIdfModel m;
    m.corpus_size = documents.size();
    m.min_count = min_count;
    for (const auto& [token, c] : counts) {
        if (c.first < min_count) continue;
        m.tokens.push_back(token);
        m.corpus_count.push_back(c.first);
        m.document_frequency.push_back(c.second);
    }
    if (m.tokens.empty()) throw ComputeError("no tokens survive min_count");
    return m;
}

/// Smoothed inverse document frequency, ln((1+N)/(1+df)) + 1.
inline double smoothed_idf(std::size_t corpus_size, std::size_t df) {
    return std::log((1.0 + static_cast<double>(corpus_size)) / (1.0 + static_cast<double>(df))) + 1.0;
}

inline TfIdfModel fit_tfidf(TfIdfModel model) {
    model.idf.resize(model.tokens.size());
    for (std::size_t i = 0; i < model.tokens.size(); ++i)
        model.idf[i] = smoothed_idf(model.corpus_size, model.document_frequency[i]);
    return model;
}

/// Number of tokens of a stream that belong to the vocabulary.
inline std::size_t count_in_vocabulary(const TfIdfModel& model, const TokenStream& doc) {
    return static_cast<std::size_t>(
        std::count_if(doc.begin(), doc.end(), [&](const std::string& t) { return model.find(t).has_value(); }));
}

/// w(t,d) = count(t in d) * idf(t), held as (vocabulary index, weight) pairs
/// in ascending index order.
struct DocumentTermWeights {
    std::vector<std::pair<std::size_t, double>> entries;

    bool empty() const { return entries.empty(); }

    double weight(std::size_t vocab_index) const {
        auto it = std::lower_bound(entries.begin(), entries.end(), vocab_index,
                                   [](const auto& e, std::size_t i) { return e.first < i; });
        return (it != entries.end() && it->first == vocab_index) ? it->second : 0.0;
    }
};

inline DocumentTermWeights doc_term_weights(const TfIdfModel& model, const TokenStream& doc) {
    if (!model.fitted()) throw ArgumentError("doc_term_weights: model not fitted");
    std::map<std::size_t, std::size_t> counts;
    for (const auto& t : doc)
        if (auto i = model.find(t)) ++counts[*i];
    DocumentTermWeights w;
    w.entries.reserve(counts.size());
    for (auto [i, c] : counts) w.entries.emplace_back(i, static_cast<double>(c) * model.idf[i]);
    return w;
}

inline nlohmann::ordered_json to_json(const TfIdfModel& m) {
    nlohmann::ordered_json j;
    j["corpus_size"] = m.corpus_size;
    j["min_count"] = m.min_count;
    auto& vocab = j["vocabulary"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < m.tokens.size(); ++i) {
        nlohmann::ordered_json e;
        e["token"] = m.tokens[i];
        e["index"] = i;
        e["df"] = m.document_frequency[i];
        e["count"] = m.corpus_count[i];
        if (m.fitted()) e["idf"] = m.idf[i];
        vocab.push_back(std::move(e));
    }
    return j;
}

inline TfIdfModel tfidf_from_json(const nlohmann::json& j) {
    TfIdfModel m;
    try {
        m.corpus_size = j.at("corpus_size").get<std::size_t>();
        m.min_count = j.at("min_count").get<std::size_t>();
        bool has_idf = true;
        for (const auto& e : j.at("vocabulary")) {
            if (e.at("index").get<std::size_t>() != m.tokens.size())
                throw SchemaError("vocabulary indices must be 0..n-1 in order");
            m.tokens.push_back(e.at("token").get<std::string>());
            m.document_frequency.push_back(e.at("df").get<std::size_t>());
            m.corpus_count.push_back(e.at("count").get<std::size_t>());
            if (e.contains("idf"))
                m.idf.push_back(e.at("idf").get<double>());
            else
                has_idf = false;
        }
        if (!has_idf) m.idf.clear();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed TF-IDF model: ") + e.what());
    }
    if (!std::is_sorted(m.tokens.begin(), m.tokens.end()))
        throw SchemaError("vocabulary tokens must be in lexicographic order");
    return m;
}

}  // namespace topictrend

#endif  // TOPICTREND_TEXT_HPP
