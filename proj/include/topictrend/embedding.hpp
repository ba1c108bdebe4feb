#ifndef TOPICTREND_EMBEDDING_HPP
#define TOPICTREND_EMBEDDING_HPP

#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "topictrend/common.hpp"
#include "topictrend/text.hpp"

namespace topictrend {

/// Pretrained word vectors, all of one dimension.
class WordVectorStore {
public:
    explicit WordVectorStore(std::size_t dimension = 0) : dimension_(dimension) {}

    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t size() const noexcept { return index_.size(); }

    /// Inserts or replaces; returns false when an existing vector was replaced.
    bool insert(const std::string& token, std::span<const double> vec) {
        if (vec.size() != dimension_) throw ArgumentError("vector dimension mismatch for '" + token + "'");
        auto [it, fresh] = index_.try_emplace(token, data_.size() / std::max<std::size_t>(dimension_, 1));
        if (fresh)
            data_.insert(data_.end(), vec.begin(), vec.end());
        else
            std::copy(vec.begin(), vec.end(), data_.begin() + static_cast<std::ptrdiff_t>(it->second * dimension_));
        return fresh;
    }

    std::optional<std::span<const double>> find(const std::string& token) const {
        auto it = index_.find(token);
        if (it == index_.end()) return std::nullopt;
        return std::span<const double>(data_.data() + it->second * dimension_, dimension_);
    }

    /// Tokens whose duplicate occurrence overwrote an earlier one at load time.
    std::vector<std::string> duplicate_tokens;

private:
    std::size_t dimension_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<double> data_;
};

/// word2vec text format: header "<count> <dimension>", then one
/// "token v1 .. vD" line per word. Duplicate tokens: the last occurrence wins
/// and the token is recorded in duplicate_tokens.
inline WordVectorStore parse_word_vectors(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "missing '<count> <dimension>' header");
    std::istringstream header(line);
    long long count = -1, dim = -1;
    if (!(header >> count >> dim) || count < 0 || dim < 1)
        throw ParseError(1, "malformed header '" + line + "'");
    WordVectorStore store(static_cast<std::size_t>(dim));
    std::vector<double> vec(static_cast<std::size_t>(dim));
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view rest = trim(line);
        if (rest.empty()) continue;
        const auto sp = rest.find_first_of(" \t");
        const std::string token(rest.substr(0, sp));
        std::size_t n = 0;
        rest = sp == std::string_view::npos ? std::string_view{} : rest.substr(sp);
        while (true) {
            const auto b = rest.find_first_not_of(" \t");
            if (b == std::string_view::npos) break;
            rest.remove_prefix(b);
            const auto e = rest.find_first_of(" \t");
            const auto field = rest.substr(0, e);
            auto v = parse_number<double>(field);
            if (!v || !std::isfinite(*v))
                throw ParseError(lineno, "malformed value '" + std::string(field) + "'");
            if (n >= vec.size())
                throw ParseError(lineno, "expected " + std::to_string(dim) + " values, found more");
            vec[n++] = *v;
            if (e == std::string_view::npos) break;
            rest.remove_prefix(e);
        }
        if (n != vec.size())
            throw ParseError(lineno, "expected " + std::to_string(dim) + " values, found " + std::to_string(n));
        if (!store.insert(token, vec)) store.duplicate_tokens.push_back(token);
    }
    return store;
}

inline WordVectorStore load_word_vectors(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open word vectors " + path.string());
    return parse_word_vectors(in);
}

namespace detail {

/// Store vector for each vocabulary index (nullptr when absent from the store).
inline std::vector<const double*> align_vocabulary(const WordVectorStore& store, const TfIdfModel& model) {
    std::vector<const double*> rows(model.size(), nullptr);
    for (std::size_t i = 0; i < model.size(); ++i)
        if (auto v = store.find(model.tokens[i])) rows[i] = v->data();
    return rows;
}

inline std::optional<std::vector<double>> weighted_mean(std::size_t dim, const std::vector<const double*>& rows,
                                                        const DocumentTermWeights& weights) {
    std::vector<double> acc(dim, 0.0);
    double total = 0.0;
    // entries are in ascending vocabulary index: the summation order is canonical.
    for (const auto& [index, w] : weights.entries) {
        const double* v = index < rows.size() ? rows[index] : nullptr;
        if (v == nullptr) continue;
        for (std::size_t d = 0; d < dim; ++d) acc[d] += w * v[d];
        total += w;
    }
    if (total <= 0.0) return std::nullopt;
    for (auto& x : acc) x /= total;
    return acc;
}

}  // namespace detail

/// TF-IDF-weighted average of the document's word vectors, over tokens present
/// in both the weights and the store. nullopt when no such token exists.
inline std::optional<std::vector<double>> embed_document(const WordVectorStore& store, const TfIdfModel& model,
                                                         const DocumentTermWeights& weights) {
    return detail::weighted_mean(store.dimension(), detail::align_vocabulary(store, model), weights);
}

/// n_documents x D embeddings with per-row document ids.
struct EmbeddingMatrix {
    std::vector<std::string> ids;
    Matrix values;

    std::size_t size() const { return ids.size(); }
    bool operator==(const EmbeddingMatrix&) const = default;
};

struct EmbeddedCorpus {
    EmbeddingMatrix embeddings;
    std::vector<std::string> excluded;       // ids of unembeddable documents
    std::size_t vocabulary_missing_from_store = 0;  // vocabulary tokens skipped (no vector)
};

/// Embeds every document; `ids[i]` names `documents[i]`. Row order follows the
/// input, unembeddable documents go to the exclusion list.
inline EmbeddedCorpus embed_corpus(const WordVectorStore& store, const TfIdfModel& model,
                                   std::span<const std::string> ids, std::span<const TokenStream> documents) {
    if (ids.size() != documents.size()) throw ArgumentError("embed_corpus: ids and documents differ in length");
    const auto rows = detail::align_vocabulary(store, model);
    std::vector<std::optional<std::vector<double>>> out(documents.size());
    parallel_for(documents.size(), [&](std::size_t i) {
        out[i] = detail::weighted_mean(store.dimension(), rows, doc_term_weights(model, documents[i]));
    });

    EmbeddedCorpus result;
    result.vocabulary_missing_from_store =
        static_cast<std::size_t>(std::count(rows.begin(), rows.end(), nullptr));
    std::size_t kept = 0;
    for (const auto& v : out) kept += v.has_value();
    result.embeddings.values = Matrix(kept, store.dimension());
    std::size_t r = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!out[i]) {
            result.excluded.push_back(ids[i]);
            continue;
        }
        result.embeddings.ids.push_back(ids[i]);
        std::copy(out[i]->begin(), out[i]->end(), result.embeddings.values.row(r++).begin());
    }
    if (kept == 0) throw ComputeError("no document could be embedded");
    return result;
}

/// CSV `record_id,v1..vD`, shortest round-trip decimals.
inline void write_embeddings_csv(std::ostream& out, const EmbeddingMatrix& m) {
    out << "record_id";
    for (std::size_t d = 0; d < m.values.cols(); ++d) out << ",v" << d + 1;
    out << '\n';
    for (std::size_t i = 0; i < m.size(); ++i) {
        out << csv_escape(m.ids[i]);
        for (double x : m.values.row(i)) out << ',' << format_double(x);
        out << '\n';
    }
}

inline EmbeddingMatrix read_embeddings_csv(std::istream& in) {
    const auto rows = read_csv(in);
    if (rows.empty() || rows.front().fields.empty() || rows.front().fields.front() != "record_id")
        throw SchemaError("missing column 'record_id'");
    const std::size_t dim = rows.front().fields.size() - 1;
    EmbeddingMatrix m;
    m.values = Matrix(rows.size() - 1, dim);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r].fields;
        if (f.size() != dim + 1) throw ParseError(rows[r].line, "expected " + std::to_string(dim + 1) + " fields");
        m.ids.push_back(f[0]);
        for (std::size_t d = 0; d < dim; ++d) {
            auto v = parse_number<double>(f[d + 1]);
            if (!v) throw ParseError(rows[r].line, "malformed value '" + f[d + 1] + "'");
            m.values(r - 1, d) = *v;
        }
    }
    return m;
}

}  // namespace topictrend

#endif  // TOPICTREND_EMBEDDING_HPP
