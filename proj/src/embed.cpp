#include "diagsim/embed.hpp"

#include "diagsim/hashing.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace diagsim {

WordVectorTable WordVectorTable::load(const std::string& path,
                                      std::optional<std::size_t> max_vocab) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open vector file");

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    std::istringstream header(line);
    long long count = 0, dim = 0;
    if (!(header >> count >> dim) || count < 0 || dim <= 0)
        throw std::runtime_error(path + ": malformed header line \"" + line + "\"");

    WordVectorTable table;
    table.dim_ = static_cast<int>(dim);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (max_vocab && table.vectors_.size() >= *max_vocab) break;
        std::istringstream row(line);
        std::string token;
        row >> token;
        std::vector<double> values;
        values.reserve(static_cast<std::size_t>(dim));
        double v = 0.0;
        while (row >> v) values.push_back(v);
        if (!row.eof())
            throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                     ": non-numeric vector component");
        if (values.size() != static_cast<std::size_t>(dim))
            throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(dim) + " components, got " +
                                     std::to_string(values.size()));
        table.vectors_[token] = std::move(values);
    }
    return table;
}

const std::vector<double>* WordVectorTable::find(const std::string& token) const {
    auto it = vectors_.find(token);
    return it == vectors_.end() ? nullptr : &it->second;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (unsigned char c : text) {
        if (std::isalnum(c))
            cleaned.push_back(static_cast<char>(std::tolower(c)));
        else
            cleaned.push_back(' ');
    }
    std::vector<std::string> tokens;
    std::istringstream stream(cleaned);
    std::string tok;
    while (stream >> tok) tokens.push_back(tok);
    return tokens;
}

SentenceVector embed_sentence(const WordVectorTable& table, const std::string& text) {
    SentenceVector sum(static_cast<std::size_t>(table.dimension()), 0.0);
    std::size_t hits = 0;
    for (const auto& tok : tokenize(text)) {
        if (const auto* vec = table.find(tok)) {
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += (*vec)[i];
            ++hits;
        }
    }
    if (hits > 0)
        for (auto& v : sum) v /= static_cast<double>(hits);
    return sum;
}

SentenceVector TableEmbedder::embed(const std::string& text) const {
    return embed_sentence(table_, text);
}

HashEmbedder::HashEmbedder(std::uint64_t seed, int dimension) : seed_(seed), dim_(dimension) {
    if (dimension <= 0) throw std::invalid_argument("HashEmbedder: dimension must be positive");
}

SentenceVector HashEmbedder::token_vector(const std::string& token) const {
    std::mt19937_64 rng(fnv1a64(token) ^ seed_);
    std::normal_distribution<double> normal(0.0, 1.0);
    SentenceVector vec(static_cast<std::size_t>(dim_));
    double sq = 0.0;
    for (auto& v : vec) {
        v = normal(rng);
        sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (norm > 0)
        for (auto& v : vec) v /= norm;
    return vec;
}

SentenceVector HashEmbedder::embed(const std::string& text) const {
    SentenceVector sum(static_cast<std::size_t>(dim_), 0.0);
    const auto tokens = tokenize(text);
    for (const auto& tok : tokens) {
        const auto vec = token_vector(tok);
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += vec[i];
    }
    if (!tokens.empty())
        for (auto& v : sum) v /= static_cast<double>(tokens.size());
    return sum;
}

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec) {
    if (spec.kind == "hash") return std::make_unique<HashEmbedder>(spec.seed, spec.dimension);
    if (spec.kind == "vectors") {
        auto table = WordVectorTable::load(spec.vectors_path, spec.max_vocab);
        return std::make_unique<TableEmbedder>(std::move(table));
    }
    throw std::invalid_argument("unknown embedder kind \"" + spec.kind + "\"");
}

double cosine_distance(const SentenceVector& a, const SentenceVector& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine_distance: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 1.0;
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

std::size_t nearest_index(const SentenceVector& query,
                          const std::vector<SentenceVector>& candidates) {
    if (candidates.empty()) throw std::invalid_argument("nearest_index: empty candidate list");
    std::size_t best = 0;
    double best_dist = cosine_distance(query, candidates[0]);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double d = cosine_distance(query, candidates[i]);
        if (d < best_dist) {
            best = i;
            best_dist = d;
        }
    }
    return best;
}

const SentenceVector& EmbeddingCache::get(const std::string& text) const {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(text);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(text, embedder_->embed(text)).first->second;
}

}  // namespace diagsim
