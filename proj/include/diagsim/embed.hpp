#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace diagsim {

using SentenceVector = std::vector<double>;

/// Word vectors loaded from the plain-text ".vec" convention:
/// header "<count> <dim>", then "<token> <v1> ... <vdim>" per line.
class WordVectorTable {
public:
    static WordVectorTable load(const std::string& path,
                                std::optional<std::size_t> max_vocab = std::nullopt);

    int dimension() const { return dim_; }
    std::size_t vocab_size() const { return vectors_.size(); }
    const std::vector<double>* find(const std::string& token) const;

private:
    int dim_ = 0;
    std::unordered_map<std::string, std::vector<double>> vectors_;
};

/// Lowercase, map punctuation to spaces, split on whitespace.
std::vector<std::string> tokenize(const std::string& text);

/// Mean of in-vocabulary token vectors; zero vector if every token is OOV or
/// the text has no tokens at all (arbitrary strings must embed totally — the
/// grounding fallback feeds raw model output through here).
SentenceVector embed_sentence(const WordVectorTable& table, const std::string& text);

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual int dimension() const = 0;
    virtual SentenceVector embed(const std::string& text) const = 0;
};

class TableEmbedder : public Embedder {
public:
    explicit TableEmbedder(WordVectorTable table) : table_(std::move(table)) {}
    int dimension() const override { return table_.dimension(); }
    SentenceVector embed(const std::string& text) const override;

private:
    WordVectorTable table_;
};

/// Deterministic stand-in for pre-trained vectors: every token maps to a
/// seeded pseudo-random unit vector, so the full suite runs without a vector file.
class HashEmbedder : public Embedder {
public:
    explicit HashEmbedder(std::uint64_t seed = 0, int dimension = 64);
    int dimension() const override { return dim_; }
    SentenceVector embed(const std::string& text) const override;
    SentenceVector token_vector(const std::string& token) const;

private:
    std::uint64_t seed_;
    int dim_;
};

/// How an embedder was configured; recorded in checkpoints so that a reload
/// reproduces identical vectors.
struct EmbedderSpec {
    std::string kind = "hash";  // "hash" | "vectors"
    int dimension = 64;
    std::uint64_t seed = 0;          // hash only
    std::string vectors_path;        // vectors only
    std::optional<std::size_t> max_vocab;

    bool operator==(const EmbedderSpec&) const = default;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec);

/// Cosine distance 1 - cos(a, b); any zero-norm operand gives distance 1.
double cosine_distance(const SentenceVector& a, const SentenceVector& b);

/// Index of the candidate with minimal cosine distance; ties break toward
/// the earliest candidate.
std::size_t nearest_index(const SentenceVector& query,
                          const std::vector<SentenceVector>& candidates);

/// Memoizing wrapper; action texts and observations repeat heavily.
/// Safe to share across evaluation workers: lookups lock internally, and the
/// returned references stay valid because entries are never erased.
class EmbeddingCache {
public:
    explicit EmbeddingCache(const Embedder& embedder) : embedder_(&embedder) {}
    const SentenceVector& get(const std::string& text) const;
    int dimension() const { return embedder_->dimension(); }
    const Embedder& embedder() const { return *embedder_; }

private:
    const Embedder* embedder_;
    mutable std::mutex mutex_;
    mutable std::unordered_map<std::string, SentenceVector> cache_;
};

}  // namespace diagsim
