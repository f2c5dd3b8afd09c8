#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace dyvo {

// Joint word+entity term-id space. Word ids occupy [0, word_vocab_size),
// entity ids occupy [word_vocab_size, word_vocab_size + entity_count).
struct VocabularyLayout {
    uint32_t word_vocab_size = 0;
    uint32_t entity_count = 0;

    uint32_t entity_offset() const { return word_vocab_size; }
    uint32_t total_size() const { return word_vocab_size + entity_count; }
    bool is_word_term(uint32_t term_id) const { return term_id < word_vocab_size; }
    bool is_valid_term(uint32_t term_id) const { return term_id < total_size(); }

    bool operator==(const VocabularyLayout&) const = default;
};

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;
};

// Weighted bag over the joint term-id space. Entries are kept sorted by
// ascending term_id; zero weights are never stored. Immutable after build.
class SparseVector {
public:
    using Entry = std::pair<uint32_t, float>;

    SparseVector() = default;
    explicit SparseVector(VocabularyLayout layout) : layout_(layout) {}

    // Entries may arrive in any order; they are sorted and validated.
    // Rejects duplicate term ids, non-finite or negative weights, and
    // term ids outside the layout. Zero weights are dropped.
    static SparseVector from_entries(VocabularyLayout layout, std::vector<Entry> entries);

    const VocabularyLayout& layout() const { return layout_; }
    const std::vector<Entry>& entries() const { return entries_; }

    size_t l0() const { return entries_.size(); }
    double l1() const;

    bool empty() const { return entries_.empty(); }
    bool operator==(const SparseVector&) const = default;

private:
    VocabularyLayout layout_;
    std::vector<Entry> entries_;  // ascending term_id
};

// Relevance dot product. Accumulates in 64-bit, word range first then
// entity range, so the word/entity decomposition is bit-exact.
double dot(const SparseVector& a, const SparseVector& b);

// Partition by id range: (word part, entity part).
std::pair<SparseVector, SparseVector> split(const SparseVector& v);

// Union of vectors with disjoint supports (word + entity parts).
SparseVector merge(const SparseVector& word_part, const SparseVector& entity_part);

// Line-delimited JSON: {"id": "<string>", "vector": {"<term_id>": <weight>}}
void write_sparse_jsonl(std::ostream& out, const std::string& id, const SparseVector& v);
std::vector<std::pair<std::string, SparseVector>> read_sparse_jsonl(std::istream& in,
                                                                    VocabularyLayout layout);
void write_sparse_file(const std::string& path,
                       const std::vector<std::pair<std::string, SparseVector>>& vecs);
std::vector<std::pair<std::string, SparseVector>> read_sparse_file(const std::string& path,
                                                                   VocabularyLayout layout);

}  // namespace dyvo
