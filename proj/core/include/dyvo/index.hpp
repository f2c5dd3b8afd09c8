#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dyvo/sparse.hpp"

namespace dyvo {

struct IndexStats {
    size_t doc_count = 0;
    size_t term_count = 0;
    size_t postings_count = 0;
    double mean_doc_l0 = 0.0;
};

// Inverted index over document sparse vectors with exact top-k dot-product
// search. Immutable after build; unlimited concurrent searches.
class InvertedIndex {
public:
    struct Posting {
        uint32_t doc_ordinal;
        float weight;  // > 0
    };

    static InvertedIndex build(const std::vector<std::pair<std::string, SparseVector>>& docs);

    // Exact top-min(k, matching) by dot(q, d); score descending, ties by
    // ascending external doc_id. Scores accumulate in 64-bit with the word
    // and entity ranges summed separately, matching sparse_core::dot.
    std::vector<ScoredDoc> search(const SparseVector& q, size_t k) const;

    IndexStats stats() const;

    const VocabularyLayout& layout() const { return layout_; }
    const std::vector<std::string>& doc_ids() const { return doc_ids_; }
    const std::map<uint32_t, std::vector<Posting>>& term_postings() const {
        return term_postings_;
    }

    // Index file: "DYVOIDX1", layout, doc-id table, per-term posting lists.
    void save(const std::string& path) const;
    static InvertedIndex load(const std::string& path);

private:
    VocabularyLayout layout_;
    std::vector<std::string> doc_ids_;                       // ordinal -> external id
    std::map<uint32_t, std::vector<Posting>> term_postings_;  // ascending term_id
};

}  // namespace dyvo
