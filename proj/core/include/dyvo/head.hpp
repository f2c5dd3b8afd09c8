#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dyvo/kb.hpp"
#include "dyvo/sparse.hpp"

namespace dyvo {

// Contextual token states for one query or document: row j is the last
// hidden state of input token j.
struct HiddenStates {
    uint32_t dim = 0;
    std::vector<uint32_t> token_ids;  // length L
    std::vector<float> states;        // row-major L x dim

    uint32_t length() const { return static_cast<uint32_t>(token_ids.size()); }
    std::span<const float> row(uint32_t j) const { return {states.data() + j * dim, dim}; }
    void validate() const;
};

// Ordered, duplicate-free entity-id subset nominated by a candidate
// retriever. Only these ids are ever scored by the head.
class CandidateSet {
public:
    CandidateSet() = default;
    static CandidateSet from_ids(std::vector<uint64_t> ids);  // rejects duplicates
    // Keeps first occurrence of each id.
    static CandidateSet dedup(const std::vector<uint64_t>& ids);

    const std::vector<uint64_t>& ids() const { return ids_; }
    size_t size() const { return ids_.size(); }
    bool empty() const { return ids_.empty(); }

private:
    std::vector<uint64_t> ids_;
};

struct EncoderParams {
    VocabularyLayout layout;
    std::vector<float> word_embeddings;  // row-major |V| x dim
    uint32_t dim = 0;
    std::vector<float> mlp_weight;       // dim
    float mlp_bias = 0.0f;
    float lambda_ent = 0.05f;
    Projection projection;               // entity embedding -> dim

    std::span<const float> word_embedding(uint32_t word_id) const {
        return {word_embeddings.data() + static_cast<size_t>(word_id) * dim, dim};
    }
};

// Maps each entity id to its term id in the joint space and back.
uint32_t entity_term_id(const VocabularyLayout& layout, size_t entity_pos);

// MLM document weighting: weight of word i is max_j ln(1 + ReLU(e_i . h_j)),
// exhaustive over the word vocabulary. Zero weights are omitted.
SparseVector mlm_word_weights(const HiddenStates& h, const EncoderParams& p);

// MLP query weighting: weight of word i is the sum over positions carrying
// token i of ln(1 + ReLU(W . h_j + b)). No expansion beyond input tokens.
SparseVector mlp_query_weights(const HiddenStates& h, const EncoderParams& p);

// Dynamic-vocabulary entity weighting: weight of candidate entity i is
// lambda_ent * max_j ln(1 + ReLU(project(e_i) . h_j)). Entities outside the
// candidate set are never scored. Entity term ids are offset-namespaced by
// the candidate's position in the embedding table's ascending-id order.
SparseVector entity_weights(const HiddenStates& h, const CandidateSet& cands,
                            const EmbeddingTable& emb, const EncoderParams& p);

SparseVector encode_query(const HiddenStates& h, const CandidateSet& cands,
                          const EmbeddingTable& emb, const EncoderParams& p);
SparseVector encode_document(const HiddenStates& h, const CandidateSet& cands,
                             const EmbeddingTable& emb, const EncoderParams& p);

// Dot product computed via positional matching inside a compact batch
// candidate slot space; never materializes the full vocabulary. Requires
// both vectors' entity entries to lie within batch_candidate_terms.
double score_pair_subset(const SparseVector& q_rep, const SparseVector& d_rep,
                         const std::vector<uint32_t>& batch_candidate_terms);

// HiddenStates file: "DYVOHID1", u32 sequence count; per sequence a
// length-prefixed UTF-8 id, u32 L, u32 d, L token ids, L*d f32 states.
std::vector<std::pair<std::string, HiddenStates>> load_hidden_states(const std::string& path);
void save_hidden_states(const std::vector<std::pair<std::string, HiddenStates>>& seqs,
                        const std::string& path);

}  // namespace dyvo
