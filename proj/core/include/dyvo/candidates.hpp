#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "dyvo/head.hpp"
#include "dyvo/kb.hpp"

namespace dyvo {

struct LinkedLoadResult {
    std::map<std::string, CandidateSet> by_id;
    size_t dropped = 0;  // references that failed to resolve against the KB
};

// Linked/candidate file: line-delimited JSON {"id": "...", "entities":
// [<title or numeric id>, ...]}. Unresolvable references are dropped and
// counted, order is preserved, duplicates keep the first occurrence.
LinkedLoadResult load_linked(const std::string& path, const KnowledgeBase& kb);

// Lowercased Unicode tokens split on non-alphanumeric boundaries.
std::vector<std::string> tokenize(const std::string& text);

// BM25 over entity descriptions. Pyserini-default constants.
class Bm25EntityIndex {
public:
    static constexpr double kDefaultK1 = 0.9;
    static constexpr double kDefaultB = 0.4;

    static Bm25EntityIndex build(const KnowledgeBase& kb, double k1 = kDefaultK1,
                                 double b = kDefaultB);

    // Ranked by BM25 descending, ties by ascending entity_id; at most k ids,
    // only entities matching at least one query token.
    CandidateSet retrieve(const std::string& query_text, size_t k) const;

    double score(const std::vector<std::string>& query_tokens, uint64_t entity_id) const;
    size_t corpus_size() const { return doc_lengths_.size(); }

private:
    struct Posting {
        uint64_t entity_id;
        uint32_t tf;
    };
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::unordered_map<uint64_t, uint32_t> doc_lengths_;
    double avg_len_ = 0.0;
    double k1_ = kDefaultK1;
    double b_ = kDefaultB;
};

// Exact top-k by dot product over the full embedding table; ties broken by
// ascending entity_id.
CandidateSet dense_retrieve(std::span<const float> query_vec, const EmbeddingTable& emb,
                            size_t k);

struct GenerativeClientConfig {
    std::string endpoint_url;  // e.g. http://host:port/v1/chat/completions
    std::string model_name;
    std::string api_key_env_var = "DYVO_API_KEY";
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    std::string prompt_template;  // empty -> built-in few-shot template

    static const std::string& default_prompt_template();
};

struct GenerativeResult {
    CandidateSet candidates;
    std::vector<std::string> dropped_names;  // out-of-vocabulary per the KB
    std::string raw_completion;              // retained for debugging
};

// Renders the few-shot prompt for the query, requests one deterministic
// chat completion, parses the returned entity-name list, resolves names
// through the KB title index and drops out-of-vocabulary names.
GenerativeResult generative_retrieve(const GenerativeClientConfig& cfg,
                                     const std::string& query_text, const KnowledgeBase& kb);

// Exposed for tests: accepts a strict JSON array of strings or a bracketed
// comma-separated quoted list; anything else throws.
std::vector<std::string> parse_entity_list(const std::string& completion);

std::string render_prompt(const std::string& prompt_template, const std::string& query_text);

}  // namespace dyvo
