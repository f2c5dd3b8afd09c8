#pragma once

#include <map>
#include <string>
#include <vector>

namespace dyvo {

// TREC relevance judgments: (query_id, doc_id) -> grade.
class Qrels {
public:
    void add(const std::string& query_id, const std::string& doc_id, int grade);

    const std::map<std::string, std::map<std::string, int>>& judgments() const {
        return judgments_;
    }
    bool has_query(const std::string& query_id) const { return judgments_.count(query_id) > 0; }

private:
    std::map<std::string, std::map<std::string, int>> judgments_;
};

struct RunEntry {
    std::string doc_id;
    double score;
};

// Per-query ranked lists; within a query, order is score descending then
// doc_id ascending and doc ids are unique.
struct Run {
    std::map<std::string, std::vector<RunEntry>> rankings;
    std::string tag = "dyvo";

    void add(const std::string& query_id, const std::string& doc_id, double score);
    void sort_rankings();
};

struct MetricReport {
    std::map<std::string, double> per_query;  // queries with >= 1 relevant doc
    double mean = 0.0;
    std::vector<std::string> skipped_queries;  // no judgments or no relevant docs
};

// trec-eval ndcg_cut semantics: linear gain, log2(rank+1) discount.
// Set exponential_gain for the 2^rel - 1 variant (non-default).
MetricReport ndcg_at_k(const Run& run, const Qrels& qrels, size_t k,
                       bool exponential_gain = false);

MetricReport recall_at_n(const Run& run, const Qrels& qrels, size_t n = 1000);

// qrels line: `query_id 0 doc_id grade`; run line:
// `query_id Q0 doc_id rank score tag`.
Qrels parse_qrels(const std::string& path);
Run parse_run(const std::string& path);
void write_run(const Run& run, const std::string& path, size_t depth = 1000);

}  // namespace dyvo
