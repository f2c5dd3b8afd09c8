#include "dyvo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dyvo {

namespace {

double gain(int rel, bool exponential) {
    return exponential ? std::exp2(static_cast<double>(rel)) - 1.0 : static_cast<double>(rel);
}

}  // namespace

void Qrels::add(const std::string& query_id, const std::string& doc_id, int grade) {
    if (grade < 0) throw std::invalid_argument("relevance grade must be >= 0");
    auto& per_query = judgments_[query_id];
    if (!per_query.emplace(doc_id, grade).second) {
        throw std::invalid_argument("duplicate judgment for (" + query_id + ", " + doc_id + ")");
    }
}

void Run::add(const std::string& query_id, const std::string& doc_id, double score) {
    rankings[query_id].push_back({doc_id, score});
}

void Run::sort_rankings() {
    for (auto& [query_id, entries] : rankings) {
        std::sort(entries.begin(), entries.end(), [](const RunEntry& a, const RunEntry& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.doc_id < b.doc_id;
        });
    }
}

MetricReport ndcg_at_k(const Run& run, const Qrels& qrels, size_t k, bool exponential_gain) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    MetricReport report;
    double total = 0.0;
    for (const auto& [query_id, entries] : run.rankings) {
        auto jt = qrels.judgments().find(query_id);
        if (jt == qrels.judgments().end()) {
            report.skipped_queries.push_back(query_id);
            continue;
        }
        const auto& judged = jt->second;

        std::vector<int> grades;
        for (const auto& [doc_id, grade] : judged) {
            if (grade > 0) grades.push_back(grade);
        }
        if (grades.empty()) {
            report.skipped_queries.push_back(query_id);
            continue;
        }
        std::sort(grades.rbegin(), grades.rend());

        double dcg = 0.0;
        for (size_t i = 0; i < entries.size() && i < k; ++i) {
            auto g = judged.find(entries[i].doc_id);
            if (g != judged.end() && g->second > 0) {
                dcg += gain(g->second, exponential_gain) / std::log2(static_cast<double>(i) + 2.0);
            }
        }
        double idcg = 0.0;
        for (size_t i = 0; i < grades.size() && i < k; ++i) {
            idcg += gain(grades[i], exponential_gain) / std::log2(static_cast<double>(i) + 2.0);
        }
        const double ndcg = idcg > 0.0 ? dcg / idcg : 0.0;
        report.per_query[query_id] = ndcg;
        total += ndcg;
    }
    report.mean = report.per_query.empty()
                      ? 0.0
                      : total / static_cast<double>(report.per_query.size());
    return report;
}

MetricReport recall_at_n(const Run& run, const Qrels& qrels, size_t n) {
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    MetricReport report;
    double total = 0.0;
    for (const auto& [query_id, entries] : run.rankings) {
        auto jt = qrels.judgments().find(query_id);
        if (jt == qrels.judgments().end()) {
            report.skipped_queries.push_back(query_id);
            continue;
        }
        size_t relevant = 0;
        for (const auto& [doc_id, grade] : jt->second) {
            if (grade > 0) ++relevant;
        }
        if (relevant == 0) {
            report.skipped_queries.push_back(query_id);
            continue;
        }
        size_t found = 0;
        for (size_t i = 0; i < entries.size() && i < n; ++i) {
            auto g = jt->second.find(entries[i].doc_id);
            if (g != jt->second.end() && g->second > 0) ++found;
        }
        const double recall = static_cast<double>(found) / static_cast<double>(relevant);
        report.per_query[query_id] = recall;
        total += recall;
    }
    report.mean = report.per_query.empty()
                      ? 0.0
                      : total / static_cast<double>(report.per_query.size());
    return report;
}

Qrels parse_qrels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    Qrels qrels;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string query_id, iteration, doc_id;
        int grade;
        if (!(ss >> query_id >> iteration >> doc_id >> grade)) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": malformed qrels line");
        }
        try {
            qrels.add(query_id, doc_id, grade);
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return qrels;
}

Run parse_run(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    Run run;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string query_id, q0, doc_id, tag;
        size_t rank;
        double score;
        if (!(ss >> query_id >> q0 >> doc_id >> rank >> score >> tag)) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": malformed run line");
        }
        run.tag = tag;
        run.add(query_id, doc_id, score);
    }
    run.sort_rankings();
    for (const auto& [query_id, entries] : run.rankings) {
        std::vector<std::string> ids;
        for (const auto& e : entries) ids.push_back(e.doc_id);
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
            throw std::runtime_error(path + ": duplicate doc id for query " + query_id);
        }
    }
    return run;
}

void write_run(const Run& run, const std::string& path, size_t depth) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.precision(17);
    for (const auto& [query_id, entries] : run.rankings) {
        for (size_t i = 0; i < entries.size() && i < depth; ++i) {
            out << query_id << " Q0 " << entries[i].doc_id << " " << (i + 1) << " "
                << entries[i].score << " " << run.tag << "\n";
        }
    }
}

}  // namespace dyvo
