#include "dyvo/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace dyvo {

SparseVector SparseVector::from_entries(VocabularyLayout layout, std::vector<Entry> entries) {
    std::erase_if(entries, [](const Entry& e) { return e.second == 0.0f; });
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.first < b.first; });
    for (size_t i = 0; i < entries.size(); ++i) {
        const auto& [term, weight] = entries[i];
        if (!layout.is_valid_term(term)) {
            throw std::invalid_argument("term id " + std::to_string(term) +
                                        " outside vocabulary layout");
        }
        if (!std::isfinite(weight) || weight < 0.0f) {
            throw std::invalid_argument("weight for term " + std::to_string(term) +
                                        " must be finite and non-negative");
        }
        if (i > 0 && entries[i - 1].first == term) {
            throw std::invalid_argument("duplicate term id " + std::to_string(term));
        }
    }
    SparseVector v(layout);
    v.entries_ = std::move(entries);
    return v;
}

double SparseVector::l1() const {
    double sum = 0.0;
    for (const auto& [term, weight] : entries_) {
        sum += static_cast<double>(weight);
    }
    return sum;
}

double dot(const SparseVector& a, const SparseVector& b) {
    if (a.layout() != b.layout()) {
        throw std::invalid_argument("dot: vectors use different vocabulary layouts");
    }
    const uint32_t offset = a.layout().entity_offset();
    double word_sum = 0.0;
    double entity_sum = 0.0;
    auto ia = a.entries().begin();
    auto ib = b.entries().begin();
    while (ia != a.entries().end() && ib != b.entries().end()) {
        if (ia->first < ib->first) {
            ++ia;
        } else if (ib->first < ia->first) {
            ++ib;
        } else {
            const double prod = static_cast<double>(ia->second) * static_cast<double>(ib->second);
            (ia->first < offset ? word_sum : entity_sum) += prod;
            ++ia;
            ++ib;
        }
    }
    return word_sum + entity_sum;
}

std::pair<SparseVector, SparseVector> split(const SparseVector& v) {
    const uint32_t offset = v.layout().entity_offset();
    std::vector<SparseVector::Entry> words;
    std::vector<SparseVector::Entry> entities;
    for (const auto& e : v.entries()) {
        (e.first < offset ? words : entities).push_back(e);
    }
    return {SparseVector::from_entries(v.layout(), std::move(words)),
            SparseVector::from_entries(v.layout(), std::move(entities))};
}

SparseVector merge(const SparseVector& word_part, const SparseVector& entity_part) {
    if (word_part.layout() != entity_part.layout()) {
        throw std::invalid_argument("merge: vectors use different vocabulary layouts");
    }
    std::vector<SparseVector::Entry> all = word_part.entries();
    all.insert(all.end(), entity_part.entries().begin(), entity_part.entries().end());
    return SparseVector::from_entries(word_part.layout(), std::move(all));
}

void write_sparse_jsonl(std::ostream& out, const std::string& id, const SparseVector& v) {
    nlohmann::ordered_json vec = nlohmann::ordered_json::object();
    for (const auto& [term, weight] : v.entries()) {
        vec[std::to_string(term)] = static_cast<double>(weight);
    }
    nlohmann::ordered_json line{{"id", id}, {"vector", std::move(vec)}};
    out << line.dump() << "\n";
}

std::vector<std::pair<std::string, SparseVector>> read_sparse_jsonl(std::istream& in,
                                                                    VocabularyLayout layout) {
    std::vector<std::pair<std::string, SparseVector>> result;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("sparse vector file line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
        std::vector<SparseVector::Entry> entries;
        for (const auto& [key, val] : rec.at("vector").items()) {
            entries.emplace_back(static_cast<uint32_t>(std::stoul(key)),
                                 static_cast<float>(val.get<double>()));
        }
        result.emplace_back(rec.at("id").get<std::string>(),
                            SparseVector::from_entries(layout, std::move(entries)));
    }
    return result;
}

void write_sparse_file(const std::string& path,
                       const std::vector<std::pair<std::string, SparseVector>>& vecs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (const auto& [id, v] : vecs) {
        write_sparse_jsonl(out, id, v);
    }
}

std::vector<std::pair<std::string, SparseVector>> read_sparse_file(const std::string& path,
                                                                   VocabularyLayout layout) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_sparse_jsonl(in, layout);
}

}  // namespace dyvo
