#include "dyvo/index.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

namespace dyvo {

namespace {

template <typename T>
void write_le(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const char* what) {
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
        throw std::runtime_error(std::string("unexpected end of file reading ") + what);
    }
    return value;
}

}  // namespace

InvertedIndex InvertedIndex::build(
    const std::vector<std::pair<std::string, SparseVector>>& docs) {
    InvertedIndex idx;
    std::unordered_set<std::string> seen;
    for (const auto& [doc_id, vec] : docs) {
        if (!seen.insert(doc_id).second) {
            throw std::invalid_argument("duplicate doc_id " + doc_id);
        }
        if (idx.doc_ids_.empty()) {
            idx.layout_ = vec.layout();
        } else if (vec.layout() != idx.layout_) {
            throw std::invalid_argument("doc " + doc_id + " uses a different vocabulary layout");
        }
        const auto ordinal = static_cast<uint32_t>(idx.doc_ids_.size());
        idx.doc_ids_.push_back(doc_id);
        for (const auto& [term, weight] : vec.entries()) {
            idx.term_postings_[term].push_back({ordinal, weight});
        }
    }
    return idx;
}

std::vector<ScoredDoc> InvertedIndex::search(const SparseVector& q, size_t k) const {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (!doc_ids_.empty() && q.layout() != layout_) {
        throw std::invalid_argument("query uses a different vocabulary layout");
    }
    const uint32_t offset = q.layout().entity_offset();

    // Word and entity contributions accumulate separately so the final score
    // equals sparse_core::dot bit for bit.
    struct Acc {
        double word = 0.0;
        double entity = 0.0;
        bool touched = false;
    };
    std::vector<Acc> acc(doc_ids_.size());

    // Query terms are already ascending; postings ascend by ordinal.
    for (const auto& [term, q_weight] : q.entries()) {
        auto it = term_postings_.find(term);
        if (it == term_postings_.end()) continue;
        const bool is_word = term < offset;
        const double qw = static_cast<double>(q_weight);
        for (const auto& posting : it->second) {
            Acc& a = acc[posting.doc_ordinal];
            (is_word ? a.word : a.entity) += qw * static_cast<double>(posting.weight);
            a.touched = true;
        }
    }

    std::vector<std::pair<double, uint32_t>> scored;
    for (uint32_t ord = 0; ord < acc.size(); ++ord) {
        if (acc[ord].touched) {
            scored.emplace_back(acc[ord].word + acc[ord].entity, ord);
        }
    }
    std::sort(scored.begin(), scored.end(), [this](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return doc_ids_[a.second] < doc_ids_[b.second];
    });
    if (scored.size() > k) scored.resize(k);

    std::vector<ScoredDoc> result;
    result.reserve(scored.size());
    for (const auto& [score, ord] : scored) {
        result.push_back({doc_ids_[ord], score});
    }
    return result;
}

IndexStats InvertedIndex::stats() const {
    IndexStats s;
    s.doc_count = doc_ids_.size();
    s.term_count = term_postings_.size();
    for (const auto& [term, list] : term_postings_) {
        s.postings_count += list.size();
    }
    s.mean_doc_l0 = s.doc_count == 0
                        ? 0.0
                        : static_cast<double>(s.postings_count) / static_cast<double>(s.doc_count);
    return s;
}

void InvertedIndex::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write("DYVOIDX1", 8);
    write_le<uint32_t>(out, layout_.word_vocab_size);
    write_le<uint32_t>(out, layout_.entity_count);
    write_le<uint32_t>(out, static_cast<uint32_t>(doc_ids_.size()));
    for (const auto& id : doc_ids_) {
        write_le<uint32_t>(out, static_cast<uint32_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    write_le<uint32_t>(out, static_cast<uint32_t>(term_postings_.size()));
    for (const auto& [term, list] : term_postings_) {
        write_le<uint32_t>(out, term);
        write_le<uint32_t>(out, static_cast<uint32_t>(list.size()));
        for (const auto& p : list) {
            write_le<uint32_t>(out, p.doc_ordinal);
            write_le<float>(out, p.weight);
        }
    }
}

InvertedIndex InvertedIndex::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    in.seekg(0, std::ios::end);
    const auto file_size = static_cast<uint64_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    // Any length or count field implies at least that many payload bytes;
    // anything larger than the file is corruption, not an allocation request.
    auto check_remaining = [&](uint64_t needed, const char* what) {
        const auto pos = static_cast<uint64_t>(in.tellg());
        if (needed > file_size - pos) {
            throw std::runtime_error(path + ": corrupt " + what +
                                     " (implies more bytes than the file holds)");
        }
    };
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, "DYVOIDX1", 8) != 0) {
        throw std::runtime_error(path + ": bad magic, expected DYVOIDX1");
    }
    InvertedIndex idx;
    idx.layout_.word_vocab_size = read_le<uint32_t>(in, "word_vocab_size");
    idx.layout_.entity_count = read_le<uint32_t>(in, "entity_count");
    const auto doc_count = read_le<uint32_t>(in, "doc count");
    check_remaining(doc_count, "doc count");
    idx.doc_ids_.reserve(doc_count);
    for (uint32_t d = 0; d < doc_count; ++d) {
        const auto len = read_le<uint32_t>(in, "doc id length");
        check_remaining(len, "doc id length");
        std::string id(len, '\0');
        if (!in.read(id.data(), len)) throw std::runtime_error(path + ": truncated doc id");
        idx.doc_ids_.push_back(std::move(id));
    }
    const auto term_count = read_le<uint32_t>(in, "term count");
    for (uint32_t t = 0; t < term_count; ++t) {
        const auto term = read_le<uint32_t>(in, "term id");
        const auto list_len = read_le<uint32_t>(in, "posting list length");
        check_remaining(static_cast<uint64_t>(list_len) * 8, "posting list length");
        auto& list = idx.term_postings_[term];
        list.reserve(list_len);
        for (uint32_t p = 0; p < list_len; ++p) {
            Posting posting;
            posting.doc_ordinal = read_le<uint32_t>(in, "doc ordinal");
            posting.weight = read_le<float>(in, "posting weight");
            if (posting.doc_ordinal >= doc_count) {
                throw std::runtime_error(path + ": posting ordinal out of range");
            }
            if (!list.empty() && list.back().doc_ordinal >= posting.doc_ordinal) {
                throw std::runtime_error(path + ": posting list not strictly ascending");
            }
            list.push_back(posting);
        }
    }
    return idx;
}

}  // namespace dyvo
