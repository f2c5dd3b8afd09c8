#include "dyvo/head.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace dyvo {

namespace {

// ln(1 + ReLU(x)); the saturation gate shared by all scoring heads.
double log_relu_gate(double x) { return x > 0.0 ? std::log1p(x) : 0.0; }

double dot_f(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

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

void HiddenStates::validate() const {
    if (token_ids.empty()) throw std::invalid_argument("hidden states must have L >= 1");
    if (states.size() != static_cast<size_t>(token_ids.size()) * dim) {
        throw std::invalid_argument("hidden state matrix size does not match L x dim");
    }
    for (float x : states) {
        if (!std::isfinite(x)) throw std::invalid_argument("non-finite hidden state component");
    }
}

CandidateSet CandidateSet::from_ids(std::vector<uint64_t> ids) {
    std::unordered_set<uint64_t> seen;
    for (uint64_t id : ids) {
        if (!seen.insert(id).second) {
            throw std::invalid_argument("duplicate candidate entity " + std::to_string(id));
        }
    }
    CandidateSet c;
    c.ids_ = std::move(ids);
    return c;
}

CandidateSet CandidateSet::dedup(const std::vector<uint64_t>& ids) {
    std::unordered_set<uint64_t> seen;
    CandidateSet c;
    for (uint64_t id : ids) {
        if (seen.insert(id).second) c.ids_.push_back(id);
    }
    return c;
}

uint32_t entity_term_id(const VocabularyLayout& layout, size_t entity_pos) {
    if (entity_pos >= layout.entity_count) {
        throw std::out_of_range("entity position " + std::to_string(entity_pos) +
                                " outside layout entity range");
    }
    return layout.entity_offset() + static_cast<uint32_t>(entity_pos);
}

SparseVector mlm_word_weights(const HiddenStates& h, const EncoderParams& p) {
    h.validate();
    if (h.dim != p.dim) throw std::invalid_argument("hidden state dim != encoder dim");
    std::vector<SparseVector::Entry> entries;
    for (uint32_t word = 0; word < p.layout.word_vocab_size; ++word) {
        auto e = p.word_embedding(word);
        double best = 0.0;
        for (uint32_t j = 0; j < h.length(); ++j) {
            best = std::max(best, log_relu_gate(dot_f(e, h.row(j))));
        }
        if (best > 0.0) {
            entries.emplace_back(word, static_cast<float>(best));
        }
    }
    return SparseVector::from_entries(p.layout, std::move(entries));
}

SparseVector mlp_query_weights(const HiddenStates& h, const EncoderParams& p) {
    h.validate();
    if (h.dim != p.dim) throw std::invalid_argument("hidden state dim != encoder dim");
    std::map<uint32_t, double> sums;
    for (uint32_t j = 0; j < h.length(); ++j) {
        const uint32_t token = h.token_ids[j];
        if (token >= p.layout.word_vocab_size) {
            throw std::invalid_argument("token id " + std::to_string(token) +
                                        " outside word vocabulary");
        }
        const double a = dot_f(p.mlp_weight, h.row(j)) + static_cast<double>(p.mlp_bias);
        sums[token] += log_relu_gate(a);
    }
    std::vector<SparseVector::Entry> entries;
    for (const auto& [token, weight] : sums) {
        if (weight > 0.0) entries.emplace_back(token, static_cast<float>(weight));
    }
    return SparseVector::from_entries(p.layout, std::move(entries));
}

SparseVector entity_weights(const HiddenStates& h, const CandidateSet& cands,
                            const EmbeddingTable& emb, const EncoderParams& p) {
    h.validate();
    if (h.dim != p.dim) throw std::invalid_argument("hidden state dim != encoder dim");
    std::vector<SparseVector::Entry> entries;
    for (uint64_t entity_id : cands.ids()) {
        const size_t pos = emb.position(entity_id);
        const std::vector<float> projected = p.projection.apply(emb.row_at(pos));
        if (projected.size() != p.dim) {
            throw std::invalid_argument("projected entity embedding dim != encoder dim");
        }
        double best = 0.0;
        for (uint32_t j = 0; j < h.length(); ++j) {
            best = std::max(best, log_relu_gate(dot_f(projected, h.row(j))));
        }
        const double weight = static_cast<double>(p.lambda_ent) * best;
        if (weight > 0.0) {
            entries.emplace_back(entity_term_id(p.layout, pos), static_cast<float>(weight));
        }
    }
    return SparseVector::from_entries(p.layout, std::move(entries));
}

SparseVector encode_query(const HiddenStates& h, const CandidateSet& cands,
                          const EmbeddingTable& emb, const EncoderParams& p) {
    return merge(mlp_query_weights(h, p), entity_weights(h, cands, emb, p));
}

SparseVector encode_document(const HiddenStates& h, const CandidateSet& cands,
                             const EmbeddingTable& emb, const EncoderParams& p) {
    return merge(mlm_word_weights(h, p), entity_weights(h, cands, emb, p));
}

double score_pair_subset(const SparseVector& q_rep, const SparseVector& d_rep,
                         const std::vector<uint32_t>& batch_candidate_terms) {
    if (q_rep.layout() != d_rep.layout()) {
        throw std::invalid_argument("score_pair_subset: layout mismatch");
    }
    const uint32_t offset = q_rep.layout().entity_offset();

    // Slot assignment: each batch candidate term owns one compact slot.
    std::unordered_map<uint32_t, size_t> slot_of;
    slot_of.reserve(batch_candidate_terms.size());
    for (size_t s = 0; s < batch_candidate_terms.size(); ++s) {
        slot_of.emplace(batch_candidate_terms[s], s);
    }

    std::vector<float> q_slots(batch_candidate_terms.size(), 0.0f);
    std::vector<float> d_slots(batch_candidate_terms.size(), 0.0f);
    auto fill = [&](const SparseVector& v, std::vector<float>& slots) {
        for (const auto& [term, weight] : v.entries()) {
            if (term < offset) continue;
            auto it = slot_of.find(term);
            if (it == slot_of.end()) {
                throw std::invalid_argument("entity term " + std::to_string(term) +
                                            " not in batch candidate set");
            }
            slots[it->second] = weight;
        }
    };
    fill(q_rep, q_slots);
    fill(d_rep, d_slots);

    double word_sum = 0.0;
    auto iq = q_rep.entries().begin();
    auto id = d_rep.entries().begin();
    while (iq != q_rep.entries().end() && id != d_rep.entries().end() && iq->first < offset &&
           id->first < offset) {
        if (iq->first < id->first) {
            ++iq;
        } else if (id->first < iq->first) {
            ++id;
        } else {
            word_sum += static_cast<double>(iq->second) * static_cast<double>(id->second);
            ++iq;
            ++id;
        }
    }

    // Slots are visited in ascending term id so the float accumulation
    // order matches sparse_core's dot exactly.
    std::vector<size_t> order(batch_candidate_terms.size());
    for (size_t s = 0; s < order.size(); ++s) order[s] = s;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return batch_candidate_terms[a] < batch_candidate_terms[b];
    });
    double entity_sum = 0.0;
    for (size_t s : order) {
        entity_sum += static_cast<double>(q_slots[s]) * static_cast<double>(d_slots[s]);
    }
    return word_sum + entity_sum;
}

std::vector<std::pair<std::string, HiddenStates>> load_hidden_states(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    in.seekg(0, std::ios::end);
    const auto file_size = static_cast<uint64_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    auto check_remaining = [&](uint64_t needed, const char* what) {
        const auto pos = static_cast<uint64_t>(in.tellg());
        if (needed > file_size - pos) {
            throw std::runtime_error(path + ": corrupt " + what +
                                     " (implies more bytes than the file holds)");
        }
    };
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, "DYVOHID1", 8) != 0) {
        throw std::runtime_error(path + ": bad magic, expected DYVOHID1");
    }
    const auto count = read_le<uint32_t>(in, "sequence count");
    check_remaining(count, "sequence count");
    std::vector<std::pair<std::string, HiddenStates>> result;
    result.reserve(count);
    for (uint32_t s = 0; s < count; ++s) {
        const auto id_len = read_le<uint32_t>(in, "id length");
        check_remaining(id_len, "id length");
        std::string id(id_len, '\0');
        if (!in.read(id.data(), id_len)) {
            throw std::runtime_error(path + ": truncated sequence id");
        }
        HiddenStates h;
        const auto length = read_le<uint32_t>(in, "L");
        h.dim = read_le<uint32_t>(in, "d");
        check_remaining(static_cast<uint64_t>(length) * 4 +
                            static_cast<uint64_t>(length) * h.dim * 4,
                        "sequence size");
        h.token_ids.resize(length);
        h.states.resize(static_cast<size_t>(length) * h.dim);
        if (!in.read(reinterpret_cast<char*>(h.token_ids.data()),
                     static_cast<std::streamsize>(length) * 4) ||
            !in.read(reinterpret_cast<char*>(h.states.data()),
                     static_cast<std::streamsize>(h.states.size()) * 4)) {
            throw std::runtime_error(path + ": truncated sequence \"" + id + "\"");
        }
        h.validate();
        result.emplace_back(std::move(id), std::move(h));
    }
    return result;
}

void save_hidden_states(const std::vector<std::pair<std::string, HiddenStates>>& seqs,
                        const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write("DYVOHID1", 8);
    write_le<uint32_t>(out, static_cast<uint32_t>(seqs.size()));
    for (const auto& [id, h] : seqs) {
        write_le<uint32_t>(out, static_cast<uint32_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
        write_le<uint32_t>(out, h.length());
        write_le<uint32_t>(out, h.dim);
        out.write(reinterpret_cast<const char*>(h.token_ids.data()),
                  static_cast<std::streamsize>(h.token_ids.size()) * 4);
        out.write(reinterpret_cast<const char*>(h.states.data()),
                  static_cast<std::streamsize>(h.states.size()) * 4);
    }
}

}  // namespace dyvo
