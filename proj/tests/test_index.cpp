#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "dyvo/index.hpp"

using dyvo::InvertedIndex;
using dyvo::ScoredDoc;
using dyvo::SparseVector;
using dyvo::VocabularyLayout;

namespace {

const VocabularyLayout kLayout{100, 40};

SparseVector sv(std::vector<SparseVector::Entry> entries) {
    return SparseVector::from_entries(kLayout, std::move(entries));
}

SparseVector random_vector(std::mt19937_64& rng, size_t n) {
    std::uniform_int_distribution<uint32_t> term(0, kLayout.total_size() - 1);
    std::uniform_real_distribution<float> weight(0.01f, 5.0f);
    std::map<uint32_t, float> picked;
    while (picked.size() < n) picked[term(rng)] = weight(rng);
    std::vector<SparseVector::Entry> entries(picked.begin(), picked.end());
    return sv(std::move(entries));
}

// Brute-force reference: score every doc with dyvo::dot, keep positives,
// sort score desc then doc_id asc, truncate to k.
std::vector<ScoredDoc> brute_force(const std::vector<std::pair<std::string, SparseVector>>& docs,
                                   const SparseVector& q, size_t k) {
    std::vector<ScoredDoc> hits;
    for (const auto& [id, d] : docs) {
        const double s = dyvo::dot(q, d);
        if (s > 0.0) hits.push_back({id, s});
    }
    std::sort(hits.begin(), hits.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

}  // namespace

TEST_CASE("empty index returns no hits") {
    auto idx = InvertedIndex::build({});
    CHECK(idx.search(sv({{1, 1.0f}}), 10).empty());
    CHECK(idx.stats().doc_count == 0);
}

TEST_CASE("single doc hand example") {
    auto idx = InvertedIndex::build({{"d1", sv({{2, 2.0f}, {5, 1.0f}})}});
    auto hits = idx.search(sv({{2, 3.0f}}), 10);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].doc_id == "d1");
    CHECK(hits[0].score == 6.0);
}

TEST_CASE("docs with zero score are not returned") {
    auto idx = InvertedIndex::build({{"d1", sv({{2, 1.0f}})}, {"d2", sv({{3, 1.0f}})}});
    auto hits = idx.search(sv({{3, 1.0f}}), 10);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].doc_id == "d2");
}

TEST_CASE("ties break by ascending doc id") {
    auto idx = InvertedIndex::build({{"b", sv({{1, 2.0f}})},
                                     {"a", sv({{1, 2.0f}})},
                                     {"c", sv({{1, 3.0f}})}});
    auto hits = idx.search(sv({{1, 1.0f}}), 10);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].doc_id == "c");
    CHECK(hits[1].doc_id == "a");
    CHECK(hits[2].doc_id == "b");
}

TEST_CASE("k truncates the result list") {
    std::vector<std::pair<std::string, SparseVector>> docs;
    for (int i = 0; i < 8; ++i) {
        docs.emplace_back("d" + std::to_string(i),
                          sv({{1, static_cast<float>(i + 1)}}));
    }
    auto idx = InvertedIndex::build(docs);
    auto hits = idx.search(sv({{1, 1.0f}}), 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].doc_id == "d7");
    CHECK(hits[2].doc_id == "d5");
}

TEST_CASE("k of zero is rejected") {
    auto idx = InvertedIndex::build({{"d1", sv({{1, 1.0f}})}});
    CHECK_THROWS_AS(idx.search(sv({{1, 1.0f}}), 0), std::invalid_argument);
}

TEST_CASE("empty query matches nothing") {
    auto idx = InvertedIndex::build({{"d1", sv({{1, 1.0f}})}});
    CHECK(idx.search(sv({}), 5).empty());
}

TEST_CASE("build rejects duplicate doc ids and mixed layouts") {
    CHECK_THROWS_AS(InvertedIndex::build({{"d1", sv({{1, 1.0f}})}, {"d1", sv({{2, 1.0f}})}}),
                    std::invalid_argument);
    VocabularyLayout other{7, 3};
    auto foreign = SparseVector::from_entries(other, {{1, 1.0f}});
    CHECK_THROWS_AS(InvertedIndex::build({{"d1", sv({{1, 1.0f}})}, {"d2", foreign}}),
                    std::invalid_argument);
}

TEST_CASE("search rejects a query with a different layout") {
    auto idx = InvertedIndex::build({{"d1", sv({{1, 1.0f}})}});
    VocabularyLayout other{7, 3};
    auto q = SparseVector::from_entries(other, {{1, 1.0f}});
    CHECK_THROWS_AS(idx.search(q, 5), std::invalid_argument);
}

TEST_CASE("search scores are bit-identical to dot") {
    std::mt19937_64 rng(53);
    std::vector<std::pair<std::string, SparseVector>> docs;
    for (int i = 0; i < 120; ++i) {
        docs.emplace_back("doc" + std::to_string(i), random_vector(rng, 15));
    }
    auto idx = InvertedIndex::build(docs);
    std::map<std::string, const SparseVector*> by_id;
    for (const auto& [id, v] : docs) by_id[id] = &v;

    for (int t = 0; t < 40; ++t) {
        auto q = random_vector(rng, 10);
        for (const auto& hit : idx.search(q, 50)) {
            CHECK(hit.score == dyvo::dot(q, *by_id.at(hit.doc_id)));
        }
    }
}

TEST_CASE("search agrees with the brute-force oracle including order") {
    std::mt19937_64 rng(59);
    std::vector<std::pair<std::string, SparseVector>> docs;
    for (int i = 0; i < 200; ++i) {
        docs.emplace_back("doc" + std::to_string(i), random_vector(rng, 12));
    }
    auto idx = InvertedIndex::build(docs);
    for (int t = 0; t < 30; ++t) {
        auto q = random_vector(rng, 8);
        for (size_t k : {1u, 5u, 37u, 500u}) {
            auto got = idx.search(q, k);
            auto want = brute_force(docs, q, k);
            REQUIRE(got.size() == want.size());
            for (size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].doc_id == want[i].doc_id);
                CHECK(got[i].score == want[i].score);
            }
        }
    }
}

TEST_CASE("stats counts docs, terms, postings and mean l0") {
    auto idx = InvertedIndex::build({{"d1", sv({{1, 1.0f}, {2, 1.0f}})},
                                     {"d2", sv({{2, 1.0f}, {3, 1.0f}, {4, 1.0f}})}});
    auto s = idx.stats();
    CHECK(s.doc_count == 2);
    CHECK(s.term_count == 4);
    CHECK(s.postings_count == 5);
    CHECK(s.mean_doc_l0 == doctest::Approx(2.5));
}

TEST_CASE("index file round trip preserves search results exactly") {
    std::mt19937_64 rng(61);
    std::vector<std::pair<std::string, SparseVector>> docs;
    for (int i = 0; i < 60; ++i) {
        docs.emplace_back("doc" + std::to_string(i), random_vector(rng, 10));
    }
    auto idx = InvertedIndex::build(docs);
    auto path = (std::filesystem::temp_directory_path() / "dyvo_idx_test.bin").string();
    idx.save(path);
    auto loaded = InvertedIndex::load(path);
    std::filesystem::remove(path);

    CHECK(loaded.layout() == idx.layout());
    CHECK(loaded.doc_ids() == idx.doc_ids());
    for (int t = 0; t < 10; ++t) {
        auto q = random_vector(rng, 6);
        auto a = idx.search(q, 20);
        auto b = loaded.search(q, 20);
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].doc_id == b[i].doc_id);
            CHECK(a[i].score == b[i].score);
        }
    }
}

TEST_CASE("load rejects a corrupted file") {
    auto path = (std::filesystem::temp_directory_path() / "dyvo_idx_bad.bin").string();
    {
        std::ofstream out(path, std::ios::binary);
        out << "DYVOIDX1 but then garbage";
    }
    CHECK_THROWS_AS(InvertedIndex::load(path), std::runtime_error);
    std::filesystem::remove(path);
}
