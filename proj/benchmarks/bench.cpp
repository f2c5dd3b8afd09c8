// Microbenchmarks for the hot paths: sparse dot products, compact-subset
// scoring, entity-head weighting, and inverted-index search.

#include <benchmark/benchmark.h>

#include <map>
#include <random>
#include <vector>

#include "dyvo/head.hpp"
#include "dyvo/index.hpp"
#include "dyvo/kb.hpp"
#include "dyvo/sparse.hpp"

namespace {

const dyvo::VocabularyLayout kLayout{30000, 5000};

dyvo::SparseVector random_vector(std::mt19937_64& rng, size_t n) {
    std::uniform_int_distribution<uint32_t> term(0, kLayout.total_size() - 1);
    std::uniform_real_distribution<float> weight(0.01f, 5.0f);
    std::map<uint32_t, float> picked;
    while (picked.size() < n) picked[term(rng)] = weight(rng);
    std::vector<dyvo::SparseVector::Entry> entries(picked.begin(), picked.end());
    return dyvo::SparseVector::from_entries(kLayout, std::move(entries));
}

void BM_SparseDot(benchmark::State& state) {
    std::mt19937_64 rng(1);
    const auto n = static_cast<size_t>(state.range(0));
    auto a = random_vector(rng, n);
    auto b = random_vector(rng, n);
    for (auto _ : state) {
        benchmark::DoNotOptimize(dyvo::dot(a, b));
    }
}
BENCHMARK(BM_SparseDot)->Arg(32)->Arg(128)->Arg(512);

void BM_ScorePairSubset(benchmark::State& state) {
    std::mt19937_64 rng(2);
    const auto n = static_cast<size_t>(state.range(0));
    auto q = random_vector(rng, n);
    auto d = random_vector(rng, n);
    std::vector<uint32_t> batch;
    for (const auto* v : {&q, &d}) {
        for (const auto& [term, w] : v->entries()) {
            if (term >= kLayout.entity_offset()) batch.push_back(term);
        }
    }
    std::sort(batch.begin(), batch.end());
    batch.erase(std::unique(batch.begin(), batch.end()), batch.end());
    for (auto _ : state) {
        benchmark::DoNotOptimize(dyvo::score_pair_subset(q, d, batch));
    }
}
BENCHMARK(BM_ScorePairSubset)->Arg(32)->Arg(128)->Arg(512);

void BM_EntityWeights(benchmark::State& state) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> val(-1.0f, 1.0f);
    const uint32_t dim = 768, emb_dim = 300, L = 32;
    const auto n_candidates = static_cast<uint32_t>(state.range(0));

    dyvo::EmbeddingTable emb(emb_dim);
    std::vector<uint64_t> ids;
    for (uint32_t e = 0; e < n_candidates; ++e) {
        std::vector<float> row(emb_dim);
        for (auto& x : row) x = val(rng);
        emb.add(e, row);
        ids.push_back(e);
    }
    emb.finalize();

    dyvo::EncoderParams p;
    p.dim = dim;
    p.layout = {100, n_candidates};
    p.word_embeddings.assign(100 * dim, 0.0f);
    p.mlp_weight.assign(dim, 0.0f);
    p.projection.d_in = emb_dim;
    p.projection.d_out = dim;
    p.projection.identity = false;
    p.projection.weight.resize(static_cast<size_t>(emb_dim) * dim);
    p.projection.bias.resize(dim);
    for (auto& x : p.projection.weight) x = val(rng);
    for (auto& x : p.projection.bias) x = val(rng);

    dyvo::HiddenStates h;
    h.dim = dim;
    h.token_ids.assign(L, 0);
    h.states.resize(static_cast<size_t>(L) * dim);
    for (auto& x : h.states) x = val(rng);

    auto cands = dyvo::CandidateSet::from_ids(ids);
    for (auto _ : state) {
        benchmark::DoNotOptimize(dyvo::entity_weights(h, cands, emb, p));
    }
}
BENCHMARK(BM_EntityWeights)->Arg(20)->Arg(100);

void BM_IndexSearch(benchmark::State& state) {
    std::mt19937_64 rng(4);
    const auto n_docs = static_cast<size_t>(state.range(0));
    std::vector<std::pair<std::string, dyvo::SparseVector>> docs;
    docs.reserve(n_docs);
    for (size_t i = 0; i < n_docs; ++i) {
        docs.emplace_back("doc" + std::to_string(i), random_vector(rng, 120));
    }
    auto idx = dyvo::InvertedIndex::build(docs);
    auto q = random_vector(rng, 40);
    for (auto _ : state) {
        benchmark::DoNotOptimize(idx.search(q, 10));
    }
}
BENCHMARK(BM_IndexSearch)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
