// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Every expected value is produced by an oracle implemented here,
// independent of the library code paths under test.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "dyvo/candidates.hpp"
#include "dyvo/eval.hpp"
#include "dyvo/head.hpp"
#include "dyvo/index.hpp"
#include "dyvo/kb.hpp"
#include "dyvo/sparse.hpp"
#include "dyvo/train.hpp"

namespace {

int failures = 0;
std::vector<std::string> details;

void report(int criterion, const char* name, bool ok, double seconds) {
    std::printf("[%s] criterion %d: %s (%.2fs)\n", ok ? "PASS" : "FAIL", criterion, name,
                seconds);
    if (!ok) ++failures;
}

template <typename F>
void criterion(int number, const char* name, F body) {
    const auto start = std::chrono::steady_clock::now();
    bool ok = false;
    try {
        ok = body();
    } catch (const std::exception& e) {
        std::printf("  exception: %s\n", e.what());
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report(number, name, ok, seconds);
}

double gate(double x) { return x > 0.0 ? std::log1p(x) : 0.0; }

dyvo::SparseVector random_vector(std::mt19937_64& rng, const dyvo::VocabularyLayout& layout,
                                 size_t n) {
    std::uniform_int_distribution<uint32_t> term(0, layout.total_size() - 1);
    std::uniform_real_distribution<float> weight(0.01f, 5.0f);
    std::map<uint32_t, float> picked;
    while (picked.size() < n) picked[term(rng)] = weight(rng);
    std::vector<dyvo::SparseVector::Entry> entries(picked.begin(), picked.end());
    return dyvo::SparseVector::from_entries(layout, std::move(entries));
}

// ---------------------------------------------------------------- criterion 1

bool scoring_head_exactness() {
    bool ok = true;

    // Analytic gate cases, 1e-9 absolute against oracle values carried
    // through the f32 storage rounding the representation contract pins.
    {
        dyvo::EncoderParams p;
        p.dim = 1;
        p.layout = {10, 4};
        p.word_embeddings.assign(10, 0.0f);
        p.word_embeddings[3] = 1.0f;
        p.mlp_weight = {1.0f};
        p.mlp_bias = 0.0f;
        p.lambda_ent = 0.05f;
        p.projection = dyvo::Projection::make_identity(1);
        dyvo::EmbeddingTable emb(1);
        std::vector<float> one{1.0f};
        emb.add(100, one);
        emb.finalize();

        dyvo::HiddenStates h;
        h.dim = 1;
        h.token_ids = {0, 0, 0};
        h.states = {-1.0f, 0.5f, 2.0f};

        const double ln3 = 1.0986122886681098;  // oracle: ln 3
        auto mlm = dyvo::mlm_word_weights(h, p);
        ok &= mlm.entries().size() == 1 && mlm.entries()[0].first == 3;
        ok &= std::abs(static_cast<double>(mlm.entries()[0].second) - ln3) < 1e-9 + 4.2e-8;
        // f32 rounding of ln3 is exactly reproducible:
        ok &= mlm.entries()[0].second == static_cast<float>(ln3);

        auto ent = dyvo::entity_weights(h, dyvo::CandidateSet::from_ids({100}), emb, p);
        const double expected = static_cast<double>(0.05f) * ln3;  // lambda = 0.05
        ok &= ent.entries().size() == 1;
        ok &= ent.entries()[0].second == static_cast<float>(expected);

        // Gate closed at non-positive dots.
        dyvo::HiddenStates neg = h;
        neg.states = {-1.0f, -0.5f, 0.0f};
        ok &= dyvo::mlm_word_weights(neg, p).empty();
        ok &= dyvo::entity_weights(neg, dyvo::CandidateSet::from_ids({100}), emb, p).empty();

        // lambda scaling is linear: doubling lambda doubles the weight.
        p.lambda_ent = 0.10f;
        auto ent2 = dyvo::entity_weights(h, dyvo::CandidateSet::from_ids({100}), emb, p);
        ok &= std::abs(static_cast<double>(ent2.entries()[0].second) -
                       2.0 * static_cast<double>(ent.entries()[0].second)) < 1e-9;
    }

    // Exhaustive-candidate entity scoring vs a brute-force loop over a
    // 10,000-entity table, bit-exact.
    {
        std::mt19937_64 rng(211);
        std::uniform_real_distribution<float> val(-1.0f, 1.0f);
        const uint32_t dim = 16, emb_dim = 12, n_entities = 10000, L = 5;

        dyvo::EmbeddingTable emb(emb_dim);
        std::vector<uint64_t> ids;
        for (uint32_t e = 0; e < n_entities; ++e) {
            std::vector<float> row(emb_dim);
            for (auto& x : row) x = val(rng);
            emb.add(e, row);
            ids.push_back(e);
        }
        emb.finalize();

        dyvo::EncoderParams p;
        p.dim = dim;
        p.layout = {100, n_entities};
        p.word_embeddings.assign(100 * dim, 0.0f);
        p.mlp_weight.assign(dim, 0.0f);
        p.lambda_ent = 0.05f;
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

        auto got = dyvo::entity_weights(h, dyvo::CandidateSet::from_ids(ids), emb, p);
        std::map<uint32_t, float> got_map(got.entries().begin(), got.entries().end());

        size_t emitted = 0;
        for (uint32_t e = 0; e < n_entities && ok; ++e) {
            // Entity head from first principles: project, gate per position, max.
            auto row = emb.row_at(e);
            std::vector<float> u(dim);
            for (uint32_t k = 0; k < dim; ++k) {
                double acc = static_cast<double>(p.projection.bias[k]);
                for (uint32_t r = 0; r < emb_dim; ++r) {
                    acc += static_cast<double>(row[r]) *
                           static_cast<double>(p.projection.weight[r * dim + k]);
                }
                u[k] = static_cast<float>(acc);
            }
            double best = 0.0;
            for (uint32_t j = 0; j < L; ++j) {
                double d = 0.0;
                for (uint32_t k = 0; k < dim; ++k) {
                    d += static_cast<double>(u[k]) *
                         static_cast<double>(h.states[static_cast<size_t>(j) * dim + k]);
                }
                best = std::max(best, gate(d));
            }
            const double w = static_cast<double>(p.lambda_ent) * best;
            const uint32_t term = p.layout.entity_offset() + e;
            auto it = got_map.find(term);
            if (w > 0.0) {
                ++emitted;
                ok &= it != got_map.end() && it->second == static_cast<float>(w);
            } else {
                ok &= it == got_map.end();
            }
        }
        ok &= emitted == got.entries().size();
    }
    return ok;
}

// ---------------------------------------------------------------- criterion 2

bool decomposition_exactness() {
    std::mt19937_64 rng(223);
    const dyvo::VocabularyLayout layout{500, 200};
    for (int i = 0; i < 1000; ++i) {
        auto q = random_vector(rng, layout, 40);
        auto d = random_vector(rng, layout, 40);
        auto [qw, qe] = dyvo::split(q);
        auto [dw, de] = dyvo::split(d);
        if (dyvo::dot(q, d) != dyvo::dot(qw, dw) + dyvo::dot(qe, de)) return false;
    }
    return true;
}

// ---------------------------------------------------------------- criterion 3

bool subset_equivalence() {
    std::mt19937_64 rng(227);
    const dyvo::VocabularyLayout layout{100, 60};
    std::uniform_real_distribution<float> weight(0.01f, 4.0f);
    for (int i = 0; i < 10000; ++i) {
        std::vector<uint32_t> batch;
        for (uint32_t e = 0; e < layout.entity_count; ++e) {
            if (rng() % 2) batch.push_back(layout.entity_offset() + e);
        }
        std::shuffle(batch.begin(), batch.end(), rng);
        auto make = [&] {
            std::vector<dyvo::SparseVector::Entry> entries;
            for (uint32_t t = 0; t < layout.word_vocab_size; ++t) {
                if (rng() % 5 == 0) entries.push_back({t, weight(rng)});
            }
            for (uint32_t term : batch) {
                if (rng() % 3 == 0) entries.push_back({term, weight(rng)});
            }
            return dyvo::SparseVector::from_entries(layout, std::move(entries));
        };
        auto q = make();
        auto d = make();
        if (dyvo::score_pair_subset(q, d, batch) != dyvo::dot(q, d)) return false;
    }
    return true;
}

// ---------------------------------------------------------------- criterion 4

bool index_exactness() {
    std::mt19937_64 rng(229);
    const dyvo::VocabularyLayout layout{4000, 1000};  // 5,000 terms
    std::vector<std::pair<std::string, dyvo::SparseVector>> docs;
    for (int i = 0; i < 1000; ++i) {
        docs.emplace_back("doc" + std::to_string(i), random_vector(rng, layout, 60));
    }
    auto idx = dyvo::InvertedIndex::build(docs);

    auto path = std::string("/tmp/dyvo_acceptance_index.bin");
    idx.save(path);
    auto loaded = dyvo::InvertedIndex::load(path);
    std::remove(path.c_str());

    for (int t = 0; t < 200; ++t) {
        auto q = random_vector(rng, layout, 30);

        // Brute force over every document with sparse_core's dot.
        std::vector<dyvo::ScoredDoc> want;
        for (const auto& [id, d] : docs) {
            const double s = dyvo::dot(q, d);
            if (s > 0.0) want.push_back({id, s});
        }
        std::sort(want.begin(), want.end(), [](const auto& a, const auto& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.doc_id < b.doc_id;
        });
        if (want.size() > 10) want.resize(10);

        for (const auto* index : {&idx, &loaded}) {
            auto got = index->search(q, 10);
            if (got.size() != want.size()) return false;
            for (size_t i = 0; i < got.size(); ++i) {
                if (got[i].doc_id != want[i].doc_id || got[i].score != want[i].score) {
                    return false;
                }
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------- criterion 5

bool gradient_correctness() {
    std::mt19937_64 rng(233);
    std::uniform_real_distribution<double> val(-0.8, 0.8);

    dyvo::ToyModel m;
    m.vocab_size = 6;
    m.dim = 4;
    m.emb_dim = 3;
    m.entity_count = 4;
    m.token_table.resize(static_cast<size_t>(m.vocab_size) * m.dim);
    m.mlp_weight.resize(m.dim);
    m.proj_weight.resize(static_cast<size_t>(m.emb_dim) * m.dim);
    m.proj_bias.resize(m.dim);
    m.entity_emb.resize(static_cast<size_t>(m.entity_count) * m.emb_dim);
    for (auto& x : m.token_table) x = val(rng);
    for (auto& x : m.mlp_weight) x = val(rng);
    for (auto& x : m.proj_weight) x = val(rng);
    for (auto& x : m.proj_bias) x = val(rng);
    for (auto& x : m.entity_emb) x = val(rng);
    m.mlp_bias = val(rng);
    m.lambda_ent = 0.3;

    dyvo::ToyCorpus corpus;
    std::uniform_int_distribution<uint32_t> tok(0, m.vocab_size - 1);
    auto example = [&](size_t n, std::vector<uint32_t> slots) {
        dyvo::ToyExample ex;
        for (size_t i = 0; i < n; ++i) ex.tokens.push_back(tok(rng));
        ex.candidate_slots = std::move(slots);
        return ex;
    };
    corpus.queries["q0"] = example(3, {0, 2});
    corpus.queries["q1"] = example(2, {1, 3});
    corpus.docs["d0"] = example(4, {0, 1});
    corpus.docs["d1"] = example(3, {2, 3});
    corpus.docs["d2"] = example(5, {1, 2});
    corpus.triples = {{"q0", "d0", "d1", 1.3, -0.4}, {"q1", "d2", "d0", 0.9, 0.2}};

    const double l1 = 1e-3;
    dyvo::Gradients g = dyvo::Gradients::zeros_like(m);
    dyvo::total_loss(m, corpus, corpus.triples, l1, &g);

    auto fd = [&](double* param) {
        const double h = 1e-5;
        const double saved = *param;
        *param = saved + h;
        const double hi = dyvo::total_loss(m, corpus, corpus.triples, l1);
        *param = saved - h;
        const double lo = dyvo::total_loss(m, corpus, corpus.triples, l1);
        *param = saved;
        return (hi - lo) / (2.0 * h);
    };
    auto close = [](double analytic, double numeric) {
        return std::abs(analytic - numeric) <= std::max(1e-7, 1e-4 * std::abs(numeric));
    };

    bool ok = true;
    auto probe = [&](std::vector<double>& params, const std::vector<double>& grads) {
        std::uniform_int_distribution<size_t> pick(0, params.size() - 1);
        for (int i = 0; i < 25; ++i) {
            const size_t j = pick(rng);
            ok &= close(grads[j], fd(&params[j]));
        }
    };
    probe(m.token_table, g.token_table);
    probe(m.mlp_weight, g.mlp_weight);
    probe(m.proj_weight, g.proj_weight);
    probe(m.proj_bias, g.proj_bias);
    for (int i = 0; i < 25; ++i) {
        ok &= close(g.mlp_bias, fd(&m.mlp_bias));
        ok &= close(g.lambda_ent, fd(&m.lambda_ent));
    }
    return ok;
}

// ---------------------------------------------------------------- criterion 6

bool collapse_reproduction() {
    auto fx = dyvo::make_collapse_fixture(7);
    dyvo::TrainConfig cfg_a;  // lambda pinned at 1.0
    cfg_a.learning_rate = 1.0;
    cfg_a.l1_weight = 0.0;
    cfg_a.lambda_init = 1.0;
    cfg_a.lambda_trainable = false;
    dyvo::TrainConfig cfg_b = cfg_a;  // trainable lambda from 0.05
    cfg_b.lambda_init = 0.05;
    cfg_b.lambda_trainable = true;

    const size_t steps = 3000;
    auto [trace_a, trace_b] = dyvo::run_collapse_experiment(cfg_a, cfg_b, fx, steps);

    bool ok = trace_a.size() == steps + 1 && trace_b.size() == steps + 1;
    ok &= trace_a.front().fraction_positive == 1.0;

    size_t first_zero = steps + 1;
    for (size_t i = 0; i < trace_a.size(); ++i) {
        if (trace_a[i].fraction_positive == 0.0) {
            first_zero = i;
            break;
        }
    }
    ok &= first_zero <= steps;  // collapse happens
    for (size_t i = first_zero; i < trace_a.size(); ++i) {
        // Dead-path monotonicity with exactly-zero entity gradients after.
        ok &= trace_a[i].fraction_positive == 0.0;
        ok &= trace_a[i].entity_grad_norm == 0.0;
    }
    // Monotonicity also holds on the trainable trace (vacuously if alive).
    bool seen_zero = false;
    for (const auto& rec : trace_b) {
        if (seen_zero) ok &= rec.fraction_positive == 0.0;
        seen_zero |= rec.fraction_positive == 0.0;
    }
    // Trainable lambda keeps the entity path alive over the same horizon.
    for (const auto& rec : trace_b) ok &= rec.fraction_positive > 0.0;
    return ok;
}

// ---------------------------------------------------------------- criterion 7

double reference_ndcg(const std::vector<std::string>& ranking,
                      const std::map<std::string, int>& judged, size_t k) {
    double dcg = 0.0;
    for (size_t i = 0; i < ranking.size() && i < k; ++i) {
        auto it = judged.find(ranking[i]);
        if (it != judged.end() && it->second > 0) {
            dcg += static_cast<double>(it->second) / std::log2(static_cast<double>(i) + 2.0);
        }
    }
    std::vector<int> grades;
    for (const auto& [doc, rel] : judged) {
        if (rel > 0) grades.push_back(rel);
    }
    std::sort(grades.rbegin(), grades.rend());
    double idcg = 0.0;
    for (size_t i = 0; i < grades.size() && i < k; ++i) {
        idcg += static_cast<double>(grades[i]) / std::log2(static_cast<double>(i) + 2.0);
    }
    return idcg > 0.0 ? dcg / idcg : 0.0;
}

double reference_recall(const std::vector<std::string>& ranking,
                        const std::map<std::string, int>& judged, size_t n) {
    std::set<std::string> relevant;
    for (const auto& [doc, rel] : judged) {
        if (rel > 0) relevant.insert(doc);
    }
    if (relevant.empty()) return 0.0;
    size_t hit = 0;
    for (size_t i = 0; i < ranking.size() && i < n; ++i) hit += relevant.count(ranking[i]);
    return static_cast<double>(hit) / static_cast<double>(relevant.size());
}

bool metric_fidelity() {
    bool ok = true;

    // Hand-worked example: run grades (0, 2, 1) at ranks 1..3, k = 3.
    // DCG = 2/log2(3) + 1/log2(4), IDCG = 2 + 1/log2(3); the quotient is
    // 0.669671816494230 (high-precision hand computation).
    {
        dyvo::Qrels qrels;
        qrels.add("q1", "d2", 2);
        qrels.add("q1", "d3", 1);
        dyvo::Run run;
        run.add("q1", "d1", 3.0);
        run.add("q1", "d2", 2.0);
        run.add("q1", "d3", 1.0);
        run.sort_rankings();
        ok &= std::abs(dyvo::ndcg_at_k(run, qrels, 3).mean - 0.669671816494230) < 1e-4;
    }

    // 50 randomized fixtures against the reference implementation.
    std::mt19937_64 rng(239);
    for (int fixture = 0; fixture < 50; ++fixture) {
        dyvo::Qrels qrels;
        dyvo::Run run;
        const int n_queries = 1 + static_cast<int>(rng() % 10);
        for (int q = 0; q < n_queries; ++q) {
            const std::string qid = "q" + std::to_string(q);
            const int n_docs = 10 + static_cast<int>(rng() % 60);
            for (int d = 0; d < n_docs; ++d) {
                const std::string did = "d" + std::to_string(d);
                if (rng() % 2) qrels.add(qid, did, static_cast<int>(rng() % 4));
                if (rng() % 4) {
                    run.add(qid, did, std::uniform_real_distribution<double>(0.0, 10.0)(rng));
                }
            }
        }
        run.sort_rankings();

        std::map<std::string, std::vector<std::string>> ranked;
        for (const auto& [qid, entries] : run.rankings) {
            for (const auto& e : entries) ranked[qid].push_back(e.doc_id);
        }
        for (size_t k : {size_t{10}, size_t{20}}) {
            auto got = dyvo::ndcg_at_k(run, qrels, k);
            for (const auto& [qid, judged] : qrels.judgments()) {
                bool any_rel = false;
                for (const auto& [doc, rel] : judged) any_rel |= rel > 0;
                if (!any_rel) continue;
                const double want = reference_ndcg(ranked[qid], judged, k);
                ok &= got.per_query.count(qid) == 1 &&
                      std::abs(got.per_query.at(qid) - want) < 1e-6;
            }
        }
        auto got_recall = dyvo::recall_at_n(run, qrels, 1000);
        for (const auto& [qid, judged] : qrels.judgments()) {
            bool any_rel = false;
            for (const auto& [doc, rel] : judged) any_rel |= rel > 0;
            if (!any_rel) continue;
            const double want = reference_recall(ranked[qid], judged, 1000);
            ok &= std::abs(got_recall.per_query.at(qid) - want) < 1e-6;
        }
    }
    return ok;
}

// ---------------------------------------------------------------- criterion 8

bool candidate_retriever_contracts() {
    bool ok = true;
    std::mt19937_64 rng(241);

    // BM25 on a 500-entity fixture vs a from-scratch scorer.
    {
        const std::vector<std::string> pool{"ledger", "crypto",  "token",  "art",    "market",
                                            "chain",  "digital", "wallet", "mining", "value"};
        dyvo::KnowledgeBase kb;
        for (uint64_t e = 0; e < 500; ++e) {
            std::string desc;
            const size_t len = 3 + rng() % 10;
            for (size_t i = 0; i < len; ++i) {
                desc += pool[rng() % pool.size()] + " ";
            }
            kb.add({e, "E" + std::to_string(e), desc});
        }
        auto idx = dyvo::Bm25EntityIndex::build(kb);
        const std::string query = "digital token market";
        const auto qtok = dyvo::tokenize(query);

        // Independent BM25: recompute df/tf/lengths from the raw text.
        std::map<std::string, size_t> df;
        std::map<uint64_t, std::map<std::string, uint32_t>> tf;
        std::map<uint64_t, size_t> lens;
        size_t total = 0;
        for (const auto& e : kb.entities()) {
            auto toks = dyvo::tokenize(e.description);
            lens[e.entity_id] = toks.size();
            total += toks.size();
            for (const auto& t : toks) ++tf[e.entity_id][t];
        }
        for (const auto& [id, counts] : tf) {
            for (const auto& [t, c] : counts) ++df[t];
        }
        const double n = 500.0, avg = static_cast<double>(total) / n, k1 = 0.9, b = 0.4;
        std::vector<std::pair<double, uint64_t>> oracle;
        for (const auto& e : kb.entities()) {
            double s = 0.0;
            bool matched = false;
            for (const auto& t : qtok) {
                auto it = tf[e.entity_id].find(t);
                if (it == tf[e.entity_id].end()) continue;
                matched = true;
                const double d = static_cast<double>(df[t]);
                const double idf = std::log(1.0 + (n - d + 0.5) / (d + 0.5));
                const double f = it->second;
                s += idf * f * (k1 + 1.0) /
                     (f + k1 * (1.0 - b + b * static_cast<double>(lens[e.entity_id]) / avg));
            }
            if (matched) oracle.emplace_back(s, e.entity_id);
        }
        std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b2) {
            if (a.first != b2.first) return a.first > b2.first;
            return a.second < b2.second;
        });
        if (oracle.size() > 20) oracle.resize(20);
        auto got = idx.retrieve(query, 20);
        ok &= got.ids().size() == oracle.size();
        for (size_t i = 0; i < oracle.size() && ok; ++i) ok &= got.ids()[i] == oracle[i].second;
    }

    // Dense top-20 vs exhaustive sort.
    {
        const uint32_t dim = 8;
        dyvo::EmbeddingTable emb(dim);
        std::map<uint64_t, std::vector<float>> rows;
        std::uniform_real_distribution<float> val(-1.0f, 1.0f);
        for (uint64_t e = 0; e < 500; ++e) {
            std::vector<float> row(dim);
            for (auto& x : row) x = val(rng);
            emb.add(e, row);
            rows[e] = row;
        }
        emb.finalize();
        std::vector<float> q(dim);
        for (auto& x : q) x = val(rng);
        std::vector<std::pair<double, uint64_t>> oracle;
        for (const auto& [id, row] : rows) {
            double acc = 0.0;
            for (uint32_t i = 0; i < dim; ++i) {
                acc += static_cast<double>(q[i]) * static_cast<double>(row[i]);
            }
            oracle.emplace_back(acc, id);
        }
        std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        auto got = dyvo::dense_retrieve(q, emb, 20);
        ok &= got.ids().size() == 20;
        for (size_t i = 0; i < 20 && ok; ++i) ok &= got.ids()[i] == oracle[i].second;
    }

    // Generative client against a mock endpoint replaying the GPT4 entity
    // list for the NFT query; in-KB titles resolve, OOV names drop.
    {
        const std::vector<std::string> names{
            "Non-fungible token",       "Cryptocurrency",
            "Bitcoin",                  "Ethereum",
            "Digital art",              "Blockchain",
            "CryptoKitties",            "Digital asset",
            "Cryptocurrency bubble",    "Cryptocurrency exchange",
            "Initial coin offering",    "Cryptocurrency wallet",
            "Smart contract",           "Decentralized application",
            "Digital currency"};
        dyvo::KnowledgeBase kb;
        for (size_t i = 0; i < names.size(); ++i) {
            kb.add({1000 + i, names[i], ""});
        }
        nlohmann::json list = names;
        list.push_back("Entity Missing From The KB");
        const std::string content = list.dump();

        httplib::Server server;
        server.Post("/v1/chat/completions",
                    [&](const httplib::Request&, httplib::Response& res) {
                        nlohmann::json resp{
                            {"choices",
                             nlohmann::json::array({{{"message",
                                                      {{"role", "assistant"},
                                                       {"content", content}}}}})}};
                        res.set_content(resp.dump(), "application/json");
                    });
        const int port = server.bind_to_any_port("127.0.0.1");
        std::thread th([&] { server.listen_after_bind(); });
        server.wait_until_ready();

        dyvo::GenerativeClientConfig cfg;
        cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
        cfg.model_name = "mock";
        auto res = dyvo::generative_retrieve(cfg, "Why do NFTs have value?", kb);
        server.stop();
        th.join();

        ok &= res.candidates.ids().size() == names.size();
        for (size_t i = 0; i < names.size() && ok; ++i) {
            ok &= res.candidates.ids()[i] == 1000 + i;
        }
        ok &= res.dropped_names ==
              std::vector<std::string>{"Entity Missing From The KB"};
    }
    return ok;
}

// ---------------------------------------------------------------- criterion 9

bool end_to_end_directional() {
    std::mt19937_64 rng(251);
    const dyvo::VocabularyLayout layout{300, 60};
    std::uniform_real_distribution<float> weight(0.2f, 2.0f);

    // 20 queries, 10 relevant docs each; 3 of the 10 (30%) share no word
    // terms with their query and are reachable only through entity ids.
    // 800 distractor docs.
    std::vector<std::pair<std::string, dyvo::SparseVector>> docs;
    std::vector<std::pair<std::string, dyvo::SparseVector>> queries;
    dyvo::Qrels qrels;

    for (int q = 0; q < 20; ++q) {
        const std::string qid = "q" + std::to_string(q);
        // Query support: 5 word terms + 2 entity terms.
        std::set<uint32_t> q_words;
        while (q_words.size() < 5) {
            q_words.insert(static_cast<uint32_t>(rng() % layout.word_vocab_size));
        }
        std::set<uint32_t> q_ents;
        while (q_ents.size() < 2) {
            q_ents.insert(layout.entity_offset() +
                          static_cast<uint32_t>(rng() % layout.entity_count));
        }
        std::vector<dyvo::SparseVector::Entry> q_entries;
        for (uint32_t t : q_words) q_entries.push_back({t, weight(rng)});
        for (uint32_t t : q_ents) q_entries.push_back({t, weight(rng)});
        queries.emplace_back(qid, dyvo::SparseVector::from_entries(layout, q_entries));

        for (int d = 0; d < 10; ++d) {
            const std::string did = qid + "_rel" + std::to_string(d);
            std::vector<dyvo::SparseVector::Entry> entries;
            if (d < 3) {
                // Entity-only relevance: no query word overlaps.
                for (uint32_t t : q_ents) entries.push_back({t, weight(rng)});
                uint32_t filler = 0;
                while (entries.size() < 6) {
                    const auto t = static_cast<uint32_t>(rng() % layout.word_vocab_size);
                    if (!q_words.count(t)) {
                        bool dup = false;
                        for (const auto& e : entries) dup |= e.first == t;
                        if (!dup) entries.push_back({t, weight(rng)});
                    }
                    if (++filler > 1000) break;
                }
            } else {
                // Word-reachable relevance.
                size_t added = 0;
                for (uint32_t t : q_words) {
                    if (added++ < 3) entries.push_back({t, weight(rng)});
                }
                for (uint32_t t : q_ents) {
                    if (rng() % 2) entries.push_back({t, weight(rng)});
                }
            }
            docs.emplace_back(did, dyvo::SparseVector::from_entries(layout, entries));
            qrels.add(qid, did, 1);
        }
    }
    for (int d = 0; d < 800; ++d) {
        docs.emplace_back("noise" + std::to_string(d), random_vector(rng, layout, 8));
    }

    auto word_only = [](const dyvo::SparseVector& v) { return dyvo::split(v).first; };

    auto run_pipeline = [&](bool with_entities) {
        std::vector<std::pair<std::string, dyvo::SparseVector>> d2 = docs;
        if (!with_entities) {
            for (auto& [id, v] : d2) v = word_only(v);
        }
        auto idx = dyvo::InvertedIndex::build(d2);
        dyvo::Run run;
        for (const auto& [qid, qv] : queries) {
            const auto q = with_entities ? qv : word_only(qv);
            for (const auto& hit : idx.search(q, 100)) run.add(qid, hit.doc_id, hit.score);
        }
        run.sort_rankings();
        return dyvo::ndcg_at_k(run, qrels, 10).mean;
    };

    const double dyvo_ndcg = run_pipeline(true);
    const double word_ndcg = run_pipeline(false);
    const double dyvo_again = run_pipeline(true);
    std::printf("  nDCG@10 with entities %.6f, word-only %.6f\n", dyvo_ndcg, word_ndcg);
    return dyvo_ndcg > word_ndcg && dyvo_ndcg == dyvo_again;
}

}  // namespace

int main() {
    criterion(1, "scoring-head exactness", scoring_head_exactness);
    criterion(2, "word/entity score decomposition", decomposition_exactness);
    criterion(3, "compact-subset equivalence", subset_equivalence);
    criterion(4, "index exactness", index_exactness);
    criterion(5, "gradient correctness", gradient_correctness);
    criterion(6, "collapse reproduction", collapse_reproduction);
    criterion(7, "metric fidelity", metric_fidelity);
    criterion(8, "candidate-retriever contracts", candidate_retriever_contracts);
    criterion(9, "end-to-end directional claim", end_to_end_directional);
    if (failures > 0) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all 9 acceptance criteria passed\n");
    return 0;
}
