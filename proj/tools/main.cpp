// Batch pipeline driver: KB/embedding ingestion, candidate generation,
// encoding, indexing, search, evaluation, and the collapse experiment.

#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dyvo/candidates.hpp"
#include "dyvo/eval.hpp"
#include "dyvo/head.hpp"
#include "dyvo/index.hpp"
#include "dyvo/kb.hpp"
#include "dyvo/sparse.hpp"
#include "dyvo/train.hpp"

namespace {

using nlohmann::json;

struct EncoderFile {
    dyvo::EncoderParams params;
};

// Encoder params: word embeddings in the embedding file format (row ids are
// word ids), MLP weights in a small JSON sidecar.
dyvo::EncoderParams load_encoder_params(const std::string& word_emb_path,
                                        const std::string& mlp_json_path,
                                        const std::string& projection_path, double lambda_init,
                                        uint32_t entity_count) {
    dyvo::EncoderParams p;
    dyvo::EmbeddingTable words = dyvo::load_embeddings(word_emb_path);
    p.dim = words.dim();
    p.layout.word_vocab_size = static_cast<uint32_t>(words.size());
    p.layout.entity_count = entity_count;
    p.word_embeddings.resize(static_cast<size_t>(words.size()) * words.dim());
    for (size_t pos = 0; pos < words.size(); ++pos) {
        const uint64_t id = words.ids()[pos];
        if (id >= words.size()) {
            throw std::runtime_error("word embedding ids must be dense in [0, |V|)");
        }
        auto row = words.row_at(pos);
        std::copy(row.begin(), row.end(),
                  p.word_embeddings.begin() + static_cast<ptrdiff_t>(id * words.dim()));
    }
    std::ifstream in(mlp_json_path);
    if (!in) throw std::runtime_error("cannot open " + mlp_json_path);
    json mlp = json::parse(in);
    p.mlp_weight = mlp.at("weight").get<std::vector<float>>();
    p.mlp_bias = mlp.at("bias").get<float>();
    if (p.mlp_weight.size() != p.dim) {
        throw std::runtime_error("mlp weight length != hidden dim");
    }
    p.lambda_ent = static_cast<float>(lambda_init);
    p.projection = projection_path.empty() ? dyvo::Projection::make_identity(p.dim)
                                           : dyvo::load_projection(projection_path);
    return p;
}

std::map<std::string, std::string> load_query_texts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::map<std::string, std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line);
        out[rec.at("id").get<std::string>()] = rec.at("text").get<std::string>();
    }
    return out;
}

void write_candidates(const std::map<std::string, dyvo::CandidateSet>& sets,
                      const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (const auto& [id, set] : sets) {
        json rec{{"id", id}, {"entities", set.ids()}};
        out << rec.dump() << "\n";
    }
}

int cmd_build_kb(const std::string& kb_path, const std::string& emb_path,
                 const std::string& out_path) {
    dyvo::KnowledgeBase kb = dyvo::load_kb(kb_path);
    std::cerr << "loaded " << kb.size() << " entities from " << kb_path << "\n";
    if (!emb_path.empty()) {
        dyvo::EmbeddingTable emb = dyvo::load_embeddings(emb_path);
        kb = dyvo::intersect_with_embeddings(kb, emb);
        std::cerr << "kept " << kb.size() << " entities with embedding rows\n";
    }
    dyvo::save_kb(kb, out_path);
    return 0;
}

int cmd_candidates(const std::string& method, const std::string& kb_path,
                   const std::string& emb_path, const std::string& input_path,
                   const std::string& out_path, size_t k, const std::string& endpoint_url,
                   const std::string& model) {
    dyvo::KnowledgeBase kb = dyvo::load_kb(kb_path);
    std::map<std::string, dyvo::CandidateSet> sets;
    if (method == "linked") {
        auto result = dyvo::load_linked(input_path, kb);
        if (result.dropped > 0) {
            std::cerr << "dropped " << result.dropped << " unresolved entity references\n";
        }
        sets = std::move(result.by_id);
    } else if (method == "bm25") {
        auto idx = dyvo::Bm25EntityIndex::build(kb);
        for (const auto& [id, text] : load_query_texts(input_path)) {
            sets[id] = idx.retrieve(text, k);
        }
    } else if (method == "dense") {
        dyvo::EmbeddingTable emb = dyvo::load_embeddings(emb_path);
        std::ifstream in(input_path);
        if (!in) throw std::runtime_error("cannot open " + input_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json rec = json::parse(line);
            auto vec = rec.at("vector").get<std::vector<float>>();
            sets[rec.at("id").get<std::string>()] = dyvo::dense_retrieve(vec, emb, k);
        }
    } else if (method == "generative") {
        dyvo::GenerativeClientConfig cfg;
        cfg.endpoint_url = endpoint_url;
        cfg.model_name = model;
        size_t dropped = 0;
        for (const auto& [id, text] : load_query_texts(input_path)) {
            auto result = dyvo::generative_retrieve(cfg, text, kb);
            dropped += result.dropped_names.size();
            sets[id] = std::move(result.candidates);
        }
        if (dropped > 0) std::cerr << "dropped " << dropped << " out-of-vocabulary names\n";
    } else {
        throw std::runtime_error("unknown candidate method: " + method);
    }
    write_candidates(sets, out_path);
    return 0;
}

int cmd_encode(const std::string& hidden_path, const std::string& cand_path,
               const std::string& kb_path, const std::string& emb_path,
               const std::string& word_emb_path, const std::string& mlp_path,
               const std::string& projection_path, double lambda_init, const std::string& mode,
               const std::string& out_path) {
    dyvo::EmbeddingTable emb = dyvo::load_embeddings(emb_path);
    dyvo::EncoderParams params = load_encoder_params(
        word_emb_path, mlp_path, projection_path, lambda_init,
        static_cast<uint32_t>(emb.size()));
    dyvo::KnowledgeBase kb = dyvo::load_kb(kb_path);

    std::map<std::string, dyvo::CandidateSet> cands;
    if (!cand_path.empty()) {
        cands = dyvo::load_linked(cand_path, kb).by_id;
    }
    const bool is_query = mode == "query";
    if (!is_query && mode != "document") {
        throw std::runtime_error("--mode must be query or document");
    }

    std::vector<std::pair<std::string, dyvo::SparseVector>> vectors;
    for (const auto& [id, h] : dyvo::load_hidden_states(hidden_path)) {
        dyvo::CandidateSet set;
        if (auto it = cands.find(id); it != cands.end()) set = it->second;
        vectors.emplace_back(id, is_query ? dyvo::encode_query(h, set, emb, params)
                                          : dyvo::encode_document(h, set, emb, params));
    }
    dyvo::write_sparse_file(out_path, vectors);
    return 0;
}

int cmd_index(const std::string& vectors_path, uint32_t word_vocab_size, uint32_t entity_count,
              const std::string& index_path) {
    dyvo::VocabularyLayout layout{word_vocab_size, entity_count};
    auto docs = dyvo::read_sparse_file(vectors_path, layout);
    dyvo::InvertedIndex idx = dyvo::InvertedIndex::build(docs);
    idx.save(index_path);
    auto s = idx.stats();
    std::cerr << "indexed " << s.doc_count << " docs, " << s.term_count << " terms, "
              << s.postings_count << " postings (mean l0 " << s.mean_doc_l0 << ")\n";
    return 0;
}

int cmd_search(const std::string& index_path, const std::string& queries_path, size_t depth,
               const std::string& run_path, const std::string& tag) {
    dyvo::InvertedIndex idx = dyvo::InvertedIndex::load(index_path);
    auto queries = dyvo::read_sparse_file(queries_path, idx.layout());
    dyvo::Run run;
    run.tag = tag;
    for (const auto& [qid, qvec] : queries) {
        for (const auto& scored : idx.search(qvec, depth)) {
            run.add(qid, scored.doc_id, scored.score);
        }
    }
    run.sort_rankings();
    dyvo::write_run(run, run_path, depth);
    return 0;
}

int cmd_eval(const std::string& run_path, const std::string& qrels_path, size_t depth) {
    dyvo::Run run = dyvo::parse_run(run_path);
    dyvo::Qrels qrels = dyvo::parse_qrels(qrels_path);
    auto ndcg10 = dyvo::ndcg_at_k(run, qrels, 10);
    auto ndcg20 = dyvo::ndcg_at_k(run, qrels, 20);
    auto recall = dyvo::recall_at_n(run, qrels, depth);
    std::cout << "nDCG@10 " << ndcg10.mean << "\n";
    std::cout << "nDCG@20 " << ndcg20.mean << "\n";
    std::cout << "R@" << depth << " " << recall.mean << "\n";
    return 0;
}

int cmd_collapse(uint64_t seed, size_t steps, double learning_rate, double lambda_init,
                 const std::string& trace_fixed_path, const std::string& trace_trainable_path) {
    dyvo::CollapseFixture fixture = dyvo::make_collapse_fixture(seed);
    dyvo::TrainConfig fixed_cfg;
    fixed_cfg.learning_rate = learning_rate;
    fixed_cfg.l1_weight = 0.0;
    fixed_cfg.lambda_init = 1.0;
    fixed_cfg.lambda_trainable = false;
    dyvo::TrainConfig trainable_cfg = fixed_cfg;
    trainable_cfg.lambda_init = lambda_init;
    trainable_cfg.lambda_trainable = true;
    auto [trace_fixed, trace_trainable] =
        dyvo::run_collapse_experiment(fixed_cfg, trainable_cfg, fixture, steps);
    dyvo::write_trace(trace_fixed, trace_fixed_path);
    dyvo::write_trace(trace_trainable, trace_trainable_path);
    std::cout << "fixed-lambda final fraction_positive " << trace_fixed.back().fraction_positive
              << "\n";
    std::cout << "trainable-lambda final fraction_positive "
              << trace_trainable.back().fraction_positive << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dyvo: joint word-entity learned sparse retrieval pipeline"};
    app.set_config("--config");
    app.require_subcommand(1);

    std::string kb_path, emb_path, out_path, input_path, method = "linked";
    std::string endpoint_url, model;
    std::string hidden_path, cand_path, word_emb_path, mlp_path, projection_path;
    std::string mode = "document", vectors_path, index_path, run_path, qrels_path;
    std::string tag = "dyvo";
    std::string trace_fixed = "collapse_fixed.jsonl", trace_trainable = "collapse_trainable.jsonl";
    size_t k = 20, depth = 1000, steps = 2000;
    uint32_t word_vocab_size = 0, entity_count = 0;
    double lambda_init = 0.05, l1_weight = 1e-4, learning_rate = 1e-3;
    uint64_t seed = 0;

    auto* build_kb = app.add_subcommand("build-kb", "load a KB, keep entities with embeddings");
    build_kb->add_option("--kb", kb_path, "KB JSONL file")->required();
    build_kb->add_option("--embeddings", emb_path, "entity embedding file");
    build_kb->add_option("--out", out_path, "output KB JSONL")->required();

    auto* cands = app.add_subcommand("candidates", "produce entity candidate sets per query");
    cands->add_option("--method", method, "linked|bm25|dense|generative");
    cands->add_option("--kb", kb_path, "KB JSONL file")->required();
    cands->add_option("--embeddings", emb_path, "entity embedding file (dense method)");
    cands->add_option("--input", input_path,
                      "linked file, query-text JSONL, or query-vector JSONL")
        ->required();
    cands->add_option("--k", k, "candidates per query");
    cands->add_option("--endpoint-url", endpoint_url, "chat-completion endpoint");
    cands->add_option("--model", model, "chat-completion model name");
    cands->add_option("--out", out_path, "output candidate JSONL")->required();

    auto* encode = app.add_subcommand("encode", "encode hidden states into sparse vectors");
    encode->add_option("--hidden-states", hidden_path, "hidden states file")->required();
    encode->add_option("--candidates", cand_path, "candidate JSONL keyed by sequence id");
    encode->add_option("--kb", kb_path, "KB JSONL file")->required();
    encode->add_option("--embeddings", emb_path, "entity embedding file")->required();
    encode->add_option("--word-embeddings", word_emb_path, "word embedding file")->required();
    encode->add_option("--mlp", mlp_path, "MLP params JSON {weight, bias}")->required();
    encode->add_option("--projection", projection_path, "projection file");
    encode->add_option("--lambda-init", lambda_init, "entity weight scale");
    encode->add_option("--mode", mode, "query|document");
    encode->add_option("--out", out_path, "output sparse-vector JSONL")->required();

    auto* index = app.add_subcommand("index", "build an inverted index from sparse vectors");
    index->add_option("--vectors", vectors_path, "document sparse-vector JSONL")->required();
    index->add_option("--word-vocab-size", word_vocab_size, "|V|")->required();
    index->add_option("--entity-count", entity_count, "|E|")->required();
    index->add_option("--index", index_path, "output index file")->required();

    auto* search = app.add_subcommand("search", "exact top-k search, TREC run output");
    search->add_option("--index", index_path, "index file")->required();
    search->add_option("--vectors", vectors_path, "query sparse-vector JSONL")->required();
    search->add_option("--depth", depth, "retrieval depth");
    search->add_option("--run", run_path, "output TREC run file")->required();
    search->add_option("--tag", tag, "run tag");

    auto* eval = app.add_subcommand("eval", "nDCG@{10,20} and R@depth for a run");
    eval->add_option("--run", run_path, "TREC run file")->required();
    eval->add_option("--qrels", qrels_path, "TREC qrels file")->required();
    eval->add_option("--depth", depth, "recall depth");

    auto* collapse = app.add_subcommand("collapse", "entity representation collapse experiment");
    collapse->add_option("--seed", seed, "fixture seed");
    collapse->add_option("--steps", steps, "training steps");
    collapse->add_option("--learning-rate", learning_rate, "gradient descent step size");
    collapse->add_option("--lambda-init", lambda_init, "trainable-lambda initial value");
    collapse->add_option("--l1-weight", l1_weight, "L1 weight (unused by the fixture)");
    collapse->add_option("--trace-fixed", trace_fixed, "fixed-lambda trace output");
    collapse->add_option("--trace-trainable", trace_trainable, "trainable-lambda trace output");

    CLI11_PARSE(app, argc, argv);

    try {
        if (build_kb->parsed()) return cmd_build_kb(kb_path, emb_path, out_path);
        if (cands->parsed()) {
            return cmd_candidates(method, kb_path, emb_path, input_path, out_path, k,
                                  endpoint_url, model);
        }
        if (encode->parsed()) {
            return cmd_encode(hidden_path, cand_path, kb_path, emb_path, word_emb_path, mlp_path,
                              projection_path, lambda_init, mode, out_path);
        }
        if (index->parsed()) {
            return cmd_index(vectors_path, word_vocab_size, entity_count, index_path);
        }
        if (search->parsed()) return cmd_search(index_path, vectors_path, depth, run_path, tag);
        if (eval->parsed()) return cmd_eval(run_path, qrels_path, depth);
        if (collapse->parsed()) {
            return cmd_collapse(seed, steps, learning_rate, lambda_init, trace_fixed,
                                trace_trainable);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
