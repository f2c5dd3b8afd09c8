#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dyvo {

// Context-free toy encoder: the hidden state of token t at any position is
// token_table[t]. All trainer math is double precision so analytic
// gradients can be checked against finite differences.
struct ToyModel {
    uint32_t vocab_size = 0;  // toy word vocabulary |V|
    uint32_t dim = 0;         // hidden size d
    uint32_t emb_dim = 0;     // raw entity embedding size

    // Trainable.
    std::vector<double> token_table;  // vocab_size x dim
    std::vector<double> mlp_weight;   // dim
    double mlp_bias = 0.0;
    std::vector<double> proj_weight;  // emb_dim x dim, row-major
    std::vector<double> proj_bias;    // dim
    double lambda_ent = 0.05;

    // Frozen entity embedding table; slot e is row e.
    std::vector<double> entity_emb;  // entity_count x emb_dim
    uint32_t entity_count = 0;

    std::span<const double> token_row(uint32_t t) const {
        return {token_table.data() + static_cast<size_t>(t) * dim, dim};
    }
    std::span<const double> entity_row(uint32_t e) const {
        return {entity_emb.data() + static_cast<size_t>(e) * emb_dim, emb_dim};
    }
    // project(entity_emb[e]) into the hidden space.
    std::vector<double> projected_entity(uint32_t e) const;
};

struct Gradients {
    std::vector<double> token_table;
    std::vector<double> mlp_weight;
    double mlp_bias = 0.0;
    std::vector<double> proj_weight;
    std::vector<double> proj_bias;
    double lambda_ent = 0.0;

    static Gradients zeros_like(const ToyModel& m);
    void check_finite() const;
    // L2 norm over the entity path only (projection params and lambda).
    double entity_path_norm() const;
};

// A query or document in the toy corpus.
struct ToyExample {
    std::vector<uint32_t> tokens;           // word-piece ids < vocab_size
    std::vector<uint32_t> candidate_slots;  // entity slots, duplicate-free
};

struct TeacherTriple {
    std::string query_id;
    std::string pos_doc_id;
    std::string neg_doc_id;
    double teacher_pos = 0.0;
    double teacher_neg = 0.0;
};

struct ToyCorpus {
    std::map<std::string, ToyExample> queries;
    std::map<std::string, ToyExample> docs;
    std::vector<TeacherTriple> triples;
};

struct TrainConfig {
    double learning_rate = 5e-7;
    size_t steps = 100000;
    size_t batch_size = 16;
    double l1_weight = 1e-4;
    double lambda_init = 0.05;
    bool lambda_trainable = true;
    uint64_t seed = 0;
};

// KL divergence from the two-way softmax of teacher scores to the two-way
// softmax of student scores. Overflow-safe; >= 0, zero iff gaps match.
double kl_loss(double student_pos, double student_neg, double teacher_pos, double teacher_neg);

// Forward pass artifacts for one example (word weights via the appropriate
// head, entity weights over its candidate slots).
struct ToyRepresentation {
    std::map<uint32_t, double> word_weights;    // > 0 entries only
    std::map<uint32_t, double> entity_weights;  // slot -> weight, > 0 only
    double word_l1() const;
};

ToyRepresentation encode_toy_query(const ToyModel& m, const ToyExample& ex);
ToyRepresentation encode_toy_document(const ToyModel& m, const ToyExample& ex);
double score_toy(const ToyRepresentation& q, const ToyRepresentation& d);

// Mean KL over triples + l1_weight * mean word-range L1 of the query and
// document representations (entities carry no L1). When grads is non-null
// it receives the analytic gradient of this total.
double total_loss(const ToyModel& m, const ToyCorpus& corpus,
                  std::span<const TeacherTriple> batch, double l1_weight,
                  Gradients* grads = nullptr);

// One plain gradient-descent step over the batch. The entity embedding
// table is frozen; lambda moves only when cfg.lambda_trainable.
double train_step(ToyModel& m, const ToyCorpus& corpus, std::span<const TeacherTriple> batch,
                  const TrainConfig& cfg);

struct CollapseRecord {
    size_t step = 0;
    double fraction_positive = 0.0;   // entity weights > 0, over all examples
    double mean_entity_weight = 0.0;
    double lambda_value = 0.0;
    double entity_grad_norm = 0.0;
};
using CollapseTrace = std::vector<CollapseRecord>;

// Fixture where correct ranking requires entity matches and entity weights
// start dominant, so a fixed unit lambda invites collapse.
struct CollapseFixture {
    ToyModel model;
    ToyCorpus corpus;
};
CollapseFixture make_collapse_fixture(uint64_t seed);

// Trains two copies of the fixture model, one per config, recording a
// trace entry per step.
std::pair<CollapseTrace, CollapseTrace> run_collapse_experiment(const TrainConfig& cfg_a,
                                                                const TrainConfig& cfg_b,
                                                                const CollapseFixture& fixture,
                                                                size_t steps);

// Teacher triples TSV: query_id pos_doc_id neg_doc_id teacher_pos teacher_neg.
std::vector<TeacherTriple> load_teacher_triples(const std::string& path);

// Line-delimited JSON per step: {step, fraction_positive, mean_entity_weight, lambda}.
void write_trace(const CollapseTrace& trace, const std::string& path);

}  // namespace dyvo
