#include "dyvo/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dyvo {

namespace {

double gate(double x) { return x > 0.0 ? std::log1p(x) : 0.0; }
double gate_grad(double x) { return x > 0.0 ? 1.0 / (1.0 + x) : 0.0; }

double dot_d(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

// Forward cache for one encoded example; holds everything backward needs.
struct Encoded {
    const ToyExample* ex = nullptr;
    bool is_query = false;
    ToyRepresentation rep;
    std::vector<double> mlp_act;  // a_j per position, query only
    // word id -> (argmax position, dot at max); emitted words only
    std::map<uint32_t, std::pair<uint32_t, double>> word_max;
    // entity slot -> (argmax position, dot at max); open gates only
    std::map<uint32_t, std::pair<uint32_t, double>> ent_max;
    // entity slot -> projected embedding
    std::map<uint32_t, std::vector<double>> projected;
};

void encode_entities(const ToyModel& m, const ToyExample& ex, Encoded& enc) {
    for (uint32_t slot : ex.candidate_slots) {
        if (slot >= m.entity_count) {
            throw std::invalid_argument("candidate slot " + std::to_string(slot) +
                                        " outside entity table");
        }
        std::vector<double> u = m.projected_entity(slot);
        double best_dot = 0.0;
        uint32_t best_j = 0;
        bool open = false;
        for (uint32_t j = 0; j < ex.tokens.size(); ++j) {
            const double d = dot_d(u, m.token_row(ex.tokens[j]));
            if (d > 0.0 && (!open || d > best_dot)) {
                best_dot = d;
                best_j = j;
                open = true;
            }
        }
        if (open) {
            const double weight = m.lambda_ent * gate(best_dot);
            if (weight > 0.0) {
                enc.rep.entity_weights[slot] = weight;
                enc.ent_max[slot] = {best_j, best_dot};
                enc.projected[slot] = std::move(u);
            }
        }
    }
}

Encoded encode_example(const ToyModel& m, const ToyExample& ex, bool is_query) {
    Encoded enc;
    enc.ex = &ex;
    enc.is_query = is_query;
    if (is_query) {
        enc.mlp_act.resize(ex.tokens.size());
        std::map<uint32_t, double> sums;
        for (uint32_t j = 0; j < ex.tokens.size(); ++j) {
            const uint32_t t = ex.tokens[j];
            if (t >= m.vocab_size) {
                throw std::invalid_argument("token " + std::to_string(t) + " outside toy vocab");
            }
            const double a = dot_d(m.mlp_weight, m.token_row(t)) + m.mlp_bias;
            enc.mlp_act[j] = a;
            sums[t] += gate(a);
        }
        for (const auto& [t, w] : sums) {
            if (w > 0.0) enc.rep.word_weights[t] = w;
        }
    } else {
        for (uint32_t word = 0; word < m.vocab_size; ++word) {
            const auto e = m.token_row(word);
            double best_dot = 0.0;
            uint32_t best_j = 0;
            bool open = false;
            for (uint32_t j = 0; j < ex.tokens.size(); ++j) {
                const double d = dot_d(e, m.token_row(ex.tokens[j]));
                if (d > 0.0 && (!open || d > best_dot)) {
                    best_dot = d;
                    best_j = j;
                    open = true;
                }
            }
            if (open) {
                enc.rep.word_weights[word] = gate(best_dot);
                enc.word_max[word] = {best_j, best_dot};
            }
        }
    }
    encode_entities(m, ex, enc);
    return enc;
}

// Pushes d(loss)/d(emitted weights) back into the parameter gradients.
void backward_example(const ToyModel& m, const Encoded& enc,
                      const std::map<uint32_t, double>& word_upstream,
                      const std::map<uint32_t, double>& ent_upstream, Gradients& g) {
    const auto& ex = *enc.ex;
    if (enc.is_query) {
        for (uint32_t j = 0; j < ex.tokens.size(); ++j) {
            const uint32_t t = ex.tokens[j];
            auto it = word_upstream.find(t);
            if (it == word_upstream.end()) continue;
            const double grad_a = it->second * gate_grad(enc.mlp_act[j]);
            if (grad_a == 0.0) continue;
            const auto h = m.token_row(t);
            for (uint32_t k = 0; k < m.dim; ++k) {
                g.mlp_weight[k] += grad_a * h[k];
                g.token_table[static_cast<size_t>(t) * m.dim + k] += grad_a * m.mlp_weight[k];
            }
            g.mlp_bias += grad_a;
        }
    } else {
        for (const auto& [word, upstream] : word_upstream) {
            auto it = enc.word_max.find(word);
            if (it == enc.word_max.end()) continue;
            const auto [j_star, dot] = it->second;
            const double grad_dot = upstream * gate_grad(dot);
            if (grad_dot == 0.0) continue;
            const uint32_t tok = ex.tokens[j_star];
            const auto e = m.token_row(word);
            const auto h = m.token_row(tok);
            for (uint32_t k = 0; k < m.dim; ++k) {
                g.token_table[static_cast<size_t>(word) * m.dim + k] += grad_dot * h[k];
                g.token_table[static_cast<size_t>(tok) * m.dim + k] += grad_dot * e[k];
            }
        }
    }
    for (const auto& [slot, upstream] : ent_upstream) {
        auto it = enc.ent_max.find(slot);
        if (it == enc.ent_max.end()) continue;
        const auto [j_star, dot] = it->second;
        g.lambda_ent += upstream * gate(dot);
        const double grad_dot = upstream * m.lambda_ent * gate_grad(dot);
        if (grad_dot == 0.0) continue;
        const uint32_t tok = ex.tokens[j_star];
        const auto h = m.token_row(tok);
        const auto& u = enc.projected.at(slot);
        const auto emb = m.entity_row(slot);
        for (uint32_t k = 0; k < m.dim; ++k) {
            const double du_k = grad_dot * h[k];
            g.proj_bias[k] += du_k;
            for (uint32_t r = 0; r < m.emb_dim; ++r) {
                g.proj_weight[static_cast<size_t>(r) * m.dim + k] += emb[r] * du_k;
            }
            g.token_table[static_cast<size_t>(tok) * m.dim + k] += grad_dot * u[k];
        }
    }
}

struct Softmax2 {
    double pos;
    double neg;
};

Softmax2 softmax2(double a, double b) {
    const double mx = std::max(a, b);
    const double ea = std::exp(a - mx);
    const double eb = std::exp(b - mx);
    return {ea / (ea + eb), eb / (ea + eb)};
}

}  // namespace

std::vector<double> ToyModel::projected_entity(uint32_t e) const {
    const auto emb = entity_row(e);
    std::vector<double> u(dim);
    for (uint32_t k = 0; k < dim; ++k) {
        double acc = proj_bias[k];
        for (uint32_t r = 0; r < emb_dim; ++r) {
            acc += emb[r] * proj_weight[static_cast<size_t>(r) * dim + k];
        }
        u[k] = acc;
    }
    return u;
}

Gradients Gradients::zeros_like(const ToyModel& m) {
    Gradients g;
    g.token_table.assign(m.token_table.size(), 0.0);
    g.mlp_weight.assign(m.mlp_weight.size(), 0.0);
    g.proj_weight.assign(m.proj_weight.size(), 0.0);
    g.proj_bias.assign(m.proj_bias.size(), 0.0);
    return g;
}

void Gradients::check_finite() const {
    auto check = [](std::span<const double> v, const char* name) {
        for (double x : v) {
            if (!std::isfinite(x)) {
                throw std::runtime_error(std::string("non-finite gradient in ") + name);
            }
        }
    };
    check(token_table, "token_table");
    check(mlp_weight, "mlp_weight");
    check(proj_weight, "proj_weight");
    check(proj_bias, "proj_bias");
    if (!std::isfinite(mlp_bias) || !std::isfinite(lambda_ent)) {
        throw std::runtime_error("non-finite scalar gradient");
    }
}

double Gradients::entity_path_norm() const {
    double acc = lambda_ent * lambda_ent;
    for (double x : proj_weight) acc += x * x;
    for (double x : proj_bias) acc += x * x;
    return std::sqrt(acc);
}

double kl_loss(double student_pos, double student_neg, double teacher_pos, double teacher_neg) {
    // Log-space softmax: log p_i = x_i - max - log(sum exp(x - max)), always
    // finite even when a probability underflows to zero.
    auto log_softmax2 = [](double a, double b) {
        const double mx = std::max(a, b);
        const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
        return std::pair<double, double>{a - lse, b - lse};
    };
    const auto [lt_pos, lt_neg] = log_softmax2(teacher_pos, teacher_neg);
    const auto [ls_pos, ls_neg] = log_softmax2(student_pos, student_neg);
    double kl = 0.0;
    if (const double p = std::exp(lt_pos); p > 0.0) kl += p * (lt_pos - ls_pos);
    if (const double p = std::exp(lt_neg); p > 0.0) kl += p * (lt_neg - ls_neg);
    return kl;
}

double ToyRepresentation::word_l1() const {
    double acc = 0.0;
    for (const auto& [t, w] : word_weights) acc += w;
    return acc;
}

ToyRepresentation encode_toy_query(const ToyModel& m, const ToyExample& ex) {
    return encode_example(m, ex, true).rep;
}

ToyRepresentation encode_toy_document(const ToyModel& m, const ToyExample& ex) {
    return encode_example(m, ex, false).rep;
}

double score_toy(const ToyRepresentation& q, const ToyRepresentation& d) {
    double acc = 0.0;
    for (const auto& [t, w] : q.word_weights) {
        auto it = d.word_weights.find(t);
        if (it != d.word_weights.end()) acc += w * it->second;
    }
    for (const auto& [e, w] : q.entity_weights) {
        auto it = d.entity_weights.find(e);
        if (it != d.entity_weights.end()) acc += w * it->second;
    }
    return acc;
}

double total_loss(const ToyModel& m, const ToyCorpus& corpus,
                  std::span<const TeacherTriple> batch, double l1_weight, Gradients* grads) {
    if (batch.empty()) throw std::invalid_argument("batch must be non-empty");
    const double n = static_cast<double>(batch.size());
    const double l1_coeff = l1_weight / (3.0 * n);

    double kl_sum = 0.0;
    double l1_sum = 0.0;
    for (const auto& triple : batch) {
        auto find = [](const auto& pool, const std::string& id, const char* kind) -> const ToyExample& {
            auto it = pool.find(id);
            if (it == pool.end()) {
                throw std::invalid_argument(std::string("unknown ") + kind + " id " + id);
            }
            return it->second;
        };
        const Encoded q = encode_example(m, find(corpus.queries, triple.query_id, "query"), true);
        const Encoded pos =
            encode_example(m, find(corpus.docs, triple.pos_doc_id, "document"), false);
        const Encoded neg =
            encode_example(m, find(corpus.docs, triple.neg_doc_id, "document"), false);

        const double s_pos = score_toy(q.rep, pos.rep);
        const double s_neg = score_toy(q.rep, neg.rep);
        kl_sum += kl_loss(s_pos, s_neg, triple.teacher_pos, triple.teacher_neg);
        l1_sum += q.rep.word_l1() + pos.rep.word_l1() + neg.rep.word_l1();

        if (!grads) continue;

        const auto pt = softmax2(triple.teacher_pos, triple.teacher_neg);
        const auto ps = softmax2(s_pos, s_neg);
        const double g_pos = (ps.pos - pt.pos) / n;
        const double g_neg = (ps.neg - pt.neg) / n;

        std::map<uint32_t, double> q_word_up;
        std::map<uint32_t, double> q_ent_up;
        for (const auto& [t, w] : q.rep.word_weights) {
            double up = l1_coeff;
            if (auto it = pos.rep.word_weights.find(t); it != pos.rep.word_weights.end()) {
                up += g_pos * it->second;
            }
            if (auto it = neg.rep.word_weights.find(t); it != neg.rep.word_weights.end()) {
                up += g_neg * it->second;
            }
            q_word_up[t] = up;
        }
        for (const auto& [e, w] : q.rep.entity_weights) {
            double up = 0.0;
            if (auto it = pos.rep.entity_weights.find(e); it != pos.rep.entity_weights.end()) {
                up += g_pos * it->second;
            }
            if (auto it = neg.rep.entity_weights.find(e); it != neg.rep.entity_weights.end()) {
                up += g_neg * it->second;
            }
            q_ent_up[e] = up;
        }
        backward_example(m, q, q_word_up, q_ent_up, *grads);

        auto doc_upstream = [&](const Encoded& doc, double g_score) {
            std::map<uint32_t, double> word_up;
            std::map<uint32_t, double> ent_up;
            for (const auto& [t, w] : doc.rep.word_weights) {
                double up = l1_coeff;
                if (auto it = q.rep.word_weights.find(t); it != q.rep.word_weights.end()) {
                    up += g_score * it->second;
                }
                word_up[t] = up;
            }
            for (const auto& [e, w] : doc.rep.entity_weights) {
                double up = 0.0;
                if (auto it = q.rep.entity_weights.find(e); it != q.rep.entity_weights.end()) {
                    up += g_score * it->second;
                }
                ent_up[e] = up;
            }
            backward_example(m, doc, word_up, ent_up, *grads);
        };
        doc_upstream(pos, g_pos);
        doc_upstream(neg, g_neg);
    }
    return kl_sum / n + l1_weight * (l1_sum / (3.0 * n));
}

double train_step(ToyModel& m, const ToyCorpus& corpus, std::span<const TeacherTriple> batch,
                  const TrainConfig& cfg) {
    Gradients g = Gradients::zeros_like(m);
    const double loss = total_loss(m, corpus, batch, cfg.l1_weight, &g);
    g.check_finite();
    const double lr = cfg.learning_rate;
    for (size_t i = 0; i < m.token_table.size(); ++i) m.token_table[i] -= lr * g.token_table[i];
    for (size_t i = 0; i < m.mlp_weight.size(); ++i) m.mlp_weight[i] -= lr * g.mlp_weight[i];
    m.mlp_bias -= lr * g.mlp_bias;
    for (size_t i = 0; i < m.proj_weight.size(); ++i) m.proj_weight[i] -= lr * g.proj_weight[i];
    for (size_t i = 0; i < m.proj_bias.size(); ++i) m.proj_bias[i] -= lr * g.proj_bias[i];
    if (cfg.lambda_trainable) m.lambda_ent -= lr * g.lambda_ent;
    return loss;
}

CollapseFixture make_collapse_fixture(uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.01);

    CollapseFixture fx;
    ToyModel& m = fx.model;
    m.vocab_size = 4;
    m.dim = 8;
    m.emb_dim = 8;
    m.entity_count = 3;

    // Token 0 is the shared anchor token; its hidden state carries every
    // entity dot product. Remaining tokens give the word path some mass.
    m.token_table.assign(static_cast<size_t>(m.vocab_size) * m.dim, 0.0);
    for (uint32_t t = 0; t < m.vocab_size; ++t) {
        for (uint32_t k = 0; k < m.dim; ++k) {
            m.token_table[static_cast<size_t>(t) * m.dim + k] =
                (t == 0 && k == 0 ? 1.0 : 0.0) + noise(rng);
        }
    }
    m.mlp_weight.assign(m.dim, 0.0);
    m.mlp_weight[0] = 0.8;
    m.mlp_bias = 0.1;

    // Identity-initialized trainable projection.
    m.proj_weight.assign(static_cast<size_t>(m.emb_dim) * m.dim, 0.0);
    for (uint32_t k = 0; k < m.dim; ++k) {
        m.proj_weight[static_cast<size_t>(k) * m.dim + k] = 1.0;
    }
    m.proj_bias.assign(m.dim, 0.0);

    // Clustered entity embeddings: dots start clearly positive and dominate
    // the word products when lambda is 1.
    m.entity_emb.assign(static_cast<size_t>(m.entity_count) * m.emb_dim, 0.0);
    for (uint32_t e = 0; e < m.entity_count; ++e) {
        m.entity_emb[static_cast<size_t>(e) * m.emb_dim + 0] = 3.0 + 0.2 * e;
        for (uint32_t r = 1; r < m.emb_dim; ++r) {
            m.entity_emb[static_cast<size_t>(e) * m.emb_dim + r] = noise(rng);
        }
    }

    // Adversarial pressure on the entity path: every example carries the same
    // token, so the word parts of the two documents are identical and their
    // gradients cancel. The positive document shares the query's entity while
    // the teacher slightly prefers the mismatched one, so the only way to
    // reduce the loss is to push entity dots down - through zero if the step
    // size overshoots, after which the ReLU gate is dead.
    for (uint32_t i = 0; i < m.entity_count; ++i) {
        const std::string qid = "q" + std::to_string(i);
        const std::string pid = "dpos" + std::to_string(i);
        const std::string nid = "dneg" + std::to_string(i);
        fx.corpus.queries[qid] = ToyExample{{0}, {i}};
        fx.corpus.docs[pid] = ToyExample{{0}, {i}};
        fx.corpus.docs[nid] = ToyExample{{0}, {(i + 1) % m.entity_count}};
        fx.corpus.triples.push_back({qid, pid, nid, 0.0, 0.2});
    }
    return fx;
}

namespace {

CollapseRecord trace_point(const ToyModel& m, const ToyCorpus& corpus, size_t step,
                           double entity_grad_norm) {
    size_t total = 0;
    size_t positive = 0;
    double weight_sum = 0.0;
    auto scan = [&](const ToyExample& ex, bool is_query) {
        const ToyRepresentation rep =
            is_query ? encode_toy_query(m, ex) : encode_toy_document(m, ex);
        for (uint32_t slot : ex.candidate_slots) {
            ++total;
            auto it = rep.entity_weights.find(slot);
            if (it != rep.entity_weights.end() && it->second > 0.0) {
                ++positive;
                weight_sum += it->second;
            }
        }
    };
    for (const auto& [id, ex] : corpus.queries) scan(ex, true);
    for (const auto& [id, ex] : corpus.docs) scan(ex, false);
    CollapseRecord rec;
    rec.step = step;
    rec.fraction_positive = total == 0 ? 0.0 : static_cast<double>(positive) / total;
    rec.mean_entity_weight = total == 0 ? 0.0 : weight_sum / static_cast<double>(total);
    rec.lambda_value = m.lambda_ent;
    rec.entity_grad_norm = entity_grad_norm;
    return rec;
}

CollapseTrace run_one(ToyModel m, const ToyCorpus& corpus, const TrainConfig& cfg,
                      size_t steps) {
    m.lambda_ent = cfg.lambda_init;
    CollapseTrace trace;
    trace.reserve(steps + 1);
    for (size_t step = 0; step < steps; ++step) {
        Gradients g = Gradients::zeros_like(m);
        total_loss(m, corpus, corpus.triples, cfg.l1_weight, &g);
        g.check_finite();
        trace.push_back(trace_point(m, corpus, step, g.entity_path_norm()));
        const double lr = cfg.learning_rate;
        for (size_t i = 0; i < m.token_table.size(); ++i) {
            m.token_table[i] -= lr * g.token_table[i];
        }
        for (size_t i = 0; i < m.mlp_weight.size(); ++i) m.mlp_weight[i] -= lr * g.mlp_weight[i];
        m.mlp_bias -= lr * g.mlp_bias;
        for (size_t i = 0; i < m.proj_weight.size(); ++i) {
            m.proj_weight[i] -= lr * g.proj_weight[i];
        }
        for (size_t i = 0; i < m.proj_bias.size(); ++i) m.proj_bias[i] -= lr * g.proj_bias[i];
        if (cfg.lambda_trainable) m.lambda_ent -= lr * g.lambda_ent;
    }
    Gradients g = Gradients::zeros_like(m);
    total_loss(m, corpus, corpus.triples, cfg.l1_weight, &g);
    trace.push_back(trace_point(m, corpus, steps, g.entity_path_norm()));
    return trace;
}

}  // namespace

std::pair<CollapseTrace, CollapseTrace> run_collapse_experiment(const TrainConfig& cfg_a,
                                                                const TrainConfig& cfg_b,
                                                                const CollapseFixture& fixture,
                                                                size_t steps) {
    return {run_one(fixture.model, fixture.corpus, cfg_a, steps),
            run_one(fixture.model, fixture.corpus, cfg_b, steps)};
}

std::vector<TeacherTriple> load_teacher_triples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<TeacherTriple> triples;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        TeacherTriple t;
        if (!(ss >> t.query_id >> t.pos_doc_id >> t.neg_doc_id >> t.teacher_pos >>
              t.teacher_neg)) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": malformed triple line");
        }
        if (t.pos_doc_id == t.neg_doc_id) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": positive and negative doc ids must differ");
        }
        triples.push_back(std::move(t));
    }
    return triples;
}

void write_trace(const CollapseTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (const auto& rec : trace) {
        nlohmann::ordered_json line{{"step", rec.step},
                                    {"fraction_positive", rec.fraction_positive},
                                    {"mean_entity_weight", rec.mean_entity_weight},
                                    {"lambda", rec.lambda_value}};
        out << line.dump() << "\n";
    }
}

}  // namespace dyvo
