#include "dyvo/candidates.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <unicode/uchar.h>
#include <unicode/utf8.h>

namespace dyvo {

namespace {

constexpr const char* kQueryPlaceholder = "{query}";

void append_utf8(std::string& out, UChar32 c) {
    uint8_t buf[U8_MAX_LENGTH];
    int32_t len = 0;
    UBool err = 0;
    U8_APPEND(buf, len, U8_MAX_LENGTH, c, err);
    if (!err) out.append(reinterpret_cast<const char*>(buf), len);
}

struct ParsedUrl {
    std::string base;  // scheme://host[:port]
    std::string path;
};

ParsedUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw std::invalid_argument("endpoint url missing scheme: " + url);
    }
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

LinkedLoadResult load_linked(const std::string& path, const KnowledgeBase& kb) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    LinkedLoadResult result;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        std::vector<uint64_t> ids;
        for (const auto& ref : rec.at("entities")) {
            if (ref.is_number_unsigned()) {
                uint64_t id = ref.get<uint64_t>();
                if (kb.contains(id)) {
                    ids.push_back(id);
                } else {
                    ++result.dropped;
                }
            } else if (ref.is_string()) {
                if (auto id = kb.resolve_title(ref.get<std::string>())) {
                    ids.push_back(*id);
                } else {
                    ++result.dropped;
                }
            } else {
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": entity reference must be a string or unsigned id");
            }
        }
        result.by_id[rec.at("id").get<std::string>()] = CandidateSet::dedup(ids);
    }
    return result;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    int32_t i = 0;
    const int32_t n = static_cast<int32_t>(text.size());
    const auto* s = reinterpret_cast<const uint8_t*>(text.data());
    while (i < n) {
        UChar32 c;
        U8_NEXT(s, i, n, c);
        if (c >= 0 && u_isalnum(c)) {
            append_utf8(current, u_tolower(c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

Bm25EntityIndex Bm25EntityIndex::build(const KnowledgeBase& kb, double k1, double b) {
    Bm25EntityIndex idx;
    idx.k1_ = k1;
    idx.b_ = b;
    size_t total_len = 0;
    for (const auto& entity : kb.entities()) {
        const auto tokens = tokenize(entity.description);
        idx.doc_lengths_[entity.entity_id] = static_cast<uint32_t>(tokens.size());
        total_len += tokens.size();
        std::unordered_map<std::string, uint32_t> tf;
        for (const auto& t : tokens) ++tf[t];
        for (auto& [token, count] : tf) {
            idx.postings_[token].push_back({entity.entity_id, count});
        }
    }
    for (auto& [token, list] : idx.postings_) {
        std::sort(list.begin(), list.end(),
                  [](const Posting& a, const Posting& b) { return a.entity_id < b.entity_id; });
    }
    idx.avg_len_ = idx.doc_lengths_.empty()
                       ? 0.0
                       : static_cast<double>(total_len) / static_cast<double>(idx.doc_lengths_.size());
    return idx;
}

double Bm25EntityIndex::score(const std::vector<std::string>& query_tokens,
                              uint64_t entity_id) const {
    auto len_it = doc_lengths_.find(entity_id);
    if (len_it == doc_lengths_.end()) return 0.0;
    const double len = len_it->second;
    const double n = static_cast<double>(doc_lengths_.size());
    double total = 0.0;
    for (const auto& token : query_tokens) {
        auto it = postings_.find(token);
        if (it == postings_.end()) continue;
        const auto& list = it->second;
        auto p = std::lower_bound(list.begin(), list.end(), entity_id,
                                  [](const Posting& a, uint64_t id) { return a.entity_id < id; });
        if (p == list.end() || p->entity_id != entity_id) continue;
        const double df = static_cast<double>(list.size());
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        const double tf = static_cast<double>(p->tf);
        const double norm = tf + k1_ * (1.0 - b_ + b_ * len / avg_len_);
        total += idf * tf * (k1_ + 1.0) / norm;
    }
    return total;
}

CandidateSet Bm25EntityIndex::retrieve(const std::string& query_text, size_t k) const {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    const auto query_tokens = tokenize(query_text);
    if (query_tokens.empty()) return {};

    std::unordered_map<uint64_t, bool> matched;
    for (const auto& token : query_tokens) {
        auto it = postings_.find(token);
        if (it == postings_.end()) continue;
        for (const auto& p : it->second) matched[p.entity_id] = true;
    }
    std::vector<std::pair<double, uint64_t>> scored;
    scored.reserve(matched.size());
    for (const auto& [entity_id, _] : matched) {
        scored.emplace_back(score(query_tokens, entity_id), entity_id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    if (scored.size() > k) scored.resize(k);
    std::vector<uint64_t> ids;
    ids.reserve(scored.size());
    for (const auto& [s, id] : scored) ids.push_back(id);
    return CandidateSet::from_ids(std::move(ids));
}

CandidateSet dense_retrieve(std::span<const float> query_vec, const EmbeddingTable& emb,
                            size_t k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (query_vec.size() != emb.dim()) {
        throw std::invalid_argument("query vector dim " + std::to_string(query_vec.size()) +
                                    " != embedding dim " + std::to_string(emb.dim()));
    }
    std::vector<std::pair<double, uint64_t>> scored;
    scored.reserve(emb.size());
    for (size_t pos = 0; pos < emb.size(); ++pos) {
        auto row = emb.row_at(pos);
        double acc = 0.0;
        for (size_t i = 0; i < row.size(); ++i) {
            acc += static_cast<double>(query_vec[i]) * static_cast<double>(row[i]);
        }
        scored.emplace_back(acc, emb.ids()[pos]);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    if (scored.size() > k) scored.resize(k);
    std::vector<uint64_t> ids;
    ids.reserve(scored.size());
    for (const auto& [s, id] : scored) ids.push_back(id);
    return CandidateSet::from_ids(std::move(ids));
}

const std::string& GenerativeClientConfig::default_prompt_template() {
    static const std::string tmpl =
        "Identify Wikipedia entities that are helpful to retrieve documents relevant to a "
        "web search query. Please return a list of entity names only:\n"
        "Example 1:\n"
        "Query: How is the push towards electric cars impacting the demand for raw "
        "materials?\n"
        "Entities: [\"Cobalt\", \"Automotive battery\", \"China\", \"Electric car\", "
        "\"Electric battery\", \"Gigafactory 1\", \"Demand\", \"Fossil fuel\", \"Electric "
        "vehicle industry in China\", \"Electric vehicle battery\", \"Electric vehicle "
        "conversion\", \"Electric vehicle\", \"Supply and demand\", \"Mining industry of the "
        "Democratic Republic of the Congo\", \"Raw material\", \"Lithium iron phosphate\", "
        "\"Lithium-ion battery\", \"Mining\", \"Lithium\", \"Petroleum\"]\n"
        "Example 2:\n"
        "Query: Why do many economists argue against fixed exchange rates?\n"
        "Entities: [\"Argentine peso\", \"Currency crisis\", \"Inflation\", \"Hong Kong "
        "dollar\", \"Exchange rate\", \"Gold standard\", \"European Exchange Rate "
        "Mechanism\", \"1998 Russian financial crisis\", \"Black Saturday (1983)\", \"Black "
        "Wednesday\", \"Optimum currency area\", \"Mexican peso crisis\", \"Milton "
        "Friedman\", \"Euro\", \"Recession\", \"Currency intervention\", \"1997 Asian "
        "financial crisis\", \"Devaluation\", \"Original sin (economics)\", \"Exchange-rate "
        "regime\"]\n"
        "Please find relevant entities for this new example:\n"
        "Query: {query}\n"
        "Entities: ";
    return tmpl;
}

std::string render_prompt(const std::string& prompt_template, const std::string& query_text) {
    const std::string& tmpl =
        prompt_template.empty() ? GenerativeClientConfig::default_prompt_template()
                                : prompt_template;
    auto pos = tmpl.find(kQueryPlaceholder);
    if (pos == std::string::npos) {
        throw std::invalid_argument("prompt template is missing the {query} placeholder");
    }
    std::string out = tmpl;
    out.replace(pos, std::strlen(kQueryPlaceholder), query_text);
    return out;
}

std::vector<std::string> parse_entity_list(const std::string& completion) {
    // First try strict JSON.
    auto parsed = nlohmann::json::parse(completion, nullptr, false);
    if (parsed.is_array()) {
        std::vector<std::string> names;
        for (const auto& item : parsed) {
            if (!item.is_string()) {
                throw std::runtime_error("entity list contains a non-string element: " +
                                         completion);
            }
            names.push_back(item.get<std::string>());
        }
        return names;
    }
    // Fallback: a bracketed comma-separated quoted list, possibly with
    // surrounding prose-free whitespace.
    auto lo = completion.find('[');
    auto hi = completion.rfind(']');
    if (lo == std::string::npos || hi == std::string::npos || hi < lo) {
        throw std::runtime_error("completion is not a bracketed entity list: " + completion);
    }
    std::string inner = completion.substr(lo + 1, hi - lo - 1);
    std::vector<std::string> names;
    size_t i = 0;
    while (i < inner.size()) {
        while (i < inner.size() && (std::isspace(static_cast<unsigned char>(inner[i])) ||
                                    inner[i] == ',')) {
            ++i;
        }
        if (i >= inner.size()) break;
        if (inner[i] != '"') {
            throw std::runtime_error("expected quoted entity name in: " + completion);
        }
        ++i;
        std::string name;
        while (i < inner.size() && inner[i] != '"') {
            if (inner[i] == '\\' && i + 1 < inner.size()) ++i;
            name.push_back(inner[i++]);
        }
        if (i >= inner.size()) {
            throw std::runtime_error("unterminated quoted entity name in: " + completion);
        }
        ++i;  // closing quote
        names.push_back(std::move(name));
    }
    return names;
}

GenerativeResult generative_retrieve(const GenerativeClientConfig& cfg,
                                     const std::string& query_text, const KnowledgeBase& kb) {
    if (cfg.timeout.count() <= 0) throw std::invalid_argument("timeout must be positive");
    const auto url = split_url(cfg.endpoint_url);

    nlohmann::json body{
        {"model", cfg.model_name},
        {"messages",
         nlohmann::json::array(
             {{{"role", "user"}, {"content", render_prompt(cfg.prompt_template, query_text)}}})},
        {"temperature", 0}};

    httplib::Client client(url.base);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout));
    if (const char* key = std::getenv(cfg.api_key_env_var.c_str()); key && *key) {
        client.set_bearer_token_auth(key);
    }

    std::string last_error;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(100u << (attempt - 1)));
        }
        auto res = client.Post(url.path, body.dump(), "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            last_error = "HTTP status " + std::to_string(res->status);
            if (res->status >= 400 && res->status < 500 && res->status != 429) break;
            continue;
        }
        nlohmann::json resp = nlohmann::json::parse(res->body);
        GenerativeResult result;
        result.raw_completion =
            resp.at("choices").at(0).at("message").at("content").get<std::string>();
        std::vector<uint64_t> ids;
        for (const auto& name : parse_entity_list(result.raw_completion)) {
            if (auto id = kb.resolve_title(name)) {
                ids.push_back(*id);
            } else {
                result.dropped_names.push_back(name);
            }
        }
        result.candidates = CandidateSet::dedup(ids);
        return result;
    }
    throw std::runtime_error("generative retrieval failed after " +
                             std::to_string(cfg.max_retries + 1) + " attempts: " + last_error);
}

}  // namespace dyvo
