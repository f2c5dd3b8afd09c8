#include "dyvo/kb.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>
#include <unicode/normalizer2.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

namespace dyvo {

namespace {

std::string nfc(const std::string& in) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw std::runtime_error("ICU NFC normalizer unavailable");

    icu::UnicodeString source = icu::UnicodeString::fromUTF8(in);
    icu::UnicodeString normalized = norm->normalize(source, status);
    if (U_FAILURE(status)) throw std::runtime_error("NFC normalization failed");

    std::string out;
    normalized.toUTF8String(out);
    return out;
}

bool is_ws(char32_t c) {
    return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v';
}

std::string collapse_whitespace(const std::string& in) {
    std::string out;
    out.reserve(in.size());
    bool pending_space = false;
    bool seen_content = false;
    int32_t i = 0;
    const int32_t n = static_cast<int32_t>(in.size());
    const auto* s = reinterpret_cast<const uint8_t*>(in.data());
    while (i < n) {
        UChar32 c;
        int32_t start = i;
        U8_NEXT(s, i, n, c);
        if (c < 0) throw std::invalid_argument("title is not valid UTF-8");
        if (is_ws(static_cast<char32_t>(c))) {
            pending_space = seen_content;
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            seen_content = true;
            out.append(in, start, i - start);
        }
    }
    return out;
}

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
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

void expect_magic(std::istream& in, const char* magic, const std::string& path) {
    char buf[8];
    if (!in.read(buf, 8) || std::memcmp(buf, magic, 8) != 0) {
        throw std::runtime_error(path + ": bad magic, expected " + magic);
    }
}

}  // namespace

std::string normalize_title(const std::string& title) {
    return collapse_whitespace(nfc(title));
}

void KnowledgeBase::add(Entity entity) {
    if (entity.title.empty()) {
        throw std::invalid_argument("entity " + std::to_string(entity.entity_id) +
                                    " has an empty title");
    }
    if (by_id_.count(entity.entity_id)) {
        throw std::invalid_argument("duplicate entity_id " + std::to_string(entity.entity_id));
    }
    std::string key = normalize_title(entity.title);
    if (key.empty()) {
        throw std::invalid_argument("entity " + std::to_string(entity.entity_id) +
                                    " has a whitespace-only title");
    }
    if (title_index_.count(key)) {
        throw std::invalid_argument("duplicate normalized title \"" + key + "\"");
    }
    by_id_[entity.entity_id] = entities_.size();
    title_index_[std::move(key)] = entity.entity_id;
    entities_.push_back(std::move(entity));
}

const Entity* KnowledgeBase::find(uint64_t entity_id) const {
    auto it = by_id_.find(entity_id);
    return it == by_id_.end() ? nullptr : &entities_[it->second];
}

std::optional<uint64_t> KnowledgeBase::resolve_title(const std::string& title) const {
    auto it = title_index_.find(normalize_title(title));
    if (it == title_index_.end()) return std::nullopt;
    return it->second;
}

void EmbeddingTable::add(uint64_t entity_id, std::span<const float> vec) {
    if (vec.size() != dim_) {
        throw std::invalid_argument("embedding row has length " + std::to_string(vec.size()) +
                                    ", table dim is " + std::to_string(dim_));
    }
    for (float x : vec) {
        if (!std::isfinite(x)) {
            throw std::invalid_argument("non-finite component in embedding for entity " +
                                        std::to_string(entity_id));
        }
    }
    if (index_.count(entity_id)) {
        throw std::invalid_argument("duplicate embedding row for entity " +
                                    std::to_string(entity_id));
    }
    index_[entity_id] = ids_.size();
    ids_.push_back(entity_id);
    data_.insert(data_.end(), vec.begin(), vec.end());
}

void EmbeddingTable::finalize() {
    std::vector<size_t> order(ids_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [this](size_t a, size_t b) { return ids_[a] < ids_[b]; });

    std::vector<uint64_t> ids(ids_.size());
    std::vector<float> data(data_.size());
    for (size_t pos = 0; pos < order.size(); ++pos) {
        ids[pos] = ids_[order[pos]];
        std::copy_n(data_.begin() + static_cast<ptrdiff_t>(order[pos] * dim_), dim_,
                    data.begin() + static_cast<ptrdiff_t>(pos * dim_));
        index_[ids[pos]] = pos;
    }
    ids_ = std::move(ids);
    data_ = std::move(data);
}

bool EmbeddingTable::contains(uint64_t entity_id) const { return index_.count(entity_id) > 0; }

std::span<const float> EmbeddingTable::row(uint64_t entity_id) const {
    auto it = index_.find(entity_id);
    if (it == index_.end()) {
        throw std::out_of_range("no embedding row for entity " + std::to_string(entity_id));
    }
    return row_at(it->second);
}

size_t EmbeddingTable::position(uint64_t entity_id) const {
    auto it = index_.find(entity_id);
    if (it == index_.end()) {
        throw std::out_of_range("no embedding row for entity " + std::to_string(entity_id));
    }
    return it->second;
}

std::span<const float> EmbeddingTable::row_at(size_t pos) const {
    return {data_.data() + pos * dim_, dim_};
}

Projection Projection::make_identity(uint32_t dim) {
    Projection p;
    p.d_in = dim;
    p.d_out = dim;
    p.identity = true;
    return p;
}

std::vector<float> Projection::apply(std::span<const float> v) const {
    if (v.size() != d_in) {
        throw std::invalid_argument("projection input has length " + std::to_string(v.size()) +
                                    ", expected " + std::to_string(d_in));
    }
    if (identity) {
        return {v.begin(), v.end()};
    }
    std::vector<float> out(d_out);
    for (uint32_t o = 0; o < d_out; ++o) {
        double acc = static_cast<double>(bias[o]);
        for (uint32_t i = 0; i < d_in; ++i) {
            acc += static_cast<double>(v[i]) * static_cast<double>(weight[i * d_out + o]);
        }
        out[o] = static_cast<float>(acc);
    }
    return out;
}

KnowledgeBase load_kb(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    KnowledgeBase kb;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            nlohmann::json rec = nlohmann::json::parse(line);
            Entity e;
            e.entity_id = rec.at("entity_id").get<uint64_t>();
            e.title = rec.at("title").get<std::string>();
            e.description = rec.value("description", std::string{});
            kb.add(std::move(e));
        } catch (const std::exception& ex) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + ex.what());
        }
    }
    return kb;
}

void save_kb(const KnowledgeBase& kb, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (const auto& e : kb.entities()) {
        nlohmann::ordered_json rec{
            {"entity_id", e.entity_id}, {"title", e.title}, {"description", e.description}};
        out << rec.dump() << "\n";
    }
}

EmbeddingTable load_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    expect_magic(in, "DYVOEMB1", path);
    const auto version = read_le<uint32_t>(in, "version");
    if (version != 1) {
        throw std::runtime_error(path + ": unsupported version " + std::to_string(version));
    }
    const auto count = read_le<uint32_t>(in, "count");
    const auto dim = read_le<uint32_t>(in, "dim");

    const std::streampos payload_start = in.tellg();
    in.seekg(0, std::ios::end);
    const std::streamoff actual = in.tellg() - payload_start;
    const std::streamoff expected =
        static_cast<std::streamoff>(count) * (8 + static_cast<std::streamoff>(dim) * 4);
    if (actual != expected) {
        throw std::runtime_error(path + ": payload is " + std::to_string(actual) +
                                 " bytes, header implies " + std::to_string(expected));
    }
    in.seekg(payload_start);

    EmbeddingTable table(dim);
    std::vector<float> row(dim);
    for (uint32_t r = 0; r < count; ++r) {
        const auto id = read_le<uint64_t>(in, "entity_id");
        if (!in.read(reinterpret_cast<char*>(row.data()),
                     static_cast<std::streamsize>(dim) * 4)) {
            throw std::runtime_error(path + ": truncated record " + std::to_string(r));
        }
        table.add(id, row);
    }
    table.finalize();
    return table;
}

void save_embeddings(const EmbeddingTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write("DYVOEMB1", 8);
    write_le<uint32_t>(out, 1);
    write_le<uint32_t>(out, static_cast<uint32_t>(table.size()));
    write_le<uint32_t>(out, table.dim());
    for (size_t pos = 0; pos < table.size(); ++pos) {
        write_le<uint64_t>(out, table.ids()[pos]);
        auto row = table.row_at(pos);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()) * 4);
    }
}

Projection load_projection(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    expect_magic(in, "DYVOPRJ1", path);
    Projection p;
    p.d_in = read_le<uint32_t>(in, "d_in");
    p.d_out = read_le<uint32_t>(in, "d_out");
    p.identity = read_le<uint8_t>(in, "identity_flag") != 0;
    if (p.identity) {
        if (p.d_in != p.d_out) {
            throw std::runtime_error(path + ": identity projection requires d_in == d_out");
        }
        return p;
    }
    p.weight.resize(static_cast<size_t>(p.d_in) * p.d_out);
    p.bias.resize(p.d_out);
    if (!in.read(reinterpret_cast<char*>(p.weight.data()),
                 static_cast<std::streamsize>(p.weight.size()) * 4) ||
        !in.read(reinterpret_cast<char*>(p.bias.data()),
                 static_cast<std::streamsize>(p.bias.size()) * 4)) {
        throw std::runtime_error(path + ": truncated projection payload");
    }
    return p;
}

void save_projection(const Projection& p, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write("DYVOPRJ1", 8);
    write_le<uint32_t>(out, p.d_in);
    write_le<uint32_t>(out, p.d_out);
    write_le<uint8_t>(out, p.identity ? 1 : 0);
    if (!p.identity) {
        out.write(reinterpret_cast<const char*>(p.weight.data()),
                  static_cast<std::streamsize>(p.weight.size()) * 4);
        out.write(reinterpret_cast<const char*>(p.bias.data()),
                  static_cast<std::streamsize>(p.bias.size()) * 4);
    }
}

KnowledgeBase intersect_with_embeddings(const KnowledgeBase& kb, const EmbeddingTable& emb) {
    KnowledgeBase out;
    for (const auto& e : kb.entities()) {
        if (emb.contains(e.entity_id)) {
            out.add(e);
        }
    }
    return out;
}

}  // namespace dyvo
