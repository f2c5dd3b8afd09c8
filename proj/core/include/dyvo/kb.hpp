#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace dyvo {

struct Entity {
    uint64_t entity_id = 0;
    std::string title;
    std::string description;
};

// NFC-normalize, trim surrounding whitespace, collapse internal whitespace
// runs to a single space. Comparison stays case-sensitive.
std::string normalize_title(const std::string& title);

// Immutable after load; unlimited concurrent readers.
class KnowledgeBase {
public:
    KnowledgeBase() = default;

    // Rejects duplicate entity_id and duplicate normalized title.
    void add(Entity entity);

    size_t size() const { return entities_.size(); }
    const std::vector<Entity>& entities() const { return entities_; }

    const Entity* find(uint64_t entity_id) const;
    // Resolution uses the normalized form of the given title.
    std::optional<uint64_t> resolve_title(const std::string& title) const;

    bool contains(uint64_t entity_id) const { return by_id_.count(entity_id) > 0; }

private:
    std::vector<Entity> entities_;
    std::unordered_map<uint64_t, size_t> by_id_;
    std::unordered_map<std::string, uint64_t> title_index_;  // normalized title -> id
};

// Entity embeddings keyed by entity_id; rows stored contiguously in
// ascending-id order so full scans are cache-friendly at KB scale.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    explicit EmbeddingTable(uint32_t dim) : dim_(dim) {}

    void add(uint64_t entity_id, std::span<const float> vec);
    // Sorts rows by id; call once after the last add.
    void finalize();

    uint32_t dim() const { return dim_; }
    size_t size() const { return ids_.size(); }
    const std::vector<uint64_t>& ids() const { return ids_; }

    bool contains(uint64_t entity_id) const;
    std::span<const float> row(uint64_t entity_id) const;
    std::span<const float> row_at(size_t pos) const;
    // Position in ascending-id order; valid after finalize().
    size_t position(uint64_t entity_id) const;

private:
    uint32_t dim_ = 0;
    std::vector<uint64_t> ids_;    // ascending after finalize()
    std::vector<float> data_;      // ids_.size() * dim_
    std::unordered_map<uint64_t, size_t> index_;
};

// Affine map aligning entity embedding dimension with the encoder hidden
// size. identity_flag short-circuits the equal-dimension case.
struct Projection {
    uint32_t d_in = 0;
    uint32_t d_out = 0;
    bool identity = true;
    std::vector<float> weight;  // row-major d_in x d_out
    std::vector<float> bias;    // d_out

    static Projection make_identity(uint32_t dim);

    std::vector<float> apply(std::span<const float> v) const;
};

// KB file: line-delimited JSON {"entity_id", "title", "description"}.
KnowledgeBase load_kb(const std::string& path);
void save_kb(const KnowledgeBase& kb, const std::string& path);

// Embedding file: "DYVOEMB1", u32 version, u32 count, u32 dim, then
// (u64 entity_id, dim f32) records. Little-endian throughout.
EmbeddingTable load_embeddings(const std::string& path);
void save_embeddings(const EmbeddingTable& table, const std::string& path);

// Projection file: "DYVOPRJ1", u32 d_in, u32 d_out, u8 identity_flag,
// weight row-major, then bias.
Projection load_projection(const std::string& path);
void save_projection(const Projection& p, const std::string& path);

// Keeps exactly the entities whose id has an embedding row.
KnowledgeBase intersect_with_embeddings(const KnowledgeBase& kb, const EmbeddingTable& emb);

}  // namespace dyvo
