#pragma once

#include "harmoniser/lexical_index.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace harmoniser {

enum class RepKind : std::uint8_t { Mean = 0, Sst = 1 };

std::string_view to_string(RepKind kind) noexcept;

/// Row-major view of an n_rows x dim block of f32 values.
struct MatrixView {
    std::span<const float> data;
    std::size_t rows = 0;
    std::size_t dim = 0;

    std::span<const float> row(std::size_t i) const { return data.subspan(i * dim, dim); }
};

struct EmbeddingRecord {
    std::string question_id;
    std::vector<float> dense;
    /// Row-major n_tokens x dim; empty when the record has no token matrix.
    std::vector<float> tokens;

    std::size_t token_rows(std::size_t dim) const { return dim == 0 ? 0 : tokens.size() / dim; }
};

/// Precomputed question embeddings. Records keep the exact f32 values they
/// were loaded with (so writing a loaded store reproduces the file); the
/// L2 normalisation is applied through per-vector inverse norms computed
/// once at construction.
class EmbeddingStore {
public:
    EmbeddingStore() = default;

    /// Validates every record. Throws DimensionMismatch, ZeroVector,
    /// NonFiniteValue, EmptyMatrix, DuplicateId or MalformedRecord.
    EmbeddingStore(std::vector<EmbeddingRecord> records, std::uint32_t dim, RepKind rep_kind,
                   std::string model_tag, bool has_token_level);

    std::uint32_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool has_token_level() const noexcept { return has_token_level_; }
    RepKind rep_kind() const noexcept { return rep_kind_; }
    const std::string& model_tag() const noexcept { return model_tag_; }

    /// Records in file order.
    std::span<const EmbeddingRecord> records() const noexcept { return records_; }
    std::optional<std::size_t> position(std::string_view id) const;
    bool contains(std::string_view id) const { return position(id).has_value(); }
    const std::string& id(std::size_t i) const { return records_[i].question_id; }

    std::span<const float> dense(std::size_t i) const { return records_[i].dense; }
    double dense_inv_norm(std::size_t i) const { return dense_inv_norm_[i]; }
    MatrixView tokens(std::size_t i) const;
    std::span<const double> token_inv_norms(std::size_t i) const;

    /// 1 - cosine similarity between two records' dense vectors.
    double distance(std::size_t a, std::size_t b) const;

private:
    std::vector<EmbeddingRecord> records_;
    std::uint32_t dim_ = 0;
    RepKind rep_kind_ = RepKind::Mean;
    std::string model_tag_;
    bool has_token_level_ = false;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::vector<double> dense_inv_norm_;
    std::vector<std::vector<double>> token_inv_norm_;
};

/// HEMB reader. Throws BadMagic, UnsupportedVersion, DimensionMismatch,
/// ZeroVector, NonFiniteValue, EmptyMatrix, TruncatedFile, TrailingBytes or
/// MalformedRecord.
EmbeddingStore load_store(std::istream& in);
EmbeddingStore load_store_bytes(std::string_view bytes);
EmbeddingStore load_store_file(const std::string& path);

void write_store(std::ostream& out, const EmbeddingStore& store);
std::string store_bytes(const EmbeddingStore& store);
/// Writes to a temporary sibling and renames over `path`.
void write_store_file(const std::string& path, const EmbeddingStore& store);

/// Left-to-right dot product accumulated in double.
double dot(std::span<const float> u, std::span<const float> v);

/// 1 - (u.v)/(|u||v|), clamped to [0, 2]. Throws DimensionMismatch or
/// ZeroVector.
double cosine_distance(std::span<const float> u, std::span<const float> v);

/// Ascending distance to the query's dense vector, ties by ascending id.
/// The query itself is always excluded. Throws UnknownQuestion.
std::vector<ScoredId> dense_top_k(std::string_view query_id, std::size_t k, const IdSet& exclude,
                                  const EmbeddingStore& store);

}  // namespace harmoniser
