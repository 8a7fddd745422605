#include "harmoniser/embedding_store.hpp"

#include "binary_io.hpp"
#include "harmoniser/error.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace harmoniser {

namespace {

constexpr std::string_view kMagic = "HEMB";
constexpr std::uint16_t kVersion = 1;
constexpr std::uint16_t kFlagTokens = 0x0001;

double checked_inv_norm(std::span<const float> v, const std::string& id) {
    double sq = 0.0;
    for (float x : v) {
        if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteValue, id);
        sq += static_cast<double>(x) * static_cast<double>(x);
    }
    if (sq == 0.0) throw Error(ErrorCode::ZeroVector, id);
    return 1.0 / std::sqrt(sq);
}

}  // namespace

std::string_view to_string(RepKind kind) noexcept { return kind == RepKind::Mean ? "mean" : "sst"; }

EmbeddingStore::EmbeddingStore(std::vector<EmbeddingRecord> records, std::uint32_t dim, RepKind rep_kind,
                               std::string model_tag, bool has_token_level)
    : records_(std::move(records)), dim_(dim), rep_kind_(rep_kind), model_tag_(std::move(model_tag)),
      has_token_level_(has_token_level) {
    if (dim_ == 0) throw Error(ErrorCode::DimensionMismatch, "dimension must be >= 1");
    dense_inv_norm_.reserve(records_.size());
    if (has_token_level_) token_inv_norm_.reserve(records_.size());
    by_id_.reserve(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& rec = records_[i];
        if (rec.question_id.empty()) throw Error(ErrorCode::MalformedRecord, "record " + std::to_string(i) + " has an empty id");
        if (!by_id_.emplace(rec.question_id, i).second) throw Error(ErrorCode::DuplicateId, rec.question_id);
        if (rec.dense.size() != dim_) {
            throw Error(ErrorCode::DimensionMismatch, rec.question_id + ": dense length " +
                                                          std::to_string(rec.dense.size()) + " != " +
                                                          std::to_string(dim_));
        }
        dense_inv_norm_.push_back(checked_inv_norm(rec.dense, rec.question_id));
        if (!has_token_level_) {
            if (!rec.tokens.empty()) {
                throw Error(ErrorCode::MalformedRecord, rec.question_id + ": token matrix in a dense-only store");
            }
            continue;
        }
        if (rec.tokens.empty()) throw Error(ErrorCode::EmptyMatrix, rec.question_id);
        if (rec.tokens.size() % dim_ != 0) throw Error(ErrorCode::DimensionMismatch, rec.question_id + ": ragged token matrix");
        const auto rows = rec.tokens.size() / dim_;
        if (rows > UINT16_MAX) throw Error(ErrorCode::MalformedRecord, rec.question_id + ": more than 65535 token rows");
        std::vector<double> inv(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            inv[r] = checked_inv_norm(std::span<const float>(rec.tokens).subspan(r * dim_, dim_), rec.question_id);
        }
        token_inv_norm_.push_back(std::move(inv));
    }
}

std::optional<std::size_t> EmbeddingStore::position(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

MatrixView EmbeddingStore::tokens(std::size_t i) const {
    const auto& t = records_[i].tokens;
    return MatrixView{t, t.size() / dim_, dim_};
}

std::span<const double> EmbeddingStore::token_inv_norms(std::size_t i) const {
    if (!has_token_level_) return {};
    return token_inv_norm_[i];
}

double EmbeddingStore::distance(std::size_t a, std::size_t b) const {
    const double sim = dot(dense(a), dense(b)) * dense_inv_norm_[a] * dense_inv_norm_[b];
    return std::clamp(1.0 - sim, 0.0, 2.0);
}

EmbeddingStore load_store(std::istream& in) { return load_store_bytes(detail::slurp(in)); }

EmbeddingStore load_store_bytes(std::string_view bytes) {
    detail::ByteReader r(bytes);
    if (r.remaining() < kMagic.size() || r.get_bytes(kMagic.size()) != kMagic) {
        throw Error(ErrorCode::BadMagic, "not a HEMB file");
    }
    const auto version = r.get<std::uint16_t>();
    if (version != kVersion) throw Error(ErrorCode::UnsupportedVersion, "HEMB version " + std::to_string(version));
    const auto flags = r.get<std::uint16_t>();
    if ((flags & ~kFlagTokens) != 0) throw Error(ErrorCode::MalformedRecord, "reserved HEMB flag bits set");
    const bool has_tokens = (flags & kFlagTokens) != 0;
    const auto dim = r.get<std::uint32_t>();
    if (dim == 0) throw Error(ErrorCode::DimensionMismatch, "dimension must be >= 1");
    const auto count = r.get<std::uint64_t>();
    auto model_tag = r.get_short_string();
    const auto rep = r.get<std::uint8_t>();
    if (rep > 1) throw Error(ErrorCode::MalformedRecord, "rep_kind " + std::to_string(rep));

    // Every record needs at least its id length and dense block; bail out
    // before reserving memory for an impossible count.
    const std::uint64_t min_record = 2 + std::uint64_t{dim} * 4 + (has_tokens ? 2 : 0);
    if (count > r.remaining() / min_record) {
        throw Error(ErrorCode::TruncatedFile, "count " + std::to_string(count) + " exceeds file size");
    }

    std::vector<EmbeddingRecord> records;
    records.reserve(static_cast<std::size_t>(count));
    for (std::uint64_t i = 0; i < count; ++i) {
        EmbeddingRecord rec;
        rec.question_id = r.get_short_string();
        auto block = r.get_bytes(std::size_t{dim} * 4);
        rec.dense.resize(dim);
        std::memcpy(rec.dense.data(), block.data(), block.size());
        if (has_tokens) {
            const auto n_tokens = r.get<std::uint16_t>();
            if (n_tokens == 0) throw Error(ErrorCode::EmptyMatrix, rec.question_id);
            auto tblock = r.get_bytes(std::size_t{n_tokens} * dim * 4);
            rec.tokens.resize(std::size_t{n_tokens} * dim);
            std::memcpy(rec.tokens.data(), tblock.data(), tblock.size());
        }
        records.push_back(std::move(rec));
    }
    if (r.remaining() != 0) throw Error(ErrorCode::TrailingBytes, std::to_string(r.remaining()) + " bytes after last record");
    return EmbeddingStore(std::move(records), dim, static_cast<RepKind>(rep), std::move(model_tag), has_tokens);
}

EmbeddingStore load_store_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    return load_store(in);
}

std::string store_bytes(const EmbeddingStore& store) {
    detail::ByteWriter w;
    w.put_bytes(kMagic);
    w.put<std::uint16_t>(kVersion);
    w.put<std::uint16_t>(store.has_token_level() ? kFlagTokens : 0);
    w.put<std::uint32_t>(store.dim());
    w.put<std::uint64_t>(store.size());
    w.put_short_string(store.model_tag());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(store.rep_kind()));
    for (const auto& rec : store.records()) {
        w.put_short_string(rec.question_id);
        w.put_bytes(std::string_view(reinterpret_cast<const char*>(rec.dense.data()), rec.dense.size() * 4));
        if (store.has_token_level()) {
            w.put<std::uint16_t>(static_cast<std::uint16_t>(rec.tokens.size() / store.dim()));
            w.put_bytes(std::string_view(reinterpret_cast<const char*>(rec.tokens.data()), rec.tokens.size() * 4));
        }
    }
    return w.bytes();
}

void write_store(std::ostream& out, const EmbeddingStore& store) {
    const auto bytes = store_bytes(store);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "HEMB write failed");
}

void write_store_file(const std::string& path, const EmbeddingStore& store) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot create " + tmp);
        write_store(out, store);
    }
    std::filesystem::rename(tmp, path);
}

double dot(std::span<const float> u, std::span<const float> v) {
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) acc += static_cast<double>(u[i]) * static_cast<double>(v[i]);
    return acc;
}

double cosine_distance(std::span<const float> u, std::span<const float> v) {
    if (u.size() != v.size()) {
        throw Error(ErrorCode::DimensionMismatch, std::to_string(u.size()) + " vs " + std::to_string(v.size()));
    }
    const double nu = dot(u, u);
    const double nv = dot(v, v);
    if (nu == 0.0 || nv == 0.0) throw Error(ErrorCode::ZeroVector, "cosine distance of a zero vector");
    const double sim = dot(u, v) / (std::sqrt(nu) * std::sqrt(nv));
    return std::clamp(1.0 - sim, 0.0, 2.0);
}

std::vector<ScoredId> dense_top_k(std::string_view query_id, std::size_t k, const IdSet& exclude,
                                  const EmbeddingStore& store) {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    auto q = store.position(query_id);
    if (!q) throw Error(ErrorCode::UnknownQuestion, std::string(query_id));
    std::vector<std::pair<double, std::size_t>> cands;
    cands.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        if (i == *q || exclude.contains(store.id(i))) continue;
        cands.emplace_back(store.distance(*q, i), i);
    }
    auto closer = [&](const auto& a, const auto& b) {
        return a.first < b.first || (a.first == b.first && store.id(a.second) < store.id(b.second));
    };
    const auto n = std::min(k, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(n), cands.end(), closer);
    std::vector<ScoredId> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back({store.id(cands[i].second), cands[i].first});
    return out;
}

}  // namespace harmoniser
