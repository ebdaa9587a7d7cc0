#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "gem/autodiff/checkpoint.hpp"  // little-endian stream helpers
#include "gem/core/error.hpp"
#include "gem/core/text.hpp"
#include "gem/dialogue/corpus.hpp"
#include "gem/retrieval/embedding.hpp"

namespace gem::retrieval {

// An embedded training turn plus its gold slot-value pairs, used as a
// few-shot demonstration.
struct ExampleRecord {
    std::string id;
    std::vector<double> embedding;
    std::string combined_text;
    SlotValues gold_pairs;

    bool operator==(const ExampleRecord&) const = default;
};

// Deterministic text representation of a turn: previous system response,
// current user utterance, identified slots (sorted).
inline std::string combine_fields(const std::string& sys_prev, const std::string& user_cur,
                                  const std::set<std::string>& slots) {
    return "system: " + sys_prev + " | user: " + user_cur + " | slots: " + join(slots, ", ");
}

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace detail

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ContractError("cosine: dimension mismatch");
    double na = detail::norm(a), nb = detail::norm(b);
    if (na == 0.0 || nb == 0.0) throw ContractError("cosine: zero-norm vector");
    return detail::dot(a, b) / (na * nb);
}

// Exhaustive-scan vector store. Immutable after build; queries are
// const and safe to run concurrently.
class VectorIndex {
public:
    explicit VectorIndex(std::size_t dimension) : dim_(dimension) {
        if (dimension == 0) throw ContractError("index: dimension must be positive");
    }

    std::size_t dimension() const { return dim_; }
    std::size_t size() const { return records_.size(); }
    const std::vector<ExampleRecord>& records() const { return records_; }

    void insert(ExampleRecord record) {
        if (record.embedding.size() != dim_)
            throw ContractError("index: record '" + record.id + "' has dimension " +
                                std::to_string(record.embedding.size()) + ", index expects " +
                                std::to_string(dim_));
        if (detail::norm(record.embedding) == 0.0)
            throw ContractError("index: record '" + record.id + "' has zero-norm embedding");
        if (!ids_.insert(record.id).second)
            throw ContractError("index: duplicate record id '" + record.id + "'");
        records_.push_back(std::move(record));
    }

    // Records with cos(z_e, z_t) > tau, most similar first, ties broken by
    // ascending id, truncated to k.
    std::vector<ExampleRecord> query_topk(const std::vector<double>& query, std::size_t k,
                                          double tau) const {
        if (query.size() != dim_)
            throw ContractError("query: dimension " + std::to_string(query.size()) +
                                " does not match index dimension " + std::to_string(dim_));
        if (detail::norm(query) == 0.0) throw ContractError("query: zero-norm embedding");

        std::vector<std::pair<double, const ExampleRecord*>> scored;
        for (const auto& r : records_) {
            double sim = cosine_similarity(r.embedding, query);
            if (sim > tau) scored.emplace_back(sim, &r);
        }
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second->id < b.second->id;
        });
        if (scored.size() > k) scored.resize(k);
        std::vector<ExampleRecord> out;
        out.reserve(scored.size());
        for (const auto& [sim, rec] : scored) out.push_back(*rec);
        return out;
    }

private:
    std::size_t dim_;
    std::vector<ExampleRecord> records_;
    std::set<std::string> ids_;
};

// One record per user turn carrying gold pairs. Index only training splits;
// evaluation dialogues must never feed the example store.
inline VectorIndex build_index(const Corpus& corpus, EmbeddingProvider& provider) {
    VectorIndex index(provider.dimension());
    for (const auto& d : corpus.dialogues) {
        std::string prev_system;
        for (std::size_t t = 0; t < d.turns.size(); ++t) {
            const Turn& turn = d.turns[t];
            if (turn.speaker == Speaker::User) {
                ExampleRecord rec;
                rec.id = d.id + "#" + std::to_string(t);
                rec.combined_text = combine_fields(prev_system, turn.text, turn.gold_slots);
                rec.gold_pairs = turn.gold_turn_values;
                rec.embedding = provider.embed(rec.combined_text);
                index.insert(std::move(rec));
            } else {
                prev_system = turn.text;
            }
        }
    }
    return index;
}

inline constexpr char kIndexMagic[4] = {'G', 'E', 'M', 'I'};
inline constexpr std::uint32_t kIndexVersion = 1;

inline void persist_index(const VectorIndex& index, const std::filesystem::path& path) {
    namespace ad = gem::autodiff::detail;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(kIndexMagic, 4);
    ad::write_le<std::uint32_t>(out, kIndexVersion);
    ad::write_le<std::uint64_t>(out, index.dimension());
    ad::write_le<std::uint64_t>(out, index.size());
    auto write_string = [&](const std::string& s) {
        ad::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
        out.write(s.data(), static_cast<std::streamsize>(s.size()));
    };
    for (const auto& r : index.records()) {
        write_string(r.id);
        write_string(r.combined_text);
        ad::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.gold_pairs.size()));
        for (const auto& [slot, value] : r.gold_pairs) {
            write_string(slot);
            write_string(value);
        }
        for (double v : r.embedding) ad::write_f64_le(out, v);
    }
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

// expected_dimension, when nonzero, guards against provider/index drift.
inline VectorIndex load_index(const std::filesystem::path& path,
                              std::size_t expected_dimension = 0) {
    namespace ad = gem::autodiff::detail;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kIndexMagic, 4) != 0)
        throw ParseError("index '" + path.string() + "': bad magic");
    std::uint32_t version = ad::read_le<std::uint32_t>(in);
    if (version != kIndexVersion)
        throw ParseError("index '" + path.string() + "': unsupported version " +
                         std::to_string(version));
    std::size_t dim = static_cast<std::size_t>(ad::read_le<std::uint64_t>(in));
    if (expected_dimension != 0 && dim != expected_dimension)
        throw ParseError("index '" + path.string() + "': dimension " + std::to_string(dim) +
                         " does not match provider dimension " +
                         std::to_string(expected_dimension));
    std::uint64_t count = ad::read_le<std::uint64_t>(in);
    auto read_string = [&]() {
        std::uint32_t len = ad::read_le<std::uint32_t>(in);
        std::string s(len, '\0');
        in.read(s.data(), len);
        if (in.gcount() != static_cast<std::streamsize>(len))
            throw ParseError("index: truncated string");
        return s;
    };
    VectorIndex index(dim);
    for (std::uint64_t i = 0; i < count; ++i) {
        ExampleRecord r;
        r.id = read_string();
        r.combined_text = read_string();
        std::uint32_t pairs = ad::read_le<std::uint32_t>(in);
        for (std::uint32_t p = 0; p < pairs; ++p) {
            std::string slot = read_string();
            r.gold_pairs[slot] = read_string();
        }
        r.embedding.resize(dim);
        for (double& v : r.embedding) v = ad::read_f64_le(in);
        index.insert(std::move(r));
    }
    return index;
}

}  // namespace gem::retrieval
