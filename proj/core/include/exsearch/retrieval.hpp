#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "exsearch/types.hpp"

namespace exsearch {

/// Lowercases ASCII letters and splits on every byte that is not an ASCII
/// letter or digit. Bytes >= 0x80 are kept inside tokens so UTF-8 words stay
/// whole.
std::vector<std::string> tokenize(std::string_view text);

/// Text a passage is indexed and matched under: title then body.
std::string indexed_text(const Passage& passage);

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

struct Posting {
    std::uint32_t doc = 0; // position in CorpusIndex::passages
    std::uint32_t tf = 0;

    bool operator==(const Posting&) const = default;
};

/// Immutable inverted index. Passages are stored sorted by id, and every
/// posting list is sorted by that same order.
class CorpusIndex {
public:
    CorpusIndex() = default;

    std::size_t doc_count() const noexcept { return passages_.size(); }
    double avg_doc_length() const noexcept { return avg_doc_length_; }
    const std::vector<Passage>& passages() const noexcept { return passages_; }
    const std::vector<std::uint32_t>& doc_lengths() const noexcept { return doc_lengths_; }
    const std::map<std::string, std::vector<Posting>>& postings() const noexcept { return postings_; }

    /// nullptr when the id is unknown.
    const Passage* find(std::string_view id) const;

    bool operator==(const CorpusIndex& other) const {
        return passages_ == other.passages_ && doc_lengths_ == other.doc_lengths_ &&
               postings_ == other.postings_ && avg_doc_length_ == other.avg_doc_length_;
    }

private:
    friend CorpusIndex build_index(std::vector<Passage> passages);
    friend CorpusIndex load_index(const std::filesystem::path& path);

    std::vector<Passage> passages_;
    std::vector<std::uint32_t> doc_lengths_;
    std::map<std::string, std::vector<Posting>> postings_;
    std::unordered_map<std::string, std::uint32_t> by_id_;
    double avg_doc_length_ = 0.0;
};

/// Throws DuplicateId naming the first repeated id.
CorpusIndex build_index(std::vector<Passage> passages);

/// BM25 over the distinct query tokens. Results are sorted by score
/// descending with ascending passage id breaking ties; zero-score passages
/// are never returned. Throws EmptyIndex on an empty corpus.
std::vector<ScoredPassage> search(const CorpusIndex& index, std::string_view query, std::size_t k,
                                  Bm25Params params = {});

inline constexpr std::string_view kIndexMagic = "EXSIDX1";
inline constexpr std::uint8_t kIndexVersion = 1;

void save_index(const CorpusIndex& index, const std::filesystem::path& path);
/// Throws CorruptIndex on a bad header or body, VersionMismatch on an
/// unknown format version.
CorpusIndex load_index(const std::filesystem::path& path);

/// Query -> scored passages seam used by the agent.
class Retriever {
public:
    virtual ~Retriever() = default;
    virtual std::vector<ScoredPassage> retrieve(std::string_view query, std::size_t k) const = 0;
    virtual const Passage* passage(std::string_view id) const = 0;
    virtual std::size_t size() const = 0;
};

class Bm25Retriever final : public Retriever {
public:
    explicit Bm25Retriever(const CorpusIndex& index, Bm25Params params = {}) : index_(&index), params_(params) {}

    std::vector<ScoredPassage> retrieve(std::string_view query, std::size_t k) const override {
        return search(*index_, query, k, params_);
    }
    const Passage* passage(std::string_view id) const override { return index_->find(id); }
    std::size_t size() const override { return index_->doc_count(); }

private:
    const CorpusIndex* index_;
    Bm25Params params_;
};

} // namespace exsearch
