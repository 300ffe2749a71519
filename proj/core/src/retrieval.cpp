#include "exsearch/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "exsearch/errors.hpp"

namespace exsearch {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        bool word = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') || c >= 0x80;
        if (word) {
            current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::string indexed_text(const Passage& passage) {
    return passage.title.empty() ? passage.text : passage.title + " " + passage.text;
}

const Passage* CorpusIndex::find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &passages_[it->second];
}

CorpusIndex build_index(std::vector<Passage> passages) {
    std::sort(passages.begin(), passages.end(), [](const Passage& a, const Passage& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < passages.size(); ++i) {
        if (passages[i].id == passages[i - 1].id) throw DuplicateId("duplicate passage id '" + passages[i].id + "'");
    }
    CorpusIndex index;
    index.passages_ = std::move(passages);
    index.doc_lengths_.reserve(index.passages_.size());
    double total = 0.0;
    for (std::uint32_t doc = 0; doc < index.passages_.size(); ++doc) {
        const Passage& p = index.passages_[doc];
        index.by_id_.emplace(p.id, doc);
        std::map<std::string, std::uint32_t> counts;
        auto tokens = tokenize(indexed_text(p));
        for (auto& t : tokens) ++counts[t];
        for (auto& [term, tf] : counts) index.postings_[term].push_back(Posting{doc, tf});
        index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total += static_cast<double>(tokens.size());
    }
    index.avg_doc_length_ = index.passages_.empty() ? 0.0 : total / static_cast<double>(index.passages_.size());
    return index;
}

std::vector<ScoredPassage> search(const CorpusIndex& index, std::string_view query, std::size_t k,
                                  Bm25Params params) {
    if (index.doc_count() == 0) throw EmptyIndex("search on an empty index");
    if (k == 0) return {};

    auto tokens = tokenize(query);
    std::set<std::string> terms(tokens.begin(), tokens.end());
    const double n = static_cast<double>(index.doc_count());
    const double avgdl = index.avg_doc_length() > 0.0 ? index.avg_doc_length() : 1.0;

    std::vector<double> scores(index.doc_count(), 0.0);
    std::vector<std::uint32_t> touched;
    for (const auto& term : terms) {
        auto it = index.postings().find(term);
        if (it == index.postings().end()) continue;
        const double df = static_cast<double>(it->second.size());
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        for (const Posting& p : it->second) {
            const double tf = p.tf;
            const double dl = index.doc_lengths()[p.doc];
            const double norm = params.k1 * (1.0 - params.b + params.b * dl / avgdl);
            if (scores[p.doc] == 0.0) touched.push_back(p.doc);
            scores[p.doc] += idf * tf * (params.k1 + 1.0) / (tf + norm);
        }
    }

    auto better = [&](std::uint32_t a, std::uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b; // passages are stored in id order
    };
    std::erase_if(touched, [&](std::uint32_t d) { return !(scores[d] > 0.0); });
    const std::size_t take = std::min(k, touched.size());
    std::partial_sort(touched.begin(), touched.begin() + static_cast<std::ptrdiff_t>(take), touched.end(), better);

    std::vector<ScoredPassage> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const std::uint32_t doc = touched[i];
        out.push_back(ScoredPassage{index.passages()[doc].id, scores[doc], static_cast<int>(i) + 1});
    }
    return out;
}

namespace {

class Writer {
public:
    explicit Writer(std::ofstream& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        u64(bits);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

private:
    std::ofstream& out_;
};

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    std::string str() {
        std::uint32_t n = u32();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string_view raw(std::size_t n) {
        need(n);
        std::string_view v(data_.data() + pos_, n);
        pos_ += n;
        return v;
    }
    bool at_end() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw CorruptIndex("index file is truncated");
    }

    std::string data_;
    std::size_t pos_ = 0;
};

} // namespace

void save_index(const CorpusIndex& index, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write index " + path.string());
    out.write(kIndexMagic.data(), static_cast<std::streamsize>(kIndexMagic.size()));
    Writer w(out);
    w.u8(kIndexVersion);
    w.u64(index.doc_count());
    for (std::size_t i = 0; i < index.doc_count(); ++i) {
        const Passage& p = index.passages()[i];
        w.str(p.id);
        w.str(p.title);
        w.str(p.text);
        w.u32(index.doc_lengths()[i]);
    }
    w.u64(index.postings().size());
    for (const auto& [term, list] : index.postings()) {
        w.str(term);
        w.u32(static_cast<std::uint32_t>(list.size()));
        for (const Posting& p : list) {
            w.u32(p.doc);
            w.u32(p.tf);
        }
    }
    w.f64(index.avg_doc_length());
    if (!out) throw IoError("write failed for index " + path.string());
}

CorpusIndex load_index(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open index " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(std::move(data));
    try {
        if (r.raw(kIndexMagic.size()) != kIndexMagic) throw CorruptIndex("bad magic header in " + path.string());
    } catch (const CorruptIndex&) {
        throw CorruptIndex("bad magic header in " + path.string());
    }
    std::uint8_t version = r.u8();
    if (version != kIndexVersion)
        throw VersionMismatch("index format version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kIndexVersion) + ")");

    std::uint64_t count = r.u64();
    std::vector<Passage> passages;
    std::vector<std::uint32_t> lengths;
    for (std::uint64_t i = 0; i < count; ++i) {
        Passage p;
        p.id = r.str();
        p.title = r.str();
        p.text = r.str();
        passages.push_back(std::move(p));
        lengths.push_back(r.u32());
    }
    std::map<std::string, std::vector<Posting>> postings;
    std::uint64_t terms = r.u64();
    for (std::uint64_t i = 0; i < terms; ++i) {
        std::string term = r.str();
        std::uint32_t n = r.u32();
        std::vector<Posting> list;
        for (std::uint32_t j = 0; j < n; ++j) {
            Posting p;
            p.doc = r.u32();
            p.tf = r.u32();
            list.push_back(p);
        }
        postings.emplace(std::move(term), std::move(list));
    }
    double avgdl = r.f64();
    if (!r.at_end()) throw CorruptIndex("trailing bytes in " + path.string());

    // The body is regenerable from the passages; a mismatch means corruption.
    CorpusIndex index;
    try {
        index = build_index(std::move(passages));
    } catch (const DuplicateId& e) {
        throw CorruptIndex(std::string("index holds duplicate passages: ") + e.what());
    }
    if (index.doc_lengths() != lengths || index.postings() != postings || index.avg_doc_length() != avgdl)
        throw CorruptIndex("index body does not match its passages in " + path.string());
    return index;
}

} // namespace exsearch
