#include "exsearch/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "exsearch/errors.hpp"

namespace exsearch {
namespace {

std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::vector<std::string> normalized_tokens(std::string_view s) { return split_ws(normalize_answer(s)); }

void require_golds(std::span<const std::string> golds) {
    if (golds.empty()) throw EmptyGolds("gold answer set is empty");
}

bool contains_run(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
    if (needle.empty()) return hay.empty();
    if (needle.size() > hay.size()) return false;
    return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

double f1_tokens(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
    if (pred.empty() && gold.empty()) return 1.0;
    if (pred.empty() || gold.empty()) return 0.0;
    std::unordered_map<std::string, int> counts;
    for (const auto& t : gold) ++counts[t];
    int common = 0;
    for (const auto& t : pred) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) return 0.0;
    double p = static_cast<double>(common) / static_cast<double>(pred.size());
    double r = static_cast<double>(common) / static_cast<double>(gold.size());
    return 2.0 * p * r / (p + r);
}

} // namespace

std::string normalize_answer(std::string_view text) {
    std::string lowered;
    lowered.reserve(text.size());
    for (char c : text) {
        auto u = static_cast<unsigned char>(c);
        if (u < 0x80 && std::ispunct(u)) {
            lowered.push_back(' ');
        } else {
            lowered.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
        }
    }
    std::string out;
    for (const auto& t : split_ws(lowered)) {
        if (t == "a" || t == "an" || t == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

int exact_match(std::string_view pred, std::span<const std::string> golds) {
    require_golds(golds);
    const std::string p = normalize_answer(pred);
    for (const auto& g : golds) {
        if (normalize_answer(g) == p) return 1;
    }
    return 0;
}

double token_f1(std::string_view pred, std::span<const std::string> golds) {
    require_golds(golds);
    const auto p = normalized_tokens(pred);
    double best = 0.0;
    for (const auto& g : golds) best = std::max(best, f1_tokens(p, normalized_tokens(g)));
    return best;
}

int accuracy(std::string_view pred, std::span<const std::string> golds) {
    require_golds(golds);
    const auto p = normalized_tokens(pred);
    for (const auto& g : golds) {
        if (contains_run(p, normalized_tokens(g))) return 1;
    }
    return 0;
}

bool passage_contains_answer(const Passage& passage, std::span<const std::string> golds) {
    const auto hay = normalized_tokens(passage.title + " " + passage.text);
    for (const auto& g : golds) {
        auto needle = normalized_tokens(g);
        if (!needle.empty() && contains_run(hay, needle)) return true;
    }
    return false;
}

double recall_at_k(std::span<const Passage> ranked, std::span<const std::string> golds, std::size_t k) {
    require_golds(golds);
    const std::size_t n = std::min(k, ranked.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (passage_contains_answer(ranked[i], golds)) return 1.0;
    }
    return 0.0;
}

double precision_at_k(std::span<const Passage> ranked, std::span<const std::string> golds, std::size_t k) {
    require_golds(golds);
    if (k == 0) return 0.0;
    const std::size_t n = std::min(k, ranked.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += passage_contains_answer(ranked[i], golds) ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(k);
}

MetricsReport evaluate_run(std::span<const Prediction> predictions, std::span<const Example> dataset,
                           std::span<const std::size_t> ks) {
    std::unordered_map<std::string, const Prediction*> by_id;
    std::unordered_map<std::string, std::size_t> known;
    for (std::size_t i = 0; i < dataset.size(); ++i) known.emplace(dataset[i].id, i);
    for (const auto& p : predictions) {
        if (!known.count(p.id)) throw UnknownId("prediction for unknown example id '" + p.id + "'");
        by_id[p.id] = &p;
    }

    MetricsReport report;
    report.n_examples = dataset.size();
    for (std::size_t k : ks) {
        report.recall_at[k] = 0.0;
        report.precision_at[k] = 0.0;
    }
    for (const auto& ex : dataset) {
        ExampleScores s;
        s.id = ex.id;
        for (std::size_t k : ks) s.recall_at[k] = s.precision_at[k] = 0.0;
        auto it = by_id.find(ex.id);
        if (it != by_id.end()) {
            const Prediction& p = *it->second;
            s.predicted = true;
            s.em = exact_match(p.answer, ex.gold_answers);
            s.f1 = token_f1(p.answer, ex.gold_answers);
            s.acc = accuracy(p.answer, ex.gold_answers);
            if (p.ranked) {
                for (std::size_t k : ks) {
                    s.recall_at[k] = recall_at_k(*p.ranked, ex.gold_answers, k);
                    s.precision_at[k] = precision_at_k(*p.ranked, ex.gold_answers, k);
                }
            }
        } else {
            ++report.n_missing;
        }
        report.em += s.em;
        report.f1 += s.f1;
        report.acc += s.acc;
        for (std::size_t k : ks) {
            report.recall_at[k] += s.recall_at[k];
            report.precision_at[k] += s.precision_at[k];
        }
        report.per_example.push_back(std::move(s));
    }
    if (!dataset.empty()) {
        const double n = static_cast<double>(dataset.size());
        report.em /= n;
        report.f1 /= n;
        report.acc /= n;
        for (auto& [k, v] : report.recall_at) v /= n;
        for (auto& [k, v] : report.precision_at) v /= n;
    }
    return report;
}

nlohmann::json report_to_json(const MetricsReport& report) {
    nlohmann::json recall = nlohmann::json::object();
    nlohmann::json precision = nlohmann::json::object();
    for (const auto& [k, v] : report.recall_at) recall[std::to_string(k)] = v;
    for (const auto& [k, v] : report.precision_at) precision[std::to_string(k)] = v;
    return {{"em", report.em},
            {"f1", report.f1},
            {"acc", report.acc},
            {"recall_at", recall},
            {"precision_at", precision},
            {"n_examples", report.n_examples},
            {"n_missing", report.n_missing}};
}

std::string report_to_csv(const MetricsReport& report) {
    std::ostringstream out;
    out << "id,predicted,em,f1,acc";
    for (const auto& [k, v] : report.recall_at) out << ",recall@" << k;
    for (const auto& [k, v] : report.precision_at) out << ",precision@" << k;
    out << '\n';
    for (const auto& s : report.per_example) {
        out << s.id << ',' << (s.predicted ? 1 : 0) << ',' << fmt::format("{:.6f},{:.6f},{:.6f}", s.em, s.f1, s.acc);
        for (const auto& [k, v] : s.recall_at) out << ',' << fmt::format("{:.6f}", v);
        for (const auto& [k, v] : s.precision_at) out << ',' << fmt::format("{:.6f}", v);
        out << '\n';
    }
    out << "mean," << report.n_examples - report.n_missing << ','
        << fmt::format("{:.6f},{:.6f},{:.6f}", report.em, report.f1, report.acc);
    for (const auto& [k, v] : report.recall_at) out << ',' << fmt::format("{:.6f}", v);
    for (const auto& [k, v] : report.precision_at) out << ',' << fmt::format("{:.6f}", v);
    out << '\n';
    return out.str();
}

} // namespace exsearch
