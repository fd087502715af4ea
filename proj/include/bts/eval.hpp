#pragma once

// Exact-span scoring: a prediction is correct only when start, length and
// label all equal an unmatched gold span. POS accuracy reduces to exact
// coverage of each gold token span. Reports are per language plus an
// unweighted macro average.

#include <algorithm>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "bts/vocab.hpp"

namespace bts {

struct MatchCounts {
    std::size_t gold = 0;
    std::size_t predicted = 0;
    std::size_t matched = 0;

    double precision() const { return predicted == 0 ? 0.0 : static_cast<double>(matched) / predicted; }
    double recall() const { return gold == 0 ? 0.0 : static_cast<double>(matched) / gold; }
    double f1() const {
        const double p = precision(), r = recall();
        return p + r == 0 ? 0.0 : 2 * p * r / (p + r);
    }

    MatchCounts& operator+=(const MatchCounts& o) {
        gold += o.gold;
        predicted += o.predicted;
        matched += o.matched;
        return *this;
    }
};

// Greedy first-fit matching; under exact-match equality this equals optimal
// bipartite matching (multiset intersection), each gold span used at most once.
inline MatchCounts span_match_counts(const std::vector<SpanAnnotation>& gold,
                                     const std::vector<SpanAnnotation>& predicted) {
    MatchCounts c;
    c.gold = gold.size();
    c.predicted = predicted.size();
    std::vector<bool> used(gold.size(), false);
    for (const auto& p : predicted) {
        for (std::size_t g = 0; g < gold.size(); ++g) {
            if (used[g]) continue;
            if (gold[g].start == p.start && gold[g].length == p.length && gold[g].label == p.label) {
                used[g] = true;
                c.matched++;
                break;
            }
        }
    }
    return c;
}

struct F1Score {
    double precision = 0, recall = 0, f1 = 0;
    MatchCounts counts;
};

inline F1Score span_f1(const std::vector<SpanAnnotation>& gold,
                       const std::vector<SpanAnnotation>& predicted) {
    F1Score s;
    s.counts = span_match_counts(gold, predicted);
    s.precision = s.counts.precision();
    s.recall = s.counts.recall();
    s.f1 = s.counts.f1();
    return s;
}

// Token accuracy: token correct iff some predicted span covers exactly its
// byte range with the gold label. Gold spans must tile the tokens.
inline double pos_accuracy(const std::vector<SpanAnnotation>& gold_tokens,
                           const std::vector<SpanAnnotation>& predicted) {
    if (gold_tokens.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& g : gold_tokens) {
        for (const auto& p : predicted) {
            if (p.start == g.start && p.length == g.length && p.label == g.label) {
                correct++;
                break;
            }
        }
    }
    return static_cast<double>(correct) / static_cast<double>(gold_tokens.size());
}

inline double macro_average(const std::vector<double>& per_language) {
    if (per_language.empty()) throw std::invalid_argument("macro_average: no values");
    double sum = 0;
    for (const double v : per_language) sum += v;
    return sum / static_cast<double>(per_language.size());
}

struct EvalReport {
    // language -> (metric name -> value in [0, 100])
    std::vector<std::string> languages;
    std::map<std::string, MatchCounts> counts;
    std::map<std::string, double> metric;  // F1 or accuracy, percent
    std::map<std::string, double> precision, recall;
    double macro = 0;
    bool is_ner = true;

    std::string table() const {
        std::string out;
        char line[160];
        if (is_ner) {
            std::snprintf(line, sizeof line, "%-10s %10s %10s %10s %8s %8s %8s\n", "lang", "P",
                          "R", "F1", "gold", "pred", "match");
            out += line;
            for (const auto& lang : languages) {
                const auto& c = counts.at(lang);
                std::snprintf(line, sizeof line, "%-10s %10.2f %10.2f %10.2f %8zu %8zu %8zu\n",
                              lang.c_str(), precision.at(lang), recall.at(lang), metric.at(lang),
                              c.gold, c.predicted, c.matched);
                out += line;
            }
            std::snprintf(line, sizeof line, "%-10s %10s %10s %10.2f\n", "MACRO", "", "", macro);
        } else {
            std::snprintf(line, sizeof line, "%-10s %10s\n", "lang", "acc");
            out += line;
            for (const auto& lang : languages) {
                std::snprintf(line, sizeof line, "%-10s %10.2f\n", lang.c_str(), metric.at(lang));
                out += line;
            }
            std::snprintf(line, sizeof line, "%-10s %10.2f\n", "MACRO", macro);
        }
        out += line;
        return out;
    }

    // Machine-readable lines: lang<TAB>metric<TAB>value
    std::string machine_lines() const {
        std::string out;
        char line[96];
        for (const auto& lang : languages) {
            if (is_ner) {
                std::snprintf(line, sizeof line, "%s\tprecision\t%.4f\n", lang.c_str(),
                              precision.at(lang));
                out += line;
                std::snprintf(line, sizeof line, "%s\trecall\t%.4f\n", lang.c_str(),
                              recall.at(lang));
                out += line;
                std::snprintf(line, sizeof line, "%s\tf1\t%.4f\n", lang.c_str(), metric.at(lang));
            } else {
                std::snprintf(line, sizeof line, "%s\taccuracy\t%.4f\n", lang.c_str(),
                              metric.at(lang));
            }
            out += line;
        }
        std::snprintf(line, sizeof line, "all\tmacro\t%.4f\n", macro);
        out += line;
        return out;
    }
};

// Aggregates exact-span scores per language (documents paired by index).
inline EvalReport evaluate_ner(const std::vector<std::string>& doc_languages,
                               const std::vector<std::vector<SpanAnnotation>>& gold,
                               const std::vector<std::vector<SpanAnnotation>>& predicted) {
    if (gold.size() != predicted.size() || gold.size() != doc_languages.size())
        throw std::invalid_argument("evaluate_ner: document count mismatch");
    EvalReport report;
    report.is_ner = true;
    for (std::size_t d = 0; d < gold.size(); ++d) {
        const auto& lang = doc_languages[d];
        if (!report.counts.count(lang)) report.languages.push_back(lang);
        report.counts[lang] += span_match_counts(gold[d], predicted[d]);
    }
    std::vector<double> per_lang;
    for (const auto& lang : report.languages) {
        const auto& c = report.counts[lang];
        report.precision[lang] = 100.0 * c.precision();
        report.recall[lang] = 100.0 * c.recall();
        report.metric[lang] = 100.0 * c.f1();
        per_lang.push_back(report.metric[lang]);
    }
    report.macro = macro_average(per_lang);
    return report;
}

inline EvalReport evaluate_pos(const std::vector<std::string>& doc_languages,
                               const std::vector<std::vector<SpanAnnotation>>& gold,
                               const std::vector<std::vector<SpanAnnotation>>& predicted) {
    if (gold.size() != predicted.size() || gold.size() != doc_languages.size())
        throw std::invalid_argument("evaluate_pos: document count mismatch");
    EvalReport report;
    report.is_ner = false;
    std::map<std::string, std::pair<std::size_t, std::size_t>> correct_total;
    for (std::size_t d = 0; d < gold.size(); ++d) {
        const auto& lang = doc_languages[d];
        if (!correct_total.count(lang)) report.languages.push_back(lang);
        auto& [correct, total] = correct_total[lang];
        for (const auto& g : gold[d]) {
            total++;
            for (const auto& p : predicted[d]) {
                if (p.start == g.start && p.length == g.length && p.label == g.label) {
                    correct++;
                    break;
                }
            }
        }
    }
    std::vector<double> per_lang;
    for (const auto& lang : report.languages) {
        const auto& [correct, total] = correct_total[lang];
        report.metric[lang] = total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / total;
        report.counts[lang] = {total, 0, correct};
        per_lang.push_back(report.metric[lang]);
    }
    report.macro = macro_average(per_lang);
    return report;
}

}  // namespace bts
