#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsd/errors.hpp"
#include "hsd/ingest.hpp"

namespace hsd {

struct ConfusionMatrix {
    LabelSchema schema;
    std::vector<std::vector<std::int64_t>> counts; // rows gold, cols predicted

    std::int64_t total() const {
        std::int64_t t = 0;
        for (const auto& row : counts)
            for (auto c : row) t += c;
        return t;
    }
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline ConfusionMatrix confusion(std::span<const int> gold, std::span<const int> pred,
                                 const LabelSchema& schema) {
    if (gold.size() != pred.size())
        throw DataError("confusion: gold and predicted label counts differ");
    if (gold.empty()) throw DataError("confusion: empty label vectors");
    const auto k = schema.size();
    ConfusionMatrix m{schema, std::vector<std::vector<std::int64_t>>(
                                  k, std::vector<std::int64_t>(k, 0))};
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] < 0 || static_cast<std::size_t>(gold[i]) >= k ||
            pred[i] < 0 || static_cast<std::size_t>(pred[i]) >= k)
            throw DataError("confusion: label index outside schema at position " +
                            std::to_string(i));
        ++m.counts[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(pred[i])];
    }
    return m;
}

// Per-class P/R/F1 with the zero-denominator convention fixed to 0.
inline std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& m) {
    const auto k = m.schema.size();
    std::vector<ClassMetrics> out(k);
    for (std::size_t c = 0; c < k; ++c) {
        std::int64_t tp = m.counts[c][c];
        std::int64_t fp = 0, fn = 0;
        for (std::size_t g = 0; g < k; ++g)
            if (g != c) fp += m.counts[g][c];
        for (std::size_t p = 0; p < k; ++p)
            if (p != c) fn += m.counts[c][p];
        double prec = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        double rec = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        double f1 = (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        out[c] = {prec, rec, f1};
    }
    return out;
}

// Unweighted mean of per-class F1 over ALL schema classes; classes absent
// from gold and pred contribute 0.
inline double macro_f1(const ConfusionMatrix& m) {
    auto per_class = per_class_metrics(m);
    double sum = 0.0;
    for (const auto& c : per_class) sum += c.f1;
    return sum / static_cast<double>(per_class.size());
}

inline double macro_f1(std::span<const int> gold, std::span<const int> pred,
                       const LabelSchema& schema) {
    return macro_f1(confusion(gold, pred, schema));
}

inline nlohmann::json metrics_json(const ConfusionMatrix& m) {
    auto per_class = per_class_metrics(m);
    nlohmann::json classes = nlohmann::json::array();
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        classes.push_back({{"label", m.schema.classes[c]},
                           {"precision", per_class[c].precision},
                           {"recall", per_class[c].recall},
                           {"f1", per_class[c].f1}});
    }
    return {{"task", to_string(m.schema.task)},
            {"schema", m.schema.classes},
            {"macro_f1", macro_f1(m)},
            {"per_class", classes},
            {"confusion", m.counts},
            {"n", m.total()}};
}

// One scored cell of a results table.
struct ReportEntry {
    std::string model;
    std::string language; // "en", "de", "hi", ...
    std::string task;     // "task1", "task2"
    double score = 0.0;   // macro F1 in [0,1]
};

namespace detail {

inline int language_rank(const std::string& l) {
    if (l == "en") return 0;
    if (l == "de") return 1;
    if (l == "hi") return 2;
    return 3;
}

inline std::vector<std::pair<std::string, std::string>>
report_columns(const std::vector<ReportEntry>& entries) {
    std::vector<std::pair<std::string, std::string>> cols;
    for (const auto& e : entries) {
        std::pair<std::string, std::string> key{e.language, e.task};
        if (std::find(cols.begin(), cols.end(), key) == cols.end()) cols.push_back(key);
    }
    std::sort(cols.begin(), cols.end(), [](const auto& a, const auto& b) {
        int ra = language_rank(a.first), rb = language_rank(b.first);
        if (ra != rb) return ra < rb;
        if (a.first != b.first) return a.first < b.first;
        return a.second < b.second;
    });
    return cols;
}

inline std::string format_score(double score) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", score * 100.0);
    return buf;
}

} // namespace detail

// Renders scores as a models x (language, task) table, F1 x100 with two
// decimals. Row and column orders are deterministic across runs.
inline std::string render_report(const std::vector<ReportEntry>& entries,
                                 bool markdown = true) {
    auto cols = detail::report_columns(entries);
    std::vector<std::string> models;
    for (const auto& e : entries)
        if (std::find(models.begin(), models.end(), e.model) == models.end())
            models.push_back(e.model);
    std::sort(models.begin(), models.end());

    std::map<std::pair<std::string, std::pair<std::string, std::string>>, double> cells;
    for (const auto& e : entries) cells[{e.model, {e.language, e.task}}] = e.score;

    std::string out;
    const char* sep = markdown ? " | " : "\t";
    if (markdown) out += "| ";
    out += "model";
    for (const auto& c : cols) out += sep + c.first + " " + c.second;
    if (markdown) out += " |";
    out += '\n';
    if (markdown) {
        out += "| --- ";
        for (std::size_t i = 0; i < cols.size(); ++i) out += "| --- ";
        out += "|\n";
    }
    for (const auto& model : models) {
        if (markdown) out += "| ";
        out += model;
        for (const auto& c : cols) {
            auto it = cells.find({model, c});
            out += sep;
            out += it == cells.end() ? std::string("-") : detail::format_score(it->second);
        }
        if (markdown) out += " |";
        out += '\n';
    }
    return out;
}

} // namespace hsd
