#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hsd/errors.hpp"
#include "hsd/rng.hpp"

namespace hsd {

enum class Lang { en, de, hi };
enum class CorpusLang { en, de, hi, multi };
enum class Task { task1, task2 };
enum class Split { train, val, test };

inline std::string to_string(Lang l) {
    switch (l) {
        case Lang::en: return "en";
        case Lang::de: return "de";
        case Lang::hi: return "hi";
    }
    return "?";
}

inline std::string to_string(CorpusLang l) {
    switch (l) {
        case CorpusLang::en: return "en";
        case CorpusLang::de: return "de";
        case CorpusLang::hi: return "hi";
        case CorpusLang::multi: return "multi";
    }
    return "?";
}

inline std::string to_string(Task t) { return t == Task::task1 ? "task1" : "task2"; }
inline std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

inline Lang parse_lang(std::string_view s) {
    if (s == "en") return Lang::en;
    if (s == "de") return Lang::de;
    if (s == "hi") return Lang::hi;
    throw UsageError("unknown language '" + std::string(s) + "' (expected en, de or hi)");
}

inline Task parse_task(std::string_view s) {
    if (s == "task1") return Task::task1;
    if (s == "task2") return Task::task2;
    throw UsageError("unknown task '" + std::string(s) + "' (expected task1 or task2)");
}

inline CorpusLang corpus_lang(Lang l) {
    switch (l) {
        case Lang::en: return CorpusLang::en;
        case Lang::de: return CorpusLang::de;
        case Lang::hi: return CorpusLang::hi;
    }
    return CorpusLang::multi;
}

// Fixed class orderings. Task 1 is [NOT, HOF], task 2 is
// [NONE, HATE, OFFN, PRFN]; class indices everywhere refer to these.
struct LabelSchema {
    Task task;
    std::vector<std::string> classes;

    static const LabelSchema& task1() {
        static const LabelSchema s{Task::task1, {"NOT", "HOF"}};
        return s;
    }
    static const LabelSchema& task2() {
        static const LabelSchema s{Task::task2, {"NONE", "HATE", "OFFN", "PRFN"}};
        return s;
    }
    static const LabelSchema& for_task(Task t) {
        return t == Task::task1 ? task1() : task2();
    }

    std::size_t size() const { return classes.size(); }

    int index_of(std::string_view name) const {
        for (std::size_t i = 0; i < classes.size(); ++i)
            if (classes[i] == name) return static_cast<int>(i);
        return -1;
    }
};

struct TweetRecord {
    std::string id;
    std::string text;
    Lang language = Lang::en;
    std::optional<int> task1; // index into LabelSchema::task1()
    std::optional<int> task2; // index into LabelSchema::task2()

    std::optional<int> label(Task t) const { return t == Task::task1 ? task1 : task2; }
};

struct Corpus {
    std::vector<TweetRecord> records;
    CorpusLang language = CorpusLang::en;
    Split split_tag = Split::train;

    std::size_t size() const { return records.size(); }
};

// Maps column roles onto header names; HASOC distributions disagree on
// naming, so the mapping is configurable at the CLI boundary.
struct ColumnMap {
    std::string id = "tweet_id";
    std::string text = "text";
    std::string task1 = "task_1";
    std::string task2 = "task_2";
};

namespace detail {

inline std::vector<std::string> split_tsv(std::string_view line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            fields.emplace_back(line.substr(start));
            break;
        }
        fields.emplace_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return fields;
}

inline std::string upper_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    return out;
}

inline std::optional<int> parse_label(std::string_view raw, const LabelSchema& schema,
                                      std::size_t line_no) {
    if (raw.empty()) return std::nullopt;
    int idx = schema.index_of(upper_ascii(raw));
    if (idx < 0)
        throw DataError("line " + std::to_string(line_no) + ": unknown " +
                        to_string(schema.task) + " label '" + std::string(raw) + "'");
    return idx;
}

inline void check_label_consistency(const TweetRecord& r, std::size_t line_no) {
    if (!r.task1 || !r.task2) return;
    bool hof = *r.task1 == LabelSchema::task1().index_of("HOF");
    bool none = *r.task2 == LabelSchema::task2().index_of("NONE");
    if (!hof && !none)
        throw DataError("line " + std::to_string(line_no) +
                        ": label-consistency violation (NOT requires task_2 NONE)");
    if (hof && none)
        throw DataError("line " + std::to_string(line_no) +
                        ": label-consistency violation (HOF requires task_2 in "
                        "{HATE, OFFN, PRFN})");
}

} // namespace detail

// Reads a HASOC-style TSV corpus. Header row is mandatory; the task columns
// may be missing (unlabeled test sets). Preserves file order.
inline Corpus load_corpus(const std::string& path, Lang language,
                          const ColumnMap& columns = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open corpus file '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw DataError("corpus file '" + path + "' is empty (header row required)");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);

    auto header = detail::split_tsv(line);
    auto column_index = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    };
    int id_col = column_index(columns.id);
    int text_col = column_index(columns.text);
    int t1_col = column_index(columns.task1);
    int t2_col = column_index(columns.task2);
    if (id_col < 0 || text_col < 0)
        throw DataError("corpus file '" + path + "': header must contain '" + columns.id +
                        "' and '" + columns.text + "' columns");

    Corpus corpus;
    corpus.language = corpus_lang(language);
    std::unordered_set<std::string> seen_ids;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail::split_tsv(line);
        if (fields.size() != header.size())
            throw DataError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " columns, got " +
                            std::to_string(fields.size()));
        TweetRecord rec;
        rec.id = fields[static_cast<std::size_t>(id_col)];
        rec.text = fields[static_cast<std::size_t>(text_col)];
        rec.language = language;
        if (rec.id.empty())
            throw DataError("line " + std::to_string(line_no) + ": empty tweet id");
        if (!seen_ids.insert(rec.id).second)
            throw DataError("line " + std::to_string(line_no) + ": duplicate tweet id '" +
                            rec.id + "'");
        if (t1_col >= 0)
            rec.task1 = detail::parse_label(fields[static_cast<std::size_t>(t1_col)],
                                            LabelSchema::task1(), line_no);
        if (t2_col >= 0)
            rec.task2 = detail::parse_label(fields[static_cast<std::size_t>(t2_col)],
                                            LabelSchema::task2(), line_no);
        detail::check_label_consistency(rec, line_no);
        corpus.records.push_back(std::move(rec));
    }
    return corpus;
}

// Writes the 4-column TSV form; absent labels become empty fields so that
// load_corpus(write_corpus(c)) round-trips field-for-field.
inline void write_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write corpus file '" + path + "'");
    out << "tweet_id\ttext\ttask_1\ttask_2\n";
    for (const auto& r : corpus.records) {
        if (r.text.find('\t') != std::string::npos || r.text.find('\n') != std::string::npos)
            throw DataError("record '" + r.id + "': text contains tab or newline, not representable as TSV");
        out << r.id << '\t' << r.text << '\t'
            << (r.task1 ? LabelSchema::task1().classes[static_cast<std::size_t>(*r.task1)] : "")
            << '\t'
            << (r.task2 ? LabelSchema::task2().classes[static_cast<std::size_t>(*r.task2)] : "")
            << '\n';
    }
}

// Prediction output: tweet_id, predicted label name, per-class probabilities
// in schema order, 6-decimal fixed point.
inline void write_predictions(const std::vector<std::string>& ids,
                              const std::vector<int>& labels,
                              const std::vector<std::vector<double>>& probs,
                              const LabelSchema& schema, const std::string& path) {
    if (ids.size() != labels.size() || ids.size() != probs.size())
        throw DataError("write_predictions: ids, labels and probability rows must align");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write predictions file '" + path + "'");
    out << "tweet_id\tpredicted_label";
    for (const auto& c : schema.classes) out << "\tprob_" << c;
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out << ids[i] << '\t' << schema.classes[static_cast<std::size_t>(labels[i])];
        if (probs[i].size() != schema.size())
            throw DataError("write_predictions: probability row size mismatch");
        for (double p : probs[i]) {
            std::snprintf(buf, sizeof buf, "%.6f", p);
            out << '\t' << buf;
        }
        out << '\n';
    }
}

// Deterministic stratified split on the target task's label. Classes with
// fewer than two members stay entirely in train (with a warning).
inline std::pair<Corpus, Corpus> stratified_split(const Corpus& corpus, double val_fraction,
                                                  std::uint64_t seed, Task task = Task::task1) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw UsageError("val_fraction must be in (0,1)");
    const LabelSchema& schema = LabelSchema::for_task(task);

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < corpus.records.size(); ++i) {
        auto label = corpus.records[i].label(task);
        if (!label)
            throw DataError("stratified_split: record '" + corpus.records[i].id +
                            "' is unlabeled for " + to_string(task));
        by_class[*label].push_back(i);
    }

    std::vector<bool> in_val(corpus.records.size(), false);
    rng::Engine eng(seed);
    for (auto& [label, indices] : by_class) {
        if (indices.size() < 2) {
            std::cerr << "warning: class '" << schema.classes[static_cast<std::size_t>(label)]
                      << "' has fewer than 2 members; keeping all in train\n";
            continue;
        }
        rng::shuffle(indices, eng);
        auto n_val = static_cast<std::size_t>(
            std::llround(val_fraction * static_cast<double>(indices.size())));
        n_val = std::min(n_val, indices.size());
        for (std::size_t k = 0; k < n_val; ++k) in_val[indices[k]] = true;
    }

    Corpus train, val;
    train.language = val.language = corpus.language;
    train.split_tag = Split::train;
    val.split_tag = Split::val;
    for (std::size_t i = 0; i < corpus.records.size(); ++i)
        (in_val[i] ? val : train).records.push_back(corpus.records[i]);
    return {std::move(train), std::move(val)};
}

// Concatenates per-language corpora into one "multi" corpus. Ids colliding
// across inputs are re-namespaced as "<lang>:<id>".
inline Corpus aggregate_multilingual(const std::vector<Corpus>& corpora) {
    if (corpora.empty()) throw DataError("aggregate_multilingual: no corpora given");
    for (const auto& c : corpora)
        if (c.split_tag != corpora.front().split_tag)
            throw DataError("aggregate_multilingual: corpora must share the same split tag");

    std::unordered_map<std::string, int> id_count;
    for (const auto& c : corpora)
        for (const auto& r : c.records) ++id_count[r.id];

    Corpus out;
    out.language = CorpusLang::multi;
    out.split_tag = corpora.front().split_tag;
    std::unordered_set<std::string> seen;
    for (const auto& c : corpora) {
        for (const auto& r : c.records) {
            TweetRecord rec = r;
            if (id_count[rec.id] > 1) rec.id = to_string(rec.language) + ":" + rec.id;
            if (!seen.insert(rec.id).second)
                throw DataError("aggregate_multilingual: id '" + rec.id +
                                "' still duplicated after namespacing");
            out.records.push_back(std::move(rec));
        }
    }
    return out;
}

} // namespace hsd
