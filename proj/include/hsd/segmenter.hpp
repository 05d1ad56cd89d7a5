#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hsd/errors.hpp"
#include "hsd/utf8.hpp"

namespace hsd {

// Unigram frequency model backing hashtag segmentation.
struct SegmenterLexicon {
    std::unordered_map<std::string, std::uint64_t> frequencies;
    std::uint64_t total = 0;
    std::size_t max_word_len = 1; // in codepoints
};

// Out-of-vocabulary words cost -(base + per_char * len); the monotone length
// penalty keeps OOV singletons viable while preferring dictionary splits.
struct SegmenterOptions {
    double oov_base = 10.0;
    double oov_per_char = 3.0;
};

namespace detail {

inline bool is_ascii_alnum(char32_t cp) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9');
}

// Letters outside ASCII (e.g. Devanagari) take part in segmentation too.
inline bool is_segment_char(char32_t cp) { return is_ascii_alnum(cp) || cp >= 0x80; }

inline char32_t lower_cp(char32_t cp) {
    return (cp >= 'A' && cp <= 'Z') ? cp - 'A' + 'a' : cp;
}

inline double word_log_prob(const std::string& word, std::size_t len_cps,
                            const SegmenterLexicon& lexicon, const SegmenterOptions& opt) {
    if (lexicon.total > 0 && len_cps <= lexicon.max_word_len) {
        auto it = lexicon.frequencies.find(word);
        if (it != lexicon.frequencies.end())
            return std::log(static_cast<double>(it->second)) -
                   std::log(static_cast<double>(lexicon.total));
    }
    return -(opt.oov_base + opt.oov_per_char * static_cast<double>(len_cps));
}

struct SegPath {
    double score = 0.0;
    std::size_t words = 0;
    std::vector<std::string> seq;
};

// true if a beats b under (score desc, word count asc, sequence lex asc)
inline bool path_better(const SegPath& a, const SegPath& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.words != b.words) return a.words < b.words;
    return a.seq < b.seq;
}

// Viterbi over prefix positions; exact under the tie-break above because
// appending a common suffix preserves all three orderings.
inline std::vector<std::string> segment_chunk(const std::vector<char32_t>& cps,
                                              const SegmenterLexicon& lexicon,
                                              const SegmenterOptions& opt) {
    const std::size_t n = cps.size();
    std::vector<SegPath> best(n + 1);
    std::vector<bool> reached(n + 1, false);
    reached[0] = true;
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (!reached[j]) continue;
            std::string word;
            for (std::size_t k = j; k < i; ++k) utf8::append(word, cps[k]);
            SegPath cand = best[j];
            cand.score += word_log_prob(word, i - j, lexicon, opt);
            cand.words += 1;
            cand.seq.push_back(std::move(word));
            if (!reached[i] || path_better(cand, best[i])) {
                best[i] = std::move(cand);
                reached[i] = true;
            }
        }
    }
    return best[n].seq;
}

} // namespace detail

// Maximum-likelihood unigram segmentation of a hashtag. Operates on the
// lowercased tag; camel-case boundaries in the original are trusted as
// pre-splits, and non-alphanumeric runs become standalone tokens so that
// the concatenation of the result always equals lowercase(tag).
inline std::vector<std::string> segment_hashtag(std::string_view tag,
                                                const SegmenterLexicon& lexicon,
                                                const SegmenterOptions& options = {}) {
    std::string_view body = tag;
    if (!body.empty() && body.front() == '#') body.remove_prefix(1);
    if (body.empty()) throw DataError("segment_hashtag: empty tag");

    auto cps = utf8::decode(body);
    bool any_alnum = false;
    for (char32_t cp : cps)
        if (detail::is_segment_char(cp)) any_alnum = true;
    if (!any_alnum) return {std::string(body)};

    // Chunk boundaries: non-alphanumeric runs, plus lower->upper transitions.
    std::vector<std::string> out;
    std::vector<char32_t> chunk;
    auto flush_chunk = [&]() {
        if (chunk.empty()) return;
        for (char32_t& cp : chunk) cp = detail::lower_cp(cp);
        auto words = detail::segment_chunk(chunk, lexicon, options);
        out.insert(out.end(), words.begin(), words.end());
        chunk.clear();
    };
    for (std::size_t i = 0; i < cps.size(); ++i) {
        char32_t cp = cps[i];
        if (!detail::is_segment_char(cp)) {
            flush_chunk();
            std::string sep;
            while (i < cps.size() && !detail::is_segment_char(cps[i])) {
                utf8::append(sep, detail::lower_cp(cps[i]));
                ++i;
            }
            --i;
            out.push_back(std::move(sep));
            continue;
        }
        bool camel_boundary = !chunk.empty() && cp >= 'A' && cp <= 'Z' &&
                              cps[i - 1] >= 'a' && cps[i - 1] <= 'z';
        if (camel_boundary) flush_chunk();
        chunk.push_back(cp);
    }
    flush_chunk();
    return out;
}

// Reads "word<TAB>count" lines into a lexicon. Duplicate words are summed
// and words are lowercased (ASCII).
inline SegmenterLexicon build_lexicon(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open lexicon file '" + path + "'");
    SegmenterLexicon lex;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataError("lexicon line " + std::to_string(line_no) +
                            ": expected 'word<TAB>count'");
        std::string word = line.substr(0, tab);
        std::string count_str = line.substr(tab + 1);
        auto cps = utf8::decode(word);
        if (cps.empty())
            throw DataError("lexicon line " + std::to_string(line_no) + ": empty word");
        for (char32_t& cp : cps) {
            if (!detail::is_segment_char(cp) && !(cp >= 'A' && cp <= 'Z'))
                throw DataError("lexicon line " + std::to_string(line_no) +
                                ": word contains punctuation or whitespace");
            cp = detail::lower_cp(cp);
        }
        std::uint64_t count = 0;
        try {
            std::size_t pos = 0;
            long long v = std::stoll(count_str, &pos);
            if (pos != count_str.size() || v <= 0) throw std::invalid_argument("count");
            count = static_cast<std::uint64_t>(v);
        } catch (const std::exception&) {
            throw DataError("lexicon line " + std::to_string(line_no) +
                            ": count '" + count_str + "' is not a positive integer");
        }
        lex.frequencies[utf8::encode(cps)] += count;
        lex.total += count;
        lex.max_word_len = std::max(lex.max_word_len, cps.size());
    }
    return lex;
}

} // namespace hsd
