#pragma once

// Independent reference implementations used as test oracles. These stay
// deliberately naive and separate from the library code paths they check.

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace testutil {

// Brute-force per-class tallies; unweighted mean of F1 over all k classes.
inline double reference_macro_f1(const std::vector<int>& gold, const std::vector<int>& pred,
                                 int k) {
    double f1_sum = 0.0;
    for (int c = 0; c < k; ++c) {
        long tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < gold.size(); ++i) {
            if (pred[i] == c && gold[i] == c) ++tp;
            if (pred[i] == c && gold[i] != c) ++fp;
            if (pred[i] != c && gold[i] == c) ++fn;
        }
        double p = (tp + fp) > 0 ? double(tp) / double(tp + fp) : 0.0;
        double r = (tp + fn) > 0 ? double(tp) / double(tp + fn) : 0.0;
        f1_sum += (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    return f1_sum / double(k);
}

struct OracleLexicon {
    std::unordered_map<std::string, std::uint64_t> counts;
    std::uint64_t total = 0;
};

struct OracleSegmentation {
    double score = 0.0;
    std::vector<std::string> words;
};

// Exhaustive enumeration over all 2^(n-1) segmentations of an ASCII
// lowercase alphanumeric tag. Cost model: log(count/total) for in-lexicon
// words, -(base + per_char*len) otherwise. Tie-break: fewer words, then
// lexicographically smallest sequence.
inline OracleSegmentation brute_force_segment(const std::string& tag,
                                              const OracleLexicon& lexicon,
                                              double oov_base = 10.0,
                                              double oov_per_char = 3.0) {
    const std::size_t n = tag.size();
    OracleSegmentation best;
    bool have_best = false;
    for (std::uint64_t mask = 0; mask < (1ull << (n - 1)); ++mask) {
        std::vector<std::string> words;
        std::size_t start = 0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (mask & (1ull << i)) {
                words.push_back(tag.substr(start, i + 1 - start));
                start = i + 1;
            }
        }
        words.push_back(tag.substr(start));
        double score = 0.0;
        for (const auto& w : words) {
            auto it = lexicon.counts.find(w);
            if (lexicon.total > 0 && it != lexicon.counts.end())
                score += std::log(double(it->second)) - std::log(double(lexicon.total));
            else
                score += -(oov_base + oov_per_char * double(w.size()));
        }
        bool better = !have_best || score > best.score ||
                      (score == best.score && (words.size() < best.words.size() ||
                                               (words.size() == best.words.size() &&
                                                words < best.words)));
        if (better) {
            best = {score, std::move(words)};
            have_best = true;
        }
    }
    return best;
}

} // namespace testutil
