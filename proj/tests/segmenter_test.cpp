#include <gtest/gtest.h>

#include "hsd/segmenter.hpp"
#include "hsd/rng.hpp"
#include "support/oracles.hpp"
#include "support/testutil.hpp"

using namespace hsd;
using testutil::TempDir;
using testutil::write_file;

namespace {

SegmenterLexicon make_lexicon(std::initializer_list<std::pair<std::string, std::uint64_t>> words,
                              std::uint64_t total = 0) {
    SegmenterLexicon lex;
    for (const auto& [w, c] : words) {
        lex.frequencies[w] = c;
        lex.total += c;
        lex.max_word_len = std::max(lex.max_word_len, w.size());
    }
    if (total > 0) lex.total = total;
    return lex;
}

testutil::OracleLexicon to_oracle(const SegmenterLexicon& lex) {
    return {std::unordered_map<std::string, std::uint64_t>(lex.frequencies.begin(),
                                                           lex.frequencies.end()),
            lex.total};
}

std::string concat(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) out += w;
    return out;
}

std::string lower(std::string s) {
    for (char& c : s)
        if (c >= 'A' && c <= 'Z') c = char(c - 'A' + 'a');
    return s;
}

} // namespace

TEST(Segmenter, WorldCupSplitsAgainstBruteForce) {
    auto lex = make_lexicon({{"world", 100}, {"cup", 80}}, 10000);
    auto words = segment_hashtag("worldcup", lex);
    EXPECT_EQ(words, (std::vector<std::string>{"world", "cup"}));
    auto oracle = testutil::brute_force_segment("worldcup", to_oracle(lex));
    EXPECT_EQ(words, oracle.words);
}

TEST(Segmenter, SingleKnownWordStaysWhole) {
    auto lex = make_lexicon({{"cat", 50}});
    EXPECT_EQ(segment_hashtag("cat", lex), std::vector<std::string>{"cat"});
}

TEST(Segmenter, OovSingletonBeatsSplits) {
    SegmenterLexicon empty;
    EXPECT_EQ(segment_hashtag("xqzv", empty), std::vector<std::string>{"xqzv"});
}

TEST(Segmenter, NonAlphanumericTagUnsegmented) {
    SegmenterLexicon empty;
    EXPECT_EQ(segment_hashtag("#!!!", empty), std::vector<std::string>{"!!!"});
}

TEST(Segmenter, EmptyTagIsError) {
    SegmenterLexicon empty;
    EXPECT_THROW(segment_hashtag("#", empty), DataError);
}

TEST(Segmenter, CamelCasePreSplit) {
    SegmenterLexicon empty;
    EXPECT_EQ(segment_hashtag("#WorldCup", empty), (std::vector<std::string>{"world", "cup"}));
    EXPECT_EQ(segment_hashtag("WeekendVibes", empty),
              (std::vector<std::string>{"weekend", "vibes"}));
    // All-caps has no lower->upper boundary; DP sees the whole chunk.
    EXPECT_EQ(segment_hashtag("WORLDCUP", empty), std::vector<std::string>{"worldcup"});
}

TEST(Segmenter, SeparatorsBecomeStandaloneTokens) {
    auto lex = make_lexicon({{"world", 100}, {"cup", 80}});
    auto words = segment_hashtag("world_cup", lex);
    EXPECT_EQ(words, (std::vector<std::string>{"world", "_", "cup"}));
    EXPECT_EQ(concat(words), "world_cup");
}

TEST(Segmenter, ConcatenationInvariantFuzz) {
    auto lex = make_lexicon({{"the", 500}, {"cat", 100}, {"hat", 90}, {"in", 400}, {"a", 800}});
    rng::Engine eng(555);
    const std::string alphabet = "abcdefghijklmnopqrstuvwxyzABC019_.-";
    for (int trial = 0; trial < 300; ++trial) {
        std::size_t n = 1 + rng::uniform_u64(eng, 40);
        std::string tag;
        for (std::size_t i = 0; i < n; ++i)
            tag += alphabet[rng::uniform_u64(eng, alphabet.size())];
        bool any_alnum = false;
        for (char c : tag) any_alnum |= std::isalnum(static_cast<unsigned char>(c)) != 0;
        if (!any_alnum) continue;
        auto words = segment_hashtag(tag, lex);
        ASSERT_EQ(concat(words), lower(tag)) << "tag: " << tag;
    }
}

// DP must equal exhaustive enumeration in score (and, with the shared
// tie-break, in the chosen sequence) on random lowercase tags.
TEST(Segmenter, DpMatchesExhaustiveEnumeration) {
    rng::Engine eng(90210);
    const std::string alphabet = "abcdefgh";
    for (int lex_trial = 0; lex_trial < 50; ++lex_trial) {
        SegmenterLexicon lex;
        std::size_t n_words = 1 + rng::uniform_u64(eng, 12);
        for (std::size_t w = 0; w < n_words; ++w) {
            std::size_t len = 1 + rng::uniform_u64(eng, 5);
            std::string word;
            for (std::size_t i = 0; i < len; ++i)
                word += alphabet[rng::uniform_u64(eng, alphabet.size())];
            std::uint64_t count = 1 + rng::uniform_u64(eng, 1000);
            lex.frequencies[word] += count;
            lex.total += count;
            lex.max_word_len = std::max(lex.max_word_len, word.size());
        }
        auto oracle_lex = to_oracle(lex);
        for (int tag_trial = 0; tag_trial < 40; ++tag_trial) {
            std::size_t len = 1 + rng::uniform_u64(eng, 12);
            std::string tag;
            for (std::size_t i = 0; i < len; ++i)
                tag += alphabet[rng::uniform_u64(eng, alphabet.size())];
            auto dp_words = segment_hashtag(tag, lex);
            auto oracle = testutil::brute_force_segment(tag, oracle_lex);
            double dp_score = 0.0;
            for (const auto& w : dp_words) {
                auto it = lex.frequencies.find(w);
                if (lex.total > 0 && it != lex.frequencies.end())
                    dp_score += std::log(double(it->second)) - std::log(double(lex.total));
                else
                    dp_score += -(10.0 + 3.0 * double(w.size()));
            }
            ASSERT_EQ(dp_score, oracle.score) << "tag: " << tag;
            ASSERT_EQ(dp_words, oracle.words) << "tag: " << tag;
        }
    }
}

TEST(BuildLexicon, SumsDuplicates) {
    TempDir tmp;
    write_file(tmp.file("w.tsv"), "the\t5\nThe\t3\n");
    auto lex = build_lexicon(tmp.file("w.tsv"));
    EXPECT_EQ(lex.frequencies.at("the"), 8u);
    EXPECT_EQ(lex.total, 8u);
}

TEST(BuildLexicon, EmptyFileAllOov) {
    TempDir tmp;
    write_file(tmp.file("w.tsv"), "");
    auto lex = build_lexicon(tmp.file("w.tsv"));
    EXPECT_EQ(lex.total, 0u);
    EXPECT_EQ(segment_hashtag("anything", lex), std::vector<std::string>{"anything"});
}

TEST(BuildLexicon, TotalsAndMaxWordLen) {
    TempDir tmp;
    write_file(tmp.file("w.tsv"), "a\t1\nb\t2\n");
    auto lex = build_lexicon(tmp.file("w.tsv"));
    EXPECT_EQ(lex.total, 3u);
    EXPECT_EQ(lex.max_word_len, 1u);
}

TEST(BuildLexicon, NonIntegerCountNamesLine) {
    TempDir tmp;
    write_file(tmp.file("w.tsv"), "ok\t3\nbad\tmany\n");
    try {
        build_lexicon(tmp.file("w.tsv"));
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(BuildLexicon, RejectsPunctuationWords) {
    TempDir tmp;
    write_file(tmp.file("w.tsv"), "don't\t3\n");
    EXPECT_THROW(build_lexicon(tmp.file("w.tsv")), DataError);
}
