#include <gtest/gtest.h>

#include "hsd/eval.hpp"
#include "support/oracles.hpp"

using namespace hsd;

TEST(MacroF1, PerfectPredictionsScoreOne) {
    std::vector<int> gold = {0, 1, 0, 1}, pred = gold;
    EXPECT_DOUBLE_EQ(macro_f1(gold, pred, LabelSchema::task1()), 1.0);
}

// gold [NOT,NOT,HOF,HOF], pred [NOT,HOF,HOF,HOF]:
// NOT: P=1, R=1/2, F1=2/3; HOF: P=2/3, R=1, F1=4/5; macro = 11/15.
TEST(MacroF1, HandComputedBinaryCase) {
    std::vector<int> gold = {0, 0, 1, 1}, pred = {0, 1, 1, 1};
    double f1 = macro_f1(gold, pred, LabelSchema::task1());
    EXPECT_NEAR(f1, 11.0 / 15.0, 1e-12);
    EXPECT_NEAR(f1, (2.0 / 3.0 + 0.8) / 2.0, 1e-12);
    EXPECT_NEAR(f1, testutil::reference_macro_f1(gold, pred, 2), 1e-15);
}

TEST(MacroF1, AbsentClassesContributeZero) {
    std::vector<int> gold(8, 0), pred(8, 0); // all NONE in the 4-class schema
    EXPECT_DOUBLE_EQ(macro_f1(gold, pred, LabelSchema::task2()), 0.25);
}

TEST(MacroF1, ErrorsOnBadInput) {
    std::vector<int> gold = {0, 1}, short_pred = {0};
    EXPECT_THROW(macro_f1(gold, short_pred, LabelSchema::task1()), DataError);
    std::vector<int> empty;
    EXPECT_THROW(macro_f1(empty, empty, LabelSchema::task1()), DataError);
    std::vector<int> bad = {0, 5};
    EXPECT_THROW(macro_f1(gold, bad, LabelSchema::task1()), DataError);
}

TEST(MacroF1, MatchesIndependentReferenceOnFuzz) {
    rng::Engine eng(4242);
    for (int trial = 0; trial < 400; ++trial) {
        int k = (trial % 2 == 0) ? 2 : 4;
        const LabelSchema& schema = k == 2 ? LabelSchema::task1() : LabelSchema::task2();
        std::size_t n = 1 + rng::uniform_u64(eng, 60);
        std::vector<int> gold(n), pred(n);
        for (std::size_t i = 0; i < n; ++i) {
            gold[i] = int(rng::uniform_u64(eng, std::uint64_t(k)));
            pred[i] = int(rng::uniform_u64(eng, std::uint64_t(k)));
        }
        ASSERT_NEAR(macro_f1(gold, pred, schema), testutil::reference_macro_f1(gold, pred, k),
                    1e-12);
    }
}

TEST(MacroF1, PermutationInvariant) {
    rng::Engine eng(7);
    std::vector<int> gold, pred;
    for (int i = 0; i < 100; ++i) {
        gold.push_back(int(rng::uniform_u64(eng, 4)));
        pred.push_back(int(rng::uniform_u64(eng, 4)));
    }
    double before = macro_f1(gold, pred, LabelSchema::task2());
    std::vector<std::size_t> order(gold.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng::shuffle(order, eng);
    std::vector<int> gold2, pred2;
    for (auto i : order) {
        gold2.push_back(gold[i]);
        pred2.push_back(pred[i]);
    }
    EXPECT_DOUBLE_EQ(macro_f1(gold2, pred2, LabelSchema::task2()), before);
}

TEST(MacroF1, OneIffExactlyEqual) {
    rng::Engine eng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 1 + rng::uniform_u64(eng, 20);
        std::vector<int> gold(n), pred(n);
        for (std::size_t i = 0; i < n; ++i) {
            gold[i] = int(rng::uniform_u64(eng, 2));
            pred[i] = int(rng::uniform_u64(eng, 2));
        }
        double f1 = macro_f1(gold, pred, LabelSchema::task1());
        EXPECT_TRUE(f1 >= 0.0 && f1 <= 1.0);
        EXPECT_EQ(f1 == 1.0, gold == pred);
    }
}

TEST(Confusion, DiagonalWhenAllCorrect) {
    std::vector<int> gold = {0, 1}, pred = {0, 1};
    auto m = confusion(gold, pred, LabelSchema::task1());
    EXPECT_EQ(m.counts[0][0], 1);
    EXPECT_EQ(m.counts[1][1], 1);
    EXPECT_EQ(m.counts[0][1], 0);
    EXPECT_EQ(m.counts[1][0], 0);
    EXPECT_EQ(m.total(), 2);
}

TEST(Confusion, HandComputedCounts) {
    std::vector<int> gold = {0, 0, 1, 1}, pred = {0, 1, 1, 1};
    auto m = confusion(gold, pred, LabelSchema::task1());
    EXPECT_EQ(m.counts[0][0], 1);
    EXPECT_EQ(m.counts[0][1], 1);
    EXPECT_EQ(m.counts[1][0], 0);
    EXPECT_EQ(m.counts[1][1], 2);
}

TEST(Confusion, EmptyInputIsError) {
    std::vector<int> empty;
    EXPECT_THROW(confusion(empty, empty, LabelSchema::task1()), DataError);
}

TEST(Confusion, MatrixAgreesWithDirectComputationOnFuzz) {
    rng::Engine eng(31337);
    for (int trial = 0; trial < 1000; ++trial) {
        int k = (trial % 2 == 0) ? 2 : 4;
        const LabelSchema& schema = k == 2 ? LabelSchema::task1() : LabelSchema::task2();
        std::size_t n = 1 + rng::uniform_u64(eng, 40);
        std::vector<int> gold(n), pred(n);
        for (std::size_t i = 0; i < n; ++i) {
            gold[i] = int(rng::uniform_u64(eng, std::uint64_t(k)));
            pred[i] = int(rng::uniform_u64(eng, std::uint64_t(k)));
        }
        ASSERT_EQ(macro_f1(confusion(gold, pred, schema)), macro_f1(gold, pred, schema));
    }
}

TEST(RenderReport, PaperStyleFormatting) {
    std::vector<ReportEntry> entries = {{"fusion", "en", "task1", 0.9029}};
    std::string md = render_report(entries);
    EXPECT_NE(md.find("90.29"), std::string::npos);
    EXPECT_NE(md.find("en task1"), std::string::npos);
}

TEST(RenderReport, EmptyResultsGiveHeaderOnly) {
    std::string md = render_report({});
    EXPECT_NE(md.find("model"), std::string::npos);
    std::string tsv = render_report({}, false);
    EXPECT_EQ(tsv, "model\n");
}

TEST(RenderReport, DeterministicOrdering) {
    std::vector<ReportEntry> a = {{"m2", "de", "task2", 0.5},
                                  {"m1", "en", "task1", 0.5},
                                  {"m1", "hi", "task2", 0.25},
                                  {"m2", "en", "task2", 0.75}};
    std::vector<ReportEntry> b = {a[3], a[0], a[1], a[2]};
    EXPECT_EQ(render_report(a), render_report(b));
    // en columns sort before de before hi
    std::string tsv = render_report(a, false);
    auto en_pos = tsv.find("en task1");
    auto de_pos = tsv.find("de task2");
    auto hi_pos = tsv.find("hi task2");
    EXPECT_LT(en_pos, de_pos);
    EXPECT_LT(de_pos, hi_pos);
}

TEST(MetricsJson, CarriesConfusionCounts) {
    std::vector<int> gold = {0, 0, 1, 1}, pred = {0, 1, 1, 1};
    auto j = metrics_json(confusion(gold, pred, LabelSchema::task1()));
    EXPECT_EQ(j["n"], 4);
    EXPECT_EQ(j["confusion"][0][1], 1);
    EXPECT_NEAR(j["macro_f1"].get<double>(), 11.0 / 15.0, 1e-12);
    EXPECT_EQ(j["schema"][0], "NOT");
}
