#include <gtest/gtest.h>

#include <cmath>

#include "hsd/train.hpp"
#include "support/testutil.hpp"

using namespace hsd;

namespace {

bool params_equal(const ModelParams& a, const ModelParams& b) {
    if (a.tensors.size() != b.tensors.size()) return false;
    for (std::size_t i = 0; i < a.tensors.size(); ++i)
        if (!bit_equal(a.tensors[i], b.tensors[i])) return false;
    return true;
}

bool adam_equal(const AdamState& a, const AdamState& b) {
    if (a.t != b.t || a.m.size() != b.m.size()) return false;
    for (std::size_t i = 0; i < a.m.size(); ++i)
        if (!bit_equal(a.m[i], b.m[i]) || !bit_equal(a.v[i], b.v[i])) return false;
    return true;
}

VectorDataset random_dataset(std::size_t n, std::size_t dim, std::size_t k,
                             std::uint64_t seed) {
    rng::Engine eng(seed);
    VectorDataset data;
    for (std::size_t i = 0; i < n; ++i) {
        VectorExample ex;
        ex.features.resize(dim);
        for (double& v : ex.features) v = rng::uniform_real(eng, -1.0, 1.0);
        ex.label = int(i % k);
        data.push_back(std::move(ex));
    }
    return data;
}

MLPConfig tiny_config(std::size_t dim = 3, std::size_t k = 2) {
    MLPConfig c;
    c.input_dim = dim;
    c.hidden_dims = {4};
    c.num_classes = k;
    c.activation = Activation::tanh_fn;
    c.dropout_p = 0.2;
    return c;
}

// Stub evaluator that returns a forced F1 sequence and records the model
// state it observed at each call.
struct StubEval {
    std::vector<double> values;
    std::vector<VectorClassifier::Snapshot> seen;

    std::function<double(VectorClassifier&, const VectorDataset&)> fn() {
        return [this](VectorClassifier& m, const VectorDataset&) {
            seen.push_back(m.snapshot());
            std::size_t i = seen.size() - 1;
            return values[std::min(i, values.size() - 1)];
        };
    }
};

TrainConfig quick_config(double lr = 0.01, int max_epochs = 10) {
    TrainConfig cfg;
    cfg.initial_lr = lr;
    cfg.lr_floor = 1e-12;
    cfg.decay_factor = 0.5;
    cfg.batch_size = 4;
    cfg.max_epochs = max_epochs;
    cfg.seed = 99;
    return cfg;
}

} // namespace

TEST(TrainAdaptive, RollbackRestoresWeightsAndOptimizer) {
    auto data = random_dataset(12, 3, 2, 1);
    VectorClassifier model(tiny_config(), 7);
    StubEval stub;
    stub.values = {0.5, 0.4};
    TrainConfig cfg = quick_config(0.01, 2);
    TrainState state = train_adaptive(model, data, data, cfg, stub.fn());

    EXPECT_EQ(state.rollbacks, 1);
    EXPECT_EQ(state.lr, 0.01 * 0.5);
    EXPECT_DOUBLE_EQ(state.best_val_f1, 0.5);
    ASSERT_EQ(stub.seen.size(), 2u);
    // Final model is the epoch-1 snapshot, bit for bit, optimizer included.
    EXPECT_TRUE(params_equal(model.params(), stub.seen[0].params));
    EXPECT_TRUE(adam_equal(model.adam(), stub.seen[0].adam));
    EXPECT_FALSE(params_equal(stub.seen[1].params, stub.seen[0].params));
    ASSERT_EQ(state.history.size(), 2u);
    EXPECT_TRUE(state.history[0].accepted);
    EXPECT_FALSE(state.history[1].accepted);
}

TEST(TrainAdaptive, ForcedDegradationSequence) {
    auto data = random_dataset(10, 3, 2, 2);
    VectorClassifier model(tiny_config(), 3);
    StubEval stub;
    stub.values = {0.5, 0.4, 0.45, 0.3, 0.2};
    TrainConfig cfg = quick_config(0.02, 5);
    TrainState state = train_adaptive(model, data, data, cfg, stub.fn());

    EXPECT_EQ(state.rollbacks, 4);
    EXPECT_DOUBLE_EQ(state.lr, 0.02 * 0.5 * 0.5 * 0.5 * 0.5);
    EXPECT_TRUE(params_equal(model.params(), stub.seen[0].params));
    std::vector<bool> accepted;
    for (const auto& r : state.history) accepted.push_back(r.accepted);
    EXPECT_EQ(accepted, (std::vector<bool>{true, false, false, false, false}));
    // lr in effect per epoch halves only after rejections
    EXPECT_DOUBLE_EQ(state.history[0].lr, 0.02);
    EXPECT_DOUBLE_EQ(state.history[1].lr, 0.02);
    EXPECT_DOUBLE_EQ(state.history[2].lr, 0.01);
    EXPECT_DOUBLE_EQ(state.history[3].lr, 0.005);
    EXPECT_DOUBLE_EQ(state.history[4].lr, 0.0025);
}

TEST(TrainAdaptive, MonotoneImprovementNeverDecays) {
    auto data = random_dataset(10, 3, 2, 3);
    VectorClassifier model(tiny_config(), 5);
    StubEval stub;
    for (int e = 1; e <= 8; ++e) stub.values.push_back(0.1 * e);
    TrainConfig cfg = quick_config(0.01, 8);
    TrainState state = train_adaptive(model, data, data, cfg, stub.fn());

    EXPECT_EQ(state.rollbacks, 0);
    EXPECT_DOUBLE_EQ(state.lr, 0.01);
    EXPECT_EQ(state.history.size(), 8u); // runs to max_epochs
    for (const auto& r : state.history) EXPECT_TRUE(r.accepted);
    EXPECT_TRUE(params_equal(model.params(), stub.seen.back().params));
}

// Always-degrading stub with the defaults 2e-5 / 1e-12 / 0.5 terminates in
// exactly ceil(log2(2e-5/1e-12)) = 25 rollbacks.
TEST(TrainAdaptive, TwentyFiveRollbacksToFloor) {
    auto data = random_dataset(8, 3, 2, 4);
    VectorClassifier model(tiny_config(), 11);
    StubEval stub;
    stub.values = {0.5};
    for (int k = 1; k <= 60; ++k) stub.values.push_back(0.5 - 0.001 * k);
    TrainConfig cfg = quick_config(2e-5, 100);
    TrainState state = train_adaptive(model, data, data, cfg, stub.fn());

    EXPECT_EQ(state.rollbacks, 25);
    EXPECT_EQ(state.history.size(), 26u); // 1 accepted + 25 rejected
    double expected = 2e-5;
    for (int k = 0; k < 25; ++k) expected *= 0.5;
    EXPECT_EQ(state.lr, expected);
    EXPECT_LT(state.lr, 1e-12);
    EXPECT_EQ(state.epoch, 26);
}

TEST(TrainAdaptive, LrTrajectoryIsExactPowerOfDecay) {
    auto data = random_dataset(8, 3, 2, 5);
    VectorClassifier model(tiny_config(), 13);
    StubEval stub;
    stub.values = {0.5, 0.3, 0.6, 0.2, 0.55};
    TrainConfig cfg = quick_config(2e-5, 5);
    TrainState state = train_adaptive(model, data, data, cfg, stub.fn());
    EXPECT_EQ(state.rollbacks, 3);
    EXPECT_EQ(state.lr, 2e-5 * 0.5 * 0.5 * 0.5);
    EXPECT_DOUBLE_EQ(state.best_val_f1, 0.6);
    // epoch 3 improved on 0.5, so the final model is the epoch-3 snapshot
    EXPECT_TRUE(params_equal(model.params(), stub.seen[2].params));
}

TEST(TrainAdaptive, TiesAcceptedWithoutNewSnapshot) {
    auto data = random_dataset(10, 3, 2, 6);
    VectorClassifier model(tiny_config(), 17);
    StubEval stub;
    stub.values = {0.5, 0.5, 0.4};
    TrainConfig cfg = quick_config(0.01, 3);
    TrainState state = train_adaptive(model, data, data, cfg, stub.fn());

    ASSERT_EQ(state.history.size(), 3u);
    EXPECT_TRUE(state.history[1].accepted);  // tie accepted
    EXPECT_FALSE(state.history[2].accepted); // degradation
    EXPECT_EQ(state.rollbacks, 1);
    // The rollback target is the epoch-1 snapshot, not the tied epoch 2.
    EXPECT_TRUE(params_equal(model.params(), stub.seen[0].params));
    EXPECT_FALSE(params_equal(model.params(), stub.seen[1].params));
}

TEST(TrainAdaptive, NonFiniteLossRollsBackAndDecays) {
    VectorDataset data = random_dataset(6, 3, 2, 7);
    data[2].features[0] = std::numeric_limits<double>::infinity();
    MLPConfig mc = tiny_config();
    mc.activation = Activation::identity; // lets the inf reach the loss
    VectorClassifier model(mc, 19);
    auto initial = model.snapshot();
    TrainConfig cfg = quick_config(1e-2, 50);
    cfg.lr_floor = 1e-3;
    int evals = 0;
    std::function<double(VectorClassifier&, const VectorDataset&)> never =
        [&](VectorClassifier&, const VectorDataset&) {
            ++evals;
            return 1.0;
        };
    TrainState state = train_adaptive(model, data, data, cfg, never);
    EXPECT_EQ(evals, 0) << "evaluator must not run on a non-finite epoch";
    EXPECT_EQ(state.rollbacks, 4); // 1e-2 * 0.5^4 < 1e-3
    for (const auto& r : state.history) {
        EXPECT_FALSE(r.accepted);
        EXPECT_TRUE(std::isnan(r.val_f1));
    }
    EXPECT_TRUE(params_equal(model.params(), initial.params));
}

TEST(TrainAdaptive, EmptySetsRejected) {
    auto data = random_dataset(6, 3, 2, 8);
    VectorClassifier model(tiny_config(), 23);
    StubEval stub;
    stub.values = {0.5};
    VectorDataset empty;
    EXPECT_THROW(train_adaptive(model, empty, data, quick_config(), stub.fn()), DataError);
    EXPECT_THROW(train_adaptive(model, data, empty, quick_config(), stub.fn()), DataError);
}

TEST(TrainAdaptive, ConfigValidation) {
    auto data = random_dataset(6, 3, 2, 9);
    VectorClassifier model(tiny_config(), 29);
    StubEval stub;
    stub.values = {0.5};
    TrainConfig bad = quick_config();
    bad.decay_factor = 1.0;
    EXPECT_THROW(train_adaptive(model, data, data, bad, stub.fn()), UsageError);
    bad = quick_config();
    bad.lr_floor = 1.0;
    EXPECT_THROW(train_adaptive(model, data, data, bad, stub.fn()), UsageError);
}

TEST(TrainAdaptive, DeterministicWithRealEvaluator) {
    const LabelSchema& schema = LabelSchema::task1();
    std::function<double(VectorClassifier&, const VectorDataset&)> evaluate =
        [&schema](VectorClassifier& m, const VectorDataset& d) {
            return macro_f1_on(m, d, schema);
        };
    auto run = [&]() {
        auto train_set = random_dataset(24, 4, 2, 77);
        auto val_set = random_dataset(8, 4, 2, 78);
        MLPConfig mc = tiny_config(4, 2);
        VectorClassifier model(mc, 31);
        TrainConfig cfg = quick_config(0.05, 6);
        TrainState st = train_adaptive(model, train_set, val_set, cfg, evaluate);
        return std::make_pair(model.snapshot(), st);
    };
    auto [snap_a, st_a] = run();
    auto [snap_b, st_b] = run();
    EXPECT_TRUE(params_equal(snap_a.params, snap_b.params));
    ASSERT_EQ(st_a.history.size(), st_b.history.size());
    for (std::size_t i = 0; i < st_a.history.size(); ++i) {
        EXPECT_EQ(st_a.history[i].lr, st_b.history[i].lr);
        EXPECT_EQ(st_a.history[i].val_f1, st_b.history[i].val_f1);
        EXPECT_EQ(st_a.history[i].accepted, st_b.history[i].accepted);
    }
}

TEST(TrainAdaptive, AcceptedBestNonDecreasing) {
    auto data = random_dataset(8, 3, 2, 10);
    VectorClassifier model(tiny_config(), 37);
    StubEval stub;
    rng::Engine eng(123);
    for (int i = 0; i < 30; ++i) stub.values.push_back(rng::uniform_unit(eng));
    TrainConfig cfg = quick_config(0.01, 30);
    cfg.lr_floor = 1e-10;
    TrainState state = train_adaptive(model, data, data, cfg, stub.fn());
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& r : state.history) {
        if (r.accepted) {
            EXPECT_GE(r.val_f1, best);
            best = std::max(best, r.val_f1);
        }
    }
    EXPECT_DOUBLE_EQ(best, state.best_val_f1);
}

TEST(TrainEarlystop, StopsAfterPatienceRunOut) {
    auto data = random_dataset(10, 3, 2, 11);
    VectorClassifier model(tiny_config(), 41);
    StubEval stub;
    stub.values = {0.6, 0.5, 0.5};
    TrainConfig cfg = quick_config(0.01, 50);
    TrainState state = train_earlystop(model, data, data, cfg, 2, stub.fn());
    EXPECT_EQ(state.history.size(), 3u); // stops after epoch 3
    EXPECT_DOUBLE_EQ(state.best_val_f1, 0.6);
    EXPECT_TRUE(params_equal(model.params(), stub.seen[0].params));
}

TEST(TrainEarlystop, PatienceBeyondMaxEpochsRunsAll) {
    auto data = random_dataset(10, 3, 2, 12);
    VectorClassifier model(tiny_config(), 43);
    StubEval stub;
    stub.values = {0.5, 0.4, 0.4, 0.4, 0.4};
    TrainConfig cfg = quick_config(0.01, 5);
    TrainState state = train_earlystop(model, data, data, cfg, 100, stub.fn());
    EXPECT_EQ(state.history.size(), 5u);
}

TEST(TrainEarlystop, ImprovingStubNeverStopsEarly) {
    auto data = random_dataset(10, 3, 2, 13);
    VectorClassifier model(tiny_config(), 47);
    StubEval stub;
    for (int e = 1; e <= 6; ++e) stub.values.push_back(0.1 * e);
    TrainConfig cfg = quick_config(0.01, 6);
    TrainState state = train_earlystop(model, data, data, cfg, 1, stub.fn());
    EXPECT_EQ(state.history.size(), 6u);
    EXPECT_TRUE(params_equal(model.params(), stub.seen.back().params));
}

TEST(TrainEarlystop, PatienceValidation) {
    auto data = random_dataset(6, 3, 2, 14);
    VectorClassifier model(tiny_config(), 53);
    StubEval stub;
    stub.values = {0.5};
    EXPECT_THROW(train_earlystop(model, data, data, quick_config(), 0, stub.fn()), UsageError);
}

TEST(HistoryCsv, WritesScheduleRows) {
    testutil::TempDir tmp;
    std::vector<EpochRecord> history = {{1, 2e-5, 0.5, true}, {2, 2e-5, 0.4, false}};
    write_history_csv(history, tmp.file("h.csv"));
    std::string content = testutil::read_file(tmp.file("h.csv"));
    EXPECT_EQ(content, "epoch,lr,val_f1,accepted\n1,2e-05,0.5,1\n2,2e-05,0.4,0\n");
}

// ---------------------------------------------------------------------------
// Fusion classifier + regimes.

namespace {

SampleDataset token_dataset(const std::string& lang_tag, Task task, int per_class,
                            std::uint64_t seed) {
    const LabelSchema& schema = LabelSchema::for_task(task);
    rng::Engine eng(seed);
    std::vector<std::string> filler = {"alpha", "beta", "gamma", "delta", "epsilon", "zeta"};
    SampleDataset out;
    int id = 0;
    for (int c = 0; c < int(schema.size()); ++c) {
        for (int i = 0; i < per_class; ++i) {
            Sample s;
            s.id = lang_tag + std::to_string(id++);
            s.text = filler[rng::uniform_u64(eng, filler.size())] + " class" +
                     std::to_string(c) + lang_tag + " " +
                     filler[rng::uniform_u64(eng, filler.size())];
            s.label = c;
            out.push_back(std::move(s));
        }
    }
    rng::shuffle(out, eng);
    return out;
}

std::shared_ptr<FusionClassifier> make_text_model(std::uint64_t seed, Task task,
                                                  EncoderMode mode = EncoderMode::frozen) {
    std::shared_ptr<TextEncoder> enc;
    if (mode == EncoderMode::finetune)
        enc = std::make_shared<HashingEncoder>(64, 16, rng::mix(seed, 5));
    else
        enc = std::make_shared<HashingEncoder>(64);
    MLPConfig mc;
    mc.input_dim = enc->dim();
    mc.hidden_dims = {16, 8};
    mc.num_classes = LabelSchema::for_task(task).size();
    mc.activation = Activation::tanh_fn;
    mc.dropout_p = 0.1;
    return std::make_shared<FusionClassifier>(enc, nullptr, std::set<Channel>{Channel::text},
                                              mc, seed, mode);
}

bool snapshots_equal(const FusionClassifier::Snapshot& a, const FusionClassifier::Snapshot& b) {
    if (!params_equal(a.params, b.params)) return false;
    if (a.encoder_params.size() != b.encoder_params.size()) return false;
    for (std::size_t i = 0; i < a.encoder_params.size(); ++i)
        if (!bit_equal(a.encoder_params[i], b.encoder_params[i])) return false;
    if (a.adam.t != b.adam.t) return false;
    for (std::size_t i = 0; i < a.adam.m.size(); ++i)
        if (!bit_equal(a.adam.m[i], b.adam.m[i]) || !bit_equal(a.adam.v[i], b.adam.v[i]))
            return false;
    return true;
}

} // namespace

TEST(FusionClassifier, LearnsSeparableTokens) {
    auto data = token_dataset("en", Task::task1, 30, 61);
    auto [train_set, val_set] = stratified_split_samples(data, 0.2, 3);
    auto model = make_text_model(71, Task::task1);
    TrainConfig cfg = quick_config(0.02, 15);
    const LabelSchema& schema = LabelSchema::task1();
    std::function<double(FusionClassifier&, const SampleDataset&)> evaluate =
        [&schema](FusionClassifier& m, const SampleDataset& d) {
            return macro_f1_on(m, d, schema);
        };
    TrainState st = train_adaptive(*model, train_set, val_set, cfg, evaluate);
    EXPECT_GE(st.best_val_f1, 0.9);
}

TEST(FusionClassifier, FinetuneRollbackRestoresEncoder) {
    auto data = token_dataset("en", Task::task1, 10, 62);
    auto model = make_text_model(73, Task::task1, EncoderMode::finetune);
    std::vector<FusionClassifier::Snapshot> seen;
    std::vector<double> values = {0.5, 0.4};
    std::function<double(FusionClassifier&, const SampleDataset&)> stub =
        [&](FusionClassifier& m, const SampleDataset&) {
            seen.push_back(m.snapshot());
            return values[std::min(seen.size() - 1, values.size() - 1)];
        };
    TrainConfig cfg = quick_config(0.01, 2);
    train_adaptive(*model, data, data, cfg, stub);
    ASSERT_EQ(seen.size(), 2u);
    EXPECT_FALSE(snapshots_equal(seen[1], seen[0])); // finetune moved the encoder
    EXPECT_TRUE(snapshots_equal(model->snapshot(), seen[0]));
}

TEST(FusionClassifier, FinetuneRequiresTrainableEncoder) {
    auto enc = std::make_shared<HashingEncoder>(32);
    MLPConfig mc;
    mc.input_dim = 32;
    mc.hidden_dims = {8};
    mc.num_classes = 2;
    EXPECT_THROW(FusionClassifier(enc, nullptr, {Channel::text}, mc, 1, EncoderMode::finetune),
                 DataError);
}

TEST(FusionClassifier, FinetuneMovesEncoderParameters) {
    auto data = token_dataset("en", Task::task1, 10, 63);
    auto model = make_text_model(79, Task::task1, EncoderMode::finetune);
    auto before = model->snapshot();
    rng::Engine eng(5);
    model->train_epoch(data, eng, 0.05, 8);
    auto after = model->snapshot();
    ASSERT_EQ(before.encoder_params.size(), 1u);
    EXPECT_FALSE(bit_equal(after.encoder_params[0], before.encoder_params[0]));
}

TEST(RunRegime, MonoTrainsOneModelPerLanguage) {
    std::map<Lang, SampleDataset> data = {{Lang::en, token_dataset("en", Task::task1, 12, 64)},
                                          {Lang::de, token_dataset("de", Task::task1, 12, 65)},
                                          {Lang::hi, token_dataset("hi", Task::task1, 12, 66)}};
    TrainConfig cfg = quick_config(0.02, 3);
    cfg.regime = Regime::mono;
    std::size_t total_trained = 0;
    for (Task task : {Task::task1, Task::task2}) {
        std::map<Lang, SampleDataset> task_data;
        for (auto& [lang, d] : data)
            task_data[lang] = token_dataset(to_string(lang), task, 8, 67);
        auto result = run_regime(task, {Lang::en, Lang::de, Lang::hi}, task_data, cfg,
                                 [&](std::uint64_t seed) { return make_text_model(seed, task); });
        EXPECT_EQ(result.trained_count, 3u);
        EXPECT_NE(result.models.at(Lang::en).get(), result.models.at(Lang::de).get());
        total_trained += result.trained_count;
    }
    EXPECT_EQ(total_trained, 6u); // six separate models in mono mode
}

TEST(RunRegime, MultiTrainsOneSharedModelPerTask) {
    TrainConfig cfg = quick_config(0.02, 3);
    cfg.regime = Regime::multi;
    std::size_t total_trained = 0;
    for (Task task : {Task::task1, Task::task2}) {
        std::map<Lang, SampleDataset> task_data = {
            {Lang::en, token_dataset("en", task, 8, 68)},
            {Lang::de, token_dataset("de", task, 8, 69)},
            {Lang::hi, token_dataset("hi", task, 8, 70)}};
        auto result = run_regime(task, {Lang::en, Lang::de, Lang::hi}, task_data, cfg,
                                 [&](std::uint64_t seed) { return make_text_model(seed, task); });
        EXPECT_EQ(result.trained_count, 1u);
        EXPECT_EQ(result.models.at(Lang::en).get(), result.models.at(Lang::de).get());
        EXPECT_EQ(result.models.at(Lang::en).get(), result.models.at(Lang::hi).get());
        total_trained += result.trained_count;
    }
    EXPECT_EQ(total_trained, 2u); // only two models in multilingual mode
}

TEST(RunRegime, SingleLanguageMonoEqualsMulti) {
    std::map<Lang, SampleDataset> data = {{Lang::en, token_dataset("en", Task::task1, 10, 71)}};
    TrainConfig mono_cfg = quick_config(0.02, 3);
    mono_cfg.regime = Regime::mono;
    TrainConfig multi_cfg = mono_cfg;
    multi_cfg.regime = Regime::multi;
    auto factory = [&](std::uint64_t seed) { return make_text_model(seed, Task::task1); };
    auto mono = run_regime(Task::task1, {Lang::en}, data, mono_cfg, factory);
    auto multi = run_regime(Task::task1, {Lang::en}, data, multi_cfg, factory);
    EXPECT_TRUE(snapshots_equal(mono.models.at(Lang::en)->snapshot(),
                                multi.models.at(Lang::en)->snapshot()));
}

TEST(RunRegime, MissingCorpusIsError) {
    std::map<Lang, SampleDataset> data = {{Lang::en, token_dataset("en", Task::task1, 8, 72)}};
    TrainConfig cfg = quick_config(0.02, 2);
    EXPECT_THROW(run_regime(Task::task1, {Lang::en, Lang::de}, data, cfg,
                            [&](std::uint64_t seed) { return make_text_model(seed, Task::task1); }),
                 DataError);
}
