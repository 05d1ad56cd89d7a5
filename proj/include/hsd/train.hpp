#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "hsd/encode.hpp"
#include "hsd/errors.hpp"
#include "hsd/eval.hpp"
#include "hsd/ingest.hpp"
#include "hsd/mlp.hpp"
#include "hsd/preprocess.hpp"
#include "hsd/rng.hpp"
#include "hsd/segmenter.hpp"

namespace hsd {

enum class OptimizerKind { adam, sgd };
enum class Regime { mono, multi };
enum class EncoderMode { frozen, finetune };

inline std::string to_string(OptimizerKind o) { return o == OptimizerKind::adam ? "adam" : "sgd"; }
inline std::string to_string(Regime r) { return r == Regime::mono ? "mono" : "multi"; }
inline std::string to_string(EncoderMode m) { return m == EncoderMode::frozen ? "frozen" : "finetune"; }

inline Regime parse_regime(std::string_view s) {
    if (s == "mono") return Regime::mono;
    if (s == "multi") return Regime::multi;
    throw UsageError("unknown regime '" + std::string(s) + "'");
}

inline EncoderMode parse_encoder_mode(std::string_view s) {
    if (s == "frozen") return EncoderMode::frozen;
    if (s == "finetune") return EncoderMode::finetune;
    throw UsageError("unknown encoder mode '" + std::string(s) + "'");
}

struct TrainConfig {
    double initial_lr = 2e-5;
    double lr_floor = 1e-12;
    double decay_factor = 0.5;
    std::size_t batch_size = 32; // 200 for the Perspective MLPs
    int max_epochs = 100;
    double dropout_p = 0.2;
    double adam_eps = 1e-8; // "tuned" preset: 1e-7
    std::uint64_t seed = 13;
    double val_fraction = 0.1;
    Regime regime = Regime::mono;
    EncoderMode encoder_mode = EncoderMode::frozen;
    std::set<Channel> channels = {Channel::text, Channel::hashtag, Channel::emoji};

    void validate() const {
        if (!(decay_factor > 0.0 && decay_factor < 1.0))
            throw UsageError("decay_factor must be in (0,1)");
        if (!(lr_floor < initial_lr)) throw UsageError("lr_floor must be below initial_lr");
        if (initial_lr <= 0.0) throw UsageError("initial_lr must be positive");
        if (batch_size == 0) throw UsageError("batch_size must be positive");
        if (max_epochs < 1) throw UsageError("max_epochs must be at least 1");
        if (!(val_fraction > 0.0 && val_fraction < 1.0))
            throw UsageError("val_fraction must be in (0,1)");
    }
};

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0; // learning rate in effect during the epoch
    double val_f1 = 0.0;
    bool accepted = false;
};

struct TrainState {
    double best_val_f1 = -std::numeric_limits<double>::infinity();
    double lr = 0.0;
    int epoch = 0;
    int rollbacks = 0;
    std::vector<EpochRecord> history;
};

inline void write_history_csv(const std::vector<EpochRecord>& history,
                              const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write history file '" + path + "'");
    out << "epoch,lr,val_f1,accepted\n";
    char buf[64];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%d,%.12g,%.12g,%d", r.epoch, r.lr, r.val_f1,
                      r.accepted ? 1 : 0);
        out << buf << '\n';
    }
}

// ---------------------------------------------------------------------------
// Concrete trainable classifiers. Both expose the same surface the trainers
// need: train_epoch / predict_label / snapshot / restore.

struct VectorExample {
    std::vector<double> features;
    int label = -1;
};
using VectorDataset = std::vector<VectorExample>;

// MLP over fixed feature vectors (Perspective features, desk-scale tests).
class VectorClassifier {
public:
    struct Snapshot {
        ModelParams params;
        AdamState adam;
    };

    VectorClassifier(MLPConfig config, std::uint64_t seed,
                     OptimizerKind optimizer = OptimizerKind::adam, double adam_eps = 1e-8)
        : config_(std::move(config)), params_(init_params(config_, seed)),
          optimizer_(optimizer),
          adam_(AdamState::shaped_like(params_.pointers(), adam_eps)) {}

    const MLPConfig& config() const { return config_; }
    ModelParams& params() { return params_; }
    const ModelParams& params() const { return params_; }
    AdamState& adam() { return adam_; }

    Snapshot snapshot() const { return {params_, adam_}; }
    void restore(const Snapshot& snap) {
        params_ = snap.params;
        adam_ = snap.adam;
    }

    double train_epoch(const VectorDataset& data, rng::Engine& eng, double lr,
                       std::size_t batch_size) {
        std::vector<std::size_t> order(data.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng::shuffle(order, eng);
        double total_loss = 0.0;
        auto grads = zero_like(params_);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            std::size_t end = std::min(order.size(), start + batch_size);
            for (auto& g : grads) g.fill(0.0);
            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const auto& ex = data[order[k]];
                std::uint64_t dropout_seed = eng();
                ForwardCache cache;
                auto logits =
                    forward(params_, ex.features, config_, Mode::train, dropout_seed, &cache);
                auto [loss, dlogits] = softmax_xent(logits, static_cast<std::size_t>(ex.label));
                batch_loss += loss;
                backward(params_, config_, cache, dlogits, grads);
            }
            if (!std::isfinite(batch_loss)) return std::numeric_limits<double>::quiet_NaN();
            double inv = 1.0 / static_cast<double>(end - start);
            for (auto& g : grads)
                for (double& x : g.data) x *= inv;
            std::vector<Tensor*> gptrs;
            for (auto& g : grads) gptrs.push_back(&g);
            if (optimizer_ == OptimizerKind::adam)
                adam_step(params_.pointers(), gptrs, adam_, lr);
            else
                sgd_step(params_.pointers(), gptrs, lr);
            total_loss += batch_loss;
        }
        return total_loss / static_cast<double>(data.size());
    }

    int predict_label(const VectorExample& ex) const {
        return predict(params_, ex.features, config_).label;
    }
    Prediction predict_full(const VectorExample& ex) const {
        return predict(params_, ex.features, config_);
    }

private:
    MLPConfig config_;
    ModelParams params_;
    OptimizerKind optimizer_;
    AdamState adam_;
};

// One preprocessed tweet ready for the fusion classifier.
struct Sample {
    std::string id;
    std::string text; // cleaned text
    std::vector<std::vector<std::string>> segmented_hashtags;
    std::vector<std::string> emojis;
    int label = -1;
};
using SampleDataset = std::vector<Sample>;

// Fusion model: fused channel features -> classifier head. In finetune mode
// the text-channel gradient flows into the encoder's parameter group and the
// same optimizer updates it jointly with the head.
class FusionClassifier {
public:
    struct Snapshot {
        ModelParams params;
        std::vector<Tensor> encoder_params;
        AdamState adam;
    };

    FusionClassifier(std::shared_ptr<TextEncoder> encoder,
                     std::shared_ptr<const EmojiLexicon> emoji_lexicon,
                     std::set<Channel> channels, MLPConfig head_config, std::uint64_t seed,
                     EncoderMode mode = EncoderMode::frozen,
                     OptimizerKind optimizer = OptimizerKind::adam, double adam_eps = 1e-8)
        : encoder_(std::move(encoder)),
          emoji_lexicon_(emoji_lexicon ? std::move(emoji_lexicon)
                                       : std::make_shared<const EmojiLexicon>()),
          channels_(std::move(channels)), config_(std::move(head_config)),
          params_(init_params(config_, seed)), mode_(mode), optimizer_(optimizer) {
        if (!channels_.count(Channel::text))
            throw DataError("FusionClassifier: the text channel is required");
        if (channels_.count(Channel::emoji) && emoji_lexicon_->dim == 0)
            throw DataError("FusionClassifier: emoji channel enabled but no emoji lexicon");
        std::size_t want = fused_dim(*encoder_, *emoji_lexicon_, channels_);
        if (config_.input_dim != want)
            throw DataError("FusionClassifier: head input_dim " +
                            std::to_string(config_.input_dim) + " != fused width " +
                            std::to_string(want));
        if (mode_ == EncoderMode::finetune && !encoder_->trainable())
            throw DataError("FusionClassifier: finetune requested but the encoder has no "
                            "trainable parameters");
        adam_ = AdamState::shaped_like(parameter_group(), adam_eps);
    }

    const MLPConfig& config() const { return config_; }
    const ModelParams& params() const { return params_; }
    TextEncoder& encoder() { return *encoder_; }
    const TextEncoder& encoder() const { return *encoder_; }
    const std::set<Channel>& channels() const { return channels_; }
    const EmojiLexicon& emoji_lexicon() const { return *emoji_lexicon_; }

    FusedFeatures featurize(const Sample& sample) const {
        TweetParts parts;
        parts.cleaned_text = sample.text;
        parts.segmented_hashtags = sample.segmented_hashtags;
        parts.emojis = sample.emojis;
        return fuse(parts, *encoder_, *emoji_lexicon_, channels_);
    }

    Snapshot snapshot() const {
        Snapshot s{params_, {}, adam_};
        for (const Tensor* t : encoder_->parameters()) s.encoder_params.push_back(*t);
        return s;
    }

    void restore(const Snapshot& snap) {
        params_ = snap.params;
        adam_ = snap.adam;
        auto eps = encoder_->parameters();
        if (eps.size() != snap.encoder_params.size())
            throw DataError("FusionClassifier: snapshot encoder group size mismatch");
        for (std::size_t i = 0; i < eps.size(); ++i) *eps[i] = snap.encoder_params[i];
    }

    double train_epoch(const SampleDataset& data, rng::Engine& eng, double lr,
                       std::size_t batch_size) {
        const bool tune = mode_ == EncoderMode::finetune;
        std::vector<std::size_t> order(data.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng::shuffle(order, eng);
        double total_loss = 0.0;
        auto grads = zero_like(params_);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            std::size_t end = std::min(order.size(), start + batch_size);
            for (auto& g : grads) g.fill(0.0);
            if (tune) encoder_->zero_grad();
            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const auto& ex = data[order[k]];
                auto features = featurize(ex);
                std::uint64_t dropout_seed = eng();
                ForwardCache cache;
                auto logits = forward(params_, features.vector, config_, Mode::train,
                                      dropout_seed, &cache);
                auto [loss, dlogits] = softmax_xent(logits, static_cast<std::size_t>(ex.label));
                batch_loss += loss;
                auto dx = backward(params_, config_, cache, dlogits, grads);
                if (tune) {
                    // Only the cleaned-text channel backpropagates into the
                    // encoder; hashtag embeddings are treated as constants.
                    std::span<const double> text_slice(dx.data(), encoder_->dim());
                    encoder_->accumulate_grad(ex.text, text_slice);
                }
            }
            if (!std::isfinite(batch_loss)) return std::numeric_limits<double>::quiet_NaN();
            double inv = 1.0 / static_cast<double>(end - start);
            for (auto& g : grads)
                for (double& x : g.data) x *= inv;
            if (tune)
                for (Tensor* g : encoder_->gradients())
                    for (double& x : g->data) x *= inv;
            std::vector<Tensor*> gptrs;
            for (auto& g : grads) gptrs.push_back(&g);
            if (tune)
                for (Tensor* g : encoder_->gradients()) gptrs.push_back(g);
            if (optimizer_ == OptimizerKind::adam)
                adam_step(parameter_group(), gptrs, adam_, lr);
            else
                sgd_step(parameter_group(), gptrs, lr);
            total_loss += batch_loss;
        }
        return total_loss / static_cast<double>(data.size());
    }

    int predict_label(const Sample& ex) const {
        return predict(params_, featurize(ex).vector, config_).label;
    }
    Prediction predict_full(const Sample& ex) const {
        return predict(params_, featurize(ex).vector, config_);
    }

private:
    std::vector<Tensor*> parameter_group() {
        auto group = params_.pointers();
        if (mode_ == EncoderMode::finetune)
            for (Tensor* t : encoder_->parameters()) group.push_back(t);
        return group;
    }

    std::shared_ptr<TextEncoder> encoder_;
    std::shared_ptr<const EmojiLexicon> emoji_lexicon_;
    std::set<Channel> channels_;
    MLPConfig config_;
    ModelParams params_;
    EncoderMode mode_;
    OptimizerKind optimizer_;
    AdamState adam_;
};

template <typename Model, typename Dataset>
double macro_f1_on(Model& model, const Dataset& data, const LabelSchema& schema) {
    std::vector<int> gold, pred;
    gold.reserve(data.size());
    pred.reserve(data.size());
    for (const auto& ex : data) {
        gold.push_back(ex.label);
        pred.push_back(model.predict_label(ex));
    }
    return macro_f1(gold, pred, schema);
}

// ---------------------------------------------------------------------------
// Validation-F1-driven scheduling with checkpoint rollback: after each epoch
// the validation macro F1 is compared against the best accepted value. A
// degradation restores model weights AND optimizer moments from the best
// snapshot and scales the learning rate by decay_factor; training stops when
// the rate falls below lr_floor. Ties are accepted without re-snapshotting.

template <typename Model, typename Dataset>
TrainState train_adaptive(Model& model, const Dataset& train_data, const Dataset& val_data,
                          const TrainConfig& config,
                          std::function<double(Model&, const Dataset&)> evaluate) {
    config.validate();
    if (train_data.empty()) throw DataError("train_adaptive: empty training set");
    if (val_data.empty()) throw DataError("train_adaptive: empty validation set");

    TrainState state;
    state.lr = config.initial_lr;
    rng::Engine eng(config.seed);
    auto best = model.snapshot();
    for (int epoch = 1; epoch <= config.max_epochs && state.lr >= config.lr_floor; ++epoch) {
        state.epoch = epoch;
        const double lr_used = state.lr;
        double loss = model.train_epoch(train_data, eng, lr_used, config.batch_size);
        double f1 = std::numeric_limits<double>::quiet_NaN();
        bool degraded = true;
        if (std::isfinite(loss)) {
            f1 = evaluate(model, val_data);
            degraded = !(f1 >= state.best_val_f1);
        }
        if (degraded) {
            model.restore(best);
            state.lr *= config.decay_factor;
            state.rollbacks += 1;
            state.history.push_back({epoch, lr_used, f1, false});
        } else {
            if (f1 > state.best_val_f1) {
                state.best_val_f1 = f1;
                best = model.snapshot();
            }
            state.history.push_back({epoch, lr_used, f1, true});
        }
    }
    model.restore(best);
    return state;
}

// Plain early stopping on validation macro F1 at a constant learning rate;
// stops after `patience` consecutive epochs without strict improvement.
template <typename Model, typename Dataset>
TrainState train_earlystop(Model& model, const Dataset& train_data, const Dataset& val_data,
                           const TrainConfig& config, int patience,
                           std::function<double(Model&, const Dataset&)> evaluate) {
    config.validate();
    if (patience < 1) throw UsageError("train_earlystop: patience must be >= 1");
    if (train_data.empty()) throw DataError("train_earlystop: empty training set");
    if (val_data.empty()) throw DataError("train_earlystop: empty validation set");

    TrainState state;
    state.lr = config.initial_lr;
    rng::Engine eng(config.seed);
    auto best = model.snapshot();
    int bad_streak = 0;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        state.epoch = epoch;
        double loss = model.train_epoch(train_data, eng, state.lr, config.batch_size);
        double f1 = std::numeric_limits<double>::quiet_NaN();
        if (std::isfinite(loss)) f1 = evaluate(model, val_data);
        bool improved = f1 > state.best_val_f1;
        if (improved) {
            state.best_val_f1 = f1;
            best = model.snapshot();
            bad_streak = 0;
        } else {
            ++bad_streak;
        }
        state.history.push_back({epoch, state.lr, f1, improved});
        if (bad_streak >= patience) break;
    }
    model.restore(best);
    return state;
}

// ---------------------------------------------------------------------------
// Regime driver.

inline std::pair<SampleDataset, SampleDataset> stratified_split_samples(
    const SampleDataset& data, double val_fraction, std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].label < 0)
            throw DataError("stratified_split_samples: unlabeled sample '" + data[i].id + "'");
        by_class[data[i].label].push_back(i);
    }
    std::vector<bool> in_val(data.size(), false);
    rng::Engine eng(seed);
    for (auto& [label, indices] : by_class) {
        if (indices.size() < 2) continue;
        rng::shuffle(indices, eng);
        auto n_val = static_cast<std::size_t>(
            std::llround(val_fraction * static_cast<double>(indices.size())));
        n_val = std::min(n_val, indices.size());
        for (std::size_t k = 0; k < n_val; ++k) in_val[indices[k]] = true;
    }
    SampleDataset train, val;
    for (std::size_t i = 0; i < data.size(); ++i)
        (in_val[i] ? val : train).push_back(data[i]);
    return {std::move(train), std::move(val)};
}

// Seed derived from the participating languages and the task, so that a
// multi run over one language is identical to the mono run on it.
inline std::uint64_t regime_seed(std::uint64_t base, const std::vector<Lang>& languages,
                                 Task task) {
    std::string key;
    for (std::size_t i = 0; i < languages.size(); ++i) {
        if (i) key += '+';
        key += to_string(languages[i]);
    }
    key += ':';
    key += to_string(task);
    return base + rng::fnv1a64(key);
}

struct RegimeResult {
    std::map<Lang, std::shared_ptr<FusionClassifier>> models;
    std::map<Lang, TrainState> states; // keyed by the language a model serves
    std::map<Lang, double> val_f1;     // per-language validation macro F1
    std::size_t trained_count = 0;
};

using FusionModelFactory =
    std::function<std::shared_ptr<FusionClassifier>(std::uint64_t seed)>;

// mono: one model per listed language; multi: one model on the aggregated
// training splits, shared by every listed language and scored against each
// language's own validation split.
inline RegimeResult run_regime(Task task, const std::vector<Lang>& languages,
                               const std::map<Lang, SampleDataset>& data,
                               const TrainConfig& config, const FusionModelFactory& make_model) {
    config.validate();
    if (languages.empty()) throw UsageError("run_regime: no languages given");
    for (Lang l : languages)
        if (!data.count(l))
            throw DataError("run_regime: missing corpus for language " + to_string(l));

    const LabelSchema& schema = LabelSchema::for_task(task);
    auto evaluate = [&schema](FusionClassifier& m, const SampleDataset& d) {
        return macro_f1_on(m, d, schema);
    };

    RegimeResult result;
    if (config.regime == Regime::mono) {
        for (Lang lang : languages) {
            std::uint64_t seed = regime_seed(config.seed, {lang}, task);
            TrainConfig cfg = config;
            cfg.seed = seed;
            auto [train_set, val_set] =
                stratified_split_samples(data.at(lang), config.val_fraction, seed);
            auto model = make_model(seed);
            result.states[lang] = train_adaptive<FusionClassifier, SampleDataset>(
                *model, train_set, val_set, cfg, evaluate);
            result.val_f1[lang] = macro_f1_on(*model, val_set, schema);
            result.models[lang] = std::move(model);
            result.trained_count += 1;
        }
    } else {
        std::uint64_t seed = regime_seed(config.seed, languages, task);
        TrainConfig cfg = config;
        cfg.seed = seed;
        SampleDataset agg_train, agg_val;
        std::map<Lang, SampleDataset> val_by_lang;
        for (Lang lang : languages) {
            auto [train_set, val_set] =
                stratified_split_samples(data.at(lang), config.val_fraction, seed);
            agg_train.insert(agg_train.end(), train_set.begin(), train_set.end());
            agg_val.insert(agg_val.end(), val_set.begin(), val_set.end());
            val_by_lang[lang] = std::move(val_set);
        }
        auto model = make_model(seed);
        TrainState st = train_adaptive<FusionClassifier, SampleDataset>(*model, agg_train,
                                                                        agg_val, cfg, evaluate);
        for (Lang lang : languages) {
            result.models[lang] = model;
            result.states[lang] = st;
            result.val_f1[lang] = macro_f1_on(*model, val_by_lang.at(lang), schema);
        }
        result.trained_count += 1;
    }
    return result;
}

// Preprocess + segment + label-extract one corpus into classifier samples.
inline SampleDataset build_samples(const Corpus& corpus, Task task,
                                   const SegmenterLexicon& lexicon,
                                   const CleanerOptions& options = {},
                                   bool require_labels = true) {
    SampleDataset out;
    out.reserve(corpus.records.size());
    for (const auto& rec : corpus.records) {
        TweetParts parts = decompose(rec.text, rec.language, options);
        Sample s;
        s.id = rec.id;
        s.text = parts.cleaned_text;
        for (const auto& tag : parts.hashtags)
            s.segmented_hashtags.push_back(segment_hashtag(tag, lexicon));
        s.emojis = parts.emojis;
        auto label = rec.label(task);
        if (label) {
            s.label = *label;
        } else if (require_labels) {
            throw DataError("record '" + rec.id + "' is unlabeled for " + to_string(task));
        }
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace hsd
