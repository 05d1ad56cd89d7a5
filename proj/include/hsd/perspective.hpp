#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "hsd/digest.hpp"
#include "hsd/errors.hpp"
#include "hsd/ingest.hpp"
#include "hsd/preprocess.hpp"
#include "hsd/train.hpp"

namespace hsd {

// ---------------------------------------------------------------------------
// Attribute sets and vector layout.

enum class PerspectiveMode { en, de, shared };

inline std::string to_string(PerspectiveMode m) {
    switch (m) {
        case PerspectiveMode::en: return "en";
        case PerspectiveMode::de: return "de";
        case PerspectiveMode::shared: return "shared";
    }
    return "?";
}

inline PerspectiveMode parse_perspective_mode(std::string_view s) {
    if (s == "en") return PerspectiveMode::en;
    if (s == "de") return PerspectiveMode::de;
    if (s == "shared") return PerspectiveMode::shared;
    throw UsageError("unknown perspective mode '" + std::string(s) + "'");
}

// Attributes available for both languages (alphabetical).
inline const std::vector<std::string>& perspective_common_attributes() {
    static const std::vector<std::string> a = {"IDENTITY_ATTACK",  "INSULT", "PROFANITY",
                                               "SEVERE_TOXICITY", "THREAT", "TOXICITY"};
    return a;
}

// English adds SEXUALLY_EXPLICIT, OBSCENE and TOXICITY_FAST.
inline const std::vector<std::string>& perspective_attributes(Lang language) {
    static const std::vector<std::string> en = {
        "IDENTITY_ATTACK", "INSULT",           "OBSCENE", "PROFANITY", "SEVERE_TOXICITY",
        "SEXUALLY_EXPLICIT", "THREAT",         "TOXICITY", "TOXICITY_FAST"};
    if (language == Lang::en) return en;
    if (language == Lang::de) return perspective_common_attributes();
    throw UnsupportedLanguageError("the Perspective API does not support Hindi");
}

inline const std::vector<std::string>& perspective_mode_attributes(PerspectiveMode mode) {
    switch (mode) {
        case PerspectiveMode::en: return perspective_attributes(Lang::en);
        case PerspectiveMode::de: return perspective_attributes(Lang::de);
        case PerspectiveMode::shared: return perspective_common_attributes();
    }
    return perspective_common_attributes();
}

enum class TextVariant { full, cleaned };

inline std::string to_string(TextVariant v) {
    return v == TextVariant::full ? "full" : "cleaned";
}

struct VectorLayout {
    std::vector<std::pair<TextVariant, std::string>> slots;

    bool operator==(const VectorLayout&) const = default;

    nlohmann::json json() const {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& [variant, attr] : slots)
            out.push_back({{"variant", to_string(variant)}, {"attribute", attr}});
        return out;
    }
};

// Fixed layout: every attribute of the full tweet (alphabetical), then every
// attribute of the cleaned text (alphabetical). 18 slots for en, 12 for de
// and for the language-shared mode.
inline VectorLayout perspective_layout(PerspectiveMode mode) {
    VectorLayout layout;
    for (TextVariant v : {TextVariant::full, TextVariant::cleaned})
        for (const auto& attr : perspective_mode_attributes(mode))
            layout.slots.emplace_back(v, attr);
    return layout;
}

using PerspectiveScores = std::map<std::string, double>;

struct PerspectiveVector {
    std::vector<double> values;
    VectorLayout layout;
};

// Canned scoring used by the bundled mock server: depends only on
// (text, attribute), so mock-backed runs are reproducible.
inline double mock_summary_score(std::string_view text, std::string_view attribute) {
    std::string key(attribute);
    key += '|';
    key += text;
    return static_cast<double>(rng::fnv1a64(key) % 10000) / 9999.0;
}

// ---------------------------------------------------------------------------
// HTTP client with retry, backoff and a request-rate ceiling.

struct PerspectiveClientConfig {
    std::string base_url = "https://commentanalyzer.googleapis.com";
    std::string api_key;
    double requests_per_second = 1.0;
    int max_in_flight = 1;
    int max_attempts = 5;
    double backoff_base_seconds = 1.0;
    double backoff_factor = 2.0;
};

class PerspectiveClient {
public:
    explicit PerspectiveClient(PerspectiveClientConfig config) : config_(std::move(config)) {
        if (config_.requests_per_second <= 0.0)
            throw UsageError("requests_per_second must be positive");
        if (config_.max_attempts < 1) throw UsageError("max_attempts must be >= 1");
        if (config_.max_in_flight < 1) throw UsageError("max_in_flight must be >= 1");
    }

    // One request per text; summary score per requested attribute.
    PerspectiveScores score_text(std::string_view text, Lang language,
                                 const std::vector<std::string>& attributes) {
        if (language == Lang::hi)
            throw UnsupportedLanguageError("the Perspective API does not support Hindi");

        nlohmann::json body = {{"comment", {{"text", std::string(text)}}},
                               {"languages", {to_string(language)}},
                               {"requestedAttributes", nlohmann::json::object()}};
        for (const auto& attr : attributes) body["requestedAttributes"][attr] = nlohmann::json::object();

        std::string path = "/v1alpha1/comments:analyze";
        if (!config_.api_key.empty()) path += "?key=" + config_.api_key;

        httplib::Client cli(config_.base_url);
        cli.set_connection_timeout(10);
        cli.set_read_timeout(30);

        int last_status = 0;
        for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
            if (attempt > 1) {
                double delay = config_.backoff_base_seconds *
                               std::pow(config_.backoff_factor, attempt - 2);
                std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            }
            throttle();
            InFlightSlot slot(*this);
            {
                std::lock_guard<std::mutex> lock(mutex_);
                ++requests_made_;
            }
            auto res = cli.Post(path, body.dump(), "application/json");
            if (!res) {
                last_status = 0;
                continue; // connection failure: retryable
            }
            last_status = res->status;
            if (res->status == 200) return parse_scores(res->body, attributes);
            if (res->status != 429 && res->status < 500)
                throw NetworkError("Perspective API request failed with HTTP " +
                                   std::to_string(res->status));
        }
        throw NetworkError("Perspective API retries exhausted; last HTTP status " +
                           std::to_string(last_status));
    }

    std::size_t requests_made() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return requests_made_;
    }

private:
    static PerspectiveScores parse_scores(const std::string& body,
                                          const std::vector<std::string>& attributes) {
        nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded() || !j.contains("attributeScores"))
            throw NetworkError("Perspective API returned an unparseable response");
        PerspectiveScores scores;
        for (const auto& attr : attributes) {
            if (!j["attributeScores"].contains(attr))
                throw DataError("Perspective response is missing attribute " + attr);
            scores[attr] =
                j["attributeScores"][attr]["summaryScore"]["value"].get<double>();
        }
        return scores;
    }

    // Bounds concurrent requests at config.max_in_flight.
    class InFlightSlot {
    public:
        explicit InFlightSlot(PerspectiveClient& client) : client_(client) {
            std::unique_lock<std::mutex> lock(client_.mutex_);
            client_.slot_free_.wait(
                lock, [&] { return client_.in_flight_ < client_.config_.max_in_flight; });
            ++client_.in_flight_;
        }
        ~InFlightSlot() {
            {
                std::lock_guard<std::mutex> lock(client_.mutex_);
                --client_.in_flight_;
            }
            client_.slot_free_.notify_one();
        }

    private:
        PerspectiveClient& client_;
    };

    void throttle() {
        std::unique_lock<std::mutex> lock(mutex_);
        auto now = std::chrono::steady_clock::now();
        auto min_gap = std::chrono::duration<double>(1.0 / config_.requests_per_second);
        if (has_last_request_) {
            auto next_allowed = last_request_ + min_gap;
            if (now < next_allowed) {
                lock.unlock();
                std::this_thread::sleep_until(next_allowed);
                lock.lock();
                now = std::chrono::steady_clock::now();
            }
        }
        last_request_ = now;
        has_last_request_ = true;
    }

    PerspectiveClientConfig config_;
    mutable std::mutex mutex_;
    std::condition_variable slot_free_;
    int in_flight_ = 0;
    std::chrono::steady_clock::time_point last_request_{};
    bool has_last_request_ = false;
    std::size_t requests_made_ = 0;
};

// ---------------------------------------------------------------------------
// Read-through persistent score cache (append-only JSON lines).

struct ScoreCacheKey {
    std::string text_sha256;
    std::string language;
    std::vector<std::string> attributes; // sorted
    std::string variant;

    bool operator<(const ScoreCacheKey& o) const {
        return std::tie(text_sha256, language, attributes, variant) <
               std::tie(o.text_sha256, o.language, o.attributes, o.variant);
    }
};

class ScoreCache {
public:
    ScoreCache() = default; // disabled
    explicit ScoreCache(std::string path) : path_(std::move(path)), enabled_(true) { load(); }

    bool enabled() const { return enabled_; }

    std::optional<PerspectiveScores> lookup(const ScoreCacheKey& key) const {
        if (!enabled_) return std::nullopt;
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void store(const ScoreCacheKey& key, const PerspectiveScores& scores) {
        if (!enabled_) return;
        std::lock_guard<std::mutex> lock(write_mutex_);
        entries_[key] = scores;
        std::ofstream out(path_, std::ios::binary | std::ios::app);
        if (!out) throw DataError("cannot append to score cache '" + path_ + "'");
        nlohmann::json line = {{"sha256", key.text_sha256},
                               {"language", key.language},
                               {"attributes", key.attributes},
                               {"variant", key.variant},
                               {"scores", scores}};
        out << line.dump() << '\n';
    }

private:
    void load() {
        std::ifstream in(path_, std::ios::binary);
        if (!in) return; // fresh cache
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("sha256") || !j.contains("language") ||
                !j.contains("attributes") || !j.contains("variant") || !j.contains("scores")) {
                std::cerr << "warning: skipping corrupt score cache line " << line_no << '\n';
                continue;
            }
            ScoreCacheKey key{j["sha256"].get<std::string>(), j["language"].get<std::string>(),
                              j["attributes"].get<std::vector<std::string>>(),
                              j["variant"].get<std::string>()};
            entries_[key] = j["scores"].get<PerspectiveScores>();
        }
    }

    std::string path_;
    bool enabled_ = false;
    std::map<ScoreCacheKey, PerspectiveScores> entries_;
    std::mutex write_mutex_;
};

// Client + cache: a cached key never triggers a network call.
class CachedScorer {
public:
    CachedScorer(PerspectiveClient& client, ScoreCache& cache)
        : client_(client), cache_(cache) {}

    PerspectiveScores get(std::string_view text, Lang language,
                          const std::vector<std::string>& attributes, TextVariant variant) {
        std::vector<std::string> sorted_attrs(attributes);
        std::sort(sorted_attrs.begin(), sorted_attrs.end());
        ScoreCacheKey key{sha256_hex(text), to_string(language), std::move(sorted_attrs),
                          to_string(variant)};
        if (auto hit = cache_.lookup(key)) return *hit;
        auto scores = client_.score_text(text, language, attributes);
        cache_.store(key, scores);
        return scores;
    }

private:
    PerspectiveClient& client_;
    ScoreCache& cache_;
};

// Scores the full tweet and the cleaned text and lays the results out in the
// fixed vector order. Shared mode restricts to the 6 common attributes.
inline PerspectiveVector build_vector(const TweetRecord& record, const TweetParts& parts,
                                      PerspectiveMode mode, CachedScorer& scorer) {
    const auto& attrs = perspective_mode_attributes(mode);
    PerspectiveVector out;
    out.layout = perspective_layout(mode);
    auto full = scorer.get(record.text, record.language, attrs, TextVariant::full);
    auto cleaned = scorer.get(parts.cleaned_text, record.language, attrs, TextVariant::cleaned);
    for (const auto& [variant, attr] : out.layout.slots) {
        const auto& scores = variant == TextVariant::full ? full : cleaned;
        auto it = scores.find(attr);
        if (it == scores.end())
            throw DataError("Perspective scores are missing attribute " + attr);
        out.values.push_back(it->second);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Standardization (population statistics, fitted on training vectors only).

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stddev;
    VectorLayout layout;
};

inline Standardizer fit_standardizer(const std::vector<PerspectiveVector>& vectors) {
    if (vectors.empty()) throw DataError("fit_standardizer: need at least one vector");
    const auto& layout = vectors.front().layout;
    const std::size_t d = vectors.front().values.size();
    Standardizer s;
    s.layout = layout;
    s.mean.assign(d, 0.0);
    s.stddev.assign(d, 0.0);
    for (const auto& v : vectors) {
        if (!(v.layout == layout))
            throw DataError("fit_standardizer: mixed vector layouts");
        for (std::size_t i = 0; i < d; ++i) s.mean[i] += v.values[i];
    }
    for (double& m : s.mean) m /= static_cast<double>(vectors.size());
    for (const auto& v : vectors)
        for (std::size_t i = 0; i < d; ++i) {
            double c = v.values[i] - s.mean[i];
            s.stddev[i] += c * c;
        }
    for (double& sd : s.stddev) sd = std::sqrt(sd / static_cast<double>(vectors.size()));
    return s;
}

// (x - mean) / std per feature; zero-variance features map to 0.
inline std::vector<double> transform(const Standardizer& s, const PerspectiveVector& v) {
    if (!(v.layout == s.layout))
        throw DataError("transform: vector layout does not match the standardizer");
    std::vector<double> out(v.values.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = s.stddev[i] > 0.0 ? (v.values[i] - s.mean[i]) / s.stddev[i] : 0.0;
    return out;
}

inline nlohmann::json standardizer_json(const Standardizer& s) {
    return {{"mean", s.mean}, {"stddev", s.stddev}, {"layout", s.layout.json()}};
}

inline Standardizer standardizer_from_json(const nlohmann::json& j) {
    Standardizer s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.stddev = j.at("stddev").get<std::vector<double>>();
    for (const auto& slot : j.at("layout")) {
        TextVariant v = slot.at("variant").get<std::string>() == "full" ? TextVariant::full
                                                                        : TextVariant::cleaned;
        s.layout.slots.emplace_back(v, slot.at("attribute").get<std::string>());
    }
    return s;
}

// ---------------------------------------------------------------------------
// Deep-MLP configuration and grid search (Perspective-feature experiments).

inline std::size_t perspective_depth(Task task) { return task == Task::task1 ? 12 : 9; }

inline MLPConfig perspective_head_config(Task task, std::size_t input_dim,
                                         std::size_t hidden_width = 100,
                                         Activation activation = Activation::tanh_fn,
                                         double dropout_p = 0.2) {
    MLPConfig c;
    c.input_dim = input_dim;
    c.hidden_dims.assign(perspective_depth(task), hidden_width);
    c.num_classes = LabelSchema::for_task(task).size();
    c.activation = activation;
    c.dropout_p = dropout_p;
    return c;
}

enum class TrainingArm { adam_earlystop, sgd_adaptive };

inline std::string to_string(TrainingArm a) {
    return a == TrainingArm::adam_earlystop ? "adam_earlystop" : "sgd_adaptive";
}

struct GridPoint {
    Activation activation = Activation::identity;
    TrainingArm arm = TrainingArm::adam_earlystop;
    std::size_t hidden_width = 100;

    // Deterministic serialization; doubles as the ranking tie-break.
    std::string key() const {
        return "activation=" + hsd::to_string(activation) + ",arm=" + hsd::to_string(arm) +
               ",width=" + std::to_string(hidden_width);
    }
};

struct GridSearchSpace {
    std::vector<Activation> activations = {Activation::identity, Activation::tanh_fn,
                                           Activation::relu};
    std::vector<TrainingArm> arms = {TrainingArm::adam_earlystop, TrainingArm::sgd_adaptive};
    std::vector<std::size_t> hidden_widths = {100};

    std::vector<GridPoint> points() const {
        std::vector<GridPoint> out;
        for (auto act : activations)
            for (auto arm : arms)
                for (auto w : hidden_widths) out.push_back({act, arm, w});
        return out;
    }
};

struct GridConfig {
    int folds = 4;
    std::uint64_t seed = 13;
    int max_epochs = 40;
    std::size_t batch_size = 200;
    double dropout_p = 0.2;
    double adam_lr = 1e-3;
    double adam_eps = 1e-8;
    int patience = 5;
    double sgd_lr = 0.1;
    double lr_floor = 1e-6;
    double decay_factor = 0.5;
    double internal_val_fraction = 0.1; // carved from the training folds
};

struct GridResult {
    GridPoint point;
    double mean_f1 = 0.0;
    std::vector<double> fold_f1;
};

namespace detail {

inline std::pair<VectorDataset, VectorDataset> split_vector_dataset(
    const VectorDataset& data, double val_fraction, std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.size(); ++i) by_class[data[i].label].push_back(i);
    std::vector<bool> in_val(data.size(), false);
    rng::Engine eng(seed);
    for (auto& [label, indices] : by_class) {
        if (indices.size() < 2) continue;
        rng::shuffle(indices, eng);
        auto n_val = static_cast<std::size_t>(
            std::llround(val_fraction * static_cast<double>(indices.size())));
        for (std::size_t k = 0; k < std::min(n_val, indices.size()); ++k)
            in_val[indices[k]] = true;
    }
    VectorDataset train, val;
    for (std::size_t i = 0; i < data.size(); ++i)
        (in_val[i] ? val : train).push_back(data[i]);
    if (val.empty() && !train.empty()) {
        val.push_back(train.back());
        train.pop_back();
    }
    return {train, val};
}

} // namespace detail

// Exhaustive grid over activation x optimizer arm x hidden width, scored by
// seeded k-fold cross-validation macro F1. Missing classes in a fold simply
// contribute 0 through the all-schema-classes macro average.
inline std::vector<GridResult> grid_search(Task task, const VectorDataset& data,
                                           const GridSearchSpace& space,
                                           const GridConfig& config) {
    if (config.folds < 2) throw UsageError("grid_search: folds must be >= 2");
    auto points = space.points();
    if (points.empty()) throw UsageError("grid_search: empty search space");
    if (data.size() < static_cast<std::size_t>(config.folds))
        throw DataError("grid_search: fewer examples than folds");

    const LabelSchema& schema = LabelSchema::for_task(task);

    // Seeded fold assignment, shared across all grid points.
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng::Engine eng(config.seed);
    rng::shuffle(order, eng);
    std::vector<int> fold_of(data.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        fold_of[order[i]] = static_cast<int>(i % static_cast<std::size_t>(config.folds));

    std::vector<GridResult> results;
    for (const auto& point : points) {
        GridResult res;
        res.point = point;
        for (int fold = 0; fold < config.folds; ++fold) {
            VectorDataset fit_data, held_out;
            for (std::size_t i = 0; i < data.size(); ++i)
                (fold_of[i] == fold ? held_out : fit_data).push_back(data[i]);

            std::uint64_t run_seed =
                rng::mix(config.seed, rng::fnv1a64(point.key()) + static_cast<std::uint64_t>(fold));
            auto [train_part, val_part] = detail::split_vector_dataset(
                fit_data, config.internal_val_fraction, run_seed);

            MLPConfig mlp = perspective_head_config(
                task, data.front().features.size(), point.hidden_width, point.activation,
                config.dropout_p);

            TrainConfig tc;
            tc.batch_size = config.batch_size;
            tc.max_epochs = config.max_epochs;
            tc.dropout_p = config.dropout_p;
            tc.seed = run_seed;
            tc.adam_eps = config.adam_eps;

            std::function<double(VectorClassifier&, const VectorDataset&)> evaluate =
                [&schema](VectorClassifier& m, const VectorDataset& d) {
                    return macro_f1_on(m, d, schema);
                };

            VectorClassifier model(mlp, run_seed,
                                   point.arm == TrainingArm::adam_earlystop
                                       ? OptimizerKind::adam
                                       : OptimizerKind::sgd,
                                   config.adam_eps);
            if (point.arm == TrainingArm::adam_earlystop) {
                tc.initial_lr = config.adam_lr;
                tc.lr_floor = 0.0 < config.adam_lr ? config.adam_lr * 1e-9 : 1e-12;
                train_earlystop(model, train_part, val_part, tc, config.patience, evaluate);
            } else {
                tc.initial_lr = config.sgd_lr;
                tc.lr_floor = config.lr_floor;
                tc.decay_factor = config.decay_factor;
                train_adaptive(model, train_part, val_part, tc, evaluate);
            }
            res.fold_f1.push_back(macro_f1_on(model, held_out, schema));
        }
        res.mean_f1 = 0.0;
        for (double f : res.fold_f1) res.mean_f1 += f;
        res.mean_f1 /= static_cast<double>(res.fold_f1.size());
        results.push_back(std::move(res));
    }
    std::sort(results.begin(), results.end(), [](const GridResult& a, const GridResult& b) {
        if (a.mean_f1 != b.mean_f1) return a.mean_f1 > b.mean_f1;
        return a.point.key() < b.point.key();
    });
    return results;
}

} // namespace hsd
