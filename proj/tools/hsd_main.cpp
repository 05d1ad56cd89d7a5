// hsd: multilingual hate speech detection pipeline CLI.
//
// Subcommands: preprocess, train, evaluate, predict, perspective
// (extract|train|grid). Exit codes: 0 success, 2 usage, 3 data error,
// 4 network error.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hsd/digest.hpp"
#include "hsd/encode.hpp"
#include "hsd/errors.hpp"
#include "hsd/eval.hpp"
#include "hsd/ingest.hpp"
#include "hsd/manifest.hpp"
#include "hsd/mlp.hpp"
#include "hsd/perspective.hpp"
#include "hsd/preprocess.hpp"
#include "hsd/segmenter.hpp"
#include "hsd/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace hsd;

constexpr const char* kLivePerspectiveUrl = "https://commentanalyzer.googleapis.com";

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t comma = s.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

std::set<Channel> parse_channels(const std::string& csv) {
    std::set<Channel> out;
    for (const auto& name : split_csv(csv))
        if (!name.empty()) out.insert(parse_channel(name));
    if (out.empty()) throw UsageError("no channels given");
    return out;
}

ColumnMap parse_column_overrides(const std::vector<std::string>& specs) {
    ColumnMap map;
    for (const auto& spec : specs) {
        auto eq = spec.find('=');
        if (eq == std::string::npos)
            throw UsageError("bad --col '" + spec + "' (expected role=column_name)");
        std::string role = spec.substr(0, eq), name = spec.substr(eq + 1);
        if (role == "id")
            map.id = name;
        else if (role == "text")
            map.text = name;
        else if (role == "task_1")
            map.task1 = name;
        else if (role == "task_2")
            map.task2 = name;
        else
            throw UsageError("unknown column role '" + role + "'");
    }
    return map;
}

// ---------------------------------------------------------------------------
// TweetParts JSON lines.

json parts_to_json(const std::string& id, Lang lang, const TweetRecord& rec,
                   const TweetParts& parts) {
    json j;
    j["id"] = id;
    j["language"] = to_string(lang);
    j["task_1"] = rec.task1 ? json(LabelSchema::task1().classes[std::size_t(*rec.task1)])
                            : json(nullptr);
    j["task_2"] = rec.task2 ? json(LabelSchema::task2().classes[std::size_t(*rec.task2)])
                            : json(nullptr);
    j["cleaned_text"] = parts.cleaned_text;
    j["hashtags"] = parts.hashtags;
    j["segmented_hashtags"] = parts.segmented_hashtags;
    j["emojis"] = parts.emojis;
    j["smileys"] = parts.smileys;
    j["urls"] = parts.urls;
    j["mentions"] = parts.mentions;
    j["numbers"] = parts.numbers;
    j["reserved"] = parts.reserved;
    return j;
}

struct PartsRow {
    std::string id;
    std::string language;
    std::optional<int> task1, task2;
    TweetParts parts;
};

std::vector<PartsRow> load_parts_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open preprocessed file '" + path + "'");
    std::vector<PartsRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw DataError(path + " line " + std::to_string(line_no) + ": invalid JSON");
        PartsRow row;
        row.id = j.at("id").get<std::string>();
        row.language = j.value("language", "en");
        if (j.contains("task_1") && !j["task_1"].is_null()) {
            int idx = LabelSchema::task1().index_of(j["task_1"].get<std::string>());
            if (idx < 0)
                throw DataError(path + " line " + std::to_string(line_no) + ": bad task_1 label");
            row.task1 = idx;
        }
        if (j.contains("task_2") && !j["task_2"].is_null()) {
            int idx = LabelSchema::task2().index_of(j["task_2"].get<std::string>());
            if (idx < 0)
                throw DataError(path + " line " + std::to_string(line_no) + ": bad task_2 label");
            row.task2 = idx;
        }
        row.parts.cleaned_text = j.at("cleaned_text").get<std::string>();
        row.parts.hashtags = j.value("hashtags", std::vector<std::string>{});
        row.parts.segmented_hashtags =
            j.value("segmented_hashtags", std::vector<std::vector<std::string>>{});
        row.parts.emojis = j.value("emojis", std::vector<std::string>{});
        row.parts.smileys = j.value("smileys", std::vector<std::string>{});
        row.parts.urls = j.value("urls", std::vector<std::string>{});
        row.parts.mentions = j.value("mentions", std::vector<std::string>{});
        row.parts.numbers = j.value("numbers", std::vector<std::string>{});
        row.parts.reserved = j.value("reserved", std::vector<std::string>{});
        rows.push_back(std::move(row));
    }
    return rows;
}

SampleDataset rows_to_samples(const std::vector<PartsRow>& rows, Task task,
                              bool require_labels) {
    SampleDataset out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
        Sample s;
        s.id = row.id;
        s.text = row.parts.cleaned_text;
        s.segmented_hashtags = row.parts.segmented_hashtags;
        s.emojis = row.parts.emojis;
        auto label = task == Task::task1 ? row.task1 : row.task2;
        if (label) {
            s.label = *label;
        } else if (require_labels) {
            throw DataError("record '" + row.id + "' is unlabeled for " + to_string(task));
        }
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fusion checkpoint I/O.

struct EncoderSpec {
    std::string kind = "hashing"; // hashing | precomputed
    std::size_t hash_dim = 1024;
    std::size_t proj_dim = 0; // 0: no projection
    std::uint64_t seed = 0;
    std::string path; // precomputed table
};

std::shared_ptr<TextEncoder> make_encoder(const EncoderSpec& spec) {
    if (spec.kind == "hashing") {
        if (spec.proj_dim > 0)
            return std::make_shared<HashingEncoder>(spec.hash_dim, spec.proj_dim, spec.seed);
        return std::make_shared<HashingEncoder>(spec.hash_dim);
    }
    if (spec.kind == "precomputed") {
        if (spec.path.empty())
            throw UsageError("precomputed encoder requires --encoder-path");
        return std::make_shared<PrecomputedEncoder>(spec.path);
    }
    throw UsageError("unknown encoder kind '" + spec.kind + "'");
}

struct CheckpointMeta {
    Task task = Task::task1;
    std::set<Channel> channels;
    EncoderSpec encoder;
    std::string emoji_lexicon_path;
    MLPConfig mlp;
    std::string encoder_mode = "frozen";
};

void save_fusion_checkpoint(const fs::path& dir, const FusionClassifier& model,
                            const CheckpointMeta& meta) {
    fs::create_directories(dir);
    std::vector<const Tensor*> tensors = model.params().pointers();
    for (const Tensor* t : model.encoder().parameters()) tensors.push_back(t);
    save_tensors(dir, tensors);

    json channels = json::array();
    for (Channel c : meta.channels) channels.push_back(to_string(c));
    json spec = json::array();
    for (const auto& span : channel_spans(model.encoder(), model.emoji_lexicon(), meta.channels))
        spec.push_back({{"channel", to_string(span.channel)},
                        {"offset", span.offset},
                        {"length", span.length}});
    json j = {{"task", to_string(meta.task)},
              {"schema", LabelSchema::for_task(meta.task).classes},
              {"channels", channels},
              {"channel_spec", spec},
              {"encoder",
               {{"kind", meta.encoder.kind},
                {"hash_dim", meta.encoder.hash_dim},
                {"proj_dim", meta.encoder.proj_dim},
                {"seed", meta.encoder.seed},
                {"path", meta.encoder.path}}},
              {"emoji_lexicon", meta.emoji_lexicon_path},
              {"encoder_mode", meta.encoder_mode},
              {"mlp", mlp_config_json(model.config())}};
    std::ofstream out(dir / "config.json");
    if (!out) throw DataError("cannot write checkpoint config in '" + dir.string() + "'");
    out << j.dump(2) << '\n';
}

struct LoadedModel {
    CheckpointMeta meta;
    std::shared_ptr<TextEncoder> encoder;
    std::shared_ptr<const EmojiLexicon> emoji_lexicon;
    ModelParams params;
};

LoadedModel load_fusion_checkpoint(const fs::path& dir, const std::string& emoji_override) {
    std::ifstream in(dir / "config.json");
    if (!in) throw DataError("cannot open checkpoint config in '" + dir.string() + "'");
    json j = json::parse(in);

    LoadedModel out;
    out.meta.task = parse_task(j.at("task").get<std::string>());
    for (const auto& c : j.at("channels")) out.meta.channels.insert(parse_channel(c.get<std::string>()));
    const auto& enc = j.at("encoder");
    out.meta.encoder.kind = enc.at("kind").get<std::string>();
    out.meta.encoder.hash_dim = enc.at("hash_dim").get<std::size_t>();
    out.meta.encoder.proj_dim = enc.at("proj_dim").get<std::size_t>();
    out.meta.encoder.seed = enc.at("seed").get<std::uint64_t>();
    out.meta.encoder.path = enc.at("path").get<std::string>();
    out.meta.emoji_lexicon_path = j.at("emoji_lexicon").get<std::string>();
    out.meta.encoder_mode = j.value("encoder_mode", "frozen");
    out.meta.mlp = mlp_config_from_json(j.at("mlp"));

    out.encoder = make_encoder(out.meta.encoder);
    std::string emoji_path = emoji_override.empty() ? out.meta.emoji_lexicon_path : emoji_override;
    if (out.meta.channels.count(Channel::emoji)) {
        if (emoji_path.empty())
            throw DataError("checkpoint uses the emoji channel but no emoji lexicon is known; "
                            "pass --emoji-lexicon");
        out.emoji_lexicon =
            std::make_shared<const EmojiLexicon>(load_emoji_lexicon(emoji_path));
    } else {
        out.emoji_lexicon = std::make_shared<const EmojiLexicon>();
    }

    auto tensors = load_tensors(dir);
    std::map<std::string, Tensor*> by_name;
    for (auto& t : tensors) by_name[t.name] = &t;

    out.params = init_params(out.meta.mlp, 0);
    for (auto& t : out.params.tensors) {
        auto it = by_name.find(t.name);
        if (it == by_name.end()) throw DataError("checkpoint is missing tensor " + t.name);
        if (it->second->shape != t.shape)
            throw DataError("checkpoint tensor " + t.name + " has unexpected shape");
        t = *it->second;
    }
    for (Tensor* p : out.encoder->parameters()) {
        auto it = by_name.find(p->name);
        if (it == by_name.end()) throw DataError("checkpoint is missing tensor " + p->name);
        if (it->second->shape != p->shape)
            throw DataError("checkpoint tensor " + p->name + " has unexpected shape");
        *p = *it->second;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Perspective vector TSV.

void write_vectors_tsv(const std::string& path, const std::vector<std::string>& ids,
                       const std::vector<PerspectiveVector>& vectors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vectors file '" + path + "'");
    if (vectors.empty()) throw DataError("no vectors to write");
    out << "tweet_id";
    for (const auto& [variant, attr] : vectors.front().layout.slots)
        out << '\t' << to_string(variant) << ':' << attr;
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out << ids[i];
        for (double v : vectors[i].values) {
            std::snprintf(buf, sizeof buf, "%.6f", v);
            out << '\t' << buf;
        }
        out << '\n';
    }
}

std::pair<std::vector<std::string>, std::vector<PerspectiveVector>> read_vectors_tsv(
    const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vectors file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("vectors file '" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = hsd::detail::split_tsv(line);
    if (header.size() < 2 || header[0] != "tweet_id")
        throw DataError("vectors file '" + path + "': bad header");
    VectorLayout layout;
    for (std::size_t i = 1; i < header.size(); ++i) {
        auto colon = header[i].find(':');
        if (colon == std::string::npos)
            throw DataError("vectors file '" + path + "': bad column '" + header[i] + "'");
        std::string variant = header[i].substr(0, colon);
        if (variant != "full" && variant != "cleaned")
            throw DataError("vectors file '" + path + "': bad variant '" + variant + "'");
        layout.slots.emplace_back(variant == "full" ? TextVariant::full : TextVariant::cleaned,
                                  header[i].substr(colon + 1));
    }
    std::vector<std::string> ids;
    std::vector<PerspectiveVector> vectors;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = hsd::detail::split_tsv(line);
        if (fields.size() != header.size())
            throw DataError("vectors file line " + std::to_string(line_no) +
                            ": column count mismatch");
        PerspectiveVector v;
        v.layout = layout;
        for (std::size_t i = 1; i < fields.size(); ++i) {
            try {
                v.values.push_back(std::stod(fields[i]));
            } catch (const std::exception&) {
                throw DataError("vectors file line " + std::to_string(line_no) +
                                ": bad number '" + fields[i] + "'");
            }
        }
        ids.push_back(fields[0]);
        vectors.push_back(std::move(v));
    }
    return {std::move(ids), std::move(vectors)};
}

// ---------------------------------------------------------------------------
// train subcommand configuration.

struct TrainCli {
    std::string task = "task1";
    std::string regime = "mono";
    std::string encoder = "hashing";
    std::string encoder_mode = "frozen";
    std::string encoder_path;
    std::string channels = "text,hashtag,emoji";
    std::vector<std::string> inputs; // lang=path
    std::string out_dir;
    std::string config_path;
    std::string emoji_lexicon;
    std::uint64_t seed = 13;
    std::size_t hash_dim = 1024;
    std::size_t proj_dim = 0;
    std::string hidden_dims; // csv override
    std::string activation = "tanh";
    double dropout = 0.2;
    double lr = 2e-5;
    double lr_floor = 1e-12;
    double decay = 0.5;
    std::size_t batch_size = 32;
    int max_epochs = 100;
    double adam_eps = 1e-8;
    double val_fraction = 0.1;
};

TrainConfig train_config_from(const TrainCli& cli, const json& file_cfg) {
    TrainConfig cfg;
    auto get = [&](const char* key, auto fallback) {
        using T = decltype(fallback);
        return file_cfg.contains(key) ? file_cfg.at(key).get<T>() : fallback;
    };
    cfg.initial_lr = get("initial_lr", cli.lr);
    cfg.lr_floor = get("lr_floor", cli.lr_floor);
    cfg.decay_factor = get("decay_factor", cli.decay);
    cfg.batch_size = get("batch_size", cli.batch_size);
    cfg.max_epochs = get("max_epochs", cli.max_epochs);
    cfg.dropout_p = get("dropout_p", cli.dropout);
    cfg.adam_eps = get("adam_eps", cli.adam_eps);
    cfg.seed = get("seed", cli.seed);
    cfg.val_fraction = get("val_fraction", cli.val_fraction);
    cfg.regime = parse_regime(cli.regime);
    cfg.encoder_mode = parse_encoder_mode(cli.encoder_mode);
    cfg.channels = parse_channels(cli.channels);
    return cfg;
}

int cmd_train(const TrainCli& cli) {
    RunManifest manifest;
    manifest.command = "train";

    json file_cfg = json::object();
    if (!cli.config_path.empty()) {
        std::ifstream in(cli.config_path);
        if (!in) throw DataError("cannot open config file '" + cli.config_path + "'");
        file_cfg = json::parse(in);
        manifest.add_input(cli.config_path);
    }
    TrainConfig cfg = train_config_from(cli, file_cfg);
    manifest.seed = cfg.seed;
    Task task = parse_task(cli.task);

    if (cli.inputs.empty()) throw UsageError("train: at least one --in lang=path required");
    std::vector<Lang> languages;
    std::map<Lang, SampleDataset> data;
    for (const auto& spec : cli.inputs) {
        auto eq = spec.find('=');
        if (eq == std::string::npos)
            throw UsageError("bad --in '" + spec + "' (expected lang=path)");
        Lang lang = parse_lang(spec.substr(0, eq));
        std::string path = spec.substr(eq + 1);
        manifest.add_input(path);
        if (data.count(lang)) throw UsageError("duplicate --in for language " + to_string(lang));
        languages.push_back(lang);
        data[lang] = rows_to_samples(load_parts_jsonl(path), task, true);
    }

    std::shared_ptr<const EmojiLexicon> emoji_lex;
    if (cfg.channels.count(Channel::emoji)) {
        if (cli.emoji_lexicon.empty())
            throw UsageError("the emoji channel requires --emoji-lexicon");
        manifest.add_input(cli.emoji_lexicon);
        emoji_lex = std::make_shared<const EmojiLexicon>(load_emoji_lexicon(cli.emoji_lexicon));
    } else {
        emoji_lex = std::make_shared<const EmojiLexicon>();
    }

    if (cfg.encoder_mode == EncoderMode::finetune && cli.encoder == "hashing" &&
        cli.proj_dim == 0)
        throw UsageError("finetune with the hashing encoder requires --proj-dim > 0");

    std::shared_ptr<TextEncoder> shared_precomputed;
    if (cli.encoder == "precomputed") {
        EncoderSpec spec;
        spec.kind = "precomputed";
        spec.path = cli.encoder_path;
        shared_precomputed = make_encoder(spec);
        manifest.add_input(cli.encoder_path);
        if (cfg.encoder_mode == EncoderMode::finetune)
            throw UsageError("the precomputed encoder is frozen-only; use the hashing "
                             "encoder with --proj-dim for finetune runs");
    }

    // Per-model encoder seeds are derived inside the factory from the model
    // seed so mono runs stay independent.
    std::map<const FusionClassifier*, EncoderSpec> encoder_specs;
    Activation act = parse_activation(cli.activation);
    auto factory = [&](std::uint64_t seed) {
        EncoderSpec spec;
        std::shared_ptr<TextEncoder> encoder;
        if (shared_precomputed) {
            spec.kind = "precomputed";
            spec.path = cli.encoder_path;
            encoder = shared_precomputed;
        } else {
            spec.kind = "hashing";
            spec.hash_dim = cli.hash_dim;
            spec.proj_dim = cli.proj_dim;
            spec.seed = rng::mix(seed, rng::fnv1a64("encoder"));
            encoder = make_encoder(spec);
        }
        std::size_t width = fused_dim(*encoder, *emoji_lex, cfg.channels);
        MLPConfig mlp;
        mlp.input_dim = width;
        if (!cli.hidden_dims.empty()) {
            for (const auto& h : split_csv(cli.hidden_dims))
                mlp.hidden_dims.push_back(std::stoul(h));
        } else {
            mlp.hidden_dims = {(width + 1) / 2, (width + 3) / 4};
        }
        mlp.num_classes = LabelSchema::for_task(task).size();
        mlp.activation = act;
        mlp.dropout_p = cfg.dropout_p;
        auto model = std::make_shared<FusionClassifier>(
            encoder, emoji_lex, cfg.channels, mlp, seed, cfg.encoder_mode, OptimizerKind::adam,
            cfg.adam_eps);
        encoder_specs[model.get()] = spec;
        return model;
    };

    auto result = run_regime(task, languages, data, cfg, factory);

    fs::path out_dir(cli.out_dir);
    fs::create_directories(out_dir);
    std::set<const FusionClassifier*> saved;
    for (Lang lang : languages) {
        const auto& model = result.models.at(lang);
        if (saved.count(model.get())) continue;
        saved.insert(model.get());
        std::string tag = cfg.regime == Regime::multi ? "multi" : to_string(lang);
        fs::path dir = out_dir / tag;
        CheckpointMeta meta;
        meta.task = task;
        meta.channels = cfg.channels;
        meta.encoder = encoder_specs.at(model.get());
        meta.emoji_lexicon_path = cli.emoji_lexicon;
        meta.encoder_mode = to_string(cfg.encoder_mode);
        save_fusion_checkpoint(dir, *model, meta);
        write_history_csv(result.states.at(lang).history, (dir / "history.csv").string());
        for (const auto& entry : fs::directory_iterator(dir))
            manifest.add_output(entry.path().string());
        std::cout << tag << ": best val macro F1 "
                  << hsd::detail::format_score(result.states.at(lang).best_val_f1) << " ("
                  << result.states.at(lang).history.size() << " epochs)\n";
    }

    // Per-language validation scores in the results-table shape.
    std::vector<ReportEntry> entries;
    std::string model_tag = cli.encoder + "-" + to_string(cfg.encoder_mode) + "-" + cli.regime;
    for (Lang lang : languages)
        entries.push_back({model_tag, to_string(lang), cli.task, result.val_f1.at(lang)});
    {
        std::ofstream md(out_dir / "results.md");
        md << render_report(entries, true);
        std::ofstream tsv(out_dir / "results.tsv");
        tsv << render_report(entries, false);
    }
    manifest.add_output((out_dir / "results.md").string());
    manifest.add_output((out_dir / "results.tsv").string());

    manifest.config = {{"task", cli.task},
                       {"regime", cli.regime},
                       {"encoder", cli.encoder},
                       {"encoder_mode", cli.encoder_mode},
                       {"channels", cli.channels},
                       {"initial_lr", cfg.initial_lr},
                       {"lr_floor", cfg.lr_floor},
                       {"decay_factor", cfg.decay_factor},
                       {"batch_size", cfg.batch_size},
                       {"max_epochs", cfg.max_epochs},
                       {"dropout_p", cfg.dropout_p},
                       {"adam_eps", cfg.adam_eps},
                       {"val_fraction", cfg.val_fraction}};
    manifest.write((out_dir / "run_manifest.json").string());
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_evaluate(const std::string& model_dir, const std::string& in_path,
                 const std::string& task_name, const std::string& out_path,
                 const std::string& emoji_override) {
    auto loaded = load_fusion_checkpoint(model_dir, emoji_override);
    Task task = parse_task(task_name);
    if (task != loaded.meta.task)
        throw DataError("checkpoint was trained for " + to_string(loaded.meta.task) +
                        " but --task is " + task_name);
    auto rows = load_parts_jsonl(in_path);
    auto samples = rows_to_samples(rows, task, true);

    const LabelSchema& schema = LabelSchema::for_task(task);
    std::vector<int> gold, pred;
    for (const auto& s : samples) {
        gold.push_back(s.label);
        TweetParts parts;
        parts.cleaned_text = s.text;
        parts.segmented_hashtags = s.segmented_hashtags;
        parts.emojis = s.emojis;
        auto fused = fuse(parts, *loaded.encoder, *loaded.emoji_lexicon, loaded.meta.channels);
        pred.push_back(predict(loaded.params, fused.vector, loaded.meta.mlp).label);
    }
    auto cm = confusion(gold, pred, schema);
    std::cout << "macro F1 " << hsd::detail::format_score(macro_f1(cm)) << '\n';
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw DataError("cannot write metrics file '" + out_path + "'");
        out << metrics_json(cm).dump(2) << '\n';
        RunManifest manifest;
        manifest.command = "evaluate";
        manifest.add_input(in_path);
        manifest.add_output(out_path);
        manifest.write(out_path + ".manifest.json");
    }
    return 0;
}

int cmd_predict(const std::string& model_dir, const std::string& in_path,
                const std::string& out_path, const std::string& emoji_override) {
    auto loaded = load_fusion_checkpoint(model_dir, emoji_override);
    auto rows = load_parts_jsonl(in_path);
    auto samples = rows_to_samples(rows, loaded.meta.task, false);

    const LabelSchema& schema = LabelSchema::for_task(loaded.meta.task);
    std::vector<std::string> ids;
    std::vector<int> labels;
    std::vector<std::vector<double>> probs;
    for (const auto& s : samples) {
        TweetParts parts;
        parts.cleaned_text = s.text;
        parts.segmented_hashtags = s.segmented_hashtags;
        parts.emojis = s.emojis;
        auto fused = fuse(parts, *loaded.encoder, *loaded.emoji_lexicon, loaded.meta.channels);
        auto p = predict(loaded.params, fused.vector, loaded.meta.mlp);
        ids.push_back(s.id);
        labels.push_back(p.label);
        probs.push_back(std::move(p.probs));
    }
    write_predictions(ids, labels, probs, schema, out_path);
    RunManifest manifest;
    manifest.command = "predict";
    manifest.add_input(in_path);
    manifest.add_output(out_path);
    manifest.write(out_path + ".manifest.json");
    std::cout << "wrote " << ids.size() << " predictions\n";
    return 0;
}

// ---------------------------------------------------------------------------
// perspective subcommands.

struct PerspectiveCli {
    std::string in_path;
    std::string lang = "en";
    std::string mode; // defaults to lang
    std::string out_path;
    std::string base_url = kLivePerspectiveUrl;
    bool live = false;
    double rate_limit = 1.0;
    std::string cache_path;
    bool no_cache = false;
    int max_attempts = 5;
    double backoff_base = 1.0;
};

int cmd_perspective_extract(const PerspectiveCli& cli) {
    Lang lang = parse_lang(cli.lang);
    if (lang == Lang::hi)
        throw UnsupportedLanguageError("the Perspective API does not support Hindi");
    PerspectiveMode mode =
        cli.mode.empty() ? parse_perspective_mode(cli.lang) : parse_perspective_mode(cli.mode);
    if (mode == PerspectiveMode::en && lang != Lang::en)
        throw UsageError("mode en requires --lang en");
    if (mode == PerspectiveMode::de && lang != Lang::de)
        throw UsageError("mode de requires --lang de");
    if (cli.base_url == kLivePerspectiveUrl && !cli.live)
        throw UsageError("refusing to hit the live Perspective API without --live "
                         "(or point --base-url at a mock server)");

    RunManifest manifest;
    manifest.command = "perspective extract";
    manifest.add_input(cli.in_path);

    Corpus corpus = load_corpus(cli.in_path, lang);

    PerspectiveClientConfig ccfg;
    ccfg.base_url = cli.base_url;
    const char* key = std::getenv("PERSPECTIVE_API_KEY");
    ccfg.api_key = key ? key : "";
    ccfg.requests_per_second = cli.rate_limit;
    ccfg.max_attempts = cli.max_attempts;
    ccfg.backoff_base_seconds = cli.backoff_base;
    PerspectiveClient client(ccfg);
    ScoreCache cache = cli.no_cache || cli.cache_path.empty() ? ScoreCache()
                                                              : ScoreCache(cli.cache_path);
    CachedScorer scorer(client, cache);

    std::vector<std::string> ids;
    std::vector<PerspectiveVector> vectors;
    for (const auto& rec : corpus.records) {
        TweetParts parts = decompose(rec.text, rec.language);
        vectors.push_back(build_vector(rec, parts, mode, scorer));
        ids.push_back(rec.id);
    }
    write_vectors_tsv(cli.out_path, ids, vectors);
    manifest.config = {{"lang", cli.lang},
                       {"mode", to_string(mode)},
                       {"rate_limit", cli.rate_limit},
                       {"cache", !cli.no_cache && !cli.cache_path.empty()}};
    manifest.add_output(cli.out_path);
    manifest.write(cli.out_path + ".manifest.json");
    std::cout << "wrote " << ids.size() << " vectors of length "
              << (vectors.empty() ? 0 : vectors.front().values.size()) << '\n';
    return 0;
}

VectorDataset join_vectors_with_labels(const std::vector<std::string>& ids,
                                       const std::vector<PerspectiveVector>& raw,
                                       const Standardizer& std_model, const Corpus& corpus,
                                       Task task) {
    std::map<std::string, std::optional<int>> labels;
    for (const auto& rec : corpus.records) labels[rec.id] = rec.label(task);
    VectorDataset data;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto it = labels.find(ids[i]);
        if (it == labels.end())
            throw DataError("vector id '" + ids[i] + "' not present in the labels corpus");
        if (!it->second)
            throw DataError("record '" + ids[i] + "' is unlabeled for " + to_string(task));
        data.push_back({transform(std_model, raw[i]), *it->second});
    }
    return data;
}

struct PerspectiveTrainCli {
    std::string task = "task1";
    std::string vectors_path;
    std::string corpus_path;
    std::string lang = "en";
    std::string out_dir;
    std::size_t width = 100;
    std::string activation = "identity";
    std::string optimizer = "adam"; // adam: early stop, sgd: adaptive LR
    int patience = 5;
    double lr = 1e-3;
    double lr_floor = 1e-6;
    double decay = 0.5;
    std::size_t batch_size = 200;
    int max_epochs = 100;
    double dropout = 0.2;
    double adam_eps = 1e-8;
    double val_fraction = 0.1;
    std::uint64_t seed = 13;
};

int cmd_perspective_train(const PerspectiveTrainCli& cli) {
    RunManifest manifest;
    manifest.command = "perspective train";
    manifest.seed = cli.seed;
    manifest.add_input(cli.vectors_path);
    manifest.add_input(cli.corpus_path);

    Task task = parse_task(cli.task);
    auto [ids, raw] = read_vectors_tsv(cli.vectors_path);
    if (raw.empty()) throw DataError("no vectors in '" + cli.vectors_path + "'");
    Corpus corpus = load_corpus(cli.corpus_path, parse_lang(cli.lang));

    Standardizer std_model = fit_standardizer(raw);
    VectorDataset data = join_vectors_with_labels(ids, raw, std_model, corpus, task);

    auto [train_part, val_part] =
        hsd::detail::split_vector_dataset(data, cli.val_fraction, cli.seed);

    MLPConfig mlp = perspective_head_config(task, raw.front().values.size(), cli.width,
                                            parse_activation(cli.activation), cli.dropout);
    TrainConfig cfg;
    cfg.initial_lr = cli.lr;
    cfg.lr_floor = cli.optimizer == "sgd" ? cli.lr_floor : cli.lr * 1e-9;
    cfg.decay_factor = cli.decay;
    cfg.batch_size = cli.batch_size;
    cfg.max_epochs = cli.max_epochs;
    cfg.dropout_p = cli.dropout;
    cfg.adam_eps = cli.adam_eps;
    cfg.seed = cli.seed;

    const LabelSchema& schema = LabelSchema::for_task(task);
    std::function<double(VectorClassifier&, const VectorDataset&)> evaluate =
        [&schema](VectorClassifier& m, const VectorDataset& d) {
            return macro_f1_on(m, d, schema);
        };

    OptimizerKind opt = cli.optimizer == "sgd" ? OptimizerKind::sgd : OptimizerKind::adam;
    VectorClassifier model(mlp, cli.seed, opt, cli.adam_eps);
    TrainState state =
        opt == OptimizerKind::sgd
            ? train_adaptive(model, train_part, val_part, cfg, evaluate)
            : train_earlystop(model, train_part, val_part, cfg, cli.patience, evaluate);

    fs::path dir(cli.out_dir);
    fs::create_directories(dir);
    const ModelParams& trained = model.params();
    save_tensors(dir, trained.pointers());
    json j = {{"task", to_string(task)},
              {"schema", schema.classes},
              {"mlp", mlp_config_json(mlp)},
              {"optimizer", cli.optimizer},
              {"standardizer", standardizer_json(std_model)}};
    std::ofstream cfg_out(dir / "config.json");
    cfg_out << j.dump(2) << '\n';
    write_history_csv(state.history, (dir / "history.csv").string());

    for (const auto& entry : fs::directory_iterator(dir)) manifest.add_output(entry.path().string());
    manifest.config = {{"task", cli.task},       {"width", cli.width},
                       {"activation", cli.activation}, {"optimizer", cli.optimizer},
                       {"batch_size", cli.batch_size}, {"max_epochs", cli.max_epochs}};
    manifest.write((dir / "run_manifest.json").string());
    std::cout << "best val macro F1 " << hsd::detail::format_score(state.best_val_f1) << " ("
              << state.history.size() << " epochs)\n";
    return 0;
}

struct PerspectiveGridCli {
    std::string task = "task1";
    std::string vectors_path;
    std::string corpus_path;
    std::string lang = "en";
    std::string out_path;
    int folds = 4;
    std::uint64_t seed = 13;
    std::string widths = "100";
    std::string activations = "identity,tanh,relu";
    std::string arms = "adam_earlystop,sgd_adaptive";
    int max_epochs = 40;
    std::size_t batch_size = 200;
    double adam_lr = 1e-3;
    double sgd_lr = 0.1;
    int patience = 5;
};

int cmd_perspective_grid(const PerspectiveGridCli& cli) {
    RunManifest manifest;
    manifest.command = "perspective grid";
    manifest.seed = cli.seed;
    manifest.add_input(cli.vectors_path);
    manifest.add_input(cli.corpus_path);

    Task task = parse_task(cli.task);
    auto [ids, raw] = read_vectors_tsv(cli.vectors_path);
    if (raw.empty()) throw DataError("no vectors in '" + cli.vectors_path + "'");
    Corpus corpus = load_corpus(cli.corpus_path, parse_lang(cli.lang));
    Standardizer std_model = fit_standardizer(raw);
    VectorDataset data = join_vectors_with_labels(ids, raw, std_model, corpus, task);

    GridSearchSpace space;
    space.activations.clear();
    for (const auto& a : split_csv(cli.activations)) space.activations.push_back(parse_activation(a));
    space.arms.clear();
    for (const auto& a : split_csv(cli.arms)) {
        if (a == "adam_earlystop")
            space.arms.push_back(TrainingArm::adam_earlystop);
        else if (a == "sgd_adaptive")
            space.arms.push_back(TrainingArm::sgd_adaptive);
        else
            throw UsageError("unknown arm '" + a + "'");
    }
    space.hidden_widths.clear();
    for (const auto& w : split_csv(cli.widths)) space.hidden_widths.push_back(std::stoul(w));

    GridConfig gcfg;
    gcfg.folds = cli.folds;
    gcfg.seed = cli.seed;
    gcfg.max_epochs = cli.max_epochs;
    gcfg.batch_size = cli.batch_size;
    gcfg.adam_lr = cli.adam_lr;
    gcfg.sgd_lr = cli.sgd_lr;
    gcfg.patience = cli.patience;

    auto results = grid_search(task, data, space, gcfg);

    std::ofstream out(cli.out_path, std::ios::binary);
    if (!out) throw DataError("cannot write grid results '" + cli.out_path + "'");
    out << "rank,activation,arm,hidden_width,mean_f1,fold_f1\n";
    char buf[32];
    for (std::size_t r = 0; r < results.size(); ++r) {
        std::snprintf(buf, sizeof buf, "%.6f", results[r].mean_f1);
        out << (r + 1) << ',' << to_string(results[r].point.activation) << ','
            << to_string(results[r].point.arm) << ',' << results[r].point.hidden_width << ','
            << buf << ',';
        for (std::size_t f = 0; f < results[r].fold_f1.size(); ++f) {
            std::snprintf(buf, sizeof buf, "%.6f", results[r].fold_f1[f]);
            out << (f ? ";" : "") << buf;
        }
        out << '\n';
    }
    out.close();
    manifest.config = {{"task", cli.task}, {"folds", cli.folds}};
    manifest.add_output(cli.out_path);
    manifest.write(cli.out_path + ".manifest.json");
    std::cout << "ranked " << results.size() << " configurations; best "
              << results.front().point.key() << " mean F1 "
              << hsd::detail::format_score(results.front().mean_f1) << '\n';
    return 0;
}

// Serves deterministic canned scores with the live API's request/response
// shape; lets every pipeline step run without network access or a key.
int cmd_perspective_mock_serve(int port, int max_requests) {
    httplib::Server server;
    int served = 0;
    server.Post("/v1alpha1/comments:analyze",
                [&](const httplib::Request& req, httplib::Response& res) {
                    auto body = json::parse(req.body, nullptr, false);
                    if (body.is_discarded() || !body.contains("comment")) {
                        res.status = 400;
                        return;
                    }
                    std::string text = body["comment"]["text"].get<std::string>();
                    json scores = json::object();
                    for (const auto& [attr, unused] : body["requestedAttributes"].items())
                        scores[attr] = {{"summaryScore", {{"value", mock_summary_score(text, attr)}}}};
                    res.status = 200;
                    res.set_content(json{{"attributeScores", scores}}.dump(),
                                    "application/json");
                    if (max_requests > 0 && ++served >= max_requests) server.stop();
                });
    int bound = port > 0 ? (server.bind_to_port("127.0.0.1", port) ? port : -1)
                         : server.bind_to_any_port("127.0.0.1");
    if (bound <= 0) throw NetworkError("cannot bind mock server port");
    std::cout << "mock perspective server listening on http://127.0.0.1:" << bound << std::endl;
    server.listen_after_bind();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multilingual hate speech detection pipeline"};
    app.require_subcommand(1);

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "decompose a corpus TSV into TweetParts JSONL");
    std::string pre_in, pre_lang = "en", pre_out, pre_lexicon, pre_reserved = "RT,FAV";
    std::vector<std::string> pre_cols;
    pre->add_option("--in", pre_in, "corpus TSV")->required();
    pre->add_option("--lang", pre_lang, "language: en, de or hi")->required();
    pre->add_option("--out", pre_out, "output JSONL path")->required();
    pre->add_option("--lexicon", pre_lexicon, "word<TAB>count lexicon for hashtag segmentation");
    pre->add_option("--reserved", pre_reserved, "comma-separated reserved words");
    pre->add_option("--col", pre_cols, "column mapping role=name (roles: id, text, task_1, task_2)");
    pre->callback([&]() {
        RunManifest manifest;
        manifest.command = "preprocess";
        manifest.add_input(pre_in);
        Lang lang = parse_lang(pre_lang);
        Corpus corpus = load_corpus(pre_in, lang, parse_column_overrides(pre_cols));
        SegmenterLexicon lexicon;
        if (!pre_lexicon.empty()) {
            manifest.add_input(pre_lexicon);
            lexicon = build_lexicon(pre_lexicon);
        }
        CleanerOptions opts;
        opts.reserved_words.clear();
        for (const auto& w : split_csv(pre_reserved))
            if (!w.empty()) opts.reserved_words.insert(w);
        std::ofstream out(pre_out, std::ios::binary);
        if (!out) throw DataError("cannot write output file '" + pre_out + "'");
        for (const auto& rec : corpus.records) {
            TweetParts parts = decompose(rec.text, lang, opts);
            for (const auto& tag : parts.hashtags)
                parts.segmented_hashtags.push_back(segment_hashtag(tag, lexicon));
            out << parts_to_json(rec.id, lang, rec, parts).dump() << '\n';
        }
        out.close();
        manifest.config = {{"lang", pre_lang}, {"reserved", pre_reserved}};
        manifest.add_output(pre_out);
        manifest.write(pre_out + ".manifest.json");
        std::cout << "wrote " << corpus.records.size() << " records\n";
    });

    // train
    TrainCli tr;
    auto* train_cmd = app.add_subcommand("train", "train fusion classifiers");
    train_cmd->add_option("--task", tr.task, "task1 or task2")->required();
    train_cmd->add_option("--regime", tr.regime, "mono or multi");
    train_cmd->add_option("--encoder", tr.encoder, "hashing or precomputed");
    train_cmd->add_option("--encoder-mode", tr.encoder_mode, "frozen or finetune");
    train_cmd->add_option("--encoder-path", tr.encoder_path, "embedding table for precomputed");
    train_cmd->add_option("--channels", tr.channels, "subset of text,hashtag,emoji");
    train_cmd->add_option("--in", tr.inputs, "lang=preprocessed.jsonl (repeatable)")->required();
    train_cmd->add_option("--out-dir", tr.out_dir, "checkpoint output directory")->required();
    train_cmd->add_option("--config", tr.config_path, "JSON config file (flags override)");
    train_cmd->add_option("--emoji-lexicon", tr.emoji_lexicon, "emoji vector file");
    train_cmd->add_option("--seed", tr.seed, "master seed");
    train_cmd->add_option("--hash-dim", tr.hash_dim, "hashing encoder buckets");
    train_cmd->add_option("--proj-dim", tr.proj_dim, "trainable projection width (0: none)");
    train_cmd->add_option("--hidden-dims", tr.hidden_dims, "head widths, comma-separated");
    train_cmd->add_option("--activation", tr.activation, "identity, tanh or relu");
    train_cmd->add_option("--dropout", tr.dropout, "dropout probability");
    train_cmd->add_option("--lr", tr.lr, "initial learning rate");
    train_cmd->add_option("--lr-floor", tr.lr_floor, "scheduler stop threshold");
    train_cmd->add_option("--decay", tr.decay, "learning-rate decay factor");
    train_cmd->add_option("--batch-size", tr.batch_size, "minibatch size");
    train_cmd->add_option("--max-epochs", tr.max_epochs, "epoch cap");
    train_cmd->add_option("--adam-eps", tr.adam_eps, "Adam epsilon");
    train_cmd->add_option("--val-fraction", tr.val_fraction, "validation fraction");
    train_cmd->callback([&]() { cmd_train(tr); });

    // evaluate
    std::string ev_model, ev_in, ev_task = "task1", ev_out, ev_emoji;
    auto* ev = app.add_subcommand("evaluate", "score a checkpoint on labeled data");
    ev->add_option("--model", ev_model, "checkpoint directory")->required();
    ev->add_option("--in", ev_in, "preprocessed JSONL with labels")->required();
    ev->add_option("--task", ev_task, "task1 or task2")->required();
    ev->add_option("--out", ev_out, "metrics JSON path");
    ev->add_option("--emoji-lexicon", ev_emoji, "override emoji vector file");
    ev->callback([&]() { cmd_evaluate(ev_model, ev_in, ev_task, ev_out, ev_emoji); });

    // predict
    std::string pr_model, pr_in, pr_out, pr_emoji;
    auto* pr = app.add_subcommand("predict", "write predictions for a corpus");
    pr->add_option("--model", pr_model, "checkpoint directory")->required();
    pr->add_option("--in", pr_in, "preprocessed JSONL")->required();
    pr->add_option("--out", pr_out, "predictions TSV path")->required();
    pr->add_option("--emoji-lexicon", pr_emoji, "override emoji vector file");
    pr->callback([&]() { cmd_predict(pr_model, pr_in, pr_out, pr_emoji); });

    // perspective
    auto* persp = app.add_subcommand("perspective", "Perspective API toxicity features");
    persp->require_subcommand(1);

    PerspectiveCli px;
    auto* px_cmd = persp->add_subcommand("extract", "fetch toxicity feature vectors");
    px_cmd->add_option("--in", px.in_path, "corpus TSV")->required();
    px_cmd->add_option("--lang", px.lang, "en or de")->required();
    px_cmd->add_option("--mode", px.mode, "en, de or shared (default: --lang)");
    px_cmd->add_option("--out", px.out_path, "output vectors TSV")->required();
    px_cmd->add_option("--base-url", px.base_url, "API base URL (mock or live)");
    px_cmd->add_flag("--live", px.live, "allow requests to the live API");
    px_cmd->add_option("--rate-limit", px.rate_limit, "max requests per second");
    px_cmd->add_option("--cache-path", px.cache_path, "JSONL score cache");
    px_cmd->add_flag("--no-cache", px.no_cache, "disable the score cache");
    px_cmd->add_option("--max-attempts", px.max_attempts, "retry budget");
    px_cmd->add_option("--backoff-base", px.backoff_base, "retry backoff base seconds");
    px_cmd->callback([&]() { cmd_perspective_extract(px); });

    PerspectiveTrainCli pt;
    auto* pt_cmd = persp->add_subcommand("train", "train a deep MLP on extracted vectors");
    pt_cmd->add_option("--task", pt.task, "task1 or task2")->required();
    pt_cmd->add_option("--vectors", pt.vectors_path, "vectors TSV from extract")->required();
    pt_cmd->add_option("--corpus", pt.corpus_path, "labels corpus TSV")->required();
    pt_cmd->add_option("--lang", pt.lang, "corpus language")->required();
    pt_cmd->add_option("--out-dir", pt.out_dir, "checkpoint directory")->required();
    pt_cmd->add_option("--width", pt.width, "hidden width");
    pt_cmd->add_option("--activation", pt.activation, "identity, tanh or relu");
    pt_cmd->add_option("--optimizer", pt.optimizer, "adam (early stop) or sgd (adaptive LR)");
    pt_cmd->add_option("--patience", pt.patience, "early-stop patience");
    pt_cmd->add_option("--lr", pt.lr, "initial learning rate");
    pt_cmd->add_option("--batch-size", pt.batch_size, "minibatch size");
    pt_cmd->add_option("--max-epochs", pt.max_epochs, "epoch cap");
    pt_cmd->add_option("--dropout", pt.dropout, "dropout probability");
    pt_cmd->add_option("--adam-eps", pt.adam_eps, "Adam epsilon");
    pt_cmd->add_option("--val-fraction", pt.val_fraction, "internal validation fraction");
    pt_cmd->add_option("--seed", pt.seed, "seed");
    pt_cmd->callback([&]() { cmd_perspective_train(pt); });

    int ms_port = 0, ms_max_requests = 0;
    auto* ms_cmd = persp->add_subcommand("mock-serve", "run the bundled deterministic mock API");
    ms_cmd->add_option("--port", ms_port, "port to bind (0: any free port)");
    ms_cmd->add_option("--max-requests", ms_max_requests, "exit after N requests (0: serve forever)");
    ms_cmd->callback([&]() { cmd_perspective_mock_serve(ms_port, ms_max_requests); });

    PerspectiveGridCli pg;
    auto* pg_cmd = persp->add_subcommand("grid", "grid search with k-fold cross-validation");
    pg_cmd->add_option("--task", pg.task, "task1 or task2")->required();
    pg_cmd->add_option("--vectors", pg.vectors_path, "vectors TSV from extract")->required();
    pg_cmd->add_option("--corpus", pg.corpus_path, "labels corpus TSV")->required();
    pg_cmd->add_option("--lang", pg.lang, "corpus language")->required();
    pg_cmd->add_option("--out", pg.out_path, "ranked CSV output")->required();
    pg_cmd->add_option("--folds", pg.folds, "cross-validation folds");
    pg_cmd->add_option("--seed", pg.seed, "seed");
    pg_cmd->add_option("--widths", pg.widths, "hidden widths, comma-separated");
    pg_cmd->add_option("--activations", pg.activations, "activations, comma-separated");
    pg_cmd->add_option("--arms", pg.arms, "adam_earlystop and/or sgd_adaptive");
    pg_cmd->add_option("--max-epochs", pg.max_epochs, "epoch cap per fit");
    pg_cmd->add_option("--batch-size", pg.batch_size, "minibatch size");
    pg_cmd->add_option("--adam-lr", pg.adam_lr, "adam arm learning rate");
    pg_cmd->add_option("--sgd-lr", pg.sgd_lr, "sgd arm learning rate");
    pg_cmd->add_option("--patience", pg.patience, "early-stop patience");
    pg_cmd->callback([&]() { cmd_perspective_grid(pg); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NetworkError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
