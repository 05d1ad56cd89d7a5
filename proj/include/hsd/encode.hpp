#pragma once

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsd/errors.hpp"
#include "hsd/preprocess.hpp"
#include "hsd/rng.hpp"
#include "hsd/tensor.hpp"

namespace hsd {

// Sentence embedding seam. encode() must return a finite vector of length
// dim() for any input, including the empty string. Implementations with
// trainable parameters expose them through the gradient interface below;
// the fine-tuning regime routes the text-channel gradient into them.
class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual std::size_t dim() const = 0;
    virtual bool trainable() const = 0;
    virtual std::vector<double> encode(std::string_view text) const = 0;

    virtual std::vector<Tensor*> parameters() { return {}; }
    virtual std::vector<const Tensor*> parameters() const { return {}; }
    virtual std::vector<Tensor*> gradients() { return {}; }
    virtual void zero_grad() {}
    // d(loss)/d(encode(text)) -> accumulate into parameter gradients.
    virtual void accumulate_grad(std::string_view /*text*/, std::span<const double> /*dvec*/) {}
};

// Deterministic feature-hashing bag-of-words encoder: lowercased whitespace
// tokens hashed into hash_dim buckets, l2-normalized. With a projection it
// becomes trainable (output = P * h), which lets the fine-tuning code paths
// run at desk scale.
class HashingEncoder : public TextEncoder {
public:
    explicit HashingEncoder(std::size_t hash_dim = 256) : hash_dim_(hash_dim) {}

    HashingEncoder(std::size_t hash_dim, std::size_t proj_dim, std::uint64_t seed)
        : hash_dim_(hash_dim), projection_("encoder.projection", {proj_dim, hash_dim}),
          proj_grad_("encoder.projection", {proj_dim, hash_dim}), has_projection_(true) {
        rng::Engine eng(seed);
        double a = std::sqrt(6.0 / static_cast<double>(proj_dim + hash_dim));
        for (double& w : projection_.data) w = rng::uniform_real(eng, -a, a);
    }

    std::size_t dim() const override {
        return has_projection_ ? projection_.rows() : hash_dim_;
    }
    bool trainable() const override { return has_projection_; }
    std::size_t hash_dim() const { return hash_dim_; }

    std::vector<double> hashed(std::string_view text) const {
        std::vector<double> v(hash_dim_, 0.0);
        std::size_t i = 0;
        std::string tok;
        auto flush = [&]() {
            if (tok.empty()) return;
            v[rng::fnv1a64(tok) % hash_dim_] += 1.0;
            tok.clear();
        };
        while (i < text.size()) {
            char c = text[i++];
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                flush();
            } else {
                if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
                tok.push_back(c);
            }
        }
        flush();
        double norm = 0.0;
        for (double x : v) norm += x * x;
        if (norm > 0.0) {
            norm = std::sqrt(norm);
            for (double& x : v) x /= norm;
        }
        return v;
    }

    std::vector<double> encode(std::string_view text) const override {
        auto h = hashed(text);
        if (!has_projection_) return h;
        std::vector<double> out(projection_.rows(), 0.0);
        for (std::size_t r = 0; r < projection_.rows(); ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < hash_dim_; ++c) acc += projection_.at(r, c) * h[c];
            out[r] = acc;
        }
        return out;
    }

    std::vector<Tensor*> parameters() override {
        if (!has_projection_) return {};
        return {&projection_};
    }
    std::vector<const Tensor*> parameters() const override {
        if (!has_projection_) return {};
        return {&projection_};
    }
    std::vector<Tensor*> gradients() override {
        if (!has_projection_) return {};
        return {&proj_grad_};
    }
    void zero_grad() override { proj_grad_.fill(0.0); }

    void accumulate_grad(std::string_view text, std::span<const double> dvec) override {
        if (!has_projection_) return;
        if (dvec.size() != projection_.rows())
            throw DataError("HashingEncoder: gradient size mismatch");
        auto h = hashed(text);
        for (std::size_t r = 0; r < projection_.rows(); ++r) {
            if (dvec[r] == 0.0) continue;
            for (std::size_t c = 0; c < hash_dim_; ++c)
                if (h[c] != 0.0) proj_grad_.at(r, c) += dvec[r] * h[c];
        }
    }

private:
    std::size_t hash_dim_;
    Tensor projection_;
    Tensor proj_grad_;
    bool has_projection_ = false;
};

// Adapter for an external pretrained sentence encoder consumed as a lookup
// file of precomputed embeddings (JSON lines: {"text": ..., "vector": [...]}).
// Dimensionality is discovered at load. Frozen only: a static table has no
// gradient path, so fine-tuning requires a trainable encoder.
class PrecomputedEncoder : public TextEncoder {
public:
    explicit PrecomputedEncoder(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open embedding table '" + path + "'");
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("text") || !j.contains("vector"))
                throw DataError("embedding table line " + std::to_string(line_no) +
                                ": expected {\"text\":..., \"vector\":[...]}");
            std::vector<double> vec = j["vector"].get<std::vector<double>>();
            if (dim_ == 0) dim_ = vec.size();
            if (vec.size() != dim_)
                throw DataError("embedding table line " + std::to_string(line_no) +
                                ": vector length " + std::to_string(vec.size()) +
                                " != " + std::to_string(dim_));
            table_[j["text"].get<std::string>()] = std::move(vec);
        }
        if (dim_ == 0)
            throw DataError("embedding table '" + path + "' contains no vectors");
    }

    std::size_t dim() const override { return dim_; }
    bool trainable() const override { return false; }

    std::vector<double> encode(std::string_view text) const override {
        auto it = table_.find(std::string(text));
        if (it == table_.end()) return std::vector<double>(dim_, 0.0);
        return it->second;
    }

private:
    std::unordered_map<std::string, std::vector<double>> table_;
    std::size_t dim_ = 0;
};

// emoji -> dense semantic vector, consumed from a word2vec-style text file.
struct EmojiLexicon {
    std::unordered_map<std::string, std::vector<double>> vectors;
    std::size_t dim = 0;
};

// File format: first line "<count> <dim>", then "<emoji> <dim floats>".
inline EmojiLexicon load_emoji_lexicon(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open emoji lexicon '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw DataError("emoji lexicon '" + path + "' is empty");
    std::istringstream header(line);
    std::size_t count = 0, dim = 0;
    if (!(header >> count >> dim) || dim == 0)
        throw DataError("emoji lexicon '" + path + "': malformed header '" + line + "'");

    EmojiLexicon lex;
    lex.dim = dim;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++row;
        std::istringstream ls(line);
        std::string emoji;
        if (!(ls >> emoji))
            throw DataError("emoji lexicon row " + std::to_string(row) + ": missing key");
        std::vector<double> vec;
        vec.reserve(dim);
        double x;
        while (ls >> x) vec.push_back(x);
        if (vec.size() != dim)
            throw DataError("emoji lexicon row " + std::to_string(row) + ": expected " +
                            std::to_string(dim) + " values, got " + std::to_string(vec.size()));
        if (lex.vectors.count(emoji))
            std::cerr << "warning: duplicate emoji lexicon entry '" << emoji
                      << "'; last one wins\n";
        lex.vectors[emoji] = std::move(vec);
    }
    if (row != count)
        throw DataError("emoji lexicon '" + path + "': header claims " + std::to_string(count) +
                        " rows, file has " + std::to_string(row));
    return lex;
}

// Elementwise arithmetic mean; the empty list maps to a zero vector of the
// channel's dimension so the classifier input width stays fixed.
inline std::vector<double> average_embeddings(const std::vector<std::vector<double>>& vectors,
                                              std::size_t dim) {
    if (vectors.empty()) return std::vector<double>(dim, 0.0);
    std::vector<double> mean(vectors.front().size(), 0.0);
    for (const auto& v : vectors) {
        if (v.size() != mean.size())
            throw DataError("average_embeddings: mixed vector lengths");
        for (std::size_t i = 0; i < v.size(); ++i) mean[i] += v[i];
    }
    for (double& x : mean) x /= static_cast<double>(vectors.size());
    return mean;
}

// Each hashtag's word list joins with single spaces, is encoded, and the
// per-hashtag embeddings are averaged.
inline std::vector<double> embed_hashtags(const std::vector<std::vector<std::string>>& segmented,
                                          const TextEncoder& encoder) {
    std::vector<std::vector<double>> encoded;
    encoded.reserve(segmented.size());
    for (const auto& words : segmented) {
        std::string joined;
        for (std::size_t i = 0; i < words.size(); ++i) {
            if (i) joined += ' ';
            joined += words[i];
        }
        encoded.push_back(encoder.encode(joined));
    }
    return average_embeddings(encoded, encoder.dim());
}

// Mean over known emojis; unknown emojis are skipped, and an all-unknown or
// empty list yields the zero vector.
inline std::vector<double> embed_emojis(const std::vector<std::string>& emojis,
                                        const EmojiLexicon& lexicon) {
    std::vector<std::vector<double>> found;
    for (const auto& e : emojis) {
        auto it = lexicon.vectors.find(e);
        if (it != lexicon.vectors.end()) found.push_back(it->second);
    }
    return average_embeddings(found, lexicon.dim);
}

enum class Channel { text, hashtag, emoji };

inline std::string to_string(Channel c) {
    switch (c) {
        case Channel::text: return "text";
        case Channel::hashtag: return "hashtag";
        case Channel::emoji: return "emoji";
    }
    return "?";
}

inline Channel parse_channel(std::string_view s) {
    if (s == "text") return Channel::text;
    if (s == "hashtag") return Channel::hashtag;
    if (s == "emoji") return Channel::emoji;
    throw UsageError("unknown channel '" + std::string(s) + "'");
}

struct ChannelSpan {
    Channel channel;
    std::size_t offset = 0;
    std::size_t length = 0;
};

struct FusedFeatures {
    std::vector<double> vector;
    std::vector<ChannelSpan> channel_spec; // enabled channels only, fixed order
    std::map<Channel, bool> mask;
};

// Concatenates enabled channels in the fixed order text, hashtag, emoji.
// The text channel is mandatory.
inline FusedFeatures fuse(const TweetParts& parts, const TextEncoder& encoder,
                          const EmojiLexicon& lexicon, const std::set<Channel>& channels) {
    if (!channels.count(Channel::text))
        throw DataError("fuse: the text channel is required");
    FusedFeatures out;
    for (Channel c : {Channel::text, Channel::hashtag, Channel::emoji})
        out.mask[c] = channels.count(c) > 0;

    auto append = [&](Channel c, std::vector<double>&& v) {
        out.channel_spec.push_back({c, out.vector.size(), v.size()});
        out.vector.insert(out.vector.end(), v.begin(), v.end());
    };
    append(Channel::text, encoder.encode(parts.cleaned_text));
    if (channels.count(Channel::hashtag))
        append(Channel::hashtag, embed_hashtags(parts.segmented_hashtags, encoder));
    if (channels.count(Channel::emoji))
        append(Channel::emoji, embed_emojis(parts.emojis, lexicon));
    return out;
}

// Static channel layout for a configuration; fuse() produces exactly this.
inline std::vector<ChannelSpan> channel_spans(const TextEncoder& encoder,
                                              const EmojiLexicon& lexicon,
                                              const std::set<Channel>& channels) {
    if (!channels.count(Channel::text))
        throw DataError("fuse: the text channel is required");
    std::vector<ChannelSpan> spans;
    std::size_t offset = 0;
    spans.push_back({Channel::text, offset, encoder.dim()});
    offset += encoder.dim();
    if (channels.count(Channel::hashtag)) {
        spans.push_back({Channel::hashtag, offset, encoder.dim()});
        offset += encoder.dim();
    }
    if (channels.count(Channel::emoji)) spans.push_back({Channel::emoji, offset, lexicon.dim});
    return spans;
}

// Input width of the classifier for a channel configuration.
inline std::size_t fused_dim(const TextEncoder& encoder, const EmojiLexicon& lexicon,
                             const std::set<Channel>& channels) {
    auto spans = channel_spans(encoder, lexicon, channels);
    return spans.back().offset + spans.back().length;
}

} // namespace hsd
