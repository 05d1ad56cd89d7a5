#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsd/errors.hpp"
#include "hsd/rng.hpp"
#include "hsd/tensor.hpp"

namespace hsd {

enum class Activation { identity, tanh_fn, relu };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::tanh_fn: return "tanh";
        case Activation::relu: return "relu";
    }
    return "?";
}

inline Activation parse_activation(std::string_view s) {
    if (s == "identity") return Activation::identity;
    if (s == "tanh") return Activation::tanh_fn;
    if (s == "relu") return Activation::relu;
    throw UsageError("unknown activation '" + std::string(s) + "'");
}

struct MLPConfig {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims; // at least one
    std::size_t num_classes = 2;
    Activation activation = Activation::tanh_fn;
    double dropout_p = 0.2;

    void validate() const {
        if (input_dim == 0) throw DataError("MLPConfig: input_dim must be positive");
        if (hidden_dims.empty()) throw DataError("MLPConfig: at least one hidden layer");
        for (auto h : hidden_dims)
            if (h == 0) throw DataError("MLPConfig: hidden widths must be positive");
        if (num_classes < 2) throw DataError("MLPConfig: num_classes must be >= 2");
        if (!(dropout_p >= 0.0 && dropout_p < 1.0))
            throw DataError("MLPConfig: dropout_p must be in [0,1)");
    }
};

inline nlohmann::json mlp_config_json(const MLPConfig& c) {
    return {{"input_dim", c.input_dim},
            {"hidden_dims", c.hidden_dims},
            {"num_classes", c.num_classes},
            {"activation", to_string(c.activation)},
            {"dropout_p", c.dropout_p}};
}

inline MLPConfig mlp_config_from_json(const nlohmann::json& j) {
    MLPConfig c;
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.activation = parse_activation(j.at("activation").get<std::string>());
    c.dropout_p = j.at("dropout_p").get<double>();
    c.validate();
    return c;
}

// Weight matrices and biases, chained per MLPConfig:
// layer<i>.weight is hidden[i] x fan_in, out.weight is num_classes x hidden.back().
struct ModelParams {
    std::vector<Tensor> tensors; // W0, b0, W1, b1, ..., Wout, bout

    std::vector<Tensor*> pointers() {
        std::vector<Tensor*> out;
        for (auto& t : tensors) out.push_back(&t);
        return out;
    }
    std::vector<const Tensor*> pointers() const {
        std::vector<const Tensor*> out;
        for (const auto& t : tensors) out.push_back(&t);
        return out;
    }
};

// Seeded Xavier-uniform weights, zero biases.
inline ModelParams init_params(const MLPConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParams params;
    rng::Engine eng(seed);
    std::size_t fan_in = config.input_dim;
    auto add_layer = [&](const std::string& name, std::size_t fan_out) {
        Tensor w(name + ".weight", {fan_out, fan_in});
        double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& x : w.data) x = rng::uniform_real(eng, -a, a);
        params.tensors.push_back(std::move(w));
        params.tensors.emplace_back(name + ".bias", std::vector<std::size_t>{fan_out});
        fan_in = fan_out;
    };
    for (std::size_t i = 0; i < config.hidden_dims.size(); ++i)
        add_layer("layer" + std::to_string(i), config.hidden_dims[i]);
    add_layer("out", config.num_classes);
    return params;
}

inline std::vector<Tensor> zero_like(const ModelParams& params) {
    std::vector<Tensor> out;
    out.reserve(params.tensors.size());
    for (const auto& t : params.tensors) out.emplace_back(t.name, t.shape);
    return out;
}

enum class Mode { train, eval };

// Everything backprop needs from one forward pass.
struct ForwardCache {
    std::vector<std::vector<double>> layer_inputs; // input to each linear layer
    std::vector<std::vector<double>> preacts;      // z of each hidden layer
    std::vector<std::vector<double>> dropout_scale; // 0 or 1/(1-p), per hidden unit
};

namespace detail {

inline double activate(double z, Activation a) {
    switch (a) {
        case Activation::identity: return z;
        case Activation::tanh_fn: return std::tanh(z);
        case Activation::relu: return z > 0.0 ? z : 0.0;
    }
    return z;
}

inline double activate_grad(double z, Activation a) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::tanh_fn: {
            double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    }
    return 1.0;
}

inline std::vector<double> linear(const Tensor& w, const Tensor& b,
                                  std::span<const double> x) {
    std::vector<double> out(w.rows());
    for (std::size_t r = 0; r < w.rows(); ++r) {
        double acc = b.data[r];
        const double* row = w.data.data() + r * w.cols();
        for (std::size_t c = 0; c < w.cols(); ++c) acc += row[c] * x[c];
        out[r] = acc;
    }
    return out;
}

} // namespace detail

// Train mode drops each hidden activation independently with probability
// dropout_p and scales survivors by 1/(1-p); eval mode is deterministic.
inline std::vector<double> forward(const ModelParams& params, std::span<const double> x,
                                   const MLPConfig& config, Mode mode,
                                   std::uint64_t dropout_seed = 0,
                                   ForwardCache* cache = nullptr) {
    if (x.size() != config.input_dim)
        throw DataError("forward: input length " + std::to_string(x.size()) +
                        " != input_dim " + std::to_string(config.input_dim));
    const std::size_t n_hidden = config.hidden_dims.size();
    if (params.tensors.size() != 2 * (n_hidden + 1))
        throw DataError("forward: parameter tensor count does not match config");

    std::vector<double> act(x.begin(), x.end());
    for (std::size_t layer = 0; layer < n_hidden; ++layer) {
        const Tensor& w = params.tensors[2 * layer];
        const Tensor& b = params.tensors[2 * layer + 1];
        if (w.cols() != act.size())
            throw DataError("forward: dimension mismatch at " + w.name);
        if (cache) cache->layer_inputs.push_back(act);
        auto z = detail::linear(w, b, act);
        if (cache) cache->preacts.push_back(z);
        std::vector<double> scale;
        if (mode == Mode::train && config.dropout_p > 0.0) {
            rng::Engine eng(rng::mix(dropout_seed, layer));
            scale.resize(z.size());
            double keep_scale = 1.0 / (1.0 - config.dropout_p);
            for (std::size_t i = 0; i < z.size(); ++i)
                scale[i] = rng::uniform_unit(eng) < config.dropout_p ? 0.0 : keep_scale;
        }
        act.resize(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) {
            double a = detail::activate(z[i], config.activation);
            act[i] = scale.empty() ? a : a * scale[i];
        }
        if (cache) cache->dropout_scale.push_back(std::move(scale));
    }
    const Tensor& w_out = params.tensors[2 * n_hidden];
    const Tensor& b_out = params.tensors[2 * n_hidden + 1];
    if (w_out.cols() != act.size())
        throw DataError("forward: dimension mismatch at " + w_out.name);
    if (cache) cache->layer_inputs.push_back(act);
    return detail::linear(w_out, b_out, act);
}

// Numerically stable -log softmax(logits)[gold] and its logit gradient.
inline std::pair<double, std::vector<double>> softmax_xent(std::span<const double> logits,
                                                           std::size_t gold) {
    if (gold >= logits.size()) throw DataError("softmax_xent: gold index out of range");
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    std::vector<double> probs(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - mx);
        sum += probs[i];
    }
    for (double& p : probs) p /= sum;
    double loss = -(logits[gold] - mx - std::log(sum));
    std::vector<double> dlogits = probs;
    dlogits[gold] -= 1.0;
    return {loss, std::move(dlogits)};
}

inline std::vector<double> softmax(std::span<const double> logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    std::vector<double> probs(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - mx);
        sum += probs[i];
    }
    for (double& p : probs) p /= sum;
    return probs;
}

// Accumulates parameter gradients for one example into grads (shaped like
// params). Returns d(loss)/d(input) for encoder fine-tuning.
inline std::vector<double> backward(const ModelParams& params, const MLPConfig& config,
                                    const ForwardCache& cache, std::span<const double> dlogits,
                                    std::vector<Tensor>& grads) {
    const std::size_t n_hidden = config.hidden_dims.size();
    std::vector<double> delta(dlogits.begin(), dlogits.end());
    for (std::size_t layer = n_hidden + 1; layer-- > 0;) {
        const Tensor& w = params.tensors[2 * layer];
        Tensor& gw = grads[2 * layer];
        Tensor& gb = grads[2 * layer + 1];
        const auto& input = cache.layer_inputs[layer];
        for (std::size_t r = 0; r < w.rows(); ++r) {
            gb.data[r] += delta[r];
            double* grow = gw.data.data() + r * w.cols();
            for (std::size_t c = 0; c < w.cols(); ++c) grow[c] += delta[r] * input[c];
        }
        std::vector<double> dprev(w.cols(), 0.0);
        for (std::size_t r = 0; r < w.rows(); ++r) {
            const double* row = w.data.data() + r * w.cols();
            for (std::size_t c = 0; c < w.cols(); ++c) dprev[c] += row[c] * delta[r];
        }
        if (layer == 0) return dprev;
        // dprev is the gradient at the previous hidden layer's (possibly
        // dropped) activation; undo dropout scaling and the nonlinearity.
        std::size_t h = layer - 1;
        const auto& scale = cache.dropout_scale[h];
        const auto& z = cache.preacts[h];
        delta.assign(dprev.size(), 0.0);
        for (std::size_t i = 0; i < dprev.size(); ++i) {
            double s = scale.empty() ? 1.0 : scale[i];
            delta[i] = dprev[i] * s * detail::activate_grad(z[i], config.activation);
        }
    }
    return {};
}

struct Prediction {
    int label = 0;
    std::vector<double> probs;
};

// Argmax with ties broken toward the lowest class index.
inline Prediction predict(const ModelParams& params, std::span<const double> x,
                          const MLPConfig& config) {
    auto logits = forward(params, x, config, Mode::eval);
    auto probs = softmax(logits);
    int best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return {best, std::move(probs)};
}

struct AdamState {
    std::vector<Tensor> m, v;
    std::int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    static AdamState shaped_like(const std::vector<Tensor*>& params, double eps = 1e-8) {
        AdamState s;
        s.adam_eps = eps;
        for (const Tensor* p : params) {
            s.m.emplace_back(p->name, p->shape);
            s.v.emplace_back(p->name, p->shape);
        }
        return s;
    }
};

// Bias-corrected Adam over an arbitrary parameter group.
inline void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads,
                      AdamState& state, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw DataError("adam_step: parameter/gradient/moment group size mismatch");
    state.t += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = *grads[k];
        if (!p.same_shape(g))
            throw DataError("adam_step: gradient shape mismatch for " + p.name);
        if (!g.all_finite())
            throw DataError("adam_step: non-finite gradient in " + p.name);
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g.data[i];
            v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * g.data[i] * g.data[i];
            double mhat = m.data[i] / bc1;
            double vhat = v.data[i] / bc2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + state.adam_eps);
        }
    }
}

inline void sgd_step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads,
                     double lr) {
    if (params.size() != grads.size())
        throw DataError("sgd_step: parameter/gradient group size mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = *grads[k];
        if (!p.same_shape(g))
            throw DataError("sgd_step: gradient shape mismatch for " + p.name);
        if (!g.all_finite())
            throw DataError("sgd_step: non-finite gradient in " + p.name);
        for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] -= lr * g.data[i];
    }
}

// ---------------------------------------------------------------------------
// Checkpoint I/O: a directory holding config.json, manifest.json and one raw
// little-endian float32 blob per tensor.

inline void save_tensors(const std::filesystem::path& dir,
                         const std::vector<const Tensor*>& tensors) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = nlohmann::json::array();
    for (const Tensor* t : tensors) {
        std::string file = t->name + ".bin";
        for (char& c : file)
            if (c == '/' || c == '\\') c = '_';
        manifest.push_back({{"name", t->name},
                            {"shape", t->shape},
                            {"file", file},
                            {"dtype", "float32_le"}});
        std::ofstream out(dir / file, std::ios::binary);
        if (!out) throw DataError("cannot write tensor blob '" + (dir / file).string() + "'");
        for (double x : t->data) {
            float f = static_cast<float>(x);
            out.write(reinterpret_cast<const char*>(&f), sizeof f);
        }
    }
    std::ofstream mout(dir / "manifest.json");
    mout << nlohmann::json{{"tensors", manifest}}.dump(2) << '\n';
}

inline std::vector<Tensor> load_tensors(const std::filesystem::path& dir) {
    std::ifstream min(dir / "manifest.json");
    if (!min) throw DataError("cannot open checkpoint manifest in '" + dir.string() + "'");
    nlohmann::json manifest = nlohmann::json::parse(min);
    std::vector<Tensor> tensors;
    for (const auto& entry : manifest.at("tensors")) {
        Tensor t(entry.at("name").get<std::string>(),
                 entry.at("shape").get<std::vector<std::size_t>>());
        std::ifstream in(dir / entry.at("file").get<std::string>(), std::ios::binary);
        if (!in) throw DataError("missing tensor blob for " + t.name);
        for (double& x : t.data) {
            float f = 0.f;
            in.read(reinterpret_cast<char*>(&f), sizeof f);
            if (!in) throw DataError("truncated tensor blob for " + t.name);
            x = f;
        }
        tensors.push_back(std::move(t));
    }
    return tensors;
}

} // namespace hsd
