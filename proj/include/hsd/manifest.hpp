#pragma once

#include <chrono>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsd/digest.hpp"
#include "hsd/errors.hpp"

namespace hsd {

// Audit record for one CLI invocation: config snapshot, input digests, seed,
// produced artifacts with digests, timing. Timestamps live only here, so
// primary artifacts stay byte-identical across reruns.
struct RunManifest {
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> inputs;  // path, sha256
    std::vector<std::pair<std::string, std::string>> outputs; // path, sha256
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    std::int64_t started_unix_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count();

    void add_input(const std::string& path) { inputs.emplace_back(path, sha256_file(path)); }
    void add_output(const std::string& path) { outputs.emplace_back(path, sha256_file(path)); }

    void write(const std::string& path) const {
        auto digest_list = [](const std::vector<std::pair<std::string, std::string>>& v) {
            nlohmann::json out = nlohmann::json::array();
            for (const auto& [p, d] : v) out.push_back({{"path", p}, {"sha256", d}});
            return out;
        };
        auto duration_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
        nlohmann::json j = {{"command", command},
                            {"config", config},
                            {"seed", seed},
                            {"inputs", digest_list(inputs)},
                            {"outputs", digest_list(outputs)},
                            {"started_unix_ms", started_unix_ms},
                            {"duration_ms", duration_ms}};
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write run manifest '" + path + "'");
        out << j.dump(2) << '\n';
    }
};

} // namespace hsd
