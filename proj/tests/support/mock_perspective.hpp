#pragma once

#include <atomic>
#include <set>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "hsd/perspective.hpp"

namespace testutil {

// Deterministic stand-in for the Perspective API. Scores depend only on
// (text, attribute), so repeated runs produce identical vectors.
class MockPerspectiveServer {
public:
    MockPerspectiveServer() {
        server_.Post("/v1alpha1/comments:analyze",
                     [this](const httplib::Request& req, httplib::Response& res) {
                         handle(req, res);
                     });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this]() { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~MockPerspectiveServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int requests_seen() const { return requests_.load(); }

    // The first n requests get HTTP 429.
    void fail_first(int n) { fail_first_ = n; }
    // Omit this attribute from every response.
    void omit_attribute(const std::string& attr) { omitted_ = attr; }

    static double canned_score(const std::string& text, const std::string& attr) {
        return hsd::mock_summary_score(text, attr);
    }

private:
    void handle(const httplib::Request& req, httplib::Response& res) {
        int n = ++requests_;
        if (n <= fail_first_) {
            res.status = 429;
            res.set_content("{\"error\": \"rate limited\"}", "application/json");
            return;
        }
        auto body = nlohmann::json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.contains("comment")) {
            res.status = 400;
            return;
        }
        std::string text = body["comment"]["text"].get<std::string>();
        nlohmann::json scores = nlohmann::json::object();
        for (const auto& [attr, unused] : body["requestedAttributes"].items()) {
            if (attr == omitted_) continue;
            scores[attr] = {{"summaryScore", {{"value", canned_score(text, attr)}}}};
        }
        res.status = 200;
        res.set_content(nlohmann::json{{"attributeScores", scores}}.dump(),
                        "application/json");
    }

    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> requests_{0};
    int fail_first_ = 0;
    std::string omitted_;
};

} // namespace testutil
