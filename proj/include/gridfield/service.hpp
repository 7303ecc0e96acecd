#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridfield/query.hpp"
#include "gridfield/types.hpp"

namespace gridfield {

/// Row-major run lengths, alternating (skip, run) and starting with a skip.
std::vector<std::uint32_t> rle_encode(const Bitmap& mask);
Bitmap rle_decode(const std::vector<std::uint32_t>& runs, int width, int height);

/// Transport-neutral JSON for a query result. Timings live under "timings" so
/// callers can strip them when comparing bodies.
nlohmann::json query_result_json(const QueryResult& result, int width, int height);

struct EncoderError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Maps query text to an embedding. Implementations throw EncoderError.
using TextEncoder = std::function<Eigen::VectorXf(const std::string&)>;

/// Client for `POST {url}/embed {"text"} -> {"embedding": [...]}`.
TextEncoder http_text_encoder(const std::string& url);

struct HttpResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

class Service {
public:
    explicit Service(TextEncoder encoder = nullptr);

    /// Publishes a new field. In-flight requests keep the field they started with.
    void load(std::shared_ptr<const FeatureField> field, std::vector<ImageRGB> images = {});
    bool loaded() const;

    void register_query(const std::string& name, const Eigen::VectorXf& embedding);

    HttpResponse health() const;
    HttpResponse scene() const;
    HttpResponse render(const std::string& view) const;
    HttpResponse query(const std::string& body) const;
    HttpResponse list_queries() const;
    HttpResponse put_query(const std::string& name, const std::string& body);

private:
    struct State {
        std::shared_ptr<const FeatureField> field;
        std::shared_ptr<QueryEngine> engine;
        std::vector<std::string> thumbnails;  // base64 PNG
    };

    std::shared_ptr<const State> state() const;

    TextEncoder encoder_;
    mutable std::mutex state_mutex_;
    std::shared_ptr<const State> state_;
    mutable std::shared_mutex queries_mutex_;
    std::map<std::string, Eigen::VectorXf> queries_;
};

/// Blocks serving `service` over HTTP until the process is stopped.
void run_http_server(Service& service, const std::string& host, int port);

}  // namespace gridfield
