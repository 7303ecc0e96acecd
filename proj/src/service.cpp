#include "gridfield/service.hpp"

#include <algorithm>
#include <cmath>

#include <httplib.h>

#include "gridfield/png_io.hpp"

namespace gridfield {

using nlohmann::json;

std::vector<std::uint32_t> rle_encode(const Bitmap& mask) {
    std::vector<std::uint32_t> runs;
    std::uint32_t count = 0;
    bool on = false;
    const std::uint8_t* p = mask.data();
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
        const bool bit = p[i] != 0;
        if (bit != on) {
            runs.push_back(count);
            count = 0;
            on = bit;
        }
        ++count;
    }
    runs.push_back(count);
    return runs;
}

Bitmap rle_decode(const std::vector<std::uint32_t>& runs, int width, int height) {
    Bitmap mask = Bitmap::Zero(height, width);
    std::uint8_t* p = mask.data();
    std::size_t pos = 0;
    const std::size_t total = static_cast<std::size_t>(width) * height;
    for (std::size_t k = 0; k < runs.size(); ++k) {
        if (pos + runs[k] > total) throw FormatError("rle_decode: runs exceed the mask size");
        if (k % 2 == 1) std::fill(p + pos, p + pos + runs[k], std::uint8_t{1});
        pos += runs[k];
    }
    if (pos != total) throw FormatError("rle_decode: runs do not cover the mask");
    return mask;
}

json query_result_json(const QueryResult& result, int width, int height) {
    json distances = json::array();
    for (const auto& d : result.distances) {
        distances.push_back({{"min", d.minCoeff()}, {"max", d.maxCoeff()}, {"mean", d.mean()}});
    }
    return {{"view", result.view},
            {"scores", result.scores},
            {"targets", result.targets},
            {"distance", distances},
            {"mask", {{"width", width}, {"height", height}, {"area", count_area(result.mask)}, {"rle", rle_encode(result.mask)}}},
            {"timings",
             {{"render_s", result.timings.render_s},
              {"restore_s", result.timings.restore_s},
              {"mask_s", result.timings.mask_s},
              {"cache_hit", result.timings.cache_hit}}}};
}

TextEncoder http_text_encoder(const std::string& url) {
    std::string base = url;
    if (base.size() >= 6 && base.ends_with("/embed")) base.resize(base.size() - 6);
    while (!base.empty() && base.back() == '/') base.pop_back();
    return [base](const std::string& text) -> Eigen::VectorXf {
        httplib::Client client(base);
        client.set_connection_timeout(5);
        client.set_read_timeout(30);
        const auto res = client.Post("/embed", json{{"text", text}}.dump(), "application/json");
        if (!res) throw EncoderError("encoder unreachable: " + httplib::to_string(res.error()));
        if (res->status != 200) throw EncoderError("encoder returned HTTP " + std::to_string(res->status));
        try {
            const auto values = json::parse(res->body).at("embedding").get<std::vector<float>>();
            return Eigen::Map<const Eigen::VectorXf>(values.data(), static_cast<Eigen::Index>(values.size()));
        } catch (const json::exception& e) {
            throw EncoderError(std::string("malformed encoder response: ") + e.what());
        }
    };
}

namespace {

HttpResponse json_response(int status, const json& body) { return {status, body.dump(), "application/json"}; }

HttpResponse error_response(int status, const std::string& message) {
    return json_response(status, {{"error", message}});
}

std::string thumbnail(const ImageRGB& image) {
    const int factor = std::max(1, (std::max(image.width, image.height) + 159) / 160);
    const int w = std::max(1, image.width / factor);
    const int h = std::max(1, image.height / factor);
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto px = image.pixel(x * factor, y * factor);
            for (int c = 0; c < 3; ++c) {
                rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
                    static_cast<std::uint8_t>(std::lround(std::clamp(px(c), 0.0f, 1.0f) * 255.0f));
            }
        }
    }
    const auto png_bytes = png::encode_rgb8(w, h, rgb);
    return httplib::detail::base64_encode(std::string(png_bytes.begin(), png_bytes.end()));
}

std::optional<int> parse_view(const std::string& s) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size()) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

int embedding_dim(const FeatureField& field) {
    if (!field.canonical.empty()) return static_cast<int>(field.canonical.front().size());
    for (const auto& cell : field.lattice.cells) {
        if (!cell.entries.empty()) return static_cast<int>(cell.entries.front().embedding.size());
    }
    return 0;
}

}  // namespace

Service::Service(TextEncoder encoder) : encoder_(std::move(encoder)) {}

void Service::load(std::shared_ptr<const FeatureField> field, std::vector<ImageRGB> images) {
    if (!field) throw ContractViolation("Service::load: null field");
    auto next = std::make_shared<State>();
    next->engine = std::make_shared<QueryEngine>(field);
    next->field = std::move(field);
    for (const auto& image : images) next->thumbnails.push_back(thumbnail(image));
    std::lock_guard lock(state_mutex_);
    state_ = std::move(next);
}

std::shared_ptr<const Service::State> Service::state() const {
    std::lock_guard lock(state_mutex_);
    return state_;
}

bool Service::loaded() const { return state() != nullptr; }

void Service::register_query(const std::string& name, const Eigen::VectorXf& embedding) {
    if (name.empty()) throw DomainError("query name must be non-empty");
    const double n = embedding.cast<double>().norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw DomainError("query embedding must have positive finite norm");
    std::unique_lock lock(queries_mutex_);
    queries_[name] = (embedding.cast<double>() / n).cast<float>();
}

HttpResponse Service::health() const { return json_response(200, {{"status", "ok"}, {"loaded", loaded()}}); }

HttpResponse Service::scene() const {
    const auto s = state();
    if (!s) return error_response(409, "no field loaded");
    const FeatureField& f = *s->field;
    json views = json::array();
    for (std::size_t t = 0; t < f.cameras.size(); ++t) {
        const Camera& c = f.cameras[t];
        json v = {{"id", t},
                  {"world_to_camera", json::array()},
                  {"fx", c.fx},
                  {"fy", c.fy},
                  {"cx", c.cx},
                  {"cy", c.cy},
                  {"near", c.near}};
        for (int r = 0; r < 4; ++r) {
            for (int k = 0; k < 4; ++k) v["world_to_camera"].push_back(c.world_to_camera(r, k));
        }
        if (t < s->thumbnails.size()) v["thumbnail"] = "data:image/png;base64," + s->thumbnails[t];
        views.push_back(std::move(v));
    }
    json centers = json::array();
    for (const auto& cell : f.lattice.cells) {
        centers.push_back({{"object_id", cell.object_id},
                           {"center", {cell.center.x(), cell.center.y(), cell.center.z()}},
                           {"entries", cell.entries.size()}});
    }
    json names = json::array();
    {
        std::shared_lock lock(queries_mutex_);
        for (const auto& [name, v] : queries_) names.push_back(name);
    }
    return json_response(200, {{"width", f.width},
                               {"height", f.height},
                               {"view_count", f.cameras.size()},
                               {"views", views},
                               {"K", f.lattice.K},
                               {"lattice", {{"dim", f.lattice.dim}, {"side", f.lattice.side}, {"edge", f.lattice.edge},
                                            {"cells", centers}}},
                               {"queries", names}});
}

HttpResponse Service::render(const std::string& view) const {
    const auto s = state();
    if (!s) return error_response(409, "no field loaded");
    const auto v = parse_view(view);
    if (!v) return error_response(400, "view must be an integer");
    try {
        const auto map = s->engine->feature_map(*v);
        std::vector<std::uint8_t> rgb(static_cast<std::size_t>(map->data.size()));
        for (Eigen::Index p = 0; p < map->data.rows(); ++p) {
            for (int c = 0; c < 3; ++c) {
                rgb[static_cast<std::size_t>(p) * 3 + c] =
                    static_cast<std::uint8_t>(std::lround(std::clamp(map->data(p, c), 0.0, 1.0) * kFeatureScale));
            }
        }
        const auto bytes = png::encode_rgb8(map->width, map->height, rgb);
        return {200, std::string(bytes.begin(), bytes.end()), "image/png"};
    } catch (const std::out_of_range& e) {
        return error_response(404, e.what());
    }
}

HttpResponse Service::query(const std::string& body) const {
    const auto s = state();
    if (!s) return error_response(409, "no field loaded");
    json req;
    try {
        req = json::parse(body);
    } catch (const json::exception& e) {
        return error_response(400, std::string("malformed JSON: ") + e.what());
    }
    const int dim = embedding_dim(*s->field);
    QueryInput input;
    try {
        input.view = req.at("view").get<int>();
        if (req.contains("top_n")) input.config.top_n = req.at("top_n").get<int>();
        if (req.contains("tau_ac")) input.config.tau_ac = req.at("tau_ac").get<double>();

        Eigen::VectorXf e;
        if (req.contains("name")) {
            const auto name = req.at("name").get<std::string>();
            std::shared_lock lock(queries_mutex_);
            const auto it = queries_.find(name);
            if (it == queries_.end()) return error_response(404, "unknown query name '" + name + "'");
            e = it->second;
        } else if (req.contains("embedding")) {
            const auto values = req.at("embedding").get<std::vector<float>>();
            e = Eigen::Map<const Eigen::VectorXf>(values.data(), static_cast<Eigen::Index>(values.size()));
        } else if (req.contains("text")) {
            if (!encoder_) return error_response(502, "no text encoder configured");
            try {
                e = encoder_(req.at("text").get<std::string>());
            } catch (const EncoderError& err) {
                return error_response(502, err.what());
            }
        } else {
            return error_response(400, "request needs one of name, embedding, text");
        }
        if (e.size() != dim) {
            return error_response(400, "embedding length " + std::to_string(e.size()) + " != " + std::to_string(dim));
        }
        const double n = e.cast<double>().norm();
        if (!(n > 0.0) || !std::isfinite(n)) return error_response(400, "embedding must have positive finite norm");
        input.embedding = (e.cast<double>() / n).cast<float>();
    } catch (const json::exception& err) {
        return error_response(400, std::string("bad request: ") + err.what());
    }

    try {
        const QueryResult result = s->engine->query(input);
        return json_response(200, query_result_json(result, s->field->width, s->field->height));
    } catch (const std::out_of_range& err) {
        return error_response(404, err.what());
    } catch (const DomainError& err) {
        return error_response(400, err.what());
    }
}

HttpResponse Service::list_queries() const {
    json out = json::object();
    std::shared_lock lock(queries_mutex_);
    for (const auto& [name, v] : queries_) out[name] = {{"dim", v.size()}};
    return json_response(200, out);
}

HttpResponse Service::put_query(const std::string& name, const std::string& body) {
    std::vector<float> values;
    try {
        const json j = json::parse(body);
        values = (j.is_array() ? j : j.at("embedding")).get<std::vector<float>>();
    } catch (const json::exception& e) {
        return error_response(400, std::string("bad request: ") + e.what());
    }
    const auto s = state();
    if (s && static_cast<int>(values.size()) != embedding_dim(*s->field)) {
        return error_response(400, "embedding length " + std::to_string(values.size()) + " does not match the field");
    }
    try {
        register_query(name, Eigen::Map<const Eigen::VectorXf>(values.data(), static_cast<Eigen::Index>(values.size())));
    } catch (const DomainError& e) {
        return error_response(400, e.what());
    }
    return json_response(200, {{"name", name}, {"dim", values.size()}});
}

void run_http_server(Service& service, const std::string& host, int port) {
    httplib::Server server;
    auto send = [](httplib::Response& res, const HttpResponse& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
        res.set_header("Access-Control-Allow-Origin", "*");
    };
    server.Get("/health", [&](const httplib::Request&, httplib::Response& res) { send(res, service.health()); });
    server.Get("/scene", [&](const httplib::Request&, httplib::Response& res) { send(res, service.scene()); });
    server.Get("/render", [&](const httplib::Request& req, httplib::Response& res) {
        send(res, service.render(req.get_param_value("view")));
    });
    server.Post("/query", [&](const httplib::Request& req, httplib::Response& res) { send(res, service.query(req.body)); });
    server.Get("/queries", [&](const httplib::Request&, httplib::Response& res) { send(res, service.list_queries()); });
    server.Put(R"(/queries/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
        send(res, service.put_query(req.matches[1], req.body));
    });
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });
    if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace gridfield
