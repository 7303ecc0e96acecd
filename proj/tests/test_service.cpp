#include <doctest.h>

#include <random>
#include <thread>

#include "gridfield/field_io.hpp"
#include "gridfield/mapping.hpp"
#include "gridfield/service.hpp"
#include "helpers.hpp"

// after Eigen: <resolv.h> defines a _res macro that collides with Eigen internals
#include <httplib.h>

using namespace gridfield;
using nlohmann::json;

namespace {

struct Loaded {
    SyntheticScene scene;
    std::shared_ptr<FeatureField> field;
};

const Loaded& default_scene() {
    static const Loaded l = [] {
        Loaded out;
        SyntheticSceneSpec spec;  // K = 8, T = 5
        spec.gaussians_per_object = 600;
        out.scene = generate_synthetic_scene(spec);
        out.field = make_field(out.scene.cloud, cross_view_grid_mapping(out.scene.dataset, {}), out.scene.dataset);
        return out;
    }();
    return l;
}

json without_timings(json j) {
    j.erase("timings");
    return j;
}

std::string query_body(const json& j) { return j.dump(); }

}  // namespace

TEST_CASE("RLE examples") {
    Bitmap m = Bitmap::Zero(2, 3);
    CHECK(rle_encode(m) == std::vector<std::uint32_t>{6});
    m(0, 0) = 1;
    CHECK(rle_encode(m) == std::vector<std::uint32_t>{0, 1, 5});
    m(1, 2) = 1;  // row-major: last pixel
    CHECK(rle_encode(m) == std::vector<std::uint32_t>{0, 1, 4, 1});
    CHECK_THROWS_AS(rle_decode({7}, 3, 2), FormatError);
    CHECK_THROWS_AS(rle_decode({2, 1}, 3, 2), FormatError);
}

TEST_CASE("RLE round trips random masks") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const int w = 1 + static_cast<int>(rng() % 40);
        const int h = 1 + static_cast<int>(rng() % 30);
        std::bernoulli_distribution coin(trial % 10 / 10.0);
        Bitmap m(h, w);
        for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = coin(rng);
        const auto runs = rle_encode(m);
        CHECK((rle_decode(runs, w, h) == m).all());
        std::uint64_t total = 0;
        for (auto r : runs) total += r;
        CHECK(total == static_cast<std::uint64_t>(w) * h);
    }
}

TEST_CASE("service state: 409 before load, scene listing after") {
    Service service;
    CHECK(service.scene().status == 409);
    CHECK(service.query(R"({"view": 0, "name": "x"})").status == 409);
    CHECK(json::parse(service.health().body)["loaded"] == false);

    const auto& l = default_scene();
    std::vector<ImageRGB> images;
    for (const auto& v : l.scene.dataset.views) images.push_back(v.rgb);
    service.load(l.field, images);
    service.register_query("object-3", l.scene.prototypes[3]);
    const auto res = service.scene();
    REQUIRE(res.status == 200);
    const json s = json::parse(res.body);
    CHECK(s["K"] == 8);
    CHECK(s["lattice"]["cells"].size() == 8);
    CHECK(s["views"].size() == 5);
    CHECK(s["views"][0]["world_to_camera"].size() == 16);
    CHECK(s["views"][0]["thumbnail"].get<std::string>().starts_with("data:image/png;base64,"));
    CHECK(s["queries"] == json::array({"object-3"}));
}

TEST_CASE("service query equals the engine result the CLI serialises") {
    const auto& l = default_scene();
    Service service;
    service.load(l.field);
    service.register_query("object-2", l.scene.prototypes[2]);

    const auto res = service.query(query_body({{"view", 1}, {"name", "object-2"}, {"top_n", 2}}));
    REQUIRE(res.status == 200);
    const json body = json::parse(res.body);

    QueryEngine engine(l.field);
    QueryInput in;
    in.embedding = l.scene.prototypes[2].normalized();
    in.view = 1;
    in.config.top_n = 2;
    const QueryResult direct = engine.query(in);
    const json expected = query_result_json(direct, l.field->width, l.field->height);
    CHECK(without_timings(body) == without_timings(expected));

    const auto runs = body["mask"]["rle"].get<std::vector<std::uint32_t>>();
    CHECK((rle_decode(runs, l.field->width, l.field->height) == direct.mask).all());

    // Raw embeddings are normalised on intake; a power-of-two scale is exact.
    std::vector<float> raw(l.scene.prototypes[2].data(), l.scene.prototypes[2].data() + l.scene.prototypes[2].size());
    for (auto& v : raw) v *= 4.0f;
    const auto by_embedding = service.query(query_body({{"view", 1}, {"embedding", raw}, {"top_n", 2}}));
    REQUIRE(by_embedding.status == 200);
    CHECK(without_timings(json::parse(by_embedding.body)) == without_timings(body));
}

TEST_CASE("service errors map to HTTP classes") {
    const auto& l = default_scene();
    Service service;
    service.load(l.field);
    service.register_query("a", l.scene.prototypes[0]);
    CHECK(service.query(query_body({{"view", 0}, {"name", "missing"}})).status == 404);
    CHECK(service.query(query_body({{"view", 42}, {"name", "a"}})).status == 404);
    CHECK(service.query(query_body({{"view", 0}, {"embedding", {1.0, 0.0}}})).status == 400);
    CHECK(service.query("{not json").status == 400);
    CHECK(service.query(query_body({{"view", 0}})).status == 400);
    CHECK(service.query(query_body({{"view", 0}, {"name", "a"}, {"tau_ac", -1.0}})).status == 400);
    CHECK(service.query(query_body({{"view", 0}, {"text", "a red object"}})).status == 502);
    CHECK(service.render("zero").status == 400);
    CHECK(service.render("9").status == 404);
    const auto png_res = service.render("0");
    CHECK(png_res.status == 200);
    CHECK(png_res.content_type == "image/png");
    CHECK(service.put_query("b", "[1, 2]").status == 400);
    CHECK(service.put_query("b", "nope").status == 400);
}

TEST_CASE("registered queries are listed and replaceable") {
    const auto& l = default_scene();
    Service service;
    service.load(l.field);
    json body = std::vector<float>(l.scene.prototypes[1].data(), l.scene.prototypes[1].data() + 32);
    CHECK(service.put_query("chair", body.dump()).status == 200);
    CHECK(service.put_query("chair", json{{"embedding", body}}.dump()).status == 200);
    const json listed = json::parse(service.list_queries().body);
    CHECK(listed.size() == 1);
    CHECK(listed["chair"]["dim"] == 32);
}

TEST_CASE("identical and concurrent requests return identical bodies modulo timings") {
    const auto& l = default_scene();
    Service service;
    service.load(l.field);
    service.register_query("q", l.scene.prototypes[5]);
    const std::string req = query_body({{"view", 3}, {"name", "q"}, {"top_n", 3}, {"tau_ac", 8.0}});
    const json first = without_timings(json::parse(service.query(req).body));
    const json second_full = json::parse(service.query(req).body);
    CHECK(second_full["timings"]["cache_hit"] == true);
    CHECK(without_timings(second_full) == first);

    std::vector<json> bodies(6);
    std::vector<std::thread> threads;
    for (int i = 0; i < 6; ++i) {
        threads.emplace_back([&, i] { bodies[i] = without_timings(json::parse(service.query(req).body)); });
    }
    for (auto& t : threads) t.join();
    for (const auto& b : bodies) CHECK(b == first);
}

TEST_CASE("text queries go through the external encoder endpoint") {
    const auto& l = default_scene();
    httplib::Server mock;
    const Eigen::VectorXf proto = l.scene.prototypes[4];
    mock.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
        const json j = json::parse(req.body);
        if (j.at("text") != "object four") {
            res.status = 422;
            return;
        }
        res.set_content(json{{"embedding", std::vector<float>(proto.data(), proto.data() + proto.size())}}.dump(),
                        "application/json");
    });
    const int port = mock.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server([&] { mock.listen_after_bind(); });
    mock.wait_until_ready();

    Service service(http_text_encoder("http://127.0.0.1:" + std::to_string(port) + "/embed"));
    service.load(l.field);
    service.register_query("four", proto);
    const auto by_text = service.query(query_body({{"view", 2}, {"text", "object four"}}));
    const auto by_name = service.query(query_body({{"view", 2}, {"name", "four"}}));
    REQUIRE(by_text.status == 200);
    CHECK(without_timings(json::parse(by_text.body)) == without_timings(json::parse(by_name.body)));
    CHECK(service.query(query_body({{"view", 2}, {"text", "something else"}})).status == 502);

    mock.stop();
    server.join();
    // endpoint gone: 502 and no partial result
    const auto gone = service.query(query_body({{"view", 2}, {"text", "object four"}}));
    CHECK(gone.status == 502);
    CHECK_FALSE(json::parse(gone.body).contains("mask"));
}

TEST_CASE("reload publishes a new field atomically") {
    const auto& l = default_scene();
    Service service;
    service.load(l.field);
    service.register_query("q", l.scene.prototypes[0]);
    const std::string req = query_body({{"view", 0}, {"name", "q"}});
    const json before = without_timings(json::parse(service.query(req).body));

    auto shifted = std::make_shared<FeatureField>(*l.field);
    shifted->cloud.features.setConstant(0.0);
    std::atomic<bool> done = false;
    std::thread reader([&] {
        while (!done) {
            const auto r = service.query(req);
            CHECK(r.status == 200);
        }
    });
    service.load(shifted);
    done = true;
    reader.join();
    const json after = without_timings(json::parse(service.query(req).body));
    CHECK(after["scores"] == before["scores"]);
    CHECK(after["mask"]["area"] == 0);
}
