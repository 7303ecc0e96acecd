#include <doctest.h>

#include <random>

#include "gridfield/dataset_io.hpp"
#include "gridfield/png_io.hpp"
#include "helpers.hpp"

using namespace gridfield;

TEST_CASE("encode_feature scales into (0,255)") {
    CHECK(encode_feature(Vec3(0.5, 0.5, 0.5)) == Vec3(127.5, 127.5, 127.5));
    // 255 * f by hand
    const Vec3 e = encode_feature(Vec3(0.25, 0.75, 0.25));
    CHECK(e.x() == 63.75);
    CHECK(e.y() == 191.25);
    CHECK(e.z() == 63.75);
    const Vec3 f(0.1, 0.2, 0.3);
    CHECK((decode_feature(encode_feature(f)) - f).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("encode_feature rejects components outside (0,1)") {
    CHECK_THROWS_AS(encode_feature(Vec3(0.0, 0.5, 0.5)), DomainError);
    CHECK_THROWS_AS(encode_feature(Vec3(0.5, 1.0, 0.5)), DomainError);
    CHECK_THROWS_AS(encode_feature(Vec3(0.5, 0.5, -0.1)), DomainError);
    CHECK_THROWS_AS(decode_feature(Vec3(255.0, 1.0, 1.0)), DomainError);
}

TEST_CASE("encode_feature is strictly monotone and injective") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(1e-6, 1.0 - 1e-6);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 a(u(rng), u(rng), u(rng));
        Vec3 b = a;
        const int c = i % 3;
        b(c) = u(rng);
        if (b(c) == a(c)) continue;
        const Vec3 ea = encode_feature(a);
        const Vec3 eb = encode_feature(b);
        CHECK((ea(c) < eb(c)) == (a(c) < b(c)));
        CHECK(ea != eb);
    }
}

TEST_CASE("look_at produces a rigid pose that sees its target on the optical axis") {
    const Camera cam = Camera::look_at(Vec3(1, 2, -5), Vec3(0, 0, 0), Vec3(0, -1, 0), 100, 100, 32, 32);
    const Mat3 r = cam.rotation();
    CHECK(((r * r.transpose()) - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0));
    const Vec2 px = cam.project(cam.to_camera(Vec3::Zero()));
    CHECK(px.x() == doctest::Approx(32.0));
    CHECK(px.y() == doctest::Approx(32.0));
}

TEST_CASE("validate_dataset accepts a synthetic dataset and is pure") {
    const auto scene = generate_synthetic_scene(testutil::small_spec());
    const auto r1 = validate_dataset(scene.dataset);
    CHECK(r1.empty());
    CHECK(validate_dataset(scene.dataset) == r1);
}

TEST_CASE("validate_dataset names a zero-area mask") {
    auto scene = generate_synthetic_scene(testutil::small_spec());
    MaskRecord& m = scene.dataset.masks[1][0];
    m.bitmap.setZero();
    m.area = 0;
    m.histogram.reset();
    const auto report = validate_dataset(scene.dataset);
    REQUIRE(report.size() == 1);
    CHECK(report[0].view == 1);
    CHECK(report[0].local == 0);
    CHECK(report[0].code == "mask.empty");
}

TEST_CASE("validate_dataset names embeddings whose length disagrees with D") {
    auto scene = generate_synthetic_scene(testutil::small_spec());
    scene.dataset.masks[2][1].embedding = Eigen::VectorXf::Ones(5);
    const auto report = validate_dataset(scene.dataset);
    REQUIRE(report.size() == 1);
    CHECK(report[0].view == 2);
    CHECK(report[0].local == 1);
    CHECK(report[0].code == "embedding.dim");
}

TEST_CASE("validate_dataset flags a non-orthonormal camera") {
    auto scene = generate_synthetic_scene(testutil::small_spec());
    scene.dataset.views[0].camera.world_to_camera(0, 0) *= 1.01;
    const auto report = validate_dataset(scene.dataset);
    REQUIRE(!report.empty());
    CHECK(report[0].code == "camera.rotation");
}

TEST_CASE("dataset write/read round trip is bit-exact") {
    const auto scene = generate_synthetic_scene(testutil::small_spec(3, 3, 9));
    const auto dir = testutil::temp_dir("roundtrip");
    write_dataset(dir, scene.dataset);
    const Dataset back = read_dataset(dir);
    const Dataset& ds = scene.dataset;

    CHECK(back.meta.dim == ds.meta.dim);
    CHECK(back.meta.width == ds.meta.width);
    CHECK(back.meta.height == ds.meta.height);
    CHECK(back.meta.source == ds.meta.source);
    REQUIRE(back.view_count() == ds.view_count());
    for (int t = 0; t < ds.view_count(); ++t) {
        CHECK(back.views[t].rgb.data == ds.views[t].rgb.data);
        CHECK(back.views[t].camera.world_to_camera == ds.views[t].camera.world_to_camera);
        CHECK(back.views[t].camera.fx == ds.views[t].camera.fx);
        CHECK(back.views[t].camera.cy == ds.views[t].camera.cy);
        CHECK(back.views[t].camera.near == ds.views[t].camera.near);
        REQUIRE(back.masks[t].size() == ds.masks[t].size());
        for (std::size_t j = 0; j < ds.masks[t].size(); ++j) {
            const auto& a = ds.masks[t][j];
            const auto& b = back.masks[t][j];
            CHECK(a.key() == b.key());
            CHECK((a.bitmap == b.bitmap).all());
            CHECK(a.area == b.area);
            CHECK(a.embedding == b.embedding);
            REQUIRE(b.histogram);
            CHECK(a.histogram->bins == b.histogram->bins);
        }
    }
    CHECK(back.matches.pairs == ds.matches.pairs);
    CHECK(back.canonical == ds.canonical);
}

TEST_CASE("gaussians.bin round trip is exact for float-representable clouds") {
    const auto scene = generate_synthetic_scene(testutil::small_spec());
    const auto dir = testutil::temp_dir("gaussians");
    write_gaussians(dir / "g.bin", scene.cloud);
    const GaussianCloud back = read_gaussians(dir / "g.bin");
    CHECK(back.positions == scene.cloud.positions);
    CHECK(back.scales == scene.cloud.scales);
    CHECK(back.rotations == scene.cloud.rotations);
    CHECK(back.opacities == scene.cloud.opacities);
    CHECK(back.features == scene.cloud.features);
    CHECK(testutil::slurp(dir / "g.bin").size() == static_cast<std::size_t>(scene.cloud.size()) * 14 * 4);
}

TEST_CASE("reading a truncated payload is a format error, not a violation") {
    const auto scene = generate_synthetic_scene(testutil::small_spec());
    const auto dir = testutil::temp_dir("truncated");
    write_dataset(dir, scene.dataset);
    auto bytes = testutil::slurp(dir / "embeddings.bin");
    bytes.resize(bytes.size() - 3);
    std::ofstream(dir / "embeddings.bin", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_AS(read_dataset(dir), FormatError);
}

TEST_CASE("mask PNGs are 1-bit and round trip") {
    const Bitmap m = testutil::rect_mask(13, 7, 2, 1, 9, 5);
    const auto bytes = png::encode_mask(m);
    CHECK(bytes[24] == 1);  // IHDR bit depth
    CHECK((png::decode_mask(bytes) == m).all());
}
