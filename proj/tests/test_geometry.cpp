#include <catch2/catch.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "crowdscan/geometry.hpp"
#include "crowdscan/rng.hpp"

using namespace crowdscan;

namespace {

// independent oracle: plain homogeneous multiply-and-divide
Vec2 project_oracle(const Mat3& h, const Vec2& p) {
    const double x = h(0, 0) * p.x + h(0, 1) * p.y + h(0, 2);
    const double y = h(1, 0) * p.x + h(1, 1) * p.y + h(1, 2);
    const double w = h(2, 0) * p.x + h(2, 1) * p.y + h(2, 2);
    return {x / w, y / w};
}

Mat3 random_invertible_h(Rng& rng) {
    for (;;) {
        Mat3 m = Mat3::identity();
        m(0, 0) = rng.uniform(0.5, 2.0);
        m(0, 1) = rng.uniform(-0.3, 0.3);
        m(0, 2) = rng.uniform(-20.0, 20.0);
        m(1, 0) = rng.uniform(-0.3, 0.3);
        m(1, 1) = rng.uniform(0.5, 2.0);
        m(1, 2) = rng.uniform(-20.0, 20.0);
        m(2, 0) = rng.uniform(-1e-3, 1e-3);
        m(2, 1) = rng.uniform(-1e-3, 1e-3);
        m(2, 2) = 1.0;
        if (std::fabs(m.det()) > 0.1) return m;
    }
}

double max_elementwise_delta(const Mat3& a, const Mat3& b) {
    double d = 0.0;
    for (int i = 0; i < 9; ++i)
        d = std::max(d, std::fabs(a.a[std::size_t(i)] - b.a[std::size_t(i)]));
    return d;
}

} // namespace

TEST_CASE("estimate_homography: unit square to itself gives identity") {
    const std::vector<Correspondence> pairs = {
        {{0, 0}, {0, 0}}, {{1, 0}, {1, 0}}, {{1, 1}, {1, 1}}, {{0, 1}, {0, 1}}};
    const Homography h = estimate_homography(pairs);
    CHECK(max_elementwise_delta(h.m, Mat3::identity()) < 1e-9);
}

TEST_CASE("estimate_homography: pure scale 0.1") {
    const std::vector<Correspondence> pairs = {{{0, 0}, {0, 0}},
                                               {{100, 0}, {10, 0}},
                                               {{100, 100}, {10, 10}},
                                               {{0, 100}, {0, 10}}};
    const Homography h = estimate_homography(pairs);
    Mat3 expected = Mat3::identity();
    expected(0, 0) = 0.1;
    expected(1, 1) = 0.1;
    CHECK(max_elementwise_delta(h.m, expected) < 1e-9);
}

TEST_CASE("estimate_homography: recovers a random generator from 8 pairs") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        const Mat3 truth = random_invertible_h(rng);
        std::vector<Correspondence> pairs;
        for (int i = 0; i < 8; ++i) {
            const Vec2 p{rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0)};
            pairs.push_back({p, project_oracle(truth, p)});
        }
        const Homography h = estimate_homography(pairs);
        Homography truth_n{truth};
        truth_n.normalize();
        CHECK(max_elementwise_delta(h.m, truth_n.m) < 1e-6);
    }
}

TEST_CASE("estimate_homography: error cases") {
    const std::vector<Correspondence> three = {
        {{0, 0}, {0, 0}}, {{1, 0}, {1, 0}}, {{1, 1}, {1, 1}}};
    CHECK_THROWS_MATCHES(estimate_homography(three), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == Errc::InsufficientPoints;
                         }));

    // all image points collinear
    std::vector<Correspondence> collinear;
    for (int i = 0; i < 6; ++i)
        collinear.push_back({{double(i), double(2 * i)}, {double(i), double(i)}});
    CHECK_THROWS_MATCHES(estimate_homography(collinear), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == Errc::DegenerateConfiguration;
                         }));
}

TEST_CASE("estimate_homography is invariant to correspondence order") {
    Rng rng(7);
    const Mat3 truth = random_invertible_h(rng);
    std::vector<Correspondence> pairs;
    for (int i = 0; i < 10; ++i) {
        const Vec2 p{rng.uniform(0.0, 50.0), rng.uniform(0.0, 50.0)};
        pairs.push_back({p, project_oracle(truth, p)});
    }
    const Homography a = estimate_homography(pairs);
    std::mt19937 shuffle_rng(123);
    std::shuffle(pairs.begin(), pairs.end(), shuffle_rng);
    const Homography b = estimate_homography(pairs);
    CHECK(max_elementwise_delta(a.m, b.m) < 1e-9);
}

TEST_CASE("apply_homography basics") {
    CHECK(apply_homography(Homography::identity(), {5, 7}).x == Approx(5.0));
    CHECK(apply_homography(Homography::identity(), {5, 7}).y == Approx(7.0));

    Mat3 scale = Mat3::identity();
    scale(0, 0) = 0.1;
    scale(1, 1) = 0.1;
    const auto p = apply_homography(Homography::from_matrix(scale), {100, 50});
    CHECK(p.x == Approx(10.0));
    CHECK(p.y == Approx(5.0));
}

TEST_CASE("apply_homography matches the oracle on random inputs") {
    Rng rng(99);
    for (int i = 0; i < 100; ++i) {
        const Mat3 m = random_invertible_h(rng);
        const Homography h = Homography::from_matrix(m);
        const Vec2 p{rng.uniform(-50.0, 50.0), rng.uniform(-50.0, 50.0)};
        const Vec2 expected = project_oracle(h.m, p);
        const Vec2 got = apply_homography(h, p);
        CHECK(got.x == Approx(expected.x).margin(1e-12));
        CHECK(got.y == Approx(expected.y).margin(1e-12));
    }
}

TEST_CASE("apply_homography rejects points at infinity") {
    Mat3 m = Mat3::identity();
    m(2, 0) = 1.0;
    m(2, 2) = -5.0;  // w = x - 5
    const Homography h = Homography::from_matrix(m);
    CHECK_THROWS_MATCHES(apply_homography(h, {5.0, 3.0}), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == Errc::PointAtInfinity;
                         }));
}

TEST_CASE("homography round trip h^-1(h(p)) = p") {
    Rng rng(1234);
    for (int i = 0; i < 50; ++i) {
        const Homography h = Homography::from_matrix(random_invertible_h(rng));
        const Homography hi = h.inverse();
        const Vec2 p{rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0)};
        const auto fwd = h.m.apply({p.x, p.y, 1.0});
        if (std::fabs(fwd[2]) < 1e-3) continue;
        const Vec2 back = apply_homography(hi, apply_homography(h, p));
        CHECK(back.x == Approx(p.x).margin(1e-9));
        CHECK(back.y == Approx(p.y).margin(1e-9));
    }
}

TEST_CASE("scaled homographies produce identical mappings") {
    Rng rng(5);
    const Mat3 m = random_invertible_h(rng);
    const Homography a = Homography::from_matrix(m);
    const Homography b = Homography::from_matrix(m * 3.7);
    for (int i = 0; i < 20; ++i) {
        const Vec2 p{rng.uniform(0.0, 80.0), rng.uniform(0.0, 80.0)};
        const Vec2 pa = apply_homography(a, p);
        const Vec2 pb = apply_homography(b, p);
        CHECK(pa.x == Approx(pb.x).margin(1e-12));
        CHECK(pa.y == Approx(pb.y).margin(1e-12));
    }
}

namespace {

PanoramaLayout source_bounds_layout(int w, int h) {
    PanoramaLayout layout;
    layout.views = {{0, Homography::identity()}};
    layout.extent = {0.0, 0.0, double(w - 1), double(h - 1)};
    layout.resolution = 1.0;
    return layout;
}

} // namespace

TEST_CASE("rectify with identity H and matching layout is a no-op") {
    Rng rng(3);
    Frame f = Frame::gray(32, 24);
    for (auto& v : f.pixels) v = float(rng.uniform());
    const Frame out = rectify(f, Homography::identity(), source_bounds_layout(32, 24));
    REQUIRE(out.width == 32);
    REQUIRE(out.height == 24);
    for (std::size_t i = 0; i < f.pixels.size(); ++i)
        REQUIRE(out.pixels[i] == f.pixels[i]);
}

TEST_CASE("rectify of an all-zero frame is all zero") {
    const Frame f = Frame::gray(16, 16, 0.0f);
    const Frame out = rectify(f, Homography::identity(), source_bounds_layout(16, 16));
    for (float v : out.pixels) CHECK(v == 0.0f);
}

TEST_CASE("rectify undoes a known perspective warp on a checkerboard") {
    // ground-truth plane: 96x96 checkerboard with 16 px squares
    Frame board = Frame::gray(96, 96);
    for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 96; ++x)
            board.at(x, y) = ((x / 16 + y / 16) % 2 == 0) ? 1.0f : 0.0f;

    Mat3 warp = Mat3::identity();  // image -> ground, mild perspective
    warp(0, 0) = 1.05;
    warp(0, 1) = 0.02;
    warp(1, 1) = 0.95;
    warp(0, 2) = -1.5;
    warp(1, 2) = 2.0;
    warp(2, 0) = 4e-4;
    warp(2, 1) = -2e-4;
    const Homography h = Homography::from_matrix(warp);

    // synthesize the camera image by pulling from the plane through h
    Frame camera = Frame::gray(96, 96);
    for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 96; ++x) {
            const Vec2 g = apply_homography(h, {double(x), double(y)});
            if (g.x >= 0 && g.y >= 0 && g.x <= 95 && g.y <= 95)
                camera.at(x, y) = bilinear_sample(board, g.x, g.y);
        }

    const Frame recovered = rectify(camera, h, source_bounds_layout(96, 96));

    double mae = 0.0;
    int n = 0;
    for (int y = 8; y < 88; ++y)
        for (int x = 8; x < 88; ++x) {
            mae += std::fabs(recovered.at(x, y) - board.at(x, y));
            ++n;
        }
    mae /= n;
    CHECK(mae < 0.05);
}

TEST_CASE("fuse_panorama with one view equals rectify") {
    Rng rng(8);
    Frame f = Frame::gray(20, 20);
    for (auto& v : f.pixels) v = float(rng.uniform());
    const auto layout = source_bounds_layout(20, 20);
    const Frame a = rectify(f, Homography::identity(), layout);
    const Frame b = fuse_panorama(std::vector<Frame>{f}, layout);
    REQUIRE(a.pixels.size() == b.pixels.size());
    for (std::size_t i = 0; i < a.pixels.size(); ++i) REQUIRE(a.pixels[i] == b.pixels[i]);
}

TEST_CASE("fuse_panorama: disjoint views fill their own regions") {
    Frame fa = Frame::gray(10, 10, 0.25f);
    Frame fb = Frame::gray(10, 10, 0.75f);
    Mat3 shift = Mat3::identity();
    shift(0, 2) = 20.0;  // view b lands at ground x in [20, 29]

    PanoramaLayout layout;
    layout.views = {{0, Homography::identity()}, {1, Homography::from_matrix(shift)}};
    layout.extent = {0.0, 0.0, 29.0, 9.0};
    layout.resolution = 1.0;

    const Frame out = fuse_panorama(std::vector<Frame>{fa, fb}, layout);
    REQUIRE(out.width == 30);
    CHECK(out.at(5, 5) == 0.25f);
    CHECK(out.at(25, 5) == 0.75f);
    CHECK(out.at(15, 5) == 0.0f);  // gap between the views
}

TEST_CASE("fuse_panorama: overlapping views of one plane agree before averaging") {
    // one smooth ground-truth plane, two translated 30-wide views with ~30% overlap
    Frame plane = Frame::gray(60, 20);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 60; ++x)
            plane.at(x, y) = float(0.5 + 0.4 * std::sin(x * 0.2) * std::cos(y * 0.3));

    auto make_view = [&](int offset) {
        Frame v = Frame::gray(30, 20);
        for (int y = 0; y < 20; ++y)
            for (int x = 0; x < 30; ++x) v.at(x, y) = plane.at(x + offset, y);
        return v;
    };
    const Frame va = make_view(0), vb = make_view(21);

    Mat3 ha = Mat3::identity();
    Mat3 hb = Mat3::identity();
    hb(0, 2) = 21.0;

    PanoramaLayout layout;
    layout.extent = {0.0, 0.0, 50.0, 19.0};
    layout.resolution = 1.0;
    layout.views = {{0, Homography::from_matrix(ha)}};
    const Frame ra = rectify(va, Homography::from_matrix(ha), layout);
    const Frame rb = rectify(vb, Homography::from_matrix(hb), layout);

    double mad = 0.0;
    int n = 0;
    for (int y = 0; y < 20; ++y)
        for (int x = 21; x <= 29; ++x) {  // overlap region
            mad += std::fabs(ra.at(x, y) - rb.at(x, y));
            ++n;
        }
    mad /= n;
    CHECK(mad < 0.05);

    layout.views = {{0, Homography::from_matrix(ha)}, {1, Homography::from_matrix(hb)}};
    const Frame fused = fuse_panorama(std::vector<Frame>{va, vb}, layout);
    CHECK(fused.at(25, 10) ==
          Approx((ra.at(25, 10) + rb.at(25, 10)) / 2.0f).margin(1e-6));
}

TEST_CASE("fuse_panorama rejects mismatched layout") {
    PanoramaLayout layout;
    layout.views = {{0, Homography::identity()}};
    layout.extent = {0, 0, 10, 10};
    layout.resolution = 1.0;
    const std::vector<Frame> two = {Frame::gray(4, 4), Frame::gray(4, 4)};
    CHECK_THROWS_MATCHES(fuse_panorama(two, layout), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == Errc::LayoutMismatch;
                         }));
}

TEST_CASE("homography and correspondence files") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "crowdscan_geom_test";
    fs::create_directories(dir);

    Rng rng(17);
    const Homography h = Homography::from_matrix(random_invertible_h(rng));
    save_homography(dir / "h.txt", h);
    const Homography loaded = load_homography(dir / "h.txt");
    CHECK(max_elementwise_delta(h.m, loaded.m) < 1e-12);

    {
        std::ofstream out(dir / "pairs.txt");
        out << "# image px -> ground m\n";
        out << "0 0   0 0\n";
        out << "100 0  10 0  # corner\n";
        out << "100 100 10 10\n\n";
        out << "0 100  0 10\n";
    }
    const auto pairs = load_correspondences(dir / "pairs.txt");
    REQUIRE(pairs.size() == 4);
    CHECK(pairs[1].image_px.x == 100.0);
    CHECK(pairs[1].ground_m.x == 10.0);

    {
        std::ofstream out(dir / "bad.txt");
        out << "1 2 3\n";
    }
    CHECK_THROWS_AS(load_correspondences(dir / "bad.txt"), Error);
    fs::remove_all(dir);
}
