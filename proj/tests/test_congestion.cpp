#include <catch2/catch.hpp>

#include <cmath>
#include <vector>

#include "crowdscan/congestion.hpp"
#include "crowdscan/rng.hpp"

using namespace crowdscan;

namespace {

Tracklet straight_tracklet(int n_points, Vec2 start = {5, 5}, Vec2 step = {1.5, 0.0}) {
    Tracklet t;
    for (int i = 0; i < n_points; ++i) t.points.push_back(start + step * double(i));
    return t;
}

Tracklet sinusoid_tracklet(int n_points, double amplitude, double period,
                           Vec2 start = {5, 50}) {
    Tracklet t;
    for (int i = 0; i < n_points; ++i)
        t.points.push_back(
            {start.x + i, start.y + amplitude * std::sin(2.0 * M_PI * i / period)});
    return t;
}

/// Independent restatement of the score: unit mean displacement over the
/// centered window, orthogonal projections, sign changes times mean
/// magnitude, scaled by 1/window.
std::vector<double> oscillation_oracle(const Tracklet& t, int window) {
    const int n = int(t.points.size());
    std::vector<double> out(std::size_t(n), 0.0);
    const int half = window / 2;
    for (int i = half; i <= n - 1 - half; ++i) {
        double mx = 0.0, my = 0.0;
        for (int j = i - half; j < i + half; ++j) {
            mx += t.points[std::size_t(j) + 1].x - t.points[std::size_t(j)].x;
            my += t.points[std::size_t(j) + 1].y - t.points[std::size_t(j)].y;
        }
        mx /= window;
        my /= window;
        const double mag = std::sqrt(mx * mx + my * my);
        if (mag < 1e-6) continue;
        const double ox = -my / mag, oy = mx / mag;

        int crossings = 0, prev = 0;
        double amp = 0.0;
        for (int j = i - half; j < i + half; ++j) {
            const double sx = t.points[std::size_t(j) + 1].x - t.points[std::size_t(j)].x;
            const double sy = t.points[std::size_t(j) + 1].y - t.points[std::size_t(j)].y;
            const double o = sx * ox + sy * oy;
            amp += std::fabs(o);
            const int s = o > 1e-9 ? 1 : (o < -1e-9 ? -1 : 0);
            if (s != 0) {
                if (prev != 0 && s != prev) ++crossings;
                prev = s;
            }
        }
        out[std::size_t(i)] = crossings * (amp / window) / window;
    }
    return out;
}

} // namespace

TEST_CASE("oscillation_score: straight and stationary tracklets score zero") {
    const auto straight = oscillation_score(straight_tracklet(40), 16);
    for (double s : straight) CHECK(s < 1e-9);

    Tracklet still;
    for (int i = 0; i < 40; ++i) still.points.push_back({10, 10});
    const auto zero = oscillation_score(still, 16);
    for (double s : zero) CHECK(s == 0.0);
}

TEST_CASE("oscillation_score: sinusoid matches the oracle and dwarfs straight motion") {
    const Tracklet sin_t = sinusoid_tracklet(41, 2.0, 8.0);
    const auto scores = oscillation_score(sin_t, 16);
    const auto oracle = oscillation_oracle(sin_t, 16);
    REQUIRE(scores.size() == oracle.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
        CHECK(scores[i] == Approx(oracle[i]).margin(1e-9));

    const auto straight = oscillation_score(straight_tracklet(41), 16);
    double max_sin = 0.0, max_straight = 0.0;
    for (double s : scores) max_sin = std::max(max_sin, s);
    for (double s : straight) max_straight = std::max(max_straight, s);
    CHECK(max_sin > 0.1);
    CHECK(max_sin >= 100.0 * std::max(max_straight, 1e-12));
}

TEST_CASE("oscillation_score rejects short tracklets") {
    CHECK_THROWS_MATCHES(oscillation_score(straight_tracklet(10), 16), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == Errc::TrackletTooShort;
                         }));
    CHECK_THROWS_AS(oscillation_score(straight_tracklet(10), 3), Error);
}

TEST_CASE("oscillation_score is invariant under rotation and translation") {
    const Tracklet base = sinusoid_tracklet(41, 1.5, 8.0);
    const auto base_scores = oscillation_score(base, 16);

    const double theta = 0.7;
    const Vec2 shift{31.0, -12.0};
    Tracklet moved;
    for (const auto& p : base.points)
        moved.points.push_back({p.x * std::cos(theta) - p.y * std::sin(theta) + shift.x,
                                p.x * std::sin(theta) + p.y * std::cos(theta) + shift.y});
    const auto moved_scores = oscillation_score(moved, 16);
    for (std::size_t i = 0; i < base_scores.size(); ++i)
        CHECK(moved_scores[i] == Approx(base_scores[i]).margin(1e-9));
}

TEST_CASE("oscillation_score scales linearly with lateral amplitude") {
    const auto score_at = [](double amplitude) {
        const auto s = oscillation_score(sinusoid_tracklet(49, amplitude, 8.0), 16);
        double m = 0.0;
        for (double v : s) m = std::max(m, v);
        return m;
    };
    const double base = score_at(1.0);
    for (double amplitude : {0.5, 2.0, 5.0})
        CHECK(score_at(amplitude) / amplitude == Approx(base).epsilon(0.01));
}

TEST_CASE("build_oscillation_map: straight scene stays silent, oscillation stays local") {
    TrackletSet set;
    for (int i = 0; i < 5; ++i) {
        Tracklet t = straight_tracklet(40, {5.0, 10.0 + 8.0 * i});
        t.id = i;
        set.tracklets.push_back(std::move(t));
    }
    const auto quiet = build_oscillation_map(set, 16.0, 16, 96, 96);
    for (double s : quiet.scores) CHECK(s < 1e-9);

    // one oscillating tracklet confined to the left half
    Tracklet osc = sinusoid_tracklet(41, 2.0, 8.0, {4.0, 48.0});
    osc.id = 99;
    set.tracklets.push_back(osc);
    const auto map = build_oscillation_map(set, 16.0, 16, 96, 96);
    for (int cy = 0; cy < map.grid_h; ++cy)
        for (int cx = 3; cx < map.grid_w; ++cx)  // right of the sinusoid's extent
            CHECK(map.scores[map.idx(cx, cy)] < 1e-9);
    CHECK(map.max_score() > 0.0);
}

TEST_CASE("build_oscillation_map equals an independent accumulation pass") {
    Rng rng(6);
    TrackletSet set;
    for (int i = 0; i < 8; ++i) {
        Tracklet t = i % 2 == 0 ? sinusoid_tracklet(41, rng.uniform(0.5, 2.5), 8.0,
                                                    {rng.uniform(2.0, 20.0),
                                                     rng.uniform(20.0, 80.0)})
                                : straight_tracklet(41, {rng.uniform(2.0, 20.0),
                                                         rng.uniform(20.0, 80.0)},
                                                    {1.0, 0.3});
        t.id = i;
        set.tracklets.push_back(std::move(t));
    }
    const double cell = 16.0;
    const int window = 16;
    const auto map = build_oscillation_map(set, cell, window, 128, 96);

    std::vector<double> sums(map.scores.size(), 0.0);
    std::vector<int> counts(map.scores.size(), 0);
    for (const auto& t : set.tracklets) {
        const auto scores = oscillation_oracle(t, window);
        for (int i = window / 2; i <= int(t.points.size()) - 1 - window / 2; ++i) {
            const int cx = std::clamp(int(t.points[std::size_t(i)].x / cell), 0, map.grid_w - 1);
            const int cy = std::clamp(int(t.points[std::size_t(i)].y / cell), 0, map.grid_h - 1);
            sums[map.idx(cx, cy)] += scores[std::size_t(i)];
            counts[map.idx(cx, cy)] += 1;
        }
    }
    for (std::size_t c = 0; c < sums.size(); ++c) {
        const double expected = counts[c] > 0 ? sums[c] / counts[c] : 0.0;
        CHECK(map.scores[c] == Approx(expected).margin(1e-9));
        CHECK(map.counts[c] == counts[c]);
        if (map.counts[c] == 0) CHECK(map.scores[c] == 0.0);
    }
}

namespace {

OscillationMap map_from_scores(std::vector<double> scores, int w, int h) {
    OscillationMap m;
    m.grid_w = w;
    m.grid_h = h;
    m.cell_size = 16.0;
    m.scores = std::move(scores);
    m.counts.assign(m.scores.size(), 1);
    return m;
}

} // namespace

TEST_CASE("quantize_map: documented bin edges") {
    const auto m = map_from_scores({0.1, 1.0}, 2, 1);
    // T0 = 0.05, edges 0.05 / 0.3667 / 0.6833 / 1.0
    const auto q = quantize_map(m, 4, {0.05, 0.0});
    CHECK(q.labels[0] == 1);
    CHECK(q.labels[1] == 3);
}

TEST_CASE("quantize_map: degenerate and uniform maps") {
    const auto zero = quantize_map(map_from_scores({0.0, 0.0, 0.0}, 3, 1), 4);
    for (int l : zero.labels) CHECK(l == 0);

    const auto uniform = quantize_map(map_from_scores({0.5, 0.5, 0.5}, 3, 1), 4);
    for (int l : uniform.labels) CHECK(l == 3);

    CHECK_THROWS_AS(quantize_map(map_from_scores({0.1}, 1, 1), 1), Error);
}

TEST_CASE("quantize_map labels are monotone in score") {
    Rng rng(12);
    std::vector<double> scores(64);
    for (auto& s : scores) s = rng.uniform(0.0, 2.0);
    const auto m = map_from_scores(scores, 8, 8);
    const auto q = quantize_map(m, 5);
    for (std::size_t a = 0; a < scores.size(); ++a)
        for (std::size_t b = 0; b < scores.size(); ++b)
            if (scores[a] >= scores[b]) CHECK(q.labels[a] >= q.labels[b]);
}

namespace {

QuantizedMap labels_from(const std::vector<int>& labels, int w, int h, int levels = 4) {
    QuantizedMap q;
    q.grid_w = w;
    q.grid_h = h;
    q.cell_size = 16.0;
    q.levels = levels;
    q.labels = labels;
    return q;
}

} // namespace

TEST_CASE("candidate_regions: empty, single block, split blocks") {
    const auto empty = candidate_regions(labels_from(std::vector<int>(16, 0), 4, 4), 2, 1);
    CHECK(empty.empty());

    // 3x3 block of level-3 cells at (1..3, 1..3) in a 5x5 grid
    std::vector<int> block(25, 0);
    for (int y = 1; y <= 3; ++y)
        for (int x = 1; x <= 3; ++x) block[std::size_t(y) * 5 + x] = 3;
    const auto one = candidate_regions(labels_from(block, 5, 5), 2, 1);
    REQUIRE(one.size() == 1);
    CHECK(one[0].area_cells == 9);
    CHECK(one[0].centroid_px.x == Approx(2.5 * 16.0));
    CHECK(one[0].centroid_px.y == Approx(2.5 * 16.0));

    // two blocks separated by an all-zero row
    std::vector<int> two(5 * 7, 0);
    for (int y = 0; y <= 1; ++y)
        for (int x = 1; x <= 3; ++x) two[std::size_t(y) * 5 + x] = 2;
    for (int y = 4; y <= 5; ++y)
        for (int x = 1; x <= 3; ++x) two[std::size_t(y) * 5 + x] = 2;
    const auto pair = candidate_regions(labels_from(two, 5, 7), 2, 1);
    CHECK(pair.size() == 2);

    const auto filtered = candidate_regions(labels_from(two, 5, 7), 2, 8);
    CHECK(filtered.empty());  // each block has area 6 < 8
}

TEST_CASE("localize_congestion: persistent fixed region") {
    std::vector<std::pair<int, std::vector<CandidateRegion>>> segments;
    for (int s = 0; s < 6; ++s)
        segments.emplace_back(s * 45, std::vector<CandidateRegion>{{{100.0, 80.0}, 8}});
    const auto regions = localize_congestion(segments, 0.5, 48.0);
    REQUIRE(regions.size() == 1);
    CHECK(regions[0].confidence == Approx(1.0));
    CHECK(regions[0].kind == CongestionRegion::Kind::Fixed);
    CHECK(regions[0].centroid.x == Approx(100.0));
    CHECK(regions[0].segments_present.size() == 6);
}

TEST_CASE("localize_congestion: drifting chain is dynamic") {
    // centroid drifts 3 * match_radius across the chain, stepwise chained
    const double match_radius = 48.0;
    std::vector<std::pair<int, std::vector<CandidateRegion>>> segments;
    for (int s = 0; s < 7; ++s) {
        const double x = 60.0 + s * match_radius * 0.5;  // total drift = 3 * radius
        segments.emplace_back(s * 45, std::vector<CandidateRegion>{{{x, 80.0}, 8}});
    }
    const auto regions = localize_congestion(segments, 0.5, match_radius);
    REQUIRE(regions.size() == 1);
    CHECK(regions[0].kind == CongestionRegion::Kind::Dynamic);
}

TEST_CASE("localize_congestion: below-persistence chains are dropped") {
    std::vector<std::pair<int, std::vector<CandidateRegion>>> segments;
    for (int s = 0; s < 10; ++s) {
        std::vector<CandidateRegion> regions;
        if (s < 2) regions.push_back({{50.0, 50.0}, 6});
        segments.emplace_back(s * 45, std::move(regions));
    }
    CHECK(localize_congestion(segments, 0.5, 48.0).empty());
}

TEST_CASE("congestion JSON carries the documented fields") {
    CongestionRegion r;
    r.centroid = {10.5, 20.5};
    r.area_cells = 7.0;
    r.confidence = 0.75;
    r.segments_present = {0, 45, 90};
    r.kind = CongestionRegion::Kind::Dynamic;
    const auto j = congestion_to_json({r});
    CHECK(j.at("schema") == 1);
    REQUIRE(j.at("regions").size() == 1);
    const auto& rj = j.at("regions")[0];
    CHECK(rj.at("centroid")[0] == 10.5);
    CHECK(rj.at("kind") == "dynamic");
    CHECK(rj.at("segments").size() == 3);
}

TEST_CASE("congestion heatmap keeps frame dimensions") {
    Frame f = Frame::gray(64, 48, 0.5f);
    auto m = map_from_scores(std::vector<double>(12, 0.0), 4, 3);
    m.cell_size = 16.0;
    m.scores[5] = 1.0;
    const Frame heat = render_congestion_heatmap(f, m);
    CHECK(heat.width == 64);
    CHECK(heat.height == 48);
    CHECK(heat.channels == 3);
}
