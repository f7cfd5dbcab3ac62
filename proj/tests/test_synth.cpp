#include <catch2/catch.hpp>

#include <cmath>

#include "crowdscan/synth.hpp"

using namespace crowdscan;

namespace {

ScenarioSpec mini_lane_scenario() {
    ScenarioSpec s;
    s.name = "mini";
    s.width = 120;
    s.height = 80;
    s.frames = 40;
    s.agents = 1;
    s.lanes = {{{10, 30, 10, 20}, {110, 30, 8, 20}, 2.0}};
    s.repulsion = 0.0;
    s.seed = 5;
    return s;
}

} // namespace

TEST_CASE("generate_scenario is deterministic for spec + seed") {
    const ScenarioSpec spec = builtin_scenario("free_flow");
    ScenarioSpec small = spec;
    small.frames = 30;
    const auto a = generate_scenario(small);
    const auto b = generate_scenario(small);

    REQUIRE(a.frames.size() == b.frames.size());
    for (std::size_t i = 0; i < a.frames.size(); ++i)
        REQUIRE(a.frames[i].pixels == b.frames[i].pixels);  // bit identical
    REQUIRE(a.truth.trajectories.size() == b.truth.trajectories.size());
    for (std::size_t i = 0; i < a.truth.trajectories.size(); ++i)
        for (std::size_t k = 0; k < a.truth.trajectories[i].size(); ++k) {
            REQUIRE(a.truth.trajectories[i][k].x == b.truth.trajectories[i][k].x);
            REQUIRE(a.truth.trajectories[i][k].y == b.truth.trajectories[i][k].y);
        }
}

TEST_CASE("agents=0 gives pure background and empty truth") {
    ScenarioSpec s = mini_lane_scenario();
    s.agents = 0;
    s.frames = 3;
    const auto scenario = generate_scenario(s);
    REQUIRE(scenario.frames.size() == 3);
    CHECK(scenario.truth.trajectories.empty());
    // static background: frames are identical
    CHECK(scenario.frames[0].pixels == scenario.frames[1].pixels);
    for (float v : scenario.frames[0].pixels) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("single unobstructed agent follows the closed-form path") {
    const auto scenario = generate_scenario(mini_lane_scenario());
    REQUIRE(scenario.truth.trajectories.size() == 1);
    const auto& traj = scenario.truth.trajectories[0];
    REQUIRE(traj.size() == 40);
    const double x0 = traj[0].x;
    for (std::size_t t = 0; t < traj.size(); ++t) {
        if (traj[t].x < x0) break;  // wrapped at the goal
        CHECK(traj[t].x == Approx(x0 + 2.0 * double(t)).margin(0.5));
        CHECK(traj[t].y == Approx(traj[0].y).margin(0.5));
    }
}

TEST_CASE("bottleneck slows agents upstream of the gap") {
    ScenarioSpec spec = builtin_scenario("bottleneck_fixed");
    spec.frames = 150;
    const auto scenario = generate_scenario(spec);
    const RectPx gap = *spec.bottleneck;
    const double free_speed = spec.lanes[0].speed;

    double speed_sum = 0.0;
    int samples = 0;
    for (const auto& traj : scenario.truth.trajectories) {
        for (std::size_t t = 50; t + 1 < traj.size(); ++t) {
            const Vec2& p = traj[t];
            const bool upstream = p.x > gap.x - 40.0 && p.x < gap.x &&
                                  p.y > gap.y - 25.0 && p.y < gap.y + gap.h + 25.0;
            if (!upstream) continue;
            const Vec2 step = traj[t + 1] - traj[t];
            if (step.norm() > free_speed * 3.0) continue;  // wrap jump
            speed_sum += step.dot(Vec2{1.0, 0.0});         // longitudinal progress
            ++samples;
        }
    }
    REQUIRE(samples > 100);
    CHECK(speed_sum / samples < 0.5 * free_speed);
}

TEST_CASE("agents never enter obstacles") {
    ScenarioSpec spec = builtin_scenario("bottleneck_fixed");
    spec.frames = 120;
    const auto scenario = generate_scenario(spec);
    for (const auto& traj : scenario.truth.trajectories)
        for (const auto& p : traj)
            for (const auto& o : spec.obstacles) CHECK(!o.contains(p));

    ScenarioSpec moving = builtin_scenario("moving_blockage");
    moving.frames = 120;
    const auto blocked = generate_scenario(moving);
    REQUIRE(blocked.truth.blockage_track.size() == 120);
    for (const auto& traj : blocked.truth.trajectories)
        for (std::size_t t = 0; t < traj.size(); ++t)
            CHECK(!moving.moving_obstacle->at(int(t)).contains(traj[t]));
}

TEST_CASE("free_flow has no spurious lateral motion") {
    const auto scenario = generate_scenario(builtin_scenario("free_flow"));
    for (const auto& traj : scenario.truth.trajectories) {
        double mean_y = 0.0;
        for (const auto& p : traj) mean_y += p.y;
        mean_y /= double(traj.size());
        double var = 0.0;
        for (const auto& p : traj) var += (p.y - mean_y) * (p.y - mean_y);
        const double stddev = std::sqrt(var / double(traj.size()));
        CHECK(stddev <= 0.5);
    }
}

TEST_CASE("builtin scenarios are complete and valid") {
    const auto all = builtin_scenarios();
    REQUIRE(all.size() == 5);
    std::vector<std::string> names;
    for (const auto& s : all) {
        CHECK_NOTHROW(s.validate());
        names.push_back(s.name);
    }
    const std::vector<std::string> expected = {"free_flow", "two_lanes_opposing",
                                               "bottleneck_fixed", "moving_blockage",
                                               "dense_static_200"};
    CHECK(names == expected);

    const auto lanes = builtin_scenario("two_lanes_opposing");
    REQUIRE(lanes.lanes.size() == 2);
    CHECK(lanes.lanes[0].direction().x == Approx(1.0).margin(1e-9));
    CHECK(lanes.lanes[0].direction().y == Approx(0.0).margin(1e-9));
    CHECK(lanes.lanes[1].direction().x == Approx(-1.0).margin(1e-9));

    const auto dense = builtin_scenario("dense_static_200");
    CHECK(dense.agents == 200);
    CHECK(dense.lanes.empty());  // the speed-0 variant: nothing moves

    CHECK_THROWS_AS(builtin_scenario("nope"), Error);
}

TEST_CASE("dense_static_200 respects the minimum head separation") {
    auto spec = builtin_scenario("dense_static_200");
    spec.frames = 2;
    const auto scenario = generate_scenario(spec);
    const auto& heads = scenario.truth.per_frame_heads.at(0);
    REQUIRE(int(heads.size()) == 200);
    for (std::size_t i = 0; i < heads.size(); ++i)
        for (std::size_t j = i + 1; j < heads.size(); ++j)
            CHECK((heads[i] - heads[j]).norm() >= spec.min_head_separation - 1e-9);
}

TEST_CASE("scenario spec JSON round trip") {
    const ScenarioSpec spec = builtin_scenario("moving_blockage");
    const auto j = scenario_to_json(spec);
    const ScenarioSpec back = scenario_from_json(j);
    CHECK(back.name == spec.name);
    CHECK(back.frames == spec.frames);
    CHECK(back.agents == spec.agents);
    CHECK(back.lanes.size() == spec.lanes.size());
    CHECK(back.moving_obstacle.has_value());
    CHECK(back.moving_obstacle->velocity.y == spec.moving_obstacle->velocity.y);
    CHECK(back.seed == spec.seed);

    const auto bottleneck = builtin_scenario("bottleneck_fixed");
    const auto jb = scenario_to_json(bottleneck);
    CHECK(scenario_from_json(jb).bottleneck.has_value());
}

TEST_CASE("ground truth JSON carries all documented fields") {
    ScenarioSpec s = mini_lane_scenario();
    s.frames = 5;
    const auto scenario = generate_scenario(s);
    const auto j = ground_truth_to_json(scenario.truth);
    CHECK(j.at("schema") == 1);
    CHECK(j.at("trajectories").size() == 1);
    CHECK(j.at("lane_directions").size() == 1);
    CHECK(j.at("congestion_center").is_null());
    CHECK(j.at("per_frame_heads").size() == 5);
    CHECK(j.at("blockage_track").is_array());
}

TEST_CASE("invalid specs are rejected") {
    ScenarioSpec s = mini_lane_scenario();
    s.frames = 1;
    CHECK_THROWS_MATCHES(generate_scenario(s), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == Errc::InvalidSpec;
                         }));
    s = mini_lane_scenario();
    s.lanes[0].speed = 0.0;
    CHECK_THROWS_AS(generate_scenario(s), Error);
    s = mini_lane_scenario();
    s.lanes[0].goal = {500, 500, 10, 10};
    CHECK_THROWS_AS(generate_scenario(s), Error);
}
