#include <catch2/catch_amalgamated.hpp>

#include "mgt/core.hpp"
#include "mgt/schedule.hpp"

using namespace mgt;

TEST_CASE("sigma endpoint and reference values") {
    Schedule cos = Schedule::cosine();
    CHECK(sigma(cos, 0.0) == Catch::Approx(1.0).margin(1e-15));
    CHECK(std::abs(sigma(cos, 0.5) - 0.70710678118654752440) < 1e-12);
    CHECK(std::abs(sigma(cos, 1.0)) < 1e-12);

    // rho = 0.6 is the best-performing PowUp setting.
    Schedule pu = Schedule::pow_up(0.6);
    CHECK(std::abs(sigma(pu, 0.5) - 0.34024604461355287) < 1e-12);

    CHECK_THROWS_AS(sigma(cos, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(sigma(cos, 1.1), std::invalid_argument);
    CHECK_THROWS_AS(Schedule::pow_up(0.0), std::invalid_argument);
    CHECK_THROWS_AS(Schedule::pow_down(-1.0), std::invalid_argument);
}

TEST_CASE("sigma endpoints and monotonicity over random configurations") {
    RngStream rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        double rho = 0.1 + rng.uniform() * 3.9;
        Schedule s;
        switch (rng.next_u64() % 3) {
            case 0: s = Schedule::cosine(); break;
            case 1: s = Schedule::pow_down(rho); break;
            default: s = Schedule::pow_up(rho); break;
        }
        REQUIRE(std::abs(sigma(s, 0.0) - 1.0) <= 1e-12);
        REQUIRE(std::abs(sigma(s, 1.0)) <= 1e-12);
        double prev = 2.0;
        for (int k = 0; k <= 1000; ++k) {
            double v = sigma(s, double(k) / 1000.0);
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
            REQUIRE(v <= prev + 1e-12);
            prev = v;
        }
    }
}

TEST_CASE("pow kinds with rho 1 are exactly linear on a dyadic grid") {
    Schedule up = Schedule::pow_up(1.0);
    Schedule down = Schedule::pow_down(1.0);
    for (int k = 0; k <= 1024; ++k) {
        double t = double(k) / 1024.0;
        REQUIRE(sigma(up, t) == 1.0 - t);
        REQUIRE(sigma(down, t) == 1.0 - t);
    }
}

TEST_CASE("plan_steps worked examples") {
    StepPlan p1 = plan_steps(Schedule::cosine(), 2, 1024);
    REQUIRE(p1.masked_counts == std::vector<uint64_t>{1024, 724, 0});

    StepPlan p2 = plan_steps(Schedule::pow_up(1.0), 4, 8);
    REQUIRE(p2.masked_counts == std::vector<uint64_t>{8, 6, 4, 2, 0});

    StepPlan p3 = plan_steps(Schedule::pow_down(2.5), 1, 5);
    REQUIRE(p3.masked_counts == std::vector<uint64_t>{5, 0});

    CHECK_THROWS_AS(plan_steps(Schedule::cosine(), 10, 5), std::invalid_argument);
    CHECK_THROWS_AS(plan_steps(Schedule::cosine(), 0, 5), std::invalid_argument);
}

TEST_CASE("plan_steps invariants over random (N, K)") {
    RngStream rng(21);
    for (int trial = 0; trial < 500; ++trial) {
        uint64_t K = 1 + rng.next_u64() % 10000;
        uint32_t N = 1 + uint32_t(rng.next_u64() % K);
        double rho = 0.1 + rng.uniform() * 3.9;
        Schedule s;
        switch (rng.next_u64() % 3) {
            case 0: s = Schedule::cosine(); break;
            case 1: s = Schedule::pow_down(rho); break;
            default: s = Schedule::pow_up(rho); break;
        }
        StepPlan plan = plan_steps(s, N, K);
        REQUIRE(plan.m(0) == K);
        REQUIRE(plan.m(N) == 0);
        for (uint32_t i = 0; i < N; ++i) {
            REQUIRE(plan.m(i) <= K);
            if (plan.m(i) > 0) {
                REQUIRE(plan.m(i + 1) + 1 <= plan.m(i));
            }
        }
        for (uint32_t i = 0; i <= N; ++i) {
            REQUIRE(plan.t(i) == double(i) / double(N));
        }
    }
}

TEST_CASE("schedule json round-trip names") {
    CHECK(schedule_kind_from_name("cosine") == ScheduleKind::Cosine);
    CHECK(schedule_kind_from_name("pow_up") == ScheduleKind::PowUp);
    CHECK(schedule_kind_from_name("pow_down") == ScheduleKind::PowDown);
    CHECK_THROWS_AS(schedule_kind_from_name("exp"), std::invalid_argument);
    json j = schedule_to_json(Schedule::pow_up(0.6));
    CHECK(j["kind"] == "pow_up");
    CHECK(j["rho"] == 0.6);
}
