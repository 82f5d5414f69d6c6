#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "helpers.hpp"
#include "mgt/enhance.hpp"
#include "mgt/metrics.hpp"
#include "mgt/sampler.hpp"
#include "mgt/transformer.hpp"

using namespace mgt;

TEST_CASE("noise_std curves") {
    NoiseRegConfig abs_cos{NoiseCurve::AbsCos, 0.0};
    CHECK(noise_std(abs_cos, 0.0) == Catch::Approx(1.0));
    CHECK(noise_std(abs_cos, 1.0) == Catch::Approx(1.0));
    CHECK(noise_std(abs_cos, 0.5) < 1e-15);

    NoiseRegConfig half{NoiseCurve::HalfAbsCos, 0.0};
    CHECK(noise_std(half, 0.0) == Catch::Approx(0.5));

    NoiseRegConfig lo_hi{NoiseCurve::PiecewiseLoHi, 0.0};
    CHECK(noise_std(lo_hi, 0.25) == Catch::Approx(0.5 * std::abs(std::cos(3.14159265358979323846 * 0.25))));
    CHECK(noise_std(lo_hi, 0.75) == Catch::Approx(std::abs(std::cos(3.14159265358979323846 * 0.75))));

    NoiseRegConfig hi_lo{NoiseCurve::PiecewiseHiLo, 0.0};
    CHECK(noise_std(hi_lo, 0.25) == Catch::Approx(std::abs(std::cos(3.14159265358979323846 * 0.25))));
    CHECK(noise_std(hi_lo, 0.75) == Catch::Approx(0.5 * std::abs(std::cos(3.14159265358979323846 * 0.75))));

    NoiseRegConfig c{NoiseCurve::Constant, 0.3};
    CHECK(noise_std(c, 0.9) == 0.3);
    NoiseRegConfig neg{NoiseCurve::Constant, -0.1};
    CHECK_THROWS_AS(noise_std(neg, 0.5), std::invalid_argument);
}

TEST_CASE("noise_regularize with zero curve is a bitwise no-op and draws nothing") {
    PredictorOutput out(3, 4);
    RngStream rng(1, 2);
    for (auto& v : out.logits) v = 1.5;
    std::vector<double> before = out.logits;
    noise_regularize(out, 0.3, NoiseRegConfig{NoiseCurve::Zero, 0.0}, rng);
    CHECK(out.logits == before);
    CHECK(rng.counter == 0);
}

TEST_CASE("noise_regularize constant curve has the right sample std") {
    NoiseRegConfig cfg{NoiseCurve::Constant, 0.5};
    PredictorOutput out(250, 400);  // 100000 entries
    RngStream rng(5, 1);
    noise_regularize(out, 0.5, cfg, rng);
    double sum = 0.0, sq = 0.0;
    for (double v : out.logits) {
        sum += v;
        sq += v * v;
    }
    double n = double(out.logits.size());
    double mean = sum / n;
    double stdev = std::sqrt(sq / n - mean * mean);
    CHECK(std::abs(stdev - 0.5) < 0.01);
    CHECK(std::abs(mean) < 0.01);
}

TEST_CASE("kl_set worked values and brute-force oracle") {
    SECTION("identical fields give zero") {
        ProbField p(3, 4);
        for (size_t i = 0; i < 3; ++i)
            for (size_t v = 0; v < 4; ++v) p.at(i, v) = 0.25;
        auto d = kl_set(p, p);
        for (double x : d) REQUIRE(std::abs(x) < 1e-15);
    }
    SECTION("hand-computed example") {
        ProbField p(1, 2), q(1, 2);
        p.at(0, 0) = 0.5; p.at(0, 1) = 0.5;
        q.at(0, 0) = 0.25; q.at(0, 1) = 0.75;
        auto d = kl_set(p, q);
        double expect = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
        CHECK(d[0] == Catch::Approx(expect).margin(1e-12));
        CHECK(expect == Catch::Approx(0.14384103622589042).margin(1e-12));
    }
    SECTION("random fields match a naive double-loop oracle to 1e-12") {
        RngStream rng(3);
        for (int trial = 0; trial < 100; ++trial) {
            size_t v = 2 + rng.next_u64() % 12;
            ProbField p(4, v), q(4, v);
            for (size_t i = 0; i < 4; ++i) {
                double sp = 0.0, sq = 0.0;
                for (size_t k = 0; k < v; ++k) {
                    p.at(i, k) = -std::log(rng.uniform_pos());
                    q.at(i, k) = -std::log(rng.uniform_pos());
                    sp += p.at(i, k);
                    sq += q.at(i, k);
                }
                for (size_t k = 0; k < v; ++k) {
                    p.at(i, k) /= sp;
                    q.at(i, k) /= sq;
                }
            }
            auto d = kl_set(p, q);
            for (size_t i = 0; i < 4; ++i) {
                // Independent re-implementation: floor, renormalize, sum.
                std::vector<double> pf(v), qf(v);
                double fs = 0.0, gs = 0.0;
                for (size_t k = 0; k < v; ++k) {
                    pf[k] = std::max(p.at(i, k), 1e-10);
                    qf[k] = std::max(q.at(i, k), 1e-10);
                    fs += pf[k];
                    gs += qf[k];
                }
                double expect = 0.0;
                for (size_t k = 0; k < v; ++k) expect += (pf[k] / fs) * std::log((pf[k] / fs) / (qf[k] / gs));
                REQUIRE(std::abs(d[i] - expect) < 1e-12);
                REQUIRE(d[i] >= -1e-9);
            }
        }
    }
    SECTION("shape mismatch") {
        ProbField p(1, 2), q(2, 2);
        CHECK_THROWS_AS(kl_set(p, q), std::invalid_argument);
    }
}

TEST_CASE("diff_distribution worked example and normalization") {
    double p[] = {0.6, 0.4};
    double q[] = {0.2, 0.8};
    double out[2];
    REQUIRE(diff_distribution(p, q, 2, out));
    CHECK(std::abs(out[0] - 0.5) <= 1e-15);
    CHECK(std::abs(out[1] - 0.5) <= 1e-15);

    SECTION("sums to one on random pairs") {
        RngStream rng(8);
        for (int trial = 0; trial < 200; ++trial) {
            size_t v = 2 + rng.next_u64() % 16;
            std::vector<double> a(v), b(v), d(v);
            double sa = 0.0, sb = 0.0;
            for (size_t k = 0; k < v; ++k) {
                a[k] = -std::log(rng.uniform_pos());
                b[k] = -std::log(rng.uniform_pos());
                sa += a[k];
                sb += b[k];
            }
            for (size_t k = 0; k < v; ++k) {
                a[k] /= sa;
                b[k] /= sb;
            }
            if (!diff_distribution(a.data(), b.data(), v, d.data())) continue;
            double sum = 0.0;
            for (double x : d) {
                REQUIRE(x >= 0.0);
                sum += x;
            }
            REQUIRE(std::abs(sum - 1.0) < 1e-9);
        }
    }
    SECTION("degenerate difference reports fallback") {
        double same[] = {0.5, 0.5};
        double d[2];
        CHECK(!diff_distribution(same, same, 2, d));
    }
}

TEST_CASE("differential_resample") {
    ProbField cur(4, 3), prev(4, 3);
    RngStream seeder(10);
    for (size_t i = 0; i < 4; ++i) {
        double sc = 0.0, sp = 0.0;
        std::vector<double> c(3), p(3);
        for (size_t k = 0; k < 3; ++k) {
            c[k] = -std::log(seeder.uniform_pos());
            p[k] = -std::log(seeder.uniform_pos());
            sc += c[k];
            sp += p[k];
        }
        for (size_t k = 0; k < 3; ++k) {
            cur.at(i, k) = c[k] / sc;
            prev.at(i, k) = p[k] / sp;
        }
    }
    std::vector<size_t> positions = {0, 1, 3};
    std::vector<uint32_t> chosen = {0, 1, 2};

    SECTION("z = 0 changes nothing and draws nothing") {
        ProbField eff = cur;
        auto ch = chosen;
        RngStream rng(4, 4);
        auto resampled = differential_resample(eff, prev, positions, ch, 0.0, rng);
        CHECK(resampled.empty());
        CHECK(ch == chosen);
        CHECK(eff == cur);
        CHECK(rng.counter == 0);
    }
    SECTION("z = 100 re-draws every listed position") {
        ProbField eff = cur;
        auto ch = chosen;
        RngStream rng(4, 4);
        auto resampled = differential_resample(eff, prev, positions, ch, 100.0, rng);
        CHECK(resampled.size() == 3);
        // Unlisted position 2 is untouched.
        for (size_t k = 0; k < 3; ++k) REQUIRE(eff.at(2, k) == cur.at(2, k));
        // Listed positions now carry the difference distribution.
        double d[3];
        REQUIRE(diff_distribution(cur.row(0), prev.row(0), 3, d));
        for (size_t k = 0; k < 3; ++k) REQUIRE(eff.at(0, k) == d[k]);
    }
    SECTION("degenerate positions keep their token") {
        ProbField eff = cur;
        for (size_t k = 0; k < 3; ++k) eff.at(1, k) = prev.at(1, k);  // make position 1 degenerate
        ProbField snapshot = eff;
        auto ch = chosen;
        RngStream rng(4, 4);
        differential_resample(eff, prev, positions, ch, 100.0, rng);
        CHECK(ch[1] == chosen[1]);
        for (size_t k = 0; k < 3; ++k) REQUIRE(eff.at(1, k) == snapshot.at(1, k));
    }
    SECTION("selection picks the smallest-KL third") {
        // Give position 3 a huge divergence and position 0 a tiny one, so the
        // single low-KL slot must go to position 0.
        ProbField eff = cur;
        ProbField pv = prev;
        for (size_t k = 0; k < 3; ++k) {
            eff.at(3, k) = (k == 0) ? 0.999998 : 1e-6;
            pv.at(3, k) = (k == 0) ? 1e-6 : 0.5 - 5e-7;
            pv.at(0, k) = eff.at(0, k);  // d[0] == 0
        }
        auto ch = chosen;
        RngStream rng(4, 4);
        auto resampled = differential_resample(eff, pv, positions, ch, 34.0, rng);  // floor(1.02) = 1
        // Position 0 has zero divergence, hence a degenerate difference: the
        // fallback keeps its token and nothing else may be selected.
        CHECK(resampled.empty());
        CHECK(ch == chosen);

        // With a small but non-degenerate divergence at position 0 it is
        // selected and re-drawn.
        for (size_t k = 0; k < 3; ++k) pv.at(0, k) = eff.at(0, k);
        pv.at(0, 0) += 1e-3;
        pv.at(0, 1) -= 1e-3;
        auto ch2 = chosen;
        auto resampled2 = differential_resample(eff, pv, positions, ch2, 34.0, rng);
        REQUIRE(resampled2.size() == 1);
        CHECK(positions[resampled2[0]] == 0);
    }
}

namespace {

SamplerConfig neutral_base(uint32_t steps, uint64_t seed) {
    SamplerConfig cfg;
    cfg.schedule = Schedule::cosine();
    cfg.steps = steps;
    cfg.seed = seed;
    cfg.cfg_scale = 3.0;
    cfg.condition = 1;
    return cfg;
}

}  // namespace

TEST_CASE("neutral settings reproduce vanilla bit-for-bit") {
    auto oracle = FactorizedOracle::seeded(4, 4, 6, 2, 55, 1.0);
    SamplerConfig vanilla = neutral_base(8, 77);
    auto [g0, t0] = sample(*oracle, 4, 4, vanilla);
    std::vector<uint8_t> bytes0 = grid_serialize(g0);
    std::string csv0 = trace_csv(t0);

    SECTION("differential z = 0") {
        SamplerConfig cfg = neutral_base(8, 77);
        cfg.differential.z = 0.0;
        auto [g, t] = sample(*oracle, 4, 4, cfg);
        CHECK(grid_serialize(g) == bytes0);
        CHECK(trace_csv(t) == csv0);
    }
    SECTION("noise regularization with the zero curve") {
        SamplerConfig cfg = neutral_base(8, 77);
        cfg.noise.curve = NoiseCurve::Zero;
        auto [g, t] = sample(*oracle, 4, 4, cfg);
        CHECK(grid_serialize(g) == bytes0);
        CHECK(trace_csv(t) == csv0);

        cfg.noise.curve = NoiseCurve::Constant;
        cfg.noise.constant = 0.0;
        auto [g2, t2] = sample(*oracle, 4, 4, cfg);
        CHECK(grid_serialize(g2) == bytes0);
    }
    SECTION("empty zigzag range") {
        SamplerConfig cfg = neutral_base(8, 77);
        cfg.zigzag.mode = ZigzagMode::Masked;
        cfg.zigzag.steps = {};
        auto [g, t] = sample(*oracle, 4, 4, cfg);
        CHECK(grid_serialize(g) == bytes0);
        CHECK(trace_csv(t) == csv0);
    }
    SECTION("non-neutral differential diverges") {
        SamplerConfig cfg = neutral_base(8, 77);
        cfg.noise.curve = NoiseCurve::Constant;
        cfg.noise.constant = 0.05;  // gives the fields temporal variation
        auto [gv, tv] = sample(*oracle, 4, 4, cfg);
        cfg.differential.z = 75.0;
        auto [gd, td] = sample(*oracle, 4, 4, cfg);
        CHECK(grid_serialize(gv) != grid_serialize(gd));
    }
}

TEST_CASE("zigzag NFE accounting and mask-level restoration") {
    auto oracle = FactorizedOracle::seeded(4, 4, 6, 2, 70, 1.0);

    SECTION("masked mode with inversion scale 0 and CFG 9 costs 5 forwards per triple") {
        SamplerConfig cfg = neutral_base(4, 5);
        cfg.cfg_scale = 9.0;
        cfg.zigzag.mode = ZigzagMode::Masked;
        cfg.zigzag.inversion_cfg_scale = 0.0;
        cfg.zigzag.steps = {1};
        auto [g, t] = sample(*oracle, 4, 4, cfg);
        CHECK(t.records[0].nfe == 2);
        CHECK(t.records[1].nfe == 5);  // 2 + 1 + 2
        CHECK(t.records[2].nfe == 2);

        cfg.zigzag.inversion_cfg_scale = -1.0;  // standard combination: two passes
        auto [g2, t2] = sample(*oracle, 4, 4, cfg);
        CHECK(t2.records[1].nfe == 6);  // 2 + 2 + 2
    }
    SECTION("recover mode restores the pre-step mask set exactly") {
        SamplerConfig cfg = neutral_base(6, 15);
        cfg.zigzag.mode = ZigzagMode::Recover;
        cfg.zigzag.steps = {0, 1, 2, 3, 4, 5};
        auto [g, t] = sample(*oracle, 4, 4, cfg);

        std::set<size_t> start;  // masked set entering each step
        for (size_t p = 0; p < 16; ++p) start.insert(p);
        for (uint32_t i = 0; i < 6; ++i) {
            const StepRecord& r = t.records[i];
            std::set<size_t> before(r.masked_before.begin(), r.masked_before.end());
            REQUIRE(before == start);  // post-inversion == pre-step mask set
            for (size_t pos : r.committed) start.erase(pos);
        }
    }
    SECTION("vanilla-random mode restores the count but not necessarily the set") {
        SamplerConfig cfg = neutral_base(6, 16);
        cfg.zigzag.mode = ZigzagMode::VanillaRandom;
        cfg.zigzag.steps = {0, 1, 2, 3, 4, 5};
        auto [g, t] = sample(*oracle, 4, 4, cfg);
        StepPlan plan = plan_steps(cfg.schedule, 6, 16);
        for (uint32_t i = 0; i < 6; ++i) {
            REQUIRE(t.records[i].masked_before.size() == plan.m(i));
            REQUIRE(t.records[i].nfe == 4);  // no inversion forward needed
        }
        CHECK(g.masked_count() == 0);
    }
    SECTION("masked mode re-masks the lowest-confidence tokens first (tie by index)") {
        // A uniform oracle makes every inversion confidence equal, so the
        // re-masked set must be the lowest flat indices of the unmasked pool.
        auto uni = FactorizedOracle::seeded(4, 1, 3, 2, 1, 0.0);
        SamplerConfig cfg = neutral_base(2, 3);
        cfg.cfg_scale = 0.0;
        cfg.zigzag.mode = ZigzagMode::Masked;
        cfg.zigzag.inversion_cfg_scale = 0.0;
        cfg.zigzag.steps = {1};
        auto [g, t] = sample(*uni, 4, 1, cfg);
        const StepRecord& r = t.records[1];
        REQUIRE(!r.zigzag_remasked.empty());
        // With all-equal confidences, ties break ascending: re-masked set is
        // the smallest unmasked indices. They must all be smaller than any
        // unmasked position not re-masked.
        std::set<size_t> remasked(r.zigzag_remasked.begin(), r.zigzag_remasked.end());
        std::set<size_t> masked_after_b(r.masked_before.begin(), r.masked_before.end());
        for (size_t p = 0; p < 4; ++p) {
            if (!masked_after_b.count(p)) {  // survived the inversion
                for (size_t m : remasked) REQUIRE(m < p);
            }
        }
    }
}

TEST_CASE("zigzag with differential and noise still tracks the plan") {
    auto oracle = FactorizedOracle::seeded(4, 4, 5, 2, 91, 1.1);
    SamplerConfig cfg = neutral_base(5, 23);
    cfg.zigzag.mode = ZigzagMode::Masked;
    cfg.zigzag.steps = {1, 3};
    cfg.differential.z = 50.0;
    cfg.noise.curve = NoiseCurve::AbsCos;
    auto [g, t] = sample(*oracle, 4, 4, cfg);
    CHECK(g.masked_count() == 0);
    StepPlan plan = plan_steps(cfg.schedule, 5, 16);
    for (uint32_t i = 0; i < 5; ++i) {
        REQUIRE(t.records[i].masked_before.size() == plan.m(i));
        REQUIRE(t.records[i].masked_after == plan.m(i + 1));
    }
}
