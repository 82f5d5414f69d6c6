#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mgt/core.hpp"
#include "mgt/quant.hpp"
#include "mgt/transformer.hpp"

using namespace mgt;

TEST_CASE("quantize_dequantize basics") {
    CHECK(quantize_dequantize(0.0f, 4, 0.5f) == 0.0f);

    float peak = 3.7f;
    float scale = peak / 7.0f;
    CHECK(quantize_dequantize(peak, 4, scale) == Catch::Approx(7.0f * scale));
    CHECK(quantize_dequantize(-peak, 4, scale) == Catch::Approx(-7.0f * scale));
    // Clamp beyond the grid end.
    CHECK(quantize_dequantize(100.0f, 4, scale) == Catch::Approx(7.0f * scale));

    CHECK_THROWS_AS(quantize_dequantize(std::nanf(""), 8, 1.0f), std::invalid_argument);
    CHECK_THROWS_AS(quantize_dequantize(1.0f, 8, 0.0f), std::invalid_argument);
    CHECK_THROWS_AS(quantize_dequantize(1.0f, 8, -1.0f), std::invalid_argument);
}

TEST_CASE("quantization error bound and idempotence") {
    RngStream rng(77);
    float scale = 0.01f;
    int bits = 8;
    float qmax = float(quant_qmax(bits));
    for (int i = 0; i < 100000; ++i) {
        float x = float(rng.gaussian());
        float once = quantize_dequantize(x, bits, scale);
        if (std::abs(x) <= qmax * scale) {
            REQUIRE(std::abs(x - once) <= scale / 2.0f + 1e-7f);
        }
        float twice = quantize_dequantize(once, bits, scale);
        REQUIRE(twice == once);
    }
}

TEST_CASE("per-channel weight quantization endpoints") {
    std::vector<float> w = {
        0.5f, -1.0f, 0.25f,
        4.0f, 2.0f, -4.0f,
    };
    std::vector<float> out(w.size());
    auto scales = quantize_weights_per_channel(w.data(), out.data(), 2, 3, 4);
    CHECK(scales[0] == Catch::Approx(1.0f / 7.0f));
    CHECK(scales[1] == Catch::Approx(4.0f / 7.0f));
    // Channel peaks land exactly on the grid end.
    CHECK(out[1] == Catch::Approx(-1.0f));
    CHECK(out[3] == Catch::Approx(4.0f));
    CHECK(out[5] == Catch::Approx(-4.0f));
}

TEST_CASE("secondary_calibrate selects the smallest-magnitude third") {
    CalibRecord rec;
    double mags[] = {5.0, 1.0, 3.0, 9.0, 0.5, 2.0, 7.0, 4.0, 6.0};
    for (int i = 0; i < 9; ++i) {
        ActivationStats st;
        st.name = "site" + std::to_string(i);
        st.peak_abs = mags[i];
        st.samples = {0.1f, -0.2f, float(mags[i])};
        rec.layers.push_back(st);
    }
    QuantSpec spec = secondary_calibrate(rec, 1.0 / 3.0);
    int flagged = 0;
    for (auto f : spec.act_quant) flagged += f;
    CHECK(flagged == 3);
    // Sort oracle: the three smallest magnitudes are sites 4 (0.5), 1 (1.0), 5 (2.0).
    CHECK(spec.act_quant[4] == 1);
    CHECK(spec.act_quant[1] == 1);
    CHECK(spec.act_quant[5] == 1);

    SECTION("three-layer record selects the single smallest") {
        CalibRecord small;
        double m3[] = {5.0, 1.0, 3.0};
        for (int i = 0; i < 3; ++i) {
            ActivationStats st;
            st.name = "s" + std::to_string(i);
            st.peak_abs = m3[i];
            small.layers.push_back(st);
        }
        QuantSpec s3 = secondary_calibrate(small, 1.0 / 3.0);
        CHECK(s3.act_quant == std::vector<uint8_t>{0, 1, 0});
    }
}

TEST_CASE("secondary_calibrate set equality against a sort oracle on random records") {
    RngStream rng(31);
    for (int trial = 0; trial < 25; ++trial) {
        size_t L = 3 + rng.next_u64() % 30;
        CalibRecord rec;
        std::vector<std::pair<double, size_t>> mags;
        for (size_t i = 0; i < L; ++i) {
            ActivationStats st;
            st.name = "s" + std::to_string(i);
            st.peak_abs = rng.uniform() * 10.0;
            rec.layers.push_back(st);
            mags.push_back({rec.layers[i].peak_abs, i});
        }
        QuantSpec spec = secondary_calibrate(rec, 1.0 / 3.0);

        std::stable_sort(mags.begin(), mags.end());
        size_t expect = L / 3;
        std::vector<uint8_t> oracle(L, 0);
        for (size_t i = 0; i < expect; ++i) oracle[mags[i].second] = 1;
        REQUIRE(spec.act_quant == oracle);
    }
}

TEST_CASE("clip-ratio grid search never loses to the full-range scale") {
    RngStream rng(41);
    ActivationStats st;
    st.name = "gauss";
    for (int i = 0; i < 4096; ++i) {
        float x = float(rng.gaussian());
        st.samples.push_back(x);
        st.peak_abs = std::max(st.peak_abs, double(std::abs(x)));
    }
    CalibRecord rec;
    rec.layers.push_back(st);
    QuantSpec spec = secondary_calibrate(rec, 1.0);
    REQUIRE(spec.act_quant[0] == 1);
    double chosen_mse = clip_mse(st.samples, st.peak_abs, 8, spec.act_clip_ratio[0]);
    double full_mse = clip_mse(st.samples, st.peak_abs, 8, 1.0);
    CHECK(chosen_mse <= full_mse);
}

TEST_CASE("secondary_calibrate rejects bad input") {
    CHECK_THROWS_AS(secondary_calibrate(CalibRecord{}, 1.0 / 3.0), std::invalid_argument);
    CalibRecord rec;
    rec.layers.push_back(ActivationStats{});
    CHECK_THROWS_AS(secondary_calibrate(rec, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(secondary_calibrate(rec, 1.5), std::invalid_argument);
}

TEST_CASE("quant spec json round-trip") {
    CalibRecord rec;
    for (int i = 0; i < 6; ++i) {
        ActivationStats st;
        st.name = "site" + std::to_string(i);
        st.peak_abs = double(i + 1);
        st.samples = {0.5f, -0.25f};
        rec.layers.push_back(st);
    }
    QuantSpec spec = secondary_calibrate(rec, 1.0 / 3.0);
    QuantSpec back = quant_spec_from_json(quant_spec_to_json(spec));
    CHECK(back.weight_bits == spec.weight_bits);
    CHECK(back.act_bits == spec.act_bits);
    CHECK(back.site_names == spec.site_names);
    CHECK(back.act_quant == spec.act_quant);
    CHECK(back.act_scale == spec.act_scale);
}

// --- model-coupled pieces -------------------------------------------------

namespace {

TransformerConfig small_model_config(uint64_t seed) {
    TransformerConfig cfg;
    cfg.vocab = 12;
    cfg.dim = 16;
    cfg.heads = 2;
    cfg.layers = 2;
    cfg.ffn_dim = 32;
    cfg.conditions = 2;
    cfg.seed = seed;
    cfg.joint_layers = {1};
    return cfg;
}

std::vector<TokenGrid> calib_grids(uint32_t v, uint64_t seed, int count) {
    std::vector<TokenGrid> grids;
    RngStream rng(seed);
    for (int i = 0; i < count; ++i) {
        TokenGrid g(3, 3, v);
        for (size_t p = 0; p < g.size(); ++p) {
            if (rng.uniform() < 0.5) g.set(p, uint32_t(rng.next_u64() % v));
        }
        grids.push_back(g);
    }
    return grids;
}

}  // namespace

TEST_CASE("primary_calibrate covers every site deterministically") {
    TinyTransformer model(small_model_config(3));
    auto grids = calib_grids(12, 5, 3);
    CalibRecord a = primary_calibrate(model, grids, 1, 0.0);
    CalibRecord b = primary_calibrate(model, grids, 1, 0.0);
    REQUIRE(a.size() == model.site_count());
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a.layers[i].peak_abs > 0.0);
        REQUIRE(!a.layers[i].samples.empty());
        REQUIRE(a.layers[i].peak_abs == b.layers[i].peak_abs);
        REQUIRE(a.layers[i].samples == b.layers[i].samples);
    }
    CHECK_THROWS_AS(primary_calibrate(model, {}, 1, 0.0), std::invalid_argument);
}

TEST_CASE("identity quant spec is bit-identical to the float forward") {
    TinyTransformer model(small_model_config(4));
    QuantSpec spec = QuantSpec::identity(model.site_names());
    TokenGrid g(3, 3, 12);
    g.set(2, 7);
    PredictorOutput flt = model.predict(g, 1, 0.4);
    PredictorOutput qnt = fake_quant_forward(model, spec, g, 1, 0.4);
    CHECK(flt.logits == qnt.logits);
}

TEST_CASE("W4 forward stays close to float (cosine similarity >= 0.95)") {
    TinyTransformer model(small_model_config(6));
    auto grids = calib_grids(12, 17, 4);
    CalibRecord rec = primary_calibrate(model, grids, 1, 0.0);
    QuantSpec spec = secondary_calibrate(rec, 1.0 / 3.0);

    RngStream rng(19);
    for (int trial = 0; trial < 5; ++trial) {
        TokenGrid g(3, 3, 12);
        for (size_t p = 0; p < g.size(); ++p) {
            if (rng.uniform() < 0.4) g.set(p, uint32_t(rng.next_u64() % 12));
        }
        PredictorOutput flt = model.predict(g, 1, 0.2);
        PredictorOutput qnt = fake_quant_forward(model, spec, g, 1, 0.2);
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (size_t i = 0; i < flt.logits.size(); ++i) {
            dot += flt.logits[i] * qnt.logits[i];
            na += flt.logits[i] * flt.logits[i];
            nb += qnt.logits[i] * qnt.logits[i];
        }
        REQUIRE(dot / std::sqrt(na * nb) >= 0.95);
    }
}

TEST_CASE("quant spec shape mismatch is rejected") {
    TinyTransformer model(small_model_config(8));
    QuantSpec spec = QuantSpec::identity({"just_one"});
    spec.weight_bits = 4;
    TokenGrid g(3, 3, 12);
    CHECK_THROWS_AS(fake_quant_forward(model, spec, g, 1, 0.0), std::invalid_argument);
}

TEST_CASE("bit footprint accounting") {
    TinyTransformer model(small_model_config(9));
    QuantSpec identity = QuantSpec::identity(model.site_names());
    uint64_t float_bytes = bit_footprint(model, identity);
    CHECK(float_bytes == model.parameter_count() * 4);

    QuantSpec w4 = identity;
    w4.weight_bits = 4;
    uint64_t w4_bytes = bit_footprint(model, w4);
    CHECK(w4_bytes < float_bytes);

    // Site weights shrink by exactly 8x ignoring the per-channel scales.
    uint64_t site_params = 0, site_rows = 0;
    for (size_t s = 0; s < model.site_count(); ++s) {
        auto view = model.site_weights(s);
        site_params += view.rows * view.cols;
        site_rows += view.rows;
    }
    CHECK(w4_bytes == float_bytes - site_params * 4 + site_params / 2 + site_rows * 4);
}
