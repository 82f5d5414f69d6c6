#pragma once

// Distribution-correction machinery: noise regularization of logits,
// consecutive-step KL divergences, differential resampling from the
// normalized absolute difference of two fields, and the zigzag
// (forward-invert-forward) configuration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "core.hpp"
#include "predictor.hpp"

namespace mgt {

// ---------------------------------------------------------------------------
// Noise regularization: v_hat = v + eps, eps ~ N(0, I(t)^2) i.i.d. per entry.
// ---------------------------------------------------------------------------
enum class NoiseCurve {
    Zero,
    AbsCos,         // |cos(pi t)|
    HalfAbsCos,     // 0.5 |cos(pi t)|
    PiecewiseLoHi,  // 0.5 |cos(pi t)| for t < 0.5, |cos(pi t)| after
    PiecewiseHiLo,  // |cos(pi t)| for t < 0.5, 0.5 |cos(pi t)| after
    Constant,
};

struct NoiseRegConfig {
    NoiseCurve curve = NoiseCurve::Zero;
    double constant  = 0.0;  // used by Constant

    bool active() const { return !(curve == NoiseCurve::Zero || (curve == NoiseCurve::Constant && constant == 0.0)); }
};

inline double noise_std(const NoiseRegConfig& cfg, double t) {
    double ac = std::abs(std::cos(3.14159265358979323846 * t));
    switch (cfg.curve) {
        case NoiseCurve::Zero:          return 0.0;
        case NoiseCurve::AbsCos:        return ac;
        case NoiseCurve::HalfAbsCos:    return 0.5 * ac;
        case NoiseCurve::PiecewiseLoHi: return t < 0.5 ? 0.5 * ac : ac;
        case NoiseCurve::PiecewiseHiLo: return t < 0.5 ? ac : 0.5 * ac;
        case NoiseCurve::Constant:
            if (cfg.constant < 0.0) throw std::invalid_argument("noise_std: negative constant");
            return cfg.constant;
    }
    throw std::invalid_argument("noise_std: unknown curve");
}

// In place. A zero std draws nothing, so a run with the zero curve consumes
// the same stream state as one with no regularization at all.
inline void noise_regularize(PredictorOutput& logits, double t, const NoiseRegConfig& cfg, RngStream& rng) {
    double sd = noise_std(cfg, t);
    if (sd == 0.0) return;
    for (double& v : logits.logits) v += sd * rng.gaussian();
}

// ---------------------------------------------------------------------------
// KL divergence with a 1e-10 floor and renormalization on both arguments.
// ---------------------------------------------------------------------------
constexpr double kKlFloor   = 1e-10;
constexpr double kDiffEps   = 1e-12;

inline void floor_renormalize(const double* p, double* out, size_t n) {
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        out[i] = std::max(p[i], kKlFloor);
        sum += out[i];
    }
    for (size_t i = 0; i < n; ++i) out[i] /= sum;
}

inline double kl_div(const double* p, const double* q, size_t n) {
    std::vector<double> pf(n), qf(n);
    floor_renormalize(p, pf.data(), n);
    floor_renormalize(q, qf.data(), n);
    double d = 0.0;
    for (size_t i = 0; i < n; ++i) d += pf[i] * std::log(pf[i] / qf[i]);
    return d;
}

// d_i^j = KL(p_i^j || p_prev^j) for every position j.
inline std::vector<double> kl_set(const ProbField& p, const ProbField& p_prev) {
    if (p.positions() != p_prev.positions() || p.vocab() != p_prev.vocab()) {
        throw std::invalid_argument("kl_set: shape mismatch");
    }
    std::vector<double> d(p.positions());
    for (size_t j = 0; j < p.positions(); ++j) d[j] = kl_div(p.row(j), p_prev.row(j), p.vocab());
    return d;
}

// p_tilde = |p - p_prev| / sum(|p - p_prev|), over the floored/renormalized
// fields. Returns false when the difference is degenerate (fallback).
inline bool diff_distribution(const double* p, const double* q, size_t n, double* out) {
    std::vector<double> pf(n), qf(n);
    floor_renormalize(p, pf.data(), n);
    floor_renormalize(q, qf.data(), n);
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        out[i] = std::abs(pf[i] - qf[i]);
        sum += out[i];
    }
    if (sum < kDiffEps) return false;
    for (size_t i = 0; i < n; ++i) out[i] /= sum;
    return true;
}

// ---------------------------------------------------------------------------
// Differential sampling: among the newly predicted positions, the floor(z% *
// count) with the smallest consecutive-step KL are re-drawn from the
// difference distribution; the effective field records what was sampled from.
// ---------------------------------------------------------------------------
struct DifferentialConfig {
    double z = 0.0;  // percentage in [0, 100]

    void validate() const {
        if (!(z >= 0.0 && z <= 100.0)) throw std::invalid_argument("DifferentialConfig: z must be in [0,100]");
    }
    bool active() const { return z > 0.0; }
};

// Forward declaration; defined in sampler.hpp.
uint32_t gumbel_select(const double* probs, size_t vocab, RngStream& rng, double temperature);

// positions/chosen are parallel arrays over the newly predicted positions.
// effective is updated in place at resampled positions. Returns the indices
// (into positions) that were re-drawn.
inline std::vector<size_t> differential_resample(ProbField& effective, const ProbField& p_prev,
                                                 const std::vector<size_t>& positions,
                                                 std::vector<uint32_t>& chosen, double z,
                                                 RngStream& rng) {
    DifferentialConfig{z}.validate();
    size_t count = size_t(std::floor(z / 100.0 * double(positions.size())));
    if (count == 0) return {};

    std::vector<double> d(positions.size());
    for (size_t i = 0; i < positions.size(); ++i) {
        d[i] = kl_div(effective.row(positions[i]), p_prev.row(positions[i]), effective.vocab());
    }
    std::vector<size_t> order(positions.size());
    std::iota(order.begin(), order.end(), size_t(0));
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (d[a] != d[b]) return d[a] < d[b];
        return positions[a] < positions[b];
    });
    order.resize(count);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return positions[a] < positions[b]; });

    std::vector<size_t> resampled;
    std::vector<double> pt(effective.vocab());
    for (size_t idx : order) {
        size_t pos = positions[idx];
        if (!diff_distribution(effective.row(pos), p_prev.row(pos), effective.vocab(), pt.data())) {
            continue;  // degenerate difference: keep the original token
        }
        chosen[idx] = gumbel_select(pt.data(), effective.vocab(), rng, 1.0);
        std::copy(pt.begin(), pt.end(), effective.row(pos));
        resampled.push_back(idx);
    }
    return resampled;
}

// ---------------------------------------------------------------------------
// Zigzag (Z-Sampling): forward step, inversion back to the previous mask
// level, forward step again.
// ---------------------------------------------------------------------------
enum class ZigzagMode {
    Masked,         // re-mask lowest log-probability committed tokens (inversion forward)
    Recover,        // re-mask exactly the tokens committed by the first forward
    VanillaRandom,  // re-mask uniformly at random among committed tokens
};

struct ZigzagConfig {
    ZigzagMode mode = ZigzagMode::Masked;
    double inversion_cfg_scale = 0.0;
    std::vector<uint32_t> steps;  // plan-step indices the triple applies to

    bool applies_to(uint32_t step) const {
        return std::find(steps.begin(), steps.end(), step) != steps.end();
    }
    bool active() const { return !steps.empty(); }
};

inline ZigzagMode zigzag_mode_from_name(const std::string& name) {
    if (name == "masked") return ZigzagMode::Masked;
    if (name == "recover") return ZigzagMode::Recover;
    if (name == "vanilla_random") return ZigzagMode::VanillaRandom;
    throw std::invalid_argument("unknown zigzag mode: " + name);
}

inline std::string zigzag_mode_name(ZigzagMode m) {
    switch (m) {
        case ZigzagMode::Masked:        return "masked";
        case ZigzagMode::Recover:       return "recover";
        case ZigzagMode::VanillaRandom: return "vanilla_random";
    }
    return "?";
}

inline NoiseCurve noise_curve_from_name(const std::string& name) {
    if (name == "zero") return NoiseCurve::Zero;
    if (name == "abs_cos") return NoiseCurve::AbsCos;
    if (name == "half_abs_cos") return NoiseCurve::HalfAbsCos;
    if (name == "piecewise_lo_hi") return NoiseCurve::PiecewiseLoHi;
    if (name == "piecewise_hi_lo") return NoiseCurve::PiecewiseHiLo;
    if (name == "constant") return NoiseCurve::Constant;
    throw std::invalid_argument("unknown noise curve: " + name);
}

inline std::string noise_curve_name(NoiseCurve c) {
    switch (c) {
        case NoiseCurve::Zero:          return "zero";
        case NoiseCurve::AbsCos:        return "abs_cos";
        case NoiseCurve::HalfAbsCos:    return "half_abs_cos";
        case NoiseCurve::PiecewiseLoHi: return "piecewise_lo_hi";
        case NoiseCurve::PiecewiseHiLo: return "piecewise_hi_lo";
        case NoiseCurve::Constant:      return "constant";
    }
    return "?";
}

}  // namespace mgt
