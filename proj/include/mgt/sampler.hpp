#pragma once

// MaskGIT-style iterative parallel decoding: Gumbel-race token selection,
// confidence-ranked commit/re-mask, classifier-free guidance, and the zigzag
// and deterministic-switch variants. Every stochastic consumer owns a child
// RNG stream, so neutral variant settings replay the vanilla run bit-exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "enhance.hpp"
#include "predictor.hpp"
#include "schedule.hpp"

namespace mgt {

// Exponential-race categorical sampling: argmax_i log(eps_i) / p_i^(1/tau),
// eps_i ~ U(0,1) clamped at 1e-30. Equivalent to sampling the categorical
// proportional to p^(1/tau). One uniform is drawn per vocab entry no matter
// what the probabilities are, keeping stream consumption shape-stable.
inline uint32_t gumbel_select(const double* probs, size_t vocab, RngStream& rng, double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("gumbel_select: temperature must be > 0");
    double best = -std::numeric_limits<double>::infinity();
    int64_t best_i = -1;
    bool any_mass = false;
    for (size_t i = 0; i < vocab; ++i) {
        double eps = rng.uniform_pos();
        double w = probs[i] <= 0.0 ? 0.0
                 : (temperature == 1.0 ? probs[i] : std::pow(probs[i], 1.0 / temperature));
        if (w > 0.0) any_mass = true;
        double score = std::log(eps) / w;  // w == 0 gives -inf, never selected
        if (score > best) {
            best = score;
            best_i = int64_t(i);
        }
    }
    if (!any_mass || best_i < 0) throw std::invalid_argument("gumbel_select: no probability mass");
    return uint32_t(best_i);
}

inline uint32_t argmax_select(const double* probs, size_t vocab) {
    size_t best = 0;
    for (size_t i = 1; i < vocab; ++i)
        if (probs[i] > probs[best]) best = i;
    return uint32_t(best);
}

struct SolverRunConfig {
    bool enabled  = false;
    int order     = 1;
    uint32_t steps = 16;  // the solver's own (coarse) step count
};

struct SamplerConfig {
    Schedule schedule;
    uint32_t steps     = 16;   // N
    double cfg_scale   = 0.0;
    double temperature = 1.0;
    int condition      = 1;
    uint64_t seed      = 1;
    std::optional<uint32_t> deterministic_from;  // argmax from this step on
    NoiseRegConfig noise;
    DifferentialConfig differential;
    ZigzagConfig zigzag;
    SolverRunConfig solver;
    bool keep_fields = false;

    void validate(uint64_t tokens) const {
        if (steps < 1) throw std::invalid_argument("SamplerConfig: steps must be >= 1");
        if (!(temperature > 0.0)) throw std::invalid_argument("SamplerConfig: temperature must be > 0");
        if (deterministic_from && *deterministic_from > steps) {
            throw std::invalid_argument("SamplerConfig: deterministic_from must be <= steps");
        }
        differential.validate();
        for (uint32_t s : zigzag.steps)
            if (s >= steps) throw std::invalid_argument("SamplerConfig: zigzag step index out of range");
        if (steps > tokens) throw std::invalid_argument("SamplerConfig: steps must be <= token count");
        if (solver.enabled && (zigzag.active() || differential.active())) {
            throw std::invalid_argument("SamplerConfig: solver mode does not compose with zigzag/differential");
        }
        if (solver.enabled && (solver.order < 1 || solver.order > 2)) {
            throw std::invalid_argument("SamplerConfig: solver order must be 1 or 2");
        }
        if (solver.enabled && (solver.steps < 1 || solver.steps > tokens)) {
            throw std::invalid_argument("SamplerConfig: solver steps must be in [1, token count]");
        }
    }
};

// Returns a copy whose selection becomes argmax from step k onward.
inline SamplerConfig deterministic_switch(const SamplerConfig& cfg, uint32_t k) {
    if (k > cfg.steps) throw std::invalid_argument("deterministic_switch: k must be <= steps");
    SamplerConfig out = cfg;
    out.deterministic_from = k;
    return out;
}

struct StepRecord {
    uint32_t step = 0;
    double t      = 0.0;
    std::vector<size_t> masked_before;     // ascending positions
    std::vector<size_t> predicted;         // positions that received draws (== masked_before)
    std::vector<uint32_t> chosen;          // final token per predicted position
    std::vector<double> confidence;        // log p_eff[pos][chosen]
    std::vector<size_t> committed;         // ascending positions committed this step
    std::vector<size_t> resampled;         // positions re-drawn by differential sampling
    std::vector<size_t> zigzag_remasked;   // positions re-masked by the inversion, if any
    size_t masked_after = 0;
    uint64_t nfe        = 0;
    double mean_entropy = 0.0;             // over masked_before, effective field
    double std_entropy  = 0.0;
    double mean_kl_prev = 0.0;             // vs previous step's effective field
    bool has_field      = false;
    ProbField field;                       // effective field, kept when requested
};

struct SamplerTrace {
    uint32_t steps  = 0;
    uint64_t tokens = 0;
    size_t vocab    = 0;
    std::vector<StepRecord> records;

    uint64_t total_nfe() const {
        uint64_t n = 0;
        for (const auto& r : records) n += r.nfe;
        return n;
    }
};

namespace detail {

struct RunStreams {
    RngStream gumbel, noise, diff, zigzag, solver;

    explicit RunStreams(uint64_t seed) {
        RngStream root(seed);
        gumbel = root.child(1);
        noise  = root.child(2);
        diff   = root.child(3);
        zigzag = root.child(4);
        solver = root.child(5);
    }
};

// One guided forward: softmax(cfg_combine(...)) plus noise regularization.
// Returns the effective field and the forwards consumed.
inline std::pair<ProbField, uint64_t> guided_field(const Predictor& pred, const TokenGrid& grid,
                                                   double t, int condition, double cfg_scale,
                                                   const NoiseRegConfig& noise, RngStream& noise_rng) {
    PredictorOutput cond = pred.predict(grid, condition, t);
    uint64_t nfe = 1;
    PredictorOutput combined;
    if (cfg_scale != 0.0) {
        PredictorOutput uncond = pred.predict(grid, kNullCondition, t);
        combined = cfg_combine(cond, &uncond, cfg_scale);
        nfe = 2;
    } else {
        combined = std::move(cond);
    }
    noise_regularize(combined, t, noise, noise_rng);
    return {softmax_field(combined), nfe};
}

inline void entropy_stats(const ProbField& f, const std::vector<size_t>& positions,
                          double& mean, double& stdev) {
    mean = stdev = 0.0;
    if (positions.empty()) return;
    std::vector<double> h(positions.size());
    for (size_t i = 0; i < positions.size(); ++i) {
        const double* row = f.row(positions[i]);
        double e = 0.0;
        for (size_t v = 0; v < f.vocab(); ++v) {
            if (row[v] > 0.0) e -= row[v] * std::log(row[v]);
        }
        h[i] = e;
        mean += e;
    }
    mean /= double(positions.size());
    for (double e : h) stdev += (e - mean) * (e - mean);
    stdev = std::sqrt(stdev / double(positions.size()));
}

inline double mean_kl_shared_masked(const ProbField& cur, const ProbField& prev,
                                    const std::vector<size_t>& masked_cur,
                                    const std::vector<size_t>& masked_prev) {
    std::vector<size_t> shared;
    std::set_intersection(masked_cur.begin(), masked_cur.end(), masked_prev.begin(),
                          masked_prev.end(), std::back_inserter(shared));
    if (shared.empty()) return 0.0;
    double sum = 0.0;
    for (size_t pos : shared) sum += kl_div(cur.row(pos), prev.row(pos), cur.vocab());
    return sum / double(shared.size());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// One vanilla step: draw a token for every masked position, optionally apply
// differential resampling, then commit the plan's quota of highest-confidence
// positions and leave the rest masked. Ties break toward the lower flat
// index. Returns the step's record; the grid mutates in place.
// ---------------------------------------------------------------------------
inline StepRecord vanilla_step(TokenGrid& grid, const StepPlan& plan, uint32_t i,
                               const Predictor& predictor, const SamplerConfig& cfg,
                               detail::RunStreams& streams,
                               const ProbField* prev_field = nullptr,
                               const std::vector<size_t>* prev_masked = nullptr) {
    StepRecord rec;
    rec.step = i;
    rec.t    = plan.t(i);
    rec.masked_before = grid.masked_positions();
    if (rec.masked_before.size() != plan.m(i)) {
        throw StateError("vanilla_step: masked count " + std::to_string(rec.masked_before.size()) +
                         " does not match plan m_" + std::to_string(i) + " = " + std::to_string(plan.m(i)));
    }

    auto [field, nfe] = detail::guided_field(predictor, grid, rec.t, cfg.condition, cfg.cfg_scale,
                                             cfg.noise, streams.noise);
    rec.nfe = nfe;

    const size_t vocab = field.vocab();
    rec.predicted = rec.masked_before;
    rec.chosen.resize(rec.predicted.size());
    bool use_argmax = cfg.deterministic_from && i >= *cfg.deterministic_from;
    for (size_t j = 0; j < rec.predicted.size(); ++j) {
        const double* row = field.row(rec.predicted[j]);
        rec.chosen[j] = use_argmax ? argmax_select(row, vocab)
                                   : gumbel_select(row, vocab, streams.gumbel, cfg.temperature);
    }

    if (cfg.differential.active() && i >= 1 && prev_field != nullptr) {
        auto resampled = differential_resample(field, *prev_field, rec.predicted, rec.chosen,
                                               cfg.differential.z, streams.diff);
        for (size_t idx : resampled) rec.resampled.push_back(rec.predicted[idx]);
    }

    rec.confidence.resize(rec.predicted.size());
    for (size_t j = 0; j < rec.predicted.size(); ++j) {
        rec.confidence[j] = std::log(std::max(field.at(rec.predicted[j], rec.chosen[j]), 1e-300));
    }

    // Commit the m_i - m_{i+1} highest-confidence predictions.
    size_t commit_n = size_t(plan.m(i) - plan.m(i + 1));
    std::vector<size_t> order(rec.predicted.size());
    std::iota(order.begin(), order.end(), size_t(0));
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (rec.confidence[a] != rec.confidence[b]) return rec.confidence[a] > rec.confidence[b];
        return rec.predicted[a] < rec.predicted[b];
    });
    for (size_t r = 0; r < commit_n; ++r) {
        size_t j = order[r];
        grid.set(rec.predicted[j], rec.chosen[j]);
        rec.committed.push_back(rec.predicted[j]);
    }
    std::sort(rec.committed.begin(), rec.committed.end());
    rec.masked_after = grid.masked_count();

    detail::entropy_stats(field, rec.masked_before, rec.mean_entropy, rec.std_entropy);
    if (prev_field != nullptr && prev_masked != nullptr) {
        rec.mean_kl_prev = detail::mean_kl_shared_masked(field, *prev_field, rec.masked_before, *prev_masked);
    }
    rec.has_field = true;
    rec.field     = std::move(field);
    return rec;
}

// ---------------------------------------------------------------------------
// Zigzag step: (a) forward, (b) inversion re-masking back to the step's mask
// level, (c) forward again. The inversion pool is every token committed in
// the (a)-state grid; masked mode ranks the pool by log-probability of the
// current token under an extra forward pass at the inversion CFG scale.
// ---------------------------------------------------------------------------
inline StepRecord zigzag_step(TokenGrid& grid, const StepPlan& plan, uint32_t i,
                              const Predictor& predictor, const SamplerConfig& cfg,
                              detail::RunStreams& streams,
                              ProbField* rolling_field, std::vector<size_t>* rolling_masked) {
    // (a) first forward.
    StepRecord first = vanilla_step(grid, plan, i, predictor, cfg, streams,
                                    rolling_field->positions() ? rolling_field : nullptr,
                                    rolling_masked);
    uint64_t nfe = first.nfe;
    *rolling_field  = first.field;
    *rolling_masked = first.masked_before;

    // (b) inversion: re-mask back to m_i masked.
    size_t remask_n = size_t(plan.m(i) - plan.m(i + 1));
    std::vector<size_t> pool;
    for (size_t p = 0; p < grid.size(); ++p)
        if (!grid.is_masked(p)) pool.push_back(p);

    std::vector<size_t> remask;
    switch (cfg.zigzag.mode) {
        case ZigzagMode::Recover:
            remask = first.committed;
            break;
        case ZigzagMode::VanillaRandom: {
            std::vector<size_t> shuffled = pool;
            for (size_t j = 0; j + 1 < shuffled.size(); ++j) {
                size_t k = j + size_t(streams.zigzag.next_u64() % uint64_t(shuffled.size() - j));
                std::swap(shuffled[j], shuffled[k]);
            }
            remask.assign(shuffled.begin(), shuffled.begin() + std::min(remask_n, shuffled.size()));
            break;
        }
        case ZigzagMode::Masked: {
            double inv_scale = cfg.zigzag.inversion_cfg_scale;
            PredictorOutput cond = predictor.predict(grid, cfg.condition, plan.t(i + 1));
            nfe += 1;
            PredictorOutput combined;
            if (inv_scale != 0.0) {
                PredictorOutput uncond = predictor.predict(grid, kNullCondition, plan.t(i + 1));
                combined = cfg_combine(cond, &uncond, inv_scale);
                nfe += 1;
            } else {
                combined = std::move(cond);
            }
            ProbField p_inv = softmax_field(combined);
            std::vector<double> conf(pool.size());
            for (size_t j = 0; j < pool.size(); ++j) {
                conf[j] = std::log(std::max(p_inv.at(pool[j], grid.cell(pool[j])), 1e-300));
            }
            std::vector<size_t> order(pool.size());
            std::iota(order.begin(), order.end(), size_t(0));
            std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
                if (conf[a] != conf[b]) return conf[a] < conf[b];
                return pool[a] < pool[b];
            });
            for (size_t r = 0; r < std::min(remask_n, order.size()); ++r) remask.push_back(pool[order[r]]);
            break;
        }
    }
    for (size_t pos : remask) grid.mask(pos);
    if (grid.masked_count() != plan.m(i)) {
        throw StateError("zigzag_step: inversion did not restore the mask level");
    }

    // (c) second forward.
    StepRecord rec = vanilla_step(grid, plan, i, predictor, cfg, streams, rolling_field, rolling_masked);
    rec.nfe += nfe;
    std::sort(remask.begin(), remask.end());
    rec.zigzag_remasked = std::move(remask);
    // The (a)-pass record is internal; the step's trace row is the (c) pass.
    return rec;
}

// ---------------------------------------------------------------------------
// Full sampling run. Zigzag and the deterministic switch dispatch per step;
// solver runs live in solver.hpp.
// ---------------------------------------------------------------------------
inline std::pair<TokenGrid, SamplerTrace> sample(const Predictor& predictor, uint32_t width,
                                                 uint32_t height, const SamplerConfig& cfg) {
    uint64_t tokens = uint64_t(width) * height;
    cfg.validate(tokens);
    if (cfg.solver.enabled) {
        throw std::invalid_argument("sample: solver runs are handled by solver_sample");
    }

    TokenGrid grid(width, height, uint32_t(predictor.vocab()));
    StepPlan plan = plan_steps(cfg.schedule, cfg.steps, tokens);
    detail::RunStreams streams(cfg.seed);

    SamplerTrace trace;
    trace.steps  = cfg.steps;
    trace.tokens = tokens;
    trace.vocab  = predictor.vocab();

    ProbField rolling_field;
    std::vector<size_t> rolling_masked;
    for (uint32_t i = 0; i < cfg.steps; ++i) {
        StepRecord rec;
        const ProbField* prev = i == 0 ? nullptr : &rolling_field;
        const std::vector<size_t>* prev_masked = i == 0 ? nullptr : &rolling_masked;
        if (cfg.zigzag.active() && cfg.zigzag.applies_to(i)) {
            rec = zigzag_step(grid, plan, i, predictor, cfg, streams, &rolling_field, &rolling_masked);
        } else {
            rec = vanilla_step(grid, plan, i, predictor, cfg, streams, prev, prev_masked);
        }
        rolling_field  = rec.field;
        rolling_masked = rec.masked_before;
        if (!cfg.keep_fields) {
            rec.has_field = false;
            rec.field     = ProbField();
        }
        trace.records.push_back(std::move(rec));
    }
    if (grid.masked_count() != 0) throw StateError("sample: run finished with masked cells");
    return {std::move(grid), std::move(trace)};
}

// Trace export: one CSV row per step.
inline std::string trace_csv(const SamplerTrace& trace) {
    std::string out = "step,t,masked_before,masked_after,nfe_cum,mean_entropy,mean_kl_prev\n";
    char buf[192];
    uint64_t nfe_cum = 0;
    for (const auto& r : trace.records) {
        nfe_cum += r.nfe;
        std::snprintf(buf, sizeof(buf), "%u,%.12g,%zu,%zu,%llu,%.12g,%.12g\n", r.step, r.t,
                      r.masked_before.size(), r.masked_after, (unsigned long long)nfe_cum,
                      r.mean_entropy, r.mean_kl_prev);
        out += buf;
    }
    return out;
}

}  // namespace mgt
