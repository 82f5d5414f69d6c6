#pragma once

// Momentum-based solver: large-stride steps that keep sigma_t/sigma_s of the
// masked set and commit the rest from the highest-confidence predictions.
// The 2nd order adds a correction drawn from the difference distribution of
// the current and previous predictions, with fraction
// lambda = (sigma_t - sigma_s)^2 / (2 sigma_t (sigma_r - sigma_s)).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "enhance.hpp"
#include "sampler.hpp"
#include "schedule.hpp"

namespace mgt {

// Ratio form of the 1st-order commit count. Sampling runs use plan-level
// budgets instead, which agree with this up to the plan's rounding repair.
inline uint64_t solver_commit_count(double sigma_s, double sigma_t, uint64_t masked_count) {
    if (!(sigma_s > sigma_t)) throw std::invalid_argument("solver_commit_count: requires sigma_s > sigma_t");
    if (!(sigma_s > 0.0)) throw std::invalid_argument("solver_commit_count: sigma_s must be > 0");
    double frac = (sigma_s - sigma_t) / sigma_s;
    return uint64_t(round_half_away(frac * double(masked_count)));
}

// Correction fraction of the commit budget, clamped to [0, 0.5].
inline double solver_lambda(double sigma_r, double sigma_s, double sigma_t) {
    double denom = 2.0 * sigma_t * (sigma_r - sigma_s);
    double lam = (sigma_t - sigma_s) * (sigma_t - sigma_s) / denom;
    if (!std::isfinite(lam)) throw std::invalid_argument("solver_lambda: non-finite (sigma_r == sigma_s?)");
    return std::min(std::max(lam, 0.0), 0.5);
}

struct SolverStepResult {
    std::vector<size_t> committed;          // ascending positions committed
    std::vector<size_t> correction;         // subset committed from the difference distribution
    StepRecord record;
};

namespace detail {

// Commits `budget` tokens into the masked positions of the grid. The top
// (budget - correction_n) by confidence take their predicted tokens; the next
// correction_n take tokens drawn from normalize(|p_s - p_r|), falling back to
// the prediction when the difference is degenerate.
inline SolverStepResult solver_commit(TokenGrid& grid, const ProbField& field,
                                      const std::vector<size_t>& positions,
                                      const std::vector<uint32_t>& chosen,
                                      const std::vector<double>& confidence, size_t budget,
                                      size_t correction_n, const ProbField* p_prev,
                                      RngStream& solver_rng) {
    SolverStepResult res;
    std::vector<size_t> order(positions.size());
    std::iota(order.begin(), order.end(), size_t(0));
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (confidence[a] != confidence[b]) return confidence[a] > confidence[b];
        return positions[a] < positions[b];
    });

    size_t main_n = budget - correction_n;
    std::vector<double> pt(field.vocab());
    for (size_t r = 0; r < budget && r < order.size(); ++r) {
        size_t j   = order[r];
        size_t pos = positions[j];
        uint32_t token = chosen[j];
        if (r >= main_n && p_prev != nullptr) {
            if (diff_distribution(field.row(pos), p_prev->row(pos), field.vocab(), pt.data())) {
                token = gumbel_select(pt.data(), field.vocab(), solver_rng, 1.0);
                res.correction.push_back(pos);
            }
        }
        grid.set(pos, token);
        res.committed.push_back(pos);
    }
    std::sort(res.committed.begin(), res.committed.end());
    std::sort(res.correction.begin(), res.correction.end());
    return res;
}

}  // namespace detail

// One solver stride from mask level m_s (= masked_count of z_s) down to the
// target masked count. pred supplies the field/chosen/confidence computed at
// z_s; sigma_r/p_prev come from the previous solver point for order 2.
inline SolverStepResult solver_step(TokenGrid& grid, const ProbField& field,
                                    const std::vector<size_t>& positions,
                                    const std::vector<uint32_t>& chosen,
                                    const std::vector<double>& confidence,
                                    double sigma_s, double sigma_t, size_t budget, int order,
                                    const ProbField* p_prev, double sigma_r,
                                    RngStream& solver_rng) {
    if (!(sigma_s > sigma_t)) throw std::invalid_argument("solver_step: requires sigma_s > sigma_t");
    size_t correction_n = 0;
    if (order == 2 && p_prev != nullptr) {
        if (!(sigma_t > 0.0)) {
            correction_n = 0;  // final stride has no 2nd-order term (sigma_t = 0)
        } else {
            double lam = solver_lambda(sigma_r, sigma_s, sigma_t);
            correction_n = size_t(round_half_away(lam * double(budget)));
        }
    }
    return detail::solver_commit(grid, field, positions, chosen, confidence, budget, correction_n,
                                 p_prev, solver_rng);
}

// Full solver run over the solver's own coarse plan. With order 1 this is
// exactly the vanilla sampler at the same step count (same streams, same
// confidence-ranked commits).
inline std::pair<TokenGrid, SamplerTrace> solver_sample(const Predictor& predictor, uint32_t width,
                                                        uint32_t height, const SamplerConfig& cfg) {
    uint64_t tokens = uint64_t(width) * height;
    cfg.validate(tokens);
    if (!cfg.solver.enabled) throw std::invalid_argument("solver_sample: solver.enabled must be set");

    uint32_t N = cfg.solver.steps;
    TokenGrid grid(width, height, uint32_t(predictor.vocab()));
    StepPlan plan = plan_steps(cfg.schedule, N, tokens);
    detail::RunStreams streams(cfg.seed);

    SamplerTrace trace;
    trace.steps  = N;
    trace.tokens = tokens;
    trace.vocab  = predictor.vocab();

    ProbField prev_field;
    std::vector<size_t> prev_masked;
    double sigma_prev = 0.0;
    for (uint32_t i = 0; i < N; ++i) {
        StepRecord rec;
        rec.step = i;
        rec.t    = plan.t(i);
        rec.masked_before = grid.masked_positions();
        if (rec.masked_before.size() != plan.m(i)) {
            throw StateError("solver_sample: masked count does not match plan");
        }

        auto [field, nfe] = detail::guided_field(predictor, grid, rec.t, cfg.condition,
                                                 cfg.cfg_scale, cfg.noise, streams.noise);
        rec.nfe = nfe;

        rec.predicted = rec.masked_before;
        rec.chosen.resize(rec.predicted.size());
        bool use_argmax = cfg.deterministic_from && i >= *cfg.deterministic_from;
        for (size_t j = 0; j < rec.predicted.size(); ++j) {
            const double* row = field.row(rec.predicted[j]);
            rec.chosen[j] = use_argmax ? argmax_select(row, field.vocab())
                                       : gumbel_select(row, field.vocab(), streams.gumbel, cfg.temperature);
        }
        rec.confidence.resize(rec.predicted.size());
        for (size_t j = 0; j < rec.predicted.size(); ++j) {
            rec.confidence[j] = std::log(std::max(field.at(rec.predicted[j], rec.chosen[j]), 1e-300));
        }

        double sigma_s = sigma(cfg.schedule, plan.t(i));
        double sigma_t = sigma(cfg.schedule, plan.t(i + 1));
        size_t budget  = size_t(plan.m(i) - plan.m(i + 1));
        bool second    = cfg.solver.order == 2 && i >= 1;
        SolverStepResult step = solver_step(grid, field, rec.predicted, rec.chosen, rec.confidence,
                                            sigma_s, sigma_t, budget, second ? 2 : 1,
                                            second ? &prev_field : nullptr, sigma_prev,
                                            streams.solver);
        rec.committed    = step.committed;
        rec.resampled    = step.correction;
        rec.masked_after = grid.masked_count();

        detail::entropy_stats(field, rec.masked_before, rec.mean_entropy, rec.std_entropy);
        if (i >= 1) {
            rec.mean_kl_prev = detail::mean_kl_shared_masked(field, prev_field, rec.masked_before, prev_masked);
        }
        prev_field  = field;
        prev_masked = rec.masked_before;
        sigma_prev  = sigma_s;
        if (cfg.keep_fields) {
            rec.has_field = true;
            rec.field     = std::move(field);
        }
        trace.records.push_back(std::move(rec));
    }
    if (grid.masked_count() != 0) throw StateError("solver_sample: run finished with masked cells");
    return {std::move(grid), std::move(trace)};
}

}  // namespace mgt
