#pragma once

// Trace-derived diagnostics: entropy/KL trajectories, bar statistics over
// committed grids, oracle log-likelihood, and NFE accounting.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "enhance.hpp"
#include "predictor.hpp"
#include "sampler.hpp"

namespace mgt {

struct Trajectory {
    std::vector<double> mean;
    std::vector<double> stdev;

    size_t steps() const { return mean.size(); }
};

namespace detail {

inline void require_fields(const SamplerTrace& trace) {
    if (trace.records.empty()) throw std::invalid_argument("trace is empty");
    for (const auto& r : trace.records) {
        if (!r.has_field) throw std::invalid_argument("trace was recorded without per-step fields");
    }
}

}  // namespace detail

// Per-step mean/std of Shannon entropy (nats) over the positions still
// masked at that step.
inline Trajectory entropy_trajectory(const SamplerTrace& trace) {
    detail::require_fields(trace);
    Trajectory tr;
    for (const auto& r : trace.records) {
        double mean, stdev;
        detail::entropy_stats(r.field, r.masked_before, mean, stdev);
        tr.mean.push_back(mean);
        tr.stdev.push_back(stdev);
    }
    return tr;
}

// Per-step mean KL between consecutive recorded fields over positions masked
// at both steps. Step 0 reports 0.
inline Trajectory kl_trajectory(const SamplerTrace& trace) {
    detail::require_fields(trace);
    if (trace.records.size() < 2) throw std::invalid_argument("kl_trajectory: need at least 2 steps");
    Trajectory tr;
    tr.mean.push_back(0.0);
    tr.stdev.push_back(0.0);
    for (size_t i = 1; i < trace.records.size(); ++i) {
        const auto& cur  = trace.records[i];
        const auto& prev = trace.records[i - 1];
        std::vector<size_t> shared;
        std::set_intersection(cur.masked_before.begin(), cur.masked_before.end(),
                              prev.masked_before.begin(), prev.masked_before.end(),
                              std::back_inserter(shared));
        double mean = 0.0, stdev = 0.0;
        if (!shared.empty()) {
            std::vector<double> d(shared.size());
            for (size_t j = 0; j < shared.size(); ++j) {
                d[j] = kl_div(cur.field.row(shared[j]), prev.field.row(shared[j]), cur.field.vocab());
                mean += d[j];
            }
            mean /= double(shared.size());
            for (double x : d) stdev += (x - mean) * (x - mean);
            stdev = std::sqrt(stdev / double(shared.size()));
        }
        tr.mean.push_back(mean);
        tr.stdev.push_back(stdev);
    }
    return tr;
}

// Mean absolute id difference between adjacent rows / columns, normalized by
// (vocab - 1). Requires a fully committed grid.
inline std::pair<double, double> bar_stats(const TokenGrid& grid) {
    if (grid.masked_count() != 0) throw StateError("bar_stats: grid contains masked cells");
    const size_t w = grid.width(), h = grid.height();
    double denom = grid.vocab() > 1 ? double(grid.vocab() - 1) : 1.0;

    double row_diff = 0.0;
    if (h > 1) {
        for (size_t r = 0; r + 1 < h; ++r) {
            double acc = 0.0;
            for (size_t c = 0; c < w; ++c) {
                acc += std::abs(double(grid.cell(r * w + c)) - double(grid.cell((r + 1) * w + c)));
            }
            row_diff += acc / double(w);
        }
        row_diff /= double(h - 1) * denom;
    }

    double col_diff = 0.0;
    if (w > 1) {
        for (size_t c = 0; c + 1 < w; ++c) {
            double acc = 0.0;
            for (size_t r = 0; r < h; ++r) {
                acc += std::abs(double(grid.cell(r * w + c)) - double(grid.cell(r * w + c + 1)));
            }
            col_diff += acc / double(h);
        }
        col_diff /= double(w - 1) * denom;
    }
    return {row_diff, col_diff};
}

// Sum of log marginals of the committed tokens; the toy-domain quality proxy.
inline double oracle_loglik(const TokenGrid& grid, const FactorizedOracle& oracle, int condition) {
    if (grid.masked_count() != 0) throw StateError("oracle_loglik: grid contains masked cells");
    const ProbField& m = oracle.marginals(condition);
    if (m.positions() != grid.size()) throw std::invalid_argument("oracle_loglik: oracle does not cover grid");
    double ll = 0.0;
    for (size_t p = 0; p < grid.size(); ++p) {
        ll += std::log(std::max(m.at(p, grid.cell(p)), 1e-300));
    }
    return ll;
}

inline uint64_t nfe_count(const SamplerTrace& trace) { return trace.total_nfe(); }

// Quality proxy for predictor-backend runs: masked log-likelihood of the
// committed grid under a scoring predictor. Even positions are masked and
// scored given the odd half, then the reverse; two forwards total. Masking
// the scored positions keeps a bidirectional model from reading the answer
// off its own input.
inline double masked_loglik(const Predictor& scorer, const TokenGrid& grid, int condition,
                            double t = 1.0) {
    if (grid.masked_count() != 0) throw StateError("masked_loglik: grid contains masked cells");
    double ll = 0.0;
    for (int parity = 0; parity < 2; ++parity) {
        TokenGrid half = grid;
        for (size_t p = size_t(parity); p < grid.size(); p += 2) half.mask(p);
        ProbField f = softmax_field(scorer.predict(half, condition, t));
        for (size_t p = size_t(parity); p < grid.size(); p += 2) {
            ll += std::log(std::max(f.at(p, grid.cell(p)), 1e-300));
        }
    }
    return ll;
}

// Quality proxy for modified forwards (quantized / token-merged backbones):
// expected log-likelihood, under the modified predictor's field, of tokens
// distributed per the reference field at the context's masked positions.
// By Gibbs' inequality this is maximal exactly when the modified field
// matches the reference, and it drops by the KL divergence as it drifts.
inline double agreement_loglik(const Predictor& reference, const Predictor& test,
                               const TokenGrid& context, int condition, double t) {
    if (context.masked_count() == 0) throw std::invalid_argument("agreement_loglik: context has no masked cells");
    ProbField ref = softmax_field(reference.predict(context, condition, t));
    ProbField got = softmax_field(test.predict(context, condition, t));
    double ll = 0.0;
    for (size_t p = 0; p < context.size(); ++p) {
        if (!context.is_masked(p)) continue;
        for (size_t v = 0; v < ref.vocab(); ++v) {
            ll += ref.at(p, v) * std::log(std::max(got.at(p, v), 1e-300));
        }
    }
    return ll;
}

// (step, t, mean, std) CSV for a trajectory.
inline std::string trajectory_csv(const Trajectory& tr, const SamplerTrace& trace) {
    std::string out = "step,t,mean,std\n";
    char buf[128];
    for (size_t i = 0; i < tr.mean.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g,%.12g\n", i, trace.records[i].t,
                      tr.mean[i], tr.stdev[i]);
        out += buf;
    }
    return out;
}

}  // namespace mgt
