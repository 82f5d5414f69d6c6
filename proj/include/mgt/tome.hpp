#pragma once

// Bipartite token merging: alternating A/B split, cosine-similarity matching,
// mean-merge with exact unmerge, and RoPE rotation-matrix averaging.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "predictor.hpp"

namespace mgt {

struct MergePlan {
    size_t original = 0;  // token count before merging
    size_t dim      = 0;
    double ratio    = 0.0;
    std::vector<std::pair<uint32_t, uint32_t>> pairs;  // (source, destination), source index is merged away
    std::vector<uint32_t> survivors;                   // original indices kept, ascending
    std::vector<uint32_t> row_of;                      // original index -> survivor row
    std::vector<uint32_t> multiplicity;                // per survivor row: 1 + merged sources

    size_t surviving() const { return survivors.size(); }
    bool empty() const { return pairs.empty(); }
};

// tokens: row-major [n x d]. Tokens at even flat indices form set A, odd form
// set B; each A token is scored by cosine similarity against its best B match
// and the top floor(r * |A|) edges merge. Deterministic; ties break by index.
inline MergePlan build_merge_plan(const float* tokens, size_t n, size_t d, double r) {
    if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("build_merge_plan: ratio must be in [0,1)");
    MergePlan plan;
    plan.original = n;
    plan.dim      = d;
    plan.ratio    = r;

    std::vector<uint32_t> a_set, b_set;
    for (size_t i = 0; i < n; ++i) (i % 2 == 0 ? a_set : b_set).push_back(uint32_t(i));

    size_t merges = size_t(std::floor(r * double(a_set.size())));
    if (merges == 0 || b_set.empty()) {
        plan.survivors.resize(n);
        std::iota(plan.survivors.begin(), plan.survivors.end(), 0u);
        plan.row_of = plan.survivors;
        plan.multiplicity.assign(n, 1u);
        return plan;
    }

    auto norm = [&](uint32_t i) {
        double s = 0.0;
        const float* row = tokens + size_t(i) * d;
        for (size_t k = 0; k < d; ++k) s += double(row[k]) * row[k];
        return std::sqrt(s);
    };
    std::vector<double> norms(n);
    for (size_t i = 0; i < n; ++i) norms[i] = norm(uint32_t(i));

    struct Edge {
        uint32_t src, dst;
        double sim;
    };
    std::vector<Edge> edges;
    edges.reserve(a_set.size());
    for (uint32_t a : a_set) {
        const float* ra = tokens + size_t(a) * d;
        double best_sim = -2.0;
        uint32_t best_b = b_set[0];
        for (uint32_t b : b_set) {
            const float* rb = tokens + size_t(b) * d;
            double dot = 0.0;
            for (size_t k = 0; k < d; ++k) dot += double(ra[k]) * rb[k];
            double den = norms[a] * norms[b];
            double sim = den > 1e-12 ? dot / den : -1.0;
            if (sim > best_sim) {
                best_sim = sim;
                best_b   = b;
            }
        }
        edges.push_back({a, best_b, best_sim});
    }
    std::stable_sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
        if (x.sim != y.sim) return x.sim > y.sim;
        return x.src < y.src;
    });
    edges.resize(merges);

    std::vector<uint8_t> merged_away(n, 0);
    for (const Edge& e : edges) {
        plan.pairs.emplace_back(e.src, e.dst);
        merged_away[e.src] = 1;
    }
    std::sort(plan.pairs.begin(), plan.pairs.end());

    plan.row_of.assign(n, 0u);
    for (size_t i = 0; i < n; ++i) {
        if (!merged_away[i]) {
            plan.row_of[i] = uint32_t(plan.survivors.size());
            plan.survivors.push_back(uint32_t(i));
        }
    }
    plan.multiplicity.assign(plan.survivors.size(), 1u);
    for (const auto& [src, dst] : plan.pairs) {
        plan.row_of[src] = plan.row_of[dst];
        plan.multiplicity[plan.row_of[dst]] += 1;
    }
    return plan;
}

// Reduces [n x d] rows to [surviving x d]; each destination becomes the mean
// of itself and everything merged into it.
inline std::vector<float> merge(const float* values, size_t n, size_t d, const MergePlan& plan) {
    if (n != plan.original) throw std::invalid_argument("merge: token count does not match plan");
    std::vector<float> out(plan.surviving() * d, 0.0f);
    for (size_t row = 0; row < plan.surviving(); ++row) {
        const float* src = values + size_t(plan.survivors[row]) * d;
        std::copy(src, src + d, out.begin() + row * d);
    }
    for (const auto& [src, dst] : plan.pairs) {
        float* acc = out.data() + size_t(plan.row_of[dst]) * d;
        const float* add = values + size_t(src) * d;
        for (size_t k = 0; k < d; ++k) acc[k] += add[k];
    }
    for (size_t row = 0; row < plan.surviving(); ++row) {
        float inv = 1.0f / float(plan.multiplicity[row]);
        float* acc = out.data() + row * d;
        for (size_t k = 0; k < d; ++k) acc[k] *= inv;
    }
    return out;
}

// Expands back to full length; every original position receives its survivor
// row's value, so merged sources read the merged mean.
inline std::vector<float> unmerge(const std::vector<float>& reduced, size_t d, const MergePlan& plan) {
    if (reduced.size() != plan.surviving() * d) throw std::invalid_argument("unmerge: length does not match plan");
    std::vector<float> out(plan.original * d);
    for (size_t i = 0; i < plan.original; ++i) {
        const float* src = reduced.data() + size_t(plan.row_of[i]) * d;
        std::copy(src, src + d, out.begin() + i * d);
    }
    return out;
}

// Elementwise average of two rotation matrices. The result is generally not
// orthogonal; averaged rotations shrink norm.
inline std::vector<double> merge_rope(const std::vector<double>& qi, const std::vector<double>& qj) {
    if (qi.size() != qj.size()) throw std::invalid_argument("merge_rope: dimension mismatch");
    std::vector<double> out(qi.size());
    for (size_t k = 0; k < qi.size(); ++k) out[k] = 0.5 * (qi[k] + qj[k]);
    return out;
}

enum class RopeMergeMode {
    Average,  // mean of member rotation matrices
    UseDst,   // negative control: destination's matrix stands in for the pair
};

// Per-survivor rotation coefficients for a merged sequence. Averaging the
// block-diagonal matrices is exactly averaging their (cos, sin) pairs.
inline std::vector<RopeCoeffs> merge_rope_coeffs(const std::vector<RopeCoeffs>& per_token,
                                                 const MergePlan& plan, RopeMergeMode mode) {
    if (per_token.size() != plan.original) throw std::invalid_argument("merge_rope_coeffs: length mismatch");
    std::vector<RopeCoeffs> out(plan.surviving());
    for (size_t row = 0; row < plan.surviving(); ++row) out[row] = per_token[plan.survivors[row]];
    if (mode == RopeMergeMode::UseDst) return out;
    for (const auto& [src, dst] : plan.pairs) {
        RopeCoeffs& acc = out[plan.row_of[dst]];
        const RopeCoeffs& add = per_token[src];
        for (size_t k = 0; k < acc.c.size(); ++k) {
            acc.c[k] += add.c[k];
            acc.s[k] += add.s[k];
        }
    }
    for (size_t row = 0; row < plan.surviving(); ++row) {
        double inv = 1.0 / double(plan.multiplicity[row]);
        for (size_t k = 0; k < out[row].c.size(); ++k) {
            out[row].c[k] *= inv;
            out[row].s[k] *= inv;
        }
    }
    return out;
}

}  // namespace mgt
