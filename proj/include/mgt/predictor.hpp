#pragma once

// The abstract token predictor f_theta plus the analytic oracle backend,
// classifier-free guidance combination, and RoPE rotation matrices.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "core.hpp"

namespace mgt {

// Condition id reserved for the unconditional branch.
constexpr int kNullCondition = 0;

// Pre-softmax logits, one vector of length vocab per grid position.
struct PredictorOutput {
    size_t positions = 0;
    size_t vocab     = 0;
    std::vector<double> logits;  // positions * vocab, row-major

    PredictorOutput() = default;
    PredictorOutput(size_t positions_, size_t vocab_)
        : positions(positions_), vocab(vocab_), logits(positions_ * vocab_, 0.0) {}

    double* row(size_t pos) { return logits.data() + pos * vocab; }
    const double* row(size_t pos) const { return logits.data() + pos * vocab; }

    bool finite() const {
        for (double v : logits)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void softmax_row(const double* logits, double* probs, size_t n) {
    double mx = logits[0];
    for (size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        probs[i] = std::exp(logits[i] - mx);
        sum += probs[i];
    }
    for (size_t i = 0; i < n; ++i) probs[i] /= sum;
}

inline ProbField softmax_field(const PredictorOutput& out) {
    ProbField f(out.positions, out.vocab);
    for (size_t p = 0; p < out.positions; ++p) softmax_row(out.row(p), f.row(p), out.vocab);
    return f;
}

// Abstract predictor. predict() counts one forward pass per call; the counter
// is atomic so read-only sharing across runs stays safe.
class Predictor {
public:
    virtual ~Predictor() = default;

    PredictorOutput predict(const TokenGrid& grid, int condition, double t) const {
        if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("predict: t must be in [0,1]");
        nfe_.fetch_add(1, std::memory_order_relaxed);
        return forward(grid, condition, t);
    }

    uint64_t nfe() const { return nfe_.load(std::memory_order_relaxed); }
    void reset_nfe() const { nfe_.store(0, std::memory_order_relaxed); }

    virtual size_t vocab() const = 0;

protected:
    virtual PredictorOutput forward(const TokenGrid& grid, int condition, double t) const = 0;

private:
    mutable std::atomic<uint64_t> nfe_{0};
};

// ---------------------------------------------------------------------------
// FactorizedOracle: a synthetic predictor with exactly known per-position
// marginals, indexed by condition id. Logits are log(marginal) at every
// position regardless of grid state, so the sampler's output distribution can
// be enumerated in closed form.
// ---------------------------------------------------------------------------
class FactorizedOracle : public Predictor {
public:
    FactorizedOracle(uint32_t width, uint32_t height, uint32_t vocab)
        : width_(width), height_(height), vocab_(vocab) {}

    void set_condition(int condition, ProbField marginals) {
        if (marginals.positions() != size_t(width_) * height_ || marginals.vocab() != vocab_) {
            throw std::invalid_argument("FactorizedOracle: marginal shape mismatch");
        }
        marginals.validate();
        if (size_t(condition) >= fields_.size()) fields_.resize(condition + 1);
        fields_[condition] = std::move(marginals);
        present_.resize(fields_.size(), false);
        present_[condition] = true;
    }

    const ProbField& marginals(int condition) const {
        check_condition(condition);
        return fields_[condition];
    }

    // Deterministic random marginals: entry (pos, tok) ~ softmax(conc * g)
    // with g standard normal from a counter-based stream keyed on
    // (oracle_seed, condition). conc = 0 gives the uniform oracle.
    static std::shared_ptr<FactorizedOracle> seeded(uint32_t width, uint32_t height, uint32_t vocab,
                                                    int conditions, uint64_t oracle_seed,
                                                    double concentration) {
        auto oracle = std::make_shared<FactorizedOracle>(width, height, vocab);
        size_t k = size_t(width) * height;
        for (int c = 0; c < conditions; ++c) {
            RngStream rng(oracle_seed, 0x0FAC1E00ull + uint64_t(c));
            ProbField f(k, vocab);
            std::vector<double> g(vocab);
            for (size_t p = 0; p < k; ++p) {
                for (uint32_t v = 0; v < vocab; ++v) g[v] = concentration * rng.gaussian();
                softmax_row(g.data(), f.row(p), vocab);
            }
            oracle->set_condition(c, std::move(f));
        }
        return oracle;
    }

    size_t vocab() const override { return vocab_; }
    int conditions() const { return int(fields_.size()); }

protected:
    PredictorOutput forward(const TokenGrid& grid, int condition, double /*t*/) const override {
        check_condition(condition);
        if (grid.width() != width_ || grid.height() != height_ || grid.vocab() != vocab_) {
            throw std::invalid_argument("FactorizedOracle: grid shape mismatch");
        }
        const ProbField& f = fields_[condition];
        PredictorOutput out(grid.size(), vocab_);
        for (size_t p = 0; p < grid.size(); ++p) {
            double* row = out.row(p);
            for (uint32_t v = 0; v < vocab_; ++v) {
                // Zero-mass entries clamp so logits stay finite; the softmax
                // round-trip error is far below the 1e-12 exactness bound.
                row[v] = std::log(std::max(f.at(p, v), 1e-300));
            }
        }
        return out;
    }

private:
    void check_condition(int condition) const {
        if (condition < 0 || size_t(condition) >= fields_.size() || !present_[condition]) {
            throw std::invalid_argument("FactorizedOracle: unknown condition id " + std::to_string(condition));
        }
    }

    uint32_t width_, height_, vocab_;
    std::vector<ProbField> fields_;
    std::vector<bool> present_;
};

// ---------------------------------------------------------------------------
// Classifier-free guidance: uncond + scale * (cond - uncond).
// scale == 0 or a missing uncond branch returns cond untouched.
// ---------------------------------------------------------------------------
inline PredictorOutput cfg_combine(const PredictorOutput& cond, const PredictorOutput* uncond, double scale) {
    if (scale == 0.0 || uncond == nullptr) return cond;
    if (uncond->positions != cond.positions || uncond->vocab != cond.vocab) {
        throw std::invalid_argument("cfg_combine: shape mismatch");
    }
    PredictorOutput out(cond.positions, cond.vocab);
    for (size_t i = 0; i < cond.logits.size(); ++i) {
        out.logits[i] = uncond->logits[i] + scale * (cond.logits[i] - uncond->logits[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// RoPE. Position j rotates dimension pair k by angle j * theta_k with
// theta_k = 10000^(-2k/d). Block-diagonal matrices are kept as (cos, sin)
// coefficient pairs; averaging two matrices of this form stays in the form.
// ---------------------------------------------------------------------------
struct RopeCoeffs {
    std::vector<double> c;  // d/2 cosines
    std::vector<double> s;  // d/2 sines
};

inline double rope_theta(size_t k, size_t d) {
    return std::pow(10000.0, -2.0 * double(k) / double(d));
}

inline RopeCoeffs rope_coeffs(size_t j, size_t d) {
    if (d == 0 || d % 2 != 0) throw std::invalid_argument("rope_coeffs: d must be even and positive");
    RopeCoeffs rc;
    rc.c.resize(d / 2);
    rc.s.resize(d / 2);
    for (size_t k = 0; k < d / 2; ++k) {
        double angle = double(j) * rope_theta(k, d);
        rc.c[k] = std::cos(angle);
        rc.s[k] = std::sin(angle);
    }
    return rc;
}

// Dense d x d block-diagonal rotation matrix for position j.
inline std::vector<double> rope_matrix(size_t j, size_t d) {
    RopeCoeffs rc = rope_coeffs(j, d);
    std::vector<double> m(d * d, 0.0);
    for (size_t k = 0; k < d / 2; ++k) {
        size_t r = 2 * k;
        m[r * d + r]           = rc.c[k];
        m[r * d + r + 1]       = -rc.s[k];
        m[(r + 1) * d + r]     = rc.s[k];
        m[(r + 1) * d + r + 1] = rc.c[k];
    }
    return m;
}

// In-place rotation of a d-vector by the coefficients.
inline void rope_apply(const RopeCoeffs& rc, float* x, size_t d) {
    for (size_t k = 0; k < d / 2; ++k) {
        float a = x[2 * k], b = x[2 * k + 1];
        x[2 * k]     = float(rc.c[k] * a - rc.s[k] * b);
        x[2 * k + 1] = float(rc.s[k] * a + rc.c[k] * b);
    }
}

}  // namespace mgt
