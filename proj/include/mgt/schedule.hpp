#pragma once

// Noise schedules sigma(t) and the per-step masked-token plan derived from
// them. sigma(t) is the fraction of tokens still masked at time t; all kinds
// satisfy sigma(0) = 1, sigma(1) = 0 and are non-increasing.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace mgt {

enum class ScheduleKind {
    Cosine,   // cos(pi*t/2)
    PowDown,  // (1-t)^rho
    PowUp,    // 1 - t^rho
};

struct Schedule {
    ScheduleKind kind = ScheduleKind::Cosine;
    double rho        = 1.0;  // used by the Pow kinds only

    static Schedule cosine() { return {ScheduleKind::Cosine, 1.0}; }
    static Schedule pow_down(double rho) { return make(ScheduleKind::PowDown, rho); }
    static Schedule pow_up(double rho) { return make(ScheduleKind::PowUp, rho); }

    static Schedule make(ScheduleKind kind, double rho) {
        if (kind != ScheduleKind::Cosine && !(rho > 0.0)) {
            throw std::invalid_argument("Schedule: rho must be > 0");
        }
        return {kind, rho};
    }
};

inline double sigma(const Schedule& s, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("sigma: t must be in [0,1]");
    switch (s.kind) {
        case ScheduleKind::Cosine:  return std::cos(3.14159265358979323846 * t / 2.0);
        case ScheduleKind::PowDown: return std::pow(1.0 - t, s.rho);
        case ScheduleKind::PowUp:   return 1.0 - std::pow(t, s.rho);
    }
    throw std::invalid_argument("sigma: unknown schedule kind");
}

inline std::string schedule_kind_name(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::Cosine:  return "cosine";
        case ScheduleKind::PowDown: return "pow_down";
        case ScheduleKind::PowUp:   return "pow_up";
    }
    return "?";
}

inline ScheduleKind schedule_kind_from_name(const std::string& name) {
    if (name == "cosine") return ScheduleKind::Cosine;
    if (name == "pow_down") return ScheduleKind::PowDown;
    if (name == "pow_up") return ScheduleKind::PowUp;
    throw std::invalid_argument("unknown schedule kind: " + name);
}

inline json schedule_to_json(const Schedule& s) {
    json j{{"kind", schedule_kind_name(s.kind)}};
    if (s.kind != ScheduleKind::Cosine) j["rho"] = s.rho;
    return j;
}

// Deterministic across platforms, unlike llrint under changing FP modes.
inline long long round_half_away(double x) {
    return x >= 0.0 ? (long long)std::floor(x + 0.5) : (long long)std::ceil(x - 0.5);
}

// StepPlan: t_i = i/N and the masked-count trajectory m_0 = K, ..., m_N = 0.
struct StepPlan {
    Schedule schedule;
    uint32_t steps  = 0;  // N
    uint64_t tokens = 0;  // K
    std::vector<double> times;            // N+1 entries, t_i = i/N
    std::vector<uint64_t> masked_counts;  // N+1 entries

    double t(size_t i) const { return times[i]; }
    uint64_t m(size_t i) const { return masked_counts[i]; }
};

// Discretizes sigma over the step grid: m_i = round(sigma(i/N)*K), then a
// backward pass raises counts so that every step unmasks at least one token
// and a forward pass clamps them below the strictly-decreasing ceiling.
inline StepPlan plan_steps(const Schedule& s, uint32_t N, uint64_t K) {
    if (N < 1 || K < 1) throw std::invalid_argument("plan_steps: N and K must be >= 1");
    if (N > K) throw std::invalid_argument("plan_steps: N must be <= K (each step unmasks >= 1 token)");

    StepPlan plan;
    plan.schedule = s;
    plan.steps    = N;
    plan.tokens   = K;
    plan.times.resize(N + 1);
    plan.masked_counts.resize(N + 1);

    std::vector<long long> m(N + 1);
    for (uint32_t i = 0; i <= N; ++i) {
        plan.times[i] = double(i) / double(N);
        m[i] = round_half_away(sigma(s, plan.times[i]) * double(K));
    }
    m[0] = (long long)K;
    m[N] = 0;
    for (uint32_t i = N - 1; i >= 1; --i) {
        m[i] = std::max(m[i], m[i + 1] + 1);
    }
    for (uint32_t i = 1; i <= N; ++i) {
        m[i] = std::min(m[i], m[i - 1] - 1);
    }
    for (uint32_t i = 0; i <= N; ++i) plan.masked_counts[i] = uint64_t(m[i]);
    return plan;
}

}  // namespace mgt
