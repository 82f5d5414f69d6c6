#pragma once

// Symmetric fake quantization (W4 per-output-channel, A8 per-tensor) and the
// secondary-calibration selection rule: only the lowest-magnitude third of
// activation sites gets quantized, each with a clip ratio found by grid
// search over the calibration activations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"

namespace mgt {

inline int quant_qmax(int bits) { return (1 << (bits - 1)) - 1; }

// q = clamp(round(x/scale), -qmax, qmax); returns q*scale.
inline float quantize_dequantize(float x, int bits, float scale) {
    if (!std::isfinite(x)) throw std::invalid_argument("quantize_dequantize: non-finite input");
    if (!(scale > 0.0f)) throw std::invalid_argument("quantize_dequantize: scale must be > 0");
    float qmax = float(quant_qmax(bits));
    float q = std::round(x / scale);
    q = std::min(std::max(q, -qmax), qmax);
    return q * scale;
}

inline void quantize_dequantize(const float* x, float* out, size_t n, int bits, float scale) {
    for (size_t i = 0; i < n; ++i) out[i] = quantize_dequantize(x[i], bits, scale);
}

// Per-output-channel symmetric weight quant; rows of a [out x in] matrix.
// Returns the per-channel scales used.
inline std::vector<float> quantize_weights_per_channel(const float* w, float* out,
                                                       size_t rows, size_t cols, int bits) {
    std::vector<float> scales(rows);
    float qmax = float(quant_qmax(bits));
    for (size_t r = 0; r < rows; ++r) {
        const float* src = w + r * cols;
        float peak = 0.0f;
        for (size_t c = 0; c < cols; ++c) peak = std::max(peak, std::abs(src[c]));
        float scale = peak > 0.0f ? peak / qmax : 1.0f;
        scales[r] = scale;
        quantize_dequantize(src, out + r * cols, cols, bits, scale);
    }
    return scales;
}

// Peak magnitude and range of one activation site over the calibration set,
// plus the raw samples the clip-ratio search replays.
struct ActivationStats {
    std::string name;
    double peak_abs = 0.0;
    double lo = 0.0, hi = 0.0;
    std::vector<float> samples;
};

struct CalibRecord {
    std::vector<ActivationStats> layers;
    size_t size() const { return layers.size(); }
};

struct QuantSpec {
    int weight_bits = 4;  // 0 disables weight quantization
    int act_bits    = 8;
    std::vector<std::string> site_names;
    std::vector<uint8_t> act_quant;      // per-site flag
    std::vector<float> act_scale;        // per-site absolute scale
    std::vector<float> act_clip_ratio;   // per-site chosen ratio (1.0 = full range)

    static QuantSpec identity(const std::vector<std::string>& names) {
        QuantSpec s;
        s.weight_bits = 0;
        s.site_names  = names;
        s.act_quant.assign(names.size(), 0);
        s.act_scale.assign(names.size(), 1.0f);
        s.act_clip_ratio.assign(names.size(), 1.0f);
        return s;
    }

    bool is_identity() const {
        if (weight_bits != 0) return false;
        return std::none_of(act_quant.begin(), act_quant.end(), [](uint8_t f) { return f != 0; });
    }

    size_t sites() const { return site_names.size(); }
};

inline json quant_spec_to_json(const QuantSpec& s) {
    json layers = json::array();
    for (size_t i = 0; i < s.sites(); ++i) {
        layers.push_back(json{{"name", s.site_names[i]},
                              {"act_quant", bool(s.act_quant[i])},
                              {"act_scale", s.act_scale[i]},
                              {"act_clip_ratio", s.act_clip_ratio[i]}});
    }
    return json{{"weight_bits", s.weight_bits}, {"act_bits", s.act_bits}, {"layers", layers}};
}

inline QuantSpec quant_spec_from_json(const json& j) {
    QuantSpec s;
    s.weight_bits = j.at("weight_bits").get<int>();
    s.act_bits    = j.at("act_bits").get<int>();
    for (const auto& l : j.at("layers")) {
        s.site_names.push_back(l.at("name").get<std::string>());
        s.act_quant.push_back(l.at("act_quant").get<bool>() ? 1 : 0);
        s.act_scale.push_back(l.at("act_scale").get<float>());
        s.act_clip_ratio.push_back(l.at("act_clip_ratio").get<float>());
    }
    return s;
}

// Mean squared error of fake-quantizing the samples at the given clip ratio.
inline double clip_mse(const std::vector<float>& samples, double peak_abs, int bits, double ratio) {
    if (samples.empty()) return 0.0;
    float scale = float(std::max(ratio * peak_abs, 1e-12) / quant_qmax(bits));
    double mse = 0.0;
    for (float x : samples) {
        double e = double(x) - quantize_dequantize(x, bits, scale);
        mse += e * e;
    }
    return mse / double(samples.size());
}

// Selects the floor(fraction * L) sites with the smallest recorded peak
// magnitudes (ties by site index) and grid-searches each one's clip ratio
// over {0.5, 0.6, ..., 1.0} for minimum quantization MSE.
inline QuantSpec secondary_calibrate(const CalibRecord& record, double fraction = 1.0 / 3.0,
                                     int weight_bits = 4, int act_bits = 8) {
    if (record.size() == 0) throw std::invalid_argument("secondary_calibrate: empty calibration record");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("secondary_calibrate: fraction must be in (0,1]");

    QuantSpec spec;
    spec.weight_bits = weight_bits;
    spec.act_bits    = act_bits;
    for (const auto& l : record.layers) spec.site_names.push_back(l.name);
    spec.act_quant.assign(record.size(), 0);
    spec.act_scale.assign(record.size(), 1.0f);
    spec.act_clip_ratio.assign(record.size(), 1.0f);

    size_t select = size_t(std::floor(fraction * double(record.size())));
    std::vector<size_t> order(record.size());
    std::iota(order.begin(), order.end(), size_t(0));
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return record.layers[a].peak_abs < record.layers[b].peak_abs;
    });

    for (size_t i = 0; i < select; ++i) {
        size_t site = order[i];
        const ActivationStats& st = record.layers[site];
        double best_ratio = 1.0, best_mse = clip_mse(st.samples, st.peak_abs, act_bits, 1.0);
        for (int r = 5; r <= 9; ++r) {
            double ratio = double(r) / 10.0;
            double mse = clip_mse(st.samples, st.peak_abs, act_bits, ratio);
            if (mse < best_mse) {
                best_mse = mse;
                best_ratio = ratio;
            }
        }
        spec.act_quant[site]      = 1;
        spec.act_clip_ratio[site] = float(best_ratio);
        spec.act_scale[site]      = float(std::max(best_ratio * st.peak_abs, 1e-12) / quant_qmax(act_bits));
    }
    return spec;
}

}  // namespace mgt
