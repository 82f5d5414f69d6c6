#pragma once

// A tiny encoder-only bidirectional Transformer with RoPE attention. Weights
// come from seeded random init or a binary weight file; the model exists to
// give quantization and token-merging realistic tensor shapes and activation
// statistics, not semantic quality.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "predictor.hpp"
#include "quant.hpp"
#include "tome.hpp"

namespace mgt {

struct TransformerConfig {
    uint32_t vocab      = 16;
    uint32_t dim        = 32;  // even; head_dim = dim/heads must also be even
    uint32_t heads      = 4;
    uint32_t layers     = 2;
    uint32_t ffn_dim    = 64;
    uint32_t conditions = 4;   // embedding rows; id 0 is the null condition
    uint64_t seed       = 7;
    std::vector<uint32_t> joint_layers;  // layers treated as multi-modal blocks

    bool is_joint(uint32_t layer) const {
        for (uint32_t j : joint_layers)
            if (j == layer) return true;
        return false;
    }

    void validate() const {
        if (dim == 0 || dim % 2 != 0) throw std::invalid_argument("TransformerConfig: dim must be even");
        if (heads == 0 || dim % heads != 0) throw std::invalid_argument("TransformerConfig: heads must divide dim");
        if ((dim / heads) % 2 != 0) throw std::invalid_argument("TransformerConfig: head dim must be even");
        if (layers == 0 || vocab == 0 || ffn_dim == 0 || conditions == 0) {
            throw std::invalid_argument("TransformerConfig: zero-sized field");
        }
        for (uint32_t j : joint_layers)
            if (j >= layers) throw std::invalid_argument("TransformerConfig: joint layer index out of range");
    }
};

// Observes the raw input rows fed to each quantizable matmul site.
class ActivationObserver {
public:
    virtual ~ActivationObserver() = default;
    virtual void observe(size_t site, const float* x, size_t rows, size_t cols) = 0;
};

struct TomeRun {
    double ratio            = 0.0;
    RopeMergeMode rope_mode = RopeMergeMode::Average;
    bool force_single_stream = false;  // also merge non-joint layers (failure repro)

    // Per flagged layer: tokens attention actually ran on.
    mutable std::vector<size_t> attention_tokens;
};

class TinyTransformer : public Predictor {
public:
    explicit TinyTransformer(TransformerConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        init_weights();
    }

    const TransformerConfig& config() const { return cfg_; }
    size_t vocab() const override { return cfg_.vocab; }

    // Quantizable matmul sites, in declaration order.
    std::vector<std::string> site_names() const {
        std::vector<std::string> names;
        for (uint32_t l = 0; l < cfg_.layers; ++l) {
            for (const char* part : {"wq", "wk", "wv", "wo", "fc1", "fc2"}) {
                names.push_back("layer" + std::to_string(l) + "." + part);
            }
        }
        names.push_back("head");
        return names;
    }
    size_t site_count() const { return size_t(cfg_.layers) * 6 + 1; }

    // Full forward with optional fake quantization, activation observation,
    // and token merging. All sampling paths funnel through here.
    PredictorOutput forward_full(const TokenGrid& grid, int condition, double t,
                                 const QuantSpec* quant, ActivationObserver* observer,
                                 const TomeRun* tome) const {
        if (grid.vocab() != cfg_.vocab) throw std::invalid_argument("TinyTransformer: grid vocab mismatch");
        if (condition < 0 || uint32_t(condition) >= cfg_.conditions) {
            throw std::invalid_argument("TinyTransformer: unknown condition id " + std::to_string(condition));
        }
        if (quant && quant->sites() != site_count()) {
            throw std::invalid_argument("TinyTransformer: quant spec built for a different model");
        }
        if (tome) {
            if (!(tome->ratio >= 0.0 && tome->ratio < 1.0)) throw std::invalid_argument("TinyTransformer: merge ratio must be in [0,1)");
            if (!tome->force_single_stream && cfg_.joint_layers.empty() && tome->ratio > 0.0) {
                throw std::invalid_argument("TinyTransformer: token merging requires a joint-block layer");
            }
            tome->attention_tokens.clear();
        }

        const size_t n  = grid.size();
        const size_t d  = cfg_.dim;
        const size_t hd = d / cfg_.heads;

        // Token + condition + time embeddings.
        std::vector<float> x(n * d);
        std::vector<float> temb = time_embedding(t);
        for (size_t p = 0; p < n; ++p) {
            const float* te = tok_emb_.data() + size_t(grid.cell(p)) * d;
            const float* ce = cond_emb_.data() + size_t(condition) * d;
            float* row = x.data() + p * d;
            for (size_t k = 0; k < d; ++k) row[k] = te[k] + ce[k] + temb[k];
        }

        std::vector<RopeCoeffs> rope(n);
        for (size_t p = 0; p < n; ++p) rope[p] = rope_coeffs(p, hd);

        std::vector<float> a_in(n * d), q, k, v;
        for (uint32_t l = 0; l < cfg_.layers; ++l) {
            const Layer& L = layers_[l];
            layer_norm(x.data(), a_in.data(), n, d, L.ln1_g, L.ln1_b);

            size_t base = size_t(l) * 6;
            q = linear(base + 0, a_in.data(), n, d, d, L.wq, quant, observer);
            k = linear(base + 1, a_in.data(), n, d, d, L.wk, quant, observer);
            v = linear(base + 2, a_in.data(), n, d, d, L.wv, quant, observer);

            bool merging = tome && tome->ratio > 0.0 &&
                           (cfg_.is_joint(l) || tome->force_single_stream);
            std::vector<float> attn;
            size_t rows = n;
            if (merging) {
                MergePlan plan = build_merge_plan(a_in.data(), n, d, tome->ratio);
                std::vector<float> qm = merge(q.data(), n, d, plan);
                std::vector<float> km = merge(k.data(), n, d, plan);
                std::vector<float> vm = merge(v.data(), n, d, plan);
                std::vector<RopeCoeffs> rope_m = merge_rope_coeffs(rope, plan, tome->rope_mode);
                rows = plan.surviving();
                tome->attention_tokens.push_back(rows);
                apply_rope(qm, rope_m, rows, hd);
                apply_rope(km, rope_m, rows, hd);
                attn = attention(qm, km, vm, rows, d, hd);
                std::vector<float> o = linear(base + 3, attn.data(), rows, d, d, L.wo, quant, observer);
                std::vector<float> o_full = unmerge(o, d, plan);
                for (size_t i = 0; i < n * d; ++i) x[i] += o_full[i];
            } else {
                std::vector<float> qr = q, kr = k;
                apply_rope(qr, rope, n, hd);
                apply_rope(kr, rope, n, hd);
                attn = attention(qr, kr, v, n, d, hd);
                std::vector<float> o = linear(base + 3, attn.data(), n, d, d, L.wo, quant, observer);
                for (size_t i = 0; i < n * d; ++i) x[i] += o[i];
            }

            std::vector<float> m_in(n * d);
            layer_norm(x.data(), m_in.data(), n, d, L.ln2_g, L.ln2_b);
            std::vector<float> h1 = linear(base + 4, m_in.data(), n, d, cfg_.ffn_dim, L.w1, quant, observer);
            for (size_t i = 0; i < h1.size(); ++i) h1[i] = gelu(h1[i] + L.b1[i % cfg_.ffn_dim]);
            std::vector<float> h2 = linear(base + 5, h1.data(), n, cfg_.ffn_dim, d, L.w2, quant, observer);
            for (size_t p = 0; p < n; ++p)
                for (size_t kk = 0; kk < d; ++kk) x[p * d + kk] += h2[p * d + kk] + L.b2[kk];
        }

        std::vector<float> hf(n * d);
        layer_norm(x.data(), hf.data(), n, d, ln_f_g_, ln_f_b_);
        std::vector<float> logits = linear(site_count() - 1, hf.data(), n, d, cfg_.vocab, head_, quant, observer);

        PredictorOutput out(n, cfg_.vocab);
        for (size_t i = 0; i < logits.size(); ++i) out.logits[i] = double(logits[i]);
        return out;
    }

    // ------------------------------------------------------------------
    // Weight file: "MGTW" magic, version, architecture header, then f32
    // tensors little-endian in declaration order.
    // ------------------------------------------------------------------
    void save_weights(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open weight file for writing: " + path);
        auto w32 = [&](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
        w32(kWeightMagic);
        w32(kWeightVersion);
        w32(cfg_.vocab);
        w32(cfg_.dim);
        w32(cfg_.heads);
        w32(cfg_.layers);
        w32(cfg_.ffn_dim);
        w32(cfg_.conditions);
        w32(uint32_t(cfg_.joint_layers.size()));
        for (uint32_t j : cfg_.joint_layers) w32(j);
        auto tensor = [&](const std::vector<float>& tns) {
            f.write(reinterpret_cast<const char*>(tns.data()), std::streamsize(tns.size() * 4));
        };
        visit_tensors([&](const std::vector<float>& tns, const char*) { tensor(tns); });
        if (!f) throw std::runtime_error("short write to weight file: " + path);
    }

    static std::shared_ptr<TinyTransformer> load_weights(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open weight file: " + path);
        auto r32 = [&]() {
            uint32_t v = 0;
            f.read(reinterpret_cast<char*>(&v), 4);
            if (!f) throw DecodeError("weight file truncated", size_t(f.tellg()));
            return v;
        };
        if (r32() != kWeightMagic) throw DecodeError("bad weight file magic", 0);
        if (r32() != kWeightVersion) throw DecodeError("unsupported weight file version", 4);
        TransformerConfig cfg;
        cfg.vocab      = r32();
        cfg.dim        = r32();
        cfg.heads      = r32();
        cfg.layers     = r32();
        cfg.ffn_dim    = r32();
        cfg.conditions = r32();
        uint32_t joints = r32();
        for (uint32_t i = 0; i < joints; ++i) cfg.joint_layers.push_back(r32());
        auto model = std::make_shared<TinyTransformer>(cfg);
        model->visit_tensors([&](std::vector<float>& tns, const char*) {
            f.read(reinterpret_cast<char*>(tns.data()), std::streamsize(tns.size() * 4));
            if (!f) throw DecodeError("weight file truncated in tensor data", size_t(f.tellg()));
        });
        return model;
    }

    // Total parameter count (for footprint accounting).
    size_t parameter_count() const {
        size_t total = 0;
        const_cast<TinyTransformer*>(this)->visit_tensors(
            [&](std::vector<float>& tns, const char*) { total += tns.size(); });
        return total;
    }

    // Weight matrix of one quantizable site, as (rows, cols, data).
    struct SiteView {
        const std::vector<float>* w;
        size_t rows, cols;
    };
    SiteView site_weights(size_t site) const {
        size_t d = cfg_.dim, ff = cfg_.ffn_dim;
        if (site == site_count() - 1) return {&head_, cfg_.vocab, d};
        const Layer& L = layers_[site / 6];
        switch (site % 6) {
            case 0: return {&L.wq, d, d};
            case 1: return {&L.wk, d, d};
            case 2: return {&L.wv, d, d};
            case 3: return {&L.wo, d, d};
            case 4: return {&L.w1, ff, d};
            default: return {&L.w2, d, ff};
        }
    }

protected:
    PredictorOutput forward(const TokenGrid& grid, int condition, double t) const override {
        return forward_full(grid, condition, t, nullptr, nullptr, nullptr);
    }

private:
    struct Layer {
        std::vector<float> ln1_g, ln1_b, ln2_g, ln2_b;
        std::vector<float> wq, wk, wv, wo;
        std::vector<float> w1, b1, w2, b2;
    };

    static constexpr uint32_t kWeightMagic   = 0x5754474Du;  // "MGTW"
    static constexpr uint32_t kWeightVersion = 1;

    // Init scales. The head is tied to the token embedding so that committed
    // context produces peaked, trained-model-like output distributions.
    static constexpr float kEmbScale      = 1.0f;
    static constexpr float kCondScale     = 0.5f;
    static constexpr float kTimeScale     = 0.5f;
    static constexpr float kQkEye         = 1.5f;
    static constexpr float kResidualEye   = 0.7f;
    static constexpr float kHeadTie       = 4.0f;
    static constexpr float kHeadNoise     = 0.05f;

    void init_weights() {
        RngStream rng(cfg_.seed, 0x7F00ull);
        size_t d = cfg_.dim, ff = cfg_.ffn_dim;
        auto gauss = [&](std::vector<float>& tns, size_t size, float scale) {
            tns.resize(size);
            for (auto& w : tns) w = float(rng.gaussian()) * scale;
        };

        gauss(tok_emb_, size_t(cfg_.vocab + 1) * d, kEmbScale);
        gauss(cond_emb_, size_t(cfg_.conditions) * d, kCondScale);

        float wscale = 1.0f / std::sqrt(float(d));
        layers_.resize(cfg_.layers);
        for (uint32_t l = 0; l < cfg_.layers; ++l) {
            Layer& L = layers_[l];
            // Per-layer norm gains drift apart the way trained checkpoints
            // do, so activation magnitudes differ between sites.
            float gain1 = 0.6f + 0.5f * float(l);
            float gain2 = 1.4f - 0.4f * float(l % 3);
            L.ln1_g.assign(d, gain1); L.ln1_b.assign(d, 0.0f);
            L.ln2_g.assign(d, gain2); L.ln2_b.assign(d, 0.0f);
            gauss(L.wq, d * d, 0.5f * wscale);
            gauss(L.wk, d * d, 0.5f * wscale);
            gauss(L.wv, d * d, 0.3f * wscale);
            gauss(L.wo, d * d, 0.3f * wscale);
            // Near-identity q/k make attention scores peak where the RoPE
            // rotations of query and key align, i.e. attention is local in
            // position; near-identity v/o keep token-embedding directions
            // recognizable after mixing.
            for (size_t i = 0; i < d; ++i) {
                L.wq[i * d + i] += kQkEye;
                L.wk[i * d + i] += kQkEye;
                L.wv[i * d + i] += kResidualEye;
                L.wo[i * d + i] += kResidualEye;
            }
            gauss(L.w1, ff * d, wscale);
            // A few wide hidden channels give the MLP input genuine
            // activation outliers, the regime where per-tensor A8 hurts.
            for (size_t r = 0; r < ff; r += 16) {
                for (size_t c = 0; c < d; ++c) L.w1[r * d + c] *= 6.0f;
            }
            L.b1.assign(ff, 0.0f);
            gauss(L.w2, d * ff, 0.3f / std::sqrt(float(ff)));
            L.b2.assign(d, 0.0f);
        }

        ln_f_g_.assign(d, 1.0f);
        ln_f_b_.assign(d, 0.0f);
        gauss(head_, size_t(cfg_.vocab) * d, kHeadNoise);
        for (size_t vtok = 0; vtok < cfg_.vocab; ++vtok) {
            for (size_t kk = 0; kk < d; ++kk) {
                head_[vtok * d + kk] += kHeadTie * tok_emb_[vtok * d + kk] / std::sqrt(float(d));
            }
        }
    }

    template <typename F>
    void visit_tensors(F&& f) {
        f(tok_emb_, "tok_emb");
        f(cond_emb_, "cond_emb");
        for (Layer& L : layers_) {
            f(L.ln1_g, "ln1_g"); f(L.ln1_b, "ln1_b");
            f(L.wq, "wq"); f(L.wk, "wk"); f(L.wv, "wv"); f(L.wo, "wo");
            f(L.ln2_g, "ln2_g"); f(L.ln2_b, "ln2_b");
            f(L.w1, "w1"); f(L.b1, "b1"); f(L.w2, "w2"); f(L.b2, "b2");
        }
        f(ln_f_g_, "ln_f_g");
        f(ln_f_b_, "ln_f_b");
        f(head_, "head");
    }
    template <typename F>
    void visit_tensors(F&& f) const {
        const_cast<TinyTransformer*>(this)->visit_tensors(
            [&](std::vector<float>& tns, const char* name) { f(tns, name); });
    }

    static float gelu(float v) { return 0.5f * v * (1.0f + std::erf(v * 0.70710678f)); }

    static void layer_norm(const float* x, float* out, size_t rows, size_t d,
                           const std::vector<float>& g, const std::vector<float>& b) {
        for (size_t p = 0; p < rows; ++p) {
            const float* src = x + p * d;
            float* dst = out + p * d;
            float mean = 0.0f;
            for (size_t k = 0; k < d; ++k) mean += src[k];
            mean /= float(d);
            float var = 0.0f;
            for (size_t k = 0; k < d; ++k) var += (src[k] - mean) * (src[k] - mean);
            var /= float(d);
            float inv = 1.0f / std::sqrt(var + 1e-5f);
            for (size_t k = 0; k < d; ++k) dst[k] = (src[k] - mean) * inv * g[k] + b[k];
        }
    }

    // y[r] = W x[r]; applies activation fake-quant and weight fake-quant per
    // the spec, and feeds the raw input to the observer.
    std::vector<float> linear(size_t site, const float* x, size_t rows, size_t in, size_t out,
                              const std::vector<float>& w, const QuantSpec* quant,
                              ActivationObserver* observer) const {
        if (observer) observer->observe(site, x, rows, in);

        const float* xp = x;
        std::vector<float> xq;
        if (quant && quant->act_quant[site]) {
            xq.resize(rows * in);
            quantize_dequantize(x, xq.data(), rows * in, quant->act_bits, quant->act_scale[site]);
            xp = xq.data();
        }
        const float* wp = w.data();
        std::vector<float> wq;
        if (quant && quant->weight_bits > 0) {
            wq.resize(w.size());
            quantize_weights_per_channel(w.data(), wq.data(), out, in, quant->weight_bits);
            wp = wq.data();
        }

        std::vector<float> y(rows * out);
        for (size_t r = 0; r < rows; ++r) {
            const float* xr = xp + r * in;
            float* yr = y.data() + r * out;
            for (size_t o = 0; o < out; ++o) {
                const float* wr = wp + o * in;
                float acc = 0.0f;
                for (size_t c = 0; c < in; ++c) acc += wr[c] * xr[c];
                yr[o] = acc;
            }
        }
        return y;
    }

    static void apply_rope(std::vector<float>& qk, const std::vector<RopeCoeffs>& rope,
                           size_t rows, size_t head_dim) {
        size_t d = qk.size() / rows;
        for (size_t p = 0; p < rows; ++p) {
            for (size_t h = 0; h < d / head_dim; ++h) {
                rope_apply(rope[p], qk.data() + p * d + h * head_dim, head_dim);
            }
        }
    }

    std::vector<float> attention(const std::vector<float>& q, const std::vector<float>& k,
                                 const std::vector<float>& v, size_t rows, size_t d, size_t hd) const {
        std::vector<float> out(rows * d, 0.0f);
        std::vector<float> scores(rows);
        float inv_sqrt = 1.0f / std::sqrt(float(hd));
        for (size_t h = 0; h < d / hd; ++h) {
            size_t off = h * hd;
            for (size_t i = 0; i < rows; ++i) {
                const float* qi = q.data() + i * d + off;
                float mx = -1e30f;
                for (size_t j = 0; j < rows; ++j) {
                    const float* kj = k.data() + j * d + off;
                    float s = 0.0f;
                    for (size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
                    scores[j] = s * inv_sqrt;
                    mx = std::max(mx, scores[j]);
                }
                float sum = 0.0f;
                for (size_t j = 0; j < rows; ++j) {
                    scores[j] = std::exp(scores[j] - mx);
                    sum += scores[j];
                }
                float inv_sum = 1.0f / sum;
                float* oi = out.data() + i * d + off;
                for (size_t j = 0; j < rows; ++j) {
                    float a = scores[j] * inv_sum;
                    const float* vj = v.data() + j * d + off;
                    for (size_t c = 0; c < hd; ++c) oi[c] += a * vj[c];
                }
            }
        }
        return out;
    }

    std::vector<float> time_embedding(double t) const {
        size_t d = cfg_.dim;
        std::vector<float> e(d);
        for (size_t k = 0; k < d / 2; ++k) {
            double freq  = std::pow(10000.0, -2.0 * double(k) / double(d));
            double angle = t * 100.0 * freq;
            e[2 * k]     = float(std::sin(angle)) * kTimeScale;
            e[2 * k + 1] = float(std::cos(angle)) * kTimeScale;
        }
        return e;
    }

    TransformerConfig cfg_;
    std::vector<float> tok_emb_, cond_emb_;
    std::vector<Layer> layers_;
    std::vector<float> ln_f_g_, ln_f_b_, head_;
};

// ---------------------------------------------------------------------------
// SCQ pipeline pieces coupled to the model.
// ---------------------------------------------------------------------------

// Runs float forwards over the calibration grids and records per-site peak
// magnitude, range, and the raw activation samples.
inline CalibRecord primary_calibrate(const TinyTransformer& model, const std::vector<TokenGrid>& calib,
                                     int condition = kNullCondition, double t = 0.0,
                                     size_t max_samples_per_site = 1 << 16) {
    if (calib.empty()) throw std::invalid_argument("primary_calibrate: empty calibration set");

    class Recorder : public ActivationObserver {
    public:
        explicit Recorder(CalibRecord& rec, size_t cap) : rec_(rec), cap_(cap) {}
        void observe(size_t site, const float* x, size_t rows, size_t cols) override {
            ActivationStats& st = rec_.layers[site];
            size_t n = rows * cols;
            for (size_t i = 0; i < n; ++i) {
                double v = x[i];
                st.peak_abs = std::max(st.peak_abs, std::abs(v));
                st.lo = std::min(st.lo, v);
                st.hi = std::max(st.hi, v);
            }
            // Deterministic stride subsample keeps replayable MSE search cheap.
            size_t stride = n / std::max<size_t>(1, cap_ / 4) + 1;
            for (size_t i = 0; i < n && st.samples.size() < cap_; i += stride) st.samples.push_back(x[i]);
        }

    private:
        CalibRecord& rec_;
        size_t cap_;
    };

    CalibRecord rec;
    rec.layers.resize(model.site_count());
    auto names = model.site_names();
    for (size_t i = 0; i < names.size(); ++i) rec.layers[i].name = names[i];

    Recorder recorder(rec, max_samples_per_site);
    for (const TokenGrid& g : calib) {
        model.forward_full(g, condition, t, nullptr, &recorder, nullptr);
    }
    return rec;
}

// Forward pass under a quant spec (weights W4 per-channel, flagged
// activations A8 per-tensor). An identity spec is bit-identical to the float
// path.
inline PredictorOutput fake_quant_forward(const TinyTransformer& model, const QuantSpec& spec,
                                          const TokenGrid& grid, int condition, double t) {
    if (spec.is_identity()) return model.forward_full(grid, condition, t, nullptr, nullptr, nullptr);
    return model.forward_full(grid, condition, t, &spec, nullptr, nullptr);
}

// Forward pass with token merging in joint-block layers.
inline PredictorOutput tome_forward(const TinyTransformer& model, const TokenGrid& grid,
                                    int condition, double t, const TomeRun& tome) {
    if (tome.ratio == 0.0) return model.forward_full(grid, condition, t, nullptr, nullptr, nullptr);
    return model.forward_full(grid, condition, t, nullptr, nullptr, &tome);
}

// Analytic memory accounting: quantized weight matrices store their bit width
// plus one f32 scale per output channel; everything else stays f32.
inline uint64_t bit_footprint(const TinyTransformer& model, const QuantSpec& spec) {
    uint64_t total_params = model.parameter_count();
    uint64_t site_params  = 0;
    uint64_t site_bytes   = 0;
    for (size_t s = 0; s < model.site_count(); ++s) {
        auto view = model.site_weights(s);
        uint64_t count = uint64_t(view.rows) * view.cols;
        site_params += count;
        if (spec.weight_bits > 0) {
            site_bytes += count * uint64_t(spec.weight_bits) / 8 + uint64_t(view.rows) * 4;
        } else {
            site_bytes += count * 4;
        }
    }
    return (total_params - site_params) * 4 + site_bytes;
}

// Predictor adapters so sampling runs can use quantized / merged forwards.
class QuantizedPredictor : public Predictor {
public:
    QuantizedPredictor(std::shared_ptr<const TinyTransformer> model, QuantSpec spec)
        : model_(std::move(model)), spec_(std::move(spec)) {}
    size_t vocab() const override { return model_->vocab(); }

protected:
    PredictorOutput forward(const TokenGrid& grid, int condition, double t) const override {
        return fake_quant_forward(*model_, spec_, grid, condition, t);
    }

private:
    std::shared_ptr<const TinyTransformer> model_;
    QuantSpec spec_;
};

class TomePredictor : public Predictor {
public:
    TomePredictor(std::shared_ptr<const TinyTransformer> model, TomeRun tome)
        : model_(std::move(model)), tome_(std::move(tome)) {}
    size_t vocab() const override { return model_->vocab(); }

protected:
    PredictorOutput forward(const TokenGrid& grid, int condition, double t) const override {
        return tome_forward(*model_, grid, condition, t, tome_);
    }

private:
    std::shared_ptr<const TinyTransformer> model_;
    TomeRun tome_;
};

}  // namespace mgt
