#pragma once

// Experiment harness: JSON config ingestion with field-path diagnostics,
// deterministic run manifests, artifact writing, and a parallel sweep driver
// whose output order is independent of worker scheduling.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "enhance.hpp"
#include "metrics.hpp"
#include "predictor.hpp"
#include "sampler.hpp"
#include "schedule.hpp"
#include "solver.hpp"
#include "transformer.hpp"

namespace mgt {

constexpr const char* kToolVersion = "mgtkit 0.1.0";

// Configuration problem tied to a specific field path; the CLI maps these to
// exit code 2.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& message)
        : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

struct PredictorSpec {
    std::string backend = "oracle";  // "oracle" | "transformer"
    // oracle
    uint64_t oracle_seed = 7;
    double concentration = 1.0;
    int conditions       = 4;
    // transformer
    TransformerConfig transformer;
    std::string weights_file;  // optional; overrides seeded init
};

struct QuantRunSpec {
    bool enabled    = false;
    double fraction = 1.0 / 3.0;
    int calib_grids = 8;
    uint64_t calib_seed = 101;
    std::string spec_file;  // optional pre-built spec
};

struct TomeRunSpec {
    double ratio = 0.0;
    RopeMergeMode rope_mode = RopeMergeMode::Average;
    bool force_single_stream = false;
};

struct RunConfig {
    uint32_t width = 16, height = 16, vocab = 16;
    SamplerConfig sampler;
    PredictorSpec predictor;
    QuantRunSpec quant;
    TomeRunSpec tome;

    uint64_t tokens() const { return uint64_t(width) * height; }
};

// ---------------------------------------------------------------------------
// JSON parsing with field-path errors.
// ---------------------------------------------------------------------------
namespace cfgdetail {

inline const json* find(const json& j, const std::string& key) {
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

template <typename T>
T get_or(const json& j, const std::string& path, const std::string& key, T fallback) {
    const json* v = find(j, key);
    if (!v) return fallback;
    try {
        return v->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + "." + key, "wrong type");
    }
}

template <typename T>
T require(const json& j, const std::string& path, const std::string& key) {
    const json* v = find(j, key);
    if (!v) throw ConfigError(path + "." + key, "missing required field");
    try {
        return v->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + "." + key, "wrong type");
    }
}

}  // namespace cfgdetail

inline Schedule parse_schedule(const json& j, const std::string& path) {
    std::string kind = cfgdetail::get_or<std::string>(j, path, "kind", "cosine");
    double rho = cfgdetail::get_or<double>(j, path, "rho", 0.6);
    try {
        return Schedule::make(schedule_kind_from_name(kind), rho);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    }
}

inline RunConfig parse_run_config(const json& j) {
    RunConfig rc;
    if (const json* grid = cfgdetail::find(j, "grid")) {
        rc.width  = cfgdetail::get_or<uint32_t>(*grid, "grid", "width", 16);
        rc.height = cfgdetail::get_or<uint32_t>(*grid, "grid", "height", 16);
        rc.vocab  = cfgdetail::get_or<uint32_t>(*grid, "grid", "vocab", 16);
    }
    if (rc.width == 0 || rc.height == 0 || rc.vocab == 0) {
        throw ConfigError("grid", "width, height and vocab must be >= 1");
    }

    if (const json* sch = cfgdetail::find(j, "schedule")) {
        rc.sampler.schedule = parse_schedule(*sch, "schedule");
    }

    if (const json* s = cfgdetail::find(j, "sampler")) {
        rc.sampler.steps       = cfgdetail::get_or<uint32_t>(*s, "sampler", "steps", 16);
        rc.sampler.cfg_scale   = cfgdetail::get_or<double>(*s, "sampler", "cfg_scale", 0.0);
        rc.sampler.temperature = cfgdetail::get_or<double>(*s, "sampler", "temperature", 1.0);
        rc.sampler.seed        = cfgdetail::get_or<uint64_t>(*s, "sampler", "seed", 1);
        rc.sampler.condition   = cfgdetail::get_or<int>(*s, "sampler", "condition", 1);
        rc.sampler.keep_fields = cfgdetail::get_or<bool>(*s, "sampler", "keep_fields", false);
        if (const json* df = cfgdetail::find(*s, "deterministic_from"); df && !df->is_null()) {
            rc.sampler.deterministic_from = cfgdetail::get_or<uint32_t>(*s, "sampler", "deterministic_from", 0);
        }
    }

    if (const json* e = cfgdetail::find(j, "enhance")) {
        if (const json* nr = cfgdetail::find(*e, "noise_reg")) {
            std::string curve = cfgdetail::get_or<std::string>(*nr, "enhance.noise_reg", "curve", "zero");
            try {
                rc.sampler.noise.curve = noise_curve_from_name(curve);
            } catch (const std::invalid_argument& ex) {
                throw ConfigError("enhance.noise_reg.curve", ex.what());
            }
            rc.sampler.noise.constant = cfgdetail::get_or<double>(*nr, "enhance.noise_reg", "constant", 0.0);
            if (rc.sampler.noise.constant < 0.0) {
                throw ConfigError("enhance.noise_reg.constant", "must be >= 0");
            }
        }
        if (const json* df = cfgdetail::find(*e, "differential")) {
            rc.sampler.differential.z = cfgdetail::get_or<double>(*df, "enhance.differential", "z", 0.0);
            if (!(rc.sampler.differential.z >= 0.0 && rc.sampler.differential.z <= 100.0)) {
                throw ConfigError("enhance.differential.z", "must be in [0,100]");
            }
        }
        if (const json* z = cfgdetail::find(*e, "zigzag")) {
            std::string mode = cfgdetail::get_or<std::string>(*z, "enhance.zigzag", "mode", "masked");
            try {
                rc.sampler.zigzag.mode = zigzag_mode_from_name(mode);
            } catch (const std::invalid_argument& ex) {
                throw ConfigError("enhance.zigzag.mode", ex.what());
            }
            rc.sampler.zigzag.inversion_cfg_scale =
                cfgdetail::get_or<double>(*z, "enhance.zigzag", "inversion_cfg_scale", 0.0);
            if (const json* steps = cfgdetail::find(*z, "steps")) {
                try {
                    rc.sampler.zigzag.steps = steps->get<std::vector<uint32_t>>();
                } catch (const json::exception&) {
                    throw ConfigError("enhance.zigzag.steps", "must be an array of step indices");
                }
            } else {
                uint32_t count  = cfgdetail::get_or<uint32_t>(*z, "enhance.zigzag", "count", 0);
                uint32_t stride = cfgdetail::get_or<uint32_t>(*z, "enhance.zigzag", "stride", 1);
                if (stride == 0) throw ConfigError("enhance.zigzag.stride", "must be >= 1");
                for (uint32_t i = 0; i < count; ++i) rc.sampler.zigzag.steps.push_back(i * stride);
            }
        }
    }

    if (const json* s = cfgdetail::find(j, "solver")) {
        rc.sampler.solver.enabled = cfgdetail::get_or<bool>(*s, "solver", "enabled", false);
        rc.sampler.solver.order   = cfgdetail::get_or<int>(*s, "solver", "order", 1);
        rc.sampler.solver.steps   = cfgdetail::get_or<uint32_t>(*s, "solver", "steps", 16);
    }

    if (const json* p = cfgdetail::find(j, "predictor")) {
        rc.predictor.backend = cfgdetail::get_or<std::string>(*p, "predictor", "backend", "oracle");
        if (rc.predictor.backend != "oracle" && rc.predictor.backend != "transformer") {
            throw ConfigError("predictor.backend", "must be \"oracle\" or \"transformer\"");
        }
        if (const json* o = cfgdetail::find(*p, "oracle")) {
            rc.predictor.oracle_seed   = cfgdetail::get_or<uint64_t>(*o, "predictor.oracle", "seed", 7);
            rc.predictor.concentration = cfgdetail::get_or<double>(*o, "predictor.oracle", "concentration", 1.0);
            rc.predictor.conditions    = cfgdetail::get_or<int>(*o, "predictor.oracle", "conditions", 4);
        }
        if (const json* t = cfgdetail::find(*p, "transformer")) {
            TransformerConfig& tc = rc.predictor.transformer;
            tc.seed       = cfgdetail::get_or<uint64_t>(*t, "predictor.transformer", "seed", 7);
            tc.dim        = cfgdetail::get_or<uint32_t>(*t, "predictor.transformer", "dim", 32);
            tc.heads      = cfgdetail::get_or<uint32_t>(*t, "predictor.transformer", "heads", 4);
            tc.layers     = cfgdetail::get_or<uint32_t>(*t, "predictor.transformer", "layers", 2);
            tc.ffn_dim    = cfgdetail::get_or<uint32_t>(*t, "predictor.transformer", "ffn_dim", 64);
            tc.conditions = cfgdetail::get_or<uint32_t>(*t, "predictor.transformer", "conditions", 4);
            if (const json* jl = cfgdetail::find(*t, "joint_layers")) {
                try {
                    tc.joint_layers = jl->get<std::vector<uint32_t>>();
                } catch (const json::exception&) {
                    throw ConfigError("predictor.transformer.joint_layers", "must be an array of layer indices");
                }
            } else {
                tc.joint_layers = {tc.layers - 1};
            }
            rc.predictor.weights_file =
                cfgdetail::get_or<std::string>(*t, "predictor.transformer", "weights_file", "");
        }
    }
    if (rc.predictor.transformer.joint_layers.empty() && rc.predictor.backend == "transformer") {
        rc.predictor.transformer.joint_layers = {rc.predictor.transformer.layers - 1};
    }
    rc.predictor.transformer.vocab = rc.vocab;

    if (const json* q = cfgdetail::find(j, "quant")) {
        rc.quant.enabled     = cfgdetail::get_or<bool>(*q, "quant", "enabled", false);
        rc.quant.fraction    = cfgdetail::get_or<double>(*q, "quant", "fraction", 1.0 / 3.0);
        rc.quant.calib_grids = cfgdetail::get_or<int>(*q, "quant", "calib_grids", 8);
        rc.quant.calib_seed  = cfgdetail::get_or<uint64_t>(*q, "quant", "calib_seed", 101);
        rc.quant.spec_file   = cfgdetail::get_or<std::string>(*q, "quant", "spec_file", "");
        if (rc.quant.enabled && !(rc.quant.fraction > 0.0 && rc.quant.fraction <= 1.0)) {
            throw ConfigError("quant.fraction", "must be in (0,1]");
        }
        if (rc.quant.enabled && rc.quant.calib_grids < 1) {
            throw ConfigError("quant.calib_grids", "must be >= 1");
        }
    }

    if (const json* t = cfgdetail::find(j, "tome")) {
        rc.tome.ratio = cfgdetail::get_or<double>(*t, "tome", "ratio", 0.0);
        if (!(rc.tome.ratio >= 0.0 && rc.tome.ratio < 1.0)) {
            throw ConfigError("tome.ratio", "must be in [0,1)");
        }
        std::string mode = cfgdetail::get_or<std::string>(*t, "tome", "rope_mode", "average");
        if (mode == "average") rc.tome.rope_mode = RopeMergeMode::Average;
        else if (mode == "use_dst") rc.tome.rope_mode = RopeMergeMode::UseDst;
        else throw ConfigError("tome.rope_mode", "must be \"average\" or \"use_dst\"");
        rc.tome.force_single_stream = cfgdetail::get_or<bool>(*t, "tome", "force_single_stream", false);
    }

    // Cross-field validation.
    if (rc.predictor.backend == "oracle") {
        if (rc.quant.enabled) throw ConfigError("quant.enabled", "requires the transformer backend");
        if (rc.tome.ratio > 0.0) throw ConfigError("tome.ratio", "requires the transformer backend");
        if (rc.sampler.condition < 0 || rc.sampler.condition >= rc.predictor.conditions) {
            throw ConfigError("sampler.condition", "outside the oracle's condition range");
        }
    } else {
        if (rc.sampler.condition < 0 ||
            uint32_t(rc.sampler.condition) >= rc.predictor.transformer.conditions) {
            throw ConfigError("sampler.condition", "outside the transformer's condition range");
        }
    }
    try {
        rc.sampler.validate(rc.tokens());
    } catch (const std::invalid_argument& e) {
        throw ConfigError("sampler", e.what());
    }
    return rc;
}

// Canonical JSON image of a config (sorted keys, explicit defaults). The
// manifest embeds this, so a manifest alone reproduces the run.
inline json run_config_to_json(const RunConfig& rc) {
    json j;
    j["grid"] = {{"width", rc.width}, {"height", rc.height}, {"vocab", rc.vocab}};
    j["schedule"] = schedule_to_json(rc.sampler.schedule);
    json s{{"steps", rc.sampler.steps},
           {"cfg_scale", rc.sampler.cfg_scale},
           {"temperature", rc.sampler.temperature},
           {"seed", rc.sampler.seed},
           {"condition", rc.sampler.condition},
           {"keep_fields", rc.sampler.keep_fields}};
    if (rc.sampler.deterministic_from) s["deterministic_from"] = *rc.sampler.deterministic_from;
    j["sampler"] = s;
    j["enhance"] = {
        {"noise_reg", {{"curve", noise_curve_name(rc.sampler.noise.curve)}, {"constant", rc.sampler.noise.constant}}},
        {"differential", {{"z", rc.sampler.differential.z}}},
        {"zigzag", {{"mode", zigzag_mode_name(rc.sampler.zigzag.mode)},
                    {"inversion_cfg_scale", rc.sampler.zigzag.inversion_cfg_scale},
                    {"steps", rc.sampler.zigzag.steps}}}};
    j["solver"] = {{"enabled", rc.sampler.solver.enabled},
                   {"order", rc.sampler.solver.order},
                   {"steps", rc.sampler.solver.steps}};
    json p{{"backend", rc.predictor.backend}};
    p["oracle"] = {{"seed", rc.predictor.oracle_seed},
                   {"concentration", rc.predictor.concentration},
                   {"conditions", rc.predictor.conditions}};
    p["transformer"] = {{"seed", rc.predictor.transformer.seed},
                        {"dim", rc.predictor.transformer.dim},
                        {"heads", rc.predictor.transformer.heads},
                        {"layers", rc.predictor.transformer.layers},
                        {"ffn_dim", rc.predictor.transformer.ffn_dim},
                        {"conditions", rc.predictor.transformer.conditions},
                        {"joint_layers", rc.predictor.transformer.joint_layers},
                        {"weights_file", rc.predictor.weights_file}};
    j["predictor"] = p;
    j["quant"] = {{"enabled", rc.quant.enabled},
                  {"fraction", rc.quant.fraction},
                  {"calib_grids", rc.quant.calib_grids},
                  {"calib_seed", rc.quant.calib_seed},
                  {"spec_file", rc.quant.spec_file}};
    j["tome"] = {{"ratio", rc.tome.ratio},
                 {"rope_mode", rc.tome.rope_mode == RopeMergeMode::Average ? "average" : "use_dst"},
                 {"force_single_stream", rc.tome.force_single_stream}};
    return j;
}

inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string config_hash(const RunConfig& rc) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)fnv1a(run_config_to_json(rc).dump()));
    return buf;
}

// ---------------------------------------------------------------------------
// Predictor construction and run execution.
// ---------------------------------------------------------------------------
struct PredictorBundle {
    std::shared_ptr<Predictor> predictor;             // what the sampler calls
    std::shared_ptr<TinyTransformer> model;           // float backbone when present
    std::shared_ptr<FactorizedOracle> oracle;         // oracle backend when present
    QuantSpec quant_spec;                             // populated when quant ran
    bool quant_active = false;
};

inline std::vector<TokenGrid> make_calib_grids(uint32_t w, uint32_t h, uint32_t vocab, int count,
                                               uint64_t seed) {
    std::vector<TokenGrid> grids;
    RngStream rng(seed, 0xCA11Bull);
    for (int i = 0; i < count; ++i) {
        TokenGrid g(w, h, vocab);
        for (size_t p = 0; p < g.size(); ++p) {
            if (rng.uniform() < 0.5) g.set(p, uint32_t(rng.next_u64() % vocab));
        }
        grids.push_back(std::move(g));
    }
    return grids;
}

inline PredictorBundle build_predictor(const RunConfig& rc) {
    PredictorBundle b;
    if (rc.predictor.backend == "oracle") {
        b.oracle = FactorizedOracle::seeded(rc.width, rc.height, rc.vocab, rc.predictor.conditions,
                                            rc.predictor.oracle_seed, rc.predictor.concentration);
        b.predictor = b.oracle;
        return b;
    }
    if (!rc.predictor.weights_file.empty()) {
        b.model = TinyTransformer::load_weights(rc.predictor.weights_file);
        if (b.model->vocab() != rc.vocab) {
            throw ConfigError("predictor.transformer.weights_file", "weight file vocab does not match grid vocab");
        }
    } else {
        b.model = std::make_shared<TinyTransformer>(rc.predictor.transformer);
    }
    b.predictor = b.model;

    if (rc.quant.enabled) {
        if (!rc.quant.spec_file.empty()) {
            std::ifstream f(rc.quant.spec_file);
            if (!f) throw ConfigError("quant.spec_file", "cannot open " + rc.quant.spec_file);
            json js = json::parse(f, nullptr, true);
            b.quant_spec = quant_spec_from_json(js);
            if (b.quant_spec.sites() != b.model->site_count()) {
                throw ConfigError("quant.spec_file", "spec does not match model");
            }
        } else {
            auto grids = make_calib_grids(rc.width, rc.height, rc.vocab, rc.quant.calib_grids,
                                          rc.quant.calib_seed);
            CalibRecord rec = primary_calibrate(*b.model, grids, rc.sampler.condition, 0.0);
            b.quant_spec = secondary_calibrate(rec, rc.quant.fraction);
        }
        b.quant_active = true;
        b.predictor = std::make_shared<QuantizedPredictor>(b.model, b.quant_spec);
    }
    if (rc.tome.ratio > 0.0) {
        if (b.quant_active) throw ConfigError("tome.ratio", "tome and quant do not compose in one run");
        TomeRun run;
        run.ratio = rc.tome.ratio;
        run.rope_mode = rc.tome.rope_mode;
        run.force_single_stream = rc.tome.force_single_stream;
        b.predictor = std::make_shared<TomePredictor>(b.model, run);
    }
    return b;
}

struct RunResult {
    TokenGrid grid;
    SamplerTrace trace;
    json manifest;
    double quality = 0.0;  // oracle loglik or masked loglik, per backend
};

inline RunResult execute_run(const RunConfig& rc) {
    PredictorBundle bundle = build_predictor(rc);
    auto [grid, trace] = rc.sampler.solver.enabled
                             ? solver_sample(*bundle.predictor, rc.width, rc.height, rc.sampler)
                             : sample(*bundle.predictor, rc.width, rc.height, rc.sampler);

    RunResult res{std::move(grid), std::move(trace), json{}, 0.0};
    if (bundle.oracle) {
        res.quality = oracle_loglik(res.grid, *bundle.oracle, rc.sampler.condition);
    } else {
        res.quality = masked_loglik(*bundle.model, res.grid, rc.sampler.condition);
    }
    auto [row_diff, col_diff] = bar_stats(res.grid);

    json variants{{"noise_reg", noise_curve_name(rc.sampler.noise.curve)},
                  {"differential_z", rc.sampler.differential.z},
                  {"zigzag_steps", rc.sampler.zigzag.steps.size()},
                  {"solver", rc.sampler.solver.enabled},
                  {"quant", rc.quant.enabled},
                  {"tome_ratio", rc.tome.ratio}};
    res.manifest = json{{"tool_version", kToolVersion},
                        {"config_hash", config_hash(rc)},
                        {"config", run_config_to_json(rc)},
                        {"seed", rc.sampler.seed},
                        {"schedule", schedule_to_json(rc.sampler.schedule)},
                        {"variants", variants},
                        {"nfe_total", nfe_count(res.trace)},
                        {"metrics", json{{"quality_loglik", res.quality},
                                         {"bar_row_diff", row_diff},
                                         {"bar_col_diff", col_diff},
                                         {"final_mean_entropy", res.trace.records.back().mean_entropy}}},
                        {"artifacts", json{{"grid", "grid.bin"},
                                           {"grid_json", "grid.json"},
                                           {"trace", "trace.csv"}}}};
    return res;
}

inline void write_file(const std::filesystem::path& path, const std::string& data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
    f.write(data.data(), std::streamsize(data.size()));
    if (!f) throw std::runtime_error("short write: " + path.string());
}

inline void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
    if (!f) throw std::runtime_error("short write: " + path.string());
}

// Runs a config and persists grid/trace/manifest (and per-step fields when
// kept) under out_dir.
inline RunResult run_to_files(const RunConfig& rc, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    RunResult res = execute_run(rc);
    write_file(out_dir / "grid.bin", grid_serialize(res.grid));
    write_file(out_dir / "grid.json", grid_to_json(res.grid).dump(2) + "\n");
    write_file(out_dir / "trace.csv", trace_csv(res.trace));
    if (rc.sampler.keep_fields) {
        std::vector<uint8_t> blob;
        for (const auto& r : res.trace.records) {
            auto bytes = probfield_serialize(r.field);
            blob.insert(blob.end(), bytes.begin(), bytes.end());
        }
        write_file(out_dir / "fields.bin", blob);
        res.manifest["artifacts"]["fields"] = "fields.bin";
    }
    write_file(out_dir / "manifest.json", res.manifest.dump(2) + "\n");
    return res;
}

inline RunConfig config_from_manifest(const json& manifest) {
    if (!manifest.contains("config")) {
        throw ConfigError("manifest.config", "manifest does not embed a config");
    }
    return parse_run_config(manifest.at("config"));
}

// ---------------------------------------------------------------------------
// Sweep driver: tasks fan out over a worker pool; results land in task order.
// ---------------------------------------------------------------------------
struct SweepTask {
    std::string id;    // stable row label, e.g. "pow_up:0.6"
    RunConfig config;
};

inline int worker_count_from_env() {
    if (const char* env = std::getenv("MGT_WORKERS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : int(hc);
}

inline std::vector<RunResult> run_sweep(const std::vector<SweepTask>& tasks, int workers = 0) {
    if (workers <= 0) workers = worker_count_from_env();
    std::vector<RunResult> results(tasks.size());
    std::vector<std::string> errors(tasks.size());
    std::atomic<size_t> next{0};
    auto work = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            try {
                results[i] = execute_run(tasks[i].config);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < std::min<int>(workers, int(tasks.size())); ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    for (size_t i = 0; i < tasks.size(); ++i) {
        if (!errors[i].empty()) {
            throw std::runtime_error("sweep task " + tasks[i].id + " failed: " + errors[i]);
        }
    }
    return results;
}

// Per-run rows plus a per-configuration summary with winning rates against a
// named baseline configuration.
inline std::string sweep_rows_csv(const std::vector<SweepTask>& tasks,
                                  const std::vector<RunResult>& results) {
    std::string out = "config,seed,quality_loglik,nfe,bar_row_diff,bar_col_diff\n";
    char buf[256];
    for (size_t i = 0; i < tasks.size(); ++i) {
        auto [row_diff, col_diff] = bar_stats(results[i].grid);
        std::snprintf(buf, sizeof(buf), "%s,%llu,%.12g,%llu,%.12g,%.12g\n", tasks[i].id.c_str(),
                      (unsigned long long)tasks[i].config.sampler.seed, results[i].quality,
                      (unsigned long long)nfe_count(results[i].trace), row_diff, col_diff);
        out += buf;
    }
    return out;
}

inline std::string sweep_summary_csv(const std::vector<SweepTask>& tasks,
                                     const std::vector<RunResult>& results,
                                     const std::string& baseline_id) {
    // Group by id preserving first-seen order.
    std::vector<std::string> order;
    std::vector<std::vector<size_t>> groups;
    for (size_t i = 0; i < tasks.size(); ++i) {
        size_t gi = 0;
        for (; gi < order.size(); ++gi)
            if (order[gi] == tasks[i].id) break;
        if (gi == order.size()) {
            order.push_back(tasks[i].id);
            groups.emplace_back();
        }
        groups[gi].push_back(i);
    }
    int base = -1;
    for (size_t gi = 0; gi < order.size(); ++gi)
        if (order[gi] == baseline_id) base = int(gi);

    std::string out = "config,runs,mean_quality,mean_nfe,winning_rate_vs_baseline\n";
    char buf[256];
    for (size_t gi = 0; gi < order.size(); ++gi) {
        double mean_q = 0, mean_nfe = 0, wins = 0;
        for (size_t k = 0; k < groups[gi].size(); ++k) {
            size_t i = groups[gi][k];
            mean_q += results[i].quality;
            mean_nfe += double(nfe_count(results[i].trace));
            if (base >= 0 && k < groups[base].size()) {
                if (results[i].quality > results[groups[base][k]].quality) wins += 1.0;
            }
        }
        size_t n = groups[gi].size();
        double wr = (base >= 0 && n > 0) ? wins / double(n) : 0.0;
        std::snprintf(buf, sizeof(buf), "%s,%zu,%.12g,%.12g,%.12g\n", order[gi].c_str(), n,
                      mean_q / double(n), mean_nfe / double(n), wr);
        out += buf;
    }
    return out;
}

}  // namespace mgt
