// Command-line harness: single runs, ablation sweeps, solver/tome benches,
// quantization spec building, and trace export. Exit codes: 0 success,
// 1 runtime failure, 2 configuration error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include <CLI11.hpp>

#include "mgt/metrics.hpp"
#include "mgt/runner.hpp"
#include "mgt/solver.hpp"

namespace fs = std::filesystem;
using namespace mgt;

namespace {

json load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    return json::parse(f);
}

RunConfig load_config_file(const std::string& path) {
    return parse_run_config(load_json(path));
}

RunConfig default_oracle_config() {
    RunConfig rc;
    rc.width = 16;
    rc.height = 16;
    rc.vocab = 16;
    rc.sampler.schedule = Schedule::cosine();
    rc.sampler.steps = 16;
    rc.sampler.cfg_scale = 0.0;
    rc.sampler.condition = 1;
    rc.predictor.backend = "oracle";
    return rc;
}

RunConfig default_transformer_config() {
    RunConfig rc = default_oracle_config();
    rc.predictor.backend = "transformer";
    rc.predictor.transformer.vocab = rc.vocab;
    rc.predictor.transformer.joint_layers = {rc.predictor.transformer.layers - 1};
    return rc;
}

void write_text(const fs::path& p, const std::string& s) {
    if (!p.parent_path().empty()) fs::create_directories(p.parent_path());
    write_file(p, s);
}

std::vector<SweepTask> seeded_tasks(const std::string& id, const RunConfig& base, int seeds) {
    std::vector<SweepTask> tasks;
    for (int s = 0; s < seeds; ++s) {
        SweepTask t{id, base};
        t.config.sampler.seed = base.sampler.seed + uint64_t(s);
        tasks.push_back(std::move(t));
    }
    return tasks;
}

void append(std::vector<SweepTask>& into, std::vector<SweepTask> more) {
    for (auto& t : more) into.push_back(std::move(t));
}

int run_guarded(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error at " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale inference engine for masked-generative-Transformer sampling"};
    app.require_subcommand(1);

    // ---- run ----
    auto* run_cmd = app.add_subcommand("run", "Execute one sampling run from a config or manifest");
    std::string run_config_path, run_manifest_path, run_out = "out";
    run_cmd->add_option("--config", run_config_path, "JSON config file");
    run_cmd->add_option("--manifest", run_manifest_path, "replay a previous run's manifest");
    run_cmd->add_option("--out", run_out, "output directory");

    // ---- sweeps ----
    auto* sched_cmd = app.add_subcommand("sweep-schedule", "Noise-schedule sweep (cosine vs pow kinds)");
    std::string sched_out = "out";
    int sched_seeds = 20;
    std::vector<double> sched_rhos = {0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0};
    std::string sched_config;
    sched_cmd->add_option("--out", sched_out, "output directory");
    sched_cmd->add_option("--seeds", sched_seeds, "seeds per configuration");
    sched_cmd->add_option("--rho", sched_rhos, "rho values for the pow kinds");
    sched_cmd->add_option("--config", sched_config, "base config (defaults to the oracle toy run)");

    auto* zig_cmd = app.add_subcommand("zigzag-ablation", "Masked Z-Sampling inversion-scale and mode ablation");
    std::string zig_out = "out";
    int zig_seeds = 20;
    std::vector<double> zig_scales = {-3, -2, -1, 0, 1, 3, 5, 7, 9};
    std::string zig_config;
    zig_cmd->add_option("--out", zig_out, "output directory");
    zig_cmd->add_option("--seeds", zig_seeds, "seeds per configuration");
    zig_cmd->add_option("--scales", zig_scales, "inversion CFG scales to sweep");
    zig_cmd->add_option("--config", zig_config, "base config");

    auto* noise_cmd = app.add_subcommand("noise-reg-ablation", "Noise-regularization curve ablation");
    std::string noise_out = "out";
    int noise_seeds = 20;
    std::string noise_config;
    noise_cmd->add_option("--out", noise_out, "output directory");
    noise_cmd->add_option("--seeds", noise_seeds, "seeds per configuration");
    noise_cmd->add_option("--config", noise_config, "base config");

    auto* diff_cmd = app.add_subcommand("diff-ablation", "Differential-sampling z%% ablation");
    std::string diff_out = "out";
    int diff_seeds = 20;
    std::vector<double> diff_zs = {0, 25, 50, 75, 100};
    double diff_drift = 0.05;
    std::string diff_config;
    diff_cmd->add_option("--out", diff_out, "output directory");
    diff_cmd->add_option("--seeds", diff_seeds, "seeds per configuration");
    diff_cmd->add_option("--z", diff_zs, "z percentages");
    diff_cmd->add_option("--drift", diff_drift,
                         "shared logit-noise std giving the oracle temporal variation (all arms)");
    diff_cmd->add_option("--config", diff_config, "base config");

    auto* solver_cmd = app.add_subcommand("solver-bench", "Momentum-based solver benchmark");
    std::string solver_out = "out";
    int solver_seeds = 20;
    std::vector<int> solver_orders = {1, 2};
    std::vector<uint32_t> solver_steps = {8, 16, 20, 32, 64};
    double solver_drift = 0.05;
    std::string solver_config;
    solver_cmd->add_option("--out", solver_out, "output directory");
    solver_cmd->add_option("--seeds", solver_seeds, "seeds per configuration");
    solver_cmd->add_option("--order", solver_orders, "solver orders to bench");
    solver_cmd->add_option("--steps", solver_steps, "effective step counts");
    solver_cmd->add_option("--drift", solver_drift,
                           "shared logit-noise std; without it consecutive oracle fields are "
                           "identical and the 2nd-order correction always falls back");
    solver_cmd->add_option("--config", solver_config, "base config");

    auto* quant_cmd = app.add_subcommand("quantize", "Build an SCQ quant spec and report the footprint");
    std::string quant_out = "out";
    std::string quant_config;
    double quant_fraction = 1.0 / 3.0;
    int quant_calib = 8;
    quant_cmd->add_option("--out", quant_out, "output directory");
    quant_cmd->add_option("--config", quant_config, "base config (transformer backend)");
    quant_cmd->add_option("--fraction", quant_fraction, "fraction of activation sites to quantize");
    quant_cmd->add_option("--calib-grids", quant_calib, "number of calibration grids");

    auto* tome_cmd = app.add_subcommand("tome-bench", "Token-merging ratio benchmark");
    std::string tome_out = "out";
    int tome_seeds = 20;
    std::vector<double> tome_ratios = {0.0, 0.25, 0.5, 0.75};
    std::string tome_config;
    tome_cmd->add_option("--out", tome_out, "output directory");
    tome_cmd->add_option("--seeds", tome_seeds, "evaluation contexts per ratio");
    tome_cmd->add_option("--ratio", tome_ratios, "merge ratios");
    tome_cmd->add_option("--config", tome_config, "base config (transformer backend)");

    auto* export_cmd = app.add_subcommand("trace-export", "Re-run a manifest and export trajectory CSVs");
    std::string export_manifest, export_out = "out";
    export_cmd->add_option("--manifest", export_manifest, "manifest to replay")->required();
    export_cmd->add_option("--out", export_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    if (*run_cmd) {
        return run_guarded([&] {
            RunConfig rc;
            if (!run_manifest_path.empty()) {
                rc = config_from_manifest(load_json(run_manifest_path));
            } else if (!run_config_path.empty()) {
                rc = load_config_file(run_config_path);
            } else {
                throw ConfigError("run", "one of --config or --manifest is required");
            }
            RunResult res = run_to_files(rc, run_out);
            std::printf("run %s: nfe=%llu quality_loglik=%.6f -> %s\n",
                        config_hash(rc).c_str(), (unsigned long long)nfe_count(res.trace),
                        res.quality, run_out.c_str());
        });
    }

    if (*sched_cmd) {
        return run_guarded([&] {
            RunConfig base = sched_config.empty() ? default_oracle_config() : load_config_file(sched_config);
            std::vector<SweepTask> tasks = seeded_tasks("cosine", base, sched_seeds);
            for (double rho : sched_rhos) {
                RunConfig up = base;
                up.sampler.schedule = Schedule::pow_up(rho);
                char id[48];
                std::snprintf(id, sizeof(id), "pow_up:%.3g", rho);
                append(tasks, seeded_tasks(id, up, sched_seeds));
                RunConfig down = base;
                down.sampler.schedule = Schedule::pow_down(rho);
                std::snprintf(id, sizeof(id), "pow_down:%.3g", rho);
                append(tasks, seeded_tasks(id, down, sched_seeds));
            }
            auto results = run_sweep(tasks);
            write_text(fs::path(sched_out) / "schedule_rows.csv", sweep_rows_csv(tasks, results));
            write_text(fs::path(sched_out) / "schedule_summary.csv",
                       sweep_summary_csv(tasks, results, "cosine"));
            std::printf("sweep-schedule: %zu runs -> %s\n", tasks.size(), sched_out.c_str());
        });
    }

    if (*zig_cmd) {
        return run_guarded([&] {
            RunConfig base = zig_config.empty() ? default_oracle_config() : load_config_file(zig_config);
            if (base.sampler.cfg_scale == 0.0) base.sampler.cfg_scale = 9.0;
            std::vector<SweepTask> tasks = seeded_tasks("vanilla", base, zig_seeds);
            std::vector<uint32_t> all_steps;
            for (uint32_t i = 0; i < base.sampler.steps; ++i) all_steps.push_back(i);
            for (double scale : zig_scales) {
                RunConfig z = base;
                z.sampler.zigzag.mode = ZigzagMode::Masked;
                z.sampler.zigzag.inversion_cfg_scale = scale;
                z.sampler.zigzag.steps = all_steps;
                char id[48];
                std::snprintf(id, sizeof(id), "masked:%.3g", scale);
                append(tasks, seeded_tasks(id, z, zig_seeds));
            }
            for (ZigzagMode mode : {ZigzagMode::Recover, ZigzagMode::VanillaRandom}) {
                RunConfig z = base;
                z.sampler.zigzag.mode = mode;
                z.sampler.zigzag.steps = all_steps;
                append(tasks, seeded_tasks(zigzag_mode_name(mode), z, zig_seeds));
            }
            auto results = run_sweep(tasks);
            write_text(fs::path(zig_out) / "zigzag_rows.csv", sweep_rows_csv(tasks, results));
            write_text(fs::path(zig_out) / "zigzag_summary.csv",
                       sweep_summary_csv(tasks, results, "vanilla"));
            std::printf("zigzag-ablation: %zu runs -> %s\n", tasks.size(), zig_out.c_str());
        });
    }

    if (*noise_cmd) {
        return run_guarded([&] {
            RunConfig base = noise_config.empty() ? default_oracle_config() : load_config_file(noise_config);
            std::vector<SweepTask> tasks = seeded_tasks("vanilla", base, noise_seeds);
            for (NoiseCurve curve : {NoiseCurve::AbsCos, NoiseCurve::HalfAbsCos,
                                     NoiseCurve::PiecewiseLoHi, NoiseCurve::PiecewiseHiLo}) {
                RunConfig n = base;
                n.sampler.noise.curve = curve;
                append(tasks, seeded_tasks(noise_curve_name(curve), n, noise_seeds));
            }
            for (double c : {0.25, 0.5, 1.0}) {
                RunConfig n = base;
                n.sampler.noise.curve = NoiseCurve::Constant;
                n.sampler.noise.constant = c;
                char id[48];
                std::snprintf(id, sizeof(id), "constant:%.3g", c);
                append(tasks, seeded_tasks(id, n, noise_seeds));
            }
            auto results = run_sweep(tasks);
            write_text(fs::path(noise_out) / "noise_rows.csv", sweep_rows_csv(tasks, results));
            write_text(fs::path(noise_out) / "noise_summary.csv",
                       sweep_summary_csv(tasks, results, "vanilla"));
            std::printf("noise-reg-ablation: %zu runs -> %s\n", tasks.size(), noise_out.c_str());
        });
    }

    if (*diff_cmd) {
        return run_guarded([&] {
            if (diff_zs.empty()) throw ConfigError("diff.z", "sweep axis must not be empty");
            RunConfig base = diff_config.empty() ? default_oracle_config() : load_config_file(diff_config);
            // The constant-marginal oracle has no temporal variation of its
            // own; a small logit noise shared by every arm stands in for the
            // drift a trained backbone shows between steps.
            base.sampler.noise.curve = NoiseCurve::Constant;
            base.sampler.noise.constant = diff_drift;
            std::vector<SweepTask> tasks;
            for (double z : diff_zs) {
                RunConfig d = base;
                d.sampler.differential.z = z;
                char id[48];
                std::snprintf(id, sizeof(id), "z:%.3g", z);
                append(tasks, seeded_tasks(id, d, diff_seeds));
            }
            auto results = run_sweep(tasks);
            write_text(fs::path(diff_out) / "diff_rows.csv", sweep_rows_csv(tasks, results));
            write_text(fs::path(diff_out) / "diff_summary.csv", sweep_summary_csv(tasks, results, "z:0"));
            std::printf("diff-ablation: %zu runs -> %s\n", tasks.size(), diff_out.c_str());
        });
    }

    if (*solver_cmd) {
        return run_guarded([&] {
            RunConfig base = solver_config.empty() ? default_oracle_config() : load_config_file(solver_config);
            if (solver_config.empty()) {
                base.width = 32;
                base.height = 32;
            }
            if (solver_drift > 0.0) {
                base.sampler.noise.curve = NoiseCurve::Constant;
                base.sampler.noise.constant = solver_drift;
            }
            std::vector<SweepTask> tasks;
            for (uint32_t n : solver_steps) {
                RunConfig v = base;
                v.sampler.steps = n;
                char id[48];
                std::snprintf(id, sizeof(id), "vanilla:%u", n);
                append(tasks, seeded_tasks(id, v, solver_seeds));
                for (int order : solver_orders) {
                    RunConfig s = base;
                    s.sampler.steps = n;
                    s.sampler.solver.enabled = true;
                    s.sampler.solver.order = order;
                    s.sampler.solver.steps = n;
                    std::snprintf(id, sizeof(id), "solver%d:%u", order, n);
                    append(tasks, seeded_tasks(id, s, solver_seeds));
                }
            }
            auto results = run_sweep(tasks);
            write_text(fs::path(solver_out) / "solver_rows.csv", sweep_rows_csv(tasks, results));
            // Per-N summaries against the matching vanilla baseline.
            std::string summary = "config,runs,mean_quality,mean_nfe,winning_rate_vs_baseline\n";
            for (uint32_t n : solver_steps) {
                std::string suffix = ":" + std::to_string(n);
                std::vector<SweepTask> group_tasks;
                std::vector<RunResult> group_results;
                for (size_t i = 0; i < tasks.size(); ++i) {
                    if (tasks[i].id.size() >= suffix.size() &&
                        tasks[i].id.compare(tasks[i].id.size() - suffix.size(), suffix.size(), suffix) == 0) {
                        group_tasks.push_back(tasks[i]);
                        group_results.push_back(results[i]);
                    }
                }
                std::string part = sweep_summary_csv(group_tasks, group_results, "vanilla" + suffix);
                summary += part.substr(part.find('\n') + 1);
            }
            write_text(fs::path(solver_out) / "solver_summary.csv", summary);
            std::printf("solver-bench: %zu runs -> %s\n", tasks.size(), solver_out.c_str());
        });
    }

    if (*quant_cmd) {
        return run_guarded([&] {
            RunConfig base = quant_config.empty() ? default_transformer_config() : load_config_file(quant_config);
            if (base.predictor.backend != "transformer") {
                throw ConfigError("predictor.backend", "quantize requires the transformer backend");
            }
            base.quant.enabled = true;
            base.quant.fraction = quant_fraction;
            base.quant.calib_grids = quant_calib;
            PredictorBundle bundle = build_predictor(base);

            write_text(fs::path(quant_out) / "quant_spec.json",
                       quant_spec_to_json(bundle.quant_spec).dump(2) + "\n");

            QuantSpec float_spec = QuantSpec::identity(bundle.model->site_names());
            uint64_t float_bytes = bit_footprint(*bundle.model, float_spec);
            uint64_t quant_bytes = bit_footprint(*bundle.model, bundle.quant_spec);

            // Mean squared logit error of the quantized forward on held-out grids.
            double mse = 0.0;
            size_t count = 0;
            auto eval = make_calib_grids(base.width, base.height, base.vocab, 4, base.quant.calib_seed + 1);
            for (const TokenGrid& g : eval) {
                PredictorOutput flt = bundle.model->predict(g, base.sampler.condition, 0.3);
                PredictorOutput qnt = fake_quant_forward(*bundle.model, bundle.quant_spec, g,
                                                         base.sampler.condition, 0.3);
                for (size_t i = 0; i < flt.logits.size(); ++i) {
                    double d = flt.logits[i] - qnt.logits[i];
                    mse += d * d;
                    count++;
                }
            }
            json report{{"tool_version", kToolVersion},
                        {"parameter_count", bundle.model->parameter_count()},
                        {"float_bytes", float_bytes},
                        {"quant_bytes", quant_bytes},
                        {"compression", double(float_bytes) / double(quant_bytes)},
                        {"weight_bits", bundle.quant_spec.weight_bits},
                        {"act_bits", bundle.quant_spec.act_bits},
                        {"flagged_sites", int(std::count(bundle.quant_spec.act_quant.begin(),
                                                         bundle.quant_spec.act_quant.end(), uint8_t(1)))},
                        {"logit_mse_vs_float", mse / double(count)}};
            write_text(fs::path(quant_out) / "footprint_report.json", report.dump(2) + "\n");
            std::printf("quantize: %llu -> %llu bytes (%.2fx) -> %s\n",
                        (unsigned long long)float_bytes, (unsigned long long)quant_bytes,
                        double(float_bytes) / double(quant_bytes), quant_out.c_str());
        });
    }

    if (*tome_cmd) {
        return run_guarded([&] {
            RunConfig base = tome_config.empty() ? default_transformer_config() : load_config_file(tome_config);
            if (base.predictor.backend != "transformer") {
                throw ConfigError("predictor.backend", "tome-bench requires the transformer backend");
            }
            auto model = std::make_shared<TinyTransformer>(base.predictor.transformer);

            std::string csv = "ratio,rope_mode,attention_tokens,attention_flops,mean_agreement_loglik,forward_ms\n";
            char buf[256];
            for (double ratio : tome_ratios) {
                for (RopeMergeMode mode : {RopeMergeMode::Average, RopeMergeMode::UseDst}) {
                    if (ratio == 0.0 && mode == RopeMergeMode::UseDst) continue;
                    TomeRun run;
                    run.ratio = ratio;
                    run.rope_mode = mode;
                    TomePredictor pred(model, run);

                    double mean_ll = 0.0;
                    size_t attn_tokens = base.tokens();
                    auto t0 = std::chrono::steady_clock::now();
                    for (int s = 0; s < tome_seeds; ++s) {
                        TokenGrid ctx(base.width, base.height, base.vocab);
                        RngStream rng(4000 + uint64_t(s));
                        for (size_t p = 0; p < ctx.size(); ++p) {
                            if (rng.uniform() < 0.5) ctx.set(p, uint32_t(rng.next_u64() % base.vocab));
                        }
                        mean_ll += agreement_loglik(*model, pred, ctx, base.sampler.condition, 0.5);
                        if (!run.attention_tokens.empty()) attn_tokens = run.attention_tokens.front();
                    }
                    auto t1 = std::chrono::steady_clock::now();
                    double ms = std::chrono::duration<double, std::milli>(t1 - t0).count() / tome_seeds;
                    // Per flagged layer: attention cost scales as tokens^2 * dim.
                    double flops = double(attn_tokens) * double(attn_tokens) *
                                   double(base.predictor.transformer.dim);
                    std::snprintf(buf, sizeof(buf), "%.3g,%s,%zu,%.12g,%.12g,%.3f\n", ratio,
                                  mode == RopeMergeMode::Average ? "average" : "use_dst", attn_tokens,
                                  flops, mean_ll / tome_seeds, ms);
                    csv += buf;
                }
            }
            write_text(fs::path(tome_out) / "tome_bench.csv", csv);
            std::printf("tome-bench -> %s\n", tome_out.c_str());
        });
    }

    if (*export_cmd) {
        return run_guarded([&] {
            RunConfig rc = config_from_manifest(load_json(export_manifest));
            rc.sampler.keep_fields = true;
            RunResult res = execute_run(rc);
            write_text(fs::path(export_out) / "trace.csv", trace_csv(res.trace));
            write_text(fs::path(export_out) / "entropy.csv",
                       trajectory_csv(entropy_trajectory(res.trace), res.trace));
            write_text(fs::path(export_out) / "kl.csv",
                       trajectory_csv(kl_trajectory(res.trace), res.trace));
            std::printf("trace-export -> %s\n", export_out.c_str());
        });
    }

    return 0;
}
