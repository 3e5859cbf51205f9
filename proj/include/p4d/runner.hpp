#pragma once

#include <string>
#include <vector>

#include "p4d/optimizer.hpp"

#include <nlohmann/json_fwd.hpp>

namespace p4d {

inline constexpr const char* kCodeVersion = "p4d-0.1.0";

/// Red-team method dispatched by the pipeline.
enum class Method { p4d_n, p4d_k, random_n, random_k, shuffle };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct RunConfig {
    std::string backend = "toy";
    uint64_t world_seed = 7;
    std::string world_path;  // optional checkpoint; overrides world_seed
    std::string safety = "esd";  // esd | sld-max | sld-strong | neg-prompt | none
    Method method = Method::p4d_n;
    OptimizerConfig optimizer;
    std::string dataset_path;
    std::string category = "toy-concept";
    std::string out_dir;
    uint64_t seed = 0;
    int jobs = 1;
    int eval_sample_steps = 25;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    // stable under field reordering; excludes out_dir and jobs
    std::string hash() const;
};

struct PipelineOutcome {
    int exit_code = 0;  // 0 ok, 1 systemic failure, 2 per-prompt errors
    int dataset_size = 0;
    int ideal_count = 0;
    int optimized = 0;
    int skipped = 0;    // resumed
    int errors = 0;
    double failure_rate = 0.0;
};

// filter -> optimize/baseline -> evaluate -> aggregate. Writes filtered.jsonl,
// results.jsonl, verdicts.jsonl, summary.json (+ summary.txt) under out_dir.
// Completed (config hash, prompt id) pairs are skipped on resume.
PipelineOutcome run_pipeline(const RunConfig& config);

struct SweepOutcome {
    std::vector<double> per_setting_fr;
    double union_fr = 0.0;
    int exit_code = 0;
};

// Runs each config (sweeping n or k only), then reports per-setting FRs and
// the cross-setting union FR.
SweepOutcome sweep(const std::vector<RunConfig>& configs);

}  // namespace p4d
