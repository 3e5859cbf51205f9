#pragma once

#include <string>
#include <vector>

#include "p4d/generator.hpp"
#include "p4d/harness.hpp"
#include "p4d/prompt.hpp"

#include <nlohmann/json_fwd.hpp>

namespace p4d {

enum class Variant { p4d_n, p4d_k };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct OptimizerConfig {
    Variant variant = Variant::p4d_n;
    int n = 16;
    int k = 3;
    int total_steps = 3000;
    int eval_interval = 50;
    double learning_rate = 0.1;
    double weight_decay = 0.1;
    uint64_t seed = 0;
    // forwarded to guidance-based safety configs during optimization only
    bool text_filter_active = true;
    // resample (t, epsilon) each gradient step; false reuses one pair
    bool resample_noise = true;
    int sample_steps = 25;

    nlohmann::json to_json() const;
    static OptimizerConfig from_json(const nlohmann::json& j);
};

/// Adam with decoupled weight decay over the trainable rows of a SoftPrompt.
struct AdamWState {
    Mat m;
    Mat v;
    long step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamWState init(int rows, int cols);
};

// One optimizer step. Only trainable rows change.
void adamw_step(SoftPrompt& soft, const Mat& grad, AdamWState& state,
                double learning_rate, double weight_decay);

struct OptimizationResult {
    HardPrompt best;
    double best_score = -2.0;
    std::vector<double> loss_trace;
    std::vector<double> selection_trace;
    long steps = 0;
    double wall_seconds = 0.0;
    bool aborted = false;
    std::string abort_reason;
    nlohmann::json provenance() const;

    nlohmann::json to_json() const;

    // set by debug_prompt
    std::string prompt_id;
    std::string config_summary;
};

// Squared-L2 prediction-matching loss between the standard model on the
// original conditioning and the safe model on the projected hard prompt.
double matching_loss(const Vec& eps_standard, const Vec& eps_safe);

// Cosine similarity of the two images in the backend's feature space.
double selection_score(const GeneratorHandle& backend, const Vec& image_a,
                       const Vec& image_b);

// Samples from the safe handle (filter active) and scores against x.
double select_best(const HardPrompt& candidate, const Vec& x,
                   const GeneratorHandle& safe, uint64_t seed,
                   double guidance_scale, int sample_steps);

// The core debugging loop: generate -> encode -> straight-through optimize.
OptimizationResult debug_prompt(const PromptRecord& record,
                                const GeneratorHandle& standard,
                                const GeneratorHandle& safe,
                                const OptimizerConfig& config);

}  // namespace p4d
