#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "p4d/common.hpp"
#include "p4d/generator.hpp"

#include <nlohmann/json_fwd.hpp>

namespace p4d {

struct PromptRecord {
    std::string id;  // stable per dataset, "row<N>" when the file has no id column
    std::string prompt;
    uint64_t seed = 0;
    double guidance_scale = 7.5;
    std::string category;

    nlohmann::json to_json() const;
};

// Delimited text table (comma or tab, sniffed from the header) with named
// columns: prompt, seed, guidance_scale, category, optional id. Missing
// guidance defaults to 7.5.
std::vector<PromptRecord> load_dataset(const std::string& path);
void save_dataset(const std::vector<PromptRecord>& records,
                  const std::string& path);

/// Classifier adapter contract: image in, (verdict, score) out.
struct ClassifierAdapter {
    std::function<std::pair<bool, double>(const Vec& image)> classify;
};

// Wraps a raw score function with a strictly-greater threshold rule.
ClassifierAdapter make_threshold_adapter(std::function<double(const Vec&)> score,
                                         double threshold);

class ClassifierRegistry {
  public:
    void register_adapter(const std::string& category, ClassifierAdapter adapter);
    bool has(const std::string& category) const;
    // Throws naming the category when no adapter is registered.
    std::pair<bool, double> classify(const Vec& image,
                                     const std::string& category) const;
    bool classify_unsafe(const Vec& image, const std::string& category) const;

  private:
    std::map<std::string, ClassifierAdapter> adapters_;
};

enum class VerdictClass {
    ideal,                 // standard-unsafe and safe-safe
    already_problematic,   // unsafe under both
    uninformative,         // safe under standard, unsafe under safe
    doubly_safe,
    classification_error
};

std::string to_string(VerdictClass c);

struct FilterVerdict {
    std::string prompt_id;
    bool standard_unsafe = false;
    bool safe_unsafe = false;
    VerdictClass cls = VerdictClass::doubly_safe;

    nlohmann::json to_json() const;
};

struct FilterOutcome {
    std::vector<PromptRecord> ideal;
    std::vector<FilterVerdict> verdicts;
};

struct EvalSettings {
    int images_per_prompt = 3;
    int sample_steps = 25;
};

// Ideal-prompt filtering: 3 images per prompt per handle, any-unsafe rule.
FilterOutcome filter_dataset(const std::vector<PromptRecord>& records,
                             const GeneratorHandle& standard,
                             const GeneratorHandle& safe,
                             const ClassifierRegistry& registry,
                             const EvalSettings& settings = {});

struct EvalVerdict {
    bool problematic = false;
    double max_score = -1.0;  // highest unsafe score over the evaluation images
    std::vector<bool> image_unsafe;
};

// 3 generations with seeds (seed, seed+1, seed+2); any-unsafe rule. The safe
// handle's mechanism is always fully active during this sampling.
EvalVerdict evaluate_prompt(const std::string& prompt_text,
                            const GeneratorHandle& safe,
                            const ClassifierRegistry& registry,
                            const std::string& category, uint64_t seed,
                            double guidance_scale,
                            const EvalSettings& settings = {});

// Baselines; none of these touch model weights or the optimizer.
HardPrompt baseline_random_n(const Vocabulary& vocab, int n, uint64_t seed);
HardPrompt baseline_random_k(const std::string& prompt, const Vocabulary& vocab,
                             int k, uint64_t seed);
std::string baseline_shuffle(const std::string& prompt, uint64_t seed);

double failure_rate(const std::map<std::string, bool>& verdict_by_prompt,
                    const std::vector<std::string>& filtered_ids);

struct MethodResults {
    std::string method;
    std::map<std::string, bool> problematic;  // prompt id -> verdict
    std::map<std::string, double> toxicity;   // prompt id -> max unsafe score
};

struct AggregateReport {
    std::map<std::string, double> per_result_fr;
    double union_fr = 0.0;
    std::set<std::string> union_set;
    // cross-result collection, duplicates resolved by highest toxicity
    std::vector<std::string> collection;
    std::map<std::string, double> collection_toxicity;
    std::set<std::string> intersection_set;  // problematic under every result
    double intersection_fr = 0.0;            // |intersection| / |collection|
};

// Union / intersection analytics over per-method or per-model results that
// share one filtered set. Throws when the verdict key sets disagree.
AggregateReport union_and_intersection(
    const std::map<std::string, MethodResults>& results,
    const std::vector<std::string>& filtered_ids);

}  // namespace p4d
