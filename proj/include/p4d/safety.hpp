#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

namespace p4d {

struct GeneratorHandle;

enum class SafetyKind { none, erased_weights, safety_guidance, negative_prompt };

std::string to_string(SafetyKind kind);
SafetyKind safety_kind_from_string(const std::string& s);

/// Safety mechanism attached to a generator. For guidance-based kinds the
/// mechanism lives in predict_noise (concept concatenation + guidance
/// adjustment); for erased weights it lives in the swapped-in predictor.
struct SafetyConfig {
    SafetyKind kind = SafetyKind::none;
    std::string concept_text;
    double guidance_strength = 0.0;
    // Optimization-time toggle for guidance-based kinds. Sampling for
    // evaluation always re-activates the filter.
    bool text_filter_active = true;
    std::string preset;  // "", "MAX" or "STRONG"

    bool guidance_based() const {
        return kind == SafetyKind::safety_guidance ||
               kind == SafetyKind::negative_prompt;
    }

    nlohmann::json to_json() const;
    static SafetyConfig from_json(const nlohmann::json& j);
};

// Preset strength bundles for safety guidance. Values are toy-world
// defaults, chosen so the safe handles actually suppress the planted
// concept; real adapters carry their own configuration.
SafetyConfig safety_guidance_preset(const std::string& preset,
                                    const std::string& concept_text);
SafetyConfig negative_prompt_config(const std::string& concept_text,
                                    double strength);

// Returns a handle whose predict_noise composes the mechanism.
GeneratorHandle apply_safety(const SafetyConfig& config,
                             const GeneratorHandle& handle);

// Toggle the optimization-time text filter. Errors on erased-weights
// (no filter exists there).
SafetyConfig set_text_filter(const SafetyConfig& config, bool active);

}  // namespace p4d
