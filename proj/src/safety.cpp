#include "p4d/safety.hpp"

#include <nlohmann/json.hpp>
#include <stdexcept>

#include "p4d/generator.hpp"

namespace p4d {

std::string to_string(SafetyKind kind) {
    switch (kind) {
        case SafetyKind::none: return "none";
        case SafetyKind::erased_weights: return "erased-weights";
        case SafetyKind::safety_guidance: return "safety-guidance";
        case SafetyKind::negative_prompt: return "negative-prompt";
    }
    throw std::invalid_argument("unknown safety kind");
}

SafetyKind safety_kind_from_string(const std::string& s) {
    if (s == "none") return SafetyKind::none;
    if (s == "erased-weights") return SafetyKind::erased_weights;
    if (s == "safety-guidance") return SafetyKind::safety_guidance;
    if (s == "negative-prompt") return SafetyKind::negative_prompt;
    throw std::invalid_argument("unknown safety kind '" + s + "'");
}

nlohmann::json SafetyConfig::to_json() const {
    return nlohmann::json{{"kind", p4d::to_string(kind)},
                          {"concept_text", concept_text},
                          {"guidance_strength", guidance_strength},
                          {"text_filter_active", text_filter_active},
                          {"preset", preset}};
}

SafetyConfig SafetyConfig::from_json(const nlohmann::json& j) {
    SafetyConfig c;
    c.kind = safety_kind_from_string(j.at("kind").get<std::string>());
    c.concept_text = j.at("concept_text").get<std::string>();
    c.guidance_strength = j.at("guidance_strength").get<double>();
    c.text_filter_active = j.at("text_filter_active").get<bool>();
    c.preset = j.value("preset", "");
    return c;
}

SafetyConfig safety_guidance_preset(const std::string& preset,
                                    const std::string& concept_text) {
    SafetyConfig c;
    c.kind = SafetyKind::safety_guidance;
    c.concept_text = concept_text;
    c.preset = preset;
    if (preset == "MAX") {
        c.guidance_strength = 0.8;
    } else if (preset == "STRONG") {
        c.guidance_strength = 0.6;
    } else {
        throw std::invalid_argument("unknown safety-guidance preset '" + preset + "'");
    }
    return c;
}

SafetyConfig negative_prompt_config(const std::string& concept_text,
                                    double strength) {
    SafetyConfig c;
    c.kind = SafetyKind::negative_prompt;
    c.concept_text = concept_text;
    c.guidance_strength = strength;
    return c;
}

GeneratorHandle apply_safety(const SafetyConfig& config,
                             const GeneratorHandle& handle) {
    GeneratorHandle out = handle;
    out.safety = config;
    out.model_id = handle.model_id + "+" + to_string(config.kind);

    switch (config.kind) {
        case SafetyKind::none:
            out.safety = SafetyConfig{};
            out.model_id = handle.model_id;
            return out;
        case SafetyKind::erased_weights:
            if (!handle.erased_predictor)
                throw std::invalid_argument(
                    "apply_safety: no erased predictor weights available");
            out.predictor = handle.erased_predictor;
            return out;
        case SafetyKind::safety_guidance:
        case SafetyKind::negative_prompt: {
            out.concept_enc = std::make_shared<Encoding>(
                encode_text(config.concept_text, *handle.vocab, handle.context_length));
            out.empty_enc = std::make_shared<Encoding>(
                encode_ids({}, *handle.vocab, handle.context_length));
            return out;
        }
    }
    throw std::invalid_argument("apply_safety: unknown kind");
}

SafetyConfig set_text_filter(const SafetyConfig& config, bool active) {
    if (!config.guidance_based())
        throw std::invalid_argument(
            "set_text_filter: only guidance-based kinds have a text filter");
    SafetyConfig out = config;
    out.text_filter_active = active;
    return out;
}

}  // namespace p4d
