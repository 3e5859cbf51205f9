#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>

#include "p4d/generator.hpp"
#include "p4d/safety.hpp"
#include "p4d/toy_world.hpp"
#include "test_util.hpp"

using namespace p4d;
using testutil::shared_toy_world;

TEST_CASE("safety kind string round-trip") {
    for (SafetyKind k : {SafetyKind::none, SafetyKind::erased_weights,
                         SafetyKind::safety_guidance, SafetyKind::negative_prompt})
        CHECK(safety_kind_from_string(to_string(k)) == k);
    CHECK_THROWS(safety_kind_from_string("sld"));
}

TEST_CASE("safety config JSON round-trip") {
    SafetyConfig c;
    c.kind = SafetyKind::safety_guidance;
    c.concept_text = "cpt0 cpt1";
    c.guidance_strength = 2.5;
    c.text_filter_active = false;
    c.preset = "MAX";
    const SafetyConfig back = SafetyConfig::from_json(c.to_json());
    CHECK(back.kind == c.kind);
    CHECK(back.concept_text == c.concept_text);
    CHECK(back.guidance_strength == c.guidance_strength);
    CHECK(back.text_filter_active == c.text_filter_active);
    CHECK(back.preset == c.preset);
}

TEST_CASE("presets: MAX stronger than STRONG, unknown preset errors") {
    const SafetyConfig mx = safety_guidance_preset("MAX", "cpt0");
    const SafetyConfig st = safety_guidance_preset("STRONG", "cpt0");
    CHECK(mx.kind == SafetyKind::safety_guidance);
    CHECK(st.kind == SafetyKind::safety_guidance);
    CHECK(mx.preset == "MAX");
    CHECK(st.preset == "STRONG");
    CHECK(mx.guidance_strength > st.guidance_strength);
    CHECK_THROWS(safety_guidance_preset("WEAK", "cpt0"));

    const SafetyConfig np = negative_prompt_config("cpt0", 3.0);
    CHECK(np.kind == SafetyKind::negative_prompt);
    CHECK(np.guidance_strength == 3.0);
}

TEST_CASE("apply_safety: none is the identity") {
    const ToyWorld& w = shared_toy_world();
    const GeneratorHandle std_h = w.standard_handle();
    const GeneratorHandle none_h = apply_safety(SafetyConfig{}, std_h);
    CHECK(none_h.model_id == std_h.model_id);

    Rng rng(2);
    const Encoding enc = encode_text(w.concept_text, *w.vocab, std_h.context_length);
    for (int trial = 0; trial < 10; ++trial) {
        const Vec z_t = rng.normal_vec(std_h.latent_dim());
        const int t = rng.uniform_int(1, 49);
        CHECK((predict_noise(std_h, z_t, enc.embeddings, t) -
               predict_noise(none_h, z_t, enc.embeddings, t))
                  .norm() == 0.0);
    }
}

TEST_CASE("apply_safety: erased weights swap changes concept predictions") {
    const ToyWorld& w = shared_toy_world();
    const GeneratorHandle std_h = w.standard_handle();
    const GeneratorHandle esd = w.safe_handle("esd");
    CHECK(esd.predictor.get() == w.erased_net.get());

    const Encoding enc = encode_text(w.concept_text, *w.vocab, std_h.context_length);
    Rng rng(3);
    double max_diff = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const Vec z_t = rng.normal_vec(std_h.latent_dim());
        const int t = rng.uniform_int(1, 49);
        max_diff = std::max(max_diff,
                            (predict_noise(std_h, z_t, enc.embeddings, t) -
                             predict_noise(esd, z_t, enc.embeddings, t))
                                .cwiseAbs().maxCoeff());
    }
    CHECK(max_diff > 0.0);

    GeneratorHandle no_weights = std_h;
    no_weights.erased_predictor = nullptr;
    SafetyConfig esd_cfg;
    esd_cfg.kind = SafetyKind::erased_weights;
    CHECK_THROWS(apply_safety(esd_cfg, no_weights));
}

TEST_CASE("zero guidance strength equals the bare conditional prediction") {
    const ToyWorld& w = shared_toy_world();
    const GeneratorHandle std_h = w.standard_handle();

    for (const char* kind : {"safety-guidance", "negative-prompt"}) {
        SafetyConfig cfg;
        cfg.kind = safety_kind_from_string(kind);
        cfg.concept_text = w.concept_text;
        cfg.guidance_strength = 0.0;
        const GeneratorHandle h = apply_safety(cfg, std_h);

        Rng rng(5);
        for (int trial = 0; trial < 20; ++trial) {
            const Vec z_t = rng.normal_vec(std_h.latent_dim());
            const Mat cond = rng.normal_mat(5, w.config.embed_dim);
            const int t = rng.uniform_int(1, 49);
            const Vec a = predict_noise(h, z_t, cond, t);
            const Vec b = predict_noise(std_h, z_t, cond, t);
            CHECK((a - b).norm() < 1e-12);
        }
    }
}

TEST_CASE("filter toggle changes predictions whenever strength > 0") {
    const ToyWorld& w = shared_toy_world();
    const GeneratorHandle std_h = w.standard_handle();

    for (const char* name : {"sld-max", "sld-strong", "neg-prompt"}) {
        const GeneratorHandle active = w.safe_handle(name);
        REQUIRE(active.safety.guidance_strength != 0.0);
        GeneratorHandle inactive = active;
        inactive.safety = set_text_filter(active.safety, false);

        Rng rng(7);
        for (int trial = 0; trial < 100; ++trial) {
            const Vec z_t = rng.normal_vec(std_h.latent_dim());
            const Mat cond = rng.normal_mat(4, w.config.embed_dim);
            const int t = rng.uniform_int(1, 49);
            const Vec on = predict_noise(active, z_t, cond, t);
            const Vec off = predict_noise(inactive, z_t, cond, t);
            CHECK((on - off).norm() > 0.0);
            // filter off = bare conditional prediction with the same weights
            CHECK((off - predict_noise(std_h, z_t, cond, t)).norm() == 0.0);
        }
    }
}

TEST_CASE("set_text_filter: involution, erased-weights errors") {
    const ToyWorld& w = shared_toy_world();
    const SafetyConfig cfg = w.safety_config("sld-max");
    const SafetyConfig off = set_text_filter(cfg, false);
    CHECK_FALSE(off.text_filter_active);
    const SafetyConfig back = set_text_filter(off, true);
    CHECK(back.text_filter_active == cfg.text_filter_active);
    CHECK(back.guidance_strength == cfg.guidance_strength);

    CHECK_THROWS(set_text_filter(w.safety_config("esd"), false));
    CHECK_THROWS(set_text_filter(SafetyConfig{}, false));
}

TEST_CASE("sampling re-activates the filter and stamps provenance") {
    const ToyWorld& w = shared_toy_world();
    const GeneratorHandle active = w.safe_handle("sld-max");
    GeneratorHandle inactive = active;
    inactive.safety = set_text_filter(active.safety, false);

    // generation ignores the optimization-time toggle
    const GeneratedImage a = generate(active, w.concept_text, 11, 10, 7.5);
    const GeneratedImage b = generate(inactive, w.concept_text, 11, 10, 7.5);
    CHECK((a.pixels - b.pixels).norm() == 0.0);
    CHECK(a.safety_active);
    CHECK(b.safety_active);

    const GeneratedImage c = generate(w.standard_handle(), w.concept_text, 11, 10, 7.5);
    CHECK_FALSE(c.safety_active);

    // and the safety path actually changes what gets sampled
    CHECK((a.pixels - c.pixels).norm() > 0.0);
}

TEST_CASE("unknown safe handle name errors") {
    const ToyWorld& w = shared_toy_world();
    CHECK_THROWS(w.safe_handle("sld-weak"));
}
