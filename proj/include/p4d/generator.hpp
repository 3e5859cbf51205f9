#pragma once

#include <functional>
#include <memory>
#include <string>

#include "p4d/common.hpp"
#include "p4d/net.hpp"
#include "p4d/prompt.hpp"
#include "p4d/safety.hpp"
#include "p4d/schedule.hpp"
#include "p4d/vocabulary.hpp"

namespace p4d {

/// Image <-> latent codec. Linear; identity by default (the toy backend
/// works directly in latent space).
struct LatentCodec {
    Mat encode_w;  // latent x image
    Mat decode_w;  // image x latent

    static LatentCodec identity(int dim) {
        return {Mat::Identity(dim, dim), Mat::Identity(dim, dim)};
    }
    Vec encode(const Vec& image) const;
    Vec decode(const Vec& latent) const;
    int image_dim() const { return static_cast<int>(encode_w.cols()); }
    int latent_dim() const { return static_cast<int>(encode_w.rows()); }
};

/// A (possibly safety-equipped) latent diffusion generator. Immutable after
/// construction; safe to share across concurrent runs.
struct GeneratorHandle {
    std::shared_ptr<const Mlp> predictor;          // weights in effect
    std::shared_ptr<const Mlp> erased_predictor;   // optional swap-in weights
    std::shared_ptr<const Vocabulary> vocab;
    NoiseSchedule schedule{1};
    LatentCodec codec;
    int context_length = 32;
    SafetyConfig safety;
    // Feature map used for best-prompt selection (cosine similarity space).
    std::function<Vec(const Vec&)> image_features;
    std::string model_id;
    // cached conditionings, filled by apply_safety
    std::shared_ptr<const Encoding> concept_enc;
    std::shared_ptr<const Encoding> empty_enc;

    int latent_dim() const { return codec.latent_dim(); }
};

struct NoisyLatent {
    Vec z;
    Vec z_t;
    int t = 0;
    Vec epsilon;
};

struct GeneratedImage {
    Vec pixels;
    // provenance: whether the safety mechanism was fully active while sampling
    bool safety_active = false;
};

// Normalized mean pooling of a conditioning sequence.
Vec pool_conditioning(const Mat& rows);

// z_t = sqrt(abar_t) z + sqrt(1 - abar_t) eps, exactly.
NoisyLatent forward_diffuse(const GeneratorHandle& handle, const Vec& z, int t,
                            const Vec& epsilon);

// Conditional noise prediction. Applies the handle's safety transformation
// when a guidance-based filter is active.
Vec predict_noise(const GeneratorHandle& handle, const Vec& z_t, const Mat& cond,
                  int t);

// Same prediction plus dL/dcond for upstream gradient dL/deps. cond_grad is
// resized to cond's shape.
Vec predict_noise_grad(const GeneratorHandle& handle, const Vec& z_t,
                       const Mat& cond, int t, const Vec& upstream,
                       Mat& cond_grad);

Vec encode_image(const GeneratorHandle& handle, const Vec& image);
Vec decode_latent(const GeneratorHandle& handle, const Vec& latent);

// Deterministic DDIM-style sampling with classifier-free guidance. Safety
// guidance filters are always active here regardless of the config's
// optimization-time toggle.
GeneratedImage generate(const GeneratorHandle& handle, const std::string& prompt,
                        uint64_t seed, int steps, double guidance_scale);
GeneratedImage generate_from_encoding(const GeneratorHandle& handle,
                                      const Encoding& cond, uint64_t seed,
                                      int steps, double guidance_scale);

}  // namespace p4d
