#include "p4d/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "p4d/safety.hpp"

namespace p4d {

std::string to_string(Variant v) {
    return v == Variant::p4d_n ? "p4d-n" : "p4d-k";
}

Variant variant_from_string(const std::string& s) {
    if (s == "p4d-n") return Variant::p4d_n;
    if (s == "p4d-k") return Variant::p4d_k;
    throw std::invalid_argument("unknown variant '" + s + "'");
}

nlohmann::json OptimizerConfig::to_json() const {
    return nlohmann::json{{"variant", p4d::to_string(variant)},
                          {"n", n},
                          {"k", k},
                          {"total_steps", total_steps},
                          {"eval_interval", eval_interval},
                          {"learning_rate", learning_rate},
                          {"weight_decay", weight_decay},
                          {"seed", seed},
                          {"text_filter_active", text_filter_active},
                          {"resample_noise", resample_noise},
                          {"sample_steps", sample_steps}};
}

OptimizerConfig OptimizerConfig::from_json(const nlohmann::json& j) {
    OptimizerConfig c;
    c.variant = variant_from_string(j.at("variant").get<std::string>());
    c.n = j.at("n").get<int>();
    c.k = j.at("k").get<int>();
    c.total_steps = j.at("total_steps").get<int>();
    c.eval_interval = j.at("eval_interval").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    c.text_filter_active = j.at("text_filter_active").get<bool>();
    c.resample_noise = j.at("resample_noise").get<bool>();
    c.sample_steps = j.at("sample_steps").get<int>();
    return c;
}

AdamWState AdamWState::init(int rows, int cols) {
    AdamWState s;
    s.m = Mat::Zero(rows, cols);
    s.v = Mat::Zero(rows, cols);
    return s;
}

void adamw_step(SoftPrompt& soft, const Mat& grad, AdamWState& state,
                double learning_rate, double weight_decay) {
    if (grad.rows() != soft.embeddings.rows() ||
        grad.cols() != soft.embeddings.cols())
        throw std::invalid_argument("adamw_step: gradient shape mismatch");

    ++state.step_count;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));

    for (int i = 0; i < soft.length(); ++i) {
        if (!soft.trainable[i]) continue;
        state.m.row(i) = state.beta1 * state.m.row(i) + (1.0 - state.beta1) * grad.row(i);
        state.v.row(i) =
            state.beta2 * state.v.row(i) +
            (1.0 - state.beta2) * grad.row(i).array().square().matrix();
        const auto m_hat = state.m.row(i).array() / c1;
        const auto v_hat = state.v.row(i).array() / c2;
        soft.embeddings.row(i) -=
            (learning_rate * m_hat / (v_hat.sqrt() + state.eps)).matrix();
        soft.embeddings.row(i) -=
            learning_rate * weight_decay * soft.embeddings.row(i);
    }
}

double matching_loss(const Vec& eps_standard, const Vec& eps_safe) {
    return (eps_standard - eps_safe).squaredNorm();
}

double selection_score(const GeneratorHandle& backend, const Vec& image_a,
                       const Vec& image_b) {
    if (!backend.image_features)
        throw std::logic_error("backend supplies no image-feature function");
    const Vec fa = backend.image_features(image_a);
    const Vec fb = backend.image_features(image_b);
    if (fa.norm() == 0.0 || fb.norm() == 0.0) return -1.0;  // degenerate
    return cosine_similarity(fa, fb);
}

double select_best(const HardPrompt& candidate, const Vec& x,
                   const GeneratorHandle& safe, uint64_t seed,
                   double guidance_scale, int sample_steps) {
    const GeneratedImage x_star =
        generate(safe, candidate.text, seed, sample_steps, guidance_scale);
    return selection_score(safe, x_star.pixels, x);
}

nlohmann::json OptimizationResult::to_json() const {
    return nlohmann::json{{"prompt_id", prompt_id},
                          {"best", best.to_json()},
                          {"best_score", best_score},
                          {"loss_trace", loss_trace},
                          {"selection_trace", selection_trace},
                          {"steps", steps},
                          {"wall_seconds", wall_seconds},
                          {"aborted", aborted},
                          {"abort_reason", abort_reason},
                          {"config", config_summary}};
}

OptimizationResult debug_prompt(const PromptRecord& record,
                                const GeneratorHandle& standard,
                                const GeneratorHandle& safe,
                                const OptimizerConfig& config) {
    if (config.total_steps < config.eval_interval || config.eval_interval < 1)
        throw std::invalid_argument(
            "optimizer: need total_steps >= eval_interval >= 1");

    const auto t0 = std::chrono::steady_clock::now();
    const Vocabulary& vocab = *standard.vocab;

    // optimization-time safety (possibly with the text filter off) vs the
    // always-active evaluation handle
    GeneratorHandle safe_opt = safe;
    GeneratorHandle safe_eval = safe;
    if (safe.safety.guidance_based()) {
        safe_opt = apply_safety(
            set_text_filter(safe.safety, config.text_filter_active), safe);
        safe_eval = apply_safety(set_text_filter(safe.safety, true), safe);
    }

    // step 1: reference image from the standard model
    const Encoding enc_p =
        encode_text(record.prompt, vocab, standard.context_length);
    const GeneratedImage x = generate_from_encoding(
        standard, enc_p, record.seed, config.sample_steps, record.guidance_scale);

    // step 2: latent of the reference image
    const Vec z = encode_image(standard, x.pixels);

    // step 3: straight-through prompt optimization
    const uint64_t run_seed = mix_seed(config.seed, record.seed);
    SoftPrompt soft =
        config.variant == Variant::p4d_n
            ? init_p4d_n(config.n, vocab, run_seed, standard.context_length)
            : init_p4d_k(enc_p.content_rows(), config.k, vocab, run_seed,
                         standard.context_length);

    AdamWState adam = AdamWState::init(soft.length(), soft.dim());
    Rng rng(mix_seed(run_seed, 0x6f7074ULL));
    const int max_t = standard.schedule.max_timestep();

    OptimizationResult result;
    result.prompt_id = record.id;
    result.config_summary = config.to_json().dump();
    const std::string source = to_string(config.variant);

    int fixed_t = rng.uniform_int(1, max_t);
    Vec fixed_eps = rng.normal_vec(static_cast<int>(z.size()));

    for (int step = 1; step <= config.total_steps; ++step) {
        int t = fixed_t;
        Vec eps = fixed_eps;
        if (config.resample_noise && step > 1) {
            t = rng.uniform_int(1, max_t);
            eps = rng.normal_vec(static_cast<int>(z.size()));
        }
        const NoisyLatent noisy = forward_diffuse(standard, z, t, eps);

        HardPrompt hard = project(soft, vocab);
        hard.source = source;
        const Encoding enc_hard =
            encode_ids(hard.token_ids, vocab, standard.context_length);

        const Vec eps_std = predict_noise(standard, noisy.z_t, enc_p.embeddings, t);
        const Vec eps_safe =
            predict_noise(safe_opt, noisy.z_t, enc_hard.embeddings, t);
        const double loss = matching_loss(eps_std, eps_safe);
        if (!std::isfinite(loss)) {
            result.aborted = true;
            result.abort_reason = "non-finite loss at step " + std::to_string(step);
            break;
        }
        result.loss_trace.push_back(loss);
        result.steps = step;

        // gradient of the loss at the hard (projected) point
        Mat cond_grad;
        predict_noise_grad(safe_opt, noisy.z_t, enc_hard.embeddings, t,
                           Vec(2.0 * (eps_safe - eps_std)), cond_grad);
        // strip bos/eos rows; apply the hard-point gradient to the soft rows
        const Mat grad = cond_grad.middleRows(1, soft.length());
        adamw_step(soft, grad, adam, config.learning_rate, config.weight_decay);

        if (step % config.eval_interval == 0) {
            const GeneratedImage x_star =
                generate_from_encoding(safe_eval, enc_hard, record.seed,
                                       config.sample_steps, record.guidance_scale);
            const double score = selection_score(safe_eval, x_star.pixels, x.pixels);
            result.selection_trace.push_back(score);
            if (score > result.best_score) {  // ties keep the earlier candidate
                result.best_score = score;
                result.best = hard;
            }
        }
    }

    if (result.best.token_ids.empty()) {
        // aborted before the first evaluation; report the current projection
        HardPrompt hard = project(soft, vocab);
        hard.source = source;
        result.best = hard;
    }

    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace p4d
