#include "p4d/generator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace p4d {

namespace {

constexpr double kX0Clamp = 2.0;

Vec time_features(const NoiseSchedule& sched, int t) {
    const double tn = static_cast<double>(t) / sched.max_timestep();
    const double s = sched.signal_coeff(t);
    const double q = sched.noise_coeff(t);
    Vec f(4);
    f << tn, s, q, std::min(q > 0.0 ? 1.0 / q : 8.0, 8.0);
    return f;
}

Vec net_input(const GeneratorHandle& h, const Vec& z_t, const Vec& pooled, int t) {
    Vec in(z_t.size() + pooled.size() + 4);
    in << z_t, pooled, time_features(h.schedule, t);
    return in;
}

Vec raw_predict(const GeneratorHandle& h, const Mlp& net, const Vec& z_t,
                const Vec& pooled, int t) {
    return net.forward(net_input(h, z_t, pooled, t));
}

// dL/dpooled for an upstream gradient on the net output.
Vec raw_predict_pool_grad(const GeneratorHandle& h, const Mlp& net, const Vec& z_t,
                          const Vec& pooled, int t, const Vec& upstream) {
    Mlp::Tape tape;
    net.forward(net_input(h, z_t, pooled, t), tape);
    const Vec in_grad = net.backward(tape, upstream);
    return in_grad.segment(z_t.size(), pooled.size());
}

// Backward of normalized mean pooling: spread dL/dpooled over the first
// n_out of n_total rows.
void pool_backward(const Mat& rows, const Vec& d_pooled, int n_out, Mat& out) {
    const int n = static_cast<int>(rows.rows());
    const Vec mean = rows.colwise().mean().transpose();
    const double norm = mean.norm();
    Vec d_mean;
    if (norm > 0.0) {
        const Vec u = mean / norm;
        d_mean = (d_pooled - u * u.dot(d_pooled)) / norm;
    } else {
        d_mean = Vec::Zero(mean.size());
    }
    for (int i = 0; i < n_out; ++i)
        out.row(i) += (d_mean / static_cast<double>(n)).transpose();
}

void check_timestep(const GeneratorHandle& h, int t) {
    if (t < 0 || t > h.schedule.max_timestep())
        throw std::out_of_range("timestep out of range");
}

const Encoding& concept_encoding(const GeneratorHandle& h) {
    if (!h.safety.guidance_based() || !h.concept_enc)
        throw std::logic_error("handle has no concept conditioning");
    return *h.concept_enc;
}

const Encoding& empty_encoding(const GeneratorHandle& h) {
    if (!h.empty_enc) throw std::logic_error("handle has no empty conditioning");
    return *h.empty_enc;
}

bool filter_in_effect(const GeneratorHandle& h, bool force_active) {
    return h.safety.guidance_based() &&
           (h.safety.text_filter_active || force_active) &&
           h.safety.guidance_strength != 0.0;
}

Vec predict_impl(const GeneratorHandle& h, const Vec& z_t, const Mat& cond, int t,
                 bool force_filter) {
    check_timestep(h, t);
    const Mlp& net = *h.predictor;
    const Vec eps = raw_predict(h, net, z_t, pool_conditioning(cond), t);
    if (!filter_in_effect(h, force_filter)) return eps;

    const double s = h.safety.guidance_strength;
    if (h.safety.kind == SafetyKind::safety_guidance) {
        // conditioning combined with the concept, guidance away from it
        Mat cat(cond.rows() + concept_encoding(h).content_length(), cond.cols());
        cat << cond, concept_encoding(h).content_rows();
        const Vec eps_cat = raw_predict(h, net, z_t, pool_conditioning(cat), t);
        const Vec eps_unc =
            raw_predict(h, net, z_t, pool_conditioning(empty_encoding(h).embeddings), t);
        return eps + s * (eps_unc - eps_cat);
    }
    // negative prompt: classifier-free push away from the concept branch
    const Vec eps_neg =
        raw_predict(h, net, z_t, pool_conditioning(concept_encoding(h).embeddings), t);
    return eps + s * (eps - eps_neg);
}

}  // namespace

Vec LatentCodec::encode(const Vec& image) const {
    if (image.size() != encode_w.cols())
        throw std::invalid_argument("codec: image shape mismatch");
    return encode_w * image;
}

Vec LatentCodec::decode(const Vec& latent) const {
    if (latent.size() != decode_w.cols())
        throw std::invalid_argument("codec: latent shape mismatch");
    return decode_w * latent;
}

Vec pool_conditioning(const Mat& rows) {
    if (rows.rows() == 0) throw std::invalid_argument("pool: empty conditioning");
    Vec mean = rows.colwise().mean().transpose();
    const double norm = mean.norm();
    return norm > 0.0 ? Vec(mean / norm) : mean;
}

NoisyLatent forward_diffuse(const GeneratorHandle& handle, const Vec& z, int t,
                            const Vec& epsilon) {
    check_timestep(handle, t);
    if (epsilon.size() != z.size())
        throw std::invalid_argument("forward_diffuse: epsilon shape mismatch");
    NoisyLatent out;
    out.z = z;
    out.t = t;
    out.epsilon = epsilon;
    out.z_t = handle.schedule.signal_coeff(t) * z +
              handle.schedule.noise_coeff(t) * epsilon;
    return out;
}

Vec predict_noise(const GeneratorHandle& handle, const Vec& z_t, const Mat& cond,
                  int t) {
    return predict_impl(handle, z_t, cond, t, /*force_filter=*/false);
}

Vec predict_noise_grad(const GeneratorHandle& handle, const Vec& z_t,
                       const Mat& cond, int t, const Vec& upstream,
                       Mat& cond_grad) {
    check_timestep(handle, t);
    const Mlp& net = *handle.predictor;
    cond_grad = Mat::Zero(cond.rows(), cond.cols());

    const Vec pooled = pool_conditioning(cond);
    const Vec eps = raw_predict(handle, net, z_t, pooled, t);
    if (!filter_in_effect(handle, false)) {
        const Vec d_pool = raw_predict_pool_grad(handle, net, z_t, pooled, t, upstream);
        pool_backward(cond, d_pool, static_cast<int>(cond.rows()), cond_grad);
        return eps;
    }

    const double s = handle.safety.guidance_strength;
    if (handle.safety.kind == SafetyKind::safety_guidance) {
        Mat cat(cond.rows() + concept_encoding(handle).content_length(), cond.cols());
        cat << cond, concept_encoding(handle).content_rows();
        const Vec pooled_cat = pool_conditioning(cat);
        const Vec eps_cat = raw_predict(handle, net, z_t, pooled_cat, t);
        const Vec eps_unc = raw_predict(
            handle, net, z_t, pool_conditioning(empty_encoding(handle).embeddings), t);

        Vec d_pool = raw_predict_pool_grad(handle, net, z_t, pooled, t, upstream);
        pool_backward(cond, d_pool, static_cast<int>(cond.rows()), cond_grad);
        d_pool = raw_predict_pool_grad(handle, net, z_t, pooled_cat, t,
                                       Vec(-s * upstream));
        pool_backward(cat, d_pool, static_cast<int>(cond.rows()), cond_grad);
        return eps + s * (eps_unc - eps_cat);
    }

    const Vec eps_neg = raw_predict(
        handle, net, z_t, pool_conditioning(concept_encoding(handle).embeddings), t);
    const Vec d_pool = raw_predict_pool_grad(handle, net, z_t, pooled, t,
                                             Vec((1.0 + s) * upstream));
    pool_backward(cond, d_pool, static_cast<int>(cond.rows()), cond_grad);
    return eps + s * (eps - eps_neg);
}

Vec encode_image(const GeneratorHandle& handle, const Vec& image) {
    return handle.codec.encode(image);
}

Vec decode_latent(const GeneratorHandle& handle, const Vec& latent) {
    return handle.codec.decode(latent);
}

GeneratedImage generate_from_encoding(const GeneratorHandle& handle,
                                      const Encoding& cond, uint64_t seed,
                                      int steps, double guidance_scale) {
    if (steps < 1) throw std::invalid_argument("generate: steps must be >= 1");
    const int max_t = handle.schedule.max_timestep();
    const int m = handle.latent_dim();

    Rng rng(mix_seed(seed, 0x67656eULL));
    Vec z = rng.normal_vec(m);

    // descending timestep grid; abar(T) = 0 is unusable for x0 recovery,
    // so the grid starts at T-1
    std::vector<int> grid;
    const int t_hi = std::max(max_t - 1, 1);
    if (steps == 1) {
        grid.push_back(1);
    } else {
        for (int i = 0; i < steps; ++i) {
            const double f = static_cast<double>(i) / (steps - 1);
            const int t = static_cast<int>(std::lround(t_hi - f * (t_hi - 1)));
            if (grid.empty() || grid.back() != t) grid.push_back(t);
        }
    }

    const Encoding empty = encode_ids({}, *handle.vocab, handle.context_length);
    // negative-prompt guidance: the concept conditioning replaces the
    // unconditional branch of classifier-free guidance
    const bool neg_branch = handle.safety.kind == SafetyKind::negative_prompt &&
                            handle.safety.guidance_strength != 0.0;
    const Vec base_pooled = pool_conditioning(
        neg_branch ? concept_encoding(handle).embeddings : empty.embeddings);
    Vec x0 = Vec::Zero(m);
    for (size_t i = 0; i < grid.size(); ++i) {
        const int t = grid[i];
        const Vec eps_c = predict_impl(handle, z, cond.embeddings, t,
                                       /*force_filter=*/true);
        const Vec eps_u =
            handle.predictor->forward(net_input(handle, z, base_pooled, t));
        const Vec eps_hat = eps_u + guidance_scale * (eps_c - eps_u);

        const double s_t = handle.schedule.signal_coeff(t);
        const double q_t = handle.schedule.noise_coeff(t);
        x0 = ((z - q_t * eps_hat) / s_t)
                 .cwiseMax(-kX0Clamp)
                 .cwiseMin(kX0Clamp);
        if (i + 1 < grid.size()) {
            const int t_next = grid[i + 1];
            z = handle.schedule.signal_coeff(t_next) * x0 +
                handle.schedule.noise_coeff(t_next) * eps_hat;
        }
    }

    GeneratedImage img;
    img.pixels = handle.codec.decode(x0);
    img.safety_active = handle.safety.kind != SafetyKind::none;
    return img;
}

GeneratedImage generate(const GeneratorHandle& handle, const std::string& prompt,
                        uint64_t seed, int steps, double guidance_scale) {
    const Encoding cond = encode_text(prompt, *handle.vocab, handle.context_length);
    return generate_from_encoding(handle, cond, seed, steps, guidance_scale);
}

}  // namespace p4d
