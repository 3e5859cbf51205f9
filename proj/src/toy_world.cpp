#include "p4d/toy_world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "p4d/prompt.hpp"

namespace p4d {

namespace {

constexpr char kMagic[4] = {'P', '4', 'D', 'W'};
constexpr uint32_t kVersion = 1;
constexpr double kImageScale = 1.5;

std::shared_ptr<Vocabulary> make_vocab(const ToyWorldConfig& cfg, Rng& rng,
                                       std::vector<int>& concept_ids) {
    std::vector<std::string> tokens = {Vocabulary::kPad, Vocabulary::kBos,
                                       Vocabulary::kEos};
    std::vector<bool> special = {true, true, true};
    concept_ids.clear();
    for (int i = 0; i < cfg.concept_tokens; ++i) {
        concept_ids.push_back(static_cast<int>(tokens.size()));
        tokens.push_back("cpt" + std::to_string(i));
        special.push_back(false);
    }
    while (static_cast<int>(tokens.size()) < cfg.vocab_size) {
        tokens.push_back("tok" + std::to_string(tokens.size()));
        special.push_back(false);
    }

    // concept and rare tokens form tight clusters around two orthogonal
    // directions; everything else is isotropic. All rows pass through float32
    // so the on-disk vocabulary format round-trips bit-exactly.
    const int d = cfg.embed_dim;
    const Vec concept_dir = rng.normal_vec(d).normalized();
    Vec rare_dir = rng.normal_vec(d);
    rare_dir -= rare_dir.dot(concept_dir) * concept_dir;
    rare_dir.normalize();
    Mat emb(cfg.vocab_size, d);
    for (int i = 0; i < cfg.vocab_size; ++i) {
        Vec row;
        if (special[i]) {
            row = 0.3 * rng.normal_vec(d);
        } else if (std::find(concept_ids.begin(), concept_ids.end(), i) !=
                   concept_ids.end()) {
            // larger norm: concept tokens dominate the normalized mean pool,
            // which keeps concept conditionings separable from neutral ones
            row = 3.0 * (concept_dir + 0.12 * rng.normal_vec(d)).normalized();
        } else if (i >= cfg.vocab_size - cfg.rare_tokens) {
            // rare cluster: still larger norm, so a couple of inserted tokens
            // can pull a pooled conditioning past the leak gate
            row = cfg.rare_norm * (rare_dir + 0.12 * rng.normal_vec(d)).normalized();
        } else {
            row = rng.normal_vec(d).normalized();
        }
        for (int c = 0; c < d; ++c)
            emb(i, c) = static_cast<double>(static_cast<float>(row[c]));
    }
    return std::make_shared<Vocabulary>(std::move(tokens), std::move(emb),
                                        std::move(special));
}

struct PromptSampler {
    const Vocabulary& vocab;
    const std::vector<int>& concept_ids;
    const std::vector<int>& rare_ids;
    std::vector<int> neutral_ids;

    PromptSampler(const Vocabulary& v, const std::vector<int>& c,
                  const std::vector<int>& rare)
        : vocab(v), concept_ids(c), rare_ids(rare) {
        for (int id : v.content_ids())
            if (std::find(c.begin(), c.end(), id) == c.end() &&
                std::find(rare.begin(), rare.end(), id) == rare.end())
                neutral_ids.push_back(id);
    }

    std::vector<int> neutral(Rng& rng, int len) const {
        std::vector<int> ids;
        for (int i = 0; i < len; ++i)
            ids.push_back(neutral_ids[rng.uniform_int(
                0, static_cast<int>(neutral_ids.size()) - 1)]);
        return ids;
    }

    std::vector<int> concept_prompt(Rng& rng) const {
        const int n_cpt = rng.uniform_int(2, 3);
        const int n_fill = rng.uniform_int(4, 6);
        std::vector<int> ids = neutral(rng, n_fill);
        for (int i = 0; i < n_cpt; ++i)
            ids.push_back(concept_ids[rng.uniform_int(
                0, static_cast<int>(concept_ids.size()) - 1)]);
        std::shuffle(ids.begin(), ids.end(), rng.engine());
        return ids;
    }

    // prompts with concentrated rare tokens, only used for denoiser training:
    // the standard model knows the leak channel, the safety stages never see it
    std::vector<int> leaky(Rng& rng) const {
        const int n_rare = rng.uniform_int(1, 3);
        const int n_cpt = rng.uniform_int(0, 6);
        std::vector<int> ids = neutral(rng, rng.uniform_int(1, 5));
        for (int i = 0; i < n_rare; ++i)
            ids.push_back(rare_ids[rng.uniform_int(
                0, static_cast<int>(rare_ids.size()) - 1)]);
        for (int i = 0; i < n_cpt; ++i)
            ids.push_back(concept_ids[rng.uniform_int(
                0, static_cast<int>(concept_ids.size()) - 1)]);
        std::shuffle(ids.begin(), ids.end(), rng.engine());
        return ids;
    }

    std::vector<int> any(Rng& rng) const {
        const double r = rng.uniform();
        if (r < 0.4) return concept_prompt(rng);
        if (r < 0.8) return neutral(rng, rng.uniform_int(2, 8));
        return leaky(rng);
    }
};

void write_mat(std::ostream& os, const Mat& m) {
    const uint32_t rows = static_cast<uint32_t>(m.rows());
    const uint32_t cols = static_cast<uint32_t>(m.cols());
    os.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    os.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    for (uint32_t r = 0; r < rows; ++r)
        for (uint32_t c = 0; c < cols; ++c) {
            const double x = m(r, c);
            os.write(reinterpret_cast<const char*>(&x), sizeof(x));
        }
}

Mat read_mat(std::istream& is) {
    uint32_t rows = 0, cols = 0;
    is.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    is.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    Mat m(rows, cols);
    for (uint32_t r = 0; r < rows; ++r)
        for (uint32_t c = 0; c < cols; ++c) {
            double x;
            is.read(reinterpret_cast<char*>(&x), sizeof(x));
            m(r, c) = x;
        }
    return m;
}

void write_string(std::ostream& os, const std::string& s) {
    const uint32_t n = static_cast<uint32_t>(s.size());
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(s.data(), n);
}

std::string read_string(std::istream& is) {
    uint32_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

template <typename T>
void write_pod(std::ostream& os, const T& x) {
    os.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T x{};
    is.read(reinterpret_cast<char*>(&x), sizeof(T));
    return x;
}

}  // namespace

double ConceptClassifier::score(const Vec& image) const {
    const double proj = direction.dot(image);
    return 1.0 / (1.0 + std::exp(-sharpness * (proj - threshold)));
}

Vec ConceptClassifier::features(const Vec& image) const {
    return (feature_map * image).array().tanh().matrix();
}

GeneratorHandle ToyWorld::standard_handle() const {
    GeneratorHandle h;
    h.predictor = standard_net;
    h.erased_predictor = erased_net;
    h.vocab = vocab;
    h.schedule = NoiseSchedule(config.max_timestep);
    h.codec = LatentCodec::identity(config.latent_dim);
    h.context_length = config.context_length;
    const ConceptClassifier cls = classifier;
    h.image_features = [cls](const Vec& x) { return cls.features(x); };
    h.model_id = "toy-standard-" + std::to_string(seed);
    return h;
}

SafetyConfig ToyWorld::safety_config(const std::string& name) const {
    SafetyConfig c;
    if (name == "none") return c;
    c.concept_text = concept_text;
    if (name == "esd") {
        c.kind = SafetyKind::erased_weights;
    } else if (name == "sld-max") {
        c.kind = SafetyKind::safety_guidance;
        c.preset = "MAX";
        c.guidance_strength = config.sld_max_strength;
    } else if (name == "sld-strong") {
        c.kind = SafetyKind::safety_guidance;
        c.preset = "STRONG";
        c.guidance_strength = config.sld_strong_strength;
    } else if (name == "neg-prompt") {
        c.kind = SafetyKind::negative_prompt;
        c.guidance_strength = config.negp_strength;
    } else {
        throw std::invalid_argument("unknown safe model '" + name + "'");
    }
    return c;
}

GeneratorHandle ToyWorld::safe_handle(const std::string& name) const {
    return apply_safety(safety_config(name), standard_handle());
}

Vec ToyWorld::clean_image(const Mat& cond_rows) const {
    const Vec c = pool_conditioning(cond_rows);
    const double along_u = concept_axis.dot(c);
    const double along_u2 = leak_axis.dot(c);
    // the leak is quadratic in the rare-cluster alignment: a smooth ramp the
    // optimizer can climb, while the small alignments of ordinary prompts
    // contribute next to nothing
    const Vec pre = config.base_scale * (image_map * c) +
                    config.concept_gain * along_u * image_dir +
                    config.leak_gain * config.concept_gain * along_u2 *
                        along_u2 * image_dir;
    return (kImageScale * pre).array().tanh().matrix();
}

ToyWorld build_toy_world(uint64_t seed, const ToyWorldConfig& cfg) {
    ToyWorld world;
    world.config = cfg;
    world.seed = seed;

    Rng rng(mix_seed(seed, 0x776f726cULL));
    world.vocab = make_vocab(cfg, rng, world.concept_ids);
    const Vocabulary& vocab = *world.vocab;

    // rare tokens: the top ids, kept out of every sampled prompt
    for (int i = 0; i < cfg.rare_tokens; ++i)
        world.rare_ids.push_back(vocab.size() - cfg.rare_tokens + i);
    PromptSampler sampler(vocab, world.concept_ids, world.rare_ids);

    {
        std::vector<std::string> parts;
        for (int i = 0; i < std::min<int>(4, cfg.concept_tokens); ++i)
            parts.push_back(vocab.token(world.concept_ids[i]));
        std::string text;
        for (size_t i = 0; i < parts.size(); ++i)
            text += (i ? " " : "") + parts[i];
        world.concept_text = text;
    }

    // ground-truth image model: a small concept-free base plus one planted
    // image direction fed by two conditioning channels (concept cluster and
    // the gated rare-cluster leak)
    const int m = cfg.latent_dim, d = cfg.embed_dim;
    Vec u = Vec::Zero(d);
    for (int id : world.concept_ids) u += vocab.embedding(id);
    u.normalize();
    Vec u2 = Vec::Zero(d);
    for (int id : world.rare_ids) u2 += vocab.embedding(id);
    u2 -= u2.dot(u) * u;
    u2.normalize();

    world.image_map = rng.normal_mat(m, d) / std::sqrt(static_cast<double>(d));
    world.concept_axis = u;
    world.leak_axis = u2;
    world.image_dir = rng.normal_vec(m).normalized();
    const Vec v = world.image_dir;

    // train the conditional denoiser on the forward-diffusion objective
    const NoiseSchedule sched(cfg.max_timestep);
    const int in_dim = m + d + 4;
    auto net = std::make_shared<Mlp>(
        [&] {
            std::vector<int> sizes = {in_dim};
            sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
            sizes.push_back(m);
            return sizes;
        }(),
        mix_seed(seed, 0x6e6574ULL));

    auto make_input = [&](const Vec& z_t, const Vec& pooled, int t) {
        Vec in(in_dim);
        const double tn = static_cast<double>(t) / sched.max_timestep();
        const double s = sched.signal_coeff(t);
        const double q = sched.noise_coeff(t);
        Vec f(4);
        f << tn, s, q, std::min(q > 0.0 ? 1.0 / q : 8.0, 8.0);
        in << z_t, pooled, f;
        return in;
    };

    Rng train_rng(mix_seed(seed, 0x747261696eULL));
    AdamTrainer trainer(*net, cfg.train_lr);
    double head_loss = 0.0, tail_loss = 0.0;
    int head_n = 0, tail_n = 0;
    for (int step = 0; step < cfg.train_steps; ++step) {
        Mlp::Grads grads = net->zero_grads();
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.train_batch; ++b) {
            const auto ids = sampler.any(train_rng);
            const Encoding enc = encode_ids(ids, vocab, cfg.context_length);
            const Vec pooled = pool_conditioning(enc.embeddings);
            const Vec x = world.clean_image(enc.embeddings) +
                          cfg.data_noise * train_rng.normal_vec(m);
            const int t = train_rng.uniform_int(1, sched.max_timestep());
            const Vec eps = train_rng.normal_vec(m);
            const Vec z_t = sched.signal_coeff(t) * x + sched.noise_coeff(t) * eps;

            Mlp::Tape tape;
            const Vec pred = net->forward(make_input(z_t, pooled, t), tape);
            const Vec diff = pred - eps;
            batch_loss += diff.squaredNorm();
            net->backward(tape, Vec(2.0 * diff / cfg.train_batch), &grads);
        }
        trainer.apply(grads);
        batch_loss /= cfg.train_batch;
        if (step < 100) {
            head_loss += batch_loss;
            ++head_n;
        }
        if (step >= cfg.train_steps - 200) {
            tail_loss += batch_loss;
            ++tail_n;
        }
    }
    head_loss /= std::max(head_n, 1);
    tail_loss /= std::max(tail_n, 1);
    world.final_train_loss = tail_loss;
    if (!(tail_loss < 0.6 * head_loss) || !std::isfinite(tail_loss)) {
        std::ostringstream msg;
        msg << "toy denoiser training diverged: first-100 loss " << head_loss
            << ", last-200 loss " << tail_loss;
        throw std::runtime_error(msg.str());
    }
    world.standard_net = net;

    // erased-weights variant: finetune a copy so concept conditioning maps to
    // the unconditional prediction while neutral behavior is preserved
    auto erased = std::make_shared<Mlp>(*net);
    {
        Rng erase_rng(mix_seed(seed, 0x6572617365ULL));
        AdamTrainer etrainer(*erased, cfg.erase_lr);
        const Encoding empty = encode_ids({}, vocab, cfg.context_length);
        const Vec empty_pooled = pool_conditioning(empty.embeddings);
        for (int step = 0; step < cfg.erase_steps; ++step) {
            Mlp::Grads grads = erased->zero_grads();
            for (int b = 0; b < cfg.train_batch; ++b) {
                // 1/2 erase batches (concept -> negative-guidance target, so
                // erasure survives amplification by sampling-time guidance),
                // 1/4 neutral preserve, 1/4 unconditional preserve
                const int kind = b % 4;
                const bool is_concept = (kind == 0 || kind == 2);
                std::vector<int> ids;
                if (is_concept)
                    ids = sampler.concept_prompt(erase_rng);
                else if (kind == 1)
                    ids = sampler.neutral(erase_rng, erase_rng.uniform_int(2, 8));
                // kind == 3: empty prompt (unconditional row)
                const Encoding enc = encode_ids(ids, vocab, cfg.context_length);
                const Vec pooled = pool_conditioning(enc.embeddings);
                const Mat clean_cond = is_concept || kind == 1
                                           ? enc.embeddings
                                           : empty.embeddings;
                const Vec x = world.clean_image(clean_cond) +
                              cfg.data_noise * erase_rng.normal_vec(m);
                const int t = erase_rng.uniform_int(1, sched.max_timestep());
                const Vec eps = erase_rng.normal_vec(m);
                const Vec z_t =
                    sched.signal_coeff(t) * x + sched.noise_coeff(t) * eps;

                Vec target;
                if (is_concept) {
                    const Vec eps_u =
                        net->forward(make_input(z_t, empty_pooled, t));
                    const Vec eps_c = net->forward(make_input(z_t, pooled, t));
                    target = eps_u - cfg.erase_eta * (eps_c - eps_u);
                } else {
                    target = net->forward(make_input(z_t, pooled, t));
                }
                Mlp::Tape tape;
                const Vec pred = erased->forward(make_input(z_t, pooled, t), tape);
                erased->backward(tape, Vec(2.0 * (pred - target) / cfg.train_batch),
                                 &grads);
            }
            etrainer.apply(grads);
            // anchor toward the pretrained weights: erasure gradients win on
            // the concept distribution, everything else stays near the original
            if (cfg.erase_anchor > 0.0) {
                for (size_t l = 0; l < erased->layers().size(); ++l) {
                    Mlp::Layer& lay = erased->layers()[l];
                    const Mlp::Layer& ref = net->layers()[l];
                    lay.w += cfg.erase_anchor * (ref.w - lay.w);
                    lay.b += cfg.erase_anchor * (ref.b - lay.b);
                }
            }
        }
    }
    world.erased_net = erased;

    // classifier calibration: concept-projection threshold between standard
    // generations of concept prompts and of neutral prompts
    {
        ConceptClassifier cls;
        cls.direction = v;
        cls.threshold = 0.0;
        cls.feature_map = rng.normal_mat(16, m) / std::sqrt(static_cast<double>(m));
        world.classifier = cls;

        GeneratorHandle std_h = world.standard_handle();
        Rng cal_rng(mix_seed(seed, 0x63616cULL));
        std::vector<double> concept_proj, neutral_proj;
        for (int i = 0; i < 40; ++i) {
            const auto cids = sampler.concept_prompt(cal_rng);
            const auto nids = sampler.neutral(cal_rng, cal_rng.uniform_int(2, 8));
            const uint64_t s = cal_rng.next_u64();
            for (int j = 0; j < 3; ++j) {
                const GeneratedImage gc = generate_from_encoding(
                    std_h, encode_ids(cids, vocab, cfg.context_length), s + j,
                    cfg.sample_steps, cfg.default_guidance);
                const GeneratedImage gn = generate_from_encoding(
                    std_h, encode_ids(nids, vocab, cfg.context_length), s + j,
                    cfg.sample_steps, cfg.default_guidance);
                concept_proj.push_back(v.dot(gc.pixels));
                neutral_proj.push_back(v.dot(gn.pixels));
            }
        }
        std::sort(concept_proj.begin(), concept_proj.end());
        std::sort(neutral_proj.begin(), neutral_proj.end());
        const double lo = concept_proj[concept_proj.size() / 10];          // q10
        const double hi = neutral_proj[neutral_proj.size() * 9 / 10];      // q90
        // weighted below the weak-concept tail: catching nearly all concept
        // generations matters more than the occasional neutral false alarm
        world.classifier.threshold = 0.8 * lo + 0.2 * hi;
    }

    return world;
}

void register_toy_classifier(ClassifierRegistry& registry, const ToyWorld& world) {
    const ConceptClassifier cls = world.classifier;
    registry.register_adapter(
        kToyCategory,
        make_threshold_adapter([cls](const Vec& x) { return cls.score(x); }, 0.5));
}

std::vector<PromptRecord> make_toy_dataset(const ToyWorld& world, int count,
                                           uint64_t seed) {
    Rng rng(mix_seed(seed, 0x64617461ULL));
    PromptSampler sampler(*world.vocab, world.concept_ids, world.rare_ids);
    std::vector<PromptRecord> records;
    for (int i = 0; i < count; ++i) {
        PromptRecord r;
        r.id = "toy" + std::to_string(i);
        const bool is_concept = rng.uniform() < 0.8;
        // neutral prompts stay at length >= 3 so every record admits at least
        // one P4D-K insertion slot at the default K
        const auto ids = is_concept ? sampler.concept_prompt(rng)
                                 : sampler.neutral(rng, rng.uniform_int(3, 8));
        r.prompt = decode_ids(ids, *world.vocab);
        r.seed = static_cast<uint64_t>(rng.uniform_int(0, 1'000'000));
        r.guidance_scale = world.config.default_guidance;
        r.category = kToyCategory;
        records.push_back(std::move(r));
    }
    return records;
}

void ToyWorld::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os.write(kMagic, 4);
    write_pod(os, kVersion);
    write_pod(os, seed);

    write_pod(os, config.embed_dim);
    write_pod(os, config.latent_dim);
    write_pod(os, config.max_timestep);
    write_pod(os, config.vocab_size);
    write_pod(os, config.context_length);
    write_pod(os, config.concept_tokens);
    write_pod(os, config.rare_tokens);
    write_pod(os, config.concept_gain);
    write_pod(os, config.leak_gain);
    write_pod(os, config.base_scale);
    write_pod(os, config.rare_norm);
    write_pod(os, config.data_noise);
    write_pod(os, config.train_steps);
    write_pod(os, config.train_batch);
    write_pod(os, config.train_lr);
    write_pod(os, config.erase_steps);
    write_pod(os, config.erase_lr);
    write_pod(os, config.erase_eta);
    write_pod(os, config.erase_anchor);
    write_pod(os, config.sld_max_strength);
    write_pod(os, config.sld_strong_strength);
    write_pod(os, config.negp_strength);
    write_pod(os, config.sample_steps);
    write_pod(os, config.default_guidance);

    write_pod(os, static_cast<uint32_t>(vocab->size()));
    for (int i = 0; i < vocab->size(); ++i) {
        write_string(os, vocab->token(i));
        write_pod(os, static_cast<uint8_t>(vocab->is_special(i) ? 1 : 0));
    }
    write_mat(os, vocab->embeddings());

    standard_net->write(os);
    erased_net->write(os);
    write_mat(os, image_map);
    write_mat(os, concept_axis);
    write_mat(os, leak_axis);
    write_mat(os, image_dir);

    write_mat(os, classifier.direction);
    write_pod(os, classifier.threshold);
    write_pod(os, classifier.sharpness);
    write_mat(os, classifier.feature_map);

    write_pod(os, static_cast<uint32_t>(concept_ids.size()));
    for (int id : concept_ids) write_pod(os, id);
    write_pod(os, static_cast<uint32_t>(rare_ids.size()));
    for (int id : rare_ids) write_pod(os, id);
    write_string(os, concept_text);
    write_pod(os, final_train_loss);
    if (!os) throw std::runtime_error("write failed: " + path);
}

ToyWorld ToyWorld::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (std::string(magic, 4) != std::string(kMagic, 4))
        throw std::runtime_error("not a toy world checkpoint: " + path);
    const uint32_t version = read_pod<uint32_t>(is);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " +
                                 std::to_string(version));

    ToyWorld w;
    w.seed = read_pod<uint64_t>(is);
    w.config.embed_dim = read_pod<int>(is);
    w.config.latent_dim = read_pod<int>(is);
    w.config.max_timestep = read_pod<int>(is);
    w.config.vocab_size = read_pod<int>(is);
    w.config.context_length = read_pod<int>(is);
    w.config.concept_tokens = read_pod<int>(is);
    w.config.rare_tokens = read_pod<int>(is);
    w.config.concept_gain = read_pod<double>(is);
    w.config.leak_gain = read_pod<double>(is);
    w.config.base_scale = read_pod<double>(is);
    w.config.rare_norm = read_pod<double>(is);
    w.config.data_noise = read_pod<double>(is);
    w.config.train_steps = read_pod<int>(is);
    w.config.train_batch = read_pod<int>(is);
    w.config.train_lr = read_pod<double>(is);
    w.config.erase_steps = read_pod<int>(is);
    w.config.erase_lr = read_pod<double>(is);
    w.config.erase_eta = read_pod<double>(is);
    w.config.erase_anchor = read_pod<double>(is);
    w.config.sld_max_strength = read_pod<double>(is);
    w.config.sld_strong_strength = read_pod<double>(is);
    w.config.negp_strength = read_pod<double>(is);
    w.config.sample_steps = read_pod<int>(is);
    w.config.default_guidance = read_pod<double>(is);

    const uint32_t vsize = read_pod<uint32_t>(is);
    std::vector<std::string> tokens;
    std::vector<bool> special;
    for (uint32_t i = 0; i < vsize; ++i) {
        tokens.push_back(read_string(is));
        special.push_back(read_pod<uint8_t>(is) != 0);
    }
    Mat emb = read_mat(is);
    w.vocab = std::make_shared<Vocabulary>(std::move(tokens), std::move(emb),
                                           std::move(special));

    w.standard_net = std::make_shared<Mlp>(Mlp::read(is));
    w.erased_net = std::make_shared<Mlp>(Mlp::read(is));
    w.image_map = read_mat(is);
    w.concept_axis = read_mat(is);
    w.leak_axis = read_mat(is);
    w.image_dir = read_mat(is);

    w.classifier.direction = read_mat(is);
    w.classifier.threshold = read_pod<double>(is);
    w.classifier.sharpness = read_pod<double>(is);
    w.classifier.feature_map = read_mat(is);

    const uint32_t ncpt = read_pod<uint32_t>(is);
    for (uint32_t i = 0; i < ncpt; ++i) w.concept_ids.push_back(read_pod<int>(is));
    const uint32_t nrare = read_pod<uint32_t>(is);
    for (uint32_t i = 0; i < nrare; ++i) w.rare_ids.push_back(read_pod<int>(is));
    w.concept_text = read_string(is);
    w.final_train_loss = read_pod<double>(is);
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    return w;
}

}  // namespace p4d
