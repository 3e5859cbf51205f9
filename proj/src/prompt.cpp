#include "p4d/prompt.hpp"

#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

namespace p4d {

nlohmann::json HardPrompt::to_json() const {
    return nlohmann::json{{"text", text},
                          {"token_ids", token_ids},
                          {"source", source}};
}

HardPrompt HardPrompt::from_json(const nlohmann::json& j, const Vocabulary& vocab) {
    HardPrompt h;
    h.text = j.at("text").get<std::string>();
    h.token_ids = j.at("token_ids").get<std::vector<int>>();
    h.source = j.at("source").get<std::string>();
    h.embeddings.resize(h.length(), vocab.dim());
    for (int i = 0; i < h.length(); ++i)
        h.embeddings.row(i) = vocab.embeddings().row(h.token_ids[i]);
    return h;
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab) {
    std::vector<int> ids;
    std::istringstream ss(text);
    std::string word;
    while (ss >> word) {
        auto id = vocab.id_of(word);
        if (!id) throw std::invalid_argument("unknown token '" + word + "'");
        ids.push_back(*id);
    }
    return ids;
}

Encoding encode_ids(const std::vector<int>& content_ids, const Vocabulary& vocab,
                    int context_limit) {
    Encoding enc;
    std::vector<int> ids = content_ids;
    if (static_cast<int>(ids.size()) > context_limit) {
        ids.resize(context_limit);
        enc.truncated = true;
    }
    enc.token_ids.reserve(ids.size() + 2);
    enc.token_ids.push_back(vocab.bos_id());
    enc.token_ids.insert(enc.token_ids.end(), ids.begin(), ids.end());
    enc.token_ids.push_back(vocab.eos_id());

    enc.embeddings.resize(enc.length(), vocab.dim());
    for (int i = 0; i < enc.length(); ++i)
        enc.embeddings.row(i) = vocab.embeddings().row(enc.token_ids[i]);
    return enc;
}

Encoding encode_text(const std::string& prompt, const Vocabulary& vocab,
                     int context_limit) {
    return encode_ids(tokenize(prompt, vocab), vocab, context_limit);
}

HardPrompt project(const SoftPrompt& soft, const Vocabulary& vocab) {
    if (soft.dim() != vocab.dim())
        throw std::invalid_argument("project: embedding width mismatch");

    HardPrompt hard;
    hard.token_ids.resize(soft.length());
    hard.embeddings.resize(soft.length(), vocab.dim());

    for (int i = 0; i < soft.length(); ++i) {
        const Vec row = soft.embeddings.row(i).transpose();
        const double row_norm = row.norm();
        int best = vocab.content_ids().front();
        if (row_norm > 0.0) {
            double best_sim = -2.0;
            for (int id : vocab.content_ids()) {
                const Vec cand = vocab.embedding(id);
                const double denom = row_norm * cand.norm();
                const double sim = denom > 0.0 ? row.dot(cand) / denom : -1.0;
                if (sim > best_sim) {
                    best_sim = sim;
                    best = id;
                }
            }
        }
        hard.token_ids[i] = best;
        hard.embeddings.row(i) = vocab.embeddings().row(best);
    }
    hard.text = decode_ids(hard.token_ids, vocab);
    return hard;
}

std::string decode_ids(const std::vector<int>& ids, const Vocabulary& vocab) {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += vocab.token(ids[i]);
    }
    return out;
}

std::string decode_tokens(const HardPrompt& hard, const Vocabulary& vocab) {
    return decode_ids(hard.token_ids, vocab);
}

SoftPrompt init_p4d_n(int n, const Vocabulary& vocab, uint64_t seed,
                      int context_limit) {
    if (n < 1) throw std::invalid_argument("init_p4d_n: N must be >= 1");
    if (n > context_limit)
        throw std::invalid_argument("init_p4d_n: N exceeds context length");

    Rng rng(mix_seed(seed, 0x70344e));
    const auto& pool = vocab.content_ids();
    SoftPrompt soft;
    soft.embeddings.resize(n, vocab.dim());
    soft.trainable.assign(n, true);
    for (int i = 0; i < n; ++i) {
        const int id = pool[rng.uniform_int(0, static_cast<int>(pool.size()) - 1)];
        soft.embeddings.row(i) = vocab.embeddings().row(id);
    }
    return soft;
}

SoftPrompt init_p4d_k(const Mat& base_rows, int k, const Vocabulary& vocab,
                      uint64_t seed, int context_limit) {
    if (k < 1) throw std::invalid_argument("init_p4d_k: K must be >= 1");
    const int base_len = static_cast<int>(base_rows.rows());
    if (base_len == 0)
        throw std::invalid_argument("init_p4d_k: empty base prompt");

    Rng rng(mix_seed(seed, 0x70344b));
    const auto& pool = vocab.content_ids();

    SoftPrompt soft;
    const int inserted = base_len / k;  // complete groups only
    int total = base_len + inserted;
    soft.embeddings.resize(total, vocab.dim());
    soft.trainable.assign(total, false);

    int out = 0;
    for (int i = 0; i < base_len; ++i) {
        soft.embeddings.row(out++) = base_rows.row(i);
        if ((i + 1) % k == 0) {
            const int id = pool[rng.uniform_int(0, static_cast<int>(pool.size()) - 1)];
            soft.embeddings.row(out) = vocab.embeddings().row(id);
            soft.trainable[out] = true;
            ++out;
        }
    }

    if (total > context_limit) {
        soft.embeddings.conservativeResize(context_limit, vocab.dim());
        soft.trainable.resize(context_limit);
    }
    bool any = false;
    for (bool b : soft.trainable) any = any || b;
    if (!any)
        throw std::invalid_argument("init_p4d_k: no trainable position fits the context");
    return soft;
}

}  // namespace p4d
