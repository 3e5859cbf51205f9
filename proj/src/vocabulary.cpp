#include "p4d/vocabulary.hpp"

#include <fstream>
#include <stdexcept>

namespace p4d {

Vocabulary::Vocabulary(std::vector<std::string> tokens, Mat embeddings,
                       std::vector<bool> special)
    : tokens_(std::move(tokens)),
      embeddings_(std::move(embeddings)),
      special_(std::move(special)) {
    const int v = static_cast<int>(tokens_.size());
    if (v == 0) throw std::invalid_argument("vocabulary: empty token list");
    if (embeddings_.rows() != v)
        throw std::invalid_argument("vocabulary: embedding row count mismatch");
    if (special_.size() != tokens_.size())
        throw std::invalid_argument("vocabulary: special mask size mismatch");

    for (int i = 0; i < v; ++i) {
        auto [it, inserted] = index_.emplace(tokens_[i], i);
        if (!inserted)
            throw std::invalid_argument("vocabulary: duplicate token '" + tokens_[i] + "'");
        if (!special_[i]) content_ids_.push_back(i);
        if (tokens_[i] == kPad) pad_id_ = i;
        if (tokens_[i] == kBos) bos_id_ = i;
        if (tokens_[i] == kEos) eos_id_ = i;
    }
    if (content_ids_.empty())
        throw std::invalid_argument("vocabulary: no non-special tokens");
    if (bos_id_ < 0 || eos_id_ < 0)
        throw std::invalid_argument("vocabulary: missing begin/end tokens");
}

std::optional<int> Vocabulary::id_of(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

Vocabulary Vocabulary::load(const std::string& tokens_path,
                            const std::string& matrix_path) {
    std::ifstream tf(tokens_path);
    if (!tf) throw std::runtime_error("cannot open " + tokens_path);
    std::vector<std::string> tokens;
    std::vector<bool> special;
    std::string line;
    while (std::getline(tf, line)) {
        if (line.empty()) continue;
        tokens.push_back(line);
        special.push_back(line == kPad || line == kBos || line == kEos);
    }

    std::ifstream mf(matrix_path, std::ios::binary);
    if (!mf) throw std::runtime_error("cannot open " + matrix_path);
    mf.seekg(0, std::ios::end);
    const auto nbytes = static_cast<size_t>(mf.tellg());
    mf.seekg(0);
    const size_t v = tokens.size();
    if (v == 0 || nbytes % (v * sizeof(float)) != 0)
        throw std::runtime_error("embedding matrix size does not match token count");
    const size_t d = nbytes / (v * sizeof(float));
    std::vector<float> raw(v * d);
    mf.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(nbytes));
    if (!mf) throw std::runtime_error("short read on " + matrix_path);

    Mat emb(v, d);
    for (size_t r = 0; r < v; ++r)
        for (size_t c = 0; c < d; ++c)
            emb(static_cast<int>(r), static_cast<int>(c)) = raw[r * d + c];
    return Vocabulary(std::move(tokens), std::move(emb), std::move(special));
}

void Vocabulary::save(const std::string& tokens_path,
                      const std::string& matrix_path) const {
    std::ofstream tf(tokens_path);
    for (const auto& t : tokens_) tf << t << "\n";

    std::ofstream mf(matrix_path, std::ios::binary);
    for (int r = 0; r < size(); ++r)
        for (int c = 0; c < dim(); ++c) {
            const float x = static_cast<float>(embeddings_(r, c));
            mf.write(reinterpret_cast<const char*>(&x), sizeof(float));
        }
}

}  // namespace p4d
