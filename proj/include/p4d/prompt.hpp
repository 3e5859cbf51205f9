#pragma once

#include <string>
#include <vector>

#include "p4d/common.hpp"
#include "p4d/vocabulary.hpp"

#include <nlohmann/json_fwd.hpp>

namespace p4d {

/// Continuous token embeddings with a per-position trainable mask.
/// Rows are content positions only; begin/end tokens are re-attached by the
/// text encoder, never stored here.
struct SoftPrompt {
    Mat embeddings;                // n x d
    std::vector<bool> trainable;   // size n, at least one true

    int length() const { return static_cast<int>(embeddings.rows()); }
    int dim() const { return static_cast<int>(embeddings.cols()); }
};

/// Discrete token sequence plus the exact vocabulary rows it maps to.
struct HardPrompt {
    std::vector<int> token_ids;
    Mat embeddings;      // n x d, bit-for-bit vocabulary rows
    std::string text;
    std::string source;  // "p4d-n" | "p4d-k" | "baseline"

    int length() const { return static_cast<int>(token_ids.size()); }

    nlohmann::json to_json() const;
    static HardPrompt from_json(const nlohmann::json& j, const Vocabulary& vocab);
};

/// Output of the text encoder: bos + content tokens + eos, with embeddings.
struct Encoding {
    std::vector<int> token_ids;  // includes bos/eos
    Mat embeddings;              // (n+2) x d
    bool truncated = false;

    int length() const { return static_cast<int>(token_ids.size()); }
    int content_length() const { return length() - 2; }
    // content rows, without bos/eos
    Mat content_rows() const {
        return embeddings.middleRows(1, content_length());
    }
    std::vector<int> content_ids() const {
        return {token_ids.begin() + 1, token_ids.end() - 1};
    }
};

// Whitespace tokenization against the vocabulary. Throws on unknown words.
std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab);

// W(P): deterministic conditioning sequence for a prompt string. Prompts
// longer than context_limit content tokens are tail-truncated and flagged.
Encoding encode_text(const std::string& prompt, const Vocabulary& vocab,
                     int context_limit);

// Encoding for an already-discrete token id sequence (bos/eos attached).
Encoding encode_ids(const std::vector<int>& content_ids, const Vocabulary& vocab,
                    int context_limit);

// Nearest-vocabulary projection, cosine similarity, specials excluded.
// Ties break to the lowest token id; a zero-norm row falls back to the
// lowest non-special id.
HardPrompt project(const SoftPrompt& soft, const Vocabulary& vocab);

std::string decode_tokens(const HardPrompt& hard, const Vocabulary& vocab);
std::string decode_ids(const std::vector<int>& ids, const Vocabulary& vocab);

// P4D-N initialization: N uniformly drawn non-special vocabulary rows,
// all trainable.
SoftPrompt init_p4d_n(int n, const Vocabulary& vocab, uint64_t seed,
                      int context_limit);

// P4D-K initialization: one random trainable row inserted after every K
// base rows (complete groups only); base rows stay frozen.
SoftPrompt init_p4d_k(const Mat& base_rows, int k, const Vocabulary& vocab,
                      uint64_t seed, int context_limit);

}  // namespace p4d
