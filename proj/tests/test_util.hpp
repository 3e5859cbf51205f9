#pragma once

#include <memory>
#include <mutex>
#include <string>

#include "p4d/toy_world.hpp"
#include "p4d/vocabulary.hpp"

namespace p4d::testutil {

// Small deterministic vocabulary for unit tests: 3 specials + content
// tokens with random unit-norm embeddings.
inline Vocabulary make_test_vocab(int content_tokens, int dim, uint64_t seed) {
    std::vector<std::string> tokens = {Vocabulary::kPad, Vocabulary::kBos,
                                       Vocabulary::kEos};
    std::vector<bool> special = {true, true, true};
    for (int i = 0; i < content_tokens; ++i) {
        tokens.push_back("t" + std::to_string(i));
        special.push_back(false);
    }
    Rng rng(seed);
    Mat emb(tokens.size(), dim);
    for (int r = 0; r < emb.rows(); ++r)
        emb.row(r) = rng.normal_vec(dim).normalized().transpose();
    return Vocabulary(std::move(tokens), std::move(emb), std::move(special));
}

// Shared toy world; trained once per test binary. Uses a reduced training
// budget so unit suites stay fast (the acceptance suite builds full worlds).
inline const ToyWorld& shared_toy_world() {
    static std::once_flag once;
    static std::unique_ptr<ToyWorld> world;
    std::call_once(once, [] {
        ToyWorldConfig cfg;
        cfg.train_steps = 1500;
        cfg.erase_steps = 800;
        world = std::make_unique<ToyWorld>(build_toy_world(7, cfg));
    });
    return *world;
}

}  // namespace p4d::testutil
