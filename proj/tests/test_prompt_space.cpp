#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <nlohmann/json.hpp>

#include "p4d/prompt.hpp"
#include "test_util.hpp"

using namespace p4d;
using testutil::make_test_vocab;

namespace {

// exact (bitwise) matrix equality
bool same(const Mat& a, const Mat& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           (a.array() == b.array()).all();
}

// brute-force nearest-neighbor oracle, independent of project()
int nearest_by_scan(const Vec& row, const Vocabulary& vocab) {
    int best = -1;
    double best_sim = -2.0;
    for (int id : vocab.content_ids()) {
        const Vec cand = vocab.embedding(id);
        const double sim = row.dot(cand) / (row.norm() * cand.norm());
        if (sim > best_sim) {
            best_sim = sim;
            best = id;
        }
    }
    return best;
}

SoftPrompt soft_from_rows(const Mat& rows) {
    SoftPrompt s;
    s.embeddings = rows;
    s.trainable.assign(rows.rows(), true);
    return s;
}

}  // namespace

TEST_CASE("encode_text: empty prompt is begin/end only") {
    const auto vocab = make_test_vocab(16, 8, 11);
    const Encoding enc = encode_text("", vocab, 32);
    CHECK(enc.token_ids == std::vector<int>{vocab.bos_id(), vocab.eos_id()});
    CHECK(enc.content_length() == 0);
}

TEST_CASE("encode_text: deterministic") {
    const auto vocab = make_test_vocab(16, 8, 11);
    const Encoding a = encode_text("t0 t3 t5", vocab, 32);
    const Encoding b = encode_text("t0 t3 t5", vocab, 32);
    CHECK(a.token_ids == b.token_ids);
    CHECK(same(a.embeddings, b.embeddings));
}

TEST_CASE("encode/decode round-trip over random prompts") {
    const auto vocab = make_test_vocab(32, 8, 13);
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const int len = rng.uniform_int(1, 10);
        HardPrompt h;
        for (int i = 0; i < len; ++i) {
            const auto& pool = vocab.content_ids();
            h.token_ids.push_back(
                pool[rng.uniform_int(0, static_cast<int>(pool.size()) - 1)]);
        }
        h.text = decode_ids(h.token_ids, vocab);
        const Encoding enc = encode_text(h.text, vocab, 32);
        CHECK(enc.content_ids() == h.token_ids);
    }
}

TEST_CASE("encode_text: unknown token and truncation") {
    const auto vocab = make_test_vocab(8, 4, 5);
    CHECK_THROWS(encode_text("nonexistent", vocab, 32));

    std::string long_prompt;
    for (int i = 0; i < 10; ++i) long_prompt += (i ? " t1" : "t1");
    const Encoding enc = encode_text(long_prompt, vocab, 4);
    CHECK(enc.truncated);
    CHECK(enc.content_length() == 4);
}

TEST_CASE("project: vocabulary row is a fixed point") {
    const auto vocab = make_test_vocab(16, 8, 17);
    for (int id : vocab.content_ids()) {
        Mat rows(1, vocab.dim());
        rows.row(0) = vocab.embeddings().row(id);
        const HardPrompt h = project(soft_from_rows(rows), vocab);
        CHECK(h.token_ids[0] == id);
        CHECK(same(h.embeddings, rows));
    }
}

TEST_CASE("project: idempotence") {
    const auto vocab = make_test_vocab(16, 8, 19);
    Rng rng(3);
    const HardPrompt first = project(soft_from_rows(rng.normal_mat(6, 8)), vocab);
    const HardPrompt second = project(soft_from_rows(first.embeddings), vocab);
    CHECK(first.token_ids == second.token_ids);
}

TEST_CASE("project matches exhaustive nearest-neighbor search") {
    const auto vocab = make_test_vocab(16, 8, 23);
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const Mat rows = rng.normal_mat(5, 8);
        const HardPrompt h = project(soft_from_rows(rows), vocab);
        for (int i = 0; i < 5; ++i)
            CHECK(h.token_ids[i] == nearest_by_scan(rows.row(i).transpose(), vocab));
    }
}

TEST_CASE("project: specials excluded, zero row falls back, ties deterministic") {
    // duplicate embeddings force a tie; lowest id must win
    std::vector<std::string> tokens = {Vocabulary::kPad, Vocabulary::kBos,
                                       Vocabulary::kEos, "a", "b", "c"};
    std::vector<bool> special = {true, true, true, false, false, false};
    Mat emb(6, 2);
    emb << 1, 0,   // pad (special, also the closest row by construction)
           0, 1,
           0, -1,
           1, 0,   // a
           1, 0,   // b, same embedding as a
           -1, 0;
    const Vocabulary vocab(tokens, emb, special);

    Mat rows(2, 2);
    rows << 1, 0.001,
            0, 0;  // zero-norm row
    const HardPrompt h = project(soft_from_rows(rows), vocab);
    CHECK(h.token_ids[0] == 3);  // tie between a and b -> lowest id, never pad
    CHECK(h.token_ids[1] == 3);  // fallback: first non-special id
    const HardPrompt again = project(soft_from_rows(rows), vocab);
    CHECK(h.token_ids == again.token_ids);
}

TEST_CASE("decode_tokens basics") {
    const auto vocab = make_test_vocab(8, 4, 29);
    HardPrompt h;
    h.token_ids = {*vocab.id_of("t2")};
    CHECK(decode_tokens(h, vocab) == "t2");
    h.token_ids = {*vocab.id_of("t0"), *vocab.id_of("t4"), *vocab.id_of("t1")};
    CHECK(decode_tokens(h, vocab) == "t0 t4 t1");
    CHECK(decode_tokens(h, vocab) == decode_tokens(h, vocab));
}

TEST_CASE("init_p4d_n: shape, determinism, bounds") {
    const auto vocab = make_test_vocab(32, 8, 31);
    const SoftPrompt p = init_p4d_n(16, vocab, 42, 32);
    CHECK(p.length() == 16);
    for (bool t : p.trainable) CHECK(t);

    const SoftPrompt q = init_p4d_n(16, vocab, 42, 32);
    CHECK(same(p.embeddings, q.embeddings));

    CHECK(init_p4d_n(1, vocab, 0, 32).length() == 1);
    CHECK_THROWS(init_p4d_n(0, vocab, 0, 32));
    CHECK_THROWS(init_p4d_n(64, vocab, 0, 32));

    // every row is some non-special vocabulary row
    for (int i = 0; i < p.length(); ++i) {
        bool found = false;
        for (int id : vocab.content_ids())
            if (same(p.embeddings.row(i), vocab.embeddings().row(id))) found = true;
        CHECK(found);
    }
}

TEST_CASE("init_p4d_k: insertion arithmetic") {
    const auto vocab = make_test_vocab(32, 8, 37);
    Rng rng(1);

    SUBCASE("base length 6, K=3") {
        const SoftPrompt p = init_p4d_k(rng.normal_mat(6, 8), 3, vocab, 0, 32);
        CHECK(p.length() == 8);
        std::vector<int> trainable_pos;
        for (int i = 0; i < p.length(); ++i)
            if (p.trainable[i]) trainable_pos.push_back(i + 1);  // 1-indexed
        CHECK(trainable_pos == std::vector<int>{4, 8});
    }

    SUBCASE("enumeration oracle over lengths and K") {
        for (int len = 1; len <= 20; ++len) {
            for (int k : {1, 3, 5}) {
                if (len / k == 0) {
                    CHECK_THROWS(init_p4d_k(rng.normal_mat(len, 8), k, vocab, 0, 64));
                    continue;
                }
                const Mat base = rng.normal_mat(len, 8);
                const SoftPrompt p = init_p4d_k(base, k, vocab, 0, 64);

                // simulate the insertion independently
                std::vector<bool> expect_trainable;
                int base_used = 0;
                for (int i = 0; i < len; ++i) {
                    expect_trainable.push_back(false);
                    ++base_used;
                    if (base_used % k == 0) expect_trainable.push_back(true);
                }
                CHECK(p.trainable == expect_trainable);
                CHECK(p.length() == len + len / k);

                // frozen rows carry the base embeddings in order
                int bi = 0;
                for (int i = 0; i < p.length(); ++i)
                    if (!p.trainable[i]) CHECK(same(p.embeddings.row(i), base.row(bi++)));
            }
        }
    }

    SUBCASE("length 7, K=3 gives trainable {4, 8}, total 9") {
        const SoftPrompt p = init_p4d_k(rng.normal_mat(7, 8), 3, vocab, 0, 32);
        CHECK(p.length() == 9);
        std::vector<int> pos;
        for (int i = 0; i < p.length(); ++i)
            if (p.trainable[i]) pos.push_back(i + 1);
        CHECK(pos == std::vector<int>{4, 8});
    }

    SUBCASE("empty base errors") {
        CHECK_THROWS(init_p4d_k(Mat(0, 8), 3, vocab, 0, 32));
    }
}

TEST_CASE("HardPrompt JSON round-trip") {
    const auto vocab = make_test_vocab(8, 4, 41);
    HardPrompt h;
    h.token_ids = {3, 5, 4};
    h.embeddings.resize(3, 4);
    for (int i = 0; i < 3; ++i)
        h.embeddings.row(i) = vocab.embeddings().row(h.token_ids[i]);
    h.text = decode_ids(h.token_ids, vocab);
    h.source = "p4d-n";

    const nlohmann::json j = h.to_json();
    CHECK(j.at("source") == "p4d-n");
    const HardPrompt back = HardPrompt::from_json(j, vocab);
    CHECK(back.token_ids == h.token_ids);
    CHECK(back.text == h.text);
    CHECK(same(back.embeddings, h.embeddings));
}

TEST_CASE("vocabulary save/load round-trip") {
    const auto vocab = make_test_vocab(16, 8, 43);
    const std::string dir = "/tmp/p4d_vocab_test";
    std::filesystem::create_directories(dir);
    vocab.save(dir + "/tokens.txt", dir + "/emb.bin");
    const Vocabulary loaded = Vocabulary::load(dir + "/tokens.txt", dir + "/emb.bin");
    CHECK(loaded.size() == vocab.size());
    CHECK(loaded.dim() == vocab.dim());
    for (int i = 0; i < vocab.size(); ++i) {
        CHECK(loaded.token(i) == vocab.token(i));
        CHECK(loaded.is_special(i) == vocab.is_special(i));
        // format is float32; compare after the same narrowing
        for (int c = 0; c < vocab.dim(); ++c)
            CHECK(loaded.embeddings()(i, c) ==
                  static_cast<double>(static_cast<float>(vocab.embeddings()(i, c))));
    }
}
