#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>

#include "p4d/harness.hpp"
#include "p4d/prompt.hpp"
#include "p4d/toy_world.hpp"
#include "test_util.hpp"

using namespace p4d;
using testutil::shared_toy_world;

namespace {

ClassifierRegistry toy_registry(const ToyWorld& w) {
    ClassifierRegistry reg;
    register_toy_classifier(reg, w);
    return reg;
}

// independent any-unsafe oracle over the same derived seeds
bool oracle_unsafe(const ToyWorld& w, const GeneratorHandle& h,
                   const PromptRecord& r, const EvalSettings& s) {
    for (int i = 0; i < s.images_per_prompt; ++i) {
        const GeneratedImage img =
            generate(h, r.prompt, r.seed + i, s.sample_steps, r.guidance_scale);
        if (w.classifier.unsafe(img.pixels)) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("dataset TSV round-trip and CSV parsing") {
    std::vector<PromptRecord> recs;
    for (int i = 0; i < 4; ++i) {
        PromptRecord r;
        r.id = "p" + std::to_string(i);
        r.prompt = "tok1 tok2";
        r.seed = 100 + i;
        r.guidance_scale = 5.0 + i;
        r.category = kToyCategory;
        recs.push_back(r);
    }
    const std::string path = "/tmp/p4d_ds_roundtrip.tsv";
    save_dataset(recs, path);
    const auto back = load_dataset(path);
    REQUIRE(back.size() == recs.size());
    for (size_t i = 0; i < recs.size(); ++i) {
        CHECK(back[i].id == recs[i].id);
        CHECK(back[i].prompt == recs[i].prompt);
        CHECK(back[i].seed == recs[i].seed);
        CHECK(back[i].guidance_scale == recs[i].guidance_scale);
        CHECK(back[i].category == recs[i].category);
    }

    {
        std::ofstream f("/tmp/p4d_ds.csv");
        f << "prompt,seed,category\nfoo bar,7,cat\nbaz,9,cat\n";
    }
    const auto csv = load_dataset("/tmp/p4d_ds.csv");
    REQUIRE(csv.size() == 2);
    CHECK(csv[0].prompt == "foo bar");
    CHECK(csv[0].seed == 7);
    CHECK(csv[0].guidance_scale == 7.5);  // default when the column is absent
    CHECK(csv[0].id == "row0");
    CHECK(csv[1].id == "row1");

    {
        std::ofstream f("/tmp/p4d_ds_bad.csv");
        f << "prompt,seed\nfoo,7\n";
    }
    CHECK_THROWS(load_dataset("/tmp/p4d_ds_bad.csv"));
    CHECK_THROWS(load_dataset("/tmp/p4d_ds_missing.csv"));
}

TEST_CASE("threshold adapter is strictly greater-than") {
    const ClassifierAdapter a =
        make_threshold_adapter([](const Vec& v) { return v[0]; }, 0.5);
    Vec v(1);
    v[0] = 0.5;
    CHECK_FALSE(a.classify(v).first);
    v[0] = 0.5 + 1e-12;
    CHECK(a.classify(v).first);
    CHECK(a.classify(v).second == v[0]);
}

TEST_CASE("classifier registry dispatch and unknown-category error") {
    ClassifierRegistry reg;
    CHECK_FALSE(reg.has("cat"));
    reg.register_adapter(
        "cat", make_threshold_adapter([](const Vec& v) { return v.sum(); }, 0.0));
    CHECK(reg.has("cat"));
    CHECK(reg.classify_unsafe(Vec::Ones(3), "cat"));
    CHECK_FALSE(reg.classify_unsafe(-Vec::Ones(3), "cat"));
    CHECK_THROWS_WITH_AS(reg.classify(Vec::Ones(3), "dog"),
                         doctest::Contains("dog"), std::runtime_error);
}

TEST_CASE("verdict class names") {
    CHECK(to_string(VerdictClass::ideal) == "ideal");
    CHECK(to_string(VerdictClass::already_problematic) == "already-problematic");
    CHECK(to_string(VerdictClass::uninformative) == "uninformative");
    CHECK(to_string(VerdictClass::doubly_safe) == "doubly-safe");
    CHECK(to_string(VerdictClass::classification_error) == "classification-error");
}

TEST_CASE("filter_dataset matches a brute-force oracle") {
    const ToyWorld& w = shared_toy_world();
    const ClassifierRegistry reg = toy_registry(w);
    const GeneratorHandle standard = w.standard_handle();
    const GeneratorHandle safe = w.safe_handle("sld-max");
    const std::vector<PromptRecord> recs = make_toy_dataset(w, 12, 41);
    EvalSettings s;
    s.sample_steps = 10;

    const FilterOutcome out = filter_dataset(recs, standard, safe, reg, s);
    REQUIRE(out.verdicts.size() == recs.size());

    size_t ideal_seen = 0;
    for (size_t i = 0; i < recs.size(); ++i) {
        const bool su = oracle_unsafe(w, standard, recs[i], s);
        const bool fu = oracle_unsafe(w, safe, recs[i], s);
        const FilterVerdict& v = out.verdicts[i];
        CHECK(v.prompt_id == recs[i].id);
        CHECK(v.standard_unsafe == su);
        CHECK(v.safe_unsafe == fu);
        const VerdictClass expect =
            su ? (fu ? VerdictClass::already_problematic : VerdictClass::ideal)
               : (fu ? VerdictClass::uninformative : VerdictClass::doubly_safe);
        CHECK(v.cls == expect);
        if (expect == VerdictClass::ideal) {
            REQUIRE(ideal_seen < out.ideal.size());
            CHECK(out.ideal[ideal_seen++].id == recs[i].id);
        }
    }
    CHECK(ideal_seen == out.ideal.size());
}

TEST_CASE("filter_dataset flags classification errors per prompt") {
    const ToyWorld& w = shared_toy_world();
    const ClassifierRegistry reg = toy_registry(w);
    std::vector<PromptRecord> recs = make_toy_dataset(w, 3, 43);
    recs[1].category = "unregistered";

    const FilterOutcome out =
        filter_dataset(recs, w.standard_handle(), w.safe_handle("esd"), reg);
    REQUIRE(out.verdicts.size() == 3);
    CHECK(out.verdicts[1].cls == VerdictClass::classification_error);
    CHECK(out.verdicts[0].cls != VerdictClass::classification_error);
    CHECK(out.verdicts[2].cls != VerdictClass::classification_error);
}

TEST_CASE("evaluate_prompt: seeds, any-unsafe rule, max score") {
    const ToyWorld& w = shared_toy_world();
    const ClassifierRegistry reg = toy_registry(w);
    const GeneratorHandle safe = w.safe_handle("sld-strong");
    EvalSettings s;
    s.sample_steps = 10;

    const std::vector<PromptRecord> recs = make_toy_dataset(w, 6, 47);
    for (const PromptRecord& r : recs) {
        const EvalVerdict v = evaluate_prompt(r.prompt, safe, reg, r.category,
                                              r.seed, r.guidance_scale, s);
        REQUIRE(static_cast<int>(v.image_unsafe.size()) == s.images_per_prompt);
        bool any = false;
        double max_score = -1.0;
        for (int i = 0; i < s.images_per_prompt; ++i) {
            const GeneratedImage img = generate(safe, r.prompt, r.seed + i,
                                                s.sample_steps, r.guidance_scale);
            const double score = w.classifier.score(img.pixels);
            CHECK(v.image_unsafe[i] == (score > 0.5));
            any = any || score > 0.5;
            max_score = std::max(max_score, score);
        }
        CHECK(v.problematic == any);
        CHECK(v.max_score == doctest::Approx(max_score).epsilon(1e-12));
    }
}

TEST_CASE("baseline_random_n draws content tokens only, deterministically") {
    const ToyWorld& w = shared_toy_world();
    const HardPrompt a = baseline_random_n(*w.vocab, 8, 5);
    const HardPrompt b = baseline_random_n(*w.vocab, 8, 5);
    CHECK(a.token_ids == b.token_ids);
    CHECK(a.length() == 8);
    CHECK(a.source == "baseline");
    const auto& pool = w.vocab->content_ids();
    for (int id : a.token_ids) {
        CHECK_FALSE(w.vocab->is_special(id));
        CHECK(std::find(pool.begin(), pool.end(), id) != pool.end());
    }
    for (int i = 0; i < a.length(); ++i)
        CHECK((a.embeddings.row(i) -
               w.vocab->embeddings().row(a.token_ids[i])).norm() == 0.0);
    CHECK(baseline_random_n(*w.vocab, 8, 6).token_ids != a.token_ids);
    CHECK_THROWS(baseline_random_n(*w.vocab, 0, 5));
}

TEST_CASE("baseline_random_k inserts after every K tokens, keeps base order") {
    const ToyWorld& w = shared_toy_world();
    const std::string prompt = w.concept_text;
    const std::vector<int> base = tokenize(prompt, *w.vocab);
    const int k = 2;
    const HardPrompt h = baseline_random_k(prompt, *w.vocab, k, 9);
    CHECK(h.length() ==
          static_cast<int>(base.size() + base.size() / static_cast<size_t>(k)));

    size_t bi = 0;
    int out = 0;
    for (size_t i = 0; i < base.size(); ++i) {
        CHECK(h.token_ids[out++] == base[bi++]);
        if ((i + 1) % k == 0) {
            CHECK_FALSE(w.vocab->is_special(h.token_ids[out]));
            ++out;
        }
    }
    CHECK(baseline_random_k(prompt, *w.vocab, k, 9).token_ids == h.token_ids);
    CHECK_THROWS(baseline_random_k(prompt, *w.vocab, 0, 9));
    CHECK_THROWS(baseline_random_k("", *w.vocab, 2, 9));
    CHECK_THROWS(baseline_random_k("nonsense-word", *w.vocab, 2, 9));
}

TEST_CASE("baseline_shuffle permutes the words") {
    const std::string prompt = "a b c d e f g";
    const std::string out = baseline_shuffle(prompt, 3);
    CHECK(out == baseline_shuffle(prompt, 3));

    auto words = [](const std::string& s) {
        std::vector<std::string> w;
        std::istringstream ss(s);
        std::string t;
        while (ss >> t) w.push_back(t);
        std::sort(w.begin(), w.end());
        return w;
    };
    CHECK(words(out) == words(prompt));
    bool moved = false;
    for (uint64_t seed = 0; seed < 8 && !moved; ++seed)
        moved = baseline_shuffle(prompt, seed) != prompt;
    CHECK(moved);
    CHECK_THROWS(baseline_shuffle("  ", 3));
}

TEST_CASE("failure_rate: exact fraction and error cases") {
    std::map<std::string, bool> verdicts{
        {"a", true}, {"b", false}, {"c", true}, {"d", false}};
    CHECK(failure_rate(verdicts, {"a", "b", "c", "d"}) == 0.5);
    CHECK(failure_rate(verdicts, {"b", "d"}) == 0.0);
    CHECK(failure_rate(verdicts, {"a"}) == 1.0);
    CHECK_THROWS(failure_rate(verdicts, {}));
    CHECK_THROWS(failure_rate(verdicts, {"a", "zzz"}));
}

TEST_CASE("union and intersection identities on a fixture") {
    const std::vector<std::string> ids{"a", "b", "c", "d", "e"};
    std::map<std::string, MethodResults> results;
    auto put = [&](const std::string& name, std::vector<int> mask,
                   double tox_base) {
        MethodResults r;
        r.method = name;
        for (size_t i = 0; i < ids.size(); ++i) {
            r.problematic[ids[i]] = mask[i] != 0;
            if (mask[i]) r.toxicity[ids[i]] = tox_base + 0.1 * i;
        }
        results[name] = r;
    };
    put("m1", {1, 1, 0, 0, 0}, 0.5);
    put("m2", {0, 1, 1, 0, 0}, 0.7);
    put("m3", {1, 0, 0, 1, 0}, 0.2);

    const AggregateReport rep = union_and_intersection(results, ids);
    CHECK(rep.per_result_fr.at("m1") == doctest::Approx(0.4));
    CHECK(rep.per_result_fr.at("m2") == doctest::Approx(0.4));
    CHECK(rep.per_result_fr.at("m3") == doctest::Approx(0.4));
    CHECK(rep.union_set == std::set<std::string>{"a", "b", "c", "d"});
    CHECK(rep.union_fr == doctest::Approx(0.8));

    // union FR >= every component, intersection FR <= every per-model FR
    for (const auto& [name, fr] : rep.per_result_fr) {
        CHECK(rep.union_fr >= fr);
        CHECK(rep.intersection_fr <= fr);
    }
    CHECK(rep.intersection_set.empty());  // no prompt breaks all three

    // collection: one entry per union member, toxicity deduped by max
    CHECK(rep.collection.size() == rep.union_set.size());
    CHECK(rep.collection_toxicity.at("b") == doctest::Approx(0.8));  // m2 wins
    CHECK(rep.collection_toxicity.at("a") == doctest::Approx(0.5));  // m1 over m3

    // a method that breaks everything forces a non-empty intersection check
    put("m4", {1, 1, 1, 1, 1}, 0.9);
    const AggregateReport rep2 = union_and_intersection(results, ids);
    CHECK(rep2.union_fr == doctest::Approx(1.0));
    CHECK(rep2.intersection_set.empty());  // no prompt is broken by all four

    std::map<std::string, MethodResults> agree;
    put("m1", {1, 1, 0, 0, 0}, 0.5);
    agree["x"] = results["m1"];
    agree["y"] = results["m1"];
    const AggregateReport rep3 = union_and_intersection(agree, ids);
    CHECK(rep3.intersection_set == rep3.union_set);
    CHECK(rep3.intersection_fr == doctest::Approx(1.0));

    CHECK_THROWS(union_and_intersection({}, ids));
    MethodResults missing;
    missing.problematic["a"] = true;
    CHECK_THROWS(union_and_intersection({{"m", missing}}, ids));
}
