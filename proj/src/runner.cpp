#include "p4d/runner.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <thread>

#include "p4d/toy_world.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace p4d {

std::string to_string(Method m) {
    switch (m) {
        case Method::p4d_n: return "p4d-n";
        case Method::p4d_k: return "p4d-k";
        case Method::random_n: return "random-n";
        case Method::random_k: return "random-k";
        case Method::shuffle: return "shuffle";
    }
    throw std::invalid_argument("unknown method");
}

Method method_from_string(const std::string& s) {
    if (s == "p4d-n") return Method::p4d_n;
    if (s == "p4d-k") return Method::p4d_k;
    if (s == "random-n") return Method::random_n;
    if (s == "random-k") return Method::random_k;
    if (s == "shuffle") return Method::shuffle;
    throw std::invalid_argument("unknown method '" + s + "'");
}

json RunConfig::to_json() const {
    return json{{"backend", backend},
                {"world_seed", world_seed},
                {"world_path", world_path},
                {"safety", safety},
                {"method", p4d::to_string(method)},
                {"optimizer", optimizer.to_json()},
                {"dataset_path", dataset_path},
                {"category", category},
                {"out_dir", out_dir},
                {"seed", seed},
                {"jobs", jobs},
                {"eval_sample_steps", eval_sample_steps}};
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    c.backend = j.at("backend").get<std::string>();
    c.world_seed = j.at("world_seed").get<uint64_t>();
    c.world_path = j.value("world_path", "");
    c.safety = j.at("safety").get<std::string>();
    c.method = method_from_string(j.at("method").get<std::string>());
    c.optimizer = OptimizerConfig::from_json(j.at("optimizer"));
    c.dataset_path = j.at("dataset_path").get<std::string>();
    c.category = j.at("category").get<std::string>();
    c.out_dir = j.value("out_dir", "");
    c.seed = j.at("seed").get<uint64_t>();
    c.jobs = j.value("jobs", 1);
    c.eval_sample_steps = j.value("eval_sample_steps", 25);
    return c;
}

std::string RunConfig::hash() const {
    json j = to_json();
    j.erase("out_dir");
    j.erase("jobs");
    // nlohmann objects serialize with sorted keys, so the dump is canonical
    return fnv1a_hex(j.dump());
}

namespace {

struct PromptOutcome {
    std::string prompt_id;
    json result_line;
    json verdict_line;
    bool problematic = false;
    bool error = false;
};

json downsample(const std::vector<double>& trace, size_t cap = 100) {
    if (trace.size() <= cap) return json(trace);
    std::vector<double> out;
    const double stride = static_cast<double>(trace.size()) / cap;
    for (size_t i = 0; i < cap; ++i)
        out.push_back(trace[static_cast<size_t>(i * stride)]);
    return json(out);
}

PromptOutcome process_prompt(const RunConfig& cfg, const std::string& config_hash,
                             const PromptRecord& record,
                             const GeneratorHandle& standard,
                             const GeneratorHandle& safe_opt,
                             const GeneratorHandle& safe_eval,
                             const ClassifierRegistry& registry) {
    PromptOutcome out;
    out.prompt_id = record.id;
    try {
        std::string found_text;
        json found;
        const uint64_t prompt_seed = mix_seed(cfg.seed, record.seed);

        switch (cfg.method) {
            case Method::p4d_n:
            case Method::p4d_k: {
                OptimizerConfig oc = cfg.optimizer;
                oc.variant = cfg.method == Method::p4d_n ? Variant::p4d_n
                                                         : Variant::p4d_k;
                oc.seed = mix_seed(cfg.seed, oc.seed);
                OptimizationResult res =
                    debug_prompt(record, standard, safe_opt, oc);
                found_text = res.best.text;
                found = res.best.to_json();
                out.result_line = json{{"config_hash", config_hash},
                                       {"prompt_id", record.id},
                                       {"method", to_string(cfg.method)},
                                       {"prompt", record.prompt},
                                       {"found", found},
                                       {"best_score", res.best_score},
                                       {"loss_trace", downsample(res.loss_trace)},
                                       {"selection_trace", res.selection_trace},
                                       {"steps", res.steps},
                                       {"aborted", res.aborted}};
                break;
            }
            case Method::random_n: {
                HardPrompt h = baseline_random_n(*standard.vocab,
                                                 cfg.optimizer.n, prompt_seed);
                found_text = h.text;
                found = h.to_json();
                break;
            }
            case Method::random_k: {
                HardPrompt h = baseline_random_k(record.prompt, *standard.vocab,
                                                 cfg.optimizer.k, prompt_seed);
                found_text = h.text;
                found = h.to_json();
                break;
            }
            case Method::shuffle: {
                found_text = baseline_shuffle(record.prompt, prompt_seed);
                found = json{{"text", found_text}, {"source", "baseline"}};
                break;
            }
        }
        if (out.result_line.is_null())
            out.result_line = json{{"config_hash", config_hash},
                                   {"prompt_id", record.id},
                                   {"method", to_string(cfg.method)},
                                   {"prompt", record.prompt},
                                   {"found", found}};

        EvalSettings settings;
        settings.sample_steps = cfg.eval_sample_steps;
        const EvalVerdict v =
            evaluate_prompt(found_text, safe_eval, registry, record.category,
                            record.seed, record.guidance_scale, settings);
        out.problematic = v.problematic;
        out.result_line["problematic"] = v.problematic;
        out.result_line["toxicity"] = v.max_score;
        out.verdict_line = json{{"prompt_id", record.id},
                                {"method", to_string(cfg.method)},
                                {"found", found_text},
                                {"problematic", v.problematic},
                                {"image_unsafe", v.image_unsafe},
                                {"max_score", v.max_score}};
    } catch (const std::exception& e) {
        out.error = true;
        out.result_line = json{{"config_hash", config_hash},
                               {"prompt_id", record.id},
                               {"method", to_string(cfg.method)},
                               {"error", e.what()}};
        out.verdict_line = json{{"prompt_id", record.id}, {"error", e.what()}};
    }
    return out;
}

void write_summary(const RunConfig& cfg, const std::string& config_hash,
                   const PipelineOutcome& outcome,
                   const std::vector<std::string>& filtered_ids,
                   const std::map<std::string, bool>& problematic) {
    json summary{{"config", [&] {
                      json j = cfg.to_json();
                      j.erase("out_dir");  // artifact-relative
                      j.erase("jobs");     // parallelism never changes results
                      return j;
                  }()},
                 {"config_hash", config_hash},
                 {"code_version", kCodeVersion},
                 {"dataset_size", outcome.dataset_size},
                 {"ideal_count", outcome.ideal_count},
                 {"errors", outcome.errors},
                 {"failure_rate", outcome.failure_rate},
                 {"table",
                  json{{to_string(cfg.method),
                        json{{cfg.safety, outcome.failure_rate}}}}}};
    std::ofstream js(fs::path(cfg.out_dir) / "summary.json");
    js << summary.dump(2) << "\n";

    std::ofstream tf(fs::path(cfg.out_dir) / "summary.txt");
    tf << std::left << std::setw(12) << "method" << std::setw(12) << "model"
       << std::setw(10) << "ideal" << std::setw(10) << "FR" << "\n";
    tf << std::left << std::setw(12) << to_string(cfg.method) << std::setw(12)
       << cfg.safety << std::setw(10) << filtered_ids.size() << std::fixed
       << std::setprecision(4) << outcome.failure_rate << "\n";
    (void)problematic;
}

}  // namespace

PipelineOutcome run_pipeline(const RunConfig& cfg) {
    PipelineOutcome outcome;
    const std::string config_hash = cfg.hash();

    ToyWorld world;
    std::vector<PromptRecord> records;
    try {
        if (cfg.backend != "toy")
            throw std::runtime_error("unknown backend '" + cfg.backend +
                                     "' (only the toy backend ships adapters here)");
        world = cfg.world_path.empty() ? build_toy_world(cfg.world_seed)
                                       : ToyWorld::load(cfg.world_path);
        const auto all = load_dataset(cfg.dataset_path);
        for (const auto& r : all)
            if (r.category == cfg.category) records.push_back(r);
        if (records.empty())
            throw std::runtime_error("no dataset records for category '" +
                                     cfg.category + "'");
        fs::create_directories(cfg.out_dir);
    } catch (const std::exception& e) {
        fs::path log = "p4d_error.log";
        if (!cfg.out_dir.empty()) {
            fs::create_directories(cfg.out_dir);
            log = fs::path(cfg.out_dir) / "error.log";
        }
        std::ofstream(log) << e.what() << "\n";
        outcome.exit_code = 1;
        return outcome;
    }
    outcome.dataset_size = static_cast<int>(records.size());

    ClassifierRegistry registry;
    register_toy_classifier(registry, world);

    const GeneratorHandle standard = world.standard_handle();
    const GeneratorHandle safe_eval = world.safe_handle(cfg.safety);
    GeneratorHandle safe_opt = safe_eval;
    if (safe_eval.safety.guidance_based())
        safe_opt = apply_safety(
            set_text_filter(safe_eval.safety, cfg.optimizer.text_filter_active),
            safe_eval);

    EvalSettings settings;
    settings.sample_steps = cfg.eval_sample_steps;
    const FilterOutcome filtered =
        filter_dataset(records, standard, safe_eval, registry, settings);
    outcome.ideal_count = static_cast<int>(filtered.ideal.size());

    {
        std::ofstream ff(fs::path(cfg.out_dir) / "filtered.jsonl");
        for (size_t i = 0; i < records.size(); ++i) {
            json line = records[i].to_json();
            line["filter"] = filtered.verdicts[i].to_json();
            ff << line.dump() << "\n";
        }
    }

    // resume: completed (config hash, prompt id) pairs from previous runs
    std::map<std::string, bool> prior;
    const fs::path results_path = fs::path(cfg.out_dir) / "results.jsonl";
    if (fs::exists(results_path)) {
        std::ifstream rf(results_path);
        std::string line;
        while (std::getline(rf, line)) {
            if (line.empty()) continue;
            const json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || j.value("config_hash", "") != config_hash)
                continue;
            if (j.contains("error")) continue;  // retry failed prompts
            prior[j.at("prompt_id").get<std::string>()] =
                j.value("problematic", false);
        }
    }

    std::vector<const PromptRecord*> todo;
    std::map<std::string, bool> problematic = prior;
    for (const auto& r : filtered.ideal) {
        if (prior.count(r.id)) {
            ++outcome.skipped;
        } else {
            todo.push_back(&r);
        }
    }

    std::vector<PromptOutcome> outcomes(todo.size());
    {
        std::ofstream rf(results_path, std::ios::app);
        std::ofstream vf(fs::path(cfg.out_dir) / "verdicts.jsonl", std::ios::app);
        std::mutex io_mutex;
        std::atomic<size_t> next{0};
        const int width = std::max(1, cfg.jobs);
        auto worker = [&] {
            for (size_t i = next.fetch_add(1); i < todo.size();
                 i = next.fetch_add(1)) {
                PromptOutcome po =
                    process_prompt(cfg, config_hash, *todo[i], standard,
                                   safe_opt, safe_eval, registry);
                std::lock_guard<std::mutex> lock(io_mutex);
                rf << po.result_line.dump() << "\n" << std::flush;
                vf << po.verdict_line.dump() << "\n" << std::flush;
                outcomes[i] = std::move(po);
            }
        };
        std::vector<std::thread> threads;
        for (int w = 0; w < width; ++w) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
    }

    for (const auto& po : outcomes) {
        if (po.error) {
            ++outcome.errors;
            problematic[po.prompt_id] = false;
        } else {
            ++outcome.optimized;
            problematic[po.prompt_id] = po.problematic;
        }
    }

    std::vector<std::string> filtered_ids;
    for (const auto& r : filtered.ideal) filtered_ids.push_back(r.id);
    outcome.failure_rate =
        filtered_ids.empty() ? 0.0 : failure_rate(problematic, filtered_ids);

    write_summary(cfg, config_hash, outcome, filtered_ids, problematic);
    outcome.exit_code = outcome.errors > 0 ? 2 : 0;
    return outcome;
}

SweepOutcome sweep(const std::vector<RunConfig>& configs) {
    if (configs.empty()) throw std::invalid_argument("sweep: no configs");

    // configs may differ only in the sweep axes (n, k) and output location
    auto strip = [](const RunConfig& c) {
        json j = c.to_json();
        j.erase("out_dir");
        j["optimizer"].erase("n");
        j["optimizer"].erase("k");
        return j.dump();
    };
    for (const auto& c : configs)
        if (strip(c) != strip(configs.front()))
            throw std::invalid_argument(
                "sweep: configs differ outside the declared sweep axes");

    SweepOutcome out;
    std::vector<std::map<std::string, bool>> verdicts;
    std::set<std::string> union_set;
    std::vector<std::string> filtered_ids;

    for (size_t i = 0; i < configs.size(); ++i) {
        const PipelineOutcome po = run_pipeline(configs[i]);
        if (po.exit_code == 1) {
            out.exit_code = 1;
            return out;
        }
        out.exit_code = std::max(out.exit_code, po.exit_code);
        out.per_setting_fr.push_back(po.failure_rate);

        // reload this run's verdicts for the union
        std::map<std::string, bool> v;
        std::vector<std::string> ids;
        std::ifstream ff(fs::path(configs[i].out_dir) / "filtered.jsonl");
        std::string line;
        while (std::getline(ff, line)) {
            if (line.empty()) continue;
            const json j = json::parse(line);
            if (j.at("filter").at("class") == "ideal")
                ids.push_back(j.at("id").get<std::string>());
        }
        std::ifstream rf(fs::path(configs[i].out_dir) / "results.jsonl");
        while (std::getline(rf, line)) {
            if (line.empty()) continue;
            const json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("problematic")) continue;
            const std::string id = j.at("prompt_id").get<std::string>();
            v[id] = j.at("problematic").get<bool>();
            if (v[id]) union_set.insert(id);
        }
        if (i == 0) filtered_ids = ids;
        verdicts.push_back(std::move(v));
    }

    out.union_fr = filtered_ids.empty()
                       ? 0.0
                       : static_cast<double>(union_set.size()) / filtered_ids.size();

    json report{{"per_setting_fr", out.per_setting_fr},
                {"union_fr", out.union_fr},
                {"settings", static_cast<int>(configs.size())}};
    const fs::path parent = fs::path(configs.front().out_dir).parent_path();
    std::ofstream(parent / "sweep.json") << report.dump(2) << "\n";
    return out;
}

}  // namespace p4d
