// Red-team pipeline CLI: filter -> optimize -> evaluate -> aggregate.

#include <CLI11.hpp>
#include <iostream>
#include <nlohmann/json.hpp>

#include "p4d/runner.hpp"
#include "p4d/toy_world.hpp"

using namespace p4d;

namespace {

void add_run_options(CLI::App* cmd, RunConfig& cfg, std::string& variant) {
    cmd->add_option("--backend", cfg.backend, "Generator backend (toy)")
        ->capture_default_str();
    cmd->add_option("--world-seed", cfg.world_seed, "Toy world build seed")
        ->capture_default_str();
    cmd->add_option("--world", cfg.world_path, "Toy world checkpoint to load");
    cmd->add_option("--safety", cfg.safety,
                    "Safety mechanism: esd, sld-max, sld-strong, neg-prompt, none")
        ->capture_default_str();
    cmd->add_option("--variant", variant,
                    "Method: p4d-n, p4d-k, random-n, random-k, shuffle")
        ->capture_default_str();
    cmd->add_option("--n", cfg.optimizer.n, "Prompt length for P4D-N / Random-N")
        ->capture_default_str();
    cmd->add_option("--k", cfg.optimizer.k, "Insertion period for P4D-K / Random-K")
        ->capture_default_str();
    cmd->add_option("--steps", cfg.optimizer.total_steps, "Gradient update steps")
        ->capture_default_str();
    cmd->add_option("--eval-every", cfg.optimizer.eval_interval,
                    "Best-prompt measurement interval")
        ->capture_default_str();
    cmd->add_flag_callback(
        "--no-text-filter",
        [&cfg] { cfg.optimizer.text_filter_active = false; },
        "Deactivate the guidance text filter during optimization");
    cmd->add_option("--dataset", cfg.dataset_path, "Prompt dataset table")
        ->required();
    cmd->add_option("--category", cfg.category, "Dataset category to red-team")
        ->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "Global run seed")->capture_default_str();
    cmd->add_option("--out", cfg.out_dir, "Output directory")->required();
    cmd->add_option("--jobs", cfg.jobs, "Parallel per-prompt jobs")
        ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"P4D: finds problematic prompts that bypass text-to-image safety mechanisms"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string variant = "p4d-n";

    auto* run = app.add_subcommand("run", "Run the red-team pipeline");
    add_run_options(run, cfg, variant);

    auto* sweep_cmd = app.add_subcommand("sweep", "Sweep prompt lengths (N or K)");
    std::vector<int> sweep_n, sweep_k;
    add_run_options(sweep_cmd, cfg, variant);
    sweep_cmd->add_option("--sweep-n", sweep_n, "N values to sweep");
    sweep_cmd->add_option("--sweep-k", sweep_k, "K values to sweep");

    auto* world_cmd = app.add_subcommand("world", "Build and save a toy world checkpoint");
    uint64_t world_seed = 7;
    std::string world_out;
    world_cmd->add_option("--seed", world_seed, "World seed")->capture_default_str();
    world_cmd->add_option("--out", world_out, "Checkpoint path")->required();

    auto* data_cmd = app.add_subcommand("gen-dataset", "Generate a toy prompt dataset");
    uint64_t data_world_seed = 7, data_seed = 0;
    int data_count = 100;
    std::string data_out;
    data_cmd->add_option("--world-seed", data_world_seed, "Toy world seed")
        ->capture_default_str();
    data_cmd->add_option("--seed", data_seed, "Dataset seed")->capture_default_str();
    data_cmd->add_option("--count", data_count, "Number of prompts")
        ->capture_default_str();
    data_cmd->add_option("--out", data_out, "Dataset path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (world_cmd->parsed()) {
            build_toy_world(world_seed).save(world_out);
            std::cout << "wrote " << world_out << "\n";
            return 0;
        }
        if (data_cmd->parsed()) {
            const ToyWorld world = build_toy_world(data_world_seed);
            save_dataset(make_toy_dataset(world, data_count, data_seed), data_out);
            std::cout << "wrote " << data_out << "\n";
            return 0;
        }

        cfg.method = method_from_string(variant);

        if (run->parsed()) {
            const PipelineOutcome out = run_pipeline(cfg);
            std::cout << "dataset=" << out.dataset_size
                      << " ideal=" << out.ideal_count
                      << " optimized=" << out.optimized
                      << " skipped=" << out.skipped << " errors=" << out.errors
                      << " FR=" << out.failure_rate << "\n";
            return out.exit_code;
        }

        // sweep
        std::vector<RunConfig> configs;
        if (!sweep_n.empty() && !sweep_k.empty())
            throw std::runtime_error("sweep one axis at a time (--sweep-n or --sweep-k)");
        const auto& axis = !sweep_n.empty() ? sweep_n : sweep_k;
        if (axis.empty()) throw std::runtime_error("no sweep axis given");
        for (int value : axis) {
            RunConfig c = cfg;
            if (!sweep_n.empty())
                c.optimizer.n = value;
            else
                c.optimizer.k = value;
            c.out_dir = cfg.out_dir + "/" +
                        (!sweep_n.empty() ? "n" : "k") + std::to_string(value);
            configs.push_back(c);
        }
        const SweepOutcome out = sweep(configs);
        std::cout << "per-setting FR:";
        for (double fr : out.per_setting_fr) std::cout << " " << fr;
        std::cout << "  union FR: " << out.union_fr << "\n";
        return out.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
