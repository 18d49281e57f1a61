#include <CLI11.hpp>

#include "sharplab/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"sharplab: sharpness measures, diagonal-network experiments and model pools"};
    app.require_subcommand(1);

    sharplab::CommandOptions opt;
    std::uint64_t seed_value = 0;
    bool seed_set = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config_path, "JSON config file")->required();
        sub->add_option("--out", opt.out_dir, "Output directory (default: .)");
        sub->add_option("--seed", seed_value, "Override the config seed")
            ->each([&](const std::string&) { seed_set = true; });
        sub->add_option("--jobs", opt.jobs, "Worker threads (default: 1)");
        sub->add_flag("--verbose", opt.verbose, "Print progress to stdout");
    };

    CLI::App* measure = app.add_subcommand(
        "measure",
        "Measure sharpness of a checkpoint on a dataset.\n"
        "Writes report.json and report.csv (columns: model_id,measure,rho,value).");
    add_common(measure);

    CLI::App* diaglin = app.add_subcommand(
        "diaglin",
        "Diagonal-linear-network pool: train, compute the four measures, correlate.\n"
        "Writes fig6.csv (columns: model,seed,lr,init_scale,steps,converged,achieved_loss,\n"
        "test_loss,beta_l1,half_trace_rescaled,half_trace,half_lambda_max_rescaled)\n"
        "and tau_summary.json.");
    add_common(diaglin);

    CLI::App* invariance = app.add_subcommand(
        "invariance",
        "Reparametrization-invariance suite and the weight-scale sweep.\n"
        "Writes invariance.csv (columns: alpha,sharpness_raw,sharpness_norm) and\n"
        "invariance_report.json; exits 4 if any assertion fails.");
    add_common(invariance);

    CLI::App* pool = app.add_subcommand(
        "pool",
        "Train a pool of models, measure sharpness, emit Kendall-tau reports.\n"
        "Writes manifest.json, tau_report.json and scatter.csv (columns:\n"
        "measure,rho,target,model_id,value,target_value,subgroup). Resumable.");
    add_common(pool);

    CLI::App* gen = app.add_subcommand(
        "gen-task", "Generate a synthetic dataset (classification or sparse_regression).");
    add_common(gen);

    CLI11_PARSE(app, argc, argv);
    if (seed_set) opt.seed_override = seed_value;

    if (measure->parsed()) return sharplab::cmd_measure(opt);
    if (diaglin->parsed()) return sharplab::cmd_diaglin(opt);
    if (invariance->parsed()) return sharplab::cmd_invariance(opt);
    if (pool->parsed()) return sharplab::cmd_pool(opt);
    if (gen->parsed()) return sharplab::cmd_gen_task(opt);
    return sharplab::kExitConfig;
}
