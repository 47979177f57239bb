// Command-line front end: run experiments, compare learning curves and
// generate synthetic datasets.

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "wavefuse/wavefuse.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_run_failure = 1;
constexpr int exit_config_error = 2;

int report(const wavefuse::Error& e) {
    std::cerr << "wavefuse: " << e.what() << '\n';
    return e.kind() == wavefuse::ErrorKind::config ? exit_config_error : exit_run_failure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"WaveFuse active-learning toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", wavefuse::version);

    std::string config_path;
    wavefuse::RunOptions options;
    std::uint64_t seed_override = 0;
    auto* run = app.add_subcommand("run", "Run every method x seed x fold in a config file");
    run->add_option("config", config_path, "Run configuration (JSON)")->required();
    run->add_option("--workers", options.workers, "Parallel runs")->check(CLI::PositiveNumber);
    run->add_option("--out", options.out_dir, "Output directory (overrides config and $WAVEFUSE_OUT_DIR)");
    auto* seed_opt = run->add_option("--seed-override", seed_override, "Run only this seed");

    std::string curves_a, curves_b, metric = "accuracy", method_a, method_b;
    auto* compare = app.add_subcommand("compare", "Paired t-test between two curves files");
    compare->add_option("a", curves_a, "First curves.csv")->required();
    compare->add_option("b", curves_b, "Second curves.csv")->required();
    compare->add_option("--metric", metric, "Metric column to compare")->check(CLI::IsMember({"accuracy", "f1"}));
    compare->add_option("--method-a", method_a, "Method to take from the first file");
    compare->add_option("--method-b", method_b, "Method to take from the second file");

    std::string spec_path, out_path;
    auto* gen = app.add_subcommand("gen-dataset", "Write a synthetic blob dataset as CSV");
    gen->add_option("spec", spec_path, "Generator spec (JSON)")->required();
    gen->add_option("out", out_path, "Output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config_error;
    }

    try {
        if (run->parsed()) {
            if (seed_opt->count() > 0) options.seed_override = seed_override;
            const auto outcome = wavefuse::execute_run(wavefuse::load_run_config(config_path), options);
            std::cout << "wrote " << outcome.experiment.runs.size() << " runs to " << outcome.output_dir.string()
                      << '\n';
        } else if (compare->parsed()) {
            const auto report = wavefuse::compare_curves(wavefuse::load_curves(curves_a),
                                                         wavefuse::load_curves(curves_b), metric, method_a, method_b);
            std::cout << wavefuse::format_report(report);
        } else if (gen->parsed()) {
            wavefuse::generate_dataset_file(wavefuse::load_generator_spec(spec_path), out_path);
        }
    } catch (const wavefuse::Error& e) {
        return report(e);
    } catch (const std::exception& e) {
        std::cerr << "wavefuse: " << e.what() << '\n';
        return exit_run_failure;
    }
    return exit_ok;
}
