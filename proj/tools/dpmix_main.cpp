#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dpmix/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"dpmix: differentially private Gaussian mixture learning toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<uint64_t> seed;
    bool frozen_clock = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file")->required();
        cmd->add_option("--seed", seed, "Override the config seed");
        cmd->add_option("--out", out_dir, "Output directory");
        cmd->add_flag("--frozen-clock", frozen_clock, "Zero out recorded runtimes");
    };
    add_common(app.add_subcommand("gen", "Generate a model and dataset"));
    add_common(app.add_subcommand("learn", "Run the private learner"));
    add_common(app.add_subcommand("eval", "Evaluate TV distance between two models"));
    add_common(app.add_subcommand("audit", "Run dp / sensitivity / cover audits"));

    CLI11_PARSE(app, argc, argv);

    const std::string name = app.get_subcommands().front()->get_name();
    dpmix::json config;
    try {
        config = dpmix::harness::load_json_file(config_path);
    } catch (const dpmix::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return dpmix::harness::kExitInvalidConfig;
    }
    return dpmix::harness::run_command(name, config, out_dir, seed, frozen_clock);
}
