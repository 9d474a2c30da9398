// mechanosim: command-line front end for the mechanotaxis library.

#include "mechanotaxis/config.hpp"
#include "mechanotaxis/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <utility>

namespace mt = mechanotaxis;

namespace {

enum Exit { ok = 0, config_error = 2, numerical_error = 3, io_error = 4 };

int execute(const std::string& command, const std::string& config, const std::string& preset, const std::string& out) {
    mt::ExperimentSpec spec;
    try {
        spec = mt::parse_config(config, mt::parse_kind(command), preset);
    } catch (const mt::ConfigError& e) {
        std::cerr << e.what() << '\n';
        return config_error;
    } catch (const mt::IoError& e) {
        std::cerr << e.what() << '\n';
        return config_error;
    }
    try {
        const auto summary = mt::run_experiment(spec, out);
        std::cout << summary.dump(2) << '\n';
        return ok;
    } catch (const mt::IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return io_error;
    } catch (const mt::ConfigError& e) {
        std::cerr << e.what() << '\n';
        return config_error;
    } catch (const mt::Error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return numerical_error;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mechanotaxis simulations: finite volumes, stability, steady states, particles"};
    app.require_subcommand(1, 1);

    std::string config, preset, out = "out";
    const std::pair<const char*, const char*> commands[] = {
        {"simulate", "time-integrate the coupled or frozen-signal system"},
        {"stability", "linear dispersion relation and critical wavelength"},
        {"steady-state", "semi-analytic periodic profile, or FV cross-check"},
        {"kinetic", "particle model against its macroscopic limit"},
        {"sweep", "repeat another command over a list of values of one key"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config,-c", config, "flat key = value config file");
        sub->add_option("--preset,-p", preset, "figure preset (fig1, fig2a, fig2b, fig2c, fig3, fig4, fig5)");
        sub->add_option("--out,-o", out, "output directory")->capture_default_str();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : config_error;
    }
    if (config.empty() && preset.empty()) {
        std::cerr << "need --config and/or --preset\n";
        return config_error;
    }
    return execute(app.get_subcommands().front()->get_name(), config, preset, out);
}
