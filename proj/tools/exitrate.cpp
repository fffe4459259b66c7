// exitrate: reliability analysis of redundant multi-channel linear systems
// under small random perturbations.

#include <exitrate/run.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"exit probabilities, large-deviations rates, and gain co-design "
                 "for redundant multi-channel systems"};
    app.require_subcommand(1);

    std::string config_path;
    exitrate::RunOverrides ov;
    int mode = -1;
    std::string section, format, out_dir;
    double epsilon = -1.0;
    std::uint64_t seed = 0;
    bool seed_set = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--mode", mode, "restrict to one failure mode (0 = nominal)");
        sub->add_option("--section", section, "restrict to one named boundary section");
        sub->add_option("--epsilon", epsilon, "restrict to one noise level");
        sub->add_option("--seed", seed, "override the simulation seed")
            ->each([&](const std::string&) { seed_set = true; });
        sub->add_option("--out", out_dir, "output directory (overrides config)");
        sub->add_option("--format", format, "artifact formats: json|csv|both")
            ->check(CLI::IsMember({"json", "csv", "both"}));
    };

    for (const char* name : {"verify", "simulate", "rate", "exit-profile", "pde-check",
                             "codesign", "all"})
        add_common(app.add_subcommand(name));

    CLI11_PARSE(app, argc, argv);
    const std::string subcommand = app.get_subcommands().front()->get_name();

    if (mode >= 0) ov.mode = mode;
    if (!section.empty()) ov.section = section;
    if (epsilon > 0.0) ov.epsilon = epsilon;
    if (seed_set) ov.seed = seed;
    if (!out_dir.empty()) ov.out_dir = out_dir;
    if (!format.empty()) ov.format = format;

    exitrate::RunConfig cfg;
    try {
        cfg = exitrate::load_config(config_path);
    } catch (const std::exception& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    }

    try {
        const auto report = exitrate::run(std::move(cfg), subcommand, ov);
        if (!report.errors.empty()) {
            std::cerr << "completed with " << report.errors.size() << " analysis error(s):\n";
            for (const auto& err : report.errors)
                std::cerr << "  [" << err["analysis"].get<std::string>() << "] "
                          << err["message"].get<std::string>() << "\n";
            return 1;
        }
        std::cout << "report written to "
                  << (ov.out_dir ? *ov.out_dir : report.config["output"]["directory"]
                                                      .get<std::string>())
                  << "/report.json\n";
        return 0;
    } catch (const exitrate::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
