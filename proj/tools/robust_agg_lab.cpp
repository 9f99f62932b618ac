#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "ral/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"robust-agg-lab: robust distributed GD/SGD stability workbench"};
    app.require_subcommand(1);

    std::string config_path, out_path, format = "csv", suite, f_range;
    std::string seed, seeds;
    bool emit_plot_script = false;
    std::vector<CLI::App*> subs;
    const std::pair<const char*, const char*> commands[] = {
        {"figure1", "stability sweep over f: poisoning vs tailored byzantine"},
        {"verify", "run the built-in property-check suites"},
        {"bounds", "tabulate the theoretical stability bounds"},
        {"run", "simulate one lower-bound construction end to end"},
        {"counterexample", "trimmed-mean co-coercivity violation witness"},
    };
    for (const auto& [name, blurb] : commands) {
        CLI::App* sub = app.add_subcommand(name, blurb);
        sub->add_option("--config", config_path, "key=value config file");
        sub->add_option("--out", out_path, "output file (default: stdout)");
        sub->add_option("--format", format, "csv or json")
            ->check(CLI::IsMember({"csv", "json"}));
        sub->add_option("--seed", seed, "base RNG seed");
        sub->add_option("--seeds", seeds, "number of Monte-Carlo seeds");
        sub->add_option("--f-range", f_range, "A..B sweep range for figure1");
        sub->add_option("--suite", suite, "verify: run only this suite");
        sub->add_flag("--emit-plot-script", emit_plot_script,
                      "also write a gnuplot script next to the CSV");
        subs.push_back(sub);
    }

    CLI11_PARSE(app, argc, argv);

    ral::ExperimentConfig config;
    try {
        config.command = app.get_subcommands().at(0)->get_name();
        if (!config_path.empty()) config.keys = ral::parse_key_value_file(config_path);
        config.out_path = out_path;
        config.format = format;
        config.suite = suite;
        config.emit_plot_script = emit_plot_script;
        // Flags override file keys.
        if (!seed.empty()) config.keys["seed"] = seed;
        if (!seeds.empty()) config.keys["seeds"] = seeds;
        if (!f_range.empty()) {
            const auto dots = f_range.find("..");
            if (dots == std::string::npos)
                throw ral::validation_error("--f-range expects A..B");
            config.keys["f_min"] = f_range.substr(0, dots);
            config.keys["f_max"] = f_range.substr(dots + 2);
        }
    } catch (const ral::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return ral::dispatch(config, std::cout, std::cerr);
}
