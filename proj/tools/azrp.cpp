// azrp: run a configured analysis, or merge manifests of several runs.

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

#include "azrp/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Hitting times of patterns for asymmetric zero-range processes"};
    app.require_subcommand(1);

    std::string config;
    std::string stages;
    std::string out;
    bool verbose = false;
    auto* run = app.add_subcommand("run", "execute the stages of a config file");
    run->add_option("config", config, "JSON config file")->required();
    run->add_option("--stages", stages, "comma separated stage list (default: the config's)");
    run->add_option("--out", out, "output directory (default: the config's)");
    run->add_flag("-v,--verbose", verbose, "print every check as it runs");

    std::vector<std::string> manifests;
    std::string report_out = "out/report";
    auto* rep = app.add_subcommand("report", "merge run manifests into cross-run tables");
    rep->add_option("manifests", manifests, "manifest.json files")->required();
    rep->add_option("--out", report_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    if (*run) {
        std::vector<std::string> filter;
        std::stringstream ss(stages);
        for (std::string s; std::getline(ss, s, ',');)
            if (!s.empty()) filter.push_back(s);
        return azrp::run_main(config, filter, out.empty() ? std::nullopt : std::optional<std::string>(out), verbose);
    }
    return azrp::report_main(manifests, report_out, std::cout);
}
