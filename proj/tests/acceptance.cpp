// Acceptance run: desk3d through every stage plus the line sweep, one line per criterion.
#include <azrp/azrp.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

namespace {

using azrp::Check;

struct Criterion {
    int id;
    std::string title;
    std::vector<std::string> stages;
    double budget_seconds;
};

// The regularity certificate of u cannot pass under a total cap when the kernel leaves a
// coordinate invariant. Only that check may fail for criterion 7 without failing the run.
bool known_red(const Check& c) { return c.stage == "regularity" && c.name.rfind("certify_D(u)", 0) == 0; }

struct Run {
    std::string label;
    std::unique_ptr<azrp::Runner> runner;
    std::string error;
};

Run execute(const std::string& label, const std::string& config, const std::filesystem::path& out) {
    Run r{label, nullptr, {}};
    auto cfg = azrp::load_config(config);
    cfg.output = (out / label).string();
    r.runner = std::make_unique<azrp::Runner>(cfg, nullptr);
    std::string failing;
    try {
        r.runner->run(cfg.stages.empty() ? azrp::all_stages() : cfg.stages);
    } catch (const std::exception& e) {
        r.error = e.what();
        failing = r.runner->current_stage();
    }
    if (failing.empty())
        for (const auto& c : r.runner->checks())
            if (!c.note() && !c.pass) {
                failing = c.stage;
                break;
            }
    azrp::write_outputs(*r.runner, !r.error.empty() ? "computation failed" : failing.empty() ? "passed" : "assertion failed",
                        failing, r.error);
    return r;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance"};
    std::string out = "out/acceptance";
    app.add_option("--out", out, "output directory");
    CLI11_PARSE(app, argc, argv);

    const std::filesystem::path configs = std::filesystem::path(AZRP_SOURCE_DIR) / "configs";
    std::vector<Run> runs;
    runs.push_back(execute("desk3d", (configs / "desk3d.json").string(), out));
    runs.push_back(execute("line_sweep", (configs / "line_sweep.json").string(), out));

    const std::vector<Criterion> criteria = {
        {1, "exactness", {"model", "statespace", "generator"}, 60},
        {2, "eigen", {"spectral"}, 300},
        {3, "variational", {"variational"}, 600},
        {4, "hitting time", {"hitting"}, 600},
        {5, "monotone approximation", {"approximation"}, 900},
        {6, "simulation", {"simulate"}, 600},
        {7, "regularity", {"regularity"}, 120},
    };

    int unexpected = 0;
    for (const auto& cr : criteria) {
        std::vector<std::string> failed, red;
        std::size_t n = 0;
        double seconds = 0;
        for (const auto& run : runs) {
            if (!run.error.empty())
                for (const auto& s : cr.stages)
                    if (s == run.runner->current_stage()) failed.push_back(run.label + ": " + run.error);
            for (const auto& c : run.runner->checks()) {
                if (c.note() || std::find(cr.stages.begin(), cr.stages.end(), c.stage) == cr.stages.end()) continue;
                ++n;
                if (c.pass) continue;
                (known_red(c) ? red : failed).push_back(run.label + ": " + c.tag + " " + c.name);
            }
            for (const auto& s : cr.stages) {
                auto it = run.runner->seconds().find(s);
                if (it != run.runner->seconds().end()) seconds += it->second;
            }
        }
        if (seconds >= cr.budget_seconds) {
            std::ostringstream os;
            os << "runtime " << seconds << " s over budget " << cr.budget_seconds << " s";
            failed.push_back(os.str());
        }
        if (n == 0) failed.push_back("no checks ran");

        std::ostringstream line;
        line << "criterion " << cr.id << " (" << cr.title << "): ";
        if (failed.empty() && red.empty())
            line << "PASS";
        else if (failed.empty())
            line << "FAIL (known, see README)";
        else {
            line << "FAIL";
            ++unexpected;
        }
        line << "  [" << n << " checks, " << seconds << " s]";
        for (const auto& f : failed) line << "\n    failed: " << f;
        for (const auto& f : red) line << "\n    known red: " << f;
        std::cout << line.str() << std::endl;
    }
    std::cout << (unexpected ? "acceptance: unexpected failures" : "acceptance: ok") << std::endl;
    return unexpected ? 1 : 0;
}
