#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"

using namespace azrp;

namespace {

json minimal() {
    return json::parse(R"({
        "name": "t",
        "model": {"dim": 1, "kernel": [{"offset": [1], "p": 1.0}], "rate": "linear", "gamma": 0.3,
                  "pattern": {"support": [[0]], "at_least": 1}, "box": 0},
        "statespace": {"per_site_cap": 3}
    })");
}

std::string error_of(const json& j) {
    try {
        parse_config(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("azrp_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace

TEST(Config, MinimalParses) {
    const auto c = parse_config(minimal());
    EXPECT_EQ(c.caps.per_site, 3);
    EXPECT_FALSE(c.caps.total);
    EXPECT_EQ(c.output, "out/t");
    EXPECT_DOUBLE_EQ(*c.model.gamma, 0.3);
}

TEST(Config, ErrorsNameTheKey) {
    auto j = minimal();
    j["statespace"]["per_site_cap"] = -2;
    EXPECT_NE(error_of(j).find("statespace.per_site_cap"), std::string::npos) << error_of(j);
    j = minimal();
    j["model"]["colour"] = "red";
    EXPECT_NE(error_of(j).find("model.colour"), std::string::npos) << error_of(j);
    j = minimal();
    j["solver"] = {{"tol", "small"}};
    EXPECT_NE(error_of(j).find("solver.tol"), std::string::npos) << error_of(j);
    j = minimal();
    j["model"]["rho"] = 0.3;
    EXPECT_FALSE(error_of(j).empty());
    j = minimal();
    j["stages"] = {"model", "teleport"};
    EXPECT_NE(error_of(j).find("stages"), std::string::npos);
}

TEST(Config, GridForms) {
    auto j = minimal();
    j["hitting"] = {{"grid", {{"start", 0}, {"stop", 10}, {"points", 6}}}};
    const auto c = parse_config(j);
    ASSERT_EQ(c.hitting.grid.size(), 6u);
    EXPECT_DOUBLE_EQ(c.hitting.grid[3], 6.0);
    j["hitting"] = {{"grid", {0.0, 1.5, 4.0}}};
    EXPECT_EQ(parse_config(j).hitting.grid.size(), 3u);
    j["hitting"] = {{"grid", {3.0, 1.0}}};
    EXPECT_FALSE(error_of(j).empty());
}

TEST(Cli, ExitCodes) {
    const auto dir = temp_dir("cli");
    std::ostringstream err;
    // unreadable config
    EXPECT_EQ(run_main((dir / "missing.json").string(), {}, std::nullopt, false, err), 1);
    // negative cap
    auto j = minimal();
    j["statespace"]["per_site_cap"] = -1;
    std::ofstream(dir / "neg.json") << j.dump();
    EXPECT_EQ(run_main((dir / "neg.json").string(), {}, std::nullopt, false, err), 1);
    EXPECT_NE(err.str().find("per_site_cap"), std::string::npos);
    // kernel that does not sum to one is a config error found by the model stage
    j = minimal();
    j["model"]["kernel"] = {{{"offset", {1}}, {"p", 0.5}}};
    j["output"] = (dir / "bad_kernel").string();
    std::ofstream(dir / "k.json") << j.dump();
    EXPECT_EQ(run_main((dir / "k.json").string(), {}, std::nullopt, false, err), 1);
    EXPECT_TRUE(std::filesystem::exists(dir / "bad_kernel" / "manifest.json"));
    // a computation failure names the stage in the manifest
    j = minimal();
    j["statespace"]["budget"] = 2;
    j["output"] = (dir / "budget").string();
    std::ofstream(dir / "b.json") << j.dump();
    EXPECT_EQ(run_main((dir / "b.json").string(), {"statespace"}, std::nullopt, false, err), 2);
    const auto m = json::parse(std::ifstream(dir / "budget" / "manifest.json"));
    EXPECT_EQ(m["summary"]["failing_stage"], "statespace");
    // a failed assertion: random starts cannot agree to 1e-300
    j = minimal();
    j["model"]["box"] = 1;
    j["model"]["pattern"]["at_least"] = 2;
    j["solver"] = {{"random_starts", 3}, {"agree_tol", 1e-300}};
    j["output"] = (dir / "assert").string();
    std::ofstream(dir / "a.json") << j.dump();
    err.str("");
    EXPECT_EQ(run_main((dir / "a.json").string(), {"spectral"}, std::nullopt, false, err), 3);
    EXPECT_NE(err.str().find("random-start spread"), std::string::npos) << err.str();
}

TEST(Cli, SingleSitePipelinePasses) {
    const auto dir = temp_dir("single");
    std::ostringstream err;
    const int code = run_main(AZRP_SOURCE_DIR "/configs/single_site.json", {}, dir.string(), false, err);
    EXPECT_EQ(code, 0) << err.str();
    const auto m = json::parse(std::ifstream(dir / "manifest.json"));
    EXPECT_NEAR(m["derived"]["lambda"].get<double>(), 0.3, 1e-12);
    EXPECT_EQ(m["summary"]["failed"], 0);
    for (const char* f : {"report.md", "checks.csv", "survival.csv", "mc_survival.csv", "eigenvector.csv"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    // every check line carries a tag
    std::ifstream rep(dir / "report.md");
    for (std::string line; std::getline(rep, line);)
        if (line.rfind("- [", 0) == 0) { EXPECT_NE(line.find("] "), std::string::npos); }
}

TEST(Report, MergesAndRefuses) {
    const auto dir = temp_dir("report");
    auto j = minimal();
    j["stages"] = {"model", "statespace", "generator", "spectral"};
    j["model"]["kernel"] = {{{"offset", {1}}, {"p", 0.7}}, {{"offset", {-1}}, {"p", 0.3}}};
    j["model"]["pattern"]["at_least"] = 2;
    j["model"]["halo"] = 30;
    j["statespace"] = {{"per_site_cap", 3}, {"total_cap", 3}};
    std::vector<std::string> manifests;
    std::ostringstream err, out;
    for (int n : {0, 1, 2}) {
        j["model"]["box"] = n;
        j["output"] = (dir / ("n" + std::to_string(n))).string();
        std::ofstream(dir / "c.json") << j.dump();
        ASSERT_EQ(run_main((dir / "c.json").string(), {}, std::nullopt, false, err), 0) << err.str();
        manifests.push_back((dir / ("n" + std::to_string(n)) / "manifest.json").string());
    }
    EXPECT_EQ(report_main(manifests, (dir / "merged").string(), out, err), 0) << out.str();
    EXPECT_NE(out.str().find("[PASS]"), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(dir / "merged" / "lambda_vs_n.csv"));
    std::ostringstream one;
    EXPECT_EQ(report_main({manifests[0]}, (dir / "single").string(), one, err), 0);
    EXPECT_NE(one.str().find("nothing to compare"), std::string::npos);

    j["model"]["pattern"]["at_least"] = 3;
    j["model"]["box"] = 1;
    j["output"] = (dir / "other").string();
    std::ofstream(dir / "c.json") << j.dump();
    ASSERT_EQ(run_main((dir / "c.json").string(), {}, std::nullopt, false, err), 0) << err.str();
    std::ostringstream refused;
    EXPECT_EQ(report_main({manifests[0], (dir / "other" / "manifest.json").string()}, (dir / "bad").string(), refused,
                          err),
              1);
    EXPECT_NE(err.str().find("refusing"), std::string::npos);
}

TEST(Csv, QuotesFields) {
    EXPECT_EQ(csv_field("plain"), "plain");
    EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
    EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    EXPECT_EQ(csv_number(std::numeric_limits<double>::infinity()), "inf");
    EXPECT_EQ(std::stod(csv_number(0.1)), 0.1);
}
