// Runs the built command-line tool as a subprocess.

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("degpar_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "run.cfg";
    std::ofstream(p) << text;
    return p;
}

int run(const std::string& args, const fs::path& dir) {
    const std::string cmd = std::string(DEGPAR_CLI_PATH) + ' ' + args + " >" + (dir / "stdout.txt").string() +
                            " 2>" + (dir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Cli, PassingRunWritesOutputs) {
    const fs::path d = scratch("pass");
    const fs::path cfg = write_config(d, "case = quadratic\nnx = 4\nny = 4\nny_list = 4 8\nnt = 4\n");
    ASSERT_EQ(run("--config " + cfg.string() + " --out " + (d / "out").string() + " mms", d), 0) << slurp(d / "stderr.txt");
    const auto summary = nlohmann::json::parse(slurp(d / "out" / "summary.json"));
    EXPECT_EQ(summary["subcommand"], "mms");
    EXPECT_TRUE(summary["passed"].get<bool>());
    EXPECT_EQ(summary["inputs"]["case"], "quadratic");
    const auto meta = nlohmann::json::parse(slurp(d / "out" / "metadata.json"));
    EXPECT_TRUE(meta.contains("wall_seconds"));
    EXPECT_TRUE(fs::exists(d / "out" / "convergence.csv"));
    EXPECT_NE(slurp(d / "stdout.txt").find("PASS reproduced_to_roundoff"), std::string::npos);
}

TEST(Cli, SummaryIsByteIdenticalAcrossRuns) {
    const fs::path d = scratch("repeat");
    const fs::path cfg = write_config(d, "nx = 4\nny = 4\nnt = 4\nsamples = 2\neps_list = 0.5 0.25\n");
    const std::string base = "--config " + cfg.string() + " --seed 3 ";
    ASSERT_NE(run(base + "--out " + (d / "a").string() + " caccioppoli", d), 2);
    ASSERT_NE(run(base + "--workers 2 --out " + (d / "b").string() + " caccioppoli", d), 2);
    EXPECT_EQ(slurp(d / "a" / "summary.json"), slurp(d / "b" / "summary.json"));
    EXPECT_EQ(slurp(d / "a" / "ratio.csv"), slurp(d / "b" / "ratio.csv"));
}

TEST(Cli, NonA2WeightIsReportedWithoutFailing) {
    const fs::path d = scratch("a2");
    const fs::path cfg = write_config(d, "a = 1.5\ndepth = 16\n");
    EXPECT_EQ(run("--config " + cfg.string() + " --out " + (d / "out").string() + " muckenhoupt", d), 0)
        << slurp(d / "stderr.txt");
}

TEST(Cli, FailedAssertionExitsOneAndNamesIt) {
    const fs::path d = scratch("fail");
    // two refinement levels cannot reach the demanded order
    const fs::path cfg = write_config(d, "a = 0\nnx = 2\nny = 4\nny_list = 4 8\nnt = 4\nt0 = 0\nmin_order = 50\n");
    EXPECT_EQ(run("--config " + cfg.string() + " --out " + (d / "out").string() + " mms", d), 1);
    EXPECT_NE(slurp(d / "stderr.txt").find("assertion failed: order_ny4_8"), std::string::npos);
    EXPECT_FALSE(nlohmann::json::parse(slurp(d / "out" / "summary.json"))["passed"].get<bool>());
}

TEST(Cli, UsageAndConfigErrorsExitTwo) {
    const fs::path d = scratch("usage");
    EXPECT_EQ(run("frobnicate", d), 2);
    EXPECT_EQ(run("", d), 2);
    EXPECT_EQ(run("--config " + write_config(d, "bogus = 1\n").string() + " mms", d), 2);
    EXPECT_NE(slurp(d / "stderr.txt").find("unknown key 'bogus'"), std::string::npos);
    EXPECT_EQ(run("--config " + write_config(d, "ny_list = 8\n").string() + " mms", d), 2);
    EXPECT_EQ(run("--config /nonexistent.cfg mms", d), 2);
}

TEST(Cli, PrintsSchema) {
    const fs::path d = scratch("schema");
    ASSERT_EQ(run("--print-schema", d), 0);
    EXPECT_NE(slurp(d / "stdout.txt").find("| `eps_list` |"), std::string::npos);
}
