#include "support.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

using namespace gvgcov;
using namespace gvgcov::testing;

namespace
{
    namespace fs = std::filesystem;

    struct Outcome
    {
        int code = -1;
        std::string out;
    };

    Outcome cli(const std::string &args)
    {
        const std::string cmd = std::string(GVGCOV_CLI) + " " + args + " 2>/dev/null";
        Outcome o;
        FILE *p = popen(cmd.c_str(), "r");
        if (!p)
            return o;
        char buf[4096];
        std::size_t n;
        while ((n = fread(buf, 1, sizeof buf, p)) > 0)
            o.out.append(buf, n);
        const int status = pclose(p);
        o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        return o;
    }

    fs::path fresh_dir(const std::string &name)
    {
        const fs::path dir = fs::temp_directory_path() / ("gvgcov_cli_" + name);
        fs::remove_all(dir);
        return dir;
    }

    std::string read(const fs::path &p)
    {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    std::string scenario(const std::string &name) { return scenario_path(name); }

    // Corridor scenario shortened so that a run takes well under a second.
    fs::path short_corridors()
    {
        const fs::path p = fs::temp_directory_path() / "gvgcov_cli_short.json";
        std::string text = read(scenario("small_corridors.json"));
        text.replace(text.find("\"steps\": 400"), 12, "\"steps\": 60");
        std::ofstream(p) << text;
        return p;
    }
}

TEST(Cli, NoSubcommandIsAUsageError)
{
    EXPECT_EQ(cli("").code, 2);
    EXPECT_EQ(cli("gvg --out-dir /tmp/x").code, 2);
    EXPECT_EQ(cli("frobnicate").code, 2);
}

TEST(Cli, HelpExitsCleanly)
{
    const Outcome o = cli("--help");
    EXPECT_EQ(o.code, 0);
    EXPECT_NE(o.out.find("balance"), std::string::npos);
}

TEST(Cli, GvgOnTheReferenceLayout)
{
    const fs::path dir = fresh_dir("gvg");
    const Outcome o = cli("gvg --scenario " + scenario("reference_layout.json") + " --out-dir " + dir.string());
    EXPECT_EQ(o.code, 0);
    EXPECT_NE(o.out.find("cells: 9"), std::string::npos) << o.out;
    const nlohmann::json j = nlohmann::json::parse(read(dir / "gvg.json"));
    EXPECT_EQ(j.at("cells").size(), 9u);
}

TEST(Cli, GvgOnAnEmptyRectangle)
{
    const fs::path dir = fresh_dir("empty_rect");
    const Outcome o = cli("gvg --scenario " + scenario("empty_rectangle.json") + " --out-dir " + dir.string());
    EXPECT_EQ(o.code, 0);
    EXPECT_NE(o.out.find("edges: 0"), std::string::npos) << o.out;
    EXPECT_EQ(cli("run --scenario " + scenario("empty_rectangle.json") + " --out-dir " + dir.string()).code, 3);
}

TEST(Cli, BalanceOnTheTwoCellExample)
{
    const fs::path dir = fresh_dir("toy");
    const Outcome o = cli("balance --scenario " + scenario("two_cell_toy.json") + " --out-dir " + dir.string());
    EXPECT_EQ(o.code, 0);
    EXPECT_NE(o.out.find("K*: 2.250 4.500"), std::string::npos) << o.out;
    EXPECT_NE(o.out.find("K: 2 4"), std::string::npos) << o.out;
    EXPECT_TRUE(fs::exists(dir / "balance_trace.csv"));
    EXPECT_TRUE(fs::exists(dir / "balance_summary.json"));
    EXPECT_EQ(cli("run --scenario " + scenario("two_cell_toy.json") + " --out-dir " + dir.string()).code, 2);
}

TEST(Cli, MalformedScenarioWritesNothing)
{
    const fs::path bad = fs::temp_directory_path() / "gvgcov_cli_bad.json";
    std::ofstream(bad) << "{\n \"robots\": {\"count\": 3,\n";
    const fs::path dir = fresh_dir("bad");
    for (const char *sub : {"gvg", "balance", "run"})
    {
        const Outcome o = cli(std::string(sub) + " --scenario " + bad.string() + " --out-dir " + dir.string());
        EXPECT_EQ(o.code, 2) << sub;
        EXPECT_TRUE(o.out.empty()) << sub;
    }
    EXPECT_FALSE(fs::exists(dir));
    EXPECT_EQ(cli("run --scenario /nonexistent.json --out-dir " + dir.string()).code, 2);
}

TEST(Cli, RunIsDeterministicAndPassesCheck)
{
    const fs::path scen = short_corridors();
    const fs::path a = fresh_dir("run_a");
    const fs::path b = fresh_dir("run_b");
    ASSERT_EQ(cli("run --quiet --scenario " + scen.string() + " --out-dir " + a.string()).code, 0);
    ASSERT_EQ(cli("run --quiet --scenario " + scen.string() + " --out-dir " + b.string()).code, 0);
    for (const char *f : {"gvg.json", "balance_trace.csv", "balance_summary.json", "robots.csv", "cost.csv",
                          "run_summary.json"})
    {
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(read(a / f), read(b / f)) << f;
    }
    const Outcome check = cli("check --out-dir " + a.string());
    EXPECT_EQ(check.code, 0) << check.out;
    EXPECT_TRUE(nlohmann::json::parse(check.out).at("ok").get<bool>());

    const fs::path c = fresh_dir("run_c");
    ASSERT_EQ(cli("run --quiet --seed 99 --scenario " + scen.string() + " --out-dir " + c.string()).code, 0);
    EXPECT_NE(read(a / "robots.csv"), read(c / "robots.csv"));
}

TEST(Cli, QuietSuppressesOutput)
{
    const fs::path dir = fresh_dir("quiet");
    const Outcome o = cli("gvg --quiet --scenario " + scenario("small_corridors.json") + " --out-dir " + dir.string());
    EXPECT_EQ(o.code, 0);
    EXPECT_TRUE(o.out.empty());
}

TEST(Cli, CheckCatchesACorruptedCostFile)
{
    const fs::path dir = fresh_dir("corrupt");
    ASSERT_EQ(cli("run --quiet --scenario " + short_corridors().string() + " --out-dir " + dir.string()).code, 0);
    std::string cost = read(dir / "cost.csv");
    cost += "61,3.05,coverage,1e12\n";
    std::ofstream(dir / "cost.csv", std::ios::trunc) << cost;
    const Outcome o = cli("check --out-dir " + dir.string());
    EXPECT_EQ(o.code, 1);
    EXPECT_FALSE(nlohmann::json::parse(o.out).at("ok").get<bool>());
}

TEST(Cli, CheckOnAnEmptyDirectory)
{
    const fs::path dir = fresh_dir("nothing");
    fs::create_directories(dir);
    EXPECT_EQ(cli("check --out-dir " + dir.string()).code, 2);
}
