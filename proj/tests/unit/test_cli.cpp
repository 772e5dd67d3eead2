#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string output;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(DWBC_CLI_PATH) + " " + args + " 2>&1";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) ++n;
    return n;
}

const fs::path& workdir() {
    static const fs::path dir = [] {
        const auto d = fs::temp_directory_path() / "dwbc_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

const fs::path& generated() {
    static const fs::path out = [] {
        const auto d = workdir() / "d1";
        const auto r = run("gen-data --env point-mass --expert-trajs 10 --random-trajs 200 --setting 1 --x 30 "
                           "--ref-episodes 20 --out " + d.string());
        EXPECT_EQ(r.code, 0) << r.output;
        return d;
    }();
    return out;
}

}  // namespace

TEST(Cli, GenDataWritesFiles) {
    const auto& d = generated();
    for (const char* f : {"d_e", "d_o", "refs", "labels", "manifest"}) EXPECT_TRUE(fs::exists(d / f)) << f;
    EXPECT_NE(slurp(d / "manifest").find("subcommand=gen-data"), std::string::npos);
}

TEST(Cli, TrainSmokeAndReproducible) {
    const auto& d = generated();
    const std::string base = "train --algo dwbc --de " + (d / "d_e").string() + " --do " + (d / "d_o").string() +
                             " --steps 300 --eval-period 100 --eval-episodes 2 --batch-size 32 --seed 1 --out ";
    const auto t1 = workdir() / "t1", t2 = workdir() / "t2";
    const auto r1 = run(base + t1.string());
    ASSERT_EQ(r1.code, 0) << r1.output;
    EXPECT_NE(r1.output.find("final_score="), std::string::npos);
    const auto r2 = run(base + t2.string());
    ASSERT_EQ(r2.code, 0) << r2.output;
    for (const char* f : {"checkpoint", "metrics", "timing", "manifest"}) EXPECT_TRUE(fs::exists(t1 / f)) << f;
    EXPECT_EQ(slurp(t1 / "metrics"), slurp(t2 / "metrics"));

    const auto ev = run("eval --checkpoint " + (t1 / "checkpoint").string() + " --refs " + (d / "refs").string() +
                        " --episodes 3 --out " + (workdir() / "e1").string());
    EXPECT_EQ(ev.code, 0) << ev.output;

    const auto ops = run("ops-rank --disc " + (t1 / "checkpoint").string() + " --de " + (d / "d_e").string() +
                         " --policy a=" + (t1 / "checkpoint").string() + " --policy b=" +
                         (t2 / "checkpoint").string() + " --out " + (workdir() / "o1").string());
    EXPECT_EQ(ops.code, 0) << ops.output;
}

TEST(Cli, ConfigFileAndFlagPrecedence) {
    const auto& d = generated();
    const auto cfg = workdir() / "cfg";
    std::ofstream(cfg) << "alpha = 2.5\neta = 0.25\n";
    const auto out = workdir() / "t3";
    const auto r = run("train --algo bc_exp --de " + (d / "d_e").string() + " --steps 10 --eval-period 10 "
                       "--eval-episodes 1 --batch-size 8 --config " + cfg.string() + " --alpha 3 --out " + out.string());
    ASSERT_EQ(r.code, 0) << r.output;
    const auto manifest = slurp(out / "manifest");
    EXPECT_NE(manifest.find("alpha=3"), std::string::npos) << manifest;
    EXPECT_NE(manifest.find("eta=0.25"), std::string::npos) << manifest;
}

TEST(Cli, SplitCounts) {
    const auto& d = generated();
    const auto out = workdir() / "s1";
    const auto r = run("split --expert " + (d / "d_e").string() + " --random " + (d / "d_o").string() +
                       " --setting 1 --x 0 --out " + out.string());
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(count_lines(out / "d_e"), count_lines(d / "d_e"));
}

TEST(Cli, GradCheckPasses) {
    const auto r = run("grad-check --trials 10");
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(r.output.find("FAIL"), std::string::npos) << r.output;
}

TEST(Cli, Errors) {
    EXPECT_NE(run("train --no-such-flag").code, 0);
    EXPECT_NE(run("").code, 0);
    EXPECT_NE(run("frobnicate").code, 0);
    const auto missing = (workdir() / "nope" / "d_e").string();
    const auto r = run("train --de " + missing + " --out " + (workdir() / "t4").string());
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.output.find(missing), std::string::npos) << r.output;
}

TEST(Cli, HelpForEverySubcommand) {
    for (const char* sub : {"gen-data", "split", "train", "eval", "ops-rank", "grad-check"}) {
        const auto r = run(std::string(sub) + " --help");
        EXPECT_EQ(r.code, 0) << sub;
        EXPECT_NE(r.output.find("--"), std::string::npos) << sub;
    }
}
