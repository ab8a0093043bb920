#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
    static fs::path dir = [] {
        auto p = fs::temp_directory_path() / "stps_test_cli";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

int run(const std::string& args) {
    const std::string cmd = std::string(STPS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("synth writes a dataset deterministically") {
    const auto out1 = work_dir() / "synth1";
    const auto out2 = work_dir() / "synth2";
    CHECK(run("synth --n 8 --days 2 --seed 5 --out " + q(out1)) == 0);
    CHECK(run("synth --n 8 --days 2 --seed 5 --out " + q(out2)) == 0);
    CHECK(fs::exists(out1 / "traffic.csv"));
    CHECK(fs::exists(out1 / "adjacency.csv"));
    CHECK(fs::exists(out1 / "config.json"));
    CHECK(slurp(out1 / "traffic.csv") == slurp(out2 / "traffic.csv"));
    CHECK(slurp(out1 / "adjacency.csv") == slurp(out2 / "adjacency.csv"));
}

TEST_CASE("select is reproducible per seed and fails cleanly on missing data") {
    const auto synth = work_dir() / "synth1";
    const auto s1 = work_dir() / "sel1";
    const auto s2 = work_dir() / "sel2";
    const std::string common = " --adjacency " + q(synth / "adjacency.csv") +
                               " --m-prime 3 --select weighted --seed 7 --out ";
    CHECK(run("select --data " + q(synth / "traffic.csv") + common + q(s1)) == 0);
    CHECK(run("select --data " + q(synth / "traffic.csv") + common + q(s2)) == 0);
    CHECK(slurp(s1 / "partition.txt") == slurp(s2 / "partition.txt"));

    CHECK(run("select --data /nonexistent.csv" + common + q(work_dir() / "sel3")) == 2);
}

TEST_CASE("usage errors exit 1") {
    CHECK(run("train --no-such-flag") == 1);
    CHECK(run("bogus-command") == 1);
}

TEST_CASE("train smoke run and config echo reproducibility") {
    const auto out = work_dir() / "train1";
    const std::string args =
        "train --synthetic n=8 days=2 seed=3 --m-prime 3 --d 4 --l 4 --l-prime 8 "
        "--epochs 2 --batch 32 --seed 3 --out ";
    REQUIRE(run(args + q(out)) == 0);
    CHECK(fs::exists(out / "checkpoint.bin"));
    CHECK(fs::exists(out / "losses.csv"));
    CHECK(fs::exists(out / "config.json"));
    CHECK(fs::exists(out / "partition.txt"));

    const auto out2 = work_dir() / "train2";
    REQUIRE(run("train --config " + q(out / "config.json") + " --out " + q(out2)) == 0);
    CHECK(slurp(out / "checkpoint.bin") == slurp(out2 / "checkpoint.bin"));
    CHECK(slurp(out / "losses.csv") == slurp(out2 / "losses.csv"));
}

TEST_CASE("train exit codes for data problems") {
    CHECK(run("train --data /nonexistent.csv --adjacency /nonexistent_adj.csv --m-prime 2 --out " +
              q(work_dir() / "bad1")) == 2);
    // unknown config key
    const auto cfg = work_dir() / "bad_cfg.json";
    std::ofstream(cfg) << "{\"command\":\"train\",\"frobnicate\":1}";
    CHECK(run("train --config " + q(cfg) + " --out " + q(work_dir() / "bad2")) == 2);
}

TEST_CASE("ablation one-step trains a single stage") {
    const auto out = work_dir() / "train_onestep";
    REQUIRE(run("train --synthetic n=8 days=2 seed=3 --m-prime 3 --d 4 --l 4 --l-prime 8 "
                "--epochs 2 --batch 32 --seed 3 --ablation one-step --out " +
                q(out)) == 0);
    std::ifstream in(out / "losses.csv");
    std::string line;
    std::getline(in, line);  // header
    int stages_seen = 0;
    while (std::getline(in, line))
        if (!line.empty()) {
            CHECK(line[0] == '1');
            ++stages_seen;
        }
    CHECK(stages_seen == 2);
}

TEST_CASE("evaluate emits reports deterministically") {
    const auto train_out = work_dir() / "train1";
    const auto e1 = work_dir() / "eval1";
    const auto e2 = work_dir() / "eval2";
    const std::string args = "evaluate --checkpoint " + q(train_out / "checkpoint.bin") + " --data " +
                             q(train_out / "traffic.csv") + " --bins --svg --out ";
    REQUIRE(run(args + q(e1)) == 0);
    REQUIRE(run(args + q(e2)) == 0);
    CHECK(slurp(e1 / "metrics.csv") == slurp(e2 / "metrics.csv"));
    CHECK(slurp(e1 / "slices.csv") == slurp(e2 / "slices.csv"));
    CHECK(fs::exists(e1 / "bins.csv"));
    CHECK(fs::exists(e1 / "rmse_vs_horizon.svg"));

    std::ifstream in(e1 / "metrics.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "horizon_interval,mae,rmse,mape,masked_count");
    int rows = 0;
    std::string last;
    while (std::getline(in, line))
        if (!line.empty()) {
            last = line;
            ++rows;
        }
    CHECK(rows == 8 + 1);  // l'=8 horizons plus the avg row
    CHECK(last.substr(0, 4) == "avg,");
}

TEST_CASE("forecast emits m' rows of l' values") {
    const auto train_out = work_dir() / "train1";
    const auto out = work_dir() / "forecast1";
    REQUIRE(run("forecast --checkpoint " + q(train_out / "checkpoint.bin") + " --data " +
                q(train_out / "traffic.csv") + " --out " + q(out)) == 0);
    std::ifstream in(out / "forecast.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line.substr(0, 9) == "location,");
    std::size_t commas = std::count(line.begin(), line.end(), ',');
    CHECK(commas == 8);  // l' columns
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 3);  // m' rows
}
