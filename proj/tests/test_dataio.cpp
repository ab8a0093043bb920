#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "stps/dataio.hpp"

using namespace stps;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
    static fs::path dir = [] {
        auto p = fs::temp_directory_path() / "stps_test_dataio";
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

std::string write_file(const std::string& name, const std::string& content) {
    const auto path = tmp_dir() / name;
    std::ofstream out(path);
    out << content;
    return path.string();
}

data::TrafficTable ramp_table(std::size_t n, std::size_t intervals) {
    data::TrafficTable t;
    t.n_locations = n;
    t.n_intervals = intervals;
    t.start_epoch = data::parse_iso8601("2024-01-01T00:00:00");
    t.values.resize(n * intervals);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < intervals; ++j) t.at(i, j) = static_cast<double>(i * 1000 + j);
    return t;
}

}  // namespace

TEST_CASE("calendar helpers") {
    const auto epoch = data::parse_iso8601("2024-01-01T00:00:00");
    CHECK(data::dow_of_epoch(epoch) == 0);  // 2024-01-01 was a Monday
    CHECK(data::tod_of_epoch(epoch) == 0);
    CHECK(data::tod_of_epoch(epoch + 300) == 1);
    CHECK(data::dow_of_epoch(epoch + 6 * 86400) == 6);
    CHECK(data::format_iso8601(epoch) == "2024-01-01T00:00:00");
    CHECK(data::parse_iso8601(data::format_iso8601(epoch + 12345 * 300)) == epoch + 12345 * 300);
    CHECK_THROWS_AS(data::parse_iso8601("not-a-date"), DataError);
}

TEST_CASE("traffic table round trip and header counts") {
    auto t = ramp_table(3, 10);
    const auto path = (tmp_dir() / "ramp.csv").string();
    data::save_traffic_table(t, path);
    auto loaded = data::load_traffic_table(path);
    CHECK(loaded.n_locations == 3);
    CHECK(loaded.n_intervals == 10);
    CHECK(loaded.start_epoch == t.start_epoch);
    CHECK(loaded.values == t.values);
}

TEST_CASE("pems08-scale table loads with exact counts") {
    auto t = ramp_table(170, 17856);
    const auto path = (tmp_dir() / "pems08_shape.csv").string();
    data::save_traffic_table(t, path);
    auto loaded = data::load_traffic_table(path);
    CHECK(loaded.n_locations == 170);
    CHECK(loaded.n_intervals == 17856);
}

TEST_CASE("traffic table parse errors carry line numbers") {
    const auto ragged = write_file("ragged.csv",
                                   "timestamp,loc_0,loc_1\n"
                                   "2024-01-01T00:00:00,1,2\n"
                                   "2024-01-01T00:05:00,3\n");
    CHECK_THROWS_WITH_AS(data::load_traffic_table(ragged), doctest::Contains(":3:"), DataError);

    const auto bad = write_file("bad.csv",
                                "timestamp,loc_0\n"
                                "2024-01-01T00:00:00,abc\n");
    CHECK_THROWS_WITH_AS(data::load_traffic_table(bad), doctest::Contains(":2:"), DataError);
    CHECK_THROWS_AS(data::load_traffic_table((tmp_dir() / "missing.csv").string()), DataError);
}

TEST_CASE("adjacency load, symmetrization, and bounds") {
    const auto ok = write_file("adj.csv", "0,1\n");
    auto g = data::load_adjacency(ok, 2);
    CHECK(g.adjacency.v == std::vector<double>{0, 1, 1, 0});

    const auto bad = write_file("adj_bad.csv", "5,0\n");
    CHECK_THROWS_WITH_AS(data::load_adjacency(bad, 2), doctest::Contains("out of range"), DataError);

    auto g2 = data::load_adjacency(ok, 3);
    const auto path = (tmp_dir() / "adj_rt.csv").string();
    data::save_adjacency(g2, path);
    auto g3 = data::load_adjacency(path, 3);
    CHECK(g3.adjacency.v == g2.adjacency.v);
}

TEST_CASE("partition file round trip and validation") {
    data::SensingPartition p{{0, 2, 3}, {1, 4}};
    const auto path = (tmp_dir() / "part.txt").string();
    data::save_partition(p, path);
    auto q = data::load_partition(path, 5);
    CHECK(q.sensed == p.sensed);
    CHECK(q.unsensed == p.unsensed);

    const auto overlap = write_file("part_bad.txt", "sensed: 0,1\nunsensed: 1\n");
    CHECK_THROWS_AS(data::load_partition(overlap, 2), DataError);
    const auto gap = write_file("part_gap.txt", "sensed: 0\nunsensed: 2\n");
    CHECK_THROWS_AS(data::load_partition(gap, 3), DataError);
}

TEST_CASE("normalizer") {
    data::TrafficTable t;
    t.n_locations = 1;
    t.n_intervals = 2;
    t.values = {1, 3};
    auto norm = data::fit_normalizer(t);
    CHECK(norm.mean == 2.0);
    CHECK(norm.std == 1.0);  // population std
    CHECK(norm.forward(3.0) == 1.0);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> uni(-100, 100);
    for (int i = 0; i < 100; ++i) {
        const double x = uni(rng);
        CHECK(norm.inverse(norm.forward(x)) == doctest::Approx(x).epsilon(1e-9));
    }

    data::TrafficTable flat;
    flat.n_locations = 1;
    flat.n_intervals = 3;
    flat.values = {5, 5, 5};
    CHECK_THROWS_AS(data::fit_normalizer(flat), DataError);
}

TEST_CASE("normalizer depends only on the training split") {
    auto t = ramp_table(2, 100);
    auto split1 = data::chronological_split(t);
    auto t2 = t;
    for (std::size_t j = 60; j < 100; ++j) t2.at(0, j) = 9999.0;  // touch only val/test intervals
    auto split2 = data::chronological_split(t2);
    CHECK(data::fit_normalizer(split1.train).mean == data::fit_normalizer(split2.train).mean);
    CHECK(data::fit_normalizer(split1.train).std == data::fit_normalizer(split2.train).std);
}

TEST_CASE("chronological split sizes") {
    auto t100 = ramp_table(1, 100);
    auto s = data::chronological_split(t100);
    CHECK(s.train.n_intervals == 60);
    CHECK(s.val.n_intervals == 20);
    CHECK(s.test.n_intervals == 20);

    auto t101 = ramp_table(1, 101);
    auto s2 = data::chronological_split(t101);
    CHECK(s2.train.n_intervals == 60);
    CHECK(s2.val.n_intervals == 20);
    CHECK(s2.test.n_intervals == 21);

    std::mt19937_64 rng(2);
    for (int i = 0; i < 20; ++i) {
        const std::size_t total = 5 + rng() % 500;
        auto t = ramp_table(1, total);
        try {
            auto sp = data::chronological_split(t);
            CHECK(sp.train.n_intervals + sp.val.n_intervals + sp.test.n_intervals == total);
            CHECK(sp.train.at(0, sp.train.n_intervals - 1) < sp.val.at(0, 0));
            CHECK(sp.val.at(0, sp.val.n_intervals - 1) < sp.test.at(0, 0));
        } catch (const DataError&) {
            CHECK(total < 5);
        }
    }
    CHECK_THROWS_AS(data::chronological_split(ramp_table(1, 3)), DataError);
}

TEST_CASE("window extraction") {
    auto t = ramp_table(4, 108);
    data::SensingPartition p{{0, 2}, {1, 3}};
    auto windows = data::make_windows(t, p, 12, 96);
    REQUIRE(windows.size() == 1);
    CHECK(windows[0].x_M_T.cols == 12);
    CHECK(windows[0].x_Mp_Tp.cols == 96);
    CHECK(windows[0].x_M_T.rows == 2);
    CHECK(windows[0].x_Mp_Tp.rows == 2);

    CHECK(data::make_windows(ramp_table(4, 107), p, 12, 96).empty());

    auto t2 = ramp_table(4, 500);
    auto ws = data::make_windows(t2, p, 12, 96);
    CHECK(ws.size() == 500 - 12 - 96 + 1);
    // block tiling reassembles the original slice
    const auto& w = ws[7];
    for (std::size_t c = 0; c < 12; ++c) {
        CHECK(w.x_M_T.at(0, c) == t2.at(0, 7 + c));
        CHECK(w.x_Mp_T.at(1, c) == t2.at(3, 7 + c));
    }
    for (std::size_t c = 0; c < 96; ++c) {
        CHECK(w.x_M_Tp.at(1, c) == t2.at(2, 7 + 12 + c));
        CHECK(w.x_Mp_Tp.at(0, c) == t2.at(1, 7 + 12 + c));
    }
}

TEST_CASE("window calendar indices") {
    auto t = ramp_table(4, 400);  // starts Monday 00:00
    data::SensingPartition p{{0, 2}, {1, 3}};
    auto ws = data::make_windows(t, p, 12, 24);
    const auto& w = ws[300];
    CHECK(w.tod_index == 300 % 288);
    CHECK(w.dow_index == (300 / 288) % 7);
    CHECK(w.tod_index == 12);
    CHECK(w.dow_index == 1);
    CHECK(w.todp_index == (300 + 12) % 288);
}

TEST_CASE("select_locations") {
    auto t = ramp_table(6, 50);
    data::RoadGraph g;
    g.n_locations = 6;
    g.adjacency = Mat(6, 6);

    auto p1 = data::select_locations(t, g, 2, data::SelectMode::Random, 42);
    auto p2 = data::select_locations(t, g, 2, data::SelectMode::Random, 42);
    CHECK(p1.sensed == p2.sensed);
    CHECK(p1.unsensed == p2.unsensed);
    CHECK(p1.unsensed.size() == 2);
    CHECK(p1.sensed.size() == 4);
    std::vector<bool> seen(6, false);
    for (int i : p1.sensed) seen[i] = true;
    for (int i : p1.unsensed) seen[i] = true;
    CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));

    auto w1 = data::select_locations(t, g, 2, data::SelectMode::Weighted, 7);
    auto w2 = data::select_locations(t, g, 2, data::SelectMode::Weighted, 7);
    CHECK(w1.sensed == w2.sensed);

    CHECK_THROWS_AS(data::select_locations(t, g, 0, data::SelectMode::Random, 0), DataError);
    CHECK_THROWS_AS(data::select_locations(t, g, 6, data::SelectMode::Random, 0), DataError);
}

TEST_CASE("weighted selection reduces to uniform under equal rates") {
    data::TrafficTable t;
    t.n_locations = 4;
    t.n_intervals = 10;
    t.values.assign(40, 3.0);
    data::RoadGraph g;
    g.n_locations = 4;
    g.adjacency = Mat(4, 4);
    std::vector<int> unsensed_count(4, 0);
    for (std::uint64_t seed = 0; seed < 4000; ++seed) {
        auto p = data::select_locations(t, g, 1, data::SelectMode::Weighted, seed);
        ++unsensed_count[p.unsensed[0]];
    }
    for (int c : unsensed_count) CHECK(c == doctest::Approx(1000).epsilon(0.12));
}

TEST_CASE("inject_noise") {
    auto t = ramp_table(2, 100);
    for (double& v : t.values) v += 1000.0;  // keep far from the clipping boundary

    auto same = data::inject_noise(t, 0.0, 9);
    CHECK(same.values == t.values);

    data::TrafficTable big;
    big.n_locations = 1;
    big.n_intervals = 200000;
    big.values.assign(200000, 10000.0);
    auto noisy = data::inject_noise(big, 100.0, 5);
    double mean = 0.0;
    for (std::size_t i = 0; i < big.values.size(); ++i) mean += noisy.values[i] - big.values[i];
    mean /= static_cast<double>(big.values.size());
    double var = 0.0;
    for (std::size_t i = 0; i < big.values.size(); ++i) {
        const double d = noisy.values[i] - big.values[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(big.values.size());
    CHECK(var == doctest::Approx(100.0).epsilon(0.05));

    data::TrafficTable zeros;
    zeros.n_locations = 1;
    zeros.n_intervals = 10000;
    zeros.values.assign(10000, 0.0);
    auto clipped = data::inject_noise(zeros, 100.0, 3);
    CHECK(std::all_of(clipped.values.begin(), clipped.values.end(), [](double v) { return v >= 0.0; }));

    CHECK_THROWS_AS(data::inject_noise(t, -1.0, 0), DataError);
}

TEST_CASE("synthetic generator periodicity and determinism") {
    data::SyntheticConfig cfg;
    cfg.n = 8;
    cfg.days = 3;
    cfg.seed = 11;
    cfg.closure_rate = 0.0;
    cfg.noise_sigma = 0.0;
    cfg.weekend_factor = 1.0;
    auto ds = data::generate_synthetic(cfg);
    CHECK(ds.table.n_intervals == 3 * 288);
    for (std::size_t i = 0; i < cfg.n; ++i)
        for (std::size_t t = 0; t + 288 < ds.table.n_intervals; ++t)
            REQUIRE(ds.table.at(i, t) == ds.table.at(i, t + 288));

    auto ds2 = data::generate_synthetic(cfg);
    CHECK(ds2.table.values == ds.table.values);
    CHECK(ds2.graph.adjacency.v == ds.graph.adjacency.v);

    // graph invariants: symmetric, zero diagonal, binary, ring connectivity
    for (std::size_t i = 0; i < cfg.n; ++i) {
        CHECK(ds.graph.adjacency.at(i, i) == 0.0);
        CHECK(ds.graph.adjacency.at(i, (i + 1) % cfg.n) == 1.0);
        for (std::size_t j = 0; j < cfg.n; ++j) {
            CHECK(ds.graph.adjacency.at(i, j) == ds.graph.adjacency.at(j, i));
            CHECK((ds.graph.adjacency.at(i, j) == 0.0 || ds.graph.adjacency.at(i, j) == 1.0));
        }
    }
    CHECK_THROWS_AS(data::generate_synthetic(data::SyntheticConfig{3, 2, 0, 0.0, 0.0, 1.0}), DataError);
    CHECK_THROWS_AS(data::generate_synthetic(data::SyntheticConfig{8, 1, 0, 0.0, 0.0, 1.0}), DataError);
}

TEST_CASE("synthetic closures suppress flow for at least three hours") {
    data::SyntheticConfig clean_cfg;
    clean_cfg.n = 6;
    clean_cfg.days = 2;
    clean_cfg.seed = 21;
    clean_cfg.closure_rate = 0.0;
    clean_cfg.noise_sigma = 0.0;
    clean_cfg.weekend_factor = 1.0;
    auto clean = data::generate_synthetic(clean_cfg);

    auto closed_cfg = clean_cfg;
    closed_cfg.closure_rate = 1.0;
    auto closed = data::generate_synthetic(closed_cfg);

    for (std::size_t i = 0; i < clean_cfg.n; ++i) {
        for (std::size_t day = 0; day < clean_cfg.days; ++day) {
            int best_run = 0, run = 0;
            for (std::size_t t = day * 288; t < (day + 1) * 288; ++t) {
                const bool suppressed = clean.table.at(i, t) > 1.0 &&
                                        closed.table.at(i, t) <= 0.1 * clean.table.at(i, t);
                run = suppressed ? run + 1 : 0;
                best_run = std::max(best_run, run);
            }
            CHECK(best_run >= 36);  // 3 hours of 5-minute intervals
        }
    }
}

TEST_CASE("nearest sensed neighbor") {
    // path graph 0-1-2-3-4, sensed {0,4}
    data::RoadGraph g;
    g.n_locations = 5;
    g.adjacency = Mat(5, 5);
    for (int i = 0; i < 4; ++i) {
        g.adjacency.at(i, i + 1) = 1.0;
        g.adjacency.at(i + 1, i) = 1.0;
    }
    data::SensingPartition p{{0, 4}, {1, 2, 3}};
    auto nn = data::nearest_sensed(g, p);
    REQUIRE(nn.size() == 3);
    CHECK(nn[0] == 0);  // loc 1 -> 0
    CHECK(nn[1] == 0);  // loc 2 ties at distance 2 -> smaller id
    CHECK(nn[2] == 4);  // loc 3 -> 4
}
