#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "stps/metrics.hpp"

using namespace stps;
using metrics::Kind;

TEST_CASE("metric_at hand cases") {
    std::vector<double> truth{1, 2, 3}, pred{2, 4, 3};
    CHECK(*metrics::metric_at(Kind::MAE, truth, truth) == 0.0);
    CHECK(*metrics::metric_at(Kind::RMSE, truth, truth) == 0.0);
    CHECK(*metrics::metric_at(Kind::MAPE, truth, truth) == 0.0);

    CHECK(*metrics::metric_at(Kind::MAE, truth, pred) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*metrics::metric_at(Kind::RMSE, truth, pred) ==
          doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-12));
    CHECK(*metrics::metric_at(Kind::MAPE, truth, pred) ==
          doctest::Approx(100.0 * (1.0 + 1.0 + 0.0) / 3.0).epsilon(1e-12));

    std::vector<double> t2{0, 2}, p2{1, 2};
    CHECK(*metrics::metric_at(Kind::MAPE, t2, p2) == 0.0);  // single unmasked entry, exact

    std::vector<double> all_masked{0, 0.5}, any{1, 2};
    CHECK_FALSE(metrics::metric_at(Kind::MAPE, all_masked, any).has_value());

    CHECK_THROWS_AS(metrics::metric_at(Kind::MAE, truth, t2), std::invalid_argument);
}

TEST_CASE("build_report perfect prediction") {
    Mat truth(3, 5, 7.0);
    auto report = metrics::build_report(truth, truth);
    CHECK(report.avg_mae == 0.0);
    CHECK(report.avg_rmse == 0.0);
    CHECK(*report.avg_mape == 0.0);
    CHECK(report.masked_count == 0);
    for (const auto& h : report.per_horizon) {
        CHECK(h.mae == 0.0);
        CHECK(h.rmse == 0.0);
        CHECK(*h.mape == 0.0);
    }
    for (double r : report.row_mae) CHECK(r == 0.0);
    CHECK_THROWS_AS(metrics::build_report(truth, Mat(3, 4)), std::invalid_argument);
}

TEST_CASE("report matches brute-force recomputation within 1e-9") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> uni(0.0, 50.0);
    Mat truth(6, 24), pred(6, 24);
    for (double& v : truth.v) v = uni(rng);
    for (double& v : pred.v) v = uni(rng);
    auto report = metrics::build_report(truth, pred);

    double sum_mae = 0.0, sum_rmse = 0.0;
    for (std::size_t j = 0; j < 24; ++j) {
        double abs_sum = 0.0, sq_sum = 0.0;
        for (std::size_t r = 0; r < 6; ++r) {
            const double d = pred.at(r, j) - truth.at(r, j);
            abs_sum += std::abs(d);
            sq_sum += d * d;
        }
        const double mae = abs_sum / 6.0;
        const double rmse = std::sqrt(sq_sum / 6.0);
        CHECK(report.per_horizon[j].mae == doctest::Approx(mae).epsilon(1e-9));
        CHECK(report.per_horizon[j].rmse == doctest::Approx(rmse).epsilon(1e-9));
        CHECK(report.per_horizon[j].rmse >= report.per_horizon[j].mae);  // power-mean inequality
        sum_mae += mae;
        sum_rmse += rmse;
    }
    CHECK(report.avg_mae == doctest::Approx(sum_mae / 24.0).epsilon(1e-9));
    CHECK(report.avg_rmse == doctest::Approx(sum_rmse / 24.0).epsilon(1e-9));
    CHECK(report.slice_horizons == std::vector<std::size_t>{12, 24});

    Mat truth96(2, 96), pred96(2, 96);
    for (double& v : truth96.v) v = uni(rng);
    for (double& v : pred96.v) v = uni(rng);
    CHECK(metrics::build_report(truth96, pred96).slice_horizons ==
          std::vector<std::size_t>{12, 24, 48, 96});
}

TEST_CASE("metrics are invariant to row permutation") {
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> uni(0.0, 30.0);
    Mat truth(5, 8), pred(5, 8);
    for (double& v : truth.v) v = uni(rng);
    for (double& v : pred.v) v = uni(rng);
    auto base = metrics::build_report(truth, pred);

    std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    Mat pt(5, 8), pp(5, 8);
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 8; ++c) {
            pt.at(r, c) = truth.at(perm[r], c);
            pp.at(r, c) = pred.at(perm[r], c);
        }
    auto permuted = metrics::build_report(pt, pp);
    CHECK(permuted.avg_mae == doctest::Approx(base.avg_mae).epsilon(1e-12));
    CHECK(permuted.avg_rmse == doctest::Approx(base.avg_rmse).epsilon(1e-12));
}

TEST_CASE("MAPE masking drops entries without changing the rest") {
    std::vector<double> truth{5, 0.2, 10}, pred{6, 100, 9};
    std::vector<double> truth2{5, 10}, pred2{6, 9};
    CHECK(*metrics::metric_at(Kind::MAPE, truth, pred) ==
          *metrics::metric_at(Kind::MAPE, truth2, pred2));
}

TEST_CASE("binned improvement") {
    std::mt19937_64 rng(47);
    std::uniform_real_distribution<double> uni(1.0, 40.0);
    Mat truth(40, 6), a(40, 6), b(40, 6);
    for (double& v : truth.v) v = uni(rng);
    for (double& v : a.v) v = uni(rng);

    SUBCASE("identical reports give all-zero bins") {
        auto ra = metrics::build_report(truth, a);
        auto bins = metrics::binned_improvement(ra, ra, 20);
        REQUIRE(bins.size() == 20);
        for (double v : bins) CHECK(v == 0.0);
    }

    SUBCASE("uniformly 10% closer predictions improve every bin by 10%") {
        for (std::size_t i = 0; i < a.v.size(); ++i) b.v[i] = truth.v[i] + 0.9 * (a.v[i] - truth.v[i]);
        auto ra = metrics::build_report(truth, a);
        auto rb = metrics::build_report(truth, b);
        for (double v : metrics::binned_improvement(ra, rb, 20))
            CHECK(v == doctest::Approx(10.0).epsilon(1e-9));
    }

    SUBCASE("random case matches a brute-force oracle") {
        for (double& v : b.v) v = uni(rng);
        auto ra = metrics::build_report(truth, a);
        auto rb = metrics::build_report(truth, b);
        const std::size_t bins = 5;
        auto got = metrics::binned_improvement(ra, rb, bins);

        // independent re-sort and binning
        std::vector<std::size_t> order(40);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t x, std::size_t y) { return ra.row_mae[x] > ra.row_mae[y]; });
        for (std::size_t k = 0; k < bins; ++k) {
            double ma = 0.0, mb = 0.0;
            for (std::size_t i = k * 8; i < (k + 1) * 8; ++i) {
                ma += ra.row_mae[order[i]];
                mb += rb.row_mae[order[i]];
            }
            CHECK(got[k] == doctest::Approx(100.0 * (ma - mb) / ma).epsilon(1e-9));
        }
    }

    SUBCASE("mismatched sample sets error") {
        auto ra = metrics::build_report(truth, a);
        Mat small(10, 6, 1.0);
        auto rs = metrics::build_report(small, small);
        CHECK_THROWS_AS(metrics::binned_improvement(ra, rs, 20), std::invalid_argument);
    }
}

TEST_CASE("CSV serialization carries per-horizon rows and an avg row") {
    Mat truth(2, 3), pred(2, 3);
    truth.v = {1, 2, 3, 4, 5, 6};
    pred.v = {2, 2, 3, 4, 5, 8};
    auto report = metrics::build_report(truth, pred);
    std::ostringstream out;
    metrics::write_report_csv(report, out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "horizon_interval,mae,rmse,mape,masked_count");
    std::vector<std::string> rows;
    while (std::getline(in, line)) rows.push_back(line);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].substr(0, 2) == "1,");
    CHECK(rows[3].substr(0, 4) == "avg,");
}
