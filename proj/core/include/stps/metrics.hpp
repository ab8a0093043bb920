#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "stps/common.hpp"

namespace stps::metrics {

enum class Kind { MAE, RMSE, MAPE };

// MAPE entries with |truth| < 1.0 vehicle/interval are masked; a fully masked
// horizon reports an absent MAPE rather than 0.
struct HorizonMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> mape;
    std::size_t masked_count = 0;
};

struct MetricsReport {
    std::vector<HorizonMetrics> per_horizon;  // one entry per output interval
    double avg_mae = 0.0;
    double avg_rmse = 0.0;
    std::optional<double> avg_mape;
    std::size_t masked_count = 0;
    std::vector<std::size_t> slice_horizons;  // 12/24/48/96 clipped to l'
    std::vector<double> row_mae;              // per-forecast (row) MAE over all horizons
};

std::optional<double> metric_at(Kind kind, const std::vector<double>& truth,
                                const std::vector<double>& pred);

MetricsReport build_report(const Mat& truth, const Mat& pred);

// Fig-8-style analysis: sort a's forecasts by descending row MAE, cut into
// `bins` groups, report 100*(mean_a - mean_b)/mean_a per group using b's MAE
// on the same membership.
std::vector<double> binned_improvement(const MetricsReport& a, const MetricsReport& b,
                                       std::size_t bins = 20);

// horizon_interval,mae,rmse,mape,masked_count rows plus a trailing "avg" row.
void write_report_csv(const MetricsReport& report, std::ostream& out);
void write_report_csv(const MetricsReport& report, const std::string& path);

}  // namespace stps::metrics
