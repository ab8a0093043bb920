#include "stps/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace stps::metrics {

std::optional<double> metric_at(Kind kind, const std::vector<double>& truth,
                                const std::vector<double>& pred) {
    if (truth.size() != pred.size())
        throw std::invalid_argument("metric_at: length mismatch " + std::to_string(truth.size()) +
                                    " vs " + std::to_string(pred.size()));
    if (truth.empty()) throw std::invalid_argument("metric_at: empty input");
    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double diff = pred[i] - truth[i];
        switch (kind) {
            case Kind::MAE:
                acc += std::abs(diff);
                ++used;
                break;
            case Kind::RMSE:
                acc += diff * diff;
                ++used;
                break;
            case Kind::MAPE:
                if (std::abs(truth[i]) >= 1.0) {
                    acc += std::abs(diff / truth[i]);
                    ++used;
                }
                break;
        }
    }
    if (used == 0) return std::nullopt;
    const double mean = acc / static_cast<double>(used);
    if (kind == Kind::RMSE) return std::sqrt(mean);
    if (kind == Kind::MAPE) return 100.0 * mean;
    return mean;
}

MetricsReport build_report(const Mat& truth, const Mat& pred) {
    if (truth.rows != pred.rows || truth.cols != pred.cols)
        throw std::invalid_argument("build_report: shape mismatch [" + std::to_string(truth.rows) + "x" +
                                    std::to_string(truth.cols) + "] vs [" + std::to_string(pred.rows) +
                                    "x" + std::to_string(pred.cols) + "]");
    MetricsReport report;
    report.per_horizon.resize(truth.cols);
    std::vector<double> t_col(truth.rows), p_col(truth.rows);
    double mape_acc = 0.0;
    std::size_t mape_defined = 0;
    for (std::size_t j = 0; j < truth.cols; ++j) {
        for (std::size_t r = 0; r < truth.rows; ++r) {
            t_col[r] = truth.at(r, j);
            p_col[r] = pred.at(r, j);
        }
        HorizonMetrics& h = report.per_horizon[j];
        h.mae = *metric_at(Kind::MAE, t_col, p_col);
        h.rmse = *metric_at(Kind::RMSE, t_col, p_col);
        h.mape = metric_at(Kind::MAPE, t_col, p_col);
        for (double t : t_col)
            if (std::abs(t) < 1.0) ++h.masked_count;
        report.avg_mae += h.mae;
        report.avg_rmse += h.rmse;
        report.masked_count += h.masked_count;
        if (h.mape) {
            mape_acc += *h.mape;
            ++mape_defined;
        }
    }
    report.avg_mae /= static_cast<double>(truth.cols);
    report.avg_rmse /= static_cast<double>(truth.cols);
    if (mape_defined) report.avg_mape = mape_acc / static_cast<double>(mape_defined);

    for (std::size_t h : {std::size_t{12}, std::size_t{24}, std::size_t{48}, std::size_t{96}})
        if (h <= truth.cols) report.slice_horizons.push_back(h);

    report.row_mae.resize(truth.rows);
    for (std::size_t r = 0; r < truth.rows; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < truth.cols; ++j) acc += std::abs(pred.at(r, j) - truth.at(r, j));
        report.row_mae[r] = acc / static_cast<double>(truth.cols);
    }
    return report;
}

std::vector<double> binned_improvement(const MetricsReport& a, const MetricsReport& b,
                                       std::size_t bins) {
    if (a.row_mae.size() != b.row_mae.size())
        throw std::invalid_argument("binned_improvement: mismatched sample sets (" +
                                    std::to_string(a.row_mae.size()) + " vs " +
                                    std::to_string(b.row_mae.size()) + ")");
    if (bins == 0 || a.row_mae.empty())
        throw std::invalid_argument("binned_improvement: need at least one bin and one sample");
    std::vector<std::size_t> order(a.row_mae.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a.row_mae[x] > a.row_mae[y]; });
    std::vector<double> out;
    const std::size_t n = order.size();
    for (std::size_t k = 0; k < bins; ++k) {
        const std::size_t lo = k * n / bins;
        const std::size_t hi = (k + 1) * n / bins;
        if (lo == hi) {
            out.push_back(0.0);
            continue;
        }
        double mean_a = 0.0, mean_b = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            mean_a += a.row_mae[order[i]];
            mean_b += b.row_mae[order[i]];
        }
        out.push_back(mean_a == 0.0 ? 0.0 : 100.0 * (mean_a - mean_b) / mean_a);
    }
    return out;
}

void write_report_csv(const MetricsReport& report, std::ostream& out) {
    out << "horizon_interval,mae,rmse,mape,masked_count\n";
    const auto row = [&](const std::string& label, double mae, double rmse,
                         const std::optional<double>& mape, std::size_t masked) {
        std::ostringstream line;
        line.precision(17);
        line << label << ',' << mae << ',' << rmse << ',';
        if (mape) line << *mape;
        line << ',' << masked << '\n';
        out << line.str();
    };
    for (std::size_t j = 0; j < report.per_horizon.size(); ++j) {
        const auto& h = report.per_horizon[j];
        row(std::to_string(j + 1), h.mae, h.rmse, h.mape, h.masked_count);
    }
    row("avg", report.avg_mae, report.avg_rmse, report.avg_mape, report.masked_count);
}

void write_report_csv(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write report '" + path + "'");
    write_report_csv(report, out);
}

}  // namespace stps::metrics
