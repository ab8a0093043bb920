#include "stps/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace stps::data {

namespace {

// Days since 1970-01-01 for a civil date (Howard Hinnant's algorithm).
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if (a % b != 0 && ((a < 0) != (b < 0))) --q;
    return q;
}

double mean_rate(const TrafficTable& t, std::size_t loc) {
    double s = 0.0;
    for (std::size_t j = 0; j < t.n_intervals; ++j) s += t.at(loc, j);
    return s / static_cast<double>(t.n_intervals);
}

}  // namespace

std::int64_t parse_iso8601(const std::string& text) {
    int y, mo, d, h, mi, s;
    if (std::sscanf(text.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &s) != 6 &&
        std::sscanf(text.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi, &s) != 6)
        throw DataError("cannot parse timestamp '" + text + "' as ISO-8601");
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_iso8601(std::int64_t epoch) {
    const std::int64_t days = floor_div(epoch, 86400);
    std::int64_t rem = epoch - days * 86400;
    int y, m, d;
    civil_from_days(days, y, m, d);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02lld:%02lld:%02lld", y, m, d,
                  static_cast<long long>(rem / 3600), static_cast<long long>((rem / 60) % 60),
                  static_cast<long long>(rem % 60));
    return buf;
}

int tod_of_epoch(std::int64_t epoch) {
    const std::int64_t sec = epoch - floor_div(epoch, 86400) * 86400;
    return static_cast<int>(sec / 300);
}

int dow_of_epoch(std::int64_t epoch) {
    // 1970-01-01 was a Thursday; Monday = 0.
    const std::int64_t days = floor_div(epoch, 86400);
    return static_cast<int>(((days + 3) % 7 + 7) % 7);
}

TrafficTable load_traffic_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open traffic table '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty traffic table '" + path + "'");
    // Header: timestamp,loc_0,...,loc_{n-1}
    std::size_t n = 0;
    for (char c : line)
        if (c == ',') ++n;
    if (n == 0) throw DataError(path + ":1: header must name at least one location column");

    TrafficTable table;
    table.n_locations = n;
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        if (!std::getline(ss, cell, ',')) throw DataError(path + ":" + std::to_string(line_no) + ": empty row");
        const std::int64_t epoch = parse_iso8601(cell);
        if (first) {
            table.start_epoch = epoch;
            first = false;
        }
        std::vector<double> row;
        row.reserve(n);
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t pos = 0;
                row.push_back(std::stod(cell, &pos));
                if (pos != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw DataError(path + ":" + std::to_string(line_no) + ": non-numeric cell '" + cell + "'");
            }
        }
        if (row.size() != n)
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(n) +
                            " values, got " + std::to_string(row.size()));
        for (double v : row)
            if (!std::isfinite(v))
                throw DataError(path + ":" + std::to_string(line_no) + ": non-finite flow rate");
        rows.push_back(std::move(row));
    }
    table.n_intervals = rows.size();
    table.values.resize(n * rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t i = 0; i < n; ++i) table.at(i, t) = rows[t][i];
    return table;
}

void save_traffic_table(const TrafficTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write traffic table '" + path + "'");
    out << "timestamp";
    for (std::size_t i = 0; i < table.n_locations; ++i) out << ",loc_" << i;
    out << "\n";
    char buf[32];
    for (std::size_t t = 0; t < table.n_intervals; ++t) {
        out << format_iso8601(table.start_epoch + static_cast<std::int64_t>(t) * 300);
        for (std::size_t i = 0; i < table.n_locations; ++i) {
            std::snprintf(buf, sizeof(buf), "%.10g", table.at(i, t));
            out << ',' << buf;
        }
        out << "\n";
    }
}

RoadGraph load_adjacency(const std::string& path, std::size_t n) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open adjacency '" + path + "'");
    RoadGraph g;
    g.n_locations = n;
    g.adjacency = Mat(n, n);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        long i, j;
        if (std::sscanf(line.c_str(), "%ld,%ld", &i, &j) != 2)
            throw DataError(path + ":" + std::to_string(line_no) + ": expected 'i,j' edge");
        if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= n || static_cast<std::size_t>(j) >= n)
            throw DataError(path + ":" + std::to_string(line_no) + ": edge endpoint out of range for n=" +
                            std::to_string(n));
        if (i == j) continue;  // no self loops
        g.adjacency.at(i, j) = 1.0;
        g.adjacency.at(j, i) = 1.0;  // symmetrize: max(A, A^T)
    }
    return g;
}

void save_adjacency(const RoadGraph& graph, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write adjacency '" + path + "'");
    const std::size_t n = graph.n_locations;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (graph.adjacency.at(i, j) != 0.0) out << i << ',' << j << "\n";
}

namespace {
std::vector<int> parse_index_line(const std::string& line, const std::string& tag, std::size_t n,
                                  const std::string& path) {
    const auto colon = line.find(':');
    if (colon == std::string::npos || line.substr(0, colon) != tag)
        throw DataError(path + ": expected line starting with '" + tag + ":'");
    std::vector<int> out;
    std::stringstream ss(line.substr(colon + 1));
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        cell.erase(std::remove(cell.begin(), cell.end(), ' '), cell.end());
        if (cell.empty()) continue;
        const int idx = std::stoi(cell);
        if (idx < 0 || static_cast<std::size_t>(idx) >= n)
            throw DataError(path + ": index " + std::to_string(idx) + " out of range for n=" +
                            std::to_string(n));
        out.push_back(idx);
    }
    return out;
}
}  // namespace

SensingPartition load_partition(const std::string& path, std::size_t n) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open partition '" + path + "'");
    std::string l1, l2;
    if (!std::getline(in, l1) || !std::getline(in, l2))
        throw DataError(path + ": partition file needs two lines");
    SensingPartition p;
    p.sensed = parse_index_line(l1, "sensed", n, path);
    p.unsensed = parse_index_line(l2, "unsensed", n, path);
    if (p.sensed.empty() || p.unsensed.empty())
        throw DataError(path + ": both sensed and unsensed sets must be non-empty");
    std::vector<bool> seen(n, false);
    for (int i : p.sensed) seen[i] = true;
    for (int i : p.unsensed) {
        if (seen[i]) throw DataError(path + ": index " + std::to_string(i) + " in both sets");
        seen[i] = true;
    }
    if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }))
        throw DataError(path + ": sensed and unsensed sets must cover 0.." + std::to_string(n - 1));
    return p;
}

void save_partition(const SensingPartition& partition, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write partition '" + path + "'");
    out << "sensed: ";
    for (std::size_t i = 0; i < partition.sensed.size(); ++i)
        out << (i ? "," : "") << partition.sensed[i];
    out << "\nunsensed: ";
    for (std::size_t i = 0; i < partition.unsensed.size(); ++i)
        out << (i ? "," : "") << partition.unsensed[i];
    out << "\n";
}

Normalizer fit_normalizer(const TrafficTable& train) {
    if (train.values.empty()) throw DataError("fit_normalizer: empty training split");
    const double n = static_cast<double>(train.values.size());
    double mean = std::accumulate(train.values.begin(), train.values.end(), 0.0) / n;
    double var = 0.0;
    for (double v : train.values) var += (v - mean) * (v - mean);
    var /= n;  // population variance
    if (var == 0.0) throw DataError("fit_normalizer: degenerate (constant) training data");
    return Normalizer{mean, std::sqrt(var)};
}

namespace {
TrafficTable slice_table(const TrafficTable& t, std::size_t begin, std::size_t count) {
    TrafficTable out;
    out.n_locations = t.n_locations;
    out.n_intervals = count;
    out.start_epoch = t.start_epoch + static_cast<std::int64_t>(begin) * 300;
    out.values.resize(t.n_locations * count);
    for (std::size_t i = 0; i < t.n_locations; ++i)
        for (std::size_t j = 0; j < count; ++j) out.at(i, j) = t.at(i, begin + j);
    return out;
}
}  // namespace

Split chronological_split(const TrafficTable& table) {
    const std::size_t total = table.n_intervals;
    const std::size_t n_train = (total * 3) / 5;  // floor(0.6 T)
    const std::size_t n_val = total / 5;          // floor(0.2 T)
    const std::size_t n_test = total - n_train - n_val;
    if (n_train == 0 || n_val == 0 || n_test == 0)
        throw DataError("chronological_split: table too short (" + std::to_string(total) + " intervals)");
    return Split{slice_table(table, 0, n_train), slice_table(table, n_train, n_val),
                 slice_table(table, n_train + n_val, n_test)};
}

std::vector<WindowSample> make_windows(const TrafficTable& table, const SensingPartition& partition,
                                       std::size_t l, std::size_t l_prime, std::size_t stride) {
    std::vector<WindowSample> out;
    if (table.n_intervals < l + l_prime) return out;  // too short: empty, not an error
    const std::size_t count = table.n_intervals - l - l_prime;
    for (std::size_t start = 0; start <= count; start += stride) {
        WindowSample w;
        const auto fill = [&](Mat& m, const std::vector<int>& locs, std::size_t t0, std::size_t len) {
            m = Mat(locs.size(), len);
            for (std::size_t r = 0; r < locs.size(); ++r)
                for (std::size_t c = 0; c < len; ++c) m.at(r, c) = table.at(locs[r], t0 + c);
        };
        fill(w.x_M_T, partition.sensed, start, l);
        fill(w.x_Mp_T, partition.unsensed, start, l);
        fill(w.x_M_Tp, partition.sensed, start + l, l_prime);
        fill(w.x_Mp_Tp, partition.unsensed, start + l, l_prime);
        const std::int64_t t_epoch = table.start_epoch + static_cast<std::int64_t>(start) * 300;
        const std::int64_t tp_epoch = t_epoch + static_cast<std::int64_t>(l) * 300;
        w.tod_index = tod_of_epoch(t_epoch);
        w.dow_index = dow_of_epoch(t_epoch);
        w.todp_index = tod_of_epoch(tp_epoch);
        w.dowp_index = dow_of_epoch(tp_epoch);
        out.push_back(std::move(w));
    }
    return out;
}

SensingPartition select_locations(const TrafficTable& table, const RoadGraph& graph, std::size_t m_prime,
                                  SelectMode mode, std::uint64_t seed) {
    const std::size_t n = table.n_locations;
    (void)graph;
    if (m_prime == 0 || m_prime >= n)
        throw DataError("select_locations: m' must satisfy 0 < m' < n, got m'=" + std::to_string(m_prime) +
                        ", n=" + std::to_string(n));
    std::mt19937_64 rng(seed);
    SensingPartition p;
    if (mode == SelectMode::Random) {
        std::vector<int> all(n);
        std::iota(all.begin(), all.end(), 0);
        // Fisher-Yates prefix of size m' picks the unsensed set uniformly.
        for (std::size_t i = 0; i < m_prime; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, n - 1);
            std::swap(all[i], all[pick(rng)]);
        }
        p.unsensed.assign(all.begin(), all.begin() + m_prime);
        p.sensed.assign(all.begin() + m_prime, all.end());
    } else {
        std::vector<double> rate(n);
        for (std::size_t i = 0; i < n; ++i) rate[i] = mean_rate(table, i);
        std::vector<int> remaining(n);
        std::iota(remaining.begin(), remaining.end(), 0);
        const std::size_t n_sensed = n - m_prime;
        for (std::size_t k = 0; k < n_sensed; ++k) {
            double total = 0.0;
            for (int i : remaining) total += rate[i];
            std::size_t chosen = 0;
            if (total <= 0.0) {
                std::uniform_int_distribution<std::size_t> pick(0, remaining.size() - 1);
                chosen = pick(rng);
            } else {
                std::uniform_real_distribution<double> uni(0.0, total);
                double r = uni(rng);
                for (std::size_t i = 0; i < remaining.size(); ++i) {
                    r -= rate[remaining[i]];
                    if (r <= 0.0) {
                        chosen = i;
                        break;
                    }
                    if (i + 1 == remaining.size()) chosen = i;
                }
            }
            p.sensed.push_back(remaining[chosen]);
            remaining.erase(remaining.begin() + chosen);
        }
        p.unsensed = remaining;
    }
    std::sort(p.sensed.begin(), p.sensed.end());
    std::sort(p.unsensed.begin(), p.unsensed.end());
    return p;
}

TrafficTable inject_noise(const TrafficTable& table, double variance, std::uint64_t seed) {
    if (variance < 0.0) throw DataError("inject_noise: negative variance");
    TrafficTable out = table;
    if (variance == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, std::sqrt(variance));
    for (double& v : out.values) v = std::max(0.0, v + noise(rng));
    return out;
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
    const std::size_t n = config.n;
    if (n < 4) throw DataError("generate_synthetic: need n >= 4");
    if (config.days < 2) throw DataError("generate_synthetic: need days >= 2");
    if (config.closure_rate < 0.0 || config.closure_rate > 1.0)
        throw DataError("generate_synthetic: closure_rate must be in [0,1]");
    std::mt19937_64 rng(config.seed);

    SyntheticDataset out;
    out.graph.n_locations = n;
    out.graph.adjacency = Mat(n, n);
    const auto connect = [&](std::size_t i, std::size_t j) {
        if (i == j) return;
        out.graph.adjacency.at(i, j) = 1.0;
        out.graph.adjacency.at(j, i) = 1.0;
    };
    for (std::size_t i = 0; i < n; ++i) connect(i, (i + 1) % n);
    const std::size_t n_chords = n / 4;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t c = 0; c < n_chords; ++c) connect(pick(rng), pick(rng));

    const std::size_t intervals = config.days * 288;
    out.table.n_locations = n;
    out.table.n_intervals = intervals;
    out.table.start_epoch = parse_iso8601("2024-01-01T00:00:00");  // a Monday
    out.table.values.resize(n * intervals);

    std::uniform_real_distribution<double> base_d(20.0, 160.0);
    std::uniform_real_distribution<double> amp_d(60.0, 160.0);
    std::uniform_real_distribution<double> phase_d(-0.15, 0.15);
    std::vector<double> base(n), amp(n), phase(n);
    for (std::size_t i = 0; i < n; ++i) {
        base[i] = base_d(rng);
        amp[i] = amp_d(rng);
        phase[i] = phase_d(rng);
    }

    constexpr double two_pi = 6.283185307179586;
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < intervals; ++t) {
            const double frac = static_cast<double>(t % 288) / 288.0;
            const int dow = dow_of_epoch(out.table.start_epoch + static_cast<std::int64_t>(t) * 300);
            const double day_factor = (dow >= 5) ? config.weekend_factor : 1.0;
            // Peak around midday, zero flow deep at night.
            double v = base[i] + amp[i] * std::max(0.0, std::sin(two_pi * (frac + phase[i]) - 1.5707963267948966)) *
                                     day_factor;
            if (config.noise_sigma > 0.0) v += config.noise_sigma * noise(rng);
            out.table.at(i, t) = std::max(0.0, v);
        }
    }

    // Closures: contiguous 3-6 hour block scaled by a factor in [0, 0.1].
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::uniform_int_distribution<int> block_len(36, 72);
    std::uniform_int_distribution<int> block_start(0, 287 - 72);
    std::uniform_real_distribution<double> factor_d(0.0, 0.1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t day = 0; day < config.days; ++day) {
            if (uni(rng) >= config.closure_rate) continue;
            const int start = block_start(rng);
            const int len = block_len(rng);
            const double factor = factor_d(rng);
            for (int t = start; t < start + len; ++t) out.table.at(i, day * 288 + t) *= factor;
        }
    }
    return out;
}

std::vector<int> nearest_sensed(const RoadGraph& graph, const SensingPartition& partition) {
    const std::size_t n = graph.n_locations;
    std::vector<bool> is_sensed(n, false);
    for (int i : partition.sensed) is_sensed[i] = true;
    std::vector<int> out;
    out.reserve(partition.unsensed.size());
    for (int u : partition.unsensed) {
        std::vector<int> dist(n, -1);
        std::vector<int> queue{u};
        dist[u] = 0;
        for (std::size_t head = 0; head < queue.size(); ++head) {
            const int cur = queue[head];
            for (std::size_t v = 0; v < n; ++v) {
                if (graph.adjacency.at(cur, v) == 0.0 || dist[v] >= 0) continue;
                dist[v] = dist[cur] + 1;
                queue.push_back(static_cast<int>(v));
            }
        }
        int best = partition.sensed.front();
        int best_dist = -1;
        for (int s : partition.sensed) {
            if (dist[s] < 0) continue;
            if (best_dist < 0 || dist[s] < best_dist || (dist[s] == best_dist && s < best)) {
                best = s;
                best_dist = dist[s];
            }
        }
        out.push_back(best);
    }
    return out;
}

}  // namespace stps::data
