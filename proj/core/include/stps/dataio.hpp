#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "stps/common.hpp"

namespace stps::data {

// Measured flow rates over locations x 5-minute intervals.
// values is location-major: values[loc * n_intervals + t].
struct TrafficTable {
    std::size_t n_locations = 0;
    std::size_t n_intervals = 0;
    std::vector<double> values;
    std::int64_t start_epoch = 0;  // unix seconds of interval 0
    static constexpr int interval_minutes = 5;

    double at(std::size_t loc, std::size_t t) const { return values[loc * n_intervals + t]; }
    double& at(std::size_t loc, std::size_t t) { return values[loc * n_intervals + t]; }
};

struct RoadGraph {
    std::size_t n_locations = 0;
    Mat adjacency;  // n x n, symmetric, zero diagonal, entries in {0,1}
};

struct SensingPartition {
    std::vector<int> sensed;    // M
    std::vector<int> unsensed;  // M'
};

struct Normalizer {
    double mean = 0.0;
    double std = 1.0;
    double forward(double x) const { return (x - mean) / std; }
    double inverse(double x) const { return x * std + mean; }
};

// One training/inference instance: the four blocks of the 2x2 time/location
// layout plus calendar indices of the first interval of T and of T'.
struct WindowSample {
    Mat x_M_T;    // m x l
    Mat x_Mp_T;   // m' x l
    Mat x_M_Tp;   // m x l'
    Mat x_Mp_Tp;  // m' x l'
    int tod_index = 0;   // [0,288), first interval of T
    int dow_index = 0;   // [0,7), Monday = 0
    int todp_index = 0;  // first interval of T'
    int dowp_index = 0;
};

struct Split {
    TrafficTable train, val, test;
};

TrafficTable load_traffic_table(const std::string& path);
void save_traffic_table(const TrafficTable& table, const std::string& path);

RoadGraph load_adjacency(const std::string& path, std::size_t n);
void save_adjacency(const RoadGraph& graph, const std::string& path);

SensingPartition load_partition(const std::string& path, std::size_t n);
void save_partition(const SensingPartition& partition, const std::string& path);

// Z-score statistics from training-split values only (population std).
Normalizer fit_normalizer(const TrafficTable& train);

// Contiguous 3:1:1 split: floor(0.6 T), floor(0.2 T), remainder.
Split chronological_split(const TrafficTable& table);

std::vector<WindowSample> make_windows(const TrafficTable& table, const SensingPartition& partition,
                                       std::size_t l = 12, std::size_t l_prime = 96,
                                       std::size_t stride = 1);

enum class SelectMode { Random, Weighted };

// Pick m' unsensed locations. Random: uniform sample. Weighted: draw n-m'
// sensed locations sequentially, each with probability proportional to the
// location's mean flow rate among those not yet selected; the rest are
// unsensed. `table` should be the training split.
SensingPartition select_locations(const TrafficTable& table, const RoadGraph& graph, std::size_t m_prime,
                                  SelectMode mode, std::uint64_t seed);

// Add zero-mean Gaussian noise of the given variance, clipped at 0.
TrafficTable inject_noise(const TrafficTable& table, double variance, std::uint64_t seed);

struct SyntheticConfig {
    std::size_t n = 12;
    std::size_t days = 4;
    std::uint64_t seed = 0;
    double closure_rate = 0.0;   // per location-day probability of a closure block
    double noise_sigma = 2.0;
    double weekend_factor = 0.7; // weekday rate multiplier on Sat/Sun; 1 = none
};

struct SyntheticDataset {
    TrafficTable table;
    RoadGraph graph;
};

// Ring-plus-chords road graph with diurnal sinusoidal flow profiles,
// optional weekend damping, Gaussian noise, and random closure blocks.
SyntheticDataset generate_synthetic(const SyntheticConfig& config);

// For each unsensed location, the id of the nearest sensed location by BFS hop
// count over the road graph (ties broken by smallest id; unreachable falls
// back to the first sensed location).
std::vector<int> nearest_sensed(const RoadGraph& graph, const SensingPartition& partition);

// Calendar helpers (Monday = 0).
int tod_of_epoch(std::int64_t epoch);
int dow_of_epoch(std::int64_t epoch);
std::int64_t parse_iso8601(const std::string& text);
std::string format_iso8601(std::int64_t epoch);

}  // namespace stps::data
