#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stps/dataio.hpp"
#include "stps/metrics.hpp"
#include "stps/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int log_level() {
    static int level = [] {
        const char* env = std::getenv("STPS_LOG");
        if (!env) return 1;
        const std::string s = env;
        if (s == "debug") return 0;
        if (s == "info") return 1;
        if (s == "warn") return 2;
        if (s == "error") return 3;
        return 1;
    }();
    return level;
}

void log_msg(int level, const std::string& msg) {
    static const char* names[] = {"debug", "info", "warn", "error"};
    if (level >= log_level()) std::cerr << "[" << names[level] << "] " << msg << "\n";
}

// Overlay file values under the defaults, then mark which flags the user set
// so they can override the file afterwards.
void apply_config_file(const std::string& path, json& cfg) {
    std::ifstream in(path);
    if (!in) throw stps::DataError("cannot open config file '" + path + "'");
    json file;
    try {
        in >> file;
    } catch (const json::exception& e) {
        throw stps::DataError("config '" + path + "': " + e.what());
    }
    for (const auto& [key, value] : file.items()) {
        if (key == "command") continue;
        if (!cfg.contains(key)) throw stps::DataError("config '" + path + "': unknown key '" + key + "'");
        if (cfg[key].is_object()) {
            for (const auto& [k2, v2] : value.items()) {
                if (!cfg[key].contains(k2))
                    throw stps::DataError("config '" + path + "': unknown key '" + key + "." + k2 + "'");
                cfg[key][k2] = v2;
            }
        } else {
            cfg[key] = value;
        }
    }
}

void echo_config(const json& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "config.json");
    if (!out) throw stps::DataError("cannot write config echo in '" + out_dir + "'");
    out << cfg.dump(2) << "\n";
}

stps::data::SelectMode parse_mode(const std::string& mode) {
    if (mode == "random") return stps::data::SelectMode::Random;
    if (mode == "weighted") return stps::data::SelectMode::Weighted;
    throw CLI::ValidationError("--select", "mode must be 'random' or 'weighted'");
}

void apply_ablation(stps::model::ModelConfig& mc, const std::string& ablation) {
    if (ablation.empty() || ablation == "none") return;
    if (ablation == "one-step") mc.one_step = true;
    else if (ablation == "two-step") mc.two_step = true;
    else if (ablation == "plain-transfer") mc.plain_transfer = true;
    else if (ablation == "no-transfer") mc.no_transfer = true;
    else if (ablation == "no-rank") mc.no_rank = true;
    else throw CLI::ValidationError("--ablation", "unknown ablation '" + ablation + "'");
}

stps::data::SyntheticConfig synth_from_json(const json& j) {
    stps::data::SyntheticConfig sc;
    sc.n = j.at("n");
    sc.days = j.at("days");
    sc.seed = j.at("seed");
    sc.closure_rate = j.at("closure_rate");
    sc.noise_sigma = j.at("noise_sigma");
    sc.weekend_factor = j.at("weekend_factor");
    return sc;
}

stps::model::ModelConfig model_from_json(const json& j) {
    stps::model::ModelConfig mc;
    mc.l = j.at("l");
    mc.l_prime = j.at("l_prime");
    mc.d = j.at("d");
    mc.alpha = j.at("alpha");
    mc.dropout = j.at("dropout");
    mc.lr = j.at("lr");
    mc.weight_decay = j.at("weight_decay");
    mc.batch = j.at("batch");
    mc.epochs_per_stage = j.at("epochs");
    mc.patience = j.at("patience");
    mc.seed = j.at("seed");
    apply_ablation(mc, j.at("ablation"));
    return mc;
}

struct Dataset {
    stps::data::TrafficTable table;
    stps::data::RoadGraph graph;
};

Dataset resolve_dataset(const json& cfg, const std::string& out_dir) {
    Dataset ds;
    if (!cfg.at("synthetic").is_null() && cfg.at("synthetic").at("n").get<std::size_t>() > 0) {
        auto gen = stps::data::generate_synthetic(synth_from_json(cfg.at("synthetic")));
        ds.table = std::move(gen.table);
        ds.graph = std::move(gen.graph);
        stps::data::save_traffic_table(ds.table, (fs::path(out_dir) / "traffic.csv").string());
        stps::data::save_adjacency(ds.graph, (fs::path(out_dir) / "adjacency.csv").string());
        log_msg(1, "generated synthetic dataset: n=" + std::to_string(ds.table.n_locations) + ", " +
                       std::to_string(ds.table.n_intervals) + " intervals");
    } else {
        const std::string data = cfg.at("data");
        const std::string adjacency = cfg.at("adjacency");
        if (data.empty()) throw stps::DataError("no dataset: provide --data or --synthetic");
        if (adjacency.empty()) throw stps::DataError("no adjacency: provide --adjacency");
        ds.table = stps::data::load_traffic_table(data);
        ds.graph = stps::data::load_adjacency(adjacency, ds.table.n_locations);
    }
    return ds;
}

void write_losses_csv(const std::vector<stps::model::TrainLog>& logs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw stps::DataError("cannot write '" + path + "'");
    out << "stage,epoch,train_mae,val_mae\n";
    out.precision(17);
    for (const auto& log : logs)
        for (std::size_t e = 0; e < log.train_mae.size(); ++e)
            out << log.stage << ',' << e << ',' << log.train_mae[e] << ',' << log.val_mae[e] << "\n";
}

void write_svg(const std::vector<double>& rmse, const std::string& path) {
    const double w = 640, h = 360, pad = 48;
    double top = 0.0;
    for (double v : rmse) top = std::max(top, v);
    if (top <= 0.0) top = 1.0;
    std::ofstream out(path);
    if (!out) throw stps::DataError("cannot write '" + path + "'");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << w - pad << "\" y2=\"" << h - pad
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << h - pad
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << w / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">horizon (intervals)</text>\n";
    out << "<text x=\"16\" y=\"" << h / 2 << "\" transform=\"rotate(-90 16 " << h / 2
        << ")\" text-anchor=\"middle\">RMSE</text>\n";
    out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
    for (std::size_t j = 0; j < rmse.size(); ++j) {
        const double x = pad + (w - 2 * pad) * (rmse.size() == 1 ? 0.5 : static_cast<double>(j) /
                                                                            (rmse.size() - 1));
        const double y = h - pad - (h - 2 * pad) * (rmse[j] / top);
        out << x << ',' << y << ' ';
    }
    out << "\"/>\n</svg>\n";
}

int cmd_synth(const json& cfg) {
    const std::string out_dir = cfg.at("out");
    fs::create_directories(out_dir);
    auto ds = stps::data::generate_synthetic(synth_from_json(cfg.at("synthetic")));
    stps::data::save_traffic_table(ds.table, (fs::path(out_dir) / "traffic.csv").string());
    stps::data::save_adjacency(ds.graph, (fs::path(out_dir) / "adjacency.csv").string());
    echo_config(cfg, out_dir);
    log_msg(1, "wrote traffic.csv and adjacency.csv to " + out_dir);
    return 0;
}

int cmd_select(const json& cfg) {
    const std::string out_dir = cfg.at("out");
    fs::create_directories(out_dir);
    auto table = stps::data::load_traffic_table(cfg.at("data"));
    auto graph = stps::data::load_adjacency(cfg.at("adjacency"), table.n_locations);
    auto split = stps::data::chronological_split(table);
    auto partition = stps::data::select_locations(split.train, graph, cfg.at("m_prime"),
                                                  parse_mode(cfg.at("select")), cfg.at("seed"));
    stps::data::save_partition(partition, (fs::path(out_dir) / "partition.txt").string());
    echo_config(cfg, out_dir);
    return 0;
}

int cmd_train(const json& cfg) {
    const std::string out_dir = cfg.at("out");
    fs::create_directories(out_dir);
    Dataset ds = resolve_dataset(cfg, out_dir);

    auto split = stps::data::chronological_split(ds.table);
    stps::data::SensingPartition partition;
    const std::string partition_path = cfg.at("partition");
    if (!partition_path.empty()) {
        partition = stps::data::load_partition(partition_path, ds.table.n_locations);
    } else {
        partition = stps::data::select_locations(split.train, ds.graph, cfg.at("m_prime"),
                                                 parse_mode(cfg.at("select")), cfg.at("seed"));
        stps::data::save_partition(partition, (fs::path(out_dir) / "partition.txt").string());
    }

    const double noise_variance = cfg.at("noise_variance");
    if (noise_variance > 0.0)
        split.train = stps::data::inject_noise(split.train, noise_variance,
                                               cfg.at("seed").get<std::uint64_t>() ^ 0x6e6f697365ULL);
    auto normalizer = stps::data::fit_normalizer(split.train);

    stps::model::ModelConfig mc = model_from_json(cfg);
    auto train_windows = stps::data::make_windows(split.train, partition, mc.l, mc.l_prime);
    auto val_windows = stps::data::make_windows(split.val, partition, mc.l, mc.l_prime);
    if (train_windows.empty())
        throw stps::DataError("training split too short for l=" + std::to_string(mc.l) + ", l'=" +
                              std::to_string(mc.l_prime));
    if (val_windows.empty()) log_msg(2, "validation split too short; early stopping uses train MAE");
    log_msg(1, "training on " + std::to_string(train_windows.size()) + " windows, validating on " +
                   std::to_string(val_windows.size()));

    stps::model::StpsModel model(mc, ds.graph, partition, normalizer);
    auto logs = model.train_all(train_windows, val_windows);
    write_losses_csv(logs, (fs::path(out_dir) / "losses.csv").string());
    model.save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string());
    echo_config(cfg, out_dir);
    log_msg(1, "wrote checkpoint.bin to " + out_dir);
    return 0;
}

int cmd_evaluate(const json& cfg) {
    const std::string out_dir = cfg.at("out");
    fs::create_directories(out_dir);
    auto model = stps::model::StpsModel::load_checkpoint(cfg.at("checkpoint"));
    auto table = stps::data::load_traffic_table(cfg.at("data"));
    if (table.n_locations != model.graph().n_locations)
        throw stps::DataError("dataset has " + std::to_string(table.n_locations) +
                              " locations but checkpoint expects " +
                              std::to_string(model.graph().n_locations));
    auto split = stps::data::chronological_split(table);
    const auto& mc = model.config();
    auto windows = stps::data::make_windows(split.test, model.partition(), mc.l, mc.l_prime);
    if (windows.empty()) throw stps::DataError("test split too short for the checkpoint's window lengths");

    const std::size_t mp = model.partition().unsensed.size();
    stps::Mat truth(windows.size() * mp, mc.l_prime), pred(windows.size() * mp, mc.l_prime);
    for (std::size_t k = 0; k < windows.size(); ++k) {
        const auto& w = windows[k];
        stps::Mat p = model.infer(w.x_M_T, w.tod_index, w.dow_index, w.todp_index, w.dowp_index);
        for (std::size_t r = 0; r < mp; ++r)
            for (std::size_t c = 0; c < mc.l_prime; ++c) {
                truth.at(k * mp + r, c) = w.x_Mp_Tp.at(r, c);
                pred.at(k * mp + r, c) = p.at(r, c);
            }
    }
    auto report = stps::metrics::build_report(truth, pred);
    stps::metrics::write_report_csv(report, (fs::path(out_dir) / "metrics.csv").string());

    {
        std::ofstream out(fs::path(out_dir) / "slices.csv");
        out << "horizon_interval,hours,mae,rmse,mape,masked_count\n";
        out.precision(17);
        for (std::size_t hor : report.slice_horizons) {
            const auto& h = report.per_horizon[hor - 1];
            out << hor << ',' << hor / 12.0 << ',' << h.mae << ',' << h.rmse << ',';
            if (h.mape) out << *h.mape;
            out << ',' << h.masked_count << "\n";
        }
    }

    if (cfg.at("bins").get<bool>()) {
        // Nearest-sensed-neighbor copy baseline over the same windows.
        auto nearest = stps::data::nearest_sensed(model.graph(), model.partition());
        std::vector<std::size_t> sensed_row(model.graph().n_locations, 0);
        for (std::size_t i = 0; i < model.partition().sensed.size(); ++i)
            sensed_row[model.partition().sensed[i]] = i;
        stps::Mat base(windows.size() * mp, mc.l_prime);
        for (std::size_t k = 0; k < windows.size(); ++k)
            for (std::size_t r = 0; r < mp; ++r)
                for (std::size_t c = 0; c < mc.l_prime; ++c)
                    base.at(k * mp + r, c) = windows[k].x_M_Tp.at(sensed_row[nearest[r]], c);
        auto base_report = stps::metrics::build_report(truth, base);
        auto bins = stps::metrics::binned_improvement(base_report, report);
        std::ofstream out(fs::path(out_dir) / "bins.csv");
        out << "bin,improvement_pct\n";
        out.precision(17);
        for (std::size_t b = 0; b < bins.size(); ++b) out << b << ',' << bins[b] << "\n";
    }

    if (cfg.at("svg").get<bool>()) {
        std::vector<double> rmse;
        for (const auto& h : report.per_horizon) rmse.push_back(h.rmse);
        write_svg(rmse, (fs::path(out_dir) / "rmse_vs_horizon.svg").string());
    }
    echo_config(cfg, out_dir);
    return 0;
}

int cmd_forecast(const json& cfg) {
    const std::string out_dir = cfg.at("out");
    fs::create_directories(out_dir);
    auto model = stps::model::StpsModel::load_checkpoint(cfg.at("checkpoint"));
    auto table = stps::data::load_traffic_table(cfg.at("data"));
    if (table.n_locations != model.graph().n_locations)
        throw stps::DataError("dataset has " + std::to_string(table.n_locations) +
                              " locations but checkpoint expects " +
                              std::to_string(model.graph().n_locations));
    const auto& mc = model.config();
    if (table.n_intervals < mc.l)
        throw stps::DataError("need at least " + std::to_string(mc.l) + " intervals to forecast");
    const std::size_t start = table.n_intervals - mc.l;
    const auto& sensed = model.partition().sensed;
    stps::Mat x(sensed.size(), mc.l);
    for (std::size_t r = 0; r < sensed.size(); ++r)
        for (std::size_t c = 0; c < mc.l; ++c) x.at(r, c) = table.at(sensed[r], start + c);
    const std::int64_t t_epoch = table.start_epoch + static_cast<std::int64_t>(start) * 300;
    const std::int64_t tp_epoch = t_epoch + static_cast<std::int64_t>(mc.l) * 300;
    stps::Mat forecast = model.infer(x, stps::data::tod_of_epoch(t_epoch), stps::data::dow_of_epoch(t_epoch),
                                     stps::data::tod_of_epoch(tp_epoch), stps::data::dow_of_epoch(tp_epoch));

    std::ofstream out(fs::path(out_dir) / "forecast.csv");
    if (!out) throw stps::DataError("cannot write forecast in '" + out_dir + "'");
    out << "location";
    for (std::size_t c = 1; c <= mc.l_prime; ++c) out << ",t_plus_" << c;
    out << "\n";
    out.precision(17);
    for (std::size_t r = 0; r < forecast.rows; ++r) {
        out << "loc_" << model.partition().unsensed[r];
        for (std::size_t c = 0; c < forecast.cols; ++c) out << ',' << forecast.at(r, c);
        out << "\n";
    }
    echo_config(cfg, out_dir);
    return 0;
}

json synth_defaults() {
    return {{"n", 12},         {"days", 4},         {"seed", 0},
            {"closure_rate", 0.0}, {"noise_sigma", 2.0}, {"weekend_factor", 0.7}};
}

void parse_synth_kv(const std::vector<std::string>& kvs, json& synth) {
    for (const auto& kv : kvs) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--synthetic", "expected key=value, got '" + kv + "'");
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        if (!synth.contains(key))
            throw CLI::ValidationError("--synthetic", "unknown key '" + key + "'");
        try {
            synth[key] = json::parse(value);
        } catch (const json::exception&) {
            throw CLI::ValidationError("--synthetic", "cannot parse value '" + value + "'");
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"STPS partial-sensing traffic forecaster"};
    app.require_subcommand(1);

    std::string config_path, out_dir, data_path, adjacency_path, partition_path, checkpoint_path;
    std::string select_mode = "random", ablation;
    std::vector<std::string> synth_kv;
    std::uint64_t seed = 0;
    std::size_t n = 12, days = 4, m_prime = 0, d = 64, l = 12, l_prime = 96, batch = 64, epochs = 50,
                patience = 10;
    double closure_rate = 0.0, noise_sigma = 2.0, weekend_factor = 0.7, noise_variance = 0.0,
           alpha = 0.5, dropout = 0.15, lr = 1e-3, weight_decay = 1e-3;
    bool bins = false, svg = false;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--n", n, "locations");
    synth->add_option("--days", days, "days of 5-minute intervals");
    synth->add_option("--seed", seed, "generator seed");
    synth->add_option("--closure-rate", closure_rate, "closure probability per location-day");
    synth->add_option("--noise-sigma", noise_sigma, "measurement noise std");
    synth->add_option("--weekend-factor", weekend_factor, "weekend rate multiplier");
    synth->add_option("--config", config_path, "JSON config file");
    synth->add_option("--out", out_dir, "output directory");

    auto* select = app.add_subcommand("select", "pick sensed/unsensed locations");
    select->add_option("--data", data_path, "traffic CSV");
    select->add_option("--adjacency", adjacency_path, "edge-list CSV");
    select->add_option("--m-prime", m_prime, "number of unsensed locations");
    select->add_option("--select", select_mode, "random|weighted");
    select->add_option("--seed", seed, "selection seed");
    select->add_option("--config", config_path, "JSON config file");
    select->add_option("--out", out_dir, "output directory");

    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("--data", data_path, "traffic CSV");
    train->add_option("--adjacency", adjacency_path, "edge-list CSV");
    train->add_option("--partition", partition_path, "partition file");
    train->add_option("--synthetic", synth_kv, "generate data in-process (key=value ...)");
    train->add_option("--select", select_mode, "random|weighted (when no --partition)");
    train->add_option("--m-prime", m_prime, "unsensed count (when no --partition)");
    train->add_option("--ablation", ablation, "one-step|two-step|plain-transfer|no-transfer|no-rank");
    train->add_option("--noise-variance", noise_variance, "training-split Gaussian noise variance");
    train->add_option("--d", d, "embedding width");
    train->add_option("--l", l, "input window length");
    train->add_option("--l-prime", l_prime, "output window length");
    train->add_option("--alpha", alpha, "aggregation blend weight");
    train->add_option("--dropout", dropout, "dropout rate");
    train->add_option("--batch", batch, "minibatch size");
    train->add_option("--lr", lr, "learning rate");
    train->add_option("--weight-decay", weight_decay, "AdamW weight decay");
    train->add_option("--epochs", epochs, "epochs per stage");
    train->add_option("--patience", patience, "early-stopping patience");
    train->add_option("--seed", seed, "training seed");
    train->add_option("--config", config_path, "JSON config file");
    train->add_option("--out", out_dir, "output directory");

    auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on the test split");
    evaluate->add_option("--checkpoint", checkpoint_path, "checkpoint file");
    evaluate->add_option("--data", data_path, "traffic CSV");
    evaluate->add_flag("--bins", bins, "emit bin-wise improvement vs the neighbor baseline");
    evaluate->add_flag("--svg", svg, "emit RMSE-vs-horizon SVG");
    evaluate->add_option("--config", config_path, "JSON config file");
    evaluate->add_option("--out", out_dir, "output directory");

    auto* forecast = app.add_subcommand("forecast", "forecast from the latest sensed readings");
    forecast->add_option("--checkpoint", checkpoint_path, "checkpoint file");
    forecast->add_option("--data", data_path, "traffic CSV");
    forecast->add_option("--config", config_path, "JSON config file");
    forecast->add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);

        CLI::App* sub = app.get_subcommands().front();
        const auto set = [&](const std::string& flag) {
            const CLI::Option* opt = sub->get_option_no_throw(flag);
            return opt != nullptr && opt->count() > 0;
        };

        json cfg;
        if (sub == synth) {
            cfg = {{"command", "synth"}, {"synthetic", synth_defaults()}, {"out", ""}};
        } else if (sub == select) {
            cfg = {{"command", "select"}, {"data", ""}, {"adjacency", ""}, {"m_prime", 1},
                   {"select", "random"},  {"seed", 0},  {"out", ""}};
        } else if (sub == train) {
            cfg = {{"command", "train"},
                   {"data", ""},
                   {"adjacency", ""},
                   {"partition", ""},
                   {"synthetic", nullptr},
                   {"select", "random"},
                   {"m_prime", 1},
                   {"ablation", ""},
                   {"noise_variance", 0.0},
                   {"d", 64},
                   {"l", 12},
                   {"l_prime", 96},
                   {"alpha", 0.5},
                   {"dropout", 0.15},
                   {"batch", 64},
                   {"lr", 1e-3},
                   {"weight_decay", 1e-3},
                   {"epochs", 50},
                   {"patience", 10},
                   {"seed", 0},
                   {"out", ""}};
        } else if (sub == evaluate) {
            cfg = {{"command", "evaluate"}, {"checkpoint", ""}, {"data", ""},
                   {"bins", false},         {"svg", false},     {"out", ""}};
        } else {
            cfg = {{"command", "forecast"}, {"checkpoint", ""}, {"data", ""}, {"out", ""}};
        }
        if (!config_path.empty()) apply_config_file(config_path, cfg);

        if (set("--out")) cfg["out"] = out_dir;
        if (set("--data")) cfg["data"] = data_path;
        if (set("--adjacency")) cfg["adjacency"] = adjacency_path;
        if (set("--seed")) cfg["seed"] = seed;
        if (sub == synth) {
            if (set("--n")) cfg["synthetic"]["n"] = n;
            if (set("--days")) cfg["synthetic"]["days"] = days;
            if (set("--seed")) cfg["synthetic"]["seed"] = seed;
            if (set("--closure-rate")) cfg["synthetic"]["closure_rate"] = closure_rate;
            if (set("--noise-sigma")) cfg["synthetic"]["noise_sigma"] = noise_sigma;
            if (set("--weekend-factor")) cfg["synthetic"]["weekend_factor"] = weekend_factor;
        }
        if (sub == select || sub == train) {
            if (set("--select")) cfg["select"] = select_mode;
            if (set("--m-prime")) cfg["m_prime"] = m_prime;
        }
        if (sub == train) {
            if (set("--partition")) cfg["partition"] = partition_path;
            if (set("--synthetic")) {
                json s = synth_defaults();
                if (cfg["synthetic"].is_object()) s = cfg["synthetic"];
                parse_synth_kv(synth_kv, s);
                cfg["synthetic"] = s;
            }
            if (set("--ablation")) cfg["ablation"] = ablation;
            if (set("--noise-variance")) cfg["noise_variance"] = noise_variance;
            if (set("--d")) cfg["d"] = d;
            if (set("--l")) cfg["l"] = l;
            if (set("--l-prime")) cfg["l_prime"] = l_prime;
            if (set("--alpha")) cfg["alpha"] = alpha;
            if (set("--dropout")) cfg["dropout"] = dropout;
            if (set("--batch")) cfg["batch"] = batch;
            if (set("--lr")) cfg["lr"] = lr;
            if (set("--weight-decay")) cfg["weight_decay"] = weight_decay;
            if (set("--epochs")) cfg["epochs"] = epochs;
            if (set("--patience")) cfg["patience"] = patience;
        }
        if (sub == evaluate || sub == forecast) {
            if (set("--checkpoint")) cfg["checkpoint"] = checkpoint_path;
        }
        if (sub == evaluate) {
            if (set("--bins")) cfg["bins"] = bins;
            if (set("--svg")) cfg["svg"] = svg;
        }
        if (cfg.at("out").get<std::string>().empty())
            throw CLI::ValidationError("--out", "an output directory is required");

        if (sub == synth) return cmd_synth(cfg);
        if (sub == select) return cmd_select(cfg);
        if (sub == train) return cmd_train(cfg);
        if (sub == evaluate) return cmd_evaluate(cfg);
        return cmd_forecast(cfg);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const stps::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const stps::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
