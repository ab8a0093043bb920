#include "stps/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace stps::model {

using diff::Var;
using nlohmann::json;

void ModelConfig::validate() const {
    if (l < 1 || l_prime < 1) throw DataError("config: l and l' must be >= 1");
    if (alpha < 0.0 || alpha > 1.0) throw DataError("config: alpha must be in [0,1]");
    if (dropout < 0.0 || dropout >= 1.0) throw DataError("config: dropout must be in [0,1)");
    if (one_step && two_step) throw DataError("config: one_step and two_step are mutually exclusive");
    if (batch < 1) throw DataError("config: batch must be >= 1");
    if (d < 1) throw DataError("config: d must be >= 1");
}

StpsModel::StpsModel(ModelConfig config, data::RoadGraph graph, data::SensingPartition partition,
                     data::Normalizer normalizer)
    : config_(std::move(config)),
      graph_(std::move(graph)),
      partition_(std::move(partition)),
      normalizer_(normalizer),
      train_rng_(config_.seed + 0x5354505355ULL) {
    config_.validate();
    n_ = graph_.n_locations;
    m_ = partition_.sensed.size();
    mp_ = partition_.unsensed.size();
    if (m_ + mp_ != n_ || m_ == 0 || mp_ == 0)
        throw DataError("model: partition does not match graph (n=" + std::to_string(n_) + ", m=" +
                        std::to_string(m_) + ", m'=" + std::to_string(mp_) + ")");

    ids_m_ = partition_.sensed;
    ids_mp_ = partition_.unsensed;
    ids_n_ = ids_m_;
    ids_n_.insert(ids_n_.end(), ids_mp_.begin(), ids_mp_.end());

    const auto sub_block = [&](const std::vector<int>& rows, const std::vector<int>& cols) {
        std::vector<double> v(rows.size() * cols.size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < cols.size(); ++j)
                v[i * cols.size() + j] = graph_.adjacency.at(rows[i], cols[j]);
        return Var::constant({rows.size(), cols.size()}, std::move(v));
    };
    a_m_mp_ = sub_block(ids_m_, ids_mp_);
    a_n_m_ = sub_block(ids_n_, ids_m_);
    a_n_mp_ = sub_block(ids_n_, ids_mp_);

    build_parameters();
}

void StpsModel::build_parameters() {
    std::mt19937_64 rng(config_.seed);
    const std::size_t d = config_.d;
    const std::size_t width = config_.rep_width();

    banks_.dim = d;
    banks_.b_tod = params_.create_uniform("bank.tod", {288, d}, -0.1, 0.1, rng);
    banks_.b_dow = params_.create_uniform("bank.dow", {7, d}, -0.1, 0.1, rng);
    banks_.b_v = params_.create_uniform("bank.node", {n_, d}, -0.1, 0.1, rng);
    if (!config_.no_rank) {
        banks_.b_r = params_.create_uniform("bank.rank", {n_, d}, -0.1, 0.1, rng);
        const double wl = 1.0 / static_cast<double>(config_.l);
        const double wlp = 1.0 / static_cast<double>(config_.l_prime);
        banks_.rank_w_l = params_.create("bank.rank_agg_l.w", {config_.l},
                                         std::vector<double>(config_.l, wl));
        banks_.rank_b_l = params_.create("bank.rank_agg_l.b", {1}, {0.0});
        banks_.rank_w_lp = params_.create("bank.rank_agg_lp.w", {config_.l_prime},
                                          std::vector<double>(config_.l_prime, wlp));
        banks_.rank_b_lp = params_.create("bank.rank_agg_lp.b", {1}, {0.0});
    }

    feature_mlp_l_ = params_.create_residual_block("feature_l", config_.l, d, d, rng);
    feature_mlp_lp_ = params_.create_residual_block("feature_lp", config_.l_prime, d, d, rng);
    project_mlp_ = params_.create_residual_block("project", width, d, width, rng);
    head_l_ = params_.create_residual_block("head_l", width, d, config_.l, rng);
    head_lp_ = params_.create_residual_block("head_lp", width, d, config_.l_prime, rng);

    if (config_.no_transfer) {
        map_s1_ = params_.create_residual_block("map_s1", m_, config_.d, mp_, rng);
        map_s2_ = params_.create_residual_block("map_s2", n_, config_.d, m_, rng);
        map_s3a_ = params_.create_residual_block("map_s3a", n_, config_.d, mp_, rng);
        map_s3b_ = params_.create_residual_block("map_s3b", m_, config_.d, mp_, rng);
    }
    if (config_.plain_transfer) {
        plain_mmp_ = params_.create_uniform("plain.mmp", {m_, mp_}, -0.1, 0.1, rng);
        plain_nm_ = params_.create_uniform("plain.nm", {n_, m_}, -0.1, 0.1, rng);
        plain_nmp_ = params_.create_uniform("plain.nmp", {n_, mp_}, -0.1, 0.1, rng);
    }
}

Var StpsModel::zeros_e(std::size_t rows) const {
    return Var::constant({rows, config_.d}, std::vector<double>(rows * config_.d, 0.0));
}

Mat StpsModel::normalize(const Mat& raw) const {
    Mat out = raw;
    for (double& v : out.v) v = normalizer_.forward(v);
    return out;
}

Var StpsModel::mae_loss(const Var& pred_norm, const Mat& truth_raw) const {
    if (pred_norm.shape() != std::vector<std::size_t>{truth_raw.rows, truth_raw.cols})
        throw std::invalid_argument("mae_loss: shape mismatch pred=" + shape_str(pred_norm.shape()) +
                                    " truth=[" + std::to_string(truth_raw.rows) + "x" +
                                    std::to_string(truth_raw.cols) + "]");
    // denorm(pred) - truth = pred*std - (truth - mean)
    std::vector<double> shifted(truth_raw.v.size());
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] = truth_raw.v[i] - normalizer_.mean;
    Var target = Var::constant({truth_raw.rows, truth_raw.cols}, std::move(shifted));
    return diff::mean_abs(diff::sub(diff::scale(pred_norm, normalizer_.std), target));
}

diff::Var StpsModel::apply_site(const std::string& site, const Var& a_sub, const Var& e_agg,
                                const Var& b_src, const Var& b_dst, const Var& h_prime,
                                const diff::ResidualBlock& head, const diff::ForwardCtx& ctx) {
    if (config_.no_transfer) {
        const diff::ResidualBlock* map = nullptr;
        if (site == "s1") map = &map_s1_;
        else if (site == "s2") map = &map_s2_;
        else if (site == "s3a") map = &map_s3a_;
        else map = &map_s3b_;
        // Map the location axis src -> dst directly, ignoring the adjacency.
        Var mapped = diff::transpose(diff::apply(*map, diff::transpose(h_prime), ctx));
        return diff::apply(head, mapped, ctx);
    }
    transfer::TransferMatrix t;
    if (config_.plain_transfer) {
        const Var* learned = nullptr;
        if (site == "s2") learned = &plain_nm_;
        else if (site == "s3a") learned = &plain_nmp_;
        else learned = &plain_mmp_;  // s1 and s3b share the (M,M') site
        t = transfer::plain_transfer(a_sub, *learned);
    } else {
        Var e = config_.no_rank ? zeros_e(a_sub.shape()[0]) : e_agg;
        t = transfer::enhanced_transfer(a_sub, e, b_src, b_dst);
    }
    return transfer::transfer_apply(t, h_prime, head, ctx);
}

Var StpsModel::step1_forward(const Mat& x_m_t_norm, int tod, int dow, const diff::ForwardCtx& ctx) {
    if (x_m_t_norm.rows != m_ || x_m_t_norm.cols != config_.l)
        throw std::invalid_argument("step1_forward: expected " + std::to_string(m_) + "x" +
                                    std::to_string(config_.l) + " input");
    Var x = Var::constant({m_, config_.l}, x_m_t_norm.v);
    const auto ranks = emb::compute_ranks(x_m_t_norm);
    auto rep = emb::build_representation(x, ids_m_, ranks, tod, dow, banks_, feature_mlp_l_, project_mlp_,
                                         banks_.rank_w_l, banks_.rank_b_l, !config_.no_rank, ctx);
    Var b_src = diff::embedding_lookup(banks_.b_v, ids_m_);
    Var b_dst = diff::embedding_lookup(banks_.b_v, ids_mp_);
    Var e = config_.no_rank ? Var() : rep.e_r;
    return apply_site("s1", a_m_mp_, e, b_src, b_dst, rep.h_prime, head_l_, ctx);
}

StpsModel::NRep StpsModel::rep_over_n(const Var& x_n_t, int tod, int dow, const diff::ForwardCtx& ctx) {
    Mat values{ };
    values.rows = n_;
    values.cols = config_.l;
    values.v = x_n_t.values();
    NRep out;
    out.ranks = emb::compute_ranks(values);
    auto rep = emb::build_representation(x_n_t, ids_n_, out.ranks, tod, dow, banks_, feature_mlp_l_,
                                         project_mlp_, banks_.rank_w_l, banks_.rank_b_l,
                                         !config_.no_rank, ctx);
    out.h_prime = rep.h_prime;
    out.e_r_n = rep.e_r;
    return out;
}

Var StpsModel::step2_forward(const Mat& x_m_t_norm, const Var& x_mp_t_hat, int tod, int dow,
                             const diff::ForwardCtx& ctx) {
    Var x_m = Var::constant({m_, config_.l}, x_m_t_norm.v);
    Var x_n = diff::concat_rows(x_m, x_mp_t_hat);
    NRep nrep = rep_over_n(x_n, tod, dow, ctx);
    Var b_src = diff::embedding_lookup(banks_.b_v, ids_n_);
    Var b_dst = diff::embedding_lookup(banks_.b_v, ids_m_);
    return apply_site("s2", a_n_m_, nrep.e_r_n, b_src, b_dst, nrep.h_prime, head_lp_, ctx);
}

Var StpsModel::step3_forward(const Var& x_n_t, const Var& x_m_tp_hat, int tod, int dow, int todp,
                             int dowp, const diff::ForwardCtx& ctx, std::optional<double> alpha_override) {
    NRep nrep = rep_over_n(x_n_t, tod, dow, ctx);

    Var b_v_n = diff::embedding_lookup(banks_.b_v, ids_n_);
    Var b_v_m = diff::embedding_lookup(banks_.b_v, ids_m_);
    Var b_v_mp = diff::embedding_lookup(banks_.b_v, ids_mp_);

    // Branch A: all-location history projected to the unsensed set.
    Var branch_a = apply_site("s3a", a_n_mp_, nrep.e_r_n, b_v_n, b_v_mp, nrep.h_prime, head_lp_, ctx);

    const double alpha = alpha_override.value_or(config_.alpha);
    if (config_.two_step) return branch_a;  // branch B wired off

    // Branch B: predicted sensed future, re-embedded at length l'.
    Mat tp_values;
    tp_values.rows = m_;
    tp_values.cols = config_.l_prime;
    tp_values.v = x_m_tp_hat.values();
    const auto ranks_tp = emb::compute_ranks(tp_values);
    auto rep_b = emb::build_representation(x_m_tp_hat, ids_m_, ranks_tp, todp, dowp, banks_,
                                           feature_mlp_lp_, project_mlp_, banks_.rank_w_lp,
                                           banks_.rank_b_lp, !config_.no_rank, ctx);
    Var e_m;
    if (!config_.no_rank) {
        // E_r'[M]: the first m rows of the stage's rank information over N.
        std::vector<int> ranks_m(nrep.ranks.begin(), nrep.ranks.begin() + m_ * config_.l);
        e_m = emb::rank_node_embedding(ranks_m, m_, config_.l, banks_.b_r, banks_.rank_w_l,
                                       banks_.rank_b_l);
    }
    Var branch_b = apply_site("s3b", a_m_mp_, e_m, b_v_m, b_v_mp, rep_b.h_prime, head_lp_, ctx);

    return diff::add(diff::scale(branch_a, alpha), diff::scale(branch_b, 1.0 - alpha));
}

Var StpsModel::one_step_forward(const Mat& x_m_t_norm, int tod, int dow, const diff::ForwardCtx& ctx) {
    Var x = Var::constant({m_, config_.l}, x_m_t_norm.v);
    const auto ranks = emb::compute_ranks(x_m_t_norm);
    auto rep = emb::build_representation(x, ids_m_, ranks, tod, dow, banks_, feature_mlp_l_, project_mlp_,
                                         banks_.rank_w_l, banks_.rank_b_l, !config_.no_rank, ctx);
    Var b_src = diff::embedding_lookup(banks_.b_v, ids_m_);
    Var b_dst = diff::embedding_lookup(banks_.b_v, ids_mp_);
    Var e = config_.no_rank ? Var() : rep.e_r;
    return apply_site("s1", a_m_mp_, e, b_src, b_dst, rep.h_prime, head_lp_, ctx);
}

StpsModel::ChainOut StpsModel::forward_chain(const data::WindowSample& w, int upto,
                                             const diff::ForwardCtx& ctx) {
    ChainOut out;
    const Mat nx_m_t = normalize(w.x_M_T);
    if (config_.one_step) {
        out.s3 = one_step_forward(nx_m_t, w.tod_index, w.dow_index, ctx);
        return out;
    }
    out.s1 = step1_forward(nx_m_t, w.tod_index, w.dow_index, ctx);
    if (upto <= 1) return out;

    Var mp_t_feed = out.s1;
    if (config_.teacher_forcing) mp_t_feed = Var::constant({mp_, config_.l}, normalize(w.x_Mp_T).v);
    Var x_m = Var::constant({m_, config_.l}, nx_m_t.v);
    Var x_n = diff::concat_rows(x_m, mp_t_feed);
    NRep nrep = rep_over_n(x_n, w.tod_index, w.dow_index, ctx);
    Var b_v_n = diff::embedding_lookup(banks_.b_v, ids_n_);
    Var b_v_m = diff::embedding_lookup(banks_.b_v, ids_m_);
    Var b_v_mp = diff::embedding_lookup(banks_.b_v, ids_mp_);

    if (!config_.two_step) {
        out.s2 = apply_site("s2", a_n_m_, nrep.e_r_n, b_v_n, b_v_m, nrep.h_prime, head_lp_, ctx);
        if (upto <= 2) return out;
    }

    Var branch_a = apply_site("s3a", a_n_mp_, nrep.e_r_n, b_v_n, b_v_mp, nrep.h_prime, head_lp_, ctx);
    if (config_.two_step) {
        out.s3 = branch_a;
        return out;
    }

    Var m_tp_feed = out.s2;
    if (config_.teacher_forcing) m_tp_feed = Var::constant({m_, config_.l_prime}, normalize(w.x_M_Tp).v);
    Mat tp_values;
    tp_values.rows = m_;
    tp_values.cols = config_.l_prime;
    tp_values.v = m_tp_feed.values();
    const auto ranks_tp = emb::compute_ranks(tp_values);
    auto rep_b = emb::build_representation(m_tp_feed, ids_m_, ranks_tp, w.todp_index, w.dowp_index,
                                           banks_, feature_mlp_lp_, project_mlp_, banks_.rank_w_lp,
                                           banks_.rank_b_lp, !config_.no_rank, ctx);
    Var e_m;
    if (!config_.no_rank) {
        std::vector<int> ranks_m(nrep.ranks.begin(), nrep.ranks.begin() + m_ * config_.l);
        e_m = emb::rank_node_embedding(ranks_m, m_, config_.l, banks_.b_r, banks_.rank_w_l,
                                       banks_.rank_b_l);
    }
    Var branch_b = apply_site("s3b", a_m_mp_, e_m, b_v_m, b_v_mp, rep_b.h_prime, head_lp_, ctx);
    out.s3 = diff::add(diff::scale(branch_a, config_.alpha), diff::scale(branch_b, 1.0 - config_.alpha));
    return out;
}

std::vector<int> StpsModel::stage_plan() const {
    if (config_.one_step) return {1};
    if (config_.two_step) return {1, 3};
    return {1, 2, 3};
}

TrainLog StpsModel::train_stage(int stage, const std::vector<data::WindowSample>& train_windows,
                                const std::vector<data::WindowSample>& val_windows) {
    const auto plan = stage_plan();
    if (std::find(plan.begin(), plan.end(), stage) == plan.end())
        throw DataError("train_stage: stage " + std::to_string(stage) + " is not part of this model's plan");
    if (train_windows.empty()) throw DataError("train_stage: no training windows");

    const auto target_of = [&](const data::WindowSample& w) -> const Mat& {
        if (config_.one_step) return w.x_Mp_Tp;
        if (stage == 1) return w.x_Mp_T;
        if (stage == 2) return w.x_M_Tp;
        return w.x_Mp_Tp;
    };
    const auto predict = [&](const data::WindowSample& w, const diff::ForwardCtx& ctx) -> Var {
        ChainOut out = forward_chain(w, stage, ctx);
        if (config_.one_step) return out.s3;
        if (stage == 1) return out.s1;
        if (stage == 2) return out.s2;
        return out.s3;
    };

    TrainLog log;
    log.stage = stage;
    std::vector<std::size_t> order(train_windows.size());
    std::iota(order.begin(), order.end(), 0);

    double best_val = std::numeric_limits<double>::infinity();
    std::map<std::string, std::vector<double>> best_snapshot;
    std::size_t since_best = 0;

    diff::ForwardCtx train_ctx{true, config_.dropout, &train_rng_};
    diff::ForwardCtx eval_ctx{};

    for (std::size_t epoch = 0; epoch < config_.epochs_per_stage; ++epoch) {
        std::shuffle(order.begin(), order.end(), train_rng_);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config_.batch) {
            const std::size_t bsz = std::min(config_.batch, order.size() - start);
            for (std::size_t k = 0; k < bsz; ++k) {
                const auto& w = train_windows[order[start + k]];
                Var loss = mae_loss(predict(w, train_ctx), target_of(w));
                const double value = loss.item();
                if (!std::isfinite(value))
                    throw NumericError("train_stage: non-finite loss at stage " + std::to_string(stage) +
                                       ", epoch " + std::to_string(epoch) + ", window " +
                                       std::to_string(order[start + k]));
                epoch_loss += value;
                diff::backward(loss, 1.0 / static_cast<double>(bsz));
            }
            // Parameters outside this stage's graph get a zero gradient
            // (weight decay still applies, as usual for AdamW).
            for (auto& [name, e] : params_.entries()) e.value.node()->ensure_grad();
            diff::adamw_step(params_, config_.lr, 0.9, 0.999, 1e-8, config_.weight_decay);
        }
        log.train_mae.push_back(epoch_loss / static_cast<double>(order.size()));

        double val_mae = 0.0;
        if (!val_windows.empty()) {
            for (const auto& w : val_windows) val_mae += mae_loss(predict(w, eval_ctx), target_of(w)).item();
            val_mae /= static_cast<double>(val_windows.size());
        } else {
            val_mae = log.train_mae.back();
        }
        log.val_mae.push_back(val_mae);

        if (val_mae < best_val) {
            best_val = val_mae;
            best_snapshot = params_.snapshot_values();
            log.best_epoch = static_cast<int>(epoch);
            since_best = 0;
        } else if (++since_best >= config_.patience) {
            break;
        }
    }
    if (!best_snapshot.empty()) params_.restore_values(best_snapshot);
    return log;
}

std::vector<TrainLog> StpsModel::train_all(const std::vector<data::WindowSample>& train_windows,
                                           const std::vector<data::WindowSample>& val_windows) {
    std::vector<TrainLog> logs;
    for (int stage : stage_plan()) logs.push_back(train_stage(stage, train_windows, val_windows));
    trained_ = true;
    return logs;
}

Mat StpsModel::infer(const Mat& x_m_t_raw, int tod, int dow, int todp, int dowp) {
    if (!trained_) throw DataError("infer: model has not been trained");
    diff::ForwardCtx ctx{};
    data::WindowSample w;
    w.x_M_T = x_m_t_raw;
    w.tod_index = tod;
    w.dow_index = dow;
    w.todp_index = todp;
    w.dowp_index = dowp;
    // Chain needs only X_M_T at inference; the other blocks stay empty.
    const bool tf = config_.teacher_forcing;
    config_.teacher_forcing = false;
    ChainOut out = forward_chain(w, 3, ctx);
    config_.teacher_forcing = tf;
    Mat result(mp_, config_.l_prime);
    const auto& v = out.s3.values();
    for (std::size_t i = 0; i < result.v.size(); ++i) result.v[i] = normalizer_.inverse(v[i]);
    return result;
}

// ---- checkpoint serialization ----

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) { buf.append(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::string& buf, std::uint64_t v) { buf.append(reinterpret_cast<const char*>(&v), 8); }

std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    void need(std::size_t k) const {
        if (pos + k > buf.size()) throw DataError("checkpoint: truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::string bytes(std::size_t k) {
        need(k);
        std::string s = buf.substr(pos, k);
        pos += k;
        return s;
    }
};

}  // namespace

void StpsModel::save_checkpoint(const std::string& path) const {
    json meta;
    json& c = meta["config"];
    c["l"] = config_.l;
    c["l_prime"] = config_.l_prime;
    c["d"] = config_.d;
    c["alpha"] = config_.alpha;
    c["dropout"] = config_.dropout;
    c["lr"] = config_.lr;
    c["weight_decay"] = config_.weight_decay;
    c["batch"] = config_.batch;
    c["epochs_per_stage"] = config_.epochs_per_stage;
    c["patience"] = config_.patience;
    c["one_step"] = config_.one_step;
    c["two_step"] = config_.two_step;
    c["plain_transfer"] = config_.plain_transfer;
    c["no_transfer"] = config_.no_transfer;
    c["no_rank"] = config_.no_rank;
    c["teacher_forcing"] = config_.teacher_forcing;
    c["seed"] = config_.seed;
    meta["n_locations"] = n_;
    meta["partition"]["sensed"] = partition_.sensed;
    meta["partition"]["unsensed"] = partition_.unsensed;
    meta["normalizer"]["mean"] = normalizer_.mean;
    meta["normalizer"]["std"] = normalizer_.std;
    meta["step_count"] = params_.step_count();
    meta["trained"] = trained_;
    {
        std::ostringstream rs;
        rs << train_rng_;
        meta["rng_state"] = rs.str();
    }
    json edges = json::array();
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = i + 1; j < n_; ++j)
            if (graph_.adjacency.at(i, j) != 0.0) edges.push_back({i, j});
    meta["adjacency_edges"] = edges;

    const std::string meta_str = meta.dump();

    // Manifest: (name, shape, byte offset into payload) per tensor, in
    // lexicographic parameter order with value/moment sub-entries.
    struct Entry {
        std::string name;
        std::vector<std::size_t> shape;
        const std::vector<double>* data;
    };
    std::vector<Entry> entries;
    for (const auto& [name, e] : params_.entries()) {
        entries.push_back({"p/" + name, e.value.shape(), &e.value.values()});
        entries.push_back({"m/" + name, e.value.shape(), &e.adam_m});
        entries.push_back({"v/" + name, e.value.shape(), &e.adam_v});
    }

    std::string buf;
    buf.append("STPS");
    put_u32(buf, kCheckpointVersion);
    put_u64(buf, meta_str.size());
    buf.append(meta_str);
    put_u64(buf, entries.size());
    std::uint64_t offset = 0;
    for (const auto& e : entries) {
        put_u32(buf, static_cast<std::uint32_t>(e.name.size()));
        buf.append(e.name);
        put_u32(buf, static_cast<std::uint32_t>(e.shape.size()));
        for (auto dim : e.shape) put_u64(buf, dim);
        put_u64(buf, offset);
        offset += e.data->size() * sizeof(double);
    }
    put_u64(buf, offset);  // payload byte length
    for (const auto& e : entries)
        buf.append(reinterpret_cast<const char*>(e.data->data()), e.data->size() * sizeof(double));
    put_u64(buf, fnv1a64(buf));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

StpsModel StpsModel::load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string buf = ss.str();
    if (buf.size() < 24) throw DataError("checkpoint: truncated file");
    std::uint64_t stored_sum;
    std::memcpy(&stored_sum, buf.data() + buf.size() - 8, 8);
    const std::string body = buf.substr(0, buf.size() - 8);
    if (fnv1a64(body) != stored_sum) throw DataError("checkpoint: checksum mismatch (corrupt file)");

    Reader r{body};
    if (r.bytes(4) != "STPS") throw DataError("checkpoint: bad magic bytes");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw DataError("checkpoint: format version " + std::to_string(version) + " is not supported");
    const std::uint64_t meta_len = r.u64();
    const json meta = json::parse(r.bytes(meta_len));

    ModelConfig cfg;
    const json& c = meta.at("config");
    cfg.l = c.at("l");
    cfg.l_prime = c.at("l_prime");
    cfg.d = c.at("d");
    cfg.alpha = c.at("alpha");
    cfg.dropout = c.at("dropout");
    cfg.lr = c.at("lr");
    cfg.weight_decay = c.at("weight_decay");
    cfg.batch = c.at("batch");
    cfg.epochs_per_stage = c.at("epochs_per_stage");
    cfg.patience = c.at("patience");
    cfg.one_step = c.at("one_step");
    cfg.two_step = c.at("two_step");
    cfg.plain_transfer = c.at("plain_transfer");
    cfg.no_transfer = c.at("no_transfer");
    cfg.no_rank = c.at("no_rank");
    cfg.teacher_forcing = c.at("teacher_forcing");
    cfg.seed = c.at("seed");

    const std::size_t n = meta.at("n_locations");
    data::RoadGraph graph;
    graph.n_locations = n;
    graph.adjacency = Mat(n, n);
    for (const auto& e : meta.at("adjacency_edges")) {
        const std::size_t i = e.at(0), j = e.at(1);
        graph.adjacency.at(i, j) = 1.0;
        graph.adjacency.at(j, i) = 1.0;
    }
    data::SensingPartition partition;
    partition.sensed = meta.at("partition").at("sensed").get<std::vector<int>>();
    partition.unsensed = meta.at("partition").at("unsensed").get<std::vector<int>>();
    data::Normalizer norm{meta.at("normalizer").at("mean"), meta.at("normalizer").at("std")};

    StpsModel model(cfg, std::move(graph), std::move(partition), norm);
    model.params_.set_step_count(meta.at("step_count"));
    model.trained_ = meta.at("trained");
    {
        std::istringstream rs(meta.at("rng_state").get<std::string>());
        rs >> model.train_rng_;
    }

    const std::uint64_t n_entries = r.u64();
    struct Entry {
        std::string name;
        std::vector<std::size_t> shape;
        std::uint64_t offset;
    };
    std::vector<Entry> entries(n_entries);
    for (auto& e : entries) {
        e.name = r.bytes(r.u32());
        const std::uint32_t ndim = r.u32();
        e.shape.resize(ndim);
        for (auto& dim : e.shape) dim = r.u64();
        e.offset = r.u64();
    }
    const std::uint64_t payload_len = r.u64();
    const std::size_t payload_start = r.pos;
    if (payload_start + payload_len != body.size())
        throw DataError("checkpoint: payload length mismatch");

    std::size_t filled = 0;
    for (const auto& e : entries) {
        if (e.name.size() < 3 || e.name[1] != '/')
            throw DataError("checkpoint: malformed tensor name '" + e.name + "'");
        const std::string base = e.name.substr(2);
        if (!model.params_.contains(base))
            throw DataError("checkpoint: unknown parameter '" + e.name + "'");
        auto& entry = model.params_.entry(base);
        std::size_t count = 1;
        for (auto dim : e.shape) count *= dim;
        if (e.shape != entry.value.shape())
            throw DataError("checkpoint: shape mismatch for '" + e.name + "'");
        if (payload_start + e.offset + count * sizeof(double) > body.size())
            throw DataError("checkpoint: tensor '" + e.name + "' exceeds payload");
        std::vector<double>* dst = nullptr;
        switch (e.name[0]) {
            case 'p': dst = &entry.value.mutable_values(); break;
            case 'm': dst = &entry.adam_m; break;
            case 'v': dst = &entry.adam_v; break;
            default: throw DataError("checkpoint: malformed tensor name '" + e.name + "'");
        }
        std::memcpy(dst->data(), body.data() + payload_start + e.offset, count * sizeof(double));
        ++filled;
    }
    if (filled != 3 * model.params_.entries().size()) {
        for (const auto& [name, e] : model.params_.entries()) {
            bool found = false;
            for (const auto& en : entries)
                if (en.name == "p/" + name) found = true;
            if (!found) throw DataError("checkpoint: missing parameter 'p/" + name + "'");
        }
        throw DataError("checkpoint: tensor count mismatch");
    }
    return model;
}

}  // namespace stps::model
