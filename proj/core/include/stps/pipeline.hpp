#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stps/common.hpp"
#include "stps/dataio.hpp"
#include "stps/diffcore.hpp"
#include "stps/embeddings.hpp"
#include "stps/transfer.hpp"

namespace stps::model {

struct ModelConfig {
    std::size_t l = 12;
    std::size_t l_prime = 96;
    std::size_t d = 64;
    double alpha = 0.5;
    double dropout = 0.15;
    double lr = 1e-3;
    double weight_decay = 1e-3;
    std::size_t batch = 64;
    std::size_t epochs_per_stage = 50;
    std::size_t patience = 10;
    bool one_step = false;
    bool two_step = false;
    bool plain_transfer = false;
    bool no_transfer = false;
    bool no_rank = false;
    bool teacher_forcing = false;  // debug: feed ground truth instead of predictions
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t rep_width() const { return (no_rank ? 4 : 5) * d; }
};

struct TrainLog {
    int stage = 0;
    std::vector<double> train_mae;
    std::vector<double> val_mae;
    int best_epoch = -1;
};

// The three-stage partial-sensing forecaster. Location rows everywhere follow
// the [sensed; unsensed] order of the partition.
class StpsModel {
  public:
    StpsModel(ModelConfig config, data::RoadGraph graph, data::SensingPartition partition,
              data::Normalizer normalizer);

    const ModelConfig& config() const { return config_; }
    const data::SensingPartition& partition() const { return partition_; }
    const data::RoadGraph& graph() const { return graph_; }
    const data::Normalizer& normalizer() const { return normalizer_; }
    diff::ParameterStore& params() { return params_; }
    const diff::ParameterStore& params() const { return params_; }
    bool trained() const { return trained_; }
    void set_trained(bool t) { trained_ = t; }

    // Stage forwards over normalized inputs. Each builds a fresh graph; the
    // returned Var carries the tape for backward().
    diff::Var step1_forward(const Mat& x_m_t_norm, int tod, int dow, const diff::ForwardCtx& ctx);
    diff::Var step2_forward(const Mat& x_m_t_norm, const diff::Var& x_mp_t_hat, int tod, int dow,
                            const diff::ForwardCtx& ctx);
    diff::Var step3_forward(const diff::Var& x_n_t, const diff::Var& x_m_tp_hat, int tod, int dow,
                            int todp, int dowp, const diff::ForwardCtx& ctx,
                            std::optional<double> alpha_override = std::nullopt);

    // The single-stage ablation forward: X_M_T directly to X_M'_T'.
    diff::Var one_step_forward(const Mat& x_m_t_norm, int tod, int dow, const diff::ForwardCtx& ctx);

    // Chained forward up to `upto` in {1,2,3}; stages feed their predictions
    // forward (or ground truth under teacher_forcing).
    struct ChainOut {
        diff::Var s1, s2, s3;
    };
    ChainOut forward_chain(const data::WindowSample& w, int upto, const diff::ForwardCtx& ctx);

    // Denormalized MAE between a normalized prediction and raw truth.
    diff::Var mae_loss(const diff::Var& pred_norm, const Mat& truth_raw) const;

    // Minibatch AdamW on the stage's target; early stop on validation MAE.
    TrainLog train_stage(int stage, const std::vector<data::WindowSample>& train_windows,
                         const std::vector<data::WindowSample>& val_windows);

    // The stage sequence implied by the ablation flags ({1,2,3}, {1,3} or {1}).
    std::vector<int> stage_plan() const;
    std::vector<TrainLog> train_all(const std::vector<data::WindowSample>& train_windows,
                                    const std::vector<data::WindowSample>& val_windows);

    // Raw flows in, denormalized m' x l' forecast out; eval mode, deterministic.
    Mat infer(const Mat& x_m_t_raw, int tod, int dow, int todp, int dowp);

    Mat normalize(const Mat& raw) const;

    std::mt19937_64& train_rng() { return train_rng_; }

    void save_checkpoint(const std::string& path) const;
    static StpsModel load_checkpoint(const std::string& path);

  private:
    struct NRep {
        diff::Var h_prime;      // n x width
        diff::Var e_r_n;        // n x d rank embedding (invalid when no_rank)
        std::vector<int> ranks; // n x l
    };
    NRep rep_over_n(const diff::Var& x_n_t, int tod, int dow, const diff::ForwardCtx& ctx);
    diff::Var apply_site(const std::string& site, const diff::Var& a_sub, const diff::Var& e_agg,
                         const diff::Var& b_src, const diff::Var& b_dst, const diff::Var& h_prime,
                         const diff::ResidualBlock& head, const diff::ForwardCtx& ctx);
    diff::Var zeros_e(std::size_t rows) const;
    void build_parameters();

    ModelConfig config_;
    data::RoadGraph graph_;
    data::SensingPartition partition_;
    data::Normalizer normalizer_;
    std::size_t n_ = 0, m_ = 0, mp_ = 0;
    bool trained_ = false;

    diff::ParameterStore params_;
    emb::EmbeddingBanks banks_;
    diff::ResidualBlock feature_mlp_l_, feature_mlp_lp_, project_mlp_, head_l_, head_lp_;
    // no-transfer location-axis maps and plain-transfer learnable matrices
    diff::ResidualBlock map_s1_, map_s2_, map_s3a_, map_s3b_;
    diff::Var plain_mmp_, plain_nm_, plain_nmp_;

    diff::Var a_m_mp_, a_n_m_, a_n_mp_;  // adjacency sub-blocks, [M;M'] row order for N
    std::vector<int> ids_m_, ids_mp_, ids_n_;

    std::mt19937_64 train_rng_;
};

}  // namespace stps::model
