#pragma once

#include <vector>

#include "stps/common.hpp"
#include "stps/diffcore.hpp"

namespace stps::emb {

// The trainable embedding banks: time-of-day (288 x d), day-of-week (7 x d),
// node bank over all locations (n x d), rank bank (n x d, row i for rank i),
// and the per-window-length rank aggregators (length-L weights + scalar bias).
struct EmbeddingBanks {
    diff::Var b_tod;
    diff::Var b_dow;
    diff::Var b_v;
    diff::Var b_r;
    diff::Var rank_w_l, rank_b_l;    // aggregates over length l
    diff::Var rank_w_lp, rank_b_lp;  // aggregates over length l'
    std::size_t dim = 0;
};

// The fused representation H' plus its five retained component blocks.
struct Representation {
    diff::Var h_prime;  // rows x 5d (4d without the rank embedding)
    diff::Var e_f, e_v, e_r, e_tod, e_dow;
};

// Column-wise ascending ranks; ties broken by ascending row index.
// Returns row-major rows x cols integers in [0, rows).
std::vector<int> compute_ranks(const Mat& slice);

// Gather the rank bank per (row, slot) and contract the slot axis with the
// shared per-channel weights + bias.
diff::Var rank_node_embedding(const std::vector<int>& ranks, std::size_t rows, std::size_t slots,
                              const diff::Var& rank_bank, const diff::Var& agg_w, const diff::Var& agg_b);

// Broadcast single bank rows to all locations of the window.
std::pair<diff::Var, diff::Var> temporal_embedding(int tod_index, int dow_index, std::size_t n_rows,
                                                   const EmbeddingBanks& banks);

// E^f = feature_block(x); H = E^f || E^v || E^r' || E^tod || E^dow; H' = project_block(H).
// `use_rank` = false drops the E^r' slot (the no-rank ablation).
Representation build_representation(const diff::Var& x, const std::vector<int>& row_ids,
                                    const std::vector<int>& ranks, int tod_index, int dow_index,
                                    const EmbeddingBanks& banks, const diff::ResidualBlock& feature_block,
                                    const diff::ResidualBlock& project_block, const diff::Var& agg_w,
                                    const diff::Var& agg_b, bool use_rank, const diff::ForwardCtx& ctx);

}  // namespace stps::emb
