#include "stps/embeddings.hpp"

#include <algorithm>
#include <numeric>

namespace stps::emb {

std::vector<int> compute_ranks(const Mat& slice) {
    std::vector<int> ranks(slice.rows * slice.cols);
    std::vector<int> order(slice.rows);
    for (std::size_t j = 0; j < slice.cols; ++j) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return slice.at(a, j) < slice.at(b, j);  // stable: ties by ascending row index
        });
        for (std::size_t pos = 0; pos < order.size(); ++pos)
            ranks[static_cast<std::size_t>(order[pos]) * slice.cols + j] = static_cast<int>(pos);
    }
    return ranks;
}

diff::Var rank_node_embedding(const std::vector<int>& ranks, std::size_t rows, std::size_t slots,
                              const diff::Var& rank_bank, const diff::Var& agg_w, const diff::Var& agg_b) {
    return diff::rank_aggregate(rank_bank, ranks, rows, slots, agg_w, agg_b);
}

std::pair<diff::Var, diff::Var> temporal_embedding(int tod_index, int dow_index, std::size_t n_rows,
                                                   const EmbeddingBanks& banks) {
    std::vector<int> tod_idx(n_rows, tod_index);
    std::vector<int> dow_idx(n_rows, dow_index);
    return {diff::embedding_lookup(banks.b_tod, tod_idx), diff::embedding_lookup(banks.b_dow, dow_idx)};
}

Representation build_representation(const diff::Var& x, const std::vector<int>& row_ids,
                                    const std::vector<int>& ranks, int tod_index, int dow_index,
                                    const EmbeddingBanks& banks, const diff::ResidualBlock& feature_block,
                                    const diff::ResidualBlock& project_block, const diff::Var& agg_w,
                                    const diff::Var& agg_b, bool use_rank, const diff::ForwardCtx& ctx) {
    const std::size_t rows = x.shape()[0];
    const std::size_t slots = x.shape()[1];
    if (slots != feature_block.in)
        throw std::invalid_argument("build_representation: input length " + std::to_string(slots) +
                                    " matches no configured feature block (expected " +
                                    std::to_string(feature_block.in) + ")");
    Representation rep;
    rep.e_f = diff::apply(feature_block, x, ctx);
    rep.e_v = diff::embedding_lookup(banks.b_v, row_ids);
    auto [e_tod, e_dow] = temporal_embedding(tod_index, dow_index, rows, banks);
    rep.e_tod = e_tod;
    rep.e_dow = e_dow;
    std::vector<diff::Var> parts;
    if (use_rank) {
        rep.e_r = rank_node_embedding(ranks, rows, slots, banks.b_r, agg_w, agg_b);
        parts = {rep.e_f, rep.e_v, rep.e_r, rep.e_tod, rep.e_dow};
    } else {
        parts = {rep.e_f, rep.e_v, rep.e_tod, rep.e_dow};
    }
    rep.h_prime = diff::apply(project_block, diff::concat_features(parts), ctx);
    return rep;
}

}  // namespace stps::emb
