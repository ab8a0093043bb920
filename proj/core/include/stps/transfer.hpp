#pragma once

#include "stps/common.hpp"
#include "stps/diffcore.hpp"

namespace stps::transfer {

// enhanced = A_sub + (E_agg + B_src) B_dst^T, the adjacency sub-block plus a
// rank/node-embedding outer product of rank <= d.
struct TransferMatrix {
    diff::Var base;      // src x dst, constant
    diff::Var enhanced;  // src x dst
};

TransferMatrix enhanced_transfer(const diff::Var& a_sub, const diff::Var& e_agg, const diff::Var& b_src,
                                 const diff::Var& b_dst);

// No embedding enhancement: enhanced = A_sub + P with a learnable matrix P
// (the plain-transfer ablation).
TransferMatrix plain_transfer(const diff::Var& a_sub, const diff::Var& learned);

// enhanced^T H' -> dst x width, then the output head block -> dst x out_len.
diff::Var transfer_apply(const TransferMatrix& t, const diff::Var& h_prime,
                         const diff::ResidualBlock& head, const diff::ForwardCtx& ctx);

}  // namespace stps::transfer
