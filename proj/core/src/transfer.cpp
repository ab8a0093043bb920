#include "stps/transfer.hpp"

namespace stps::transfer {

TransferMatrix enhanced_transfer(const diff::Var& a_sub, const diff::Var& e_agg, const diff::Var& b_src,
                                 const diff::Var& b_dst) {
    const auto& sa = a_sub.shape();
    if (sa.size() != 2 || e_agg.shape() != b_src.shape() || e_agg.shape()[0] != sa[0] ||
        b_dst.shape()[0] != sa[1] || b_dst.shape()[1] != e_agg.shape()[1])
        throw std::invalid_argument("enhanced_transfer: shape mismatch A=" + shape_str(sa) + " E=" +
                                    shape_str(e_agg.shape()) + " B_src=" + shape_str(b_src.shape()) +
                                    " B_dst=" + shape_str(b_dst.shape()));
    TransferMatrix t;
    t.base = a_sub;
    t.enhanced = diff::add(a_sub, diff::matmul(diff::add(e_agg, b_src), diff::transpose(b_dst)));
    return t;
}

TransferMatrix plain_transfer(const diff::Var& a_sub, const diff::Var& learned) {
    if (a_sub.shape() != learned.shape())
        throw std::invalid_argument("plain_transfer: shape mismatch " + shape_str(a_sub.shape()) + " vs " +
                                    shape_str(learned.shape()));
    return TransferMatrix{a_sub, diff::add(a_sub, learned)};
}

diff::Var transfer_apply(const TransferMatrix& t, const diff::Var& h_prime,
                         const diff::ResidualBlock& head, const diff::ForwardCtx& ctx) {
    if (h_prime.shape()[0] != t.enhanced.shape()[0])
        throw std::invalid_argument("transfer_apply: row mismatch transfer=" +
                                    shape_str(t.enhanced.shape()) + " H'=" + shape_str(h_prime.shape()));
    if (head.in != h_prime.shape()[1])
        throw std::invalid_argument("transfer_apply: head width " + std::to_string(head.in) +
                                    " does not match representation width " +
                                    std::to_string(h_prime.shape()[1]));
    diff::Var projected = diff::matmul(diff::transpose(t.enhanced), h_prime);
    return diff::apply(head, projected, ctx);
}

}  // namespace stps::transfer
