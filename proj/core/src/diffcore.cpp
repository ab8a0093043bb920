#include "stps/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

namespace stps::diff {

namespace {

NodePtr make_node(std::vector<std::size_t> shape, std::vector<double> values) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    return n;
}

Var make_op(std::vector<std::size_t> shape, std::vector<double> values, std::vector<NodePtr> parents,
            std::function<void(Node&)> backward_fn) {
    auto n = make_node(std::move(shape), std::move(values));
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backward_fn = std::move(backward_fn);
    return Var(n);
}

// C(p x r) += A(p x q) * B(q x r)
void mm_nn(double* c, const double* a, const double* b, std::size_t p, std::size_t q, std::size_t r) {
    for (std::size_t i = 0; i < p; ++i) {
        const double* ai = a + i * q;
        double* ci = c + i * r;
        for (std::size_t k = 0; k < q; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = b + k * r;
            for (std::size_t j = 0; j < r; ++j) ci[j] += aik * bk[j];
        }
    }
}

// C(p x r) += A(p x q) * B(r x q)^T
void mm_nt(double* c, const double* a, const double* b, std::size_t p, std::size_t q, std::size_t r) {
    for (std::size_t i = 0; i < p; ++i) {
        const double* ai = a + i * q;
        double* ci = c + i * r;
        for (std::size_t j = 0; j < r; ++j) {
            const double* bj = b + j * q;
            double acc = 0.0;
            for (std::size_t k = 0; k < q; ++k) acc += ai[k] * bj[k];
            ci[j] += acc;
        }
    }
}

// C(p x r) += A(q x p)^T * B(q x r)
void mm_tn(double* c, const double* a, const double* b, std::size_t p, std::size_t q, std::size_t r) {
    for (std::size_t k = 0; k < q; ++k) {
        const double* ak = a + k * p;
        const double* bk = b + k * r;
        for (std::size_t i = 0; i < p; ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            double* ci = c + i * r;
            for (std::size_t j = 0; j < r; ++j) ci[j] += aki * bk[j];
        }
    }
}

}  // namespace

Var Var::leaf(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    if (n != values.size())
        throw std::invalid_argument("leaf: shape " + shape_str(shape) + " does not match " +
                                    std::to_string(values.size()) + " values");
    auto node = make_node(std::move(shape), std::move(values));
    node->requires_grad = requires_grad;
    return Var(node);
}

Var Var::constant(std::vector<std::size_t> shape, std::vector<double> values) {
    return leaf(std::move(shape), std::move(values), false);
}

Var Var::scalar(double v) { return constant({1}, {v}); }

double Var::item() const {
    if (node_->values.size() != 1)
        throw std::invalid_argument("item: node has " + std::to_string(node_->values.size()) + " elements");
    return node_->values[0];
}

Var matmul(const Var& a, const Var& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.size() < 2 || sa.size() > 3 || sb.size() < 2 || sb.size() > 3)
        throw std::invalid_argument("matmul: unsupported ranks " + shape_str(sa) + " x " + shape_str(sb));
    const bool ba = sa.size() == 3, bb = sb.size() == 3;
    const std::size_t batch = ba ? sa[0] : (bb ? sb[0] : 1);
    if (ba && bb && sa[0] != sb[0])
        throw std::invalid_argument("matmul: batch mismatch " + shape_str(sa) + " x " + shape_str(sb));
    const std::size_t p = sa[sa.size() - 2], q = sa[sa.size() - 1];
    const std::size_t q2 = sb[sb.size() - 2], r = sb[sb.size() - 1];
    if (q != q2)
        throw std::invalid_argument("matmul: inner dimension mismatch " + shape_str(sa) + " x " + shape_str(sb));

    std::vector<std::size_t> shape = (ba || bb) ? std::vector<std::size_t>{batch, p, r}
                                                : std::vector<std::size_t>{p, r};
    std::vector<double> out(batch * p * r, 0.0);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    for (std::size_t t = 0; t < batch; ++t)
        mm_nn(out.data() + t * p * r, av + (ba ? t * p * q : 0), bv + (bb ? t * q * r : 0), p, q, r);

    auto an = a.node();
    auto bn = b.node();
    return make_op(std::move(shape), std::move(out), {an, bn},
                   [an, bn, ba, bb, batch, p, q, r](Node& self) {
                       const double* g = self.grad.data();
                       if (an->requires_grad) {
                           an->ensure_grad();
                           for (std::size_t t = 0; t < batch; ++t)
                               mm_nt(an->grad.data() + (ba ? t * p * q : 0), g + t * p * r,
                                     bn->values.data() + (bb ? t * q * r : 0), p, r, q);
                       }
                       if (bn->requires_grad) {
                           bn->ensure_grad();
                           for (std::size_t t = 0; t < batch; ++t)
                               mm_tn(bn->grad.data() + (bb ? t * q * r : 0),
                                     an->values.data() + (ba ? t * p * q : 0), g + t * p * r, q, p, r);
                       }
                   });
}

Var transpose(const Var& a) {
    const auto& s = a.shape();
    if (s.size() < 2)
        throw std::invalid_argument("transpose: rank must be >= 2, got " + shape_str(s));
    if (s.size() > 3) throw std::invalid_argument("transpose: unsupported rank " + shape_str(s));
    const bool batched = s.size() == 3;
    const std::size_t batch = batched ? s[0] : 1;
    const std::size_t p = s[s.size() - 2], q = s[s.size() - 1];
    std::vector<std::size_t> shape = batched ? std::vector<std::size_t>{batch, q, p}
                                             : std::vector<std::size_t>{q, p};
    std::vector<double> out(a.size());
    for (std::size_t t = 0; t < batch; ++t) {
        const double* src = a.values().data() + t * p * q;
        double* dst = out.data() + t * p * q;
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < q; ++j) dst[j * p + i] = src[i * q + j];
    }
    auto an = a.node();
    return make_op(std::move(shape), std::move(out), {an}, [an, batch, p, q](Node& self) {
        an->ensure_grad();
        for (std::size_t t = 0; t < batch; ++t) {
            const double* g = self.grad.data() + t * p * q;
            double* dst = an->grad.data() + t * p * q;
            for (std::size_t j = 0; j < q; ++j)
                for (std::size_t i = 0; i < p; ++i) dst[i * q + j] += g[j * p + i];
        }
    });
}

Var add(const Var& a, const Var& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    auto an = a.node();
    auto bn = b.node();
    return make_op(a.shape(), std::move(out), {an, bn}, [an, bn](Node& self) {
        for (auto* n : {an.get(), bn.get()}) {
            if (!n->requires_grad) continue;
            n->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) n->grad[i] += self.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var scale(const Var& a, double s) {
    if (!std::isfinite(s)) throw std::invalid_argument("scale: non-finite scalar");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
    auto an = a.node();
    return make_op(a.shape(), std::move(out), {an}, [an, s](Node& self) {
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += s * self.grad[i];
    });
}

Var concat_features(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_features: no parts");
    const std::size_t n = parts[0].shape()[0];
    std::size_t total = 0;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
        if (p.shape().size() != 2 || p.shape()[0] != n)
            throw std::invalid_argument("concat_features: leading dimension mismatch, expected " +
                                        std::to_string(n) + " rows, got " + shape_str(p.shape()));
        widths.push_back(p.shape()[1]);
        total += p.shape()[1];
    }
    std::vector<double> out(n * total);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& pv = parts[k].values();
        for (std::size_t i = 0; i < n; ++i)
            std::memcpy(out.data() + i * total + off, pv.data() + i * widths[k], widths[k] * sizeof(double));
        off += widths[k];
    }
    std::vector<NodePtr> parents;
    for (const auto& p : parts) parents.push_back(p.node());
    return make_op({n, total}, std::move(out), parents, [parents, widths, n, total](Node& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < parents.size(); ++k) {
            auto& pn = *parents[k];
            if (pn.requires_grad) {
                pn.ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < widths[k]; ++j)
                        pn.grad[i * widths[k] + j] += self.grad[i * total + off + j];
            }
            off += widths[k];
        }
    });
}

Var concat_rows(const Var& a, const Var& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[1])
        throw std::invalid_argument("concat_rows: column mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    const std::size_t c = a.shape()[1];
    const std::size_t ra = a.shape()[0], rb = b.shape()[0];
    std::vector<double> out;
    out.reserve((ra + rb) * c);
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
    auto an = a.node();
    auto bn = b.node();
    return make_op({ra + rb, c}, std::move(out), {an, bn}, [an, bn, ra, rb, c](Node& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < ra * c; ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < rb * c; ++i) bn->grad[i] += self.grad[ra * c + i];
        }
    });
}

Var relu(const Var& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
    auto an = a.node();
    return make_op(a.shape(), std::move(out), {an}, [an](Node& self) {
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (an->values[i] > 0.0) an->grad[i] += self.grad[i];
    });
}

Var dropout(const Var& a, double rate, bool training, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
    auto an = a.node();
    if (!training || rate == 0.0) {
        return make_op(a.shape(), a.values(), {an}, [an](Node& self) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        });
    }
    const double keep = 1.0 - rate;
    const double inv = 1.0 / keep;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto mask = std::make_shared<std::vector<std::uint8_t>>(a.size());
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const bool live = uni(rng) >= rate;
        (*mask)[i] = live;
        out[i] = live ? a.values()[i] * inv : 0.0;
    }
    return make_op(a.shape(), std::move(out), {an}, [an, mask, inv](Node& self) {
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if ((*mask)[i]) an->grad[i] += inv * self.grad[i];
    });
}

Var embedding_lookup(const Var& bank, const std::vector<int>& indices) {
    if (bank.shape().size() != 2) throw std::invalid_argument("embedding_lookup: bank must be 2-D");
    const std::size_t k = bank.shape()[0], d = bank.shape()[1];
    for (int idx : indices)
        if (idx < 0 || static_cast<std::size_t>(idx) >= k)
            throw std::out_of_range("embedding_lookup: index " + std::to_string(idx) +
                                        " out of range [0," + std::to_string(k) + ")");
    std::vector<double> out(indices.size() * d);
    for (std::size_t i = 0; i < indices.size(); ++i)
        std::memcpy(out.data() + i * d, bank.values().data() + indices[i] * d, d * sizeof(double));
    auto bn = bank.node();
    return make_op({indices.size(), d}, std::move(out), {bn}, [bn, indices, d](Node& self) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < indices.size(); ++i)
            for (std::size_t j = 0; j < d; ++j) bn->grad[indices[i] * d + j] += self.grad[i * d + j];
    });
}

Var affine(const Var& x, const Var& w, const Var& b) {
    const auto& sx = x.shape();
    if (sx.empty() || w.shape().size() != 2 || b.shape().size() != 1)
        throw std::invalid_argument("affine: bad ranks x=" + shape_str(sx) + " w=" + shape_str(w.shape()) +
                                    " b=" + shape_str(b.shape()));
    const std::size_t p = sx.back();
    const std::size_t q = w.shape()[1];
    if (w.shape()[0] != p || b.shape()[0] != q)
        throw std::invalid_argument("affine: width mismatch x=" + shape_str(sx) + " w=" +
                                    shape_str(w.shape()) + " b=" + shape_str(b.shape()));
    std::size_t rows = 1;
    for (std::size_t i = 0; i + 1 < sx.size(); ++i) rows *= sx[i];
    std::vector<std::size_t> shape(sx.begin(), sx.end() - 1);
    shape.push_back(q);
    std::vector<double> out(rows * q);
    for (std::size_t i = 0; i < rows; ++i)
        std::memcpy(out.data() + i * q, b.values().data(), q * sizeof(double));
    mm_nn(out.data(), x.values().data(), w.values().data(), rows, p, q);
    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.node();
    return make_op(std::move(shape), std::move(out), {xn, wn, bn}, [xn, wn, bn, rows, p, q](Node& self) {
        const double* g = self.grad.data();
        if (xn->requires_grad) {
            xn->ensure_grad();
            mm_nt(xn->grad.data(), g, wn->values.data(), rows, q, p);
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            mm_tn(wn->grad.data(), xn->values.data(), g, p, rows, q);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < q; ++j) bn->grad[j] += g[i * q + j];
        }
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    auto an = a.node();
    return make_op({1}, {s}, {an}, [an](Node& self) {
        an->ensure_grad();
        for (double& g : an->grad) g += self.grad[0];
    });
}

Var mean_abs(const Var& a) {
    const double n = static_cast<double>(a.size());
    double s = 0.0;
    for (double v : a.values()) s += std::fabs(v);
    auto an = a.node();
    return make_op({1}, {s / n}, {an}, [an, n](Node& self) {
        an->ensure_grad();
        const double g = self.grad[0] / n;
        for (std::size_t i = 0; i < an->values.size(); ++i) {
            const double v = an->values[i];
            if (v > 0.0)
                an->grad[i] += g;
            else if (v < 0.0)
                an->grad[i] -= g;
        }
    });
}

Var rank_aggregate(const Var& bank, const std::vector<int>& ranks, std::size_t rows, std::size_t slots,
                   const Var& weights, const Var& bias) {
    const std::size_t k = bank.shape()[0], d = bank.shape()[1];
    if (ranks.size() != rows * slots)
        throw std::invalid_argument("rank_aggregate: ranks size mismatch");
    if (weights.shape() != std::vector<std::size_t>{slots} || bias.size() != 1)
        throw std::invalid_argument("rank_aggregate: bad aggregator shapes");
    for (int r : ranks)
        if (r < 0 || static_cast<std::size_t>(r) >= k)
            throw std::out_of_range("rank_aggregate: rank " + std::to_string(r) + " out of range [0," +
                                        std::to_string(k) + ")");
    const double* bv = bank.values().data();
    const double* wv = weights.values().data();
    const double b0 = bias.values()[0];
    std::vector<double> out(rows * d, b0);
    for (std::size_t r = 0; r < rows; ++r) {
        double* orow = out.data() + r * d;
        for (std::size_t s = 0; s < slots; ++s) {
            const double w = wv[s];
            const double* brow = bv + ranks[r * slots + s] * d;
            for (std::size_t c = 0; c < d; ++c) orow[c] += w * brow[c];
        }
    }
    auto bankn = bank.node();
    auto wn = weights.node();
    auto biasn = bias.node();
    return make_op({rows, d}, std::move(out), {bankn, wn, biasn},
                   [bankn, wn, biasn, ranks, rows, slots, d](Node& self) {
                       const double* g = self.grad.data();
                       if (bankn->requires_grad) {
                           bankn->ensure_grad();
                           for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t s = 0; s < slots; ++s) {
                                   const double w = wn->values[s];
                                   double* brow = bankn->grad.data() + ranks[r * slots + s] * d;
                                   const double* grow = g + r * d;
                                   for (std::size_t c = 0; c < d; ++c) brow[c] += w * grow[c];
                               }
                       }
                       if (wn->requires_grad) {
                           wn->ensure_grad();
                           for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t s = 0; s < slots; ++s) {
                                   const double* brow = bankn->values.data() + ranks[r * slots + s] * d;
                                   const double* grow = g + r * d;
                                   double acc = 0.0;
                                   for (std::size_t c = 0; c < d; ++c) acc += brow[c] * grow[c];
                                   wn->grad[s] += acc;
                               }
                       }
                       if (biasn->requires_grad) {
                           biasn->ensure_grad();
                           double acc = 0.0;
                           for (std::size_t i = 0; i < rows * d; ++i) acc += g[i];
                           biasn->grad[0] += acc;
                       }
                   });
}

void backward(const Var& loss, double seed) {
    if (loss.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS over the requires_grad subgraph.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* parent = node->parents[idx++].get();
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] += seed;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

Var apply(const ResidualBlock& block, const Var& x, const ForwardCtx& ctx) {
    Var h = relu(affine(x, block.w1, block.b1));
    if (ctx.dropout_rate > 0.0 && ctx.training) {
        if (!ctx.rng) throw std::invalid_argument("residual block: dropout in training mode needs an rng");
        h = dropout(h, ctx.dropout_rate, true, *ctx.rng);
    }
    Var y = affine(h, block.w2, block.b2);
    Var s = block.skip ? affine(x, block.skip->first, block.skip->second) : x;
    return add(y, s);
}

Var ParameterStore::create(const std::string& name, std::vector<std::size_t> shape,
                           std::vector<double> values) {
    if (entries_.count(name)) throw std::invalid_argument("parameter '" + name + "' already exists");
    Var v = Var::leaf(std::move(shape), std::move(values), true);
    entries_[name] = ParamEntry{v, std::vector<double>(v.size(), 0.0), std::vector<double>(v.size(), 0.0)};
    return v;
}

Var ParameterStore::create_uniform(const std::string& name, std::vector<std::size_t> shape, double lo,
                                   double hi, std::mt19937_64& rng) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::uniform_real_distribution<double> uni(lo, hi);
    std::vector<double> values(n);
    for (double& v : values) v = uni(rng);
    return create(name, std::move(shape), std::move(values));
}

ResidualBlock ParameterStore::create_residual_block(const std::string& prefix, std::size_t in,
                                                    std::size_t hidden, std::size_t out,
                                                    std::mt19937_64& rng) {
    ResidualBlock b;
    b.in = in;
    b.hidden = hidden;
    b.out = out;
    const double s1 = 1.0 / std::sqrt(static_cast<double>(in));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    b.w1 = create_uniform(prefix + ".w1", {in, hidden}, -s1, s1, rng);
    b.b1 = create(prefix + ".b1", {hidden}, std::vector<double>(hidden, 0.0));
    b.w2 = create_uniform(prefix + ".w2", {hidden, out}, -s2, s2, rng);
    b.b2 = create(prefix + ".b2", {out}, std::vector<double>(out, 0.0));
    if (in != out) {
        Var sw = create_uniform(prefix + ".skip_w", {in, out}, -s1, s1, rng);
        Var sb = create(prefix + ".skip_b", {out}, std::vector<double>(out, 0.0));
        b.skip = {sw, sb};
    }
    return b;
}

ParamEntry& ParameterStore::entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
    return it->second;
}

void ParameterStore::zero_grads() {
    for (auto& [name, e] : entries_) e.value.node()->grad.assign(e.value.size(), 0.0);
}

std::map<std::string, std::vector<double>> ParameterStore::snapshot_values() const {
    std::map<std::string, std::vector<double>> snap;
    for (const auto& [name, e] : entries_) snap[name] = e.value.values();
    return snap;
}

void ParameterStore::restore_values(const std::map<std::string, std::vector<double>>& snap) {
    for (auto& [name, e] : entries_) e.value.mutable_values() = snap.at(name);
}

void adamw_step(ParameterStore& store, double lr, double beta1, double beta2, double eps,
                double weight_decay) {
    store.set_step_count(store.step_count() + 1);
    const double t = static_cast<double>(store.step_count());
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (auto& [name, e] : store.entries()) {
        auto& node = *e.value.node();
        if (node.grad.size() != node.values.size())
            throw std::invalid_argument("adamw_step: missing gradient for parameter '" + name + "'");
        for (std::size_t i = 0; i < node.values.size(); ++i) {
            const double g = node.grad[i];
            e.adam_m[i] = beta1 * e.adam_m[i] + (1.0 - beta1) * g;
            e.adam_v[i] = beta2 * e.adam_v[i] + (1.0 - beta2) * g * g;
            const double m_hat = e.adam_m[i] / bc1;
            const double v_hat = e.adam_v[i] / bc2;
            node.values[i] = node.values[i] * (1.0 - lr * weight_decay) -
                             lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
    store.zero_grads();
}

double grad_check(const std::function<Var()>& f, const std::vector<Var>& leaves, double step) {
    for (const Var& leaf : leaves) leaf.node()->grad.assign(leaf.size(), 0.0);
    Var loss = f();
    backward(loss);
    std::vector<std::vector<double>> analytic;
    for (const Var& leaf : leaves) {
        if (leaf.node()->grad.size() == leaf.size())
            analytic.push_back(leaf.node()->grad);
        else
            analytic.emplace_back(leaf.size(), 0.0);
    }
    double max_err = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& values = leaves[li].node()->values;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double orig = values[i];
            values[i] = orig + step;
            const double up = f().item();
            values[i] = orig - step;
            const double down = f().item();
            values[i] = orig;
            const double numeric = (up - down) / (2.0 * step);
            const double err = std::fabs(analytic[li][i] - numeric) / std::max(1.0, std::fabs(numeric));
            max_err = std::max(max_err, err);
        }
    }
    for (const Var& leaf : leaves) leaf.node()->grad.assign(leaf.size(), 0.0);
    return max_err;
}

}  // namespace stps::diff
