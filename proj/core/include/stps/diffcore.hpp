#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stps/common.hpp"

namespace stps::diff {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape. Values are computed eagerly when the
// producing operation runs; backward_fn replays the adjoint rule.
struct Node {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;

    std::size_t size() const { return values.size(); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

// Value-semantics handle to a graph node.
class Var {
  public:
    Var() = default;
    explicit Var(NodePtr n) : node_(std::move(n)) {}

    static Var leaf(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad);
    static Var constant(std::vector<std::size_t> shape, std::vector<double> values);
    static Var scalar(double v);

    bool valid() const { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return node_->shape; }
    const std::vector<double>& values() const { return node_->values; }
    std::vector<double>& mutable_values() { return node_->values; }
    const std::vector<double>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    std::size_t size() const { return node_->values.size(); }
    double item() const;

    NodePtr node() const { return node_; }

  private:
    NodePtr node_;
};

// ---- operations ----

// Matrix product. Supports 2-D operands and a leading batch dimension on
// either or both sides (equal batch counts when both are batched).
Var matmul(const Var& a, const Var& b);

// Swap the last two axes (rank 2 or 3).
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double s);

// Concatenate along the last axis; all parts share the leading dimension.
Var concat_features(const std::vector<Var>& parts);

// Concatenate along the row axis; both parts share the column count.
Var concat_rows(const Var& a, const Var& b);

Var relu(const Var& a);

// Inverted dropout: survivors scaled by 1/(1-rate); identity in eval mode.
Var dropout(const Var& a, double rate, bool training, std::mt19937_64& rng);

// Row gather; backward scatter-adds (repeated indices accumulate).
Var embedding_lookup(const Var& bank, const std::vector<int>& indices);

// x W + b applied along the last axis.
Var affine(const Var& x, const Var& w, const Var& b);

Var sum(const Var& a);

// Mean of absolute values; subgradient 0 at exact zeros.
Var mean_abs(const Var& a);

// Gather `bank` rows by per-slot rank indices and contract the slot axis with
// a shared per-channel weight vector plus scalar bias:
//   out[r,c] = sum_s w[s] * bank[ranks[r*L+s], c] + bias
Var rank_aggregate(const Var& bank, const std::vector<int>& ranks, std::size_t rows, std::size_t slots,
                   const Var& weights, const Var& bias);

// Reverse topological sweep from a scalar loss. `seed` is the adjoint of the
// loss itself (1 for a plain backward; 1/B when averaging a batch of graphs).
void backward(const Var& loss, double seed = 1.0);

// ---- MLP block ----

struct ForwardCtx {
    bool training = false;
    double dropout_rate = 0.0;
    std::mt19937_64* rng = nullptr;
};

// Two affine layers with relu + dropout between them and a residual skip.
// The skip is identity when in==out, otherwise a learned affine projection.
struct ResidualBlock {
    Var w1, b1;  // in -> hidden
    Var w2, b2;  // hidden -> out
    std::optional<std::pair<Var, Var>> skip;
    std::size_t in = 0, hidden = 0, out = 0;
};

Var apply(const ResidualBlock& block, const Var& x, const ForwardCtx& ctx);

// ---- parameters & optimizer ----

struct ParamEntry {
    Var value;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
};

// Named trainable arrays plus AdamW moments. Iteration order is lexicographic
// by name (std::map), which fixes the serialization order.
class ParameterStore {
  public:
    Var create(const std::string& name, std::vector<std::size_t> shape, std::vector<double> values);
    Var create_uniform(const std::string& name, std::vector<std::size_t> shape, double lo, double hi,
                       std::mt19937_64& rng);
    ResidualBlock create_residual_block(const std::string& prefix, std::size_t in, std::size_t hidden,
                                        std::size_t out, std::mt19937_64& rng);

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    ParamEntry& entry(const std::string& name);
    const std::map<std::string, ParamEntry>& entries() const { return entries_; }
    std::map<std::string, ParamEntry>& entries() { return entries_; }

    long step_count() const { return step_count_; }
    void set_step_count(long s) { step_count_ = s; }

    void zero_grads();

    // Snapshot / restore of parameter values (early-stopping rewind).
    std::map<std::string, std::vector<double>> snapshot_values() const;
    void restore_values(const std::map<std::string, std::vector<double>>& snap);

  private:
    std::map<std::string, ParamEntry> entries_;
    long step_count_ = 0;
};

// Decoupled-weight-decay Adam over every entry of the store. Requires every
// parameter gradient to be populated; increments the shared step count, then
// zeroes all grads.
void adamw_step(ParameterStore& store, double lr, double beta1, double beta2, double eps,
                double weight_decay);

// Central-finite-difference check. `f` rebuilds the scalar loss graph from
// the current values of `leaves`; returns the max over all leaf coordinates
// of |analytic - numeric| / max(1, |numeric|).
double grad_check(const std::function<Var()>& f, const std::vector<Var>& leaves, double step = 1e-5);

}  // namespace stps::diff
