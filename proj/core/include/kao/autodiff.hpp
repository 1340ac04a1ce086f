#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "kao/grid.hpp"

namespace kao::ad {

struct Node;
using Var = std::shared_ptr<Node>;

/// One tape node. Values are Grids; gradients accumulate into `grad` during
/// the reverse sweep. Leaves created via param() receive gradients, leaves
/// created via constant() do not.
struct Node {
    Grid value;
    Grid grad;
    bool requires_grad = false;
    bool grad_alloc = false;
    int64_t id = 0;
    std::vector<Var> inputs;
    std::function<void(Node&)> backprop;  // empty for leaves

    Grid& ensure_grad();
    void zero_grad();
};

Var constant(Grid v);
Var param(Grid v);

/// Reverse sweep from a scalar root (numel 1). Gradients accumulate; call
/// zero_grad on leaves between uses.
void backward(const Var& root);

// ---- elementwise / structural ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var relu(const Var& a);
Var reshape(const Var& a, std::vector<int64_t> shape);

// A[m,n] + v broadcast to every row (v.numel() == n)
Var add_broadcast_rows(const Var& a, const Var& v);

// out = a*(1-w) + b*w, w a constant grid broadcast per row over columns
// (w.numel() == rows of a) or elementwise (w.numel() == a.numel())
Var blend_rows(const Var& a, const Var& b, const Grid& w);

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);     // [m,k]x[k,n]
Var softmax_rows(const Var& a);             // row-wise softmax on [m,n]

// ---- gathers ----
// out[i] = a[idx[i]]; backward scatter-adds
Var gather_elems(const Var& a, std::vector<int64_t> idx, std::vector<int64_t> out_shape);
// out row r = a row rows[r]
Var gather_rows(const Var& a, const std::vector<int64_t>& rows);

Var concat_cols(const std::vector<Var>& parts);               // [m,n_i] -> [m, sum n_i]
Var slice_cols(const Var& a, int64_t begin, int64_t count);   // [m,n] -> [m,count]

// channelwise max over rows selected by sel (sel[r] != 0); rows shape [n].
// Requires at least one selected row.
Var rowset_max(const Var& a, const std::vector<uint8_t>& sel);

// out = a + u0 broadcast to rows with assign==0 + u1 to rows with assign==1
Var add_region_rows(const Var& a, const Var& u0, const Var& u1,
                    const std::vector<uint8_t>& assign);

// ---- reductions (64-bit accumulation) ----
Var sum(const Var& a);                        // -> scalar
Var sq_dist_const(const Var& a, Grid target); // sum (a - target)^2 -> scalar

}  // namespace kao::ad
