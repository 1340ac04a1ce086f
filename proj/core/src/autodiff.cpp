#include "kao/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace kao::ad {

namespace {
int64_t g_next_id = 1;

Var make(Grid value, std::vector<Var> inputs, std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->id = g_next_id++;
    for (auto& in : inputs)
        if (in->requires_grad) n->requires_grad = true;
    n->inputs = std::move(inputs);
    if (n->requires_grad) n->backprop = std::move(backprop);
    return n;
}

// row-accumulating matmul, 64-bit accumulators, ikj order
Grid mm(const Grid& a, const Grid& b) {
    const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    if (b.extent(0) != k) throw DomainError("matmul: inner extent mismatch");
    Grid out({m, n});
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    std::vector<double> row(static_cast<size_t>(n));
    for (int64_t i = 0; i < m; ++i) {
        std::fill(row.begin(), row.end(), 0.0);
        for (int64_t kk = 0; kk < k; ++kk) {
            const double av = pa[i * k + kk];
            const float* brow = pb + kk * n;
            for (int64_t j = 0; j < n; ++j) row[static_cast<size_t>(j)] += av * brow[j];
        }
        float* orow = po + i * n;
        for (int64_t j = 0; j < n; ++j) orow[j] = static_cast<float>(row[static_cast<size_t>(j)]);
    }
    return out;
}

// a^T b : [k,m]^T is a[m,k]? here a is [m,k], result [k,n] = sum_i a[i,*]^T b[i,*]
Grid mm_tn(const Grid& a, const Grid& b) {
    const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Grid out({k, n});
    const float* pa = a.data();
    const float* pb = b.data();
    std::vector<double> acc(static_cast<size_t>(k * n), 0.0);
    for (int64_t i = 0; i < m; ++i) {
        const float* brow = pb + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            const double av = pa[i * k + kk];
            double* orow = acc.data() + kk * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    float* po = out.data();
    for (int64_t i = 0; i < k * n; ++i) po[i] = static_cast<float>(acc[static_cast<size_t>(i)]);
    return out;
}

// a b^T : a[m,k], b[n,k] -> [m,n]
Grid mm_nt(const Grid& a, const Grid& b) {
    const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(0);
    Grid out({m, n});
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    for (int64_t i = 0; i < m; ++i) {
        const float* arow = pa + i * k;
        for (int64_t j = 0; j < n; ++j) {
            const float* brow = pb + j * k;
            double acc = 0.0;
            for (int64_t kk = 0; kk < k; ++kk)
                acc += static_cast<double>(arow[kk]) * brow[kk];
            po[i * n + j] = static_cast<float>(acc);
        }
    }
    return out;
}

void add_into(Grid& dst, const Grid& src) {
    for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

}  // namespace

Grid& Node::ensure_grad() {
    if (!grad_alloc) {
        grad = Grid(value.shape());
        grad_alloc = true;
    }
    return grad;
}

void Node::zero_grad() {
    if (grad_alloc)
        for (int64_t i = 0; i < grad.numel(); ++i) grad[i] = 0.0f;
}

Var constant(Grid v) { return make(std::move(v), {}, {}); }

Var param(Grid v) {
    auto n = make(std::move(v), {}, {});
    n->requires_grad = true;
    return n;
}

void backward(const Var& root) {
    if (root->value.numel() != 1) throw DomainError("backward: root must be scalar");
    // collect reachable grad-requiring nodes; ids increase with creation order,
    // so descending id is a valid reverse topological order
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.get()};
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        if (!n->requires_grad || !seen.insert(n).second) continue;
        order.push_back(n);
        for (auto& in : n->inputs) stack.push_back(in.get());
    }
    std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });
    root->ensure_grad()[0] += 1.0f;
    for (Node* n : order)
        if (n->backprop) n->backprop(*n);
}

Var add(const Var& a, const Var& b) {
    return make(a->value + b->value, {a, b}, [](Node& n) {
        for (size_t s = 0; s < 2; ++s)
            if (n.inputs[s]->requires_grad) add_into(n.inputs[s]->ensure_grad(), n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    return make(a->value - b->value, {a, b}, [](Node& n) {
        if (n.inputs[0]->requires_grad) add_into(n.inputs[0]->ensure_grad(), n.grad);
        if (n.inputs[1]->requires_grad) {
            Grid& g = n.inputs[1]->ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    return make(a->value * b->value, {a, b}, [](Node& n) {
        if (n.inputs[0]->requires_grad) {
            Grid& g = n.inputs[0]->ensure_grad();
            const Grid& other = n.inputs[1]->value;
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * other[i];
        }
        if (n.inputs[1]->requires_grad) {
            Grid& g = n.inputs[1]->ensure_grad();
            const Grid& other = n.inputs[0]->value;
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * other[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Grid out = a->value * static_cast<float>(s);
    return make(std::move(out), {a}, [s](Node& n) {
        Grid& g = n.inputs[0]->ensure_grad();
        const float fs = static_cast<float>(s);
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * fs;
    });
}

Var relu(const Var& a) {
    Grid out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0f ? out[i] : 0.0f;
    return make(std::move(out), {a}, [](Node& n) {
        Grid& g = n.inputs[0]->ensure_grad();
        const Grid& x = n.inputs[0]->value;
        for (int64_t i = 0; i < g.numel(); ++i)
            if (x[i] > 0.0f) g[i] += n.grad[i];
    });
}

Var reshape(const Var& a, std::vector<int64_t> shape) {
    return make(a->value.reshaped(shape), {a},
                [](Node& n) { add_into(n.inputs[0]->ensure_grad(), n.grad); });
}

Var add_broadcast_rows(const Var& a, const Var& v) {
    const int64_t m = a->value.extent(0), cols = a->value.extent(1);
    if (v->value.numel() != cols) throw DomainError("add_broadcast_rows: width mismatch");
    Grid out = a->value;
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < cols; ++j) out[i * cols + j] += v->value[j];
    return make(std::move(out), {a, v}, [m, cols](Node& n) {
        if (n.inputs[0]->requires_grad) add_into(n.inputs[0]->ensure_grad(), n.grad);
        if (n.inputs[1]->requires_grad) {
            Grid& g = n.inputs[1]->ensure_grad();
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < cols; ++j) g[j] += n.grad[i * cols + j];
        }
    });
}

Var blend_rows(const Var& a, const Var& b, const Grid& w) {
    if (!a->value.same_shape(b->value)) throw DomainError("blend_rows: shape mismatch");
    const int64_t m = a->value.extent(0), cols = a->value.extent(1);
    const bool per_row = w.numel() == m;
    if (!per_row && w.numel() != a->value.numel())
        throw DomainError("blend_rows: weight extent mismatch");
    Grid out(a->value.shape());
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < cols; ++j) {
            const float wi = per_row ? w[i] : w[i * cols + j];
            out[i * cols + j] = a->value[i * cols + j] * (1.0f - wi) + b->value[i * cols + j] * wi;
        }
    Grid wcopy = w;
    return make(std::move(out), {a, b}, [wcopy, per_row, m, cols](Node& n) {
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < cols; ++j) {
                const float wi = per_row ? wcopy[i] : wcopy[i * cols + j];
                const float g = n.grad[i * cols + j];
                if (n.inputs[0]->requires_grad)
                    n.inputs[0]->ensure_grad()[i * cols + j] += g * (1.0f - wi);
                if (n.inputs[1]->requires_grad) n.inputs[1]->ensure_grad()[i * cols + j] += g * wi;
            }
    });
}

Var matmul(const Var& a, const Var& b) {
    return make(mm(a->value, b->value), {a, b}, [](Node& n) {
        if (n.inputs[0]->requires_grad)
            add_into(n.inputs[0]->ensure_grad(), mm_nt(n.grad, n.inputs[1]->value));
        if (n.inputs[1]->requires_grad)
            add_into(n.inputs[1]->ensure_grad(), mm_tn(n.inputs[0]->value, n.grad));
    });
}

Var softmax_rows(const Var& a) {
    const int64_t m = a->value.extent(0), cols = a->value.extent(1);
    Grid out(a->value.shape());
    for (int64_t i = 0; i < m; ++i) {
        const float* row = a->value.data() + i * cols;
        float mx = row[0];
        for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        float* orow = out.data() + i * cols;
        double denom = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            orow[j] = std::exp(row[j] - mx);
            denom += orow[j];
        }
        const float inv = static_cast<float>(1.0 / denom);
        for (int64_t j = 0; j < cols; ++j) orow[j] *= inv;
    }
    return make(std::move(out), {a}, [m, cols](Node& n) {
        // dX = P o (dP - rowsum(dP o P))
        Grid& g = n.inputs[0]->ensure_grad();
        for (int64_t i = 0; i < m; ++i) {
            const float* p = n.value.data() + i * cols;
            const float* gp = n.grad.data() + i * cols;
            double dot = 0.0;
            for (int64_t j = 0; j < cols; ++j) dot += static_cast<double>(gp[j]) * p[j];
            const float fd = static_cast<float>(dot);
            float* go = g.data() + i * cols;
            for (int64_t j = 0; j < cols; ++j) go[j] += p[j] * (gp[j] - fd);
        }
    });
}

Var gather_elems(const Var& a, std::vector<int64_t> idx, std::vector<int64_t> out_shape) {
    Grid out(out_shape);
    for (size_t i = 0; i < idx.size(); ++i) out[static_cast<int64_t>(i)] = a->value[idx[i]];
    auto idx_shared = std::make_shared<std::vector<int64_t>>(std::move(idx));
    return make(std::move(out), {a}, [idx_shared](Node& n) {
        Grid& g = n.inputs[0]->ensure_grad();
        for (size_t i = 0; i < idx_shared->size(); ++i)
            g[(*idx_shared)[i]] += n.grad[static_cast<int64_t>(i)];
    });
}

Var gather_rows(const Var& a, const std::vector<int64_t>& rows) {
    const int64_t cols = a->value.extent(1);
    std::vector<int64_t> idx;
    idx.reserve(rows.size() * static_cast<size_t>(cols));
    for (int64_t r : rows)
        for (int64_t j = 0; j < cols; ++j) idx.push_back(r * cols + j);
    return gather_elems(a, std::move(idx), {static_cast<int64_t>(rows.size()), cols});
}

Var concat_cols(const std::vector<Var>& parts) {
    const int64_t m = parts[0]->value.extent(0);
    int64_t total = 0;
    for (auto& p : parts) {
        if (p->value.extent(0) != m) throw DomainError("concat_cols: row mismatch");
        total += p->value.extent(1);
    }
    Grid out({m, total});
    int64_t off = 0;
    for (auto& p : parts) {
        const int64_t c = p->value.extent(1);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < c; ++j) out[i * total + off + j] = p->value[i * c + j];
        off += c;
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return make(std::move(out), std::move(inputs), [m, total](Node& n) {
        int64_t off = 0;
        for (auto& in : n.inputs) {
            const int64_t c = in->value.extent(1);
            if (in->requires_grad) {
                Grid& g = in->ensure_grad();
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < c; ++j) g[i * c + j] += n.grad[i * total + off + j];
            }
            off += c;
        }
    });
}

Var slice_cols(const Var& a, int64_t begin, int64_t count) {
    const int64_t m = a->value.extent(0), cols = a->value.extent(1);
    std::vector<int64_t> idx;
    idx.reserve(static_cast<size_t>(m * count));
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < count; ++j) idx.push_back(i * cols + begin + j);
    return gather_elems(a, std::move(idx), {m, count});
}

Var rowset_max(const Var& a, const std::vector<uint8_t>& sel) {
    const int64_t m = a->value.extent(0), cols = a->value.extent(1);
    Grid out({1, cols});
    auto arg = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(cols), -1);
    bool any = false;
    for (int64_t i = 0; i < m; ++i) {
        if (!sel[static_cast<size_t>(i)]) continue;
        for (int64_t j = 0; j < cols; ++j) {
            const float v = a->value[i * cols + j];
            if ((*arg)[static_cast<size_t>(j)] < 0 || v > out[j]) {
                out[j] = v;
                (*arg)[static_cast<size_t>(j)] = i;
            }
        }
        any = true;
    }
    if (!any) throw DomainError("rowset_max: empty row selection");
    return make(std::move(out), {a}, [arg, cols](Node& n) {
        Grid& g = n.inputs[0]->ensure_grad();
        for (int64_t j = 0; j < cols; ++j) g[(*arg)[static_cast<size_t>(j)] * cols + j] += n.grad[j];
    });
}

Var add_region_rows(const Var& a, const Var& u0, const Var& u1,
                    const std::vector<uint8_t>& assign) {
    const int64_t m = a->value.extent(0), cols = a->value.extent(1);
    if (u0->value.numel() != cols || u1->value.numel() != cols)
        throw DomainError("add_region_rows: update width mismatch");
    Grid out = a->value;
    for (int64_t i = 0; i < m; ++i) {
        const Grid& u = assign[static_cast<size_t>(i)] ? u1->value : u0->value;
        for (int64_t j = 0; j < cols; ++j) out[i * cols + j] += u[j];
    }
    auto asg = std::make_shared<std::vector<uint8_t>>(assign);
    return make(std::move(out), {a, u0, u1}, [asg, m, cols](Node& n) {
        if (n.inputs[0]->requires_grad) add_into(n.inputs[0]->ensure_grad(), n.grad);
        for (int64_t i = 0; i < m; ++i) {
            Var& u = (*asg)[static_cast<size_t>(i)] ? n.inputs[2] : n.inputs[1];
            if (!u->requires_grad) continue;
            Grid& g = u->ensure_grad();
            for (int64_t j = 0; j < cols; ++j) g[j] += n.grad[i * cols + j];
        }
    });
}

Var sum(const Var& a) {
    Grid out({1}, {static_cast<float>(a->value.sum())});
    return make(std::move(out), {a}, [](Node& n) {
        Grid& g = n.inputs[0]->ensure_grad();
        const float s = n.grad[0];
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += s;
    });
}

Var sq_dist_const(const Var& a, Grid target) {
    if (!a->value.same_shape(target)) throw DomainError("sq_dist_const: shape mismatch");
    Grid out({1}, {static_cast<float>(a->value.sq_dist(target))});
    auto t = std::make_shared<Grid>(std::move(target));
    return make(std::move(out), {a}, [t](Node& n) {
        Grid& g = n.inputs[0]->ensure_grad();
        const float s = n.grad[0];
        const Grid& x = n.inputs[0]->value;
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += 2.0f * s * (x[i] - (*t)[i]);
    });
}

}  // namespace kao::ad
