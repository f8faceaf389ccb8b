#include "structformer/ops.hpp"

#include <algorithm>
#include <cmath>

namespace structformer {

namespace {

using Node = std::shared_ptr<TensorNode>;

bool track(std::initializer_list<const Tensor*> inputs) {
    if (!grad_enabled()) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

std::vector<real>& grad_buf(const Node& n) {
    if (n->grad.empty()) {
        n->grad.assign(n->values.size(), real(0));
    }
    return n->grad;
}

// p x q times q x r, accumulating into c.
void mm_nn(const real* a, const real* b, real* c, int p, int q, int r) {
    for (int i = 0; i < p; ++i) {
        const real* arow = a + static_cast<std::size_t>(i) * q;
        real* crow = c + static_cast<std::size_t>(i) * r;
        for (int k = 0; k < q; ++k) {
            const real aik = arow[k];
            const real* brow = b + static_cast<std::size_t>(k) * r;
            for (int j = 0; j < r; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
}

// p x q times (r x q)^T, accumulating into c [p x r].
void mm_nt(const real* a, const real* b, real* c, int p, int q, int r) {
    for (int i = 0; i < p; ++i) {
        const real* arow = a + static_cast<std::size_t>(i) * q;
        real* crow = c + static_cast<std::size_t>(i) * r;
        for (int j = 0; j < r; ++j) {
            const real* brow = b + static_cast<std::size_t>(j) * q;
            real acc = 0;
            for (int k = 0; k < q; ++k) {
                acc += arow[k] * brow[k];
            }
            crow[j] += acc;
        }
    }
}

// (p x q)^T times p x r, accumulating into c [q x r].
void mm_tn(const real* a, const real* b, real* c, int p, int q, int r) {
    for (int i = 0; i < p; ++i) {
        const real* arow = a + static_cast<std::size_t>(i) * q;
        const real* brow = b + static_cast<std::size_t>(i) * r;
        for (int k = 0; k < q; ++k) {
            const real aik = arow[k];
            real* crow = c + static_cast<std::size_t>(k) * r;
            for (int j = 0; j < r; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_dims(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
               "matmul: incompatible shapes " + a.shape_str() + " and " + b.shape_str());
    const int p = a.dim(0), q = a.dim(1), r = b.dim(1);
    Tensor out = Tensor::zeros({p, r}, track({&a, &b}));
    mm_nn(a.values().data(), b.values().data(), out.values().data(), p, q, r);
    if (out.requires_grad()) {
        Node an = a.node(), bn = b.node(), on = out.node();
        active_tape().record([an, bn, on, p, q, r] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            if (an->requires_grad) {
                mm_nt(g, bn->values.data(), grad_buf(an).data(), p, r, q);
            }
            if (bn->requires_grad) {
                mm_tn(an->values.data(), g, grad_buf(bn).data(), p, q, r);
            }
        });
    }
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check_dims(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1),
               "matmul_nt: incompatible shapes " + a.shape_str() + " and " + b.shape_str());
    const int p = a.dim(0), q = a.dim(1), r = b.dim(0);
    Tensor out = Tensor::zeros({p, r}, track({&a, &b}));
    mm_nt(a.values().data(), b.values().data(), out.values().data(), p, q, r);
    if (out.requires_grad()) {
        Node an = a.node(), bn = b.node(), on = out.node();
        active_tape().record([an, bn, on, p, q, r] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            // out = a * b^T: da = g * b, db = g^T * a
            if (an->requires_grad) {
                mm_nn(g, bn->values.data(), grad_buf(an).data(), p, r, q);
            }
            if (bn->requires_grad) {
                mm_tn(g, an->values.data(), grad_buf(bn).data(), p, r, q);
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_dims(a.shape() == b.shape(),
               "add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = Tensor::zeros(a.shape(), track({&a, &b}));
    const std::size_t n = a.numel();
    const real* av = a.values().data();
    const real* bv = b.values().data();
    real* ov = out.values().data();
    for (std::size_t i = 0; i < n; ++i) {
        ov[i] = av[i] + bv[i];
    }
    if (out.requires_grad()) {
        Node an = a.node(), bn = b.node(), on = out.node();
        active_tape().record([an, bn, on, n] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            if (an->requires_grad) {
                real* ga = grad_buf(an).data();
                for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
            }
            if (bn->requires_grad) {
                real* gb = grad_buf(bn).data();
                for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

Tensor add_row_broadcast(const Tensor& m, const Tensor& v) {
    check_dims(m.rank() == 2 && v.rank() == 1 && m.dim(1) == v.dim(0),
               "add_row_broadcast: shape mismatch " + m.shape_str() + " vs " + v.shape_str());
    const int p = m.dim(0), q = m.dim(1);
    Tensor out = Tensor::zeros({p, q}, track({&m, &v}));
    const real* mv = m.values().data();
    const real* vv = v.values().data();
    real* ov = out.values().data();
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < q; ++j) {
            ov[static_cast<std::size_t>(i) * q + j] = mv[static_cast<std::size_t>(i) * q + j] + vv[j];
        }
    }
    if (out.requires_grad()) {
        Node mn = m.node(), vn = v.node(), on = out.node();
        active_tape().record([mn, vn, on, p, q] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            if (mn->requires_grad) {
                real* gm = grad_buf(mn).data();
                const std::size_t n = static_cast<std::size_t>(p) * q;
                for (std::size_t i = 0; i < n; ++i) gm[i] += g[i];
            }
            if (vn->requires_grad) {
                real* gv = grad_buf(vn).data();
                for (int i = 0; i < p; ++i) {
                    for (int j = 0; j < q; ++j) {
                        gv[j] += g[static_cast<std::size_t>(i) * q + j];
                    }
                }
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& a, real c) {
    Tensor out = Tensor::zeros(a.shape(), track({&a}));
    const std::size_t n = a.numel();
    const real* av = a.values().data();
    real* ov = out.values().data();
    for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] * c;
    if (out.requires_grad()) {
        Node an = a.node(), on = out.node();
        active_tape().record([an, on, c, n] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            real* ga = grad_buf(an).data();
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * c;
        });
    }
    return out;
}

Tensor gelu(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape(), track({&a}));
    const std::size_t n = a.numel();
    const real* av = a.values().data();
    real* ov = out.values().data();
    const double inv_sqrt2 = 0.7071067811865475;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(av[i]);
        ov[i] = static_cast<real>(0.5 * x * (1.0 + std::erf(x * inv_sqrt2)));
    }
    if (out.requires_grad()) {
        Node an = a.node(), on = out.node();
        active_tape().record([an, on, n] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            const real* av2 = an->values.data();
            real* ga = grad_buf(an).data();
            const double inv_sqrt2pi = 0.3989422804014327;
            const double inv_sqrt2l = 0.7071067811865475;
            for (std::size_t i = 0; i < n; ++i) {
                const double x = static_cast<double>(av2[i]);
                const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2l));
                const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                ga[i] += g[i] * static_cast<real>(cdf + x * pdf);
            }
        });
    }
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    check_dims(x.rank() == 2, "softmax_rows: expected matrix, got " + x.shape_str());
    const int p = x.dim(0), q = x.dim(1);
    Tensor out = Tensor::zeros({p, q}, track({&x}));
    const real* xv = x.values().data();
    real* ov = out.values().data();
    for (int i = 0; i < p; ++i) {
        const real* row = xv + static_cast<std::size_t>(i) * q;
        real* orow = ov + static_cast<std::size_t>(i) * q;
        real mx = row[0];
        for (int j = 1; j < q; ++j) mx = std::max(mx, row[j]);
        real sum = 0;
        for (int j = 0; j < q; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        const real inv = real(1) / sum;
        for (int j = 0; j < q; ++j) orow[j] *= inv;
    }
    if (out.requires_grad()) {
        Node xn = x.node(), on = out.node();
        active_tape().record([xn, on, p, q] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            const real* y = on->values.data();
            real* gx = grad_buf(xn).data();
            for (int i = 0; i < p; ++i) {
                const std::size_t off = static_cast<std::size_t>(i) * q;
                real dot = 0;
                for (int j = 0; j < q; ++j) dot += g[off + j] * y[off + j];
                for (int j = 0; j < q; ++j) {
                    gx[off + j] += y[off + j] * (g[off + j] - dot);
                }
            }
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps) {
    check_dims(x.rank() == 2, "layer_norm: expected matrix, got " + x.shape_str());
    const int p = x.dim(0), q = x.dim(1);
    check_dims(gain.rank() == 1 && gain.dim(0) == q && bias.rank() == 1 && bias.dim(0) == q,
               "layer_norm: gain/bias must be [" + std::to_string(q) + "], got " +
                   gain.shape_str() + " and " + bias.shape_str());
    Tensor out = Tensor::zeros({p, q}, track({&x, &gain, &bias}));
    // Cache per-row inverse stddev and the standardized values for backward.
    auto inv_std = std::make_shared<std::vector<real>>(static_cast<std::size_t>(p));
    auto xhat = std::make_shared<std::vector<real>>(static_cast<std::size_t>(p) * q);
    const real* xv = x.values().data();
    const real* gv = gain.values().data();
    const real* bv = bias.values().data();
    real* ov = out.values().data();
    for (int i = 0; i < p; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * q;
        real mean = 0;
        for (int j = 0; j < q; ++j) mean += xv[off + j];
        mean /= static_cast<real>(q);
        real var = 0;
        for (int j = 0; j < q; ++j) {
            const real d = xv[off + j] - mean;
            var += d * d;
        }
        var /= static_cast<real>(q);
        const real is = real(1) / std::sqrt(var + eps);
        (*inv_std)[static_cast<std::size_t>(i)] = is;
        for (int j = 0; j < q; ++j) {
            const real h = (xv[off + j] - mean) * is;
            (*xhat)[off + j] = h;
            ov[off + j] = gv[j] * h + bv[j];
        }
    }
    if (out.requires_grad()) {
        Node xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node();
        active_tape().record([xn, gn, bn, on, inv_std, xhat, p, q] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            const real* gv2 = gn->values.data();
            if (gn->requires_grad) {
                real* gg = grad_buf(gn).data();
                for (int i = 0; i < p; ++i) {
                    const std::size_t off = static_cast<std::size_t>(i) * q;
                    for (int j = 0; j < q; ++j) gg[j] += g[off + j] * (*xhat)[off + j];
                }
            }
            if (bn->requires_grad) {
                real* gb = grad_buf(bn).data();
                for (int i = 0; i < p; ++i) {
                    const std::size_t off = static_cast<std::size_t>(i) * q;
                    for (int j = 0; j < q; ++j) gb[j] += g[off + j];
                }
            }
            if (xn->requires_grad) {
                real* gx = grad_buf(xn).data();
                for (int i = 0; i < p; ++i) {
                    const std::size_t off = static_cast<std::size_t>(i) * q;
                    real sum_gy = 0, sum_gyh = 0;
                    for (int j = 0; j < q; ++j) {
                        const real gy = g[off + j] * gv2[j];
                        sum_gy += gy;
                        sum_gyh += gy * (*xhat)[off + j];
                    }
                    const real mean_gy = sum_gy / static_cast<real>(q);
                    const real mean_gyh = sum_gyh / static_cast<real>(q);
                    const real is = (*inv_std)[static_cast<std::size_t>(i)];
                    for (int j = 0; j < q; ++j) {
                        const real gy = g[off + j] * gv2[j];
                        gx[off + j] += is * (gy - mean_gy - (*xhat)[off + j] * mean_gyh);
                    }
                }
            }
        });
    }
    return out;
}

Tensor embedding_lookup(const Tensor& table, int index) {
    check_dims(table.rank() == 2, "embedding_lookup: expected matrix, got " + table.shape_str());
    const int v = table.dim(0), c = table.dim(1);
    check(index >= 0 && index < v,
          "embedding_lookup: index " + std::to_string(index) + " out of range [0, " +
              std::to_string(v) + ")");
    Tensor out = Tensor::zeros({c}, track({&table}));
    const real* tv = table.values().data() + static_cast<std::size_t>(index) * c;
    std::copy(tv, tv + c, out.values().data());
    if (out.requires_grad()) {
        Node tn = table.node(), on = out.node();
        active_tape().record([tn, on, index, c] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            real* gt = grad_buf(tn).data() + static_cast<std::size_t>(index) * c;
            for (int j = 0; j < c; ++j) gt[j] += g[j];
        });
    }
    return out;
}

Tensor mean_pool_rows(const Tensor& x) {
    check_dims(x.rank() == 2 && x.dim(0) >= 1, "mean_pool_rows: expected non-empty matrix, got " + x.shape_str());
    const int n = x.dim(0), d = x.dim(1);
    Tensor out = Tensor::zeros({d}, track({&x}));
    const real* xv = x.values().data();
    real* ov = out.values().data();
    std::vector<real> column(static_cast<std::size_t>(n));
    const real inv_n = real(1) / static_cast<real>(n);
    for (int j = 0; j < d; ++j) {
        for (int i = 0; i < n; ++i) {
            column[static_cast<std::size_t>(i)] = xv[static_cast<std::size_t>(i) * d + j];
        }
        std::sort(column.begin(), column.end());
        real sum = 0;
        for (real v : column) sum += v;
        ov[j] = sum * inv_n;
    }
    if (out.requires_grad()) {
        Node xn = x.node(), on = out.node();
        active_tape().record([xn, on, n, d, inv_n] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            real* gx = grad_buf(xn).data();
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < d; ++j) {
                    gx[static_cast<std::size_t>(i) * d + j] += g[j] * inv_n;
                }
            }
        });
    }
    return out;
}

Tensor take_row(const Tensor& x, int row) {
    check_dims(x.rank() == 2, "take_row: expected matrix, got " + x.shape_str());
    check(row >= 0 && row < x.dim(0), "take_row: row " + std::to_string(row) + " out of range");
    const int d = x.dim(1);
    Tensor out = Tensor::zeros({d}, track({&x}));
    const real* src = x.values().data() + static_cast<std::size_t>(row) * d;
    std::copy(src, src + d, out.values().data());
    if (out.requires_grad()) {
        Node xn = x.node(), on = out.node();
        active_tape().record([xn, on, row, d] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            real* gx = grad_buf(xn).data() + static_cast<std::size_t>(row) * d;
            for (int j = 0; j < d; ++j) gx[j] += g[j];
        });
    }
    return out;
}

Tensor slice_rows(const Tensor& x, int r0, int r1) {
    check_dims(x.rank() == 2, "slice_rows: expected matrix, got " + x.shape_str());
    check(0 <= r0 && r0 < r1 && r1 <= x.dim(0), "slice_rows: bad range");
    const int d = x.dim(1), rows = r1 - r0;
    Tensor out = Tensor::zeros({rows, d}, track({&x}));
    const real* src = x.values().data() + static_cast<std::size_t>(r0) * d;
    std::copy(src, src + static_cast<std::size_t>(rows) * d, out.values().data());
    if (out.requires_grad()) {
        Node xn = x.node(), on = out.node();
        active_tape().record([xn, on, r0, rows, d] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            real* gx = grad_buf(xn).data() + static_cast<std::size_t>(r0) * d;
            const std::size_t n = static_cast<std::size_t>(rows) * d;
            for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
        });
    }
    return out;
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
    check_dims(x.rank() == 2, "slice_cols: expected matrix, got " + x.shape_str());
    check(0 <= c0 && c0 < c1 && c1 <= x.dim(1), "slice_cols: bad range");
    const int p = x.dim(0), q = x.dim(1), w = c1 - c0;
    Tensor out = Tensor::zeros({p, w}, track({&x}));
    const real* xv = x.values().data();
    real* ov = out.values().data();
    for (int i = 0; i < p; ++i) {
        const real* src = xv + static_cast<std::size_t>(i) * q + c0;
        std::copy(src, src + w, ov + static_cast<std::size_t>(i) * w);
    }
    if (out.requires_grad()) {
        Node xn = x.node(), on = out.node();
        active_tape().record([xn, on, p, q, c0, w] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            real* gx = grad_buf(xn).data();
            for (int i = 0; i < p; ++i) {
                for (int j = 0; j < w; ++j) {
                    gx[static_cast<std::size_t>(i) * q + c0 + j] += g[static_cast<std::size_t>(i) * w + j];
                }
            }
        });
    }
    return out;
}

namespace {

int part_rows(const Tensor& t) { return t.rank() == 1 ? 1 : t.dim(0); }
int part_cols(const Tensor& t) { return t.rank() == 1 ? t.dim(0) : t.dim(1); }

}  // namespace

Tensor concat_rows(const std::vector<Tensor>& parts) {
    check(!parts.empty(), "concat_rows: no parts");
    const int d = part_cols(parts[0]);
    int total = 0;
    bool req = false;
    for (const auto& t : parts) {
        check_dims(t.rank() <= 2 && part_cols(t) == d,
                   "concat_rows: width mismatch " + t.shape_str());
        total += part_rows(t);
        req = req || (grad_enabled() && t.requires_grad());
    }
    Tensor out = Tensor::zeros({total, d}, req);
    real* ov = out.values().data();
    std::size_t off = 0;
    for (const auto& t : parts) {
        std::copy(t.values().begin(), t.values().end(), ov + off);
        off += t.numel();
    }
    if (out.requires_grad()) {
        std::vector<Node> nodes;
        nodes.reserve(parts.size());
        for (const auto& t : parts) nodes.push_back(t.node());
        Node on = out.node();
        active_tape().record([nodes, on] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            std::size_t pos = 0;
            for (const auto& n : nodes) {
                const std::size_t len = n->values.size();
                if (n->requires_grad) {
                    real* gn = grad_buf(n).data();
                    for (std::size_t i = 0; i < len; ++i) gn[i] += g[pos + i];
                }
                pos += len;
            }
        });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    check(!parts.empty(), "concat_cols: no parts");
    const int p = parts[0].dim(0);
    int total = 0;
    bool req = false;
    for (const auto& t : parts) {
        check_dims(t.rank() == 2 && t.dim(0) == p, "concat_cols: row mismatch " + t.shape_str());
        total += t.dim(1);
        req = req || (grad_enabled() && t.requires_grad());
    }
    Tensor out = Tensor::zeros({p, total}, req);
    real* ov = out.values().data();
    int col = 0;
    for (const auto& t : parts) {
        const int w = t.dim(1);
        const real* tv = t.values().data();
        for (int i = 0; i < p; ++i) {
            std::copy(tv + static_cast<std::size_t>(i) * w, tv + static_cast<std::size_t>(i + 1) * w,
                      ov + static_cast<std::size_t>(i) * total + col);
        }
        col += w;
    }
    if (out.requires_grad()) {
        std::vector<Node> nodes;
        std::vector<int> widths;
        for (const auto& t : parts) {
            nodes.push_back(t.node());
            widths.push_back(t.dim(1));
        }
        Node on = out.node();
        active_tape().record([nodes, widths, on, p, total] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            int col2 = 0;
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                const int w = widths[k];
                if (nodes[k]->requires_grad) {
                    real* gn = grad_buf(nodes[k]).data();
                    for (int i = 0; i < p; ++i) {
                        for (int j = 0; j < w; ++j) {
                            gn[static_cast<std::size_t>(i) * w + j] +=
                                g[static_cast<std::size_t>(i) * total + col2 + j];
                        }
                    }
                }
                col2 += w;
            }
        });
    }
    return out;
}

Tensor concat_vec(const std::vector<Tensor>& parts) {
    check(!parts.empty(), "concat_vec: no parts");
    int total = 0;
    bool req = false;
    for (const auto& t : parts) {
        check_dims(t.rank() == 1, "concat_vec: expected vectors, got " + t.shape_str());
        total += t.dim(0);
        req = req || (grad_enabled() && t.requires_grad());
    }
    Tensor out = Tensor::zeros({total}, req);
    real* ov = out.values().data();
    std::size_t off = 0;
    for (const auto& t : parts) {
        std::copy(t.values().begin(), t.values().end(), ov + off);
        off += t.numel();
    }
    if (out.requires_grad()) {
        std::vector<Node> nodes;
        for (const auto& t : parts) nodes.push_back(t.node());
        Node on = out.node();
        active_tape().record([nodes, on] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            std::size_t pos = 0;
            for (const auto& n : nodes) {
                const std::size_t len = n->values.size();
                if (n->requires_grad) {
                    real* gn = grad_buf(n).data();
                    for (std::size_t i = 0; i < len; ++i) gn[i] += g[pos + i];
                }
                pos += len;
            }
        });
    }
    return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    check(!rows.empty(), "stack_rows: no rows");
    const int d = rows[0].dim(0);
    bool req = false;
    for (const auto& t : rows) {
        check_dims(t.rank() == 1 && t.dim(0) == d, "stack_rows: row shape mismatch " + t.shape_str());
        req = req || (grad_enabled() && t.requires_grad());
    }
    const int n = static_cast<int>(rows.size());
    Tensor out = Tensor::zeros({n, d}, req);
    real* ov = out.values().data();
    for (int i = 0; i < n; ++i) {
        std::copy(rows[static_cast<std::size_t>(i)].values().begin(),
                  rows[static_cast<std::size_t>(i)].values().end(),
                  ov + static_cast<std::size_t>(i) * d);
    }
    if (out.requires_grad()) {
        std::vector<Node> nodes;
        for (const auto& t : rows) nodes.push_back(t.node());
        Node on = out.node();
        active_tape().record([nodes, on, d] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                if (!nodes[i]->requires_grad) continue;
                real* gn = grad_buf(nodes[i]).data();
                for (int j = 0; j < d; ++j) gn[j] += g[i * static_cast<std::size_t>(d) + j];
            }
        });
    }
    return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    check_dims(logits.rank() == 2, "cross_entropy: expected matrix, got " + logits.shape_str());
    const int b = logits.dim(0), c = logits.dim(1);
    check(static_cast<int>(labels.size()) == b,
          "cross_entropy: got " + std::to_string(labels.size()) + " labels for batch " + std::to_string(b));
    for (int i = 0; i < b; ++i) {
        check(labels[static_cast<std::size_t>(i)] >= 0 && labels[static_cast<std::size_t>(i)] < c,
              "cross_entropy: label " + std::to_string(labels[static_cast<std::size_t>(i)]) +
                  " out of range [0, " + std::to_string(c) + ")");
    }
    Tensor out = Tensor::zeros({1}, track({&logits}));
    const real* lv = logits.values().data();
    real total = 0;
    for (int i = 0; i < b; ++i) {
        const real* row = lv + static_cast<std::size_t>(i) * c;
        real mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        real sum = 0;
        for (int j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
        total += std::log(sum) + mx - row[labels[static_cast<std::size_t>(i)]];
    }
    out.values()[0] = total / static_cast<real>(b);
    if (out.requires_grad()) {
        Node ln = logits.node(), on = out.node();
        auto labels_copy = labels;
        active_tape().record([ln, on, labels_copy, b, c] {
            if (on->grad.empty()) return;
            const real g = on->grad[0] / static_cast<real>(b);
            const real* lv2 = ln->values.data();
            real* gl = grad_buf(ln).data();
            for (int i = 0; i < b; ++i) {
                const real* row = lv2 + static_cast<std::size_t>(i) * c;
                real mx = row[0];
                for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
                real sum = 0;
                for (int j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
                const real inv = real(1) / sum;
                for (int j = 0; j < c; ++j) {
                    real p = std::exp(row[j] - mx) * inv;
                    if (j == labels_copy[static_cast<std::size_t>(i)]) p -= real(1);
                    gl[static_cast<std::size_t>(i) * c + j] += g * p;
                }
            }
        });
    }
    return out;
}

Tensor mse(const Tensor& pred, const std::vector<real>& target) {
    check_dims(pred.rank() == 1, "mse: expected vector, got " + pred.shape_str());
    const int b = pred.dim(0);
    check(static_cast<int>(target.size()) == b,
          "mse: got " + std::to_string(target.size()) + " targets for " + std::to_string(b) + " predictions");
    Tensor out = Tensor::zeros({1}, track({&pred}));
    const real* pv = pred.values().data();
    real total = 0;
    for (int i = 0; i < b; ++i) {
        const real d = pv[static_cast<std::size_t>(i)] - target[static_cast<std::size_t>(i)];
        total += d * d;
    }
    out.values()[0] = total / static_cast<real>(b);
    if (out.requires_grad()) {
        Node pn = pred.node(), on = out.node();
        auto target_copy = target;
        active_tape().record([pn, on, target_copy, b] {
            if (on->grad.empty()) return;
            const real g = on->grad[0];
            const real* pv2 = pn->values.data();
            real* gp = grad_buf(pn).data();
            for (int i = 0; i < b; ++i) {
                gp[static_cast<std::size_t>(i)] +=
                    g * real(2) * (pv2[static_cast<std::size_t>(i)] - target_copy[static_cast<std::size_t>(i)]) /
                    static_cast<real>(b);
            }
        });
    }
    return out;
}

Tensor as_row_matrix(const Tensor& v) {
    check_dims(v.rank() == 1, "as_row_matrix: expected vector, got " + v.shape_str());
    const int d = v.dim(0);
    Tensor out = Tensor::zeros({1, d}, track({&v}));
    std::copy(v.values().begin(), v.values().end(), out.values().begin());
    if (out.requires_grad()) {
        Node vn = v.node(), on = out.node();
        active_tape().record([vn, on, d] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            real* gv = grad_buf(vn).data();
            for (int j = 0; j < d; ++j) gv[j] += g[j];
        });
    }
    return out;
}

Tensor flatten(const Tensor& x) {
    const auto n = static_cast<int>(x.numel());
    Tensor out = Tensor::zeros({n}, track({&x}));
    std::copy(x.values().begin(), x.values().end(), out.values().begin());
    if (out.requires_grad()) {
        Node xn = x.node(), on = out.node();
        active_tape().record([xn, on] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            real* gx = grad_buf(xn).data();
            for (std::size_t i = 0; i < on->grad.size(); ++i) gx[i] += g[i];
        });
    }
    return out;
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
    check(p >= 0.0 && p < 1.0, "dropout: p must be in [0, 1)");
    if (p == 0.0) return x;
    const std::size_t n = x.numel();
    auto mask = std::make_shared<std::vector<real>>(n);
    const real keep_scale = static_cast<real>(1.0 / (1.0 - p));
    for (auto& m : *mask) {
        m = rng.bernoulli(p) ? real(0) : keep_scale;
    }
    Tensor out = Tensor::zeros(x.shape(), track({&x}));
    const real* xv = x.values().data();
    real* ov = out.values().data();
    for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] * (*mask)[i];
    if (out.requires_grad()) {
        Node xn = x.node(), on = out.node();
        active_tape().record([xn, on, mask, n] {
            if (on->grad.empty()) return;
            const real* g = on->grad.data();
            real* gx = grad_buf(xn).data();
            for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (*mask)[i];
        });
    }
    return out;
}

Tensor weighted_sum(const Tensor& x, const std::vector<real>& w) {
    check(x.numel() == w.size(), "weighted_sum: weight count mismatch");
    Tensor out = Tensor::zeros({1}, track({&x}));
    const real* xv = x.values().data();
    real total = 0;
    for (std::size_t i = 0; i < w.size(); ++i) total += xv[i] * w[i];
    out.values()[0] = total;
    if (out.requires_grad()) {
        Node xn = x.node(), on = out.node();
        auto w_copy = w;
        active_tape().record([xn, on, w_copy] {
            if (on->grad.empty()) return;
            const real g = on->grad[0];
            real* gx = grad_buf(xn).data();
            for (std::size_t i = 0; i < w_copy.size(); ++i) gx[i] += g * w_copy[i];
        });
    }
    return out;
}

}  // namespace structformer
