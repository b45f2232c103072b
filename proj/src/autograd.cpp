#include "wm/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

namespace wm::ag {

namespace {

std::atomic<uint64_t> g_next_id{1};

Var make(Tensor val, std::vector<Var> parents, std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backward_fn = std::move(bw);
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return n;
}

void accum(const Var& p, const float* g, int64_t n) {
    if (!p->requires_grad) return;
    p->ensure_grad();
    float* dst = p->grad.data.data();
    for (int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->val.same_shape(b->val))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a->val.shape_str() + " vs " +
                                    b->val.shape_str());
}

}  // namespace

Var constant(Tensor v) { return make(std::move(v), {}, nullptr); }

Var param(Tensor v) {
    auto n = make(std::move(v), {}, nullptr);
    n->requires_grad = true;
    return n;
}

Var detach(const Var& x) { return constant(x->val); }

void backward(const Var& root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents)
            if (seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });
    root->ensure_grad();
    std::fill(root->grad.data.begin(), root->grad.data.end(), 1.0f);
    for (Node* n : order) {
        if (n->backward_fn && n->requires_grad && !n->grad.data.empty()) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->val;
    const float* bb = b->val.data.data();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bb[i];
    return make(std::move(out), {a, b}, [a, b](Node& n) {
        accum(a, n.grad.data.data(), n.grad.numel());
        accum(b, n.grad.data.data(), n.grad.numel());
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->val;
    const float* bb = b->val.data.data();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bb[i];
    return make(std::move(out), {a, b}, [a, b](Node& n) {
        accum(a, n.grad.data.data(), n.grad.numel());
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < n.grad.data.size(); ++i) b->grad.data[i] -= n.grad.data[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->val;
    const float* bb = b->val.data.data();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bb[i];
    return make(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < n.grad.data.size(); ++i) a->grad.data[i] += n.grad.data[i] * b->val.data[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < n.grad.data.size(); ++i) b->grad.data[i] += n.grad.data[i] * a->val.data[i];
        }
    });
}

Var scale(const Var& a, float s) {
    Tensor out = a->val;
    for (auto& x : out.data) x *= s;
    return make(std::move(out), {a}, [a, s](Node& n) {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.data.size(); ++i) a->grad.data[i] += s * n.grad.data[i];
    });
}

Var silu(const Var& x) {
    Tensor out = x->val;
    for (auto& v : out.data) {
        float sg = 1.0f / (1.0f + std::exp(-v));
        v = v * sg;
    }
    return make(std::move(out), {x}, [x](Node& n) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (size_t i = 0; i < n.grad.data.size(); ++i) {
            float v = x->val.data[i];
            float sg = 1.0f / (1.0f + std::exp(-v));
            x->grad.data[i] += n.grad.data[i] * sg * (1.0f + v * (1.0f - sg));
        }
    });
}

Var gelu(const Var& x) {
    constexpr float kC = 0.7978845608028654f;  // sqrt(2/pi)
    Tensor out = x->val;
    for (auto& v : out.data) {
        float t = std::tanh(kC * (v + 0.044715f * v * v * v));
        v = 0.5f * v * (1.0f + t);
    }
    return make(std::move(out), {x}, [x](Node& n) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (size_t i = 0; i < n.grad.data.size(); ++i) {
            float v = x->val.data[i];
            float u = kC * (v + 0.044715f * v * v * v);
            float t = std::tanh(u);
            float du = kC * (1.0f + 3.0f * 0.044715f * v * v);
            float d = 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du;
            x->grad.data[i] += n.grad.data[i] * d;
        }
    });
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

Var reshape(const Var& x, std::vector<int> shape) {
    if (Tensor::numel_of(shape) != x->val.numel())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor out;
    out.shape = std::move(shape);
    out.data = x->val.data;
    return make(std::move(out), {x}, [x](Node& n) { accum(x, n.grad.data.data(), n.grad.numel()); });
}

Var transpose01(const Var& x) {
    if (x->val.rank() < 2) throw std::invalid_argument("transpose01: rank < 2");
    int a = x->val.shape[0], b = x->val.shape[1];
    int64_t inner = x->val.numel() / (static_cast<int64_t>(a) * b);
    std::vector<int> oshape = x->val.shape;
    std::swap(oshape[0], oshape[1]);
    Tensor out(oshape);
    for (int i = 0; i < a; ++i)
        for (int j = 0; j < b; ++j)
            std::memcpy(out.data.data() + (static_cast<int64_t>(j) * a + i) * inner,
                        x->val.data.data() + (static_cast<int64_t>(i) * b + j) * inner,
                        sizeof(float) * inner);
    return make(std::move(out), {x}, [x, a, b, inner](Node& n) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int j = 0; j < b; ++j)
            for (int i = 0; i < a; ++i) {
                const float* g = n.grad.data.data() + (static_cast<int64_t>(j) * a + i) * inner;
                float* dst = x->grad.data.data() + (static_cast<int64_t>(i) * b + j) * inner;
                for (int64_t t = 0; t < inner; ++t) dst[t] += g[t];
            }
    });
}

Var slice0(const Var& x, int from, int to) {
    if (from < 0 || to > x->val.shape[0] || from >= to) throw std::invalid_argument("slice0: bad range");
    int64_t inner = x->val.numel() / x->val.shape[0];
    std::vector<int> oshape = x->val.shape;
    oshape[0] = to - from;
    Tensor out(oshape);
    std::memcpy(out.data.data(), x->val.data.data() + from * inner, sizeof(float) * out.data.size());
    return make(std::move(out), {x}, [x, from, inner](Node& n) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        float* dst = x->grad.data.data() + from * inner;
        for (size_t i = 0; i < n.grad.data.size(); ++i) dst[i] += n.grad.data[i];
    });
}

Var concat0(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat0: empty");
    std::vector<int> oshape = xs[0]->val.shape;
    int total = 0;
    for (const auto& x : xs) {
        if (x->val.rank() != static_cast<int>(oshape.size()))
            throw std::invalid_argument("concat0: rank mismatch");
        total += x->val.shape[0];
    }
    oshape[0] = total;
    Tensor out(oshape);
    size_t off = 0;
    for (const auto& x : xs) {
        std::memcpy(out.data.data() + off, x->val.data.data(), sizeof(float) * x->val.data.size());
        off += x->val.data.size();
    }
    std::vector<Var> parents(xs.begin(), xs.end());
    return make(std::move(out), std::move(parents), [xs](Node& n) {
        size_t off = 0;
        for (const auto& x : xs) {
            accum(x, n.grad.data.data() + off, x->val.numel());
            off += x->val.data.size();
        }
    });
}

Var add_broadcast0(const Var& x, const Var& p) {
    int64_t inner = p->val.numel();
    if (x->val.numel() % inner != 0) throw std::invalid_argument("add_broadcast0: size mismatch");
    int64_t outer = x->val.numel() / inner;
    Tensor out = x->val;
    for (int64_t o = 0; o < outer; ++o) {
        float* dst = out.data.data() + o * inner;
        const float* src = p->val.data.data();
        for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
    return make(std::move(out), {x, p}, [x, p, outer, inner](Node& n) {
        accum(x, n.grad.data.data(), n.grad.numel());
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int64_t o = 0; o < outer; ++o) {
            const float* g = n.grad.data.data() + o * inner;
            for (int64_t i = 0; i < inner; ++i) p->grad.data[i] += g[i];
        }
    });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    if (a->val.rank() != 2 || b->val.rank() != 2 || a->val.shape[1] != b->val.shape[0])
        throw std::invalid_argument("matmul: bad shapes " + a->val.shape_str() + " x " + b->val.shape_str());
    int m = a->val.shape[0], k = a->val.shape[1], n = b->val.shape[1];
    Tensor out({m, n});
    matmul_nn(a->val.data.data(), b->val.data.data(), out.data.data(), m, k, n);
    return make(std::move(out), {a, b}, [a, b, m, k, n](Node& nd) {
        if (a->requires_grad) {
            a->ensure_grad();
            std::vector<float> bt(static_cast<size_t>(k) * n);
            transpose2d(b->val.data.data(), bt.data(), k, n);
            matmul_nn_acc(nd.grad.data.data(), bt.data(), a->grad.data.data(), m, n, k);
        }
        if (b->requires_grad) {
            b->ensure_grad();
            std::vector<float> at(static_cast<size_t>(m) * k);
            transpose2d(a->val.data.data(), at.data(), m, k);
            matmul_nn_acc(at.data(), nd.grad.data.data(), b->grad.data.data(), k, m, n);
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    int din = w->val.shape[0], dout = w->val.shape[1];
    if (x->val.dim(-1) != din)
        throw std::invalid_argument("linear: input dim " + std::to_string(x->val.dim(-1)) + " != " +
                                    std::to_string(din));
    int64_t rows = x->val.numel() / din;
    std::vector<int> oshape = x->val.shape;
    oshape.back() = dout;
    Tensor out(oshape);
    matmul_nn(x->val.data.data(), w->val.data.data(), out.data.data(), static_cast<int>(rows), din, dout);
    if (b) {
        if (b->val.numel() != dout) throw std::invalid_argument("linear: bias size mismatch");
        for (int64_t r = 0; r < rows; ++r) {
            float* o = out.data.data() + r * dout;
            for (int j = 0; j < dout; ++j) o[j] += b->val.data[j];
        }
    }
    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    return make(std::move(out), std::move(parents), [x, w, b, rows, din, dout](Node& n) {
        const float* g = n.grad.data.data();
        if (x->requires_grad) {
            x->ensure_grad();
            std::vector<float> wt(static_cast<size_t>(din) * dout);
            transpose2d(w->val.data.data(), wt.data(), din, dout);
            matmul_nn_acc(g, wt.data(), x->grad.data.data(), static_cast<int>(rows), dout, din);
        }
        if (w->requires_grad) {
            w->ensure_grad();
            std::vector<float> xt(static_cast<size_t>(rows) * din);
            transpose2d(x->val.data.data(), xt.data(), static_cast<int>(rows), din);
            matmul_nn_acc(xt.data(), g, w->grad.data.data(), din, static_cast<int>(rows), dout);
        }
        if (b && b->requires_grad) {
            b->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int j = 0; j < dout; ++j) b->grad.data[j] += g[r * dout + j];
        }
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, float eps) {
    int d = x->val.dim(-1);
    int64_t rows = x->val.numel() / d;
    Tensor out(x->val.shape);
    auto stats = std::make_shared<std::vector<float>>(rows * 2);  // mu, rstd per row
    for (int64_t r = 0; r < rows; ++r) {
        const float* xr = x->val.data.data() + r * d;
        float mu = 0.0f;
        for (int i = 0; i < d; ++i) mu += xr[i];
        mu /= d;
        float var = 0.0f;
        for (int i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
        var /= d;
        float rstd = 1.0f / std::sqrt(var + eps);
        (*stats)[r * 2] = mu;
        (*stats)[r * 2 + 1] = rstd;
        float* o = out.data.data() + r * d;
        for (int i = 0; i < d; ++i) {
            float xh = (xr[i] - mu) * rstd;
            o[i] = gamma ? xh * gamma->val.data[i] + (beta ? beta->val.data[i] : 0.0f) : xh;
        }
    }
    std::vector<Var> parents{x};
    if (gamma) parents.push_back(gamma);
    if (beta) parents.push_back(beta);
    return make(std::move(out), std::move(parents), [x, gamma, beta, rows, d, stats](Node& n) {
        for (int64_t r = 0; r < rows; ++r) {
            const float* xr = x->val.data.data() + r * d;
            const float* g = n.grad.data.data() + r * d;
            float mu = (*stats)[r * 2], rstd = (*stats)[r * 2 + 1];
            if (gamma && gamma->requires_grad) gamma->ensure_grad();
            if (beta && beta->requires_grad) beta->ensure_grad();
            float sum_dxh = 0.0f, sum_dxh_xh = 0.0f;
            for (int i = 0; i < d; ++i) {
                float xh = (xr[i] - mu) * rstd;
                float dxh = gamma ? g[i] * gamma->val.data[i] : g[i];
                sum_dxh += dxh;
                sum_dxh_xh += dxh * xh;
                if (gamma && gamma->requires_grad) gamma->grad.data[i] += g[i] * xh;
                if (beta && beta->requires_grad) beta->grad.data[i] += g[i];
            }
            if (x->requires_grad) {
                x->ensure_grad();
                float* gx = x->grad.data.data() + r * d;
                for (int i = 0; i < d; ++i) {
                    float xh = (xr[i] - mu) * rstd;
                    float dxh = gamma ? g[i] * gamma->val.data[i] : g[i];
                    gx[i] += rstd * (dxh - sum_dxh / d - xh * sum_dxh_xh / d);
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

namespace {

// Iteration range of keys for query i.
inline void mask_range(AttnMask mask, int split, int s, int i, int& j0, int& j1) {
    j0 = 0;
    j1 = s;
    switch (mask) {
        case AttnMask::full: j0 = 0; j1 = s; break;
        case AttnMask::causal: j0 = 0; j1 = i + 1; break;
        case AttnMask::self_only: j0 = i; j1 = i + 1; break;
        case AttnMask::split_block:
            if (i < split) { j0 = 0; j1 = split; }
            else { j0 = split; j1 = s; }
            break;
    }
}

inline float dotf(const float* a, const float* b, int n) {
    float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return ((s0 + s1) + (s2 + s3));
}

}  // namespace

Var attention(const Var& q, const Var& k, const Var& v, int heads, AttnMask mask, int split) {
    if (q->val.rank() != 3) throw std::invalid_argument("attention: expected [B,S,D]");
    check_same_shape(q, k, "attention(q,k)");
    check_same_shape(k, v, "attention(k,v)");
    const int bsz = q->val.shape[0], s = q->val.shape[1], d = q->val.shape[2];
    if (d % heads != 0) throw std::invalid_argument("attention: D not divisible by heads");
    const int hd = d / heads;
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(hd));

    Tensor out(q->val.shape);
    auto probs = std::make_shared<std::vector<float>>(static_cast<size_t>(bsz) * heads * s * s, 0.0f);

#pragma omp parallel for schedule(static) collapse(2)
    for (int b = 0; b < bsz; ++b) {
        for (int h = 0; h < heads; ++h) {
            const float* qb = q->val.data.data() + static_cast<size_t>(b) * s * d + h * hd;
            const float* kb = k->val.data.data() + static_cast<size_t>(b) * s * d + h * hd;
            const float* vb = v->val.data.data() + static_cast<size_t>(b) * s * d + h * hd;
            float* ob = out.data.data() + static_cast<size_t>(b) * s * d + h * hd;
            float* pb = probs->data() + (static_cast<size_t>(b) * heads + h) * s * s;
            std::vector<float> logits(s);
            for (int i = 0; i < s; ++i) {
                int j0, j1;
                mask_range(mask, split, s, i, j0, j1);
                float mx = -1e30f;
                for (int j = j0; j < j1; ++j) {
                    logits[j] = dotf(qb + static_cast<size_t>(i) * d, kb + static_cast<size_t>(j) * d, hd) * inv_sqrt;
                    mx = std::max(mx, logits[j]);
                }
                float denom = 0.0f;
                for (int j = j0; j < j1; ++j) {
                    logits[j] = std::exp(logits[j] - mx);
                    denom += logits[j];
                }
                float inv_denom = 1.0f / denom;
                float* pi = pb + static_cast<size_t>(i) * s;
                for (int j = j0; j < j1; ++j) pi[j] = logits[j] * inv_denom;
                float* oi = ob + static_cast<size_t>(i) * d;
                for (int c = 0; c < hd; ++c) oi[c] = 0.0f;
                for (int j = j0; j < j1; ++j) {
                    const float p = pi[j];
                    const float* vj = vb + static_cast<size_t>(j) * d;
                    for (int c = 0; c < hd; ++c) oi[c] += p * vj[c];
                }
            }
        }
    }

    return make(std::move(out), {q, k, v}, [q, k, v, heads, mask, split, bsz, s, d, hd, inv_sqrt, probs](Node& n) {
        q->ensure_grad();
        k->ensure_grad();
        v->ensure_grad();
#pragma omp parallel for schedule(static) collapse(2)
        for (int b = 0; b < bsz; ++b) {
            for (int h = 0; h < heads; ++h) {
                const float* qb = q->val.data.data() + static_cast<size_t>(b) * s * d + h * hd;
                const float* kb = k->val.data.data() + static_cast<size_t>(b) * s * d + h * hd;
                const float* vb = v->val.data.data() + static_cast<size_t>(b) * s * d + h * hd;
                const float* gb = n.grad.data.data() + static_cast<size_t>(b) * s * d + h * hd;
                float* gq = q->grad.data.data() + static_cast<size_t>(b) * s * d + h * hd;
                float* gk = k->grad.data.data() + static_cast<size_t>(b) * s * d + h * hd;
                float* gv = v->grad.data.data() + static_cast<size_t>(b) * s * d + h * hd;
                const float* pb = probs->data() + (static_cast<size_t>(b) * heads + h) * s * s;
                std::vector<float> dp(s);
                for (int i = 0; i < s; ++i) {
                    int j0, j1;
                    mask_range(mask, split, s, i, j0, j1);
                    const float* pi = pb + static_cast<size_t>(i) * s;
                    const float* gi = gb + static_cast<size_t>(i) * d;
                    float ds = 0.0f;
                    for (int j = j0; j < j1; ++j) {
                        dp[j] = dotf(gi, vb + static_cast<size_t>(j) * d, hd);
                        ds += pi[j] * dp[j];
                    }
                    float* gqi = gq + static_cast<size_t>(i) * d;
                    for (int j = j0; j < j1; ++j) {
                        const float p = pi[j];
                        float* gvj = gv + static_cast<size_t>(j) * d;
                        for (int c = 0; c < hd; ++c) gvj[c] += p * gi[c];
                        const float dl = p * (dp[j] - ds) * inv_sqrt;
                        const float* kj = kb + static_cast<size_t>(j) * d;
                        const float* qi = qb + static_cast<size_t>(i) * d;
                        float* gkj = gk + static_cast<size_t>(j) * d;
                        for (int c = 0; c < hd; ++c) {
                            gqi[c] += dl * kj[c];
                            gkj[c] += dl * qi[c];
                        }
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// conv
// ---------------------------------------------------------------------------

namespace {

void im2col(const float* x, float* col, int cin, int h, int w, int kh, int kw, int stride, int pad, int ho,
            int wo) {
    for (int c = 0; c < cin; ++c)
        for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
                float* dst = col + ((static_cast<size_t>(c) * kh + ki) * kw + kj) * ho * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    int iy = oy * stride - pad + ki;
                    for (int ox = 0; ox < wo; ++ox) {
                        int ix = ox * stride - pad + kj;
                        dst[oy * wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                                ? x[(static_cast<size_t>(c) * h + iy) * w + ix]
                                                : 0.0f;
                    }
                }
            }
}

void col2im_acc(const float* col, float* gx, int cin, int h, int w, int kh, int kw, int stride, int pad,
                int ho, int wo) {
    for (int c = 0; c < cin; ++c)
        for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
                const float* src = col + ((static_cast<size_t>(c) * kh + ki) * kw + kj) * ho * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < wo; ++ox) {
                        int ix = ox * stride - pad + kj;
                        if (ix < 0 || ix >= w) continue;
                        gx[(static_cast<size_t>(c) * h + iy) * w + ix] += src[oy * wo + ox];
                    }
                }
            }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    if (x->val.rank() != 3 || w->val.rank() != 4) throw std::invalid_argument("conv2d: expected x[C,H,W], w[Co,Ci,kh,kw]");
    const int cin = x->val.shape[0], h = x->val.shape[1], wd = x->val.shape[2];
    const int cout = w->val.shape[0], kh = w->val.shape[2], kw = w->val.shape[3];
    if (w->val.shape[1] != cin) throw std::invalid_argument("conv2d: channel mismatch");
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (wd + 2 * pad - kw) / stride + 1;
    const int kdim = cin * kh * kw;

    auto col = std::make_shared<std::vector<float>>(static_cast<size_t>(kdim) * ho * wo);
    im2col(x->val.data.data(), col->data(), cin, h, wd, kh, kw, stride, pad, ho, wo);
    Tensor out({cout, ho, wo});
    matmul_nn(w->val.data.data(), col->data(), out.data.data(), cout, kdim, ho * wo);
    if (b) {
        for (int c = 0; c < cout; ++c) {
            float* o = out.data.data() + static_cast<size_t>(c) * ho * wo;
            const float bc = b->val.data[c];
            for (int i = 0; i < ho * wo; ++i) o[i] += bc;
        }
    }
    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    return make(std::move(out), std::move(parents),
                [x, w, b, col, cin, h, wd, cout, kh, kw, stride, pad, ho, wo, kdim](Node& n) {
                    const float* g = n.grad.data.data();
                    if (w->requires_grad) {
                        w->ensure_grad();
                        std::vector<float> colt(static_cast<size_t>(ho) * wo * kdim);
                        transpose2d(col->data(), colt.data(), kdim, ho * wo);
                        matmul_nn_acc(g, colt.data(), w->grad.data.data(), cout, ho * wo, kdim);
                    }
                    if (b && b->requires_grad) {
                        b->ensure_grad();
                        for (int c = 0; c < cout; ++c) {
                            const float* gc = g + static_cast<size_t>(c) * ho * wo;
                            for (int i = 0; i < ho * wo; ++i) b->grad.data[c] += gc[i];
                        }
                    }
                    if (x->requires_grad) {
                        x->ensure_grad();
                        std::vector<float> wt(static_cast<size_t>(cout) * kdim);
                        transpose2d(w->val.data.data(), wt.data(), cout, kdim);
                        std::vector<float> gcol(static_cast<size_t>(kdim) * ho * wo);
                        matmul_nn(wt.data(), g, gcol.data(), kdim, cout, ho * wo);
                        col2im_acc(gcol.data(), x->grad.data.data(), cin, h, wd, kh, kw, stride, pad, ho, wo);
                    }
                });
}

Var upsample2x(const Var& x) {
    if (x->val.rank() != 3) throw std::invalid_argument("upsample2x: expected [C,H,W]");
    const int c = x->val.shape[0], h = x->val.shape[1], w = x->val.shape[2];
    Tensor out({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                float v = x->val.data[(static_cast<size_t>(ch) * h + y) * w + xx];
                size_t base = (static_cast<size_t>(ch) * 2 * h + 2 * y) * 2 * w + 2 * xx;
                out.data[base] = v;
                out.data[base + 1] = v;
                out.data[base + 2 * w] = v;
                out.data[base + 2 * w + 1] = v;
            }
    return make(std::move(out), {x}, [x, c, h, w](Node& n) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    size_t base = (static_cast<size_t>(ch) * 2 * h + 2 * y) * 2 * w + 2 * xx;
                    x->grad.data[(static_cast<size_t>(ch) * h + y) * w + xx] +=
                        n.grad.data[base] + n.grad.data[base + 1] + n.grad.data[base + 2 * w] +
                        n.grad.data[base + 2 * w + 1];
                }
    });
}

// ---------------------------------------------------------------------------
// modulation / reductions
// ---------------------------------------------------------------------------

Var modulate(const Var& x, const Var& scl, const Var& shift) {
    const int d = x->val.dim(-1);
    if (scl->val.numel() != d || shift->val.numel() != d) throw std::invalid_argument("modulate: dim mismatch");
    int64_t rows = x->val.numel() / d;
    Tensor out(x->val.shape);
    for (int64_t r = 0; r < rows; ++r)
        for (int i = 0; i < d; ++i)
            out.data[r * d + i] = x->val.data[r * d + i] * (1.0f + scl->val.data[i]) + shift->val.data[i];
    return make(std::move(out), {x, scl, shift}, [x, scl, shift, rows, d](Node& n) {
        const float* g = n.grad.data.data();
        if (x->requires_grad) {
            x->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int i = 0; i < d; ++i) x->grad.data[r * d + i] += g[r * d + i] * (1.0f + scl->val.data[i]);
        }
        if (scl->requires_grad) {
            scl->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int i = 0; i < d; ++i) scl->grad.data[i] += g[r * d + i] * x->val.data[r * d + i];
        }
        if (shift->requires_grad) {
            shift->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int i = 0; i < d; ++i) shift->grad.data[i] += g[r * d + i];
        }
    });
}

Var gate(const Var& x, const Var& g) {
    const int d = x->val.dim(-1);
    if (g->val.numel() != d) throw std::invalid_argument("gate: dim mismatch");
    int64_t rows = x->val.numel() / d;
    Tensor out(x->val.shape);
    for (int64_t r = 0; r < rows; ++r)
        for (int i = 0; i < d; ++i) out.data[r * d + i] = x->val.data[r * d + i] * g->val.data[i];
    return make(std::move(out), {x, g}, [x, g, rows, d](Node& n) {
        const float* gr = n.grad.data.data();
        if (x->requires_grad) {
            x->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int i = 0; i < d; ++i) x->grad.data[r * d + i] += gr[r * d + i] * g->val.data[i];
        }
        if (g->requires_grad) {
            g->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int i = 0; i < d; ++i) g->grad.data[i] += gr[r * d + i] * x->val.data[r * d + i];
        }
    });
}

Var mean_all(const Var& x) {
    double acc = 0.0;
    for (float v : x->val.data) acc += v;
    const int64_t n = x->val.numel();
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
    return make(std::move(out), {x}, [x, n](Node& nd) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const float g = nd.grad.data[0] / static_cast<float>(n);
        for (auto& v : x->grad.data) v += g;
    });
}

Var mse_loss(const Var& pred, const Tensor& target) {
    if (!pred->val.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
    const int64_t n = pred->val.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double d = static_cast<double>(pred->val.data[i]) - target.data[i];
        acc += d * d;
    }
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
    auto tgt = std::make_shared<Tensor>(target);
    return make(std::move(out), {pred}, [pred, tgt, n](Node& nd) {
        if (!pred->requires_grad) return;
        pred->ensure_grad();
        const float g = 2.0f * nd.grad.data[0] / static_cast<float>(n);
        for (int64_t i = 0; i < n; ++i)
            pred->grad.data[i] += g * (pred->val.data[i] - tgt->data[i]);
    });
}

}  // namespace wm::ag
