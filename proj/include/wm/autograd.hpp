#ifndef WM_AUTOGRAD_HPP
#define WM_AUTOGRAD_HPP

#include <functional>
#include <memory>
#include <vector>

#include "wm/tensor.hpp"

namespace wm::ag {

// Reverse-mode tape over coarse tensor ops. Nodes are created in topological
// order; backward() walks reachable nodes by descending creation id. All
// kernels use fixed accumulation orders, so forward and backward values are
// bitwise reproducible for a given input.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor val;
    Tensor grad;  // allocated lazily, same shape as val
    bool requires_grad = false;
    uint64_t id = 0;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.data.empty()) grad = Tensor::zeros(val.shape);
    }
};

Var constant(Tensor v);
Var param(Tensor v);
// Value copy with the graph edge severed.
Var detach(const Var& x);

void backward(const Var& root);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float s);
Var silu(const Var& x);
Var gelu(const Var& x);

// ---- shape ----
Var reshape(const Var& x, std::vector<int> shape);
Var transpose01(const Var& x);                 // [a,b,rest] -> [b,a,rest]
Var slice0(const Var& x, int from, int to);    // slice along dim 0
Var concat0(const std::vector<Var>& xs);       // concat along dim 0
// x: [B, ...rest], p: [...rest]; adds p to every dim-0 slice.
Var add_broadcast0(const Var& x, const Var& p);

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);  // [m,k] x [k,n]
// x: [..., din] flattened to rows, w: [din, dout], b: [dout] or nullptr
Var linear(const Var& x, const Var& w, const Var& b);
// gamma/beta over last dim; either may be null for a plain normalize.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, float eps = 1e-5f);

enum class AttnMask {
    full,
    causal,     // query i attends keys [0, i]
    self_only,  // query i attends key i
    split_block // two blocks [0,split) and [split,S) attend within themselves
};

// q,k,v: [B, S, D]; multi-head attention with D = heads * head_dim.
// Masking restricts the iteration range rather than zeroing logits, so
// masked-out positions cannot perturb results even in the last bit.
Var attention(const Var& q, const Var& k, const Var& v, int heads, AttnMask mask, int split = 0);

// ---- conv (CHW) ----
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var upsample2x(const Var& x);

// ---- modulation / reductions ----
// x: [S, D], scale/shift: [D] -> x * (1 + scale) + shift
Var modulate(const Var& x, const Var& scl, const Var& shift);
Var gate(const Var& x, const Var& g);  // x: [S, D], g: [D]
Var mean_all(const Var& x);            // -> [1]
Var mse_loss(const Var& pred, const Tensor& target);  // -> [1]

}  // namespace wm::ag

#endif
