#include "hda/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace hda {

namespace {

using detail::Node;

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

void check_shape(const std::vector<int>& shape) {
    if (shape.empty() || shape.size() > 2)
        throw std::invalid_argument("tensor rank must be 1 or 2, got " + shape_to_string(shape));
    for (int d : shape)
        if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive, got " + shape_to_string(shape));
}

std::shared_ptr<Node> make_leaf(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    check_shape(shape);
    if (shape_numel(shape) != data.size())
        throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_to_string(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return n;
}

bool any_requires_grad(const std::vector<std::shared_ptr<Node>>& parents) {
    for (const auto& p : parents)
        if (p->requires_grad) return true;
    return false;
}

Tensor make_op(std::vector<int> shape, std::vector<double> data,
               std::vector<std::shared_ptr<Node>> parents,
               std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = any_requires_grad(parents);
    n->parents = std::move(parents);
    if (n->requires_grad) n->backprop = std::move(backprop);
    return Tensor(n);
}

Node& deref(const Tensor& t) {
    if (!t.defined()) throw std::invalid_argument("operation on an undefined tensor");
    return *t.node();
}

}  // namespace

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad)
    : node_(make_leaf(std::move(shape), std::move(data), requires_grad)) {}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    check_shape(shape);
    std::vector<double> data(shape_numel(shape), value);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

const std::vector<int>& Tensor::shape() const { return deref(*this).shape; }
std::size_t Tensor::size() const { return deref(*this).size(); }

int Tensor::rows() const {
    const auto& s = shape();
    if (s.size() != 2) throw std::invalid_argument("rows(): tensor is not rank 2: " + shape_to_string(s));
    return s[0];
}

int Tensor::cols() const {
    const auto& s = shape();
    if (s.size() != 2) throw std::invalid_argument("cols(): tensor is not rank 2: " + shape_to_string(s));
    return s[1];
}

std::vector<double>& Tensor::values() { return deref(*this).data; }
const std::vector<double>& Tensor::values() const { return deref(*this).data; }
const std::vector<double>& Tensor::grad() const { return deref(*this).grad; }
bool Tensor::has_grad() const { return !deref(*this).grad.empty(); }
bool Tensor::requires_grad() const { return deref(*this).requires_grad; }

void Tensor::zero_grad() { deref(*this).grad.clear(); }

double Tensor::item() const {
    const Node& n = deref(*this);
    if (n.size() != 1)
        throw std::invalid_argument("item(): tensor has " + std::to_string(n.size()) + " elements");
    return n.data[0];
}

// --- tape ------------------------------------------------------------------

Tape trace(const Tensor& root) {
    Tape tape;
    Node& r = deref(root);
    if (!r.requires_grad) return tape;

    // Iterative DFS postorder: a node is emitted only after every parent it
    // can pass gradient to has been emitted.
    std::unordered_set<const Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(&r, 0);
    visited.insert(&r);
    while (!stack.empty()) {
        auto& [node, next_parent] = stack.back();
        bool descended = false;
        while (next_parent < node->parents.size()) {
            Node* p = node->parents[next_parent++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
                descended = true;
                break;
            }
        }
        if (!descended && next_parent >= node->parents.size()) {
            tape.nodes.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

void backward(const Tensor& loss) {
    Node& root = deref(loss);
    if (root.size() != 1)
        throw std::invalid_argument("backward(): loss must be scalar, got " + shape_to_string(root.shape));
    if (!root.requires_grad) return;

    Tape tape = trace(loss);
    for (Node* n : tape.nodes) {
        if (!n->is_leaf()) n->grad.assign(n->size(), 0.0);
    }
    root.grad_buffer()[0] += 1.0;

    for (auto it = tape.nodes.rbegin(); it != tape.nodes.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

// --- elementwise machinery ---------------------------------------------------

namespace {

// Broadcast descriptor for binary ops: equal shapes, or one side scalar.
struct Binary {
    std::vector<int> shape;
    std::size_t n;
    bool a_scalar, b_scalar;
};

Binary binary_layout(const char* op, const Node& a, const Node& b) {
    if (a.shape == b.shape) return {a.shape, a.size(), false, false};
    if (a.size() == 1) return {b.shape, b.size(), true, false};
    if (b.size() == 1) return {a.shape, a.size(), false, true};
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_to_string(a.shape) +
                                " vs " + shape_to_string(b.shape));
}

template <typename Fwd, typename BackA, typename BackB>
Tensor binary_op(const char* name, const Tensor& at, const Tensor& bt, Fwd fwd, BackA back_a, BackB back_b) {
    Node& a = deref(at);
    Node& b = deref(bt);
    const Binary lay = binary_layout(name, a, b);
    std::vector<double> out(lay.n);
    for (std::size_t i = 0; i < lay.n; ++i) {
        const double av = a.data[lay.a_scalar ? 0 : i];
        const double bv = b.data[lay.b_scalar ? 0 : i];
        out[i] = fwd(av, bv);
    }
    auto pa = at.node();
    auto pb = bt.node();
    return make_op(lay.shape, std::move(out), {pa, pb}, [pa, pb, lay, back_a, back_b](Node& self) {
        if (pa->requires_grad) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < lay.n; ++i) {
                const double av = pa->data[lay.a_scalar ? 0 : i];
                const double bv = pb->data[lay.b_scalar ? 0 : i];
                g[lay.a_scalar ? 0 : i] += back_a(av, bv) * self.grad[i];
            }
        }
        if (pb->requires_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t i = 0; i < lay.n; ++i) {
                const double av = pa->data[lay.a_scalar ? 0 : i];
                const double bv = pb->data[lay.b_scalar ? 0 : i];
                g[lay.b_scalar ? 0 : i] += back_b(av, bv) * self.grad[i];
            }
        }
    });
}

template <typename Fwd, typename Back>
Tensor unary_op(const Tensor& xt, Fwd fwd, Back back) {
    Node& x = deref(xt);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x.data[i]);
    auto px = xt.node();
    return make_op(x.shape, std::move(out), {px}, [px, back](Node& self) {
        if (!px->requires_grad) return;
        auto& g = px->grad_buffer();
        for (std::size_t i = 0; i < self.size(); ++i)
            g[i] += back(px->data[i], self.data[i]) * self.grad[i];
    });
}

void check_rowvec(const char* op, const Node& x, const Node& v) {
    if (x.shape.size() != 2 || v.shape.size() != 1 || v.shape[0] != x.shape[1])
        throw std::invalid_argument(std::string(op) + ": expected [n x d] and [d], got " +
                                    shape_to_string(x.shape) + " and " + shape_to_string(v.shape));
}

template <typename Fwd, typename BackX, typename BackV>
Tensor rowvec_op(const char* name, const Tensor& xt, const Tensor& vt, Fwd fwd, BackX back_x, BackV back_v) {
    Node& x = deref(xt);
    Node& v = deref(vt);
    check_rowvec(name, x, v);
    const int n = x.shape[0], d = x.shape[1];
    std::vector<double> out(x.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out[i * d + j] = fwd(x.data[i * d + j], v.data[j]);
    auto px = xt.node();
    auto pv = vt.node();
    return make_op(x.shape, std::move(out), {px, pv}, [px, pv, n, d, back_x, back_v](Node& self) {
        if (px->requires_grad) {
            auto& g = px->grad_buffer();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j)
                    g[i * d + j] += back_x(px->data[i * d + j], pv->data[j]) * self.grad[i * d + j];
        }
        if (pv->requires_grad) {
            auto& g = pv->grad_buffer();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j)
                    g[j] += back_v(px->data[i * d + j], pv->data[j]) * self.grad[i * d + j];
        }
    });
}

}  // namespace

// --- primitives ---------------------------------------------------------------

Tensor matmul(const Tensor& at, const Tensor& bt) {
    Node& a = deref(at);
    Node& b = deref(bt);
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0])
        throw std::invalid_argument("matmul: incompatible shapes " + shape_to_string(a.shape) +
                                    " and " + shape_to_string(b.shape));
    const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double av = a.data[i * k + p];
            if (av == 0.0) continue;
            for (int j = 0; j < n; ++j) out[i * n + j] += av * b.data[p * n + j];
        }
    auto pa = at.node();
    auto pb = bt.node();
    return make_op({m, n}, std::move(out), {pa, pb}, [pa, pb, m, k, n](Node& self) {
        if (pa->requires_grad) {  // dA = dC * B^T
            auto& g = pa->grad_buffer();
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j) acc += self.grad[i * n + j] * pb->data[p * n + j];
                    g[i * k + p] += acc;
                }
        }
        if (pb->requires_grad) {  // dB = A^T * dC
            auto& g = pb->grad_buffer();
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    const double av = pa->data[i * k + p];
                    if (av == 0.0) continue;
                    for (int j = 0; j < n; ++j) g[p * n + j] += av * self.grad[i * n + j];
                }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op("add", a, b,
                     [](double x, double y) { return x + y; },
                     [](double, double) { return 1.0; },
                     [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op("sub", a, b,
                     [](double x, double y) { return x - y; },
                     [](double, double) { return 1.0; },
                     [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op("mul", a, b,
                     [](double x, double y) { return x * y; },
                     [](double, double y) { return y; },
                     [](double x, double) { return x; });
}

Tensor add(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
Tensor sub(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
Tensor mul(const Tensor& a, double b) { return scale(a, b); }

Tensor relu(const Tensor& x) {
    return unary_op(x,
                    [](double v) { return v > 0.0 ? v : 0.0; },
                    [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
    return unary_op(x,
                    [](double v) { return std::tanh(v); },
                    [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
    return unary_op(x,
                    [](double v) { return std::exp(v); },
                    [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
    for (double v : deref(x).data)
        if (!(v > 0.0)) throw std::domain_error("log: input must be strictly positive, got " + std::to_string(v));
    return unary_op(x,
                    [](double v) { return std::log(v); },
                    [](double v, double) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
    return unary_op(x,
                    [](double v) { return std::fabs(v); },
                    [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor scale(const Tensor& x, double c) {
    return unary_op(x,
                    [c](double v) { return c * v; },
                    [c](double, double) { return c; });
}

Tensor pow_const(const Tensor& x, double p) {
    for (double v : deref(x).data)
        if (!(v > 0.0)) throw std::domain_error("pow_const: input must be strictly positive, got " + std::to_string(v));
    return unary_op(x,
                    [p](double v) { return std::pow(v, p); },
                    [p](double v, double y) { return p * y / v; });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    return rowvec_op("add_rowvec", x, v,
                     [](double a, double b) { return a + b; },
                     [](double, double) { return 1.0; },
                     [](double, double) { return 1.0; });
}

Tensor sub_rowvec(const Tensor& x, const Tensor& v) {
    return rowvec_op("sub_rowvec", x, v,
                     [](double a, double b) { return a - b; },
                     [](double, double) { return 1.0; },
                     [](double, double) { return -1.0; });
}

Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
    return rowvec_op("mul_rowvec", x, v,
                     [](double a, double b) { return a * b; },
                     [](double, double b) { return b; },
                     [](double a, double) { return a; });
}

Tensor col_mean(const Tensor& xt) {
    Node& x = deref(xt);
    if (x.shape.size() != 2)
        throw std::invalid_argument("col_mean: expected rank-2 tensor, got " + shape_to_string(x.shape));
    const int n = x.shape[0], d = x.shape[1];
    std::vector<double> out(d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out[j] += x.data[i * d + j];
    for (int j = 0; j < d; ++j) out[j] /= n;
    auto px = xt.node();
    return make_op({d}, std::move(out), {px}, [px, n, d](Node& self) {
        if (!px->requires_grad) return;
        auto& g = px->grad_buffer();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) g[i * d + j] += self.grad[j] / n;
    });
}

Tensor take_rows(const Tensor& xt, int start, int count) {
    Node& x = deref(xt);
    if (x.shape.size() != 2)
        throw std::invalid_argument("take_rows: expected rank-2 tensor, got " + shape_to_string(x.shape));
    const int n = x.shape[0], d = x.shape[1];
    if (start < 0 || count <= 0 || start + count > n)
        throw std::invalid_argument("take_rows: range [" + std::to_string(start) + ", " +
                                    std::to_string(start + count) + ") out of " + std::to_string(n) + " rows");
    std::vector<double> out(x.data.begin() + static_cast<std::size_t>(start) * d,
                            x.data.begin() + static_cast<std::size_t>(start + count) * d);
    auto px = xt.node();
    return make_op({count, d}, std::move(out), {px}, [px, start, d](Node& self) {
        if (!px->requires_grad) return;
        auto& g = px->grad_buffer();
        const std::size_t off = static_cast<std::size_t>(start) * d;
        for (std::size_t i = 0; i < self.size(); ++i) g[off + i] += self.grad[i];
    });
}

namespace {

Tensor reduce_op(const Tensor& xt, const char* name, double scale_per_elem, bool absolute) {
    Node& x = deref(xt);
    if (x.size() == 0) throw std::invalid_argument(std::string(name) + ": empty tensor");
    double acc = 0.0;
    for (double v : x.data) acc += absolute ? std::fabs(v) : v;
    acc *= scale_per_elem;
    auto px = xt.node();
    return make_op({1}, {acc}, {px}, [px, scale_per_elem, absolute](Node& self) {
        if (!px->requires_grad) return;
        auto& g = px->grad_buffer();
        const double up = self.grad[0] * scale_per_elem;
        for (std::size_t i = 0; i < px->size(); ++i) {
            double s = 1.0;
            if (absolute) {
                const double v = px->data[i];
                s = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
            }
            g[i] += up * s;
        }
    });
}

}  // namespace

Tensor sum(const Tensor& x) { return reduce_op(x, "sum", 1.0, false); }

Tensor mean(const Tensor& x) {
    const std::size_t n = deref(x).size();
    if (n == 0) throw std::invalid_argument("mean: empty tensor");
    return reduce_op(x, "mean", 1.0 / static_cast<double>(n), false);
}

Tensor l1_mean(const Tensor& x) {
    const std::size_t n = deref(x).size();
    if (n == 0) throw std::invalid_argument("l1_mean: empty tensor");
    return reduce_op(x, "l1_mean", 1.0 / static_cast<double>(n), true);
}

Tensor softmax_rows(const Tensor& xt) {
    Node& x = deref(xt);
    if (x.shape.size() != 2)
        throw std::invalid_argument("softmax_rows: expected rank-2 tensor, got " + shape_to_string(x.shape));
    const int n = x.shape[0], c = x.shape[1];
    std::vector<double> out(x.size());
    for (int i = 0; i < n; ++i) {
        double mx = x.data[i * c];
        for (int j = 1; j < c; ++j) mx = std::max(mx, x.data[i * c + j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            out[i * c + j] = std::exp(x.data[i * c + j] - mx);
            z += out[i * c + j];
        }
        for (int j = 0; j < c; ++j) out[i * c + j] /= z;
    }
    auto px = xt.node();
    return make_op(x.shape, std::move(out), {px}, [px, n, c](Node& self) {
        if (!px->requires_grad) return;
        auto& g = px->grad_buffer();
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += self.grad[i * c + j] * self.data[i * c + j];
            for (int j = 0; j < c; ++j)
                g[i * c + j] += self.data[i * c + j] * (self.grad[i * c + j] - dot);
        }
    });
}

Tensor softmax_cross_entropy(const Tensor& lt, const std::vector<int>& labels,
                             const std::vector<double>& weights) {
    Node& logits = deref(lt);
    if (logits.shape.size() != 2)
        throw std::invalid_argument("softmax_cross_entropy: expected rank-2 logits, got " +
                                    shape_to_string(logits.shape));
    const int n = logits.shape[0], c = logits.shape[1];
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for " + std::to_string(n) + " rows");
    for (int y : labels)
        if (y < 0 || y >= c)
            throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) +
                                        " out of range [0, " + std::to_string(c) + ")");
    if (!weights.empty()) {
        if (static_cast<int>(weights.size()) != n)
            throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(weights.size()) +
                                        " weights for " + std::to_string(n) + " rows");
        for (double w : weights)
            if (w < 0.0) throw std::invalid_argument("softmax_cross_entropy: negative weight " + std::to_string(w));
    }

    std::vector<double> probs(logits.size());
    double weight_sum = 0.0, loss = 0.0;
    for (int i = 0; i < n; ++i) {
        double mx = logits.data[i * c];
        for (int j = 1; j < c; ++j) mx = std::max(mx, logits.data[i * c + j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            probs[i * c + j] = std::exp(logits.data[i * c + j] - mx);
            z += probs[i * c + j];
        }
        for (int j = 0; j < c; ++j) probs[i * c + j] /= z;
        const double w = weights.empty() ? 1.0 : weights[i];
        loss += w * (std::log(z) - (logits.data[i * c + labels[i]] - mx));
        weight_sum += w;
    }
    if (weight_sum <= 0.0)
        throw std::invalid_argument("softmax_cross_entropy: weights sum to zero");
    loss /= weight_sum;

    auto px = lt.node();
    return make_op({1}, {loss}, {px},
                   [px, probs = std::move(probs), labels, weights, weight_sum, n, c](Node& self) {
        if (!px->requires_grad) return;
        auto& g = px->grad_buffer();
        const double up = self.grad[0] / weight_sum;
        for (int i = 0; i < n; ++i) {
            const double w = weights.empty() ? 1.0 : weights[i];
            for (int j = 0; j < c; ++j) {
                const double target = (j == labels[i]) ? 1.0 : 0.0;
                g[i * c + j] += up * w * (probs[i * c + j] - target);
            }
        }
    });
}

Tensor grad_reverse(const Tensor& xt, double lambda) {
    if (lambda < 0.0)
        throw std::invalid_argument("grad_reverse: lambda must be nonnegative, got " + std::to_string(lambda));
    Node& x = deref(xt);
    std::vector<double> out = x.data;  // identity forward, bit for bit
    auto px = xt.node();
    return make_op(x.shape, std::move(out), {px}, [px, lambda](Node& self) {
        if (!px->requires_grad) return;
        auto& g = px->grad_buffer();
        for (std::size_t i = 0; i < self.size(); ++i) g[i] += -lambda * self.grad[i];
    });
}

}  // namespace hda
