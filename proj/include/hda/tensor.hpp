#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace hda {

class Tensor;

namespace detail {

// One recorded primitive. `backprop` pulls this node's gradient into its
// parents; it is set only on non-leaf nodes.
struct Node {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated lazily, same length as data
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    std::size_t size() const { return data.size(); }
    bool is_leaf() const { return parents.empty(); }
    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

std::string shape_to_string(const std::vector<int>& shape);

// Dense 64-bit tensor handle over a graph node. Copies are shallow (they
// alias the same node); fresh nodes are produced by the primitive ops below.
// Rank 1 or 2 only; row-major.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const;
    std::size_t size() const;
    int rows() const;  // rank-2 only
    int cols() const;  // rank-2 only

    std::vector<double>& values();
    const std::vector<double>& values() const;
    const std::vector<double>& grad() const;  // empty when no gradient recorded
    bool has_grad() const;
    bool requires_grad() const;
    void zero_grad();

    double item() const;  // scalar tensors only

    std::shared_ptr<detail::Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// Topologically ordered slice of the graph reachable from a root: every node
// appears after all of its parents. Subtrees that cannot require gradient
// are pruned.
struct Tape {
    std::vector<detail::Node*> nodes;
};

Tape trace(const Tensor& root);

// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
// calls; interior gradients are rebuilt on every call.
void backward(const Tensor& loss);

// --- primitives ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

// Binary elementwise ops require equal shapes; a size-1 operand broadcasts.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, double b);

Tensor relu(const Tensor& x);   // derivative at 0 is 0
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);    // strictly positive inputs
Tensor abs(const Tensor& x);    // derivative at 0 is 0
Tensor scale(const Tensor& x, double c);
Tensor pow_const(const Tensor& x, double p);  // strictly positive inputs

// Row-vector forms for [n x d] against [d].
Tensor add_rowvec(const Tensor& x, const Tensor& v);
Tensor sub_rowvec(const Tensor& x, const Tensor& v);
Tensor mul_rowvec(const Tensor& x, const Tensor& v);
Tensor col_mean(const Tensor& x);  // [n x d] -> [d]

// Contiguous row slice of a rank-2 tensor, differentiable.
Tensor take_rows(const Tensor& x, int start, int count);

// Reductions to scalar tensors.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor l1_mean(const Tensor& x);  // mean of |x| over every element

Tensor softmax_rows(const Tensor& logits);

// Mean (or weighted mean) of -log softmax(logits)[label], max-stabilized.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                             const std::vector<double>& weights = {});

// Identity forward; backward multiplies the incoming gradient by -lambda.
Tensor grad_reverse(const Tensor& x, double lambda);

}  // namespace hda
