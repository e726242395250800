#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace gdis {

/// Dense 2-D tensor node in a dynamically built reverse-mode autodiff graph.
/// Copying a Tensor copies the handle, not the storage. Every forward op
/// verifies its output is finite; backward() accumulates (+=) into grads.
class Tensor {
  public:
    struct Node;

    Tensor() = default;

    static Tensor zeros(int rows, int cols);
    static Tensor constant(std::vector<double> values, int rows, int cols);
    static Tensor scalar(double v);
    /// Named trainable leaf.
    static Tensor parameter(std::vector<double> values, int rows, int cols,
                            const std::string& name);
    /// Non-differentiable copy of the values.
    Tensor detach() const;

    /// Extension point for fused ops: a differentiable node with explicit
    /// parents and backward function.
    static Tensor make_op(std::vector<double> values, int rows, int cols,
                          std::vector<std::shared_ptr<Node>> parents,
                          std::function<void(Node&)> backward_fn);

    bool defined() const { return node_ != nullptr; }
    int rows() const;
    int cols() const;
    int count() const { return rows() * cols(); }
    bool requires_grad() const;
    const std::string& name() const;

    const std::vector<double>& values() const;
    std::vector<double>& mutable_values();
    const std::vector<double>& grad() const;
    double at(int r, int c) const;
    double scalar_value() const;

    /// Reverse sweep from a scalar output; seeds d(out)/d(out) = 1.
    void backward();
    void zero_grad();

    struct Node {
        int rows = 0, cols = 0;
        std::vector<double> values;
        std::vector<double> grad;
        bool requires_grad = false;
        std::string name;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backward_fn;
    };
    const std::shared_ptr<Node>& node() const { return node_; }

  private:
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    static Tensor make(int rows, int cols, bool requires_grad,
                       std::vector<std::shared_ptr<Node>> parents);
    std::shared_ptr<Node> node_;

    friend Tensor matmul(const Tensor&, const Tensor&);
    friend Tensor add(const Tensor&, const Tensor&);
    friend Tensor sub(const Tensor&, const Tensor&);
    friend Tensor mul(const Tensor&, const Tensor&);
    friend Tensor scale(const Tensor&, double);
    friend Tensor add_rowvec(const Tensor&, const Tensor&);
    friend Tensor concat_cols(const std::vector<Tensor>&);
    friend Tensor leaky_relu(const Tensor&, double);
    friend Tensor elu(const Tensor&);
    friend Tensor row_softmax_masked(const Tensor&, const std::vector<std::vector<int>>&);
    friend Tensor mean(const Tensor&);
    friend Tensor sum(const Tensor&);
    friend Tensor gather_rows(const Tensor&, const std::vector<int>&);
};

// Core ops. Shape violations throw ValidationError naming both shapes.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double s);
/// (m x n) + (1 x n), the bias broadcast.
Tensor add_rowvec(const Tensor& a, const Tensor& row);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor leaky_relu(const Tensor& a, double negative_slope);
Tensor elu(const Tensor& a);
/// Per-row softmax restricted to the allowed column indices; other entries 0.
Tensor row_softmax_masked(const Tensor& scores, const std::vector<std::vector<int>>& allowed);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor gather_rows(const Tensor& a, const std::vector<int>& indices);

/// Bias-corrected Adam over named parameter tensors. A non-finite gradient
/// aborts with the parameter name.
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> m1;
    std::vector<std::vector<double>> m2;

    void init(const std::vector<Tensor>& params);
};

void adam_step(AdamState& state, std::vector<Tensor>& params);

}  // namespace gdis
