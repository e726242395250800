#pragma once

#include <vector>

#include "gdis/common.hpp"
#include "gdis/tensor.hpp"

namespace gdis {

/// Single-head graph attention layer: scores LeakyReLU(A^T [W h_i || W h_j])
/// over j in N(i) plus self, softmax-normalized, ELU on the aggregate.
struct AttentionLayer {
    Tensor weight;        // in_dim x out_dim
    Tensor attn_vector;   // 2*out_dim x 1
    double negative_slope = 0.2;

    static AttentionLayer init(int in_dim, int out_dim, Rng& rng,
                               double negative_slope = 0.2);
    std::vector<Tensor> parameters() const { return {weight, attn_vector}; }
    int out_dim() const { return weight.cols(); }
};

/// Forward pass over all nodes. neighbors[i] lists N(i) (self excluded; the
/// layer always attends to self). When alpha_out is given, it receives the
/// attention coefficients per node aligned with {neighbors[i], i}.
Tensor attention_forward(const AttentionLayer& layer, const Tensor& h,
                         const std::vector<std::vector<int>>& neighbors,
                         std::vector<std::vector<double>>* alpha_out = nullptr);

/// Gaussian kernel matrix with the median-heuristic bandwidth (computed from
/// the detached input, floored at 1e-8): K_il = exp(-|m_i - m_l|^2 / (2 g^2)).
Tensor gaussian_kernel(const Tensor& m);

/// Value-only kernel of a plain matrix; same bandwidth rule.
std::vector<double> gaussian_kernel_values(const std::vector<double>& values, int rows,
                                           int cols);

/// Biased HSIC estimate trace(K_H C K_H' C) / (m-1)^2 with the usual
/// centering matrix; differentiable with respect to both inputs.
Tensor hsic(const Tensor& h, const Tensor& h_prime);

/// Same statistic with the first kernel supplied as precomputed values —
/// the training fast path when h is constant across steps.
Tensor hsic_given_kernel(const std::vector<double>& k_values, int m, const Tensor& h_prime);

/// Fully connected layer with bias.
struct DenseLayer {
    Tensor weight;  // in_dim x out_dim
    Tensor bias;    // 1 x out_dim

    static DenseLayer init(int in_dim, int out_dim, Rng& rng, const std::string& name);
    std::vector<Tensor> parameters() const { return {weight, bias}; }
};

Tensor dense_forward(const DenseLayer& layer, const Tensor& x);

/// Uniform Glorot values for a rows x cols matrix.
std::vector<double> glorot_values(int rows, int cols, Rng& rng);

}  // namespace gdis
