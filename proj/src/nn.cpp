#include "gdis/nn.hpp"

#include <algorithm>
#include <cmath>

namespace gdis {

std::vector<double> glorot_values(int rows, int cols, Rng& rng) {
    double bound = std::sqrt(6.0 / (rows + cols));
    std::vector<double> v(static_cast<std::size_t>(rows) * cols);
    for (double& x : v) x = rng.uniform(-bound, bound);
    return v;
}

AttentionLayer AttentionLayer::init(int in_dim, int out_dim, Rng& rng,
                                    double negative_slope) {
    if (in_dim < 1 || out_dim < 1)
        throw ValidationError("attention layer needs positive dimensions");
    AttentionLayer layer;
    layer.weight = Tensor::parameter(glorot_values(in_dim, out_dim, rng), in_dim, out_dim,
                                     "attn.weight." + std::to_string(in_dim) + "x" +
                                         std::to_string(out_dim));
    layer.attn_vector = Tensor::parameter(glorot_values(2 * out_dim, 1, rng), 2 * out_dim, 1,
                                          "attn.vector." + std::to_string(out_dim));
    layer.negative_slope = negative_slope;
    return layer;
}

namespace {

double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }
double leaky_grad(double x, double slope) { return x > 0.0 ? 1.0 : slope; }

}  // namespace

Tensor attention_forward(const AttentionLayer& layer, const Tensor& h,
                         const std::vector<std::vector<int>>& neighbors,
                         std::vector<std::vector<double>>* alpha_out) {
    const int m = h.rows();
    if (m == 0) throw ValidationError("attention_forward: empty graph");
    if (static_cast<int>(neighbors.size()) != m)
        throw ValidationError("attention_forward: adjacency covers " +
                              std::to_string(neighbors.size()) + " nodes, expected " +
                              std::to_string(m));
    const int d = layer.out_dim();
    if (layer.attn_vector.rows() != 2 * d || layer.attn_vector.cols() != 1)
        throw ValidationError("attention_forward: attention vector must have length " +
                              std::to_string(2 * d));

    // Projected features; gradient flows to h and the weight through this op.
    Tensor g = matmul(h, layer.weight);

    // A^T [g_i || g_j] splits into a1.g_i + a2.g_j.
    const auto& avec = layer.attn_vector.values();
    const auto& gv = g.values();
    std::vector<double> u(m, 0.0), v(m, 0.0);
    for (int i = 0; i < m; ++i)
        for (int c = 0; c < d; ++c) {
            u[i] += avec[c] * gv[static_cast<std::size_t>(i) * d + c];
            v[i] += avec[d + c] * gv[static_cast<std::size_t>(i) * d + c];
        }

    // Attention targets per node: neighbors then self.
    std::vector<std::vector<int>> targets(m);
    std::vector<std::vector<double>> alpha(m);
    std::vector<double> z(static_cast<std::size_t>(m) * d, 0.0);  // pre-activation
    for (int i = 0; i < m; ++i) {
        targets[i] = neighbors[i];
        targets[i].push_back(i);
        const auto& ts = targets[i];
        double mx = -1e300;
        for (int j : ts) {
            if (j < 0 || j >= m)
                throw ValidationError("attention_forward: neighbor index " + std::to_string(j) +
                                      " out of range");
            mx = std::max(mx, leaky(u[i] + v[j], layer.negative_slope));
        }
        double norm = 0.0;
        alpha[i].resize(ts.size());
        for (std::size_t t = 0; t < ts.size(); ++t) {
            alpha[i][t] = std::exp(leaky(u[i] + v[ts[t]], layer.negative_slope) - mx);
            norm += alpha[i][t];
        }
        for (std::size_t t = 0; t < ts.size(); ++t) {
            alpha[i][t] /= norm;
            const double* grow = &gv[static_cast<std::size_t>(ts[t]) * d];
            for (int c = 0; c < d; ++c) z[static_cast<std::size_t>(i) * d + c] += alpha[i][t] * grow[c];
        }
    }
    if (alpha_out) *alpha_out = alpha;

    std::vector<double> ov(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        ov[i] = z[i] > 0.0 ? z[i] : std::expm1(z[i]);

    bool rg = g.requires_grad() || layer.attn_vector.requires_grad();
    if (!rg) return Tensor::constant(std::move(ov), m, d);

    auto gn = g.node();
    auto an = layer.attn_vector.node();
    struct Saved {
        std::vector<std::vector<int>> targets;
        std::vector<std::vector<double>> alpha;
        std::vector<double> u, v, z;
        double slope;
        int m, d;
    };
    auto saved = std::make_shared<Saved>(Saved{std::move(targets), std::move(alpha),
                                               std::move(u), std::move(v), std::move(z),
                                               layer.negative_slope, m, d});

    return Tensor::make_op(std::move(ov), m, d, {gn, an}, [gn, an, saved](Tensor::Node& self) {
        const int m = saved->m, d = saved->d;
        const auto& gv = gn->values;
        const auto& avec = an->values;
        std::vector<double> du(m, 0.0), dv(m, 0.0);
        for (int i = 0; i < m; ++i) {
            const auto& ts = saved->targets[i];
            const auto& al = saved->alpha[i];
            // dL/dz through the ELU.
            std::vector<double> dz(d);
            for (int c = 0; c < d; ++c) {
                double zc = saved->z[static_cast<std::size_t>(i) * d + c];
                dz[c] = self.grad[static_cast<std::size_t>(i) * d + c] *
                        (zc > 0.0 ? 1.0 : std::exp(zc));
            }
            // dalpha and the aggregate's contribution to dG.
            std::vector<double> dalpha(ts.size(), 0.0);
            for (std::size_t t = 0; t < ts.size(); ++t) {
                const double* grow = &gv[static_cast<std::size_t>(ts[t]) * d];
                double* growg = &gn->grad[static_cast<std::size_t>(ts[t]) * d];
                for (int c = 0; c < d; ++c) {
                    dalpha[t] += dz[c] * grow[c];
                    growg[c] += al[t] * dz[c];
                }
            }
            // Softmax then LeakyReLU.
            double dot = 0.0;
            for (std::size_t t = 0; t < ts.size(); ++t) dot += al[t] * dalpha[t];
            for (std::size_t t = 0; t < ts.size(); ++t) {
                double de = al[t] * (dalpha[t] - dot);
                double ds = de * leaky_grad(saved->u[i] + saved->v[ts[t]], saved->slope);
                du[i] += ds;
                dv[ts[t]] += ds;
            }
        }
        // u = G a1, v = G a2.
        for (int i = 0; i < m; ++i) {
            const double* grow = &gv[static_cast<std::size_t>(i) * d];
            double* growg = &gn->grad[static_cast<std::size_t>(i) * d];
            for (int c = 0; c < d; ++c) {
                growg[c] += du[i] * avec[c] + dv[i] * avec[d + c];
                if (an->requires_grad) {
                    an->grad[c] += du[i] * grow[c];
                    an->grad[d + c] += dv[i] * grow[c];
                }
            }
        }
    });
}

namespace {

/// Median of pairwise Euclidean distances (i < l), floored at 1e-8.
double median_bandwidth(const std::vector<double>& values, int rows, int cols) {
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(rows) * (rows - 1) / 2);
    for (int i = 0; i < rows; ++i)
        for (int l = i + 1; l < rows; ++l) {
            double d2 = 0.0;
            const double* a = &values[static_cast<std::size_t>(i) * cols];
            const double* b = &values[static_cast<std::size_t>(l) * cols];
            for (int c = 0; c < cols; ++c) {
                double diff = a[c] - b[c];
                d2 += diff * diff;
            }
            dists.push_back(std::sqrt(d2));
        }
    std::size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
    double med = dists[mid];
    return std::max(med, 1e-8);
}

std::vector<double> kernel_from(const std::vector<double>& values, int rows, int cols,
                                double gamma) {
    std::vector<double> k(static_cast<std::size_t>(rows) * rows, 1.0);
    const double denom = 2.0 * gamma * gamma;
    for (int i = 0; i < rows; ++i)
        for (int l = i + 1; l < rows; ++l) {
            double d2 = 0.0;
            const double* a = &values[static_cast<std::size_t>(i) * cols];
            const double* b = &values[static_cast<std::size_t>(l) * cols];
            for (int c = 0; c < cols; ++c) {
                double diff = a[c] - b[c];
                d2 += diff * diff;
            }
            double e = std::exp(-d2 / denom);
            k[static_cast<std::size_t>(i) * rows + l] = e;
            k[static_cast<std::size_t>(l) * rows + i] = e;
        }
    return k;
}

/// (C A C)_ij = A_ij - rbar_i - cbar_j + sbar for C = I - (1/m) 1 1^T.
std::vector<double> center_both(const std::vector<double>& a, int m) {
    std::vector<double> rbar(m, 0.0), cbar(m, 0.0);
    double sbar = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            double v = a[static_cast<std::size_t>(i) * m + j];
            rbar[i] += v;
            cbar[j] += v;
            sbar += v;
        }
    for (double& v : rbar) v /= m;
    for (double& v : cbar) v /= m;
    sbar /= static_cast<double>(m) * m;
    std::vector<double> out(a.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            out[static_cast<std::size_t>(i) * m + j] =
                a[static_cast<std::size_t>(i) * m + j] - rbar[i] - cbar[j] + sbar;
    return out;
}

/// dInput accumulation through K_il = exp(-|x_i - x_l|^2 / (2 g^2)).
void kernel_chain(const std::vector<double>& dk, const std::vector<double>& k,
                  const std::vector<double>& x, int m, int cols, double gamma,
                  std::vector<double>& dx) {
    const double inv_g2 = 1.0 / (gamma * gamma);
    for (int i = 0; i < m; ++i)
        for (int l = 0; l < m; ++l) {
            if (i == l) continue;
            double w = (dk[static_cast<std::size_t>(i) * m + l] +
                        dk[static_cast<std::size_t>(l) * m + i]) *
                       k[static_cast<std::size_t>(i) * m + l];
            if (w == 0.0) continue;
            const double* xi = &x[static_cast<std::size_t>(i) * cols];
            const double* xl = &x[static_cast<std::size_t>(l) * cols];
            double* di = &dx[static_cast<std::size_t>(i) * cols];
            for (int c = 0; c < cols; ++c) di[c] += -inv_g2 * (xi[c] - xl[c]) * w;
        }
}

}  // namespace

std::vector<double> gaussian_kernel_values(const std::vector<double>& values, int rows,
                                           int cols) {
    if (rows < 2) throw ValidationError("gaussian kernel needs at least 2 rows");
    return kernel_from(values, rows, cols, median_bandwidth(values, rows, cols));
}

Tensor gaussian_kernel(const Tensor& m) {
    const int rows = m.rows(), cols = m.cols();
    if (rows < 2) throw ValidationError("gaussian kernel needs at least 2 rows");
    double gamma = median_bandwidth(m.values(), rows, cols);
    auto kv = kernel_from(m.values(), rows, cols, gamma);

    if (!m.requires_grad()) return Tensor::constant(std::move(kv), rows, rows);

    auto mn = m.node();
    auto saved_k = std::make_shared<std::vector<double>>(kv);
    // The bandwidth is treated as a constant of the batch.
    return Tensor::make_op(std::move(kv), rows, rows, {mn},
                           [mn, saved_k, rows, cols, gamma](Tensor::Node& self) {
                               kernel_chain(self.grad, *saved_k, mn->values, rows, cols,
                                            gamma, mn->grad);
                           });
}

namespace {

Tensor hsic_impl(const std::vector<double>& k_values, const Tensor* h,
                 const Tensor& h_prime) {
    const int m = h_prime.rows();
    if (m < 2) throw ValidationError("hsic needs at least 2 samples");
    if (static_cast<int>(k_values.size()) != m * m)
        throw ValidationError("hsic: first kernel is " + std::to_string(k_values.size()) +
                              " values, expected " + std::to_string(m * m));
    if (h && h->rows() != m)
        throw ValidationError("hsic: sample count mismatch " + std::to_string(h->rows()) +
                              " vs " + std::to_string(m));

    double gamma_p = median_bandwidth(h_prime.values(), m, h_prime.cols());
    auto l_values = kernel_from(h_prime.values(), m, h_prime.cols(), gamma_p);
    auto ckc = center_both(k_values, m);

    double t = 0.0;
    for (std::size_t i = 0; i < ckc.size(); ++i) t += ckc[i] * l_values[i];
    const double scale = 1.0 / (static_cast<double>(m - 1) * (m - 1));
    Tensor out = Tensor::constant({t * scale}, 1, 1);

    bool hp_grad = h_prime.requires_grad();
    bool h_grad = h && h->requires_grad();
    if (!hp_grad && !h_grad) return out;

    auto hpn = h_prime.node();
    auto hn = h ? h->node() : nullptr;
    struct Saved {
        std::vector<double> l, ckc, clc, k;
        double gamma_p = 0, gamma_h = 0;
        int m = 0;
    };
    auto saved = std::make_shared<Saved>();
    saved->l = std::move(l_values);
    saved->ckc = std::move(ckc);
    saved->gamma_p = gamma_p;
    saved->m = m;
    if (h_grad) {
        saved->k = k_values;
        saved->clc = center_both(saved->l, m);
        saved->gamma_h = median_bandwidth(h->values(), m, h->cols());
    }

    const int hp_cols = h_prime.cols();
    const int h_cols = h ? h->cols() : 0;
    auto parents = h_grad ? std::vector<std::shared_ptr<Tensor::Node>>{hpn, hn}
                          : std::vector<std::shared_ptr<Tensor::Node>>{hpn};
    return Tensor::make_op(
        out.values(), 1, 1, std::move(parents),
        [hpn, hn, saved, scale, hp_cols, h_cols, hp_grad, h_grad](Tensor::Node& self) {
            const double go = self.grad[0] * scale;
            const int m = saved->m;
            if (hp_grad) {
                // d trace(K C L C)/dL = C K C; chain through the L kernel.
                std::vector<double> dl(saved->ckc.size());
                for (std::size_t i = 0; i < dl.size(); ++i) dl[i] = go * saved->ckc[i];
                kernel_chain(dl, saved->l, hpn->values, m, hp_cols, saved->gamma_p, hpn->grad);
            }
            if (h_grad) {
                std::vector<double> dk(saved->clc.size());
                for (std::size_t i = 0; i < dk.size(); ++i) dk[i] = go * saved->clc[i];
                kernel_chain(dk, saved->k, hn->values, m, h_cols, saved->gamma_h, hn->grad);
            }
        });
}

}  // namespace

Tensor hsic(const Tensor& h, const Tensor& h_prime) {
    if (h.rows() < 2) throw ValidationError("hsic needs at least 2 samples");
    auto k = kernel_from(h.values(), h.rows(), h.cols(),
                         median_bandwidth(h.values(), h.rows(), h.cols()));
    return hsic_impl(k, &h, h_prime);
}

Tensor hsic_given_kernel(const std::vector<double>& k_values, int m, const Tensor& h_prime) {
    if (h_prime.rows() != m)
        throw ValidationError("hsic_given_kernel: kernel is for " + std::to_string(m) +
                              " samples, embeddings have " + std::to_string(h_prime.rows()));
    return hsic_impl(k_values, nullptr, h_prime);
}

DenseLayer DenseLayer::init(int in_dim, int out_dim, Rng& rng, const std::string& name) {
    DenseLayer layer;
    layer.weight = Tensor::parameter(glorot_values(in_dim, out_dim, rng), in_dim, out_dim,
                                     name + ".weight");
    layer.bias = Tensor::parameter(std::vector<double>(out_dim, 0.0), 1, out_dim,
                                   name + ".bias");
    return layer;
}

Tensor dense_forward(const DenseLayer& layer, const Tensor& x) {
    return add_rowvec(matmul(x, layer.weight), layer.bias);
}

}  // namespace gdis
