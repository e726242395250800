#include "gdis/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "gdis/common.hpp"

namespace gdis {

namespace {

std::string shape_str(int r, int c) {
    return "(" + std::to_string(r) + "," + std::to_string(c) + ")";
}

void check_finite(const char* op, const Tensor::Node& n) {
    for (double v : n.values)
        if (!std::isfinite(v))
            throw ComputeError(std::string("non-finite value produced by op '") + op + "'");
}

}  // namespace

Tensor Tensor::make(int rows, int cols, bool requires_grad,
                    std::vector<std::shared_ptr<Node>> parents) {
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->values.assign(static_cast<std::size_t>(rows) * cols, 0.0);
    n->grad.assign(n->values.size(), 0.0);
    n->requires_grad = requires_grad;
    if (requires_grad) n->parents = std::move(parents);
    return Tensor(std::move(n));
}

Tensor Tensor::zeros(int rows, int cols) { return make(rows, cols, false, {}); }

Tensor Tensor::constant(std::vector<double> values, int rows, int cols) {
    if (static_cast<int>(values.size()) != rows * cols)
        throw ValidationError("tensor constant: " + std::to_string(values.size()) +
                              " values for shape " + shape_str(rows, cols));
    Tensor t = make(rows, cols, false, {});
    t.node_->values = std::move(values);
    check_finite("constant", *t.node_);
    return t;
}

Tensor Tensor::scalar(double v) { return constant({v}, 1, 1); }

Tensor Tensor::parameter(std::vector<double> values, int rows, int cols,
                         const std::string& name) {
    if (static_cast<int>(values.size()) != rows * cols)
        throw ValidationError("tensor parameter '" + name + "': " +
                              std::to_string(values.size()) + " values for shape " +
                              shape_str(rows, cols));
    Tensor t = make(rows, cols, true, {});
    t.node_->values = std::move(values);
    t.node_->name = name;
    check_finite("parameter", *t.node_);
    return t;
}

Tensor Tensor::detach() const {
    return constant(values(), rows(), cols());
}

Tensor Tensor::make_op(std::vector<double> values, int rows, int cols,
                       std::vector<std::shared_ptr<Node>> parents,
                       std::function<void(Node&)> backward_fn) {
    if (static_cast<int>(values.size()) != rows * cols)
        throw ValidationError("make_op: " + std::to_string(values.size()) +
                              " values for shape " + shape_str(rows, cols));
    Tensor t = make(rows, cols, true, std::move(parents));
    t.node_->values = std::move(values);
    t.node_->backward_fn = std::move(backward_fn);
    check_finite("fused", *t.node_);
    return t;
}

int Tensor::rows() const { return node_->rows; }
int Tensor::cols() const { return node_->cols; }
bool Tensor::requires_grad() const { return node_->requires_grad; }
const std::string& Tensor::name() const { return node_->name; }
const std::vector<double>& Tensor::values() const { return node_->values; }
std::vector<double>& Tensor::mutable_values() { return node_->values; }
const std::vector<double>& Tensor::grad() const { return node_->grad; }

double Tensor::at(int r, int c) const {
    return node_->values[static_cast<std::size_t>(r) * node_->cols + c];
}

double Tensor::scalar_value() const {
    if (rows() != 1 || cols() != 1)
        throw ValidationError("scalar_value on tensor of shape " + shape_str(rows(), cols()));
    return node_->values[0];
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

void Tensor::backward() {
    if (rows() != 1 || cols() != 1)
        throw ValidationError("backward requires a scalar output, got shape " +
                              shape_str(rows(), cols()));
    // Post-order DFS gives inputs-before-outputs; walk it in reverse.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* pa = n->parents[next++].get();
            if (pa->requires_grad && seen.insert(pa).second) stack.push_back({pa, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// ---- ops ---------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw ValidationError("matmul: shape " + shape_str(a.rows(), a.cols()) + " x " +
                              shape_str(b.rows(), b.cols()) + " mismatch");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::make(m, n, a.requires_grad() || b.requires_grad(),
                              {a.node(), b.node()});
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.node()->values;
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            double aval = av[static_cast<std::size_t>(i) * k + p];
            if (aval == 0.0) continue;
            const double* brow = &bv[static_cast<std::size_t>(p) * n];
            double* orow = &ov[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) orow[j] += aval * brow[j];
        }
    check_finite("matmul", *out.node());
    if (out.requires_grad()) {
        auto an = a.node(), bn = b.node();
        out.node()->backward_fn = [an, bn, m, k, n](Tensor::Node& self) {
            const auto& g = self.grad;
            if (an->requires_grad) {
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        double acc = 0.0;
                        const double* grow = &g[static_cast<std::size_t>(i) * n];
                        const double* brow = &bn->values[static_cast<std::size_t>(p) * n];
                        for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        an->grad[static_cast<std::size_t>(i) * k + p] += acc;
                    }
            }
            if (bn->requires_grad) {
                for (int p = 0; p < k; ++p)
                    for (int i = 0; i < m; ++i) {
                        double aval = an->values[static_cast<std::size_t>(i) * k + p];
                        if (aval == 0.0) continue;
                        const double* grow = &g[static_cast<std::size_t>(i) * n];
                        double* brow = &bn->grad[static_cast<std::size_t>(p) * n];
                        for (int j = 0; j < n; ++j) brow[j] += aval * grow[j];
                    }
            }
        };
    }
    return out;
}

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ValidationError(std::string(op) + ": shape " + shape_str(a.rows(), a.cols()) +
                              " vs " + shape_str(b.rows(), b.cols()) + " mismatch");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    Tensor out = Tensor::make(a.rows(), a.cols(), a.requires_grad() || b.requires_grad(),
                              {a.node(), b.node()});
    for (std::size_t i = 0; i < out.node()->values.size(); ++i)
        out.node()->values[i] = a.values()[i] + b.values()[i];
    check_finite("add", *out.node());
    if (out.requires_grad()) {
        auto an = a.node(), bn = b.node();
        out.node()->backward_fn = [an, bn](Tensor::Node& self) {
            if (an->requires_grad)
                for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
            if (bn->requires_grad)
                for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
        };
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    Tensor out = Tensor::make(a.rows(), a.cols(), a.requires_grad() || b.requires_grad(),
                              {a.node(), b.node()});
    for (std::size_t i = 0; i < out.node()->values.size(); ++i)
        out.node()->values[i] = a.values()[i] - b.values()[i];
    check_finite("sub", *out.node());
    if (out.requires_grad()) {
        auto an = a.node(), bn = b.node();
        out.node()->backward_fn = [an, bn](Tensor::Node& self) {
            if (an->requires_grad)
                for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
            if (bn->requires_grad)
                for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
        };
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    Tensor out = Tensor::make(a.rows(), a.cols(), a.requires_grad() || b.requires_grad(),
                              {a.node(), b.node()});
    for (std::size_t i = 0; i < out.node()->values.size(); ++i)
        out.node()->values[i] = a.values()[i] * b.values()[i];
    check_finite("mul", *out.node());
    if (out.requires_grad()) {
        auto an = a.node(), bn = b.node();
        out.node()->backward_fn = [an, bn](Tensor::Node& self) {
            if (an->requires_grad)
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    an->grad[i] += self.grad[i] * bn->values[i];
            if (bn->requires_grad)
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    bn->grad[i] += self.grad[i] * an->values[i];
        };
    }
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = Tensor::make(a.rows(), a.cols(), a.requires_grad(), {a.node()});
    for (std::size_t i = 0; i < out.node()->values.size(); ++i)
        out.node()->values[i] = s * a.values()[i];
    check_finite("scale", *out.node());
    if (out.requires_grad()) {
        auto an = a.node();
        out.node()->backward_fn = [an, s](Tensor::Node& self) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += s * self.grad[i];
        };
    }
    return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
        throw ValidationError("add_rowvec: shape " + shape_str(a.rows(), a.cols()) +
                              " + " + shape_str(row.rows(), row.cols()) + " mismatch");
    Tensor out = Tensor::make(a.rows(), a.cols(), a.requires_grad() || row.requires_grad(),
                              {a.node(), row.node()});
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            out.node()->values[static_cast<std::size_t>(i) * a.cols() + j] =
                a.at(i, j) + row.values()[j];
    check_finite("add_rowvec", *out.node());
    if (out.requires_grad()) {
        auto an = a.node(), rn = row.node();
        int rows = a.rows(), cols = a.cols();
        out.node()->backward_fn = [an, rn, rows, cols](Tensor::Node& self) {
            if (an->requires_grad)
                for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
            if (rn->requires_grad)
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j)
                        rn->grad[j] += self.grad[static_cast<std::size_t>(i) * cols + j];
        };
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ValidationError("concat_cols: no inputs");
    int rows = parts[0].rows(), cols = 0;
    bool rg = false;
    std::vector<std::shared_ptr<Tensor::Node>> parents;
    for (const auto& p : parts) {
        if (p.rows() != rows)
            throw ValidationError("concat_cols: shape " + shape_str(p.rows(), p.cols()) +
                                  " vs " + shape_str(rows, parts[0].cols()) + " row mismatch");
        cols += p.cols();
        rg = rg || p.requires_grad();
        parents.push_back(p.node());
    }
    Tensor out = Tensor::make(rows, cols, rg, parents);
    int offset = 0;
    for (const auto& p : parts) {
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < p.cols(); ++j)
                out.node()->values[static_cast<std::size_t>(i) * cols + offset + j] = p.at(i, j);
        offset += p.cols();
    }
    check_finite("concat_cols", *out.node());
    if (rg) {
        auto ps = parents;
        out.node()->backward_fn = [ps, rows, cols](Tensor::Node& self) {
            int offset = 0;
            for (const auto& pn : ps) {
                if (pn->requires_grad)
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < pn->cols; ++j)
                            pn->grad[static_cast<std::size_t>(i) * pn->cols + j] +=
                                self.grad[static_cast<std::size_t>(i) * cols + offset + j];
                offset += pn->cols;
            }
        };
    }
    return out;
}

Tensor leaky_relu(const Tensor& a, double negative_slope) {
    Tensor out = Tensor::make(a.rows(), a.cols(), a.requires_grad(), {a.node()});
    for (std::size_t i = 0; i < out.node()->values.size(); ++i) {
        double x = a.values()[i];
        out.node()->values[i] = x > 0.0 ? x : negative_slope * x;
    }
    check_finite("leaky_relu", *out.node());
    if (out.requires_grad()) {
        auto an = a.node();
        out.node()->backward_fn = [an, negative_slope](Tensor::Node& self) {
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                an->grad[i] += self.grad[i] * (an->values[i] > 0.0 ? 1.0 : negative_slope);
        };
    }
    return out;
}

Tensor elu(const Tensor& a) {
    Tensor out = Tensor::make(a.rows(), a.cols(), a.requires_grad(), {a.node()});
    for (std::size_t i = 0; i < out.node()->values.size(); ++i) {
        double x = a.values()[i];
        out.node()->values[i] = x > 0.0 ? x : std::expm1(x);
    }
    check_finite("elu", *out.node());
    if (out.requires_grad()) {
        auto an = a.node();
        out.node()->backward_fn = [an](Tensor::Node& self) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                double x = an->values[i];
                an->grad[i] += self.grad[i] * (x > 0.0 ? 1.0 : std::exp(x));
            }
        };
    }
    return out;
}

Tensor row_softmax_masked(const Tensor& scores,
                          const std::vector<std::vector<int>>& allowed) {
    const int m = scores.rows(), n = scores.cols();
    if (static_cast<int>(allowed.size()) != m)
        throw ValidationError("row_softmax_masked: mask has " + std::to_string(allowed.size()) +
                              " rows for shape " + shape_str(m, n));
    Tensor out = Tensor::make(m, n, scores.requires_grad(), {scores.node()});
    for (int i = 0; i < m; ++i) {
        if (allowed[i].empty())
            throw ValidationError("row_softmax_masked: empty mask row " + std::to_string(i));
        double mx = -1e300;
        for (int j : allowed[i]) {
            if (j < 0 || j >= n)
                throw ValidationError("row_softmax_masked: mask column out of range");
            mx = std::max(mx, scores.at(i, j));
        }
        double z = 0.0;
        for (int j : allowed[i]) z += std::exp(scores.at(i, j) - mx);
        for (int j : allowed[i])
            out.node()->values[static_cast<std::size_t>(i) * n + j] =
                std::exp(scores.at(i, j) - mx) / z;
    }
    check_finite("row_softmax_masked", *out.node());
    if (out.requires_grad()) {
        auto sn = scores.node();
        auto mask = allowed;
        out.node()->backward_fn = [sn, mask, n](Tensor::Node& self) {
            for (std::size_t i = 0; i < mask.size(); ++i) {
                double dot = 0.0;
                for (int j : mask[i])
                    dot += self.values[i * n + j] * self.grad[i * n + j];
                for (int j : mask[i])
                    sn->grad[i * n + j] +=
                        self.values[i * n + j] * (self.grad[i * n + j] - dot);
            }
        };
    }
    return out;
}

Tensor mean(const Tensor& a) {
    Tensor out = Tensor::make(1, 1, a.requires_grad(), {a.node()});
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    const double inv = 1.0 / static_cast<double>(a.count());
    out.node()->values[0] = acc * inv;
    check_finite("mean", *out.node());
    if (out.requires_grad()) {
        auto an = a.node();
        out.node()->backward_fn = [an, inv](Tensor::Node& self) {
            for (double& g : an->grad) g += self.grad[0] * inv;
        };
    }
    return out;
}

Tensor sum(const Tensor& a) {
    Tensor out = Tensor::make(1, 1, a.requires_grad(), {a.node()});
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    out.node()->values[0] = acc;
    check_finite("sum", *out.node());
    if (out.requires_grad()) {
        auto an = a.node();
        out.node()->backward_fn = [an](Tensor::Node& self) {
            for (double& g : an->grad) g += self.grad[0];
        };
    }
    return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& indices) {
    const int n = a.cols();
    for (int idx : indices)
        if (idx < 0 || idx >= a.rows())
            throw ValidationError("gather_rows: index " + std::to_string(idx) +
                                  " out of range for shape " + shape_str(a.rows(), a.cols()));
    Tensor out = Tensor::make(static_cast<int>(indices.size()), n, a.requires_grad(), {a.node()});
    for (std::size_t r = 0; r < indices.size(); ++r)
        for (int j = 0; j < n; ++j)
            out.node()->values[r * n + j] = a.at(indices[r], j);
    check_finite("gather_rows", *out.node());
    if (out.requires_grad()) {
        auto an = a.node();
        auto idx = indices;
        out.node()->backward_fn = [an, idx, n](Tensor::Node& self) {
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (int j = 0; j < n; ++j)
                    an->grad[static_cast<std::size_t>(idx[r]) * n + j] += self.grad[r * n + j];
        };
    }
    return out;
}

// ---- Adam --------------------------------------------------------------------

void AdamState::init(const std::vector<Tensor>& params) {
    step = 0;
    m1.clear();
    m2.clear();
    for (const auto& p : params) {
        m1.emplace_back(p.count(), 0.0);
        m2.emplace_back(p.count(), 0.0);
    }
}

void adam_step(AdamState& state, std::vector<Tensor>& params) {
    if (state.m1.size() != params.size())
        throw ValidationError("adam_step: state tracks " + std::to_string(state.m1.size()) +
                              " parameters, got " + std::to_string(params.size()));
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, state.step);
    const double bc2 = 1.0 - std::pow(state.beta2, state.step);
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& values = params[p].mutable_values();
        const auto& grad = params[p].grad();
        auto& m = state.m1[p];
        auto& v = state.m2[p];
        for (std::size_t i = 0; i < values.size(); ++i) {
            double g = grad[i];
            if (!std::isfinite(g))
                throw ComputeError("adam_step: non-finite gradient for parameter '" +
                                   params[p].name() + "'");
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            values[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace gdis
