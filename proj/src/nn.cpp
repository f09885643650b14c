#include "caitts/nn.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "caitts/error.hpp"

namespace caitts::nn {

namespace {

using Node = Tensor::Node;
using NodePtr = std::shared_ptr<Node>;

void ensure_grad(Node& n) {
    if (n.grad.size() != n.data.size()) n.grad.assign(n.data.size(), 0.0);
}

bool any_requires_grad(const std::vector<NodePtr>& parents) {
    for (const auto& p : parents)
        if (p->requires_grad) return true;
    return false;
}

Tensor make_op(Shape shape, std::vector<double> data, std::vector<NodePtr> parents,
               std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    if (any_requires_grad(parents)) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor::from_node(std::move(n));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) throw ShapeError(std::string(op) + ": shape mismatch");
}

}  // namespace

std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    if (numel(shape) != data.size()) throw ShapeError("tensor data length != shape product");
    node_ = std::make_shared<Node>();
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return Tensor(shape, std::vector<double>(numel(shape), 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    return Tensor(shape, std::vector<double>(numel(shape), value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor");
    return node_->data[0];
}

void Tensor::backward() const {
    if (size() != 1) throw ShapeError("backward() requires a scalar output");

    // post-order DFS
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (Node* n : order) ensure_grad(*n);
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

void Tensor::zero_grad() {
    if (node_) node_->grad.assign(node_->data.size(), 0.0);
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto pa = a.node(), pb = b.node();
    return make_op(a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& o) {
        if (pa->requires_grad)
            for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
        if (pb->requires_grad)
            for (std::size_t i = 0; i < o.grad.size(); ++i) pb->grad[i] += o.grad[i];
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto pa = a.node(), pb = b.node();
    return make_op(a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& o) {
        if (pa->requires_grad)
            for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
        if (pb->requires_grad)
            for (std::size_t i = 0; i < o.grad.size(); ++i) pb->grad[i] -= o.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto pa = a.node(), pb = b.node();
    return make_op(a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& o) {
        if (pa->requires_grad)
            for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i] * pb->data[i];
        if (pb->requires_grad)
            for (std::size_t i = 0; i < o.grad.size(); ++i) pb->grad[i] += o.grad[i] * pa->data[i];
    });
}

Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
    auto pa = a.node();
    return make_op(a.shape(), std::move(out), {pa}, [pa](Node& o) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
    });
}

Tensor mul_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    auto pa = a.node();
    return make_op(a.shape(), std::move(out), {pa}, [pa, c](Node& o) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i] * c;
    });
}

Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.data()[i]));
    auto pa = a.node();
    return make_op(a.shape(), std::move(out), {pa}, [pa](Node& o) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            const double y = o.data[i];
            pa->grad[i] += o.grad[i] * y * (1.0 - y);
        }
    });
}

Tensor tanh_t(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.data()[i]);
    auto pa = a.node();
    return make_op(a.shape(), std::move(out), {pa}, [pa](Node& o) {
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            pa->grad[i] += o.grad[i] * (1.0 - o.data[i] * o.data[i]);
    });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, a.data()[i]);
    auto pa = a.node();
    return make_op(a.shape(), std::move(out), {pa}, [pa](Node& o) {
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            if (pa->data[i] > 0.0) pa->grad[i] += o.grad[i];
    });
}

Tensor log1p_t(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log1p(a.data()[i]);
    auto pa = a.node();
    return make_op(a.shape(), std::move(out), {pa}, [pa](Node& o) {
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            pa->grad[i] += o.grad[i] / (1.0 + pa->data[i]);
    });
}

Tensor transpose(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.data()[i * c + j];
    auto pa = a.node();
    return make_op({c, r}, std::move(out), {pa}, [pa, r, c](Node& o) {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) pa->grad[i * c + j] += o.grad[j * r + i];
    });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) throw ShapeError("concat_cols: row mismatch");
    const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
    std::vector<double> out(r * (ca + cb));
    for (std::size_t i = 0; i < r; ++i) {
        std::copy_n(&a.data()[i * ca], ca, &out[i * (ca + cb)]);
        std::copy_n(&b.data()[i * cb], cb, &out[i * (ca + cb) + ca]);
    }
    auto pa = a.node(), pb = b.node();
    return make_op({r, ca + cb}, std::move(out), {pa, pb}, [pa, pb, r, ca, cb](Node& o) {
        for (std::size_t i = 0; i < r; ++i) {
            if (pa->requires_grad)
                for (std::size_t j = 0; j < ca; ++j)
                    pa->grad[i * ca + j] += o.grad[i * (ca + cb) + j];
            if (pb->requires_grad)
                for (std::size_t j = 0; j < cb; ++j)
                    pb->grad[i * cb + j] += o.grad[i * (ca + cb) + ca + j];
        }
    });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) throw ShapeError("concat_rows: column mismatch");
    const std::size_t c = a.cols(), ra = a.rows(), rb = b.rows();
    std::vector<double> out;
    out.reserve((ra + rb) * c);
    out.insert(out.end(), a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    auto pa = a.node(), pb = b.node();
    return make_op({ra + rb, c}, std::move(out), {pa, pb}, [pa, pb, c, ra, rb](Node& o) {
        if (pa->requires_grad)
            for (std::size_t i = 0; i < ra * c; ++i) pa->grad[i] += o.grad[i];
        if (pb->requires_grad)
            for (std::size_t i = 0; i < rb * c; ++i) pb->grad[i] += o.grad[ra * c + i];
    });
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    if (c1 > a.cols() || c0 >= c1) throw ShapeError("slice_cols: bad range");
    const std::size_t r = a.rows(), c = a.cols(), w = c1 - c0;
    std::vector<double> out(r * w);
    for (std::size_t i = 0; i < r; ++i)
        std::copy_n(&a.data()[i * c + c0], w, &out[i * w]);
    auto pa = a.node();
    return make_op({r, w}, std::move(out), {pa}, [pa, r, c, c0, w](Node& o) {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) pa->grad[i * c + c0 + j] += o.grad[i * w + j];
    });
}

Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
    if (r1 > a.rows() || r0 >= r1) throw ShapeError("slice_rows: bad range");
    const std::size_t c = a.cols(), h = r1 - r0;
    std::vector<double> out(a.data().begin() + r0 * c, a.data().begin() + r1 * c);
    auto pa = a.node();
    return make_op({h, c}, std::move(out), {pa}, [pa, r0, c, h](Node& o) {
        for (std::size_t i = 0; i < h * c; ++i) pa->grad[r0 * c + i] += o.grad[i];
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.size()) throw ShapeError("reshape: element count mismatch");
    auto pa = a.node();
    return make_op(std::move(shape), a.data(), {pa}, [pa](Node& o) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
    });
}

Tensor repeat_rows(const Tensor& a, const std::vector<std::size_t>& durations) {
    if (durations.size() != a.rows()) throw ShapeError("repeat_rows: durations/rows mismatch");
    const std::size_t c = a.cols();
    std::size_t total = 0;
    for (std::size_t d : durations) total += d;
    std::vector<double> out(total * c);
    std::size_t r = 0;
    for (std::size_t i = 0; i < durations.size(); ++i)
        for (std::size_t k = 0; k < durations[i]; ++k, ++r)
            std::copy_n(&a.data()[i * c], c, &out[r * c]);
    auto pa = a.node();
    auto durs = durations;
    return make_op({total, c}, std::move(out), {pa}, [pa, durs, c](Node& o) {
        std::size_t r = 0;
        for (std::size_t i = 0; i < durs.size(); ++i)
            for (std::size_t k = 0; k < durs[i]; ++k, ++r)
                for (std::size_t j = 0; j < c; ++j) pa->grad[i * c + j] += o.grad[r * c + j];
    });
}

Tensor broadcast_row(const Tensor& row, std::size_t n_rows) {
    const std::size_t c = row.size();
    std::vector<double> out(n_rows * c);
    for (std::size_t i = 0; i < n_rows; ++i) std::copy_n(row.data().data(), c, &out[i * c]);
    auto pa = row.node();
    return make_op({n_rows, c}, std::move(out), {pa}, [pa, n_rows, c](Node& o) {
        for (std::size_t i = 0; i < n_rows; ++i)
            for (std::size_t j = 0; j < c; ++j) pa->grad[j] += o.grad[i * c + j];
    });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    auto pa = a.node();
    return make_op({1}, {acc}, {pa}, [pa](Node& o) {
        for (double& g : pa->grad) g += o.grad[0];
    });
}

Tensor mean(const Tensor& a) { return mul_scalar(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor mse_loss(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mse_loss");
    return mean(mul(sub(a, b), sub(a, b)));
}

void matmul_serial(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                   std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        double* crow = c + i * m;
        std::fill(crow, crow + m, 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            const double* brow = b + p * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_parallel(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                     std::size_t m) {
#pragma omp parallel for schedule(static) if (n * k * m > 32768)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        double* crow = c + static_cast<std::size_t>(i) * m;
        std::fill(crow, crow + m, 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[static_cast<std::size_t>(i) * k + p];
            const double* brow = b + p * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
        throw ShapeError("matmul: incompatible shapes");
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    std::vector<double> out(n * m);
    matmul_parallel(a.data().data(), b.data().data(), out.data(), n, k, m);
    auto pa = a.node(), pb = b.node();
    return make_op({n, m}, std::move(out), {pa, pb}, [pa, pb, n, k, m](Node& o) {
        if (pa->requires_grad)  // dA += dC B^T
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < m; ++j) acc += o.grad[i * m + j] * pb->data[p * m + j];
                    pa->grad[i * k + p] += acc;
                }
        if (pb->requires_grad)  // dB += A^T dC
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t j = 0; j < m; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < n; ++i) acc += pa->data[i * k + p] * o.grad[i * m + j];
                    pb->grad[p * m + j] += acc;
                }
    });
}

Tensor linear_forward(const Tensor& x, const Tensor& W, const Tensor& b) {
    if (x.shape().size() != 2 || x.cols() != W.rows() || b.size() != W.cols())
        throw ShapeError("linear_forward: shape mismatch");
    return add(matmul(x, W), broadcast_row(b, x.rows()));
}

Tensor embedding_lookup(const Tensor& table, const std::vector<std::size_t>& idx) {
    const std::size_t rows = table.rows(), dim = table.cols();
    for (std::size_t i : idx)
        if (i >= rows) throw IndexError("embedding index " + std::to_string(i) + " out of range");
    std::vector<double> out(idx.size() * dim);
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy_n(&table.data()[idx[r] * dim], dim, &out[r * dim]);
    auto pt = table.node();
    auto ids = idx;
    return make_op({idx.size(), dim}, std::move(out), {pt}, [pt, ids, dim](Node& o) {
        for (std::size_t r = 0; r < ids.size(); ++r)
            for (std::size_t j = 0; j < dim; ++j) pt->grad[ids[r] * dim + j] += o.grad[r * dim + j];
    });
}

Tensor conv1d_forward(const Tensor& x, const Tensor& K, const Tensor& b) {
    if (K.shape().size() != 3) throw ShapeError("conv1d: kernel must be [k, Cin, Cout]");
    const std::size_t k = K.shape()[0], cin = K.shape()[1], cout = K.shape()[2];
    if (k % 2 == 0) throw ConfigError("conv1d: kernel size must be odd");
    if (x.cols() != cin || b.size() != cout) throw ShapeError("conv1d: shape mismatch");
    const std::size_t T = x.rows();
    const long long half = static_cast<long long>(k / 2);

    std::vector<double> out(T * cout);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t co = 0; co < cout; ++co) {
            double acc = b.data()[co];
            for (std::size_t dk = 0; dk < k; ++dk) {
                const long long src = static_cast<long long>(t) + static_cast<long long>(dk) - half;
                if (src < 0 || src >= static_cast<long long>(T)) continue;
                for (std::size_t ci = 0; ci < cin; ++ci)
                    acc += x.data()[static_cast<std::size_t>(src) * cin + ci] *
                           K.data()[(dk * cin + ci) * cout + co];
            }
            out[t * cout + co] = acc;
        }
    auto px = x.node(), pk = K.node(), pb = b.node();
    return make_op({T, cout}, std::move(out), {px, pk, pb},
                   [px, pk, pb, T, k, cin, cout, half](Node& o) {
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t co = 0; co < cout; ++co) {
                const double g = o.grad[t * cout + co];
                if (pb->requires_grad) pb->grad[co] += g;
                for (std::size_t dk = 0; dk < k; ++dk) {
                    const long long src = static_cast<long long>(t) + static_cast<long long>(dk) - half;
                    if (src < 0 || src >= static_cast<long long>(T)) continue;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        const std::size_t xi = static_cast<std::size_t>(src) * cin + ci;
                        const std::size_t ki = (dk * cin + ci) * cout + co;
                        if (px->requires_grad) px->grad[xi] += g * pk->data[ki];
                        if (pk->requires_grad) pk->grad[ki] += g * px->data[xi];
                    }
                }
            }
    });
}

Tensor softmax_rows(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = &a.data()[i * c];
        const double mx = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = std::exp(row[j] - mx) / z;
    }
    auto pa = a.node();
    return make_op({r, c}, std::move(out), {pa}, [pa, r, c](Node& o) {
        for (std::size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += o.grad[i * c + j] * o.data[i * c + j];
            for (std::size_t j = 0; j < c; ++j)
                pa->grad[i * c + j] += o.data[i * c + j] * (o.grad[i * c + j] - dot);
        }
    });
}

Tensor self_attention_forward(const Tensor& x, std::size_t heads, const Tensor& Wq,
                              const Tensor& Wk, const Tensor& Wv, const Tensor& Wo) {
    const std::size_t d = x.cols();
    if (heads == 0 || d % heads != 0) throw ConfigError("attention: d must be divisible by heads");
    const std::size_t dh = d / heads;
    const Tensor Q = matmul(x, Wq), K = matmul(x, Wk), V = matmul(x, Wv);
    Tensor out;
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor Qh = slice_cols(Q, h * dh, (h + 1) * dh);
        const Tensor Kh = slice_cols(K, h * dh, (h + 1) * dh);
        const Tensor Vh = slice_cols(V, h * dh, (h + 1) * dh);
        const Tensor A = softmax_rows(mul_scalar(matmul(Qh, transpose(Kh)),
                                                 1.0 / std::sqrt(static_cast<double>(dh))));
        const Tensor Oh = matmul(A, Vh);
        out = out.defined() ? concat_cols(out, Oh) : Oh;
    }
    return matmul(out, Wo);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::size_t d = x.shape().back();
    if (gamma.size() != d || beta.size() != d) throw ShapeError("layer_norm: affine shape mismatch");
    const std::size_t rows = x.size() / d;
    std::vector<double> out(x.size()), xhat(x.size()), inv_std(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = &x.data()[i * d];
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[i * d + j] = (row[j] - mu) * inv_std[i];
            out[i * d + j] = gamma.data()[j] * xhat[i * d + j] + beta.data()[j];
        }
    }
    auto px = x.node(), pg = gamma.node(), pb = beta.node();
    return make_op(x.shape(), std::move(out), {px, pg, pb},
                   [px, pg, pb, rows, d, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)](Node& o) {
        for (std::size_t i = 0; i < rows; ++i) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double dy = o.grad[i * d + j];
                const double xh = xhat[i * d + j];
                if (pg->requires_grad) pg->grad[j] += dy * xh;
                if (pb->requires_grad) pb->grad[j] += dy;
                const double dxh = dy * pg->data[j];
                mean_dxhat += dxh;
                mean_dxhat_xhat += dxh * xh;
            }
            mean_dxhat /= static_cast<double>(d);
            mean_dxhat_xhat /= static_cast<double>(d);
            if (px->requires_grad)
                for (std::size_t j = 0; j < d; ++j) {
                    const double dxh = o.grad[i * d + j] * pg->data[j];
                    px->grad[i * d + j] +=
                        inv_std[i] * (dxh - mean_dxhat - xhat[i * d + j] * mean_dxhat_xhat);
                }
        }
    });
}

Tensor dropout(const Tensor& x, double rate, bool train, std::mt19937_64& rng) {
    if (!train || rate <= 0.0) return x;
    const double keep = 1.0 - rate;
    std::vector<double> mask(x.size());
    std::bernoulli_distribution coin(keep);
    for (double& m : mask) m = coin(rng) ? 1.0 / keep : 0.0;
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
    auto px = x.node();
    return make_op(x.shape(), std::move(out), {px}, [px, mask = std::move(mask)](Node& o) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) px->grad[i] += o.grad[i] * mask[i];
    });
}

namespace {

Tensor flip_rows(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        std::copy_n(&a.data()[i * c], c, &out[(r - 1 - i) * c]);
    auto pa = a.node();
    return make_op({r, c}, std::move(out), {pa}, [pa, r, c](Node& o) {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) pa->grad[i * c + j] += o.grad[(r - 1 - i) * c + j];
    });
}

Tensor one_minus(const Tensor& a) { return add_scalar(mul_scalar(a, -1.0), 1.0); }

// One direction over the full sequence; x [T,din], h0 [1,H].
std::pair<Tensor, Tensor> gru_direction(const Tensor& x, const Tensor& h0, const GruParams& p) {
    const std::size_t T = x.rows();
    Tensor h = h0;
    Tensor outputs;
    for (std::size_t t = 0; t < T; ++t) {
        const Tensor xt = slice_rows(x, t, t + 1);
        const Tensor z = sigmoid(add(add(matmul(xt, p.Wz), matmul(h, p.Uz)), broadcast_row(p.bz, 1)));
        const Tensor r = sigmoid(add(add(matmul(xt, p.Wr), matmul(h, p.Ur)), broadcast_row(p.br, 1)));
        const Tensor n =
            tanh_t(add(add(matmul(xt, p.Wn), matmul(mul(r, h), p.Un)), broadcast_row(p.bn, 1)));
        h = add(mul(one_minus(z), n), mul(z, h));
        outputs = outputs.defined() ? concat_rows(outputs, h) : h;
    }
    return {outputs, h};
}

}  // namespace

GruOutput gru_forward(const Tensor& x, const Tensor& h0, const GruParams& fwd,
                      const GruParams* bwd) {
    if (x.shape().size() != 2 || h0.shape().size() != 2 || h0.rows() != 1)
        throw ShapeError("gru_forward: x must be [T,din], h0 [1,H]");
    auto [out_f, last_f] = gru_direction(x, h0, fwd);
    GruOutput out;
    out.final_fwd = last_f;
    if (!bwd) {
        out.outputs = out_f;
        return out;
    }
    auto [out_b_rev, last_b] = gru_direction(flip_rows(x), h0, *bwd);
    out.outputs = concat_cols(out_f, flip_rows(out_b_rev));
    out.final_bwd = last_b;
    return out;
}

Tensor& ParamRegistry::add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
    index_[name] = items_.size();
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
}

Tensor& ParamRegistry::get(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return items_[it->second].second;
}

const Tensor& ParamRegistry::get(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return items_[it->second].second;
}

bool ParamRegistry::contains(const std::string& name) const { return index_.count(name) != 0; }

void ParamRegistry::zero_grad() {
    for (auto& [name, t] : items_) t.zero_grad();
}

AdamOptimizer::AdamOptimizer(ParamRegistry& params, AdamConfig cfg) : params_(params), cfg_(cfg) {
    for (const auto& [name, t] : params_.items()) {
        m_.emplace_back(t.size(), 0.0);
        v_.emplace_back(t.size(), 0.0);
    }
}

double AdamOptimizer::learning_rate(std::size_t step) const {
    const double s = static_cast<double>(std::max<std::size_t>(step, 1));
    const double warm = static_cast<double>(cfg_.warmup_steps);
    return cfg_.base_scale / std::sqrt(static_cast<double>(cfg_.model_dim)) *
           std::min(1.0 / std::sqrt(s), s / (warm * std::sqrt(warm)));
}

void AdamOptimizer::step() {
    ++t_;
    const double lr = learning_rate(t_);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params_.items().size(); ++p) {
        Tensor& t = params_.items()[p].second;
        if (t.grad().size() != t.size()) continue;  // untouched this step
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double g = t.grad()[i];
            m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g;
            v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m_[p][i] / bc1;
            const double vhat = v_[p][i] / bc2;
            t.data()[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& fn,
                  std::vector<Tensor> inputs, double eps) {
    Tensor y = fn(inputs);
    for (auto& t : inputs) t.zero_grad();
    y.backward();

    double worst = 0.0;
    for (auto& t : inputs) {
        if (!t.requires_grad()) continue;
        const std::vector<double> analytic = t.grad();
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double orig = t.data()[i];
            t.data()[i] = orig + eps;
            const double fp = fn(inputs).item();
            t.data()[i] = orig - eps;
            const double fm = fn(inputs).item();
            t.data()[i] = orig;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double err =
                std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), 1.0});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

Tensor init_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> data(numel(shape));
    for (double& v : data) v = dist(rng);
    return Tensor(std::move(shape), std::move(data), true);
}

Tensor init_normal(Shape shape, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> data(numel(shape));
    for (double& v : data) v = dist(rng);
    return Tensor(std::move(shape), std::move(data), true);
}

}  // namespace caitts::nn
