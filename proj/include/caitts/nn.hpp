#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace caitts::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);

// Reverse-mode autodiff tensor. Ops record parents and a backward rule on
// each result node; backward() walks the recorded graph once in reverse
// topological order.
class Tensor {
public:
    struct Node {
        Shape shape;
        std::vector<double> data;
        std::vector<double> grad;
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backward_fn;
    };

    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->data.size(); }
    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }
    std::vector<double>& grad() { return node_->grad; }
    const std::vector<double>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    double item() const;

    std::size_t rows() const { return node_->shape.at(0); }
    std::size_t cols() const { return node_->shape.at(1); }
    double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

    // Backward from a scalar output; accumulates into .grad of every
    // requires_grad node reachable through the graph.
    void backward() const;
    void zero_grad();

    std::shared_ptr<Node> node() const { return node_; }

    static Tensor from_node(std::shared_ptr<Node> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

private:
    std::shared_ptr<Node> node_;
};

// elementwise / scalar
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor sigmoid(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor log1p_t(const Tensor& a);

// shape
Tensor transpose(const Tensor& a);                             // [r,c] -> [c,r]
Tensor concat_cols(const Tensor& a, const Tensor& b);          // [r,ca]+[r,cb]
Tensor concat_rows(const Tensor& a, const Tensor& b);          // [ra,c]+[rb,c]
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);
Tensor reshape(const Tensor& a, Shape shape);
// repeat row i of a dur[i] times
Tensor repeat_rows(const Tensor& a, const std::vector<std::size_t>& durations);
Tensor broadcast_row(const Tensor& row, std::size_t n_rows);   // [1,c] or [c] -> [n,c]

// reductions
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mse_loss(const Tensor& a, const Tensor& b);

// serial reference kernel, kept for tests and the benchmark
void matmul_serial(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                   std::size_t m);
// OpenMP kernel used by the matmul op
void matmul_parallel(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                     std::size_t m);

Tensor matmul(const Tensor& a, const Tensor& b);  // [n,k]x[k,m]
Tensor linear_forward(const Tensor& x, const Tensor& W, const Tensor& b);  // xW+b
Tensor embedding_lookup(const Tensor& table, const std::vector<std::size_t>& idx);
// x [T,Cin], K [k,Cin,Cout], b [Cout]; odd k, zero same padding
Tensor conv1d_forward(const Tensor& x, const Tensor& K, const Tensor& b);
Tensor softmax_rows(const Tensor& a);
Tensor self_attention_forward(const Tensor& x, std::size_t heads, const Tensor& Wq,
                              const Tensor& Wk, const Tensor& Wv, const Tensor& Wo);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
// inverted dropout; identity when train is false
Tensor dropout(const Tensor& x, double rate, bool train, std::mt19937_64& rng);

struct GruParams {
    // per gate {z, r, n}: W [din,H], U [H,H], b [H]
    Tensor Wz, Wr, Wn, Uz, Ur, Un, bz, br, bn;
};
struct GruOutput {
    Tensor outputs;      // [T, H] or [T, 2H] when bidirectional
    Tensor final_fwd;    // [1, H]
    Tensor final_bwd;    // [1, H], defined only when bidirectional
};
GruOutput gru_forward(const Tensor& x, const Tensor& h0, const GruParams& fwd,
                      const GruParams* bwd = nullptr);

// Named parameter registry; iteration order is registration order.
class ParamRegistry {
public:
    Tensor& add(const std::string& name, Tensor t);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const;
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
    void zero_grad();

private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::map<std::string, std::size_t> index_;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;
    double base_scale = 1.0;        // multiplies the Noam rate
    std::size_t warmup_steps = 4000;
    std::size_t model_dim = 64;     // Noam scale reference
};

class AdamOptimizer {
public:
    AdamOptimizer(ParamRegistry& params, AdamConfig cfg);
    double learning_rate(std::size_t step) const;
    void step();

private:
    ParamRegistry& params_;
    AdamConfig cfg_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// max relative error of reverse-mode vs central differences over all
// requires_grad leaves touched by fn
double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& fn,
                  std::vector<Tensor> inputs, double eps = 1e-5);

// uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)]
Tensor init_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng);
Tensor init_normal(Shape shape, double stddev, std::mt19937_64& rng);

}  // namespace caitts::nn
