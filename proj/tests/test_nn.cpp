#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "caitts/error.hpp"
#include "caitts/nn.hpp"

using namespace caitts;
using nn::Tensor;

namespace {

Tensor rand_t(nn::Shape shape, std::mt19937_64& rng, bool requires_grad = true) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> data(nn::numel(shape));
    for (auto& v : data) v = dist(rng);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

}  // namespace

TEST_CASE("linear with identity weights is identity") {
    Tensor x({2, 2}, {1, 2, 3, 4});
    Tensor W({2, 2}, {1, 0, 0, 1});
    Tensor b({2}, {0, 0});
    CHECK(nn::linear_forward(x, W, b).data() == x.data());

    Tensor x2({1, 2}, {1, 2});
    Tensor b2({2}, {3, 3});
    const auto y = nn::linear_forward(x2, W, b2);
    CHECK(y.data() == std::vector<double>{4, 5});
}

TEST_CASE("linear rejects shape mismatch") {
    Tensor x({2, 3}, std::vector<double>(6, 1.0));
    Tensor W({2, 2}, std::vector<double>(4, 1.0));
    Tensor b({2}, {0, 0});
    CHECK_THROWS_AS(nn::linear_forward(x, W, b), ShapeError);
}

TEST_CASE("linear gradients match finite differences over random shapes") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng() % 4, in = 1 + rng() % 5, out = 1 + rng() % 5;
        auto fn = [](std::vector<Tensor>& v) {
            return nn::sum(nn::mul(nn::linear_forward(v[0], v[1], v[2]), v[3]));
        };
        const double err = nn::grad_check(
            fn, {rand_t({n, in}, rng), rand_t({in, out}, rng), rand_t({out}, rng),
                 rand_t({n, out}, rng)});
        CHECK(err < 1e-4);
    }
}

TEST_CASE("embedding gathers rows and scatters gradients") {
    Tensor table({3, 2}, {1, 2, 3, 4, 5, 6}, true);
    const auto out = nn::embedding_lookup(table, {0, 0});
    CHECK(out.data() == std::vector<double>{1, 2, 1, 2});

    const auto s = nn::sum(nn::embedding_lookup(table, {0, 2, 2}));
    s.backward();
    CHECK(table.grad() == std::vector<double>{1, 1, 0, 0, 2, 2});
}

TEST_CASE("embedding rejects out-of-range indices") {
    Tensor table({3, 2}, std::vector<double>(6, 0.0));
    CHECK_THROWS_AS(nn::embedding_lookup(table, {3}), IndexError);
}

TEST_CASE("embedding gradients match finite differences") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t rows = 2 + rng() % 4, dim = 1 + rng() % 4, len = 1 + rng() % 5;
        std::vector<std::size_t> idx(len);
        for (auto& i : idx) i = rng() % rows;
        auto fn = [idx](std::vector<Tensor>& v) {
            return nn::sum(nn::mul(nn::embedding_lookup(v[0], idx), v[1]));
        };
        CHECK(nn::grad_check(fn, {rand_t({rows, dim}, rng), rand_t({idx.size(), dim}, rng)}) < 1e-4);
    }
}

TEST_CASE("conv1d delta kernels are identity") {
    std::mt19937_64 rng(3);
    const Tensor x = rand_t({5, 2}, rng, false);

    // k=1 identity over channels
    Tensor k1({1, 2, 2}, {1, 0, 0, 1});
    Tensor b({2}, {0, 0});
    CHECK(nn::conv1d_forward(x, k1, b).data() == x.data());

    // k=3 with the center tap as channel identity
    std::vector<double> k3_data(3 * 2 * 2, 0.0);
    k3_data[1 * 4 + 0] = 1.0;  // center tap, cin 0 -> cout 0
    k3_data[1 * 4 + 3] = 1.0;  // center tap, cin 1 -> cout 1
    Tensor k3({3, 2, 2}, k3_data);
    const auto y = nn::conv1d_forward(x, k3, b);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(y.data()[i] == doctest::Approx(x.data()[i]));
}

TEST_CASE("conv1d rejects even kernels") {
    Tensor x({4, 1}, std::vector<double>(4, 1.0));
    Tensor k({2, 1, 1}, {1, 1});
    Tensor b({1}, {0});
    CHECK_THROWS_AS(nn::conv1d_forward(x, k, b), ConfigError);
}

TEST_CASE("conv1d gradients match finite differences over random shapes") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t t = 1 + rng() % 6, cin = 1 + rng() % 3, cout = 1 + rng() % 3;
        const std::size_t k = 1 + 2 * (rng() % 3);
        auto fn = [](std::vector<Tensor>& v) {
            return nn::sum(nn::mul(nn::conv1d_forward(v[0], v[1], v[2]), v[3]));
        };
        CHECK(nn::grad_check(fn, {rand_t({t, cin}, rng), rand_t({k, cin, cout}, rng),
                                  rand_t({cout}, rng), rand_t({t, cout}, rng)}) < 1e-4);
    }
}

TEST_CASE("attention over identical positions is position independent") {
    std::mt19937_64 rng(5);
    Tensor row = rand_t({1, 4}, rng, false);
    std::vector<double> data;
    for (int i = 0; i < 3; ++i) data.insert(data.end(), row.data().begin(), row.data().end());
    Tensor x({3, 4}, data);
    const Tensor Wq = rand_t({4, 4}, rng), Wk = rand_t({4, 4}, rng);
    const Tensor Wv = rand_t({4, 4}, rng), Wo = rand_t({4, 4}, rng);
    const auto y = nn::self_attention_forward(x, 2, Wq, Wk, Wv, Wo);
    for (std::size_t t = 1; t < 3; ++t)
        for (std::size_t c = 0; c < 4; ++c)
            CHECK(y.at(t, c) == doctest::Approx(y.at(0, c)).epsilon(1e-12));
}

TEST_CASE("zero query/key weights give uniform attention") {
    std::mt19937_64 rng(6);
    const Tensor x = rand_t({4, 4}, rng, false);
    Tensor zero({4, 4}, std::vector<double>(16, 0.0));
    const Tensor Wv = rand_t({4, 4}, rng, false);
    Tensor eye({4, 4}, std::vector<double>(16, 0.0));
    for (int i = 0; i < 4; ++i) eye.data()[i * 4 + i] = 1.0;
    const auto y = nn::self_attention_forward(x, 2, zero, zero, Wv, eye);
    // uniform attention -> every position sees the mean value projection
    const auto v = nn::matmul(x, Wv);
    for (std::size_t c = 0; c < 4; ++c) {
        double m = 0.0;
        for (std::size_t t = 0; t < 4; ++t) m += v.at(t, c);
        m /= 4.0;
        for (std::size_t t = 0; t < 4; ++t) CHECK(y.at(t, c) == doctest::Approx(m).epsilon(1e-12));
    }
}

TEST_CASE("attention rejects non-divisible head counts") {
    std::mt19937_64 rng(7);
    const Tensor x = rand_t({2, 6}, rng, false);
    const Tensor W = rand_t({6, 6}, rng, false);
    CHECK_THROWS_AS(nn::self_attention_forward(x, 4, W, W, W, W), ConfigError);
}

TEST_CASE("attention gradients match finite differences over random shapes") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t heads = 1 + rng() % 2;
        const std::size_t d = heads * (1 + rng() % 3);
        const std::size_t t = 1 + rng() % 4;
        auto fn = [heads](std::vector<Tensor>& v) {
            return nn::sum(
                nn::mul(nn::self_attention_forward(v[0], heads, v[1], v[2], v[3], v[4]), v[5]));
        };
        CHECK(nn::grad_check(fn, {rand_t({t, d}, rng), rand_t({d, d}, rng), rand_t({d, d}, rng),
                                  rand_t({d, d}, rng), rand_t({d, d}, rng), rand_t({t, d}, rng)}) <
              1e-4);
    }
}

TEST_CASE("zero-weight GRU stays at zero") {
    nn::GruParams p;
    p.Wz = p.Wr = p.Wn = Tensor::zeros({2, 3});
    p.Uz = p.Ur = p.Un = Tensor::zeros({3, 3});
    p.bz = p.br = p.bn = Tensor::zeros({3});
    std::mt19937_64 rng(9);
    const auto out = nn::gru_forward(rand_t({4, 2}, rng, false), Tensor::zeros({1, 3}), p);
    for (double v : out.outputs.data()) CHECK(v == 0.0);
}

TEST_CASE("T=1 GRU equals a directly evaluated cell") {
    std::mt19937_64 rng(10);
    nn::GruParams p;
    p.Wz = rand_t({2, 3}, rng, false);
    p.Wr = rand_t({2, 3}, rng, false);
    p.Wn = rand_t({2, 3}, rng, false);
    p.Uz = rand_t({3, 3}, rng, false);
    p.Ur = rand_t({3, 3}, rng, false);
    p.Un = rand_t({3, 3}, rng, false);
    p.bz = rand_t({3}, rng, false);
    p.br = rand_t({3}, rng, false);
    p.bn = rand_t({3}, rng, false);
    const Tensor x = rand_t({1, 2}, rng, false);
    const Tensor h0 = rand_t({1, 3}, rng, false);
    const auto out = nn::gru_forward(x, h0, p);

    // hand-rolled single cell
    auto mv = [](const Tensor& v, const Tensor& M, std::size_t j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < M.rows(); ++i) acc += v.data()[i] * M.at(i, j);
        return acc;
    };
    for (std::size_t j = 0; j < 3; ++j) {
        const double z = 1.0 / (1.0 + std::exp(-(mv(x, p.Wz, j) + mv(h0, p.Uz, j) + p.bz.data()[j])));
        const double r = 1.0 / (1.0 + std::exp(-(mv(x, p.Wr, j) + mv(h0, p.Ur, j) + p.br.data()[j])));
        std::vector<double> rh(3);
        for (std::size_t i = 0; i < 3; ++i) {
            const double ri =
                1.0 / (1.0 +
                       std::exp(-(mv(x, p.Wr, i) + mv(h0, p.Ur, i) + p.br.data()[i])));
            rh[i] = ri * h0.data()[i];
        }
        double un = 0.0;
        for (std::size_t i = 0; i < 3; ++i) un += rh[i] * p.Un.at(i, j);
        const double nj = std::tanh(mv(x, p.Wn, j) + un + p.bn.data()[j]);
        const double h = (1.0 - z) * nj + z * h0.data()[j];
        (void)r;
        CHECK(out.outputs.data()[j] == doctest::Approx(h).epsilon(1e-12));
    }
}

TEST_CASE("GRU gradients through time match finite differences") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t t = 2 + rng() % 3, din = 1 + rng() % 2, h = 1 + rng() % 3;
        auto fn = [h](std::vector<Tensor>& v) {
            nn::GruParams p{v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]};
            return nn::sum(nn::gru_forward(v[0], Tensor::zeros({1, h}), p).outputs);
        };
        std::vector<Tensor> in{rand_t({t, din}, rng)};
        for (int i = 0; i < 3; ++i) in.push_back(rand_t({din, h}, rng));
        for (int i = 0; i < 3; ++i) in.push_back(rand_t({h, h}, rng));
        for (int i = 0; i < 3; ++i) in.push_back(rand_t({h}, rng));
        CHECK(nn::grad_check(fn, in) < 1e-4);
    }
}

TEST_CASE("layer_norm basics") {
    Tensor gamma({3}, {1, 1, 1});
    Tensor beta({3}, {0, 0, 0});
    Tensor x({2, 3}, {5, 5, 5, -2, -2, -2});
    const auto zeros = nn::layer_norm(x, gamma, beta);
    for (double v : zeros.data()) CHECK(v == doctest::Approx(0.0));

    std::mt19937_64 rng(12);
    Tensor beta2({3}, {0.7, 0.7, 0.7});
    const auto y = nn::layer_norm(rand_t({4, 3}, rng, false), gamma, beta2);
    for (std::size_t r = 0; r < 4; ++r) {
        double m = 0.0;
        for (std::size_t c = 0; c < 3; ++c) m += y.at(r, c);
        CHECK(m / 3.0 == doctest::Approx(0.7).epsilon(1e-9));
    }
}

TEST_CASE("layer_norm gradients match finite differences") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng() % 4, d = 2 + rng() % 4;
        auto fn = [](std::vector<Tensor>& v) {
            return nn::sum(nn::mul(nn::layer_norm(v[0], v[1], v[2]), v[3]));
        };
        CHECK(nn::grad_check(fn, {rand_t({n, d}, rng), rand_t({d}, rng), rand_t({d}, rng),
                                  rand_t({n, d}, rng)}) < 1e-4);
    }
}

TEST_CASE("mse_loss values and gradient") {
    Tensor a({2}, {0, 0}, true);
    Tensor b({2}, {3, 4});
    CHECK(nn::mse_loss(b, b).item() == 0.0);
    const auto l = nn::mse_loss(a, b);
    CHECK(l.item() == doctest::Approx(12.5));
    l.backward();
    CHECK(a.grad()[0] == doctest::Approx(2.0 * (0.0 - 3.0) / 2.0));
    CHECK(a.grad()[1] == doctest::Approx(2.0 * (0.0 - 4.0) / 2.0));

    Tensor c({3}, {1, 2, 3});
    Tensor d({2}, {1, 2});
    CHECK_THROWS_AS(nn::mse_loss(c, d), ShapeError);
}

TEST_CASE("grad_check on analytic functions") {
    std::mt19937_64 rng(14);
    auto fsum = [](std::vector<Tensor>& v) { return nn::sum(v[0]); };
    CHECK(nn::grad_check(fsum, {rand_t({3, 3}, rng)}) < 1e-10);

    auto fquad = [](std::vector<Tensor>& v) {
        return nn::mul_scalar(nn::sum(nn::mul(v[0], v[0])), 0.5);
    };
    CHECK(nn::grad_check(fquad, {rand_t({4}, rng)}) < 1e-8);
}

TEST_CASE("dropout is identity in eval mode and reproducible in train mode") {
    std::mt19937_64 rng(15);
    const Tensor x = rand_t({6, 6}, rng, false);
    std::mt19937_64 eval_rng(1);
    CHECK(nn::dropout(x, 0.5, false, eval_rng).data() == x.data());

    std::mt19937_64 r1(99), r2(99);
    const auto a = nn::dropout(x, 0.5, true, r1);
    const auto b = nn::dropout(x, 0.5, true, r2);
    CHECK(a.data() == b.data());
    // inverted scaling: kept entries are x / (1 - rate), dropped are 0
    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool ok = a.data()[i] == 0.0 ||
                        a.data()[i] == doctest::Approx(x.data()[i] / 0.5).epsilon(1e-12);
        CHECK(ok);
    }
}

TEST_CASE("parallel matmul matches the serial reference") {
    std::mt19937_64 rng(16);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (std::size_t n : {3, 17, 64}) {
        std::vector<double> a(n * n), b(n * n), c(n * n), d(n * n);
        for (auto& v : a) v = dist(rng);
        for (auto& v : b) v = dist(rng);
        nn::matmul_serial(a.data(), b.data(), c.data(), n, n, n);
        nn::matmul_parallel(a.data(), b.data(), d.data(), n, n, n);
        CHECK(c == d);
    }
}

TEST_CASE("forward passes with identical inputs are bit-identical") {
    std::mt19937_64 rng(17);
    const Tensor x = rand_t({5, 4}, rng, false);
    const Tensor W = rand_t({4, 4}, rng, false);
    const Tensor b = rand_t({4}, rng, false);
    const auto y1 = nn::layer_norm(nn::linear_forward(nn::sigmoid(x), W, b),
                                   Tensor({4}, {1, 1, 1, 1}), Tensor({4}, {0, 0, 0, 0}));
    const auto y2 = nn::layer_norm(nn::linear_forward(nn::sigmoid(x), W, b),
                                   Tensor({4}, {1, 1, 1, 1}), Tensor({4}, {0, 0, 0, 0}));
    CHECK(y1.data() == y2.data());
}

TEST_CASE("Noam schedule warms up then decays") {
    nn::ParamRegistry reg;
    reg.add("w", Tensor({2}, {0, 0}, true));
    nn::AdamConfig cfg;
    cfg.warmup_steps = 100;
    nn::AdamOptimizer opt(reg, cfg);
    CHECK(opt.learning_rate(50) < opt.learning_rate(100));
    CHECK(opt.learning_rate(1000) < opt.learning_rate(100));
}
