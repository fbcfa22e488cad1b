#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sctransnet/tensor.hpp"

using namespace scnet;

namespace {

TensorPtr random_tensor(std::size_t r, std::size_t c, Rng& rng, bool requires_grad = true,
                        double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(r * c);
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::create({r, c}, std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("matmul matches hand oracles") {
    auto eye = Tensor::create({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto b = Tensor::create({3, 2}, {1, 2, 3, 4, 5, 6});
    auto ib = matmul(eye, b);
    CHECK(ib->values == b->values);

    auto zero = Tensor::zeros(2, 3);
    auto zb = matmul(zero, b);
    for (double v : zb->values) CHECK(v == 0.0);

    auto a = Tensor::create({2, 2}, {1, 2, 3, 4});
    auto c = Tensor::create({2, 1}, {5, 6});
    auto ac = matmul(a, c);
    CHECK(ac->values[0] == doctest::Approx(17.0));
    CHECK(ac->values[1] == doctest::Approx(39.0));

    CHECK_THROWS_AS(matmul(a, b), DimensionError);
}

TEST_CASE("softmax rows: uniform, stabilized, closed form") {
    auto equal = softmax_rows(Tensor::create({1, 4}, {2.5, 2.5, 2.5, 2.5}));
    for (double v : equal->values) CHECK(v == doctest::Approx(0.25));

    auto big = softmax_rows(Tensor::create({1, 2}, {1000.0, 0.0}));
    CHECK(is_finite(big->values[0]));
    CHECK(big->values[0] == doctest::Approx(1.0));
    CHECK(big->values[1] == doctest::Approx(0.0));

    auto closed = softmax_rows(Tensor::create({1, 2}, {0.0, std::log(3.0)}));
    CHECK(closed->values[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(closed->values[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and ignore per-row shifts") {
    Rng rng(7);
    auto a = random_tensor(5, 9, rng, false, -3.0, 3.0);
    auto s1 = softmax_rows(a);
    for (std::size_t i = 0; i < 5; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 9; ++j) sum += s1->at(i, j);
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    auto shifted = Tensor::create(a->shape, a->values);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 9; ++j) shifted->at(i, j) += 17.25 * (double(i) + 1.0);
    auto s2 = softmax_rows(shifted);
    for (std::size_t i = 0; i < s1->numel(); ++i)
        CHECK(std::abs(s1->values[i] - s2->values[i]) < 1e-12);
}

TEST_CASE("backward: sum gives ones, squared sum gives 2x") {
    auto x = Tensor::create({2, 3}, {1, -2, 3, 0.5, 4, -1}, true);
    auto g1 = backward(sum_all(x));
    for (double v : g1.at(x.get())) CHECK(v == 1.0);

    auto g2 = backward(sum_all(mul(x, x)));
    const auto& gx = g2.at(x.get());
    for (std::size_t i = 0; i < x->numel(); ++i)
        CHECK(gx[i] == doctest::Approx(2.0 * x->values[i]));
}

TEST_CASE("backward contract: scalar loss only, tape consumed once") {
    auto x = Tensor::create({2, 2}, {1, 2, 3, 4}, true);
    CHECK_THROWS_AS(backward(mul(x, x)), ContractError);

    auto loss = sum_all(mul(x, x));
    backward(loss);
    CHECK_THROWS_AS(backward(loss), ContractError);
}

TEST_CASE("composite mlp loss matches central differences") {
    Rng rng(11);
    auto x = random_tensor(4, 3, rng, false);
    auto w1 = random_tensor(3, 5, rng);
    auto b1 = random_tensor(1, 5, rng);
    auto w2 = random_tensor(5, 2, rng);
    auto b2 = random_tensor(1, 2, rng);
    auto loss_fn = [&] {
        auto h = gelu(add_row_broadcast(matmul(x, w1), b1));
        auto out = add_row_broadcast(matmul(h, w2), b2);
        return mean_all(mul(out, out));
    };
    CHECK(grad_check(loss_fn, {w1, b1, w2, b2}, 1e-5) < 1e-4);
}

TEST_CASE("grad_check: quadratic form near-exact, softmax cross-entropy composite") {
    Rng rng(13);
    auto x = random_tensor(3, 3, rng);
    auto quad = [&] { return sum_all(mul(x, x)); };
    CHECK(grad_check(quad, {x}, 1e-5) < 1e-8);

    auto logits = random_tensor(4, 6, rng);
    std::vector<double> onehot(4 * 6, 0.0);
    for (std::size_t i = 0; i < 4; ++i) onehot[i * 6 + (i * 2) % 6] = 1.0;
    auto targets = Tensor::create({4, 6}, std::move(onehot));
    auto ce = [&] {
        auto picked = row_sums(mul(softmax_rows(logits), targets));
        return scale(mean_all(log_elem(picked)), -1.0);
    };
    CHECK(grad_check(ce, {logits}, 1e-5) < 1e-4);

    auto z = random_tensor(8, 1, rng);
    std::vector<double> labels = {1, 0, 0, 1, 1, 0, 1, 0};
    auto bce_fn = [&] { return bce_with_logits_mean(z, labels); };
    CHECK(grad_check(bce_fn, {z}, 1e-5) < 1e-4);
}

TEST_CASE("grad_check rejects non-deterministic functions") {
    Rng rng(17);
    auto x = random_tensor(2, 2, rng);
    int calls = 0;
    auto noisy = [&] {
        ++calls;
        return sum_all(scale(x, 1.0 + 0.001 * calls));
    };
    CHECK_THROWS_AS(grad_check(noisy, {x}, 1e-5), ContractError);
}

TEST_CASE("every differentiable op passes a seeded gradient check") {
    Rng rng(23);
    auto a = random_tensor(4, 5, rng);
    auto b = random_tensor(4, 5, rng);
    auto m = random_tensor(5, 3, rng);
    auto row = random_tensor(1, 5, rng);
    auto col = random_tensor(4, 1, rng, true, 0.5, 1.5);
    Rng wrng(29);

    auto check = [&](const char* name, const std::function<TensorPtr()>& op,
                     std::vector<TensorPtr> params) {
        INFO(name);
        // fixed random weights so every output coordinate influences the loss
        auto probe = op();
        std::vector<double> wv(probe->numel());
        for (double& x : wv) x = wrng.uniform(0.5, 1.5);
        auto wt = Tensor::create(probe->shape, std::move(wv));
        auto fn = [op, wt] { return sum_all(mul(op(), wt)); };
        CHECK(grad_check(fn, params, 1e-5) < 1e-4);
    };

    check("add", [&] { return add(a, b); }, {a, b});
    check("sub", [&] { return sub(a, b); }, {a, b});
    check("mul", [&] { return mul(a, b); }, {a, b});
    check("scale", [&] { return scale(a, -2.5); }, {a});
    check("matmul", [&] { return matmul(a, m); }, {a, m});
    check("transpose", [&] { return transpose(a); }, {a});
    check("add_row_broadcast", [&] { return add_row_broadcast(a, row); }, {a, row});
    check("mul_row_broadcast", [&] { return mul_row_broadcast(a, row); }, {a, row});
    check("add_col_broadcast", [&] { return add_col_broadcast(a, col); }, {a, col});
    check("mul_col_broadcast", [&] { return mul_col_broadcast(a, col); }, {a, col});
    check("div_col_broadcast", [&] { return div_col_broadcast(a, col); }, {a, col});
    check("row_sums", [&] { return row_sums(a); }, {a});
    check("col_sums", [&] { return col_sums(a); }, {a});
    check("exp_elem", [&] { return exp_elem(a); }, {a});
    check("log_elem", [&] { return log_elem(col); }, {col});
    check("gelu", [&] { return gelu(a); }, {a});
    check("sigmoid", [&] { return sigmoid(a); }, {a});
    check("softmax_rows", [&] { return softmax_rows(a); }, {a});
    check("layer_norm_rows", [&] { return layer_norm_rows(a); }, {a});
    check("concat_cols", [&] { return concat_cols({a, b}); }, {a, b});
    check("slice_cols", [&] { return slice_cols(a, 1, 4); }, {a});
    check("select_rows", [&] { return select_rows(a, {2, 0, 2, 3}); }, {a});
    check("rows_dot", [&] { return rows_dot(a, b); }, {a, b});
    check("mean_all", [&] { return mean_all(a); }, {a});

    std::vector<int> segs = {0, 0, 1, 2};
    auto gcol = random_tensor(4, 1, rng);
    check("segment_softmax", [&] { return segment_softmax(gcol, segs, 3); }, {gcol});
    check("segment_weighted_sum_rows",
          [&] { return segment_weighted_sum_rows(a, col, segs, 3); }, {a, col});
}

TEST_CASE("adam: zero grads leave parameters, first unit-gradient step is -lr") {
    auto p = Tensor::create({1, 3}, {1.0, -2.0, 0.5}, true);
    AdamOptimizer opt({p}, 0.003);

    GradientMap zero;
    zero.insert(p.get(), {0.0, 0.0, 0.0});
    opt.step(zero);
    CHECK(p->values[0] == 1.0);
    CHECK(p->values[1] == -2.0);
    CHECK(p->values[2] == 0.5);
    CHECK(opt.step_count() == 1);

    auto q = Tensor::create({1, 1}, {0.0}, true);
    AdamOptimizer opt2({q}, 0.003);
    GradientMap unit;
    unit.insert(q.get(), {1.0});
    opt2.step(unit);
    CHECK(q->values[0] == doctest::Approx(-0.003).epsilon(1e-6));
}

TEST_CASE("adam: missing gradient is a contract error") {
    auto p = Tensor::create({1, 2}, {0.0, 0.0}, true);
    AdamOptimizer opt({p}, 0.01);
    GradientMap empty;
    CHECK_THROWS_AS(opt.step(empty), ContractError);
}

TEST_CASE("adam drives a convex quadratic downhill over 100 steps") {
    Rng rng(37);
    auto x = random_tensor(1, 6, rng, true, -2.0, 2.0);
    std::vector<double> target(6);
    for (double& t : target) t = rng.uniform(-1.0, 1.0);
    auto tgt = Tensor::create({1, 6}, std::move(target));

    auto loss_value = [&] {
        NoGradGuard ng;
        return sum_all(mul(sub(x, tgt), sub(x, tgt)))->values[0];
    };
    const double initial = loss_value();
    AdamOptimizer opt({x}, 0.05);
    for (int i = 0; i < 100; ++i) {
        auto loss = sum_all(mul(sub(x, tgt), sub(x, tgt)));
        opt.step(backward(loss));
    }
    CHECK(loss_value() < initial);
    CHECK(opt.step_count() == 100);
}

TEST_CASE("forward results are bitwise identical across runs") {
    auto run = [] {
        Rng rng(41);
        auto a = random_tensor(6, 6, rng, false, -2.0, 2.0);
        auto b = random_tensor(6, 6, rng, false, -2.0, 2.0);
        auto out = softmax_rows(matmul(gelu(a), transpose(b)));
        return out->values;
    };
    CHECK(run() == run());
}

TEST_CASE("strict shapes: no implicit broadcasting in binary ops") {
    auto a = Tensor::create({2, 3}, {1, 2, 3, 4, 5, 6});
    auto v = Tensor::create({1, 3}, {1, 2, 3});
    CHECK_THROWS_AS(add(a, v), DimensionError);
    CHECK_THROWS_AS(mul(a, v), DimensionError);
    CHECK_THROWS_AS(add_row_broadcast(a, Tensor::create({1, 2}, {1, 2})), DimensionError);
    CHECK_THROWS_AS(add_col_broadcast(a, Tensor::create({3, 1}, {1, 2, 3})), DimensionError);
}
