#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hyperl1/tensor.hpp"
#include "test_util.hpp"

using namespace hyperl1;
using testutil::GradCheck;
using testutil::random_vec;

TEST_CASE("elementwise unary values") {
    Tensor x({4}, {0.0, 1.0, -3.0, 2.0});
    CHECK(silu(x)[0] == 0.0);
    CHECK_THAT(silu(x)[1], Catch::Matchers::WithinAbs(0.7310585786300049, 1e-15));
    CHECK(relu(x)[2] == 0.0);
    CHECK(relu(x)[3] == 2.0);
    CHECK(neg(x)[3] == -2.0);
    CHECK(square(x)[2] == 9.0);
    CHECK_THAT(hyperl1::exp(Tensor::scalar(0.0)).item(), Catch::Matchers::WithinAbs(1.0, 1e-15));
    CHECK_THROWS_AS(hyperl1::log(Tensor({2}, {1.0, -1.0})), DomainError);
    CHECK_THROWS_AS(hyperl1::log(Tensor::scalar(0.0)), DomainError);
}

TEST_CASE("elementwise binary and broadcasting") {
    Tensor a({2}, {1, 2});
    Tensor b({2}, {3, 4});
    CHECK(add(a, b).values() == std::vector<double>{4, 6});
    CHECK(sub(a, a).values() == std::vector<double>{0, 0});
    CHECK(mul(a, Tensor::zeros({2})).values() == std::vector<double>{0, 0});

    Tensor m({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor row({3}, {10, 20, 30});
    Tensor r = add(m, row);
    CHECK(r.values() == std::vector<double>{11, 22, 33, 14, 25, 36});

    CHECK_THROWS_AS(add(Tensor({3}, {1, 2, 3}), Tensor({2}, {1, 2})), ShapeError);

    Tensor q = div(a, Tensor({2}, {0.0, 2.0}));
    CHECK_FALSE(all_finite(q));  // division by zero flags, never throws
}

TEST_CASE("matmul values") {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor col({2, 1}, {1, 2});
    CHECK(matmul(eye, col).values() == std::vector<double>{1, 2});
    CHECK(matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4})).item() == 11.0);
    CHECK_THROWS_AS(matmul(Tensor({1, 2}, {1, 2}), Tensor({3, 1}, {1, 2, 3})), ShapeError);
}

TEST_CASE("matmul gradient example") {
    GradCheck gc;
    gc.shapes = {{1, 2}};
    Tensor b({2, 1}, {2, 5});
    gc.build = [&](const std::vector<Tensor>& in) { return sum(matmul(in[0], b)); };
    CHECK(gc.max_rel_err({{1, 1}}) < 1e-8);
    // closed form: d sum(A*B)/dA = B^T
    Tape tape;
    Tensor a = tape.leaf({1, 2}, {1, 1});
    tape.backward(sum(matmul(a, b)));
    CHECK(tape.grad(a) == std::vector<double>{2, 5});
}

TEST_CASE("reduce") {
    Tensor t({4}, {0.1, 0.1, 0.9, 1.0});
    CHECK_THAT(reduce(t, std::nullopt, Reduce::Median).item(),
               Catch::Matchers::WithinAbs(0.5, 1e-15));
    Tensor m({2, 2}, {1, 2, 3, 4});
    CHECK(reduce(m, 0, Reduce::Sum).values() == std::vector<double>{4, 6});
    Tensor allneg({3}, {-5, -2, -9});
    CHECK(reduce(allneg, std::nullopt, Reduce::Max).item() == -2.0);
    CHECK(reduce(allneg, std::nullopt, Reduce::Min).item() == -9.0);
    CHECK_THAT(mean(m).item(), Catch::Matchers::WithinAbs(2.5, 1e-15));
    CHECK_THROWS_AS(reduce(Tensor({0}, {}), std::nullopt, Reduce::Sum), DomainError);
}

TEST_CASE("softmax") {
    Tensor t({2}, {0, 0});
    CHECK(softmax(t, 0).values() == std::vector<double>{0.5, 0.5});
    Tensor big({2}, {1000, 1000});
    CHECK(softmax(big, 0).values() == std::vector<double>{0.5, 0.5});
    Tensor ln3({2}, {0, std::log(3.0)});
    Tensor s = softmax(ln3, 0);
    CHECK_THAT(s[0], Catch::Matchers::WithinAbs(0.25, 1e-14));
    CHECK_THAT(s[1], Catch::Matchers::WithinAbs(0.75, 1e-14));
}

TEST_CASE("softmax invariants", "[property]") {
    RngStream rng(21, "softmax-prop");
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x({3, 7}, random_vec(21, rng, -5, 5));
        Tensor s = softmax(x, 1);
        for (std::size_t i = 0; i < 3; ++i) {
            double acc = 0;
            for (std::size_t j = 0; j < 7; ++j) acc += s(i, j);
            CHECK_THAT(acc, Catch::Matchers::WithinAbs(1.0, 1e-12));
        }
        const double c = rng.uniform(-100, 100);
        Tensor shifted = softmax(add(x, Tensor::scalar(c)), 1);
        for (std::size_t k = 0; k < 21; ++k)
            CHECK_THAT(shifted[k], Catch::Matchers::WithinAbs(s[k], 1e-12));
    }
}

TEST_CASE("concat slice round trip", "[property]") {
    RngStream rng(22, "concat-prop");
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t rows = 1 + rng.below(5), c1 = 1 + rng.below(4), c2 = 1 + rng.below(4);
        Tensor a({rows, c1}, random_vec(rows * c1, rng));
        Tensor b({rows, c2}, random_vec(rows * c2, rng));
        Tensor joined = concat({a, b}, 1);
        CHECK(slice(joined, 1, 0, c1).values() == a.values());          // bit-exact
        CHECK(slice(joined, 1, c1, c1 + c2).values() == b.values());
    }
    CHECK_THROWS_AS(concat({}, 0), ShapeError);
    Tensor v({3}, {5, 6, 7});
    CHECK(slice(v, 0, 0, 2).values() == std::vector<double>{5, 6});
    CHECK_THROWS_AS(slice(v, 0, 2, 4), ShapeError);
}

TEST_CASE("gather and reshape") {
    Tensor m({3, 2}, {1, 2, 3, 4, 5, 6});
    Tensor g = gather_rows(m, {2, 0, 2});
    CHECK(g.values() == std::vector<double>{5, 6, 1, 2, 5, 6});
    CHECK_THROWS_AS(gather_rows(m, {3}), ShapeError);
    CHECK(reshape(m, {2, 3}).values() == m.values());
    CHECK_THROWS_AS(reshape(m, {4, 2}), ShapeError);
    CHECK(transpose(m).values() == std::vector<double>{1, 3, 5, 2, 4, 6});
}

TEST_CASE("backward basics") {
    Tape tape;
    Tensor x = tape.leaf({1}, {0.0});
    tape.backward(silu(x));
    CHECK_THAT(tape.grad(x)[0], Catch::Matchers::WithinAbs(0.5, 1e-14));

    Tape tape2;
    Tensor y = tape2.leaf({1}, {3.0});
    tape2.backward(square(y));
    CHECK(tape2.grad(y)[0] == 6.0);

    Tape tape3;
    Tensor z = tape3.leaf({2}, {1.0, 2.0});
    CHECK_THROWS_AS(tape3.backward(square(z)), UsageError);   // non-scalar loss
    CHECK_THROWS_AS(tape3.backward(Tensor::scalar(1.0)), UsageError);  // off-tape loss
}

TEST_CASE("gradients match finite differences on random inputs", "[property]") {
    RngStream rng(23, "fd-prop");
    double worst = 0;

    auto run = [&](GradCheck& gc, const std::vector<std::vector<double>>& inputs) {
        worst = std::max(worst, gc.max_rel_err(inputs));
    };

    for (int trial = 0; trial < 100; ++trial) {
        // Unary chain: keep inputs away from relu/median kinks and log's domain edge.
        {
            GradCheck gc;
            gc.shapes = {{4}};
            gc.build = [](const std::vector<Tensor>& in) {
                return sum(silu(in[0]) + sigmoid(in[0]) + square(in[0]) + softplus(in[0]));
            };
            run(gc, {random_vec(4, rng)});
        }
        {
            GradCheck gc;
            gc.shapes = {{3}};
            gc.build = [](const std::vector<Tensor>& in) {
                return sum(hyperl1::log(in[0]) + hyperl1::exp(neg(in[0])));
            };
            run(gc, {random_vec(3, rng, 0.2, 3.0)});
        }
        {
            GradCheck gc;
            gc.shapes = {{4}};
            gc.build = [](const std::vector<Tensor>& in) { return sum(relu(in[0])); };
            std::vector<double> v = random_vec(4, rng);
            for (auto& x : v)
                if (std::abs(x) < 0.05) x = 0.5;  // stay clear of the kink
            run(gc, {v});
        }
        // Binary with broadcasting.
        {
            GradCheck gc;
            gc.shapes = {{2, 3}, {3}};
            gc.build = [](const std::vector<Tensor>& in) {
                return sum(mul(in[0], in[1]) + div(in[0], in[1]));
            };
            std::vector<double> b = random_vec(3, rng, 0.5, 2.0);
            run(gc, {random_vec(6, rng), b});
        }
        // Matmul + transpose + softmax + reductions.
        {
            GradCheck gc;
            gc.shapes = {{2, 3}, {3, 2}};
            gc.build = [](const std::vector<Tensor>& in) {
                Tensor prod = matmul(in[0], in[1]);
                return sum(softmax(prod, 1)) + mean(prod) + sum(matmul(transpose(in[1]), in[1]));
            };
            run(gc, {random_vec(6, rng), random_vec(6, rng)});
        }
        // Max/min/median route gradients to selected slots; keep entries distinct.
        {
            GradCheck gc;
            gc.shapes = {{6}};
            gc.build = [](const std::vector<Tensor>& in) {
                return reduce(in[0], std::nullopt, Reduce::Max) +
                       reduce(in[0], std::nullopt, Reduce::Min) +
                       reduce(in[0], std::nullopt, Reduce::Median);
            };
            std::vector<double> v(6);
            for (std::size_t i = 0; i < 6; ++i)
                v[i] = static_cast<double>(i) * 0.7 + rng.uniform(0.0, 0.3);
            run(gc, {v});
        }
        // Concat/slice/gather plumbing.
        {
            GradCheck gc;
            gc.shapes = {{2, 2}, {2, 2}};
            gc.build = [](const std::vector<Tensor>& in) {
                Tensor joined = concat({in[0], in[1]}, 0);
                return sum(square(gather_rows(joined, {3, 0, 1, 1})));
            };
            run(gc, {random_vec(4, rng), random_vec(4, rng)});
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("operations are deterministic") {
    RngStream rng(24, "det");
    Tensor a({4, 4}, random_vec(16, rng));
    Tensor b({4, 4}, random_vec(16, rng));
    Tensor r1 = matmul(silu(a), softmax(b, 1));
    Tensor r2 = matmul(silu(a), softmax(b, 1));
    CHECK(r1.values() == r2.values());
}
