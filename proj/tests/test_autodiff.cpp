// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "mlpcm/checkpoint.hpp"
#include "mlpcm/params.hpp"
#include "mlpcm/tensor.hpp"
#include "support.hpp"

using namespace mlpcm;
using mlpcm::testing::finite_diff_check;
using mlpcm::testing::random_tensor;

TEST_CASE("matmul identity and projector") {
    Tensor id = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor r = matmul(id, a);
    CHECK(r.data()[0] == 1.f);
    CHECK(r.data()[1] == 2.f);
    CHECK(r.data()[2] == 3.f);
    CHECK(r.data()[3] == 4.f);

    Tensor proj = Tensor::from({2, 2}, {1, 0, 0, 0});
    Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
    Tensor p = matmul(proj, b);
    CHECK(p.data()[0] == 5.f);
    CHECK(p.data()[1] == 6.f);
    CHECK(p.data()[2] == 0.f);
    CHECK(p.data()[3] == 0.f);
}

TEST_CASE("matmul shape error names both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("matmul gradient matches finite differences") {
    Rng rng(7);
    Tensor a = random_tensor({3, 4}, rng, -1, 1, true);
    Tensor b = random_tensor({4, 2}, rng, -1, 1, true);
    auto loss = [&] { return mse_loss(matmul(a, b), Tensor::zeros({3, 2})); };
    auto rep = finite_diff_check(loss, {a, b});
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("layer_norm examples") {
    Tensor gain = Tensor::full({3}, 1.f);
    Tensor bias = Tensor::zeros({3});
    Tensor constant = Tensor::from({1, 3}, {5, 5, 5});
    Tensor out = layer_norm(constant, gain, bias);
    for (float v : out.data()) CHECK(v == doctest::Approx(0.f).epsilon(1e-6));

    Tensor two = Tensor::from({1, 2}, {-1, 1});
    Tensor g2 = Tensor::full({2}, 1.f), b2 = Tensor::zeros({2});
    Tensor o2 = layer_norm(two, g2, b2, 1e-12f);
    CHECK(o2.data()[0] == doctest::Approx(-1.f).epsilon(1e-5));
    CHECK(o2.data()[1] == doctest::Approx(1.f).epsilon(1e-5));

    Tensor zero_gain = Tensor::zeros({3});
    Tensor some_bias = Tensor::from({3}, {1, 2, 3});
    Rng rng(1);
    Tensor o3 = layer_norm(random_tensor({4, 3}, rng), zero_gain, some_bias);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 3; ++c) CHECK(o3.at(r, c) == doctest::Approx(some_bias.data()[c]));
}

TEST_CASE("softmax rows") {
    Tensor x = Tensor::from({1, 3}, {0, 0, 0});
    Tensor y = softmax_lastdim(x);
    for (float v : y.data()) CHECK(v == doctest::Approx(1.f / 3.f));

    Tensor big = Tensor::from({1, 2}, {1000, 0});
    Tensor yb = softmax_lastdim(big);
    CHECK(yb.data()[0] == doctest::Approx(1.f));
    CHECK(yb.data()[1] == doctest::Approx(0.f));
    CHECK(std::isfinite(yb.data()[0]));

    Tensor ln = Tensor::from({1, 2}, {std::log(2.f), 0.f});
    Tensor yl = softmax_lastdim(ln);
    CHECK(yl.data()[0] == doctest::Approx(2.f / 3.f));
    CHECK(yl.data()[1] == doctest::Approx(1.f / 3.f));
}

TEST_CASE("softmax rows sum to one for wild inputs") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor({5, 7}, rng, -1000, 1000);
        Tensor y = softmax_lastdim(x);
        for (int r = 0; r < 5; ++r) {
            double s = 0;
            for (int c = 0; c < 7; ++c) s += y.at(r, c);
            CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("elementwise examples") {
    Tensor x = Tensor::from({2}, {-1, 2});
    Tensor y = relu(x);
    CHECK(y.data()[0] == 0.f);
    CHECK(y.data()[1] == 2.f);

    Tensor m = Tensor::from({3, 1}, {1, 2, 3});
    Tensor g = gather_rows(m, {2, 0});
    CHECK(g.data()[0] == 3.f);
    CHECK(g.data()[1] == 1.f);

    Tensor a = Tensor::from({4}, {1, -2, 3, 0.5f});
    CHECK(l1_loss(a, a).value() == 0.f);
}

TEST_CASE("gather_rows rejects out-of-range index, naming it") {
    Tensor m = Tensor::from({3, 1}, {1, 2, 3});
    CHECK_THROWS_WITH_AS(gather_rows(m, {5}), doctest::Contains("5"), IndexError);
    CHECK_THROWS_AS(scatter_add_rows(m, {7}, Tensor::zeros({1, 1})), IndexError);
}

TEST_CASE("gather/scatter_add adjointness") {
    Rng rng(11);
    Tensor x = random_tensor({9, 4}, rng);
    std::vector<std::int64_t> idx = {3, 1, 3, 8, 0, 5};
    Tensor y = random_tensor({6, 4}, rng);

    Tensor gx = gather_rows(x, idx);
    double lhs = 0;
    for (std::int64_t i = 0; i < gx.numel(); ++i) lhs += gx.data()[i] * y.data()[i];

    Tensor sy = scatter_add_rows(Tensor::zeros({9, 4}), idx, y);
    double rhs = 0;
    for (std::int64_t i = 0; i < sy.numel(); ++i) rhs += sy.data()[i] * x.data()[i];

    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
}

TEST_CASE("backward basics") {
    Tensor w = Tensor::from({3}, {1, 2, 3}, true);
    Tensor loss = sum_all(w);
    backward(loss);
    for (float g : w.grad()) CHECK(g == 1.f);

    // loss = mse(w*x, y) in 1-D: d/dw = 2(wx - y)x
    Tensor w1 = Tensor::scalar(1.5f, true);
    Tensor x1 = Tensor::scalar(2.f);
    Tensor y1 = Tensor::scalar(1.f);
    Tensor l = mse_loss(mul(w1, x1), y1);
    backward(l);
    float expect = 2.f * (1.5f * 2.f - 1.f) * 2.f;
    CHECK(w1.grad()[0] == doctest::Approx(expect));
}

TEST_CASE("backward rejects non-scalar loss") {
    Tensor v = Tensor::from({2}, {1, 2}, true);
    CHECK_THROWS_AS(backward(v), ContractError);
}

TEST_CASE("repeated backward with zeroing is deterministic; without zeroing accumulates") {
    Rng rng(5);
    Tensor a = random_tensor({4, 4}, rng, -1, 1, true);
    Tensor b = random_tensor({4, 4}, rng, -1, 1, true);
    Tensor loss = mse_loss(matmul(a, b), Tensor::zeros({4, 4}));

    backward(loss);
    std::vector<float> g1(a.grad().begin(), a.grad().end());
    a.zero_grad();
    b.zero_grad();
    backward(loss);
    std::vector<float> g2(a.grad().begin(), a.grad().end());
    CHECK(g1 == g2);

    backward(loss);  // no zeroing: accumulates one more dL/da
    for (size_t i = 0; i < g1.size(); ++i)
        CHECK(a.grad()[i] == doctest::Approx(2.f * g1[i]).epsilon(1e-5));
}

TEST_CASE("finite-difference gradient suite over the op set") {
    Rng rng(23);
    auto target = random_tensor({6, 5}, rng);

    SUBCASE("add/sub/mul/scale chain") {
        Tensor a = random_tensor({6, 5}, rng, -1, 1, true);
        Tensor b = random_tensor({6, 5}, rng, -1, 1, true);
        auto loss = [&] { return mse_loss(mul(add(a, b), sub(a, scale(b, 0.7f))), target); };
        CHECK(finite_diff_check(loss, {a, b}).max_rel_err < 1e-4);
    }
    SUBCASE("relu/sigmoid") {
        Tensor a = random_tensor({6, 5}, rng, -1, 1, true);
        auto loss = [&] { return mse_loss(sigmoid(relu(a)), target); };
        CHECK(finite_diff_check(loss, {a}).max_rel_err < 1e-4);
    }
    SUBCASE("softmax") {
        Tensor a = random_tensor({4, 6}, rng, -2, 2, true);
        Tensor t2 = random_tensor({4, 6}, rng);
        auto loss = [&] { return mse_loss(softmax_lastdim(a), t2); };
        CHECK(finite_diff_check(loss, {a}).max_rel_err < 1e-4);
    }
    SUBCASE("layer_norm") {
        Tensor a = random_tensor({5, 8}, rng, -2, 2, true);
        Tensor gn = random_tensor({8}, rng, 0.5, 1.5, true);
        Tensor bs = random_tensor({8}, rng, -0.5, 0.5, true);
        Tensor t2 = random_tensor({5, 8}, rng);
        auto loss = [&] { return mse_loss(layer_norm(a, gn, bs), t2); };
        CHECK(finite_diff_check(loss, {a, gn, bs}).max_rel_err < 1e-4);
    }
    SUBCASE("concat/slice") {
        Tensor a = random_tensor({4, 3}, rng, -1, 1, true);
        Tensor b = random_tensor({4, 2}, rng, -1, 1, true);
        Tensor t2 = random_tensor({4, 4}, rng);
        auto loss = [&] {
            Tensor c = concat_lastdim({a, b});
            return mse_loss(slice_lastdim(c, 1, 4), t2);
        };
        CHECK(finite_diff_check(loss, {a, b}).max_rel_err < 1e-4);
    }
    SUBCASE("gather/scatter/group_max") {
        Tensor a = random_tensor({8, 3}, rng, -1, 1, true);
        Tensor s = random_tensor({4, 3}, rng, -1, 1, true);
        std::vector<std::int64_t> gi = {1, 7, 2, 2, 0, 5, 6, 3};
        std::vector<std::int64_t> si = {0, 3, 3, 6};
        Tensor t2 = random_tensor({4, 3}, rng);
        auto loss = [&] {
            Tensor g = gather_rows(scatter_add_rows(a, si, s), gi);
            return mse_loss(group_max_rows(g, 2), t2);
        };
        CHECK(finite_diff_check(loss, {a, s}).max_rel_err < 1e-4);
    }
    SUBCASE("broadcast row ops and scalar scale") {
        Tensor a = random_tensor({6, 4}, rng, -1, 1, true);
        Tensor v = random_tensor({4}, rng, -1, 1, true);
        Tensor s = Tensor::scalar(0.8f, true);
        Tensor t2 = random_tensor({6, 4}, rng);
        auto loss = [&] {
            return mse_loss(scale_by_scalar(add_bcast_row(mul_bcast_row(a, v), v), s), t2);
        };
        CHECK(finite_diff_check(loss, {a, v, s}).max_rel_err < 1e-4);
    }
    SUBCASE("reductions and losses") {
        Tensor a = random_tensor({5, 4}, rng, -1, 1, true);
        Tensor b = random_tensor({5, 4}, rng, -1, 1, true);
        auto loss = [&] {
            Tensor part = mean_over_axis(a, 0);
            Tensor l1 = l1_loss(a, b);
            Tensor l2 = mse_loss(a, b);
            return add(add(sum_all(part), l1), l2);
        };
        CHECK(finite_diff_check(loss, {a, b}).max_rel_err < 1e-4);
    }
}

TEST_CASE("adam step") {
    SUBCASE("first step matches hand computation") {
        ParamStore store;
        Tensor p = store.add("w", Tensor::from({2}, {1.f, 2.f}));
        Tensor loss = mse_loss(p, Tensor::zeros({2}));
        backward(loss);
        std::vector<float> g(p.grad().begin(), p.grad().end());

        AdamState state;
        AdamConfig cfg;
        cfg.lr = 0.1f;
        adam_step(store, state, cfg);
        // at t=1, mhat = g, vhat = g^2, so update = -lr * g/(|g| + eps)
        for (int i = 0; i < 2; ++i) {
            float expect = (i == 0 ? 1.f : 2.f) - cfg.lr * g[i] / (std::abs(g[i]) + cfg.eps);
            CHECK(p.data()[i] == doctest::Approx(expect).epsilon(1e-5));
        }
    }
    SUBCASE("zero gradient leaves parameters unchanged") {
        ParamStore store;
        Tensor p = store.add("w", Tensor::from({3}, {1, 2, 3}));
        Tensor loss = mse_loss(p.detach(), Tensor::zeros({3}));  // no grad reaches p
        backward(loss);
        p.zero_grad();
        // force an all-zero grad buffer
        Tensor l2 = scale(sum_all(p), 0.f);
        backward(l2);
        AdamState st;
        adam_step(store, st, {});
        CHECK(p.data()[0] == 1.f);
        CHECK(p.data()[1] == 2.f);
        CHECK(p.data()[2] == 3.f);
    }
    SUBCASE("lr = 0 leaves parameters unchanged") {
        ParamStore store;
        Tensor p = store.add("w", Tensor::from({2}, {1, -1}));
        backward(mse_loss(p, Tensor::zeros({2})));
        AdamState st;
        AdamConfig cfg;
        cfg.lr = 0.f;
        adam_step(store, st, cfg);
        CHECK(p.data()[0] == 1.f);
        CHECK(p.data()[1] == -1.f);
    }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    Rng rng(41);
    ParamStore store;
    store.add("enc.l0.w", random_tensor({4, 7}, rng, -3, 3));
    store.add("enc.l0.b", random_tensor({7}, rng));
    store.add("dec.head.w", random_tensor({7, 3}, rng, -10, 10));

    auto path = std::filesystem::temp_directory_path() / "mlpcm_ckpt_test.bin";
    save_checkpoint(path.string(), store);

    ParamStore loaded;
    loaded.add("enc.l0.w", Tensor::zeros({4, 7}));
    loaded.add("enc.l0.b", Tensor::zeros({7}));
    loaded.add("dec.head.w", Tensor::zeros({7, 3}));
    load_checkpoint(path.string(), loaded);

    for (size_t i = 0; i < store.size(); ++i) {
        auto a = store.items()[i].tensor.data();
        auto b = loaded.items()[i].tensor.data();
        REQUIRE(a.size() == b.size());
        for (size_t j = 0; j < a.size(); ++j) CHECK(std::memcmp(&a[j], &b[j], 4) == 0);
    }

    // generic reader sees the same content
    ParamStore any = read_checkpoint(path.string());
    CHECK(any.size() == 3);
    CHECK(any.find("dec.head.w") != nullptr);
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint header format") {
    ParamStore store;
    store.add("a", Tensor::from({2, 2}, {1, 2, 3, 4}));
    auto path = std::filesystem::temp_directory_path() / "mlpcm_ckpt_hdr.bin";
    save_checkpoint(path.string(), store);
    std::ifstream in(path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(all.rfind("MLPCMCKPT1\n", 0) == 0);
    CHECK(all.find("a 2x2 f32 0\n") != std::string::npos);
    CHECK(all.find("\n---\n") != std::string::npos);
    std::filesystem::remove(path);
}

TEST_CASE("no-grad guard suppresses tape construction") {
    Tensor p = Tensor::from({2}, {1, 2}, true);
    NoGradGuard guard;
    Tensor y = scale(p, 2.f);
    CHECK_FALSE(y.requires_grad());
}
