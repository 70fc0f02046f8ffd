#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "fusionbench/autograd.hpp"
#include "fusionbench/init.hpp"
#include "fusionbench/optim.hpp"
#include "fusionbench/params.hpp"
#include "gradcheck.hpp"

using namespace fusionbench;
using fusionbench::testing::gradcheck_max_rel_error;
using fusionbench::testing::random_tensor;

TEST_CASE("tensor shape/data invariants") {
    Tensor<float> t({2, 3}, 1.0f);
    CHECK(t.numel() == 6);
    CHECK_THROWS_AS(Tensor<float>({2, 3}, std::vector<float>(5, 0.f)), ShapeError);
    CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
    CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
}

TEST_CASE("conv2d valid-padding shape rule: 64x64x6 -> 62x62x32") {
    Tape<float> tape;
    auto x = tape.leaf(Tensor<float>({1, 64, 64, 6}, 0.5f));
    auto k = tape.leaf(Tensor<float>({3, 3, 6, 32}, 0.01f));
    auto b = tape.leaf(Tensor<float>({32}, 0.0f));
    auto y = tape.conv2d(x, k, b);
    CHECK(y.value().shape() == Shape{1, 62, 62, 32});
}

TEST_CASE("maxpool2d floor rule: 29x29x64 -> 14x14x64") {
    Tape<float> tape;
    auto x = tape.leaf(Tensor<float>({1, 29, 29, 64}, 1.0f));
    auto y = tape.maxpool2d(x);
    CHECK(y.value().shape() == Shape{1, 14, 14, 64});
}

TEST_CASE("conv2d/maxpool2d shape arithmetic holds for every size 4..256") {
    for (std::size_t s = 4; s <= 256; ++s) {
        Tape<float> tape;
        auto x = tape.leaf(Tensor<float>({1, s, s, 1}, 0.25f));
        auto k = tape.leaf(Tensor<float>({3, 3, 1, 1}, 0.1f));
        auto b = tape.leaf(Tensor<float>({1}, 0.0f));
        auto y = tape.conv2d(x, k, b);
        REQUIRE(y.value().shape() == Shape{1, s - 2, s - 2, 1});
        auto p = tape.maxpool2d(y);
        REQUIRE(p.value().shape() == Shape{1, (s - 2) / 2, (s - 2) / 2, 1});
    }
}

TEST_CASE("conv2d rejects mismatched shapes with both shapes in the message") {
    Tape<float> tape;
    auto x = tape.leaf(Tensor<float>({1, 8, 8, 3}, 0.0f));
    auto k = tape.leaf(Tensor<float>({3, 3, 4, 8}, 0.0f));
    auto b = tape.leaf(Tensor<float>({8}, 0.0f));
    try {
        tape.conv2d(x, k, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("conv2d") != std::string::npos);
        CHECK(msg.find("[1x8x8x3]") != std::string::npos);
        CHECK(msg.find("[3x3x4x8]") != std::string::npos);
    }
}

TEST_CASE("NaN input fails fast") {
    Tape<float> tape;
    Tensor<float> bad({2, 2}, 0.0f);
    bad[3] = std::nanf("");
    auto x = tape.leaf(bad);
    CHECK_THROWS_AS(tape.relu(x), NumericError);
}

TEST_CASE("activation values") {
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>({3}, std::vector<double>{-1.0, 0.0, 2.0}));
    auto r = tape.relu(x);
    CHECK(r.value()[0] == 0.0);
    CHECK(r.value()[1] == 0.0);
    CHECK(r.value()[2] == 2.0);

    auto z = tape.leaf(Tensor<double>({1, 4}, 0.0));
    auto sm = tape.softmax(z);
    for (int i = 0; i < 4; ++i) CHECK(sm.value()[i] == doctest::Approx(0.25).epsilon(1e-12));

    auto s = tape.sigmoid(tape.leaf(Tensor<double>({1}, 0.0)));
    CHECK(s.value()[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax rows are distributions (property)") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t rows = 1 + rng.next_below(6), cols = 2 + rng.next_below(7);
        Tape<double> tape;
        auto x = tape.leaf(random_tensor({rows, cols}, rng, -30.0, 30.0));
        auto y = tape.softmax(x);
        for (std::size_t r = 0; r < rows; ++r) {
            double sum = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
                double v = y.value()[r * cols + c];
                REQUIRE(v >= 0.0);
                REQUIRE(v <= 1.0);
                sum += v;
            }
            REQUIRE(std::abs(sum - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("dropout eval mode is the identity") {
    Rng rng(3);
    Tape<float> tape;
    Tensor<float> in = random_tensor({5, 7}, rng).cast<float>();
    auto x = tape.leaf(in);
    auto y = tape.dropout(x, 0.2, Mode::Eval, rng);
    CHECK(y.value().data() == in.data());
}

TEST_CASE("dropout train mode preserves expected value and scales survivors") {
    Rng rng(17);
    const double rate = 0.2;
    double sum = 0.0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        Tape<float> tape;
        auto x = tape.leaf(Tensor<float>({4}, 1.0f));
        auto y = tape.dropout(x, rate, Mode::Train, rng);
        for (int j = 0; j < 4; ++j) {
            float v = y.value()[j];
            REQUIRE((v == 0.0f || v == doctest::Approx(1.0f / 0.8f)));
        }
        sum += y.value()[0];
    }
    // E[value] = 1; sigma_mean = sqrt(rate/(1-rate)/draws) = 0.005
    CHECK(std::abs(sum / draws - 1.0) < 0.02);
}

TEST_CASE("cross-entropy examples") {
    SUBCASE("confident correct row is ~0 (exactly -log(1-eps))") {
        Tape<double> tape;
        auto p = tape.leaf(Tensor<double>({1, 4}, std::vector<double>{1, 0, 0, 0}));
        Tensor<double> y({1, 4}, std::vector<double>{1, 0, 0, 0});
        auto loss = tape.cross_entropy(p, y);
        CHECK(loss.value()[0] == doctest::Approx(-std::log(1.0 - 1e-12)).epsilon(1e-9));
        CHECK(loss.value()[0] == doctest::Approx(0.0).epsilon(1e-9));
    }
    SUBCASE("uniform row costs ln(4)") {
        Tape<double> tape;
        auto p = tape.leaf(Tensor<double>({1, 4}, 0.25));
        Tensor<double> y({1, 4}, std::vector<double>{0, 0, 1, 0});
        auto loss = tape.cross_entropy(p, y);
        CHECK(loss.value()[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    }
    SUBCASE("batch mean: rows [.5,.5]/[.9,.1], labels 0/0") {
        Tape<double> tape;
        auto p = tape.leaf(Tensor<double>({2, 2}, std::vector<double>{0.5, 0.5, 0.9, 0.1}));
        Tensor<double> y({2, 2}, std::vector<double>{1, 0, 1, 0});
        auto loss = tape.cross_entropy(p, y);
        const double expected = (-std::log(0.5) - std::log(0.9)) / 2.0;  // 0.39925...
        CHECK(loss.value()[0] == doctest::Approx(expected).epsilon(1e-12));
        CHECK(loss.value()[0] == doctest::Approx(0.3993).epsilon(1e-3));
    }
    SUBCASE("shape mismatch rejected") {
        Tape<double> tape;
        auto p = tape.leaf(Tensor<double>({1, 4}, 0.25));
        Tensor<double> y({2, 4}, 0.0);
        CHECK_THROWS_AS(tape.cross_entropy(p, y), ShapeError);
    }
}

TEST_CASE("backward: loss = sum(w * x) gives grad(w) == x") {
    Rng rng(5);
    Tape<double> tape;
    Tensor<double> xv = random_tensor({3, 4}, rng);
    auto w = tape.leaf(random_tensor({3, 4}, rng), true);
    auto x = tape.leaf(xv, false);
    auto loss = tape.sum(tape.mul(w, x));
    tape.backward(loss);
    for (std::size_t i = 0; i < xv.numel(); ++i)
        CHECK(w.grad()[i] == doctest::Approx(xv[i]).epsilon(1e-12));
}

TEST_CASE("backward twice without a new forward is an error") {
    Tape<double> tape;
    auto w = tape.leaf(Tensor<double>({2}, 1.0), true);
    auto loss = tape.sum(w);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), UsageError);
    tape.reset();
    auto w2 = tape.leaf(Tensor<double>({2}, 1.0), true);
    CHECK_NOTHROW(tape.backward(tape.sum(w2)));
}

TEST_CASE("gradient check: dense layer + cross-entropy on one example") {
    Rng rng(11);
    Tensor<double> x = random_tensor({1, 5}, rng);
    Tensor<double> w = random_tensor({5, 4}, rng, -0.5, 0.5);
    Tensor<double> b = random_tensor({4}, rng, -0.1, 0.1);
    Tensor<double> y({1, 4}, std::vector<double>{0, 1, 0, 0});
    auto build = [&y](Tape<double>& t, const std::vector<Val<double>>& in) {
        return t.cross_entropy(t.softmax(t.dense(in[0], in[1], in[2])), y);
    };
    for (std::size_t wrt = 0; wrt < 3; ++wrt) {
        double err = gradcheck_max_rel_error(build, {x, w, b}, wrt, rng);
        CHECK_MESSAGE(err < 1e-4, "wrt input ", wrt, " max rel err ", err);
    }
}

TEST_CASE("gradient check: individual layers (sampled)") {
    Rng rng(23);
    SUBCASE("conv2d w.r.t. input, kernel, bias") {
        Tensor<double> x = random_tensor({2, 5, 6, 2}, rng);
        Tensor<double> k = random_tensor({3, 3, 2, 3}, rng, -0.5, 0.5);
        Tensor<double> b = random_tensor({3}, rng, -0.1, 0.1);
        auto build = [](Tape<double>& t, const std::vector<Val<double>>& in) {
            return t.conv2d(in[0], in[1], in[2]);
        };
        for (std::size_t wrt = 0; wrt < 3; ++wrt)
            CHECK(gradcheck_max_rel_error(build, {x, k, b}, wrt, rng) < 1e-4);
    }
    SUBCASE("maxpool2d (distinct cell values keep FD off ties)") {
        Tensor<double> x({1, 6, 6, 2});
        for (std::size_t i = 0; i < x.numel(); ++i)
            x[i] = 0.05 * static_cast<double>((i * 7919) % 72) + 0.01 * static_cast<double>(i % 3);
        auto build = [](Tape<double>& t, const std::vector<Val<double>>& in) {
            return t.maxpool2d(in[0]);
        };
        CHECK(gradcheck_max_rel_error(build, {x}, 0, rng) < 1e-4);
    }
    SUBCASE("activations") {
        Tensor<double> x = random_tensor({3, 5}, rng, 0.2, 2.0);  // away from relu kink
        for (int which = 0; which < 4; ++which) {
            auto build = [which](Tape<double>& t, const std::vector<Val<double>>& in) {
                switch (which) {
                    case 0: return t.relu(in[0]);
                    case 1: return t.tanh_act(in[0]);
                    case 2: return t.sigmoid(in[0]);
                    default: return t.softmax(in[0]);
                }
            };
            CHECK(gradcheck_max_rel_error(build, {x}, 0, rng) < 1e-4);
        }
    }
    SUBCASE("dropout with a replayed mask") {
        Tensor<double> x = random_tensor({4, 4}, rng);
        auto build = [](Tape<double>& t, const std::vector<Val<double>>& in) {
            Rng mask_rng(42);  // fresh stream per forward: identical mask every call
            return t.dropout(in[0], 0.3, Mode::Train, mask_rng);
        };
        CHECK(gradcheck_max_rel_error(build, {x}, 0, rng) < 1e-4);
    }
}

TEST_CASE("optimizer_step examples") {
    SUBCASE("SGD: p=1.0, g=0.5, lr=0.1 -> 0.95; zero grad leaves p unchanged") {
        std::vector<Parameter<double>> params;
        params.push_back({"w", Tensor<double>({2}, std::vector<double>{1.0, 1.0}), true});
        params[0].value.grad() = {0.5, 0.0};
        Optimizer<double> opt(OptimizerSpec::sgd(0.1));
        opt.step(params);
        CHECK(params[0].value[0] == doctest::Approx(0.95).epsilon(1e-12));
        CHECK(params[0].value[1] == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("Adam first step moves by ~lr") {
        std::vector<Parameter<double>> params;
        params.push_back({"w", Tensor<double>({1}, std::vector<double>{0.0}), true});
        params[0].value.grad() = {1.0};
        Optimizer<double> opt(OptimizerSpec::adam(0.001));
        opt.step(params);
        // mhat = 1, vhat = 1 after bias correction: step = lr/(1+eps)
        CHECK(params[0].value[0] == doctest::Approx(-0.001).epsilon(1e-6));
        CHECK(opt.step_count() == 1);
    }
    SUBCASE("NaN gradient names the parameter") {
        std::vector<Parameter<double>> params;
        params.push_back({"conv1.kernel", Tensor<double>({1}, std::vector<double>{0.0}), true});
        params[0].value.grad() = {std::nan("")};
        Optimizer<double> opt(OptimizerSpec::sgd(0.1));
        try {
            opt.step(params);
            FAIL("expected NumericError");
        } catch (const NumericError& e) {
            CHECK(std::string(e.what()).find("conv1.kernel") != std::string::npos);
        }
    }
    SUBCASE("invalid hyperparameters rejected") {
        CHECK_THROWS_AS(Optimizer<double>(OptimizerSpec{OptimizerKind::SGD, -0.1, 0, 0, 0}),
                        DataError);
        CHECK_THROWS_AS(Optimizer<double>(OptimizerSpec{OptimizerKind::Adam, 0.1, 1.5, 0.999, 1e-8}),
                        DataError);
    }
}

TEST_CASE("glorot init: determinism, bound, near-zero mean") {
    Tensor<float> a = glorot_init<float>({100, 100}, 42);
    Tensor<float> b = glorot_init<float>({100, 100}, 42);
    CHECK(a.data() == b.data());

    const double limit = std::sqrt(6.0 / 200.0);
    for (std::size_t i = 0; i < a.numel(); ++i) {
        REQUIRE(a[i] <= limit);
        REQUIRE(a[i] >= -limit);
    }

    Tensor<double> big = glorot_init<double>({1000, 1000}, 7);
    double mean = 0.0;
    for (std::size_t i = 0; i < big.numel(); ++i) mean += big[i];
    mean /= static_cast<double>(big.numel());
    CHECK(std::abs(mean) < 0.005);
}

TEST_CASE("parameter archive round-trip") {
    namespace fs = std::filesystem;
    Rng rng(19);
    std::vector<Parameter<float>> params;
    params.push_back({"conv1.kernel", random_tensor({3, 3, 2, 4}, rng).cast<float>(), true});
    params.push_back({"conv1.bias", random_tensor({4}, rng).cast<float>(), true});
    params.push_back({"fc.weight", random_tensor({10, 4}, rng).cast<float>(), true});
    fs::path path = fs::temp_directory_path() / "fusionbench_params_test.bin";
    save_parameters(path.string(), params);
    auto loaded = load_parameters<float>(path.string());
    REQUIRE(loaded.size() == params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        CHECK(loaded[i].name == params[i].name);
        CHECK(loaded[i].value.shape() == params[i].value.shape());
        CHECK(loaded[i].value.data() == params[i].value.data());
    }
    CHECK_THROWS_AS(load_parameters<double>(path.string()), DataError);  // dtype mismatch
    fs::remove(path);
}

TEST_CASE("seeded forward+backward+step is bit-identical across runs") {
    auto run = [] {
        Rng rng(1234);
        std::vector<Parameter<float>> params;
        params.push_back({"w", glorot_init<float>({6, 4}, rng), true});
        params.push_back({"b", Tensor<float>({4}, 0.0f), true});
        Optimizer<float> opt(OptimizerSpec::adam(0.01));
        Tape<float> tape;
        for (int step = 0; step < 5; ++step) {
            tape.reset();
            Tensor<float> x = random_tensor({2, 6}, rng).cast<float>();
            Tensor<float> y({2, 4}, std::vector<float>{1, 0, 0, 0, 0, 0, 1, 0});
            auto out = tape.softmax(tape.dense(tape.leaf(x), tape.param(params[0]),
                                               tape.param(params[1])));
            auto loss = tape.cross_entropy(out, y);
            opt.zero_grad(params);
            tape.backward(loss);
            opt.step(params);
        }
        return params[0].value.data();
    };
    CHECK(run() == run());
}
