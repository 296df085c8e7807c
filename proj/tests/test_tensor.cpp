#include <doctest.h>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "phil/tensor.hpp"

using namespace phil;
using namespace phil::testing;

TEST_SUITE("tensor") {
    TEST_CASE("shapes and storage") {
        Tensor t(2, 3, Real(1.5));
        CHECK(t.size() == 6);
        CHECK(t.shape() == std::vector<std::size_t>{2, 3});
        CHECK_THROWS_AS(Tensor(2, 2, std::vector<Real>{1, 2, 3}), std::invalid_argument);
        Tensor alias = t;
        alias.mutable_data()[0] = 4;
        CHECK(t.at(0, 0) == Real(4));
        Tensor copy = t.clone();
        copy.mutable_data()[0] = 7;
        CHECK(t.at(0, 0) == Real(4));
    }

    TEST_CASE("shape errors name both shapes") {
        Tensor a(2, 3), b(2, 3);
        try {
            matmul(a, b);
            FAIL("expected a shape error");
        } catch (const std::invalid_argument& e) {
            const std::string msg = e.what();
            CHECK(msg.find(a.shape_str()) != msg.rfind(b.shape_str()));
            CHECK(msg.find("matmul") != std::string::npos);
        }
        CHECK_THROWS_AS(add(a, Tensor(3, 2)), std::invalid_argument);
        CHECK_THROWS_AS(mse_loss(a, Tensor(3, 2)), std::invalid_argument);
    }

    TEST_CASE("forward values of the primitives") {
        Tensor a(2, 2, std::vector<Real>{1, 2, 3, 4});
        Tensor b(2, 2, std::vector<Real>{5, 6, 7, 8});
        Tensor prod = matmul(a, b);
        CHECK(std::vector<Real>(prod.data().begin(), prod.data().end()) == std::vector<Real>{19, 22, 43, 50});
        Tensor row(1, 2, std::vector<Real>{10, 20});
        Tensor s = add(a, row);
        CHECK(s.at(1, 1) == Real(24));
        CHECK(reduce_sum(a, Axis::Rows).at(0, 1) == Real(6));
        CHECK(reduce_mean(a, Axis::Cols).at(1, 0) == Real(3.5));
        CHECK(reduce_max(a, Axis::Rows).at(0, 0) == Real(3));
        CHECK(concat({a, b}, Axis::Cols).cols() == 4);
        CHECK(slice(b, Axis::Rows, 1, 2).at(0, 0) == Real(7));
        Tensor sm = softmax(Tensor(1, 3, std::vector<Real>{0, 0, 0}), Axis::Cols);
        for (Real v : sm.data()) CHECK(double(v) == doctest::Approx(1.0 / 3));
        CHECK(mse_loss(a, b).item() == Real(16));
    }

    TEST_CASE("segment reductions with ragged and empty segments") {
        Tensor rows(5, 2, std::vector<Real>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
        std::vector<std::size_t> offsets{0, 2, 2, 5};
        Tensor sum = segment_reduce(rows, offsets, SegmentReduce::Sum);
        CHECK(sum.rows() == 3);
        CHECK(sum.at(0, 0) == Real(4));
        CHECK(sum.at(1, 0) == Real(0));
        CHECK(sum.at(2, 1) == Real(24));
        CHECK(segment_reduce(rows, offsets, SegmentReduce::Mean).at(2, 0) == Real(7));
        CHECK(segment_reduce(rows, offsets, SegmentReduce::Max).at(2, 1) == Real(10));
        Tensor soft = segment_softmax(rows, offsets, Tensor::scalar(0));
        CHECK(double(soft.at(2, 0)) == doctest::Approx(7.0));
    }

    TEST_CASE("d(x*x)/dx at 3 is 6 and y=x+x accumulates to 2") {
        Tensor x = Tensor::parameter(1, 1, {3});
        Tape tape;
        Tensor y;
        {
            TapeScope scope(tape);
            y = mul(x, x);
        }
        tape.backward(y);
        CHECK(double(x.grad()[0]) == doctest::Approx(6.0));

        Tensor z = Tensor::parameter(1, 1, {1.25});
        Tape t2;
        Tensor w;
        {
            TapeScope scope(t2);
            w = add(z, z);
        }
        t2.backward(w);
        CHECK(double(z.grad()[0]) == doctest::Approx(2.0));
    }

    TEST_CASE("property: every primitive matches finite differences") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            for (const auto& [name, report] : primitive_gradient_cases(seed)) {
                INFO(name << " seed " << seed << ": " << report.first_failure);
                CHECK(report.checked > 0);
                CHECK(report.failed == 0);
            }
        }
    }

    TEST_CASE("mutable access is refused while a tape records") {
        Tensor x = Tensor::parameter(1, 2, {1, 2});
        Tape tape;
        TapeScope scope(tape);
        Tensor y = scale(x, 2);
        CHECK_THROWS_AS(x.mutable_data(), std::logic_error);
    }

    TEST_CASE("Adam: zero gradient leaves parameters unchanged") {
        std::vector<Real> p{1.0, -2.0};
        std::vector<Real> g{0.0, 0.0};
        AdamState st;
        adam_step(p, g, st, AdamConfig{});
        CHECK(p == std::vector<Real>{1.0, -2.0});
    }

    TEST_CASE("Adam: first step matches the bias-corrected formula") {
        // m1 = (1-b1) g, v1 = (1-b2) g^2, mhat = g, vhat = g^2, step = lr g / (|g| + eps).
        AdamConfig cfg;
        cfg.lr = 0.1;
        std::vector<Real> p{2.0};
        std::vector<Real> g{0.5};
        AdamState st;
        adam_step(p, g, st, cfg);
        CHECK(double(p[0]) == doctest::Approx(2.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-9));
        adam_step(p, g, st, cfg);
        const double m2 = 0.9 * 0.05 + 0.1 * 0.5, v2 = 0.999 * 0.00025 + 0.001 * 0.25;
        const double mh = m2 / (1 - 0.81), vh = v2 / (1 - 0.999 * 0.999);
        CHECK(double(p[0]) == doctest::Approx(1.9 - 0.1 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-9));
    }

    TEST_CASE("Adam is deterministic across repeated runs") {
        auto run = [] {
            std::mt19937_64 rng(3);
            Tensor w = random_tensor(rng, 3, 2);
            Adam opt({w}, AdamConfig{});
            for (int i = 0; i < 5; ++i) {
                Tape tape;
                Tensor loss;
                {
                    TapeScope scope(tape);
                    loss = mse_loss(w, Tensor(3, 2, Real(0.5)));
                }
                opt.zero_grad();
                tape.backward(loss);
                opt.step();
            }
            return std::vector<Real>(w.data().begin(), w.data().end());
        };
        CHECK(run() == run());
    }

    TEST_CASE("serialization round trip and shape mismatch") {
        std::mt19937_64 rng(1);
        NamedTensors a{{"w", random_tensor(rng, 2, 3)}, {"b", random_tensor(rng, 1, 3)}};
        auto j = tensors_to_json(a);
        NamedTensors b{{"w", Tensor(2, 3)}, {"b", Tensor(1, 3)}};
        tensors_from_json(j, b);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(std::vector<Real>(a[i].second.data().begin(), a[i].second.data().end()) ==
                  std::vector<Real>(b[i].second.data().begin(), b[i].second.data().end()));
        }
        NamedTensors wrong{{"w", Tensor(3, 2)}, {"b", Tensor(1, 3)}};
        CHECK_THROWS(tensors_from_json(j, wrong));
    }
}
