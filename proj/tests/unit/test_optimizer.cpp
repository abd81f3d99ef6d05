#include <cmath>
#include <vector>

#include "doctest.h"
#include "growlab/trainer/optimizer.hpp"
#include "growlab/util/errors.hpp"

using namespace growlab;

namespace {

struct Single {
    Tensor p;
    std::vector<NamedParam> params;
    OptimizerState opt;

    Single(float value, bool decay, double wd) : p(Shape{1}, {value}) {
        params.push_back({"w", &p, decay});
        opt.weight_decay = wd;
        opt.moments["w"] = {Tensor({1}), Tensor({1})};
    }
};

}  // namespace

TEST_CASE("adamw zero gradient without decay leaves parameters") {
    Single s(0.75f, true, 0.0);
    std::vector<Tensor> g = {Tensor({1})};
    const float before = s.p[0];
    adamw_step(s.params, g, s.opt, 1e-2);
    CHECK(s.p[0] == before);
    CHECK(s.opt.step == 1);

    // Existing moments decay geometrically under zero gradient.
    s.opt.moments["w"].m[0] = 0.2f;
    s.opt.moments["w"].v[0] = 0.4f;
    adamw_step(s.params, g, s.opt, 0.0);
    CHECK(s.opt.moments["w"].m[0] == doctest::Approx(0.18).epsilon(1e-6));
    CHECK(s.opt.moments["w"].v[0] == doctest::Approx(0.38).epsilon(1e-6));
}

TEST_CASE("adamw single step matches hand calculation") {
    // From zero moments: m = 0.1 g, v = 0.05 g^2, m_hat = g, v_hat = g^2,
    // so p1 = p0 (1 - lr wd) - lr * g / (|g| + eps).
    Single s(1.0f, true, 0.01);
    std::vector<Tensor> g = {Tensor(Shape{1}, {0.5f})};
    adamw_step(s.params, g, s.opt, 0.1);
    const double expected = 1.0 * (1.0 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + 1e-8);
    CHECK(std::abs(s.p[0] - expected) < 1e-6);
    CHECK(std::abs(s.opt.moments["w"].m[0] - 0.05) < 1e-7);
    CHECK(std::abs(s.opt.moments["w"].v[0] - 0.0125) < 1e-7);
}

TEST_CASE("adamw pure weight decay") {
    Single s(2.0f, true, 0.5);
    std::vector<Tensor> g = {Tensor({1})};
    adamw_step(s.params, g, s.opt, 0.1);
    CHECK(s.p[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)).epsilon(1e-7));

    Single gain(2.0f, false, 0.5);
    adamw_step(gain.params, g, gain.opt, 0.1);
    CHECK(gain.p[0] == 2.0f);
}

TEST_CASE("adamw validates shapes") {
    Single s(1.0f, true, 0.0);
    std::vector<Tensor> g = {Tensor({2})};
    CHECK_THROWS_AS(adamw_step(s.params, g, s.opt, 0.1), ContractError);
    std::vector<Tensor> none;
    CHECK_THROWS_AS(adamw_step(s.params, none, s.opt, 0.1), ContractError);
}

TEST_CASE("gradient clipping") {
    std::vector<Tensor> small = {Tensor(Shape{2}, {0.3f, 0.4f})};
    CHECK(clip_gradients(small, 1.0) == doctest::Approx(0.5));
    CHECK(small[0][0] == 0.3f);

    std::vector<Tensor> big = {Tensor(Shape{1}, {1.2f}), Tensor(Shape{1}, {1.6f})};
    CHECK(clip_gradients(big, 1.0) == doctest::Approx(2.0));
    CHECK(big[0][0] == doctest::Approx(0.6));
    CHECK(big[1][0] == doctest::Approx(0.8));
    const double n = std::sqrt(double(big[0][0]) * big[0][0] + double(big[1][0]) * big[1][0]);
    CHECK(n == doctest::Approx(1.0).epsilon(1e-6));
    // Direction kept: 1.2/1.6 == 0.6/0.8.
    CHECK(big[0][0] / big[1][0] == doctest::Approx(0.75));

    std::vector<Tensor> bad = {Tensor(Shape{1}, {std::nanf("")})};
    CHECK_THROWS_AS(clip_gradients(bad, 1.0), NumericError);
}
