#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "grad_check.hpp"
#include "infmem/autodiff.hpp"
#include "infmem/errors.hpp"
#include "infmem/linalg.hpp"

namespace infmem {
namespace {

using testing::check_gradients;
using testing::random_tensor;

TEST(Matmul, IdentityAndHandComputed) {
    const Var i = Var::constant(Tensor::identity(2));
    const Var b = Var::constant(Tensor::from_rows({{3, 4}, {5, 6}}));
    EXPECT_EQ(ad::matmul(i, b).value(), b.value());

    const Var row = Var::constant(Tensor::from_rows({{1, 2}}));
    const Var col = Var::constant(Tensor::from_rows({{3}, {4}}));
    EXPECT_DOUBLE_EQ(ad::matmul(row, col).value()(0, 0), 11.0);
}

TEST(Matmul, DimensionMismatchIsTyped) {
    const Var a = Var::constant(Tensor::matrix(2, 3));
    const Var b = Var::constant(Tensor::matrix(2, 3));
    EXPECT_THROW(ad::matmul(a, b), ShapeError);
}

TEST(Matmul, BackwardMatchesFiniteDifferences) {
    std::mt19937_64 rng(11);
    Var a = Var::leaf(random_tensor({5, 4}, rng));
    Var b = Var::leaf(random_tensor({4, 3}, rng));
    const Var weights = Var::constant(random_tensor({5, 3}, rng));
    auto loss = [&] { return ad::sum(ad::mul(ad::matmul(a, b), weights)); };
    const auto res = check_gradients(loss, {{"a", a}, {"b", b}}, 1e-5, 1e-6, 0.0);
    EXPECT_TRUE(res.ok) << res.report;
    EXPECT_LT(res.worst_rel, 1e-6);
}

TEST(Matmul, Deterministic) {
    std::mt19937_64 rng(3);
    const Tensor a = random_tensor({17, 9}, rng);
    const Tensor b = random_tensor({9, 13}, rng);
    EXPECT_EQ(kernels::matmul(a, b), kernels::matmul(a, b));
}

TEST(SolveSpd, IdentityAndScalar) {
    std::mt19937_64 rng(5);
    const Tensor y = random_tensor({4, 3}, rng);
    EXPECT_LT(kernels::max_abs_diff(solve_spd(Tensor::identity(4), y), y), 1e-15);

    Tensor two = Tensor::identity(3);
    two *= 2.0;
    Tensor half = Tensor::identity(3);
    half *= 0.5;
    EXPECT_LT(kernels::max_abs_diff(solve_spd(two, Tensor::identity(3)), half), 1e-15);
}

TEST(SolveSpd, RandomResidualProperty) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial) * 7;
        const Tensor m = random_tensor({n, n}, rng);
        Tensor a = kernels::matmul_tn(m, m);
        for (std::size_t i = 0; i < n; ++i) {
            a(i, i) += 1.0;
        }
        const Tensor y = random_tensor({n, 5}, rng);
        const Tensor x = solve_spd(a, y);
        Tensor r = kernels::matmul(a, x);
        for (std::size_t i = 0; i < r.size(); ++i) {
            r[i] -= y[i];
        }
        EXPECT_LT(kernels::frobenius_norm(r) / kernels::frobenius_norm(y), 1e-10) << "n=" << n;
        EXPECT_EQ(solve_spd(a, y), x);
    }
}

TEST(SolveSpd, NonPositiveDefiniteNamesPivot) {
    const Tensor a = Tensor::from_rows({{4, 0, 0}, {0, 1, 2}, {0, 2, 1}});
    try {
        solve_spd(a, Tensor::identity(3));
        FAIL() << "expected NotPositiveDefinite";
    } catch (const NotPositiveDefinite& e) {
        EXPECT_EQ(e.pivot(), 2u);
        EXPECT_NE(std::string(e.what()).find("pivot 2"), std::string::npos);
    }
}

TEST(Elementwise, ClosedFormPoints) {
    const Var zero = Var::constant(Tensor::scalar(0.0));
    EXPECT_DOUBLE_EQ(ad::sigmoid(zero).value().item(), 0.5);
    EXPECT_NEAR(ad::softplus(zero).value().item(), std::log(2.0), 1e-15);
    EXPECT_DOUBLE_EQ(ad::erf(zero).value().item(), 0.0);
    const Var inf = Var::constant(Tensor::scalar(std::numeric_limits<double>::infinity()));
    EXPECT_DOUBLE_EQ(ad::erf(inf).value().item(), 1.0);
    EXPECT_THROW(ad::elementwise("cosh", zero), InvalidArgument);
    EXPECT_EQ(parse_unary_op("softplus"), UnaryOp::softplus);
}

// Maclaurin series in long double; converges fast enough for |x| <= 3.
double erf_series(double x) {
    long double term = x;
    long double sum = x;
    const long double x2 = static_cast<long double>(x) * x;
    for (int n = 1; n < 200; ++n) {
        term *= -x2 / n;
        sum += term / (2 * n + 1);
    }
    return static_cast<double>(sum * 2.0L / std::sqrt(3.14159265358979323846264338327950288L));
}

TEST(Elementwise, ErfAccuracy) {
    for (double x = -3.0; x <= 3.0; x += 0.0625) {
        EXPECT_NEAR(apply_unary(UnaryOp::erf, x), erf_series(x), 1e-12) << x;
    }
}

TEST(Elementwise, EveryOpMatchesFiniteDifferences) {
    std::mt19937_64 rng(23);
    for (auto op : {UnaryOp::sigmoid, UnaryOp::softplus, UnaryOp::exp, UnaryOp::log, UnaryOp::erf, UnaryOp::tanh,
                    UnaryOp::gelu, UnaryOp::square, UnaryOp::neg}) {
        const double lo = op == UnaryOp::log ? 0.2 : -2.0;
        Var x = Var::leaf(random_tensor({3, 4}, rng, lo, 2.0));
        const Var w = Var::constant(random_tensor({3, 4}, rng));
        auto loss = [&] { return ad::sum(ad::mul(ad::unary(op, x), w)); };
        const auto res = check_gradients(loss, {{"x", x}});
        EXPECT_TRUE(res.ok) << unary_op_name(op) << "\n" << res.report;
    }
}

TEST(Backward, LinearAndQuadratic) {
    Var x = Var::leaf(Tensor({3}, std::vector<double>{1, 2, 3}));
    backward(ad::sum(x));
    EXPECT_EQ(x.grad(), Tensor({3}, std::vector<double>{1, 1, 1}));
    x.zero_grad();
    backward(ad::sum(ad::square(x)));
    EXPECT_EQ(x.grad(), Tensor({3}, std::vector<double>{2, 4, 6}));
}

TEST(Backward, AccumulatesWithoutReset) {
    Var x = Var::leaf(Tensor({2}, std::vector<double>{1, -1}));
    const Var loss = ad::sum(ad::scale(x, 3.0));
    backward(loss);
    backward(loss);
    EXPECT_EQ(x.grad(), Tensor({2}, std::vector<double>{6, 6}));
}

TEST(Backward, NonScalarIsTyped) {
    Var x = Var::leaf(Tensor::matrix(2, 2, 1.0));
    EXPECT_THROW(backward(ad::scale(x, 2.0)), ShapeError);
}

TEST(Backward, StopGradientBlocksExactly) {
    std::mt19937_64 rng(2);
    Var x = Var::leaf(random_tensor({4, 4}, rng));
    Var w = Var::leaf(random_tensor({4, 4}, rng));
    const Var inner = ad::sigmoid(ad::matmul(x, x));
    const Var y = ad::add(ad::matmul(ad::stop_gradient(inner), w), ad::scale(w, 0.5));
    backward(ad::sum(ad::square(y)));
    EXPECT_EQ(x.grad().size(), 0u);  // never reached
    EXPECT_GT(kernels::frobenius_norm(w.grad()), 0.0);
}

TEST(Backward, NoGradGuardBuildsNoGraph) {
    Var x = Var::leaf(Tensor::matrix(2, 2, 1.0));
    NoGradGuard guard;
    const Var y = ad::sum(ad::square(x));
    EXPECT_FALSE(y.requires_grad());
}

TEST(Ops, StructuralOpsMatchFiniteDifferences) {
    std::mt19937_64 rng(31);
    for (int seed = 0; seed < 5; ++seed) {
        Var a = Var::leaf(random_tensor({5, 6}, rng));
        Var b = Var::leaf(random_tensor({3, 6}, rng));
        Var row = Var::leaf(random_tensor({1, 6}, rng));
        Var gain = Var::leaf(random_tensor({6}, rng, 0.5, 1.5));
        Var bias = Var::leaf(random_tensor({6}, rng));
        Var table = Var::leaf(random_tensor({4, 6}, rng));
        const Var w = Var::constant(random_tensor({8, 6}, rng));
        Tensor mask = Tensor::matrix(8, 6);
        mask(0, 5) = -std::numeric_limits<double>::infinity();
        const std::vector<int> idx{3, 0, 3};
        const std::vector<int> targets{1, -1, 4, 0, 5, 2, -1, 3};
        auto loss = [&] {
            const Var parts[] = {ad::add_row(ad::mul_row(a, row), row), ad::gather_rows(table, idx)};
            const Var stacked = ad::concat_rows(parts);  // 8×6
            const Var shifted = ad::shift_rows(ad::layer_norm(stacked, gain, bias), 1);
            const Var halves[] = {ad::slice_cols(shifted, 0, 3), ad::slice_cols(ad::shift_rows(stacked, -2), 3, 3)};
            const Var rejoined = ad::concat_cols(halves);
            const Var sm = ad::softmax_rows(ad::mul(rejoined, w), &mask);
            const Var ce = ad::cross_entropy_sum(ad::add(rejoined, ad::slice_rows(ad::concat_rows(parts), 0, 8)), targets);
            return ad::add(ad::sum(ad::mul(sm, w)), ad::add(ce, ad::mean(ad::sub(b, ad::slice_rows(stacked, 2, 3)))));
        };
        const auto res =
            check_gradients(loss, {{"a", a}, {"b", b}, {"row", row}, {"gain", gain}, {"bias", bias}, {"table", table}});
        EXPECT_TRUE(res.ok) << res.report;
    }
}

TEST(Ops, SoftmaxRowsSumToOne) {
    std::mt19937_64 rng(8);
    const Var x = Var::constant(random_tensor({6, 9}, rng, -20, 20));
    const Tensor p = ad::softmax_rows(x).value();
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double s = 0.0;
        for (double v : p.row(i)) {
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Ops, GatherRejectsOutOfRange) {
    const Var t = Var::constant(Tensor::matrix(3, 2));
    const std::vector<int> idx{3};
    EXPECT_THROW(ad::gather_rows(t, idx), InvalidArgument);
}

}  // namespace
}  // namespace infmem
