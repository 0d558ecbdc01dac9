#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>

using namespace drgbab;
using namespace testsupport;

namespace {

NeuronBounds root_bounds(const Network& net, const Box& box) { return compute_intermediate_bounds(net, box, {}); }

RelaxationParams uniform_alpha(const NeuronBounds& nb, double a) {
    RelaxationParams p;
    for (const auto& l : nb.lower) p.alpha.push_back(VectorXd::Constant(l.size(), a));
    return p;
}

double bound_at(const Network& net, const VectorXd& row, const NeuronBounds& nb, const RelaxationParams& p) {
    return compute_bounds(net, row, nb, p)->lower_bound;
}

}  // namespace

TEST_CASE("upper lines of the worked example") {
    const ReluRelaxation a = relu_relaxation(-2.0, 18.0, 0.0);
    CHECK(a.upper_slope == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(a.upper_intercept == doctest::Approx(1.8).epsilon(1e-15));
    const ReluRelaxation b = relu_relaxation(-4.0, 4.0, 0.3);
    CHECK(b.upper_slope == 0.5);
    CHECK(b.upper_intercept == 2.0);
    CHECK(b.lower_slope == 0.3);
    const ReluRelaxation c = relu_relaxation(-1.0, 1.0, 1.0);
    CHECK(c.upper_slope == 0.5);
    CHECK(c.upper_intercept == 0.5);
}

TEST_CASE("relaxation of a stable neuron is a contract violation") {
    CHECK_THROWS_AS(relu_relaxation(0.0, 1.0, 0.5), std::logic_error);
    CHECK_THROWS_AS(relu_relaxation(-1.0, 0.0, 0.5), std::logic_error);
    CHECK_THROWS_AS(relu_relaxation(1.0, 2.0, 0.5), std::logic_error);
}

TEST_CASE("stability tie rule") {
    CHECK(classify(0.0, 1.0) == Stability::active);
    CHECK(classify(-1.0, 0.0) == Stability::inactive);
    CHECK(classify(0.0, 0.0) == Stability::active);
    CHECK(classify(-1.0, 1.0) == Stability::unstable);
}

TEST_CASE("positive coefficient uses the alpha line") {
    const Network net = scalar_relu_net(1.0, 1.0, 0.0);
    const Box box{vec({-1.0}), vec({1.0})};
    const NeuronBounds nb = root_bounds(net, box);
    const auto r = compute_bounds(net, vec({1.0}), nb, uniform_alpha(nb, 0.5));
    REQUIRE(r);
    CHECK(r->w(0) == 0.5);
    CHECK(r->b == 0.0);
    CHECK(r->lower_bound == -0.5);
    CHECK(r->sensitivity[0] == r->w);
    CHECK(r->sensitivity[1](0) == 1.0);
}

TEST_CASE("negative coefficient uses the upper line and its intercept") {
    const Network net = scalar_relu_net(1.0, -1.0, 1.0);
    const Box box{vec({-1.0}), vec({1.0})};
    const NeuronBounds nb = root_bounds(net, box);
    const auto r = compute_bounds(net, vec({1.0}), nb, uniform_alpha(nb, 0.5));
    REQUIRE(r);
    CHECK(r->w(0) == -0.5);
    CHECK(r->b == 0.5);
    CHECK(r->lower_bound == 0.0);
    CHECK(r->sensitivity[1](0) == -1.0);
}

TEST_CASE("lower bound equals the left-to-right concretization of (w, b)") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        const VerificationTask t = random_soundness_instance(rng);
        const NeuronBounds nb = root_bounds(t.network, t.domain);
        const auto r = compute_bounds(t.network, t.spec.row(0).transpose(), nb, initial_alpha(t.network, nb));
        REQUIRE(r);
        double acc = 0.0;
        for (int k = 0; k < t.domain.dim(); ++k)
            acc += std::min(r->w(k) * t.domain.lower(k), r->w(k) * t.domain.upper(k));
        acc += r->b;
        CHECK(r->lower_bound == acc);
        CHECK(r->sensitivity[0] == r->w);
    }
}

TEST_CASE("Monte-Carlo soundness of the linear lower bound") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> widths{6 + trial % 5, 5 + trial % 4};  // three affine layers
        const VerificationTask t = random_instance(rng, 3, widths, 3, 0.3, 1.0);
        const NeuronBounds nb = root_bounds(t.network, t.domain);
        RelaxationParams p = initial_alpha(t.network, nb);
        for (auto& a : p.alpha)
            for (Eigen::Index j = 0; j < a.size(); ++j) a(j) = unit(rng);
        for (Eigen::Index r = 0; r < t.spec.rows(); ++r) {
            const auto res = compute_bounds(t.network, t.spec.row(r).transpose(), nb, p);
            REQUIRE(res);
            double worst = 1e300;
            for (int s = 0; s < 10000; ++s) {
                const VectorXd x = sample_box(rng, t.domain);
                const double m = naive_margin(t, to_std(x))[static_cast<std::size_t>(r)];
                const double lin = res->w.dot(x) + res->b;
                worst = std::min(worst, m - lin);
            }
            CHECK(worst >= -1e-9);
        }
    }
}

TEST_CASE("soundness holds inside split regions too") {
    std::mt19937_64 rng(77);
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const VerificationTask t = random_instance(rng, 2, std::vector<int>{6, 6}, 2, 0.5, 1.0);
        NeuronBounds nb = root_bounds(t.network, t.domain);
        std::vector<SplitConstraint> splits;
        for (int i = 1; i < nb.num_layers() && splits.size() < 2; ++i)
            for (Eigen::Index j = 0; j < nb.lower[i].size() && splits.size() < 2; ++j)
                if (nb.stability(i, static_cast<int>(j)) == Stability::unstable)
                    splits.push_back({i, static_cast<int>(j), splits.empty() ? +1 : -1});
        if (splits.empty()) continue;
        const NeuronBounds split_nb = compute_intermediate_bounds(t.network, t.domain, splits);
        const auto res = compute_bounds(t.network, t.spec.row(0).transpose(), split_nb, initial_alpha(t.network, split_nb));
        if (!res) continue;
        for (int s = 0; s < 10000; ++s) {
            const VectorXd x = sample_box(rng, t.domain);
            const ForwardResult fr = forward(t.network, x);
            bool inside = true;
            for (const auto& c : splits) {
                const double z = fr.preacts[static_cast<std::size_t>(c.layer - 1)](c.neuron);
                inside = inside && (c.sign > 0 ? z >= 0.0 : z <= 0.0);
            }
            if (!inside) continue;
            ++checked;
            CHECK(naive_margin(t, to_std(x))[0] >= res->w.dot(x) + res->b - 1e-9);
        }
    }
    CHECK(checked > 1000);
}

TEST_CASE("intermediate bounds of a linear image and its clamp") {
    const Network net = scalar_relu_net(2.0, 1.0, 0.0);
    const Box box{vec({-1.0}), vec({1.0})};
    const NeuronBounds nb = root_bounds(net, box);
    CHECK(nb.lower[1](0) == -2.0);
    CHECK(nb.upper[1](0) == 2.0);
    const std::vector<SplitConstraint> up{{1, 0, +1}};
    const NeuronBounds clamped = compute_intermediate_bounds(net, box, up);
    CHECK(clamped.lower[1](0) == 0.0);
    CHECK(clamped.upper[1](0) == 2.0);
    const std::vector<SplitConstraint> down{{1, 0, -1}};
    const NeuronBounds neg = compute_intermediate_bounds(net, box, down);
    CHECK(neg.lower[1](0) == -2.0);
    CHECK(neg.upper[1](0) == 0.0);
}

TEST_CASE("intermediate bounds contain sampled ranges, as do interval bounds") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 15; ++trial) {
        const VerificationTask t = random_soundness_instance(rng);
        const NeuronBounds nb = root_bounds(t.network, t.domain);
        std::vector<VectorXd> ilo, ihi;
        interval_bounds(t.network, t.domain, ilo, ihi);
        std::vector<VectorXd> smin, smax;
        for (int i = 1; i < nb.num_layers(); ++i) {
            smin.push_back(VectorXd::Constant(nb.lower[i].size(), 1e300));
            smax.push_back(VectorXd::Constant(nb.lower[i].size(), -1e300));
        }
        for (int s = 0; s < 10000; ++s) {
            const ForwardResult fr = forward(t.network, sample_box(rng, t.domain));
            for (int i = 1; i < nb.num_layers(); ++i) {
                smin[i - 1] = smin[i - 1].cwiseMin(fr.preacts[i - 1]);
                smax[i - 1] = smax[i - 1].cwiseMax(fr.preacts[i - 1]);
            }
        }
        for (int i = 1; i < nb.num_layers(); ++i) {
            CHECK((nb.lower[i].array() <= smin[i - 1].array() + 1e-9).all());
            CHECK((nb.upper[i].array() >= smax[i - 1].array() - 1e-9).all());
            CHECK((ilo[i].array() <= smin[i - 1].array() + 1e-9).all());
            CHECK((ihi[i].array() >= smax[i - 1].array() - 1e-9).all());
        }
    }
}

TEST_CASE("infeasible clamped bounds yield no bound") {
    const Network net = scalar_relu_net(1.0, 1.0, 0.0);
    const Box box{vec({0.5}), vec({1.0})};
    // z = x is in [0.5, 1]; forcing it negative empties the region.
    const std::vector<SplitConstraint> down{{1, 0, -1}};
    const NeuronBounds nb = compute_intermediate_bounds(net, box, down);
    CHECK_FALSE(nb.feasible());
    CHECK_FALSE(compute_bounds(net, vec({1.0}), nb, initial_alpha(net, nb)).has_value());
}

TEST_CASE("fully stable network is bounded exactly") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        VerificationTask t = random_instance(rng, 3, std::vector<int>{4}, 2, 0.2, 1.0);
        // Shift the hidden biases so every neuron is strictly active over the box.
        Layer first = t.network.layer(1);
        first.bias.array() += 100.0;
        Layer second = t.network.layer(2);
        Network net(3, {first, second});
        const NeuronBounds nb = root_bounds(net, t.domain);
        CHECK(nb.unstable_count(net) == 0);
        const VectorXd row = t.spec.row(0).transpose();
        const auto r = compute_bounds(net, row, nb, initial_alpha(net, nb));
        REQUIRE(r);
        // Affine on the box: minimum over the 8 corners.
        double best = 1e300;
        for (int mask = 0; mask < 8; ++mask) {
            VectorXd x(3);
            for (int k = 0; k < 3; ++k) x(k) = (mask >> k & 1) ? t.domain.upper(k) : t.domain.lower(k);
            const VerificationTask tt{net, t.domain, t.spec};
            best = std::min(best, naive_margin(tt, to_std(x))[0]);
        }
        CHECK(r->lower_bound == doctest::Approx(best).epsilon(1e-9).scale(1.0));
        CHECK(std::abs(r->lower_bound - best) <= 1e-9);
    }
}

TEST_CASE("triangle relaxation encloses ReLU on a grid") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> mag(1e-3, 10.0), unit(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const double l = -mag(rng), u = mag(rng), a = unit(rng);
        const ReluRelaxation r = relu_relaxation(l, u, a);
        for (int g = 0; g <= 200; ++g) {
            const double z = l + (u - l) * g / 200.0;
            const double relu = std::max(0.0, z);
            CHECK(r.lower_slope * z <= relu + 1e-12);
            CHECK(relu <= r.upper_slope * z + r.upper_intercept + 1e-12);
        }
    }
}

TEST_CASE("optimize_alpha on ReLU(x) finds slope zero") {
    const Network net = scalar_relu_net(1.0, 1.0, 0.0);
    const Box box{vec({-1.0}), vec({1.0})};
    const NeuronBounds nb = root_bounds(net, box);
    // Independent sweep: the bound is alpha * x minimized over [-1, 1], i.e. -alpha.
    double sweep_best = -1e300, sweep_arg = -1.0;
    for (int g = 0; g <= 100; ++g) {
        const double a = g / 100.0;
        const double val = -a;
        if (val > sweep_best) sweep_best = val, sweep_arg = a;
    }
    const AlphaOptimization opt = optimize_alpha(net, vec({1.0}), nb, 50, 0.1);
    CHECK(opt.params.alpha[1](0) == doctest::Approx(sweep_arg).epsilon(1e-12));
    CHECK(opt.lower_bound == doctest::Approx(sweep_best).epsilon(1e-12));
}

TEST_CASE("optimize_alpha on 2 ReLU(x) - x finds slope one half") {
    const Network net = relu_plus_linear(2.0, -1.0, 0.0);
    const Box box{vec({-1.0}), vec({1.0})};
    const NeuronBounds nb = root_bounds(net, box);
    REQUIRE(nb.stability(1, 1) == Stability::active);
    // Sweep through compute_bounds against the closed form -|2a - 1|.
    double sweep_best = -1e300, sweep_arg = 0.0;
    for (int g = 0; g <= 100; ++g) {
        RelaxationParams p = uniform_alpha(nb, g / 100.0);
        const double v = bound_at(net, vec({1.0}), nb, p);
        CHECK(v == doctest::Approx(-std::abs(2.0 * g / 100.0 - 1.0)).epsilon(1e-12).scale(1.0));
        if (v > sweep_best) sweep_best = v, sweep_arg = g / 100.0;
    }
    CHECK(sweep_arg == 0.5);
    const AlphaOptimization opt = optimize_alpha(net, vec({1.0}), nb, 100, 0.1);
    CHECK(opt.lower_bound >= sweep_best - 1e-6);
    CHECK(opt.params.alpha[1](0) == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("optimize_alpha with zero iterations returns the initialization") {
    std::mt19937_64 rng(4);
    const VerificationTask t = random_soundness_instance(rng);
    const NeuronBounds nb = root_bounds(t.network, t.domain);
    const RelaxationParams init = initial_alpha(t.network, nb);
    const VectorXd row = t.spec.row(0).transpose();
    const AlphaOptimization opt = optimize_alpha(t.network, row, nb, 0, 0.1);
    REQUIRE(opt.params.alpha.size() == init.alpha.size());
    for (std::size_t i = 0; i < init.alpha.size(); ++i) CHECK(opt.params.alpha[i] == init.alpha[i]);
    CHECK(opt.lower_bound == bound_at(t.network, row, nb, init));
}

TEST_CASE("adaptive initial alpha") {
    const Network net(1, {layer(mat({{1.0}, {3.0}, {3.0}}), vec({0.0, 1.0, -1.0}), Activation::relu),
                          layer(mat({{1.0, 1.0, 1.0}}), vec({0.0}), Activation::linear)});
    const Box box{vec({-1.0}), vec({1.0})};
    const NeuronBounds nb = root_bounds(net, box);
    const RelaxationParams p = initial_alpha(net, nb);
    CHECK(p.alpha[1](0) == 1.0);  // [-1, 1]: u >= |l|
    CHECK(p.alpha[1](1) == 1.0);  // [-2, 4]
    CHECK(p.alpha[1](2) == 0.0);  // [-4, 2]
    CHECK(nb.lower[1](2) == -4.0);
}

TEST_CASE("analytic alpha gradient matches central differences") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> interior(0.05, 0.95);
    const double h = 1e-5;
    int compared = 0;
    for (int trial = 0; trial < 30; ++trial) {
        const VerificationTask t = random_instance(rng, 3, std::vector<int>{6, 5}, 3, 0.4, 1.0);
        const NeuronBounds nb = root_bounds(t.network, t.domain);
        RelaxationParams p = initial_alpha(t.network, nb);
        for (auto& a : p.alpha)
            for (Eigen::Index j = 0; j < a.size(); ++j) a(j) = interior(rng);
        const VectorXd row = t.spec.row(0).transpose();
        const auto res = compute_bounds(t.network, row, nb, p);
        REQUIRE(res);
        const auto grad = alpha_gradient(t.network, *res);
        for (int i = 1; i < nb.num_layers(); ++i) {
            for (Eigen::Index j = 0; j < nb.lower[i].size(); ++j) {
                if (nb.stability(i, static_cast<int>(j)) != Stability::unstable) {
                    CHECK(grad[i](j) == 0.0);
                    continue;
                }
                RelaxationParams plus = p, minus = p;
                plus.alpha[i](j) += h;
                minus.alpha[i](j) -= h;
                const double fd = (bound_at(t.network, row, nb, plus) - bound_at(t.network, row, nb, minus)) / (2 * h);
                const double a = grad[i](j);
                const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1.0});
                CHECK(rel <= 1e-4);
                ++compared;
            }
        }
    }
    CHECK(compared > 50);
}

TEST_CASE("optimize_alpha never ends below its starting bound") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const VerificationTask t = random_soundness_instance(rng);
        const NeuronBounds nb = root_bounds(t.network, t.domain);
        for (Eigen::Index r = 0; r < t.spec.rows(); ++r) {
            const VectorXd row = t.spec.row(r).transpose();
            const double start = bound_at(t.network, row, nb, initial_alpha(t.network, nb));
            const AlphaOptimization opt = optimize_alpha(t.network, row, nb, 20, 0.1);
            CHECK(opt.lower_bound >= start);
            CHECK(opt.lower_bound == bound_at(t.network, row, nb, opt.params));
            for (const auto& a : opt.params.alpha) CHECK(((a.array() >= 0.0) && (a.array() <= 1.0)).all());
        }
    }
}

TEST_CASE("refining later layers only tightens") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const VerificationTask t = random_instance(rng, 2, std::vector<int>{6, 6, 6}, 2, 0.4, 1.0);
        NeuronBounds nb = root_bounds(t.network, t.domain);
        std::vector<SplitConstraint> splits;
        for (Eigen::Index j = 0; j < nb.lower[1].size(); ++j)
            if (nb.stability(1, static_cast<int>(j)) == Stability::unstable) {
                splits.push_back({1, static_cast<int>(j), +1});
                break;
            }
        if (splits.empty()) continue;
        NeuronBounds clamped = nb;
        clamp_splits(clamped, splits);
        const NeuronBounds refined = refine_intermediate_bounds(t.network, clamped, splits, 2);
        if (!refined.feasible()) continue;
        for (int i = 1; i < nb.num_layers(); ++i) {
            CHECK((refined.lower[i].array() >= clamped.lower[i].array()).all());
            CHECK((refined.upper[i].array() <= clamped.upper[i].array()).all());
        }
    }
}
