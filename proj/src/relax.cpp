#include "drgbab/relax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace drgbab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Index = Eigen::Index;

struct LinearBounds {
    Eigen::MatrixXd w;  // objectives x n_0
    Eigen::VectorXd b;
};

// Back-substitutes objectives `lambda` (rows, over z^(target)) down to the
// input. When `capture` is set, row 0's sensitivities and chosen lines are
// recorded into it.
LinearBounds backward(const Network& net, int target, Eigen::MatrixXd lambda, const NeuronBounds& bounds,
                      const RelaxationParams& params, BoundResult* capture) {
    const Eigen::Index rows = lambda.rows();
    Eigen::VectorXd offset = Eigen::VectorXd::Zero(rows);
    if (capture) {
        capture->sensitivity.assign(static_cast<std::size_t>(target), Eigen::VectorXd());
        capture->line_slope.assign(static_cast<std::size_t>(target), Eigen::VectorXd());
        capture->line_intercept.assign(static_cast<std::size_t>(target), Eigen::VectorXd());
    }
    for (int i = target; i >= 1; --i) {
        const Layer& ly = net.layer(i);
        offset += lambda * ly.bias;
        Eigen::MatrixXd mu = lambda * ly.weights;
        const int below = i - 1;
        if (below == 0) {
            lambda = std::move(mu);
            break;
        }
        const Index width = mu.cols();
        Eigen::VectorXd slope = Eigen::VectorXd::Ones(width);
        Eigen::VectorXd intercept = Eigen::VectorXd::Zero(width);
        if (capture) capture->sensitivity[static_cast<std::size_t>(below)] = mu.row(0).transpose();

        if (net.layer(below).activation == Activation::linear) {
            lambda = std::move(mu);
        } else {
            lambda.resize(rows, width);
            for (Index j = 0; j < width; ++j) {
                const double l = bounds.lower[below][j];
                const double u = bounds.upper[below][j];
                switch (classify(l, u)) {
                case Stability::active:
                    lambda.col(j) = mu.col(j);
                    break;
                case Stability::inactive:
                    lambda.col(j).setZero();
                    slope[j] = 0.0;
                    break;
                case Stability::unstable: {
                    const ReluRelaxation rl = relu_relaxation(l, u, params.alpha[below][j]);
                    for (Index r = 0; r < rows; ++r) {
                        const double m = mu(r, j);
                        if (m >= 0.0) {
                            lambda(r, j) = rl.lower_slope * m;
                        } else {
                            lambda(r, j) = rl.upper_slope * m;
                            offset[r] += rl.upper_intercept * m;
                        }
                    }
                    if (mu(0, j) >= 0.0) {
                        slope[j] = rl.lower_slope;
                    } else {
                        slope[j] = rl.upper_slope;
                        intercept[j] = rl.upper_intercept;
                    }
                    break;
                }
                }
            }
        }
        if (capture) {
            capture->line_slope[static_cast<std::size_t>(below)] = std::move(slope);
            capture->line_intercept[static_cast<std::size_t>(below)] = std::move(intercept);
        }
    }
    return {std::move(lambda), std::move(offset)};
}

void mark_infeasible_from(NeuronBounds& bounds, int layer) {
    for (int i = layer; i < bounds.num_layers(); ++i) {
        bounds.lower[i].setConstant(kInf);
        bounds.upper[i].setConstant(-kInf);
    }
}

bool layer_feasible(const NeuronBounds& bounds, int i) {
    return (bounds.lower[i].array() <= bounds.upper[i].array()).all();
}

}  // namespace

Stability classify(double l, double u) {
    if (l >= 0.0) return Stability::active;
    if (u <= 0.0) return Stability::inactive;
    return Stability::unstable;
}

bool NeuronBounds::feasible() const {
    for (int i = 0; i < num_layers(); ++i)
        if (!layer_feasible(*this, i)) return false;
    return true;
}

int NeuronBounds::unstable_count(const Network& net) const {
    int count = 0;
    for (int i = 1; i < num_layers(); ++i) {
        if (net.layer(i).activation != Activation::relu) continue;
        for (Index j = 0; j < lower[i].size(); ++j)
            if (classify(lower[i][j], upper[i][j]) == Stability::unstable) ++count;
    }
    return count;
}

ReluRelaxation relu_relaxation(double l, double u, double alpha) {
    if (!(l < 0.0 && 0.0 < u)) throw std::logic_error("relu_relaxation: neuron is not unstable");
    const double slope = u / (u - l);
    return {slope, -slope * l, alpha};
}

double concretize_lower(const Eigen::VectorXd& w, double b, const Box& box) {
    double acc = 0.0;
    for (Index k = 0; k < w.size(); ++k) acc += std::min(w[k] * box.lower[k], w[k] * box.upper[k]);
    return acc + b;
}

RelaxationParams initial_alpha(const Network&, const NeuronBounds& bounds) {
    RelaxationParams p;
    p.alpha.resize(bounds.lower.size());
    for (int i = 1; i < bounds.num_layers(); ++i) {
        const Index n = bounds.lower[i].size();
        p.alpha[i].resize(n);
        for (Index j = 0; j < n; ++j) p.alpha[i][j] = bounds.upper[i][j] >= std::abs(bounds.lower[i][j]) ? 1.0 : 0.0;
    }
    return p;
}

std::optional<BoundResult> compute_bounds(const Network& net, const Eigen::VectorXd& spec_row,
                                          const NeuronBounds& bounds, const RelaxationParams& params) {
    if (!bounds.feasible()) return std::nullopt;
    if (spec_row.size() != net.output_dim()) throw InputError("compute_bounds: spec row has wrong length");
    BoundResult result;
    Eigen::MatrixXd objective = spec_row.transpose();
    LinearBounds lb = backward(net, net.num_layers(), std::move(objective), bounds, params, &result);
    result.w = lb.w.row(0).transpose();
    result.b = lb.b[0];
    result.sensitivity[0] = result.w;
    result.lower_bound = concretize_lower(result.w, result.b, bounds.box());
    result.neuron_bounds = bounds;
    return result;
}

void clamp_splits(NeuronBounds& bounds, std::span<const SplitConstraint> splits) {
    for (const SplitConstraint& s : splits) {
        if (s.sign > 0)
            bounds.lower[s.layer][s.neuron] = std::max(bounds.lower[s.layer][s.neuron], 0.0);
        else
            bounds.upper[s.layer][s.neuron] = std::min(bounds.upper[s.layer][s.neuron], 0.0);
    }
}

NeuronBounds refine_intermediate_bounds(const Network& net, const NeuronBounds& start,
                                        std::span<const SplitConstraint> splits, int from_layer,
                                        const RelaxationParams* params) {
    NeuronBounds out = start;
    const int hidden_end = net.num_layers();  // layers 1..L-1
    for (int i = 0; i < std::min(from_layer, hidden_end); ++i) {
        if (!layer_feasible(out, i)) {
            mark_infeasible_from(out, i);
            return out;
        }
    }
    RelaxationParams adaptive;
    for (int i = std::max(from_layer, 1); i < hidden_end; ++i) {
        if (!params) adaptive = initial_alpha(net, out);
        const RelaxationParams& alpha = params ? *params : adaptive;
        const Index n = net.width(i);
        Eigen::MatrixXd objectives(2 * n, n);
        objectives.topRows(n).setIdentity();
        objectives.bottomRows(n) = -Eigen::MatrixXd::Identity(n, n);
        LinearBounds lb = backward(net, i, std::move(objectives), out, alpha, nullptr);
        const Box box = out.box();
        for (Index j = 0; j < n; ++j) {
            const double lo = concretize_lower(lb.w.row(j).transpose(), lb.b[j], box);
            const double hi = -concretize_lower(lb.w.row(n + j).transpose(), lb.b[n + j], box);
            out.lower[i][j] = std::max(lo, start.lower[i][j]);
            out.upper[i][j] = std::min(hi, start.upper[i][j]);
        }
        for (const SplitConstraint& s : splits) {
            if (s.layer != i) continue;
            if (s.sign > 0)
                out.lower[i][s.neuron] = std::max(out.lower[i][s.neuron], 0.0);
            else
                out.upper[i][s.neuron] = std::min(out.upper[i][s.neuron], 0.0);
        }
        if (!layer_feasible(out, i)) {
            mark_infeasible_from(out, i);
            return out;
        }
    }
    return out;
}

NeuronBounds compute_intermediate_bounds(const Network& net, const Box& box, std::span<const SplitConstraint> splits,
                                         const RelaxationParams* params) {
    NeuronBounds start;
    start.lower.push_back(box.lower);
    start.upper.push_back(box.upper);
    for (int i = 1; i < net.num_layers(); ++i) {
        start.lower.push_back(Eigen::VectorXd::Constant(net.width(i), -kInf));
        start.upper.push_back(Eigen::VectorXd::Constant(net.width(i), kInf));
    }
    return refine_intermediate_bounds(net, start, splits, 1, params);
}

std::vector<Eigen::VectorXd> alpha_gradient(const Network& net, const BoundResult& result) {
    const Box box = result.neuron_bounds.box();
    Eigen::VectorXd h(result.w.size());
    for (Index k = 0; k < h.size(); ++k) h[k] = result.w[k] >= 0.0 ? box.lower[k] : box.upper[k];

    std::vector<Eigen::VectorXd> grad(result.neuron_bounds.lower.size());
    for (int i = 1; i < net.num_layers(); ++i) {
        const Layer& ly = net.layer(i);
        Eigen::VectorXd z = ly.weights * h + ly.bias;
        grad[i] = Eigen::VectorXd::Zero(z.size());
        if (ly.activation == Activation::linear) {
            h = std::move(z);
            continue;
        }
        for (Index j = 0; j < z.size(); ++j) {
            const bool uses_lower_line = result.neuron_bounds.stability(i, static_cast<int>(j)) == Stability::unstable &&
                                         result.sensitivity[i][j] >= 0.0;
            if (uses_lower_line) grad[i][j] = result.sensitivity[i][j] * z[j];
        }
        h = result.line_slope[i].cwiseProduct(z) + result.line_intercept[i];
    }
    return grad;
}

AlphaOptimization optimize_alpha(const Network& net, const Eigen::VectorXd& spec_row, const NeuronBounds& bounds,
                                 int iters, double step, const RelaxationParams* init) {
    RelaxationParams current = init ? *init : initial_alpha(net, bounds);
    std::optional<BoundResult> res = compute_bounds(net, spec_row, bounds, current);
    if (!res) return {std::move(current), kInf};

    AlphaOptimization best{current, res->lower_bound};
    for (int t = 0; t < iters; ++t) {
        const std::vector<Eigen::VectorXd> grad = alpha_gradient(net, *res);
        double scale = 0.0;
        for (std::size_t i = 1; i < grad.size(); ++i)
            if (grad[i].size() > 0) scale = std::max(scale, grad[i].cwiseAbs().maxCoeff());
        if (scale == 0.0) break;
        for (std::size_t i = 1; i < grad.size(); ++i)
            current.alpha[i] = (current.alpha[i] + (step / scale) * grad[i]).cwiseMax(0.0).cwiseMin(1.0);
        res = compute_bounds(net, spec_row, bounds, current);
        if (res->lower_bound > best.lower_bound) best = {current, res->lower_bound};
    }
    return best;
}

}  // namespace drgbab
