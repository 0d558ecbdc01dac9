#pragma once

#include "drgbab/relax.hpp"

#include <limits>

namespace drgbab {

enum class WitnessKind { concrete_violation, spurious };

const char* to_string(WitnessKind k);

struct Witness {
    Eigen::VectorXd x_star;
    double abstract_margin = std::numeric_limits<double>::quiet_NaN();
    Eigen::VectorXd concrete_margin;
    WitnessKind kind = WitnessKind::spurious;
};

/// Minimizer of w.x over the box: lower corner where w_k >= 0, upper corner otherwise.
Eigen::VectorXd construct_witness(const Eigen::VectorXd& w, const Box& box);
Eigen::VectorXd construct_witness(const BoundResult& bound, const Box& box);

/// w.x + b accumulated left to right, the same order concretize_lower uses.
double evaluate_linear(const Eigen::VectorXd& w, double b, const Eigen::VectorXd& x);

/// Evaluates the concrete margin at x_star and classifies it.
Witness validate_witness(const Network& net, const Eigen::MatrixXd& spec, Eigen::VectorXd x_star,
                         double abstract_margin = std::numeric_limits<double>::quiet_NaN());

}  // namespace drgbab
