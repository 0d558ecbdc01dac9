#include "drgbab/witness.hpp"

namespace drgbab {

const char* to_string(WitnessKind k) {
    return k == WitnessKind::concrete_violation ? "concrete_violation" : "spurious";
}

Eigen::VectorXd construct_witness(const Eigen::VectorXd& w, const Box& box) {
    Eigen::VectorXd x(w.size());
    for (Eigen::Index k = 0; k < w.size(); ++k) x[k] = w[k] >= 0.0 ? box.lower[k] : box.upper[k];
    return x;
}

Eigen::VectorXd construct_witness(const BoundResult& bound, const Box& box) {
    return construct_witness(bound.w, box);
}

double evaluate_linear(const Eigen::VectorXd& w, double b, const Eigen::VectorXd& x) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < w.size(); ++k) acc += w[k] * x[k];
    return acc + b;
}

Witness validate_witness(const Network& net, const Eigen::MatrixXd& spec, Eigen::VectorXd x_star,
                         double abstract_margin) {
    Witness out;
    out.concrete_margin = margin(net, spec, x_star);
    out.x_star = std::move(x_star);
    out.abstract_margin = abstract_margin;
    out.kind = out.concrete_margin.minCoeff() <= 0.0 ? WitnessKind::concrete_violation : WitnessKind::spurious;
    return out;
}

}  // namespace drgbab
