#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace drgbab {

/// Raised for malformed or inconsistent inputs (files, dimensions, values).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Activation { relu, linear };

const char* to_string(Activation a);

struct Layer {
    Eigen::MatrixXd weights;  // n_i x n_{i-1}
    Eigen::VectorXd bias;     // n_i
    Activation activation = Activation::relu;
};

// Exact (bitwise value) equality; dimension mismatches compare unequal.
bool operator==(const Layer& a, const Layer& b);

/// Dense feedforward network. Layer k of `layers()` (0-based) is layer k+1
/// in the usual 1-based numbering where layer 0 is the input.
class Network {
public:
    Network(int input_dim, std::vector<Layer> layers);

    int input_dim() const { return input_dim_; }
    int output_dim() const { return static_cast<int>(layers_.back().bias.size()); }
    /// Number of affine layers L.
    int num_layers() const { return static_cast<int>(layers_.size()); }
    /// 1-based access, 1 <= i <= L.
    const Layer& layer(int i) const { return layers_.at(static_cast<std::size_t>(i - 1)); }
    const std::vector<Layer>& layers() const { return layers_; }
    /// Width of layer i; width(0) is the input dimension.
    int width(int i) const;

    friend bool operator==(const Network& a, const Network& b);

private:
    int input_dim_;
    std::vector<Layer> layers_;
};

struct Box {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    int dim() const { return static_cast<int>(lower.size()); }
    Eigen::VectorXd center() const { return 0.5 * (lower + upper); }
    bool contains(const Eigen::VectorXd& x) const;
};

bool operator==(const Box& a, const Box& b);

struct VerificationTask {
    Network network;
    Box domain;
    Eigen::MatrixXd spec;  // n_spec x n_L; property holds iff spec * f(x) > 0
    double timeout_seconds = 60.0;
    long max_branches = 100000;
};

bool operator==(const VerificationTask& a, const VerificationTask& b);

struct ForwardResult {
    Eigen::VectorXd logits;
    /// Pre-activation z^(i) for i = 1..L, stored at index i-1.
    std::vector<Eigen::VectorXd> preacts;
};

ForwardResult forward(const Network& net, const Eigen::VectorXd& x);

/// C * f(x).
Eigen::VectorXd margin(const Network& net, const Eigen::MatrixXd& spec, const Eigen::VectorXd& x);

/// Checks the task invariants; throws InputError.
void validate_task(const VerificationTask& task);

// JSON I/O. The `origin` string prefixes error messages (usually the file path).
Network network_from_json_text(const std::string& text, const std::string& origin = "<model>");
std::string network_to_json_text(const Network& net);

VerificationTask task_from_json_text(const std::string& model_text, const std::string& spec_text,
                                     const std::string& model_origin = "<model>",
                                     const std::string& spec_origin = "<spec>");
std::string spec_to_json_text(const VerificationTask& task);

VerificationTask load_task(const std::string& model_path, const std::string& spec_path);
void save_task(const VerificationTask& task, const std::string& model_path, const std::string& spec_path);

}  // namespace drgbab
