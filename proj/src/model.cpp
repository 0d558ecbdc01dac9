#include "drgbab/model.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace drgbab {

using json = nlohmann::json;

namespace {

template <typename Derived>
bool same_values(const Eigen::DenseBase<Derived>& a, const Eigen::DenseBase<Derived>& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.derived().array() == b.derived().array()).all();
}

std::string where(const std::string& origin, const std::string& path) {
    return origin + ": " + path + ": ";
}

double read_number(const json& j, const std::string& origin, const std::string& path) {
    if (!j.is_number()) throw InputError(where(origin, path) + "expected a number");
    double v = j.get<double>();
    if (!std::isfinite(v)) throw InputError(where(origin, path) + "non-finite value");
    return v;
}

Eigen::VectorXd read_vector(const json& j, const std::string& origin, const std::string& path) {
    if (!j.is_array()) throw InputError(where(origin, path) + "expected an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k)
        v[static_cast<Eigen::Index>(k)] = read_number(j[k], origin, path + "[" + std::to_string(k) + "]");
    return v;
}

Eigen::MatrixXd read_matrix(const json& j, const std::string& origin, const std::string& path) {
    if (!j.is_array() || j.empty()) throw InputError(where(origin, path) + "expected a non-empty array of rows");
    const std::size_t rows = j.size();
    std::size_t cols = 0;
    Eigen::MatrixXd m;
    for (std::size_t r = 0; r < rows; ++r) {
        const std::string row_path = path + "[" + std::to_string(r) + "]";
        Eigen::VectorXd row = read_vector(j[r], origin, row_path);
        if (r == 0) {
            cols = static_cast<std::size_t>(row.size());
            if (cols == 0) throw InputError(where(origin, row_path) + "empty row");
            m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        } else if (static_cast<std::size_t>(row.size()) != cols) {
            throw InputError(where(origin, row_path) + "row has " + std::to_string(row.size()) +
                             " entries, expected " + std::to_string(cols));
        }
        m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return m;
}

const json& require(const json& obj, const char* key, const std::string& origin, const std::string& path) {
    if (!obj.is_object()) throw InputError(where(origin, path.empty() ? "$" : path) + "expected an object");
    auto it = obj.find(key);
    if (it == obj.end())
        throw InputError(where(origin, path.empty() ? std::string(key) : path + "." + key) + "missing field");
    return *it;
}

json parse(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(origin + ": parse error: " + e.what());
    }
}

json vector_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
    return a;
}

json matrix_json(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vector_json(m.row(r).transpose()));
    return a;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError(path + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError(path + ": cannot write file");
    out << text;
}

}  // namespace

const char* to_string(Activation a) {
    return a == Activation::relu ? "relu" : "linear";
}

bool operator==(const Layer& a, const Layer& b) {
    return a.activation == b.activation && same_values(a.weights, b.weights) && same_values(a.bias, b.bias);
}

bool operator==(const Network& a, const Network& b) {
    return a.input_dim_ == b.input_dim_ && a.layers_ == b.layers_;
}

bool operator==(const Box& a, const Box& b) {
    return same_values(a.lower, b.lower) && same_values(a.upper, b.upper);
}

bool operator==(const VerificationTask& a, const VerificationTask& b) {
    return a.network == b.network && a.domain == b.domain && same_values(a.spec, b.spec) &&
           a.timeout_seconds == b.timeout_seconds && a.max_branches == b.max_branches;
}

Network::Network(int input_dim, std::vector<Layer> layers) : input_dim_(input_dim), layers_(std::move(layers)) {
    if (input_dim_ <= 0) throw InputError("input_dim: must be positive");
    if (layers_.empty()) throw InputError("layers: at least one layer required");
    Eigen::Index prev = input_dim_;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const Layer& ly = layers_[k];
        const std::string path = "layers[" + std::to_string(k) + "]";
        if (ly.weights.rows() == 0) throw InputError(path + ".weights: empty");
        if (ly.weights.cols() != prev)
            throw InputError(path + ".weights: has " + std::to_string(ly.weights.cols()) + " columns, expected " +
                             std::to_string(prev));
        if (ly.bias.size() != ly.weights.rows())
            throw InputError(path + ".bias: has " + std::to_string(ly.bias.size()) + " entries, expected " +
                             std::to_string(ly.weights.rows()));
        if (!ly.weights.allFinite()) throw InputError(path + ".weights: non-finite value");
        if (!ly.bias.allFinite()) throw InputError(path + ".bias: non-finite value");
        prev = ly.weights.rows();
    }
    if (layers_.back().activation != Activation::linear)
        throw InputError("layers[" + std::to_string(layers_.size() - 1) + "].activation: last layer must be linear");
}

int Network::width(int i) const {
    return i == 0 ? input_dim_ : static_cast<int>(layer(i).bias.size());
}

bool Box::contains(const Eigen::VectorXd& x) const {
    return x.size() == lower.size() && (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

ForwardResult forward(const Network& net, const Eigen::VectorXd& x) {
    if (x.size() != net.input_dim())
        throw InputError("forward: input has " + std::to_string(x.size()) + " entries, expected " +
                         std::to_string(net.input_dim()));
    ForwardResult out;
    out.preacts.reserve(net.layers().size());
    Eigen::VectorXd h = x;
    for (const Layer& ly : net.layers()) {
        Eigen::VectorXd z = ly.weights * h + ly.bias;
        h = ly.activation == Activation::relu ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
        out.preacts.push_back(std::move(z));
    }
    out.logits = std::move(h);
    return out;
}

Eigen::VectorXd margin(const Network& net, const Eigen::MatrixXd& spec, const Eigen::VectorXd& x) {
    if (spec.cols() != net.output_dim())
        throw InputError("margin: spec has " + std::to_string(spec.cols()) + " columns, expected " +
                         std::to_string(net.output_dim()));
    return spec * forward(net, x).logits;
}

void validate_task(const VerificationTask& task) {
    const int n0 = task.network.input_dim();
    if (task.domain.lower.size() != n0)
        throw InputError("input_lower: has " + std::to_string(task.domain.lower.size()) + " entries, expected " +
                         std::to_string(n0));
    if (task.domain.upper.size() != n0)
        throw InputError("input_upper: has " + std::to_string(task.domain.upper.size()) + " entries, expected " +
                         std::to_string(n0));
    if (!task.domain.lower.allFinite() || !task.domain.upper.allFinite())
        throw InputError("input bounds: non-finite value");
    for (int k = 0; k < n0; ++k)
        if (task.domain.lower[k] > task.domain.upper[k])
            throw InputError("input_lower[" + std::to_string(k) + "]: exceeds input_upper[" + std::to_string(k) + "]");
    if (task.spec.rows() < 1) throw InputError("C: at least one row required");
    if (task.spec.cols() != task.network.output_dim())
        throw InputError("C: has " + std::to_string(task.spec.cols()) + " columns, expected " +
                         std::to_string(task.network.output_dim()));
    if (!task.spec.allFinite()) throw InputError("C: non-finite value");
    if (!(task.timeout_seconds > 0)) throw InputError("timeout_seconds: must be positive");
    if (task.max_branches < 0) throw InputError("max_branches: must be non-negative");
}

Network network_from_json_text(const std::string& text, const std::string& origin) {
    const json doc = parse(text, origin);
    const json& jdim = require(doc, "input_dim", origin, "");
    if (!jdim.is_number_integer() || jdim.get<long long>() <= 0)
        throw InputError(where(origin, "input_dim") + "expected a positive integer");
    const json& jlayers = require(doc, "layers", origin, "");
    if (!jlayers.is_array() || jlayers.empty()) throw InputError(where(origin, "layers") + "expected a non-empty array");

    std::vector<Layer> layers;
    Eigen::Index prev = jdim.get<int>();
    for (std::size_t k = 0; k < jlayers.size(); ++k) {
        const std::string path = "layers[" + std::to_string(k) + "]";
        Layer ly;
        ly.weights = read_matrix(require(jlayers[k], "weights", origin, path), origin, path + ".weights");
        ly.bias = read_vector(require(jlayers[k], "bias", origin, path), origin, path + ".bias");
        const json& act = require(jlayers[k], "activation", origin, path);
        if (act == "relu") {
            ly.activation = Activation::relu;
        } else if (act == "linear") {
            ly.activation = Activation::linear;
        } else {
            throw InputError(where(origin, path + ".activation") + "unsupported activation " + act.dump() +
                             " (expected \"relu\" or \"linear\")");
        }
        if (ly.weights.cols() != prev)
            throw InputError(where(origin, path + ".weights") + "has " + std::to_string(ly.weights.cols()) +
                             " columns, expected " + std::to_string(prev));
        if (ly.bias.size() != ly.weights.rows())
            throw InputError(where(origin, path + ".bias") + "has " + std::to_string(ly.bias.size()) +
                             " entries, expected " + std::to_string(ly.weights.rows()));
        prev = ly.weights.rows();
        layers.push_back(std::move(ly));
    }
    try {
        return Network(jdim.get<int>(), std::move(layers));
    } catch (const InputError& e) {
        throw InputError(origin + ": " + e.what());
    }
}

std::string network_to_json_text(const Network& net) {
    json doc;
    doc["input_dim"] = net.input_dim();
    json layers = json::array();
    for (const Layer& ly : net.layers()) {
        json jl;
        jl["weights"] = matrix_json(ly.weights);
        jl["bias"] = vector_json(ly.bias);
        jl["activation"] = to_string(ly.activation);
        layers.push_back(std::move(jl));
    }
    doc["layers"] = std::move(layers);
    return doc.dump() + "\n";
}

VerificationTask task_from_json_text(const std::string& model_text, const std::string& spec_text,
                                     const std::string& model_origin, const std::string& spec_origin) {
    Network net = network_from_json_text(model_text, model_origin);
    const json doc = parse(spec_text, spec_origin);
    Box box{read_vector(require(doc, "input_lower", spec_origin, ""), spec_origin, "input_lower"),
            read_vector(require(doc, "input_upper", spec_origin, ""), spec_origin, "input_upper")};
    Eigen::MatrixXd spec = read_matrix(require(doc, "C", spec_origin, ""), spec_origin, "C");
    VerificationTask task{std::move(net), std::move(box), std::move(spec)};
    if (auto it = doc.find("timeout_seconds"); it != doc.end())
        task.timeout_seconds = read_number(*it, spec_origin, "timeout_seconds");
    if (auto it = doc.find("max_branches"); it != doc.end()) {
        if (!it->is_number_integer()) throw InputError(where(spec_origin, "max_branches") + "expected an integer");
        task.max_branches = it->get<long>();
    }
    try {
        validate_task(task);
    } catch (const InputError& e) {
        throw InputError(spec_origin + ": " + e.what());
    }
    return task;
}

std::string spec_to_json_text(const VerificationTask& task) {
    json doc;
    doc["input_lower"] = vector_json(task.domain.lower);
    doc["input_upper"] = vector_json(task.domain.upper);
    doc["C"] = matrix_json(task.spec);
    doc["timeout_seconds"] = task.timeout_seconds;
    doc["max_branches"] = task.max_branches;
    return doc.dump() + "\n";
}

VerificationTask load_task(const std::string& model_path, const std::string& spec_path) {
    return task_from_json_text(read_file(model_path), read_file(spec_path), model_path, spec_path);
}

void save_task(const VerificationTask& task, const std::string& model_path, const std::string& spec_path) {
    write_file(model_path, network_to_json_text(task.network));
    write_file(spec_path, spec_to_json_text(task));
}

}  // namespace drgbab
