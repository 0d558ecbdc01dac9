#include "test_support.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace drgbab;
using namespace testsupport;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("drgbab_model_" + name)).string();
}

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

std::string error_of(const std::string& model, const std::string& spec) {
    try {
        task_from_json_text(model, spec, "m.json", "s.json");
    } catch (const InputError& e) {
        return e.what();
    }
    return "";
}

const char* kModel1 = R"({"input_dim":1,"layers":[{"weights":[[1]],"bias":[0],"activation":"relu"},
                          {"weights":[[1]],"bias":[0],"activation":"linear"}]})";
const char* kSpec1 = R"({"input_lower":[-1],"input_upper":[1],"C":[[1]]})";

}  // namespace

TEST_CASE("relu clips a negative input") {
    const Network net = scalar_relu_net(1.0, 1.0, 0.0);
    const ForwardResult r = forward(net, vec({-2.0}));
    CHECK(r.logits(0) == 0.0);
    REQUIRE(r.preacts.size() == 2);
    CHECK(r.preacts[0](0) == -2.0);
    CHECK(r.preacts[1](0) == 0.0);
}

TEST_CASE("identity linear network returns its input") {
    const Network net(2, {layer(MatrixXd::Identity(2, 2), VectorXd::Zero(2), Activation::linear)});
    const ForwardResult r = forward(net, vec({0.3, -0.7}));
    CHECK(r.logits(0) == 0.3);
    CHECK(r.logits(1) == -0.7);
}

TEST_CASE("forward matches a plain-loop re-implementation on random nets") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const VerificationTask t = random_soundness_instance(rng);
        const VectorXd x = t.domain.center();
        const VectorXd mine = forward(t.network, x).logits;
        const auto ref = naive_forward(t.network, to_std(x));
        for (Eigen::Index k = 0; k < mine.size(); ++k) CHECK(mine(k) == doctest::Approx(ref[k]).epsilon(1e-12));

        const VectorXd m = margin(t.network, t.spec, x);
        const auto mref = naive_margin(t, to_std(x));
        for (Eigen::Index k = 0; k < m.size(); ++k) CHECK(m(k) == doctest::Approx(mref[k]).epsilon(1e-12));
    }
}

TEST_CASE("hidden post-activations are the ReLU of the pre-activations") {
    std::mt19937_64 rng(5);
    const VerificationTask t = random_soundness_instance(rng);
    const ForwardResult r = forward(t.network, t.domain.lower);
    VectorXd h = t.domain.lower;
    for (int i = 1; i <= t.network.num_layers(); ++i) {
        const VectorXd z = t.network.layer(i).weights * h + t.network.layer(i).bias;
        CHECK(z == r.preacts[static_cast<std::size_t>(i - 1)]);
        h = t.network.layer(i).activation == Activation::relu ? VectorXd(z.cwiseMax(0.0)) : z;
    }
}

TEST_CASE("forward is bitwise deterministic") {
    std::mt19937_64 rng(3);
    const VerificationTask t = random_soundness_instance(rng);
    const VectorXd x = t.domain.upper;
    CHECK(forward(t.network, x).logits == forward(t.network, x).logits);
}

TEST_CASE("forward rejects a wrong input length") {
    const Network net = scalar_relu_net(1.0, 1.0, 0.0);
    CHECK_THROWS_AS(forward(net, vec({1.0, 2.0})), InputError);
}

TEST_CASE("margin of a two-class spec") {
    const Network net(2, {layer(MatrixXd::Identity(2, 2), VectorXd::Zero(2), Activation::linear)});
    const VectorXd m = margin(net, mat({{1.0, -1.0}}), vec({0.9, 0.2}));
    CHECK(m(0) == doctest::Approx(0.7).epsilon(1e-15));
    const VectorXd id = margin(net, MatrixXd::Identity(2, 2), vec({0.9, 0.2}));
    CHECK(id == vec({0.9, 0.2}));
}

TEST_CASE("network constructor validates structure") {
    CHECK_THROWS_AS(Network(2, {layer(mat({{1.0}}), vec({0.0}), Activation::linear)}), InputError);
    CHECK_THROWS_AS(Network(1, {layer(mat({{1.0}}), vec({0.0}), Activation::relu)}), InputError);
    CHECK_THROWS_AS(Network(1, {layer(mat({{std::nan("")}}), vec({0.0}), Activation::linear)}), InputError);
    CHECK_THROWS_AS(Network(1, {}), InputError);
}

TEST_CASE("minimal model file loads as a two-layer network") {
    const VerificationTask t = task_from_json_text(kModel1, kSpec1);
    CHECK(t.network.num_layers() == 2);
    CHECK(t.network.input_dim() == 1);
    CHECK(t.network.output_dim() == 1);
    CHECK(t.spec.rows() == 1);
}

TEST_CASE("load errors name the file and the field") {
    const std::string bad_box = error_of(kModel1, R"({"input_lower":[2],"input_upper":[1],"C":[[1]]})");
    CHECK(bad_box.find("s.json") != std::string::npos);
    CHECK(bad_box.find("input_lower[0]") != std::string::npos);

    const std::string bad_dims = error_of(R"({"input_dim":2,"layers":[{"weights":[[1]],"bias":[0],"activation":"linear"}]})",
                                          R"({"input_lower":[0,0],"input_upper":[1,1],"C":[[1]]})");
    CHECK(bad_dims.find("m.json") != std::string::npos);
    CHECK(bad_dims.find("layers[0]") != std::string::npos);

    const std::string bad_act = error_of(R"({"input_dim":1,"layers":[{"weights":[[1]],"bias":[0],"activation":"tanh"}]})", kSpec1);
    CHECK(bad_act.find("tanh") != std::string::npos);

    const std::string bad_json = error_of("{not json", kSpec1);
    CHECK(bad_json.find("m.json") != std::string::npos);

    const std::string bad_c = error_of(kModel1, R"({"input_lower":[0],"input_upper":[1],"C":[[1,2]]})");
    CHECK(bad_c.find("C") != std::string::npos);

    const std::string empty_c = error_of(kModel1, R"({"input_lower":[0],"input_upper":[1],"C":[]})");
    CHECK_FALSE(empty_c.empty());
}

TEST_CASE("save then load reproduces the task exactly") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        VerificationTask t = random_soundness_instance(rng);
        t.timeout_seconds = 12.5;
        t.max_branches = 777;
        const std::string mp = temp_path("rt.model.json"), sp = temp_path("rt.spec.json");
        save_task(t, mp, sp);
        const VerificationTask back = load_task(mp, sp);
        CHECK(back == t);
        std::filesystem::remove(mp);
        std::filesystem::remove(sp);
    }
}

TEST_CASE("load_task reports missing files as input errors") {
    CHECK_THROWS_AS(load_task("/nonexistent/model.json", "/nonexistent/spec.json"), InputError);
    const std::string mp = temp_path("ok.model.json");
    write(mp, kModel1);
    CHECK_THROWS_AS(load_task(mp, "/nonexistent/spec.json"), InputError);
    std::filesystem::remove(mp);
}
