#include "datcgan/tensor_nn.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstring>

using namespace datcgan;
using nn::Activation;
using nn::Net;
using nn::StepDirection;

namespace {

Net make_random_net(std::vector<int> dims, std::uint64_t seed, Activation out = Activation::Identity) {
    Net net = Net::dense(dims, Activation::ReLU, out);
    Rng rng(seed);
    net.init_uniform(rng);
    return net;
}

}  // namespace

TEST_CASE("identity layer is the identity map") {
    Net net = Net::dense(std::vector<int>{2, 2}, Activation::Identity, Activation::Identity);
    net.mutable_layers()[0].weights = Mat::Identity(2, 2);
    Vec in(2);
    in << 1.0, 2.0;
    Vec out = net.forward(in);
    REQUIRE(out(0) == 1.0);
    REQUIRE(out(1) == 2.0);
}

TEST_CASE("relu layer clamps negatives") {
    Net net = Net::dense(std::vector<int>{2, 2}, Activation::ReLU, Activation::ReLU);
    net.mutable_layers()[0].weights = Mat::Identity(2, 2);
    Vec in(2);
    in << -1.0, 3.0;
    Vec out = net.forward(in);
    REQUIRE(out(0) == 0.0);
    REQUIRE(out(1) == 3.0);
}

TEST_CASE("forward matches hand-rolled matrix multiply oracle") {
    Net net = make_random_net({13, 4, 1}, 99);
    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> in(13);
        for (auto& v : in) v = rng.uniform(-2.0, 2.0);
        Vec in_vec = Eigen::Map<const Vec>(in.data(), 13);
        const Vec out = net.forward(in_vec);
        const auto want = oracles::net_forward_by_hand(net, in);
        REQUIRE(out.size() == 1);
        REQUIRE(std::abs(out(0) - want[0]) < 1e-12);
    }
}

TEST_CASE("dimension mismatch raises") {
    Net net = make_random_net({3, 2}, 1);
    REQUIRE_THROWS_AS(net.forward(Vec::Zero(4)), Error);
}

TEST_CASE("linear map weight gradient equals input components") {
    Net net = Net::dense(std::vector<int>{3, 3}, Activation::Identity, Activation::Identity);
    net.mutable_layers()[0].weights = Mat::Identity(3, 3);
    Vec x(3);
    x << 0.5, -1.5, 2.0;
    nn::Tape tape;
    net.forward(x, &tape);
    for (int i = 0; i < 3; ++i) {
        Vec g = Vec::Zero(3);
        g(i) = 1.0;
        auto grads = net.backward(tape, g);
        for (int j = 0; j < 3; ++j) {
            REQUIRE(grads.layers[0].weights(i, j) == x(j));
        }
    }
}

TEST_CASE("backprop matches central finite differences") {
    Rng seed_rng(2024);
    const double h = 1e-5;
    for (int rep = 0; rep < 100; ++rep) {
        const int in_dim = 2 + static_cast<int>(seed_rng.below(6));
        const int hid = 1 + static_cast<int>(seed_rng.below(5));
        Net net = make_random_net({in_dim, hid, 1}, seed_rng.next_u64());
        Rng rng(seed_rng.next_u64());
        Vec x(in_dim);
        for (int i = 0; i < in_dim; ++i) x(i) = rng.uniform(-1.0, 1.0);

        auto params = oracles::net_param_ptrs(net);
        // mutable_layers bumped the revision; tape after taking pointers
        nn::Tape tape;
        net.forward(x, &tape);
        Vec og(1);
        og << 1.0;
        auto grads = net.backward(tape, og);
        double max_rel = 0.0;
        // flatten analytic grads in the same order as net_param_ptrs
        std::vector<double> flat;
        for (const auto& lg : grads.layers) {
            for (int i = 0; i < lg.weights.rows(); ++i)
                for (int j = 0; j < lg.weights.cols(); ++j) flat.push_back(lg.weights(i, j));
            for (int i = 0; i < lg.bias.size(); ++i) flat.push_back(lg.bias(i));
        }
        REQUIRE(flat.size() == params.size());
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            double* p = params[pi];
            const double p0 = *p;
            const double fd = oracles::central_difference(
                [&](double v) {
                    *p = v;
                    const double out = net.forward(x)(0);
                    *p = p0;
                    return out;
                },
                p0, h);
            max_rel = std::max(max_rel, oracles::rel_error(flat[pi], fd));
        }
        // input gradient too
        for (int i = 0; i < in_dim; ++i) {
            const double x0 = x(i);
            const double fd = oracles::central_difference(
                [&](double v) {
                    Vec xx = x;
                    xx(i) = v;
                    return net.forward(xx)(0);
                },
                x0, h);
            max_rel = std::max(max_rel, oracles::rel_error(grads.input(i), fd));
        }
        REQUIRE(max_rel < 1e-4);
    }
}

TEST_CASE("relu subgradient at exactly zero is zero") {
    Net net = Net::dense(std::vector<int>{2, 2}, Activation::ReLU, Activation::ReLU);
    net.mutable_layers()[0].weights = Mat::Identity(2, 2);
    nn::Tape tape;
    net.forward(Vec::Zero(2), &tape);  // pre-activations exactly zero
    Vec og(2);
    og << 1.0, 1.0;
    auto grads = net.backward(tape, og);
    REQUIRE(grads.layers[0].bias(0) == 0.0);
    REQUIRE(grads.layers[0].bias(1) == 0.0);
    REQUIRE(grads.input.isZero(0.0));
}

TEST_CASE("stale tape is rejected") {
    Net net = make_random_net({3, 2, 1}, 5);
    nn::Tape tape;
    net.forward(Vec::Zero(3), &tape);
    net.clip_params(-0.5, 0.5);
    REQUIRE_THROWS_AS(net.backward(tape, Vec::Ones(1)), Error);
}

TEST_CASE("sgd step arithmetic") {
    Net net = Net::dense(std::vector<int>{1, 1}, Activation::Identity, Activation::Identity);
    net.mutable_layers()[0].weights(0, 0) = 1.0;
    nn::Gradients g;
    g.layers.push_back({Mat::Constant(1, 1, 2.0), Vec::Zero(1)});
    g.input = Vec::Zero(1);
    net.sgd_step(g, 0.1, StepDirection::Descent);
    REQUIRE(net.layers()[0].weights(0, 0) == Catch::Approx(0.8).margin(1e-15));
}

TEST_CASE("ascent with zero gradient leaves parameters unchanged") {
    Net net = make_random_net({3, 2, 1}, 11);
    const Net before = net;
    nn::Gradients g;
    for (const auto& l : net.layers())
        g.layers.push_back({Mat::Zero(l.weights.rows(), l.weights.cols()), Vec::Zero(l.bias.size())});
    g.input = Vec::Zero(3);
    net.sgd_step(g, 0.5, StepDirection::Ascent);
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        REQUIRE(net.layers()[i].weights == before.layers()[i].weights);
        REQUIRE(net.layers()[i].bias == before.layers()[i].bias);
    }
}

TEST_CASE("two sgd steps equal one step with summed gradients on frozen params") {
    Net a = make_random_net({4, 3, 2}, 21);
    Net b = a;
    Rng rng(3);
    auto rand_grads = [&](const Net& net) {
        nn::Gradients g;
        for (const auto& l : net.layers()) {
            Mat w(l.weights.rows(), l.weights.cols());
            for (int i = 0; i < w.rows(); ++i)
                for (int j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-1.0, 1.0);
            Vec bias(l.bias.size());
            for (int i = 0; i < bias.size(); ++i) bias(i) = rng.uniform(-1.0, 1.0);
            g.layers.push_back({std::move(w), std::move(bias)});
        }
        g.input = Vec::Zero(net.input_dim());
        return g;
    };
    auto g1 = rand_grads(a);
    auto g2 = rand_grads(a);
    nn::Gradients sum = g1;
    for (std::size_t i = 0; i < sum.layers.size(); ++i) {
        sum.layers[i].weights += g2.layers[i].weights;
        sum.layers[i].bias += g2.layers[i].bias;
    }
    a.sgd_step(g1, 0.01, StepDirection::Descent);
    a.sgd_step(g2, 0.01, StepDirection::Descent);
    b.sgd_step(sum, 0.01, StepDirection::Descent);
    for (std::size_t i = 0; i < a.layers().size(); ++i) {
        REQUIRE((a.layers()[i].weights - b.layers()[i].weights).cwiseAbs().maxCoeff() < 1e-15);
        REQUIRE((a.layers()[i].bias - b.layers()[i].bias).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("non-finite gradient leaves parameters untouched") {
    Net net = make_random_net({2, 2}, 31);
    const Net before = net;
    nn::Gradients g;
    g.layers.push_back({Mat::Constant(2, 2, std::nan("")), Vec::Zero(2)});
    g.input = Vec::Zero(2);
    REQUIRE_THROWS_AS(net.sgd_step(g, 0.1, StepDirection::Descent), Error);
    REQUIRE(net.layers()[0].weights == before.layers()[0].weights);
}

TEST_CASE("clip clamps componentwise and is idempotent") {
    Net net = Net::dense(std::vector<int>{3, 1}, Activation::Identity, Activation::Identity);
    auto& l = net.mutable_layers()[0];
    l.weights(0, 0) = -0.7;
    l.weights(0, 1) = 0.3;
    l.weights(0, 2) = 0.9;
    net.clip_params(-0.5, 0.5);
    REQUIRE(net.layers()[0].weights(0, 0) == -0.5);
    REQUIRE(net.layers()[0].weights(0, 1) == 0.3);
    REQUIRE(net.layers()[0].weights(0, 2) == 0.5);
    const Net once = net;
    net.clip_params(-0.5, 0.5);
    REQUIRE(net.layers()[0].weights == once.layers()[0].weights);
}

TEST_CASE("clip is a no-op on in-range params, bit-identical") {
    Net net = make_random_net({5, 4, 2}, 17);  // init range [-0.1, 0.1] inside clip box
    std::vector<double> before;
    for (const auto& l : net.layers()) {
        for (int i = 0; i < l.weights.size(); ++i) before.push_back(l.weights.data()[i]);
        for (int i = 0; i < l.bias.size(); ++i) before.push_back(l.bias(i));
    }
    net.clip_params(-0.5, 0.5);
    std::size_t idx = 0;
    for (const auto& l : net.layers()) {
        for (int i = 0; i < l.weights.size(); ++i) {
            REQUIRE(std::memcmp(&l.weights.data()[i], &before[idx++], sizeof(double)) == 0);
        }
        for (int i = 0; i < l.bias.size(); ++i) {
            REQUIRE(std::memcmp(&l.bias(i), &before[idx++], sizeof(double)) == 0);
        }
    }
}

TEST_CASE("clip rejects inverted bounds") {
    Net net = make_random_net({2, 1}, 3);
    REQUIRE_THROWS_AS(net.clip_params(0.5, -0.5), Error);
}

TEST_CASE("same seed gives bit-identical nets and passes") {
    Net a = make_random_net({13, 4, 1}, 12345);
    Net b = make_random_net({13, 4, 1}, 12345);
    for (std::size_t i = 0; i < a.layers().size(); ++i) {
        REQUIRE(a.layers()[i].weights == b.layers()[i].weights);
        REQUIRE(a.layers()[i].bias == b.layers()[i].bias);
    }
    Vec x = Vec::LinSpaced(13, -1.0, 1.0);
    REQUIRE(a.forward(x) == b.forward(x));
}

TEST_CASE("checkpoint json round-trips bit-exactly") {
    Net net = make_random_net({5, 3, 2}, 77);
    // plant awkward values
    auto& l0 = net.mutable_layers()[0];
    l0.weights(0, 0) = 0.1;
    l0.weights(0, 1) = -0.0;
    l0.weights(0, 2) = 1e-300;
    l0.weights(1, 0) = -1.0 / 3.0;
    const nlohmann::json j = net.to_json();
    const std::string text = j.dump();
    const Net back = Net::from_json(nlohmann::json::parse(text));
    REQUIRE(back.layers().size() == net.layers().size());
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        const auto& a = net.layers()[i];
        const auto& b = back.layers()[i];
        REQUIRE(std::memcmp(a.weights.data(), b.weights.data(), sizeof(double) * a.weights.size()) == 0);
        REQUIRE(std::memcmp(a.bias.data(), b.bias.data(), sizeof(double) * a.bias.size()) == 0);
        REQUIRE(a.activation == b.activation);
    }
}

TEST_CASE("rmsprop state serializes and steps deterministically") {
    Net a = make_random_net({3, 2, 1}, 5);
    Net b = a;
    nn::RmsProp opt_a(0.9, 1e-8);
    nn::RmsProp opt_b(0.9, 1e-8);
    nn::Gradients g;
    for (const auto& l : a.layers())
        g.layers.push_back({Mat::Constant(l.weights.rows(), l.weights.cols(), 0.3), Vec::Constant(l.bias.size(), -0.2)});
    g.input = Vec::Zero(3);
    opt_a.step(a, g, 0.01, StepDirection::Descent);
    auto state = opt_a.to_json();
    nn::RmsProp opt_c = nn::RmsProp::from_json(state, 0.9, 1e-8);
    opt_b.step(b, g, 0.01, StepDirection::Descent);
    opt_a.step(a, g, 0.01, StepDirection::Descent);
    opt_b.step(b, g, 0.01, StepDirection::Descent);
    for (std::size_t i = 0; i < a.layers().size(); ++i)
        REQUIRE(a.layers()[i].weights == b.layers()[i].weights);
    REQUIRE(opt_c.initialized());
}
