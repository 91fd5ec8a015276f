#pragma once

// Minimal dense-layer network with exact backpropagation, SGD/RMSProp updates
// and parameter clipping. Everything runs in 64-bit.
//
// A forward pass records a Tape; backward(tape, g) returns the gradient of
// <g, output> with respect to every parameter and to the input. Tapes are
// invalidated by any parameter update (tracked via a revision counter).

#include "datcgan/common.hpp"
#include "datcgan/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace datcgan::nn {

enum class Activation { ReLU, Identity };

inline std::string to_string(Activation a) { return a == Activation::ReLU ? "relu" : "identity"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::ReLU;
    if (s == "identity") return Activation::Identity;
    fail("unknown activation: " + s);
}

struct DenseLayer {
    Mat weights;  // out x in
    Vec bias;     // out
    Activation activation = Activation::Identity;

    int in_dim() const { return static_cast<int>(weights.cols()); }
    int out_dim() const { return static_cast<int>(weights.rows()); }
};

struct LayerGrad {
    Mat weights;
    Vec bias;
};

struct Gradients {
    std::vector<LayerGrad> layers;
    Vec input;  // d<g,output>/d input

    bool finite() const {
        for (const auto& l : layers)
            if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
        return input.allFinite();
    }
};

struct Tape {
    std::uint64_t revision = 0;
    std::vector<Vec> inputs;   // input fed to each layer
    std::vector<Vec> preacts;  // W x + b per layer
};

enum class StepDirection { Descent, Ascent };

class Net {
public:
    Net() = default;

    // dims = {in, hidden..., out}; hidden layers use `hidden`, last uses `output`.
    static Net dense(std::span<const int> dims, Activation hidden, Activation output) {
        require(dims.size() >= 2, "Net needs at least input and output dims");
        Net net;
        for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
            require(dims[i] > 0 && dims[i + 1] > 0, "layer dims must be positive");
            DenseLayer layer;
            layer.weights = Mat::Zero(dims[i + 1], dims[i]);
            layer.bias = Vec::Zero(dims[i + 1]);
            layer.activation = (i + 2 == dims.size()) ? output : hidden;
            net.layers_.push_back(std::move(layer));
        }
        return net;
    }

    void init_uniform(Rng& rng, double lo = -0.1, double hi = 0.1) {
        for (auto& l : layers_) {
            for (int i = 0; i < l.weights.rows(); ++i)
                for (int j = 0; j < l.weights.cols(); ++j) l.weights(i, j) = rng.uniform(lo, hi);
            for (int i = 0; i < l.bias.size(); ++i) l.bias(i) = rng.uniform(lo, hi);
        }
        ++revision_;
    }

    int input_dim() const { return layers_.front().in_dim(); }
    int output_dim() const { return layers_.back().out_dim(); }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::uint64_t revision() const { return revision_; }

    Vec forward(const Vec& input, Tape* tape = nullptr) const {
        require(input.size() == input_dim(),
                "forward: input dim " + std::to_string(input.size()) + " != net input dim " +
                    std::to_string(input_dim()));
        if (tape) {
            tape->revision = revision_;
            tape->inputs.clear();
            tape->preacts.clear();
            tape->inputs.reserve(layers_.size());
            tape->preacts.reserve(layers_.size());
        }
        Vec x = input;
        for (const auto& l : layers_) {
            Vec z = l.weights * x + l.bias;
            if (tape) {
                tape->inputs.push_back(std::move(x));
                tape->preacts.push_back(z);
            }
            // ReLU subgradient convention: derivative at exactly 0 is 0,
            // consistent with z.cwiseMax(0) being flat from the left.
            x = (l.activation == Activation::ReLU) ? Vec(z.cwiseMax(0.0)) : std::move(z);
        }
        return x;
    }

    Gradients backward(const Tape& tape, const Vec& output_grad) const {
        require(tape.revision == revision_, "backward: tape is stale (parameters changed since forward)");
        require(tape.inputs.size() == layers_.size(), "backward: tape does not match this net");
        require(output_grad.size() == output_dim(), "backward: output_grad dim mismatch");
        Gradients g;
        g.layers.resize(layers_.size());
        Vec grad = output_grad;
        for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
            const auto& l = layers_[li];
            require(tape.preacts[li].size() == l.out_dim(), "backward: tape shape mismatch");
            Vec dz = grad;
            if (l.activation == Activation::ReLU) {
                for (int i = 0; i < dz.size(); ++i)
                    if (tape.preacts[li](i) <= 0.0) dz(i) = 0.0;
            }
            g.layers[li].weights = dz * tape.inputs[li].transpose();
            g.layers[li].bias = dz;
            grad = l.weights.transpose() * dz;
        }
        g.input = std::move(grad);
        return g;
    }

    // p <- p -/+ lr * g. Rejects non-finite gradients before touching anything.
    void sgd_step(const Gradients& grads, double lr, StepDirection dir) {
        check_congruent(grads);
        require(grads.finite(), "sgd_step: non-finite gradient");
        const double s = (dir == StepDirection::Descent) ? -lr : lr;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            layers_[i].weights += s * grads.layers[i].weights;
            layers_[i].bias += s * grads.layers[i].bias;
        }
        ++revision_;
    }

    void clip_params(double lb, double ub) {
        require(lb < ub, "clip_params: lb must be < ub");
        for (auto& l : layers_) {
            for (int i = 0; i < l.weights.rows(); ++i)
                for (int j = 0; j < l.weights.cols(); ++j) {
                    double& p = l.weights(i, j);
                    if (p < lb) p = lb;
                    else if (p > ub) p = ub;
                }
            for (int i = 0; i < l.bias.size(); ++i) {
                double& p = l.bias(i);
                if (p < lb) p = lb;
                else if (p > ub) p = ub;
            }
        }
        ++revision_;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
        return n;
    }

    double param_squared_norm() const {
        double s = 0;
        for (const auto& l : layers_) s += l.weights.squaredNorm() + l.bias.squaredNorm();
        return s;
    }

    bool all_params_within(double lb, double ub) const {
        for (const auto& l : layers_) {
            if ((l.weights.array() < lb).any() || (l.weights.array() > ub).any()) return false;
            if ((l.bias.array() < lb).any() || (l.bias.array() > ub).any()) return false;
        }
        return true;
    }

    // Direct parameter access for finite-difference tests and optimizers.
    std::vector<DenseLayer>& mutable_layers() {
        ++revision_;
        return layers_;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& l : layers_) {
            nlohmann::json lj;
            lj["in"] = l.in_dim();
            lj["out"] = l.out_dim();
            lj["activation"] = to_string(l.activation);
            nlohmann::json w = nlohmann::json::array();
            for (int i = 0; i < l.weights.rows(); ++i)
                for (int c = 0; c < l.weights.cols(); ++c) w.push_back(double_to_hex(l.weights(i, c)));
            nlohmann::json b = nlohmann::json::array();
            for (int i = 0; i < l.bias.size(); ++i) b.push_back(double_to_hex(l.bias(i)));
            lj["weights"] = std::move(w);
            lj["bias"] = std::move(b);
            layers.push_back(std::move(lj));
        }
        j["layers"] = std::move(layers);
        return j;
    }

    static Net from_json(const nlohmann::json& j) {
        Net net;
        for (const auto& lj : j.at("layers")) {
            DenseLayer l;
            const int in = lj.at("in").get<int>();
            const int out = lj.at("out").get<int>();
            l.activation = activation_from_string(lj.at("activation").get<std::string>());
            const auto& w = lj.at("weights");
            const auto& b = lj.at("bias");
            require(static_cast<int>(w.size()) == in * out, "checkpoint: weight count mismatch");
            require(static_cast<int>(b.size()) == out, "checkpoint: bias count mismatch");
            l.weights = Mat(out, in);
            int idx = 0;
            for (int i = 0; i < out; ++i)
                for (int c = 0; c < in; ++c) l.weights(i, c) = hex_to_double(w[idx++].get<std::string>());
            l.bias = Vec(out);
            for (int i = 0; i < out; ++i) l.bias(i) = hex_to_double(b[i].get<std::string>());
            if (!net.layers_.empty())
                require(net.layers_.back().out_dim() == in, "checkpoint: layer dims not chained");
            net.layers_.push_back(std::move(l));
        }
        require(!net.layers_.empty(), "checkpoint: net has no layers");
        return net;
    }

private:
    void check_congruent(const Gradients& g) const {
        require(g.layers.size() == layers_.size(), "gradient/net layer count mismatch");
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            require(g.layers[i].weights.rows() == layers_[i].weights.rows() &&
                        g.layers[i].weights.cols() == layers_[i].weights.cols() &&
                        g.layers[i].bias.size() == layers_[i].bias.size(),
                    "gradient/net shape mismatch at layer " + std::to_string(i));
        }
    }

    std::vector<DenseLayer> layers_;
    std::uint64_t revision_ = 0;
};

// RMSProp accumulator, optional alternative to plain SGD for the trainer.
class RmsProp {
public:
    RmsProp(double decay = 0.9, double eps = 1e-8) : decay_(decay), eps_(eps) {}

    void step(Net& net, const Gradients& grads, double lr, StepDirection dir) {
        require(grads.finite(), "rmsprop: non-finite gradient");
        if (accum_.empty()) {
            for (const auto& l : net.layers())
                accum_.push_back({Mat::Zero(l.weights.rows(), l.weights.cols()), Vec::Zero(l.bias.size())});
        }
        Gradients scaled = grads;
        for (std::size_t i = 0; i < accum_.size(); ++i) {
            accum_[i].weights = decay_ * accum_[i].weights +
                                (1.0 - decay_) * grads.layers[i].weights.cwiseProduct(grads.layers[i].weights);
            accum_[i].bias = decay_ * accum_[i].bias +
                             (1.0 - decay_) * grads.layers[i].bias.cwiseProduct(grads.layers[i].bias);
            scaled.layers[i].weights =
                grads.layers[i].weights.cwiseQuotient((accum_[i].weights.cwiseSqrt().array() + eps_).matrix());
            scaled.layers[i].bias =
                grads.layers[i].bias.cwiseQuotient((accum_[i].bias.cwiseSqrt().array() + eps_).matrix());
        }
        net.sgd_step(scaled, lr, dir);
    }

    nlohmann::json to_json() const {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& a : accum_) {
            nlohmann::json aj;
            nlohmann::json w = nlohmann::json::array();
            for (int i = 0; i < a.weights.rows(); ++i)
                for (int c = 0; c < a.weights.cols(); ++c) w.push_back(double_to_hex(a.weights(i, c)));
            nlohmann::json b = nlohmann::json::array();
            for (int i = 0; i < a.bias.size(); ++i) b.push_back(double_to_hex(a.bias(i)));
            aj["weights"] = std::move(w);
            aj["bias"] = std::move(b);
            aj["rows"] = a.weights.rows();
            aj["cols"] = a.weights.cols();
            j.push_back(std::move(aj));
        }
        return j;
    }

    static RmsProp from_json(const nlohmann::json& j, double decay, double eps) {
        RmsProp r(decay, eps);
        for (const auto& aj : j) {
            LayerGrad a;
            const int rows = aj.at("rows").get<int>();
            const int cols = aj.at("cols").get<int>();
            a.weights = Mat(rows, cols);
            int idx = 0;
            for (int i = 0; i < rows; ++i)
                for (int c = 0; c < cols; ++c) a.weights(i, c) = hex_to_double(aj.at("weights")[idx++].get<std::string>());
            const auto& b = aj.at("bias");
            a.bias = Vec(b.size());
            for (std::size_t i = 0; i < b.size(); ++i) a.bias(i) = hex_to_double(b[i].get<std::string>());
            r.accum_.push_back(std::move(a));
        }
        return r;
    }

    bool initialized() const { return !accum_.empty(); }

private:
    double decay_;
    double eps_;
    std::vector<LayerGrad> accum_;
};

}  // namespace datcgan::nn
