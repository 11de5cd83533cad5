#pragma once

#include <utility>
#include <vector>

#include <json.hpp>

#include "prae/core.hpp"

namespace prae {

// ReLU multilayer perceptron with two linear output logits f0, f1.
// The classifier score is g(x) = f1(x) - f0(x), a continuous piecewise
// linear function of x.
class ReluNet {
  public:
    struct Layer {
        Mat w;
        Vec b;
    };

    ReluNet(std::vector<Layer> hidden, Layer output)
        : hidden_(std::move(hidden)), output_(std::move(output)) {
        Eigen::Index in = hidden_.empty() ? output_.w.cols() : hidden_[0].w.cols();
        input_dim_ = static_cast<int>(in);
        for (const auto& l : hidden_) {
            if (l.w.cols() != in || l.b.size() != l.w.rows())
                throw PraeError("ReluNet: layer dimensions do not chain");
            in = l.w.rows();
        }
        if (output_.w.cols() != in || output_.w.rows() != 2 ||
            output_.b.size() != 2)
            throw PraeError("ReluNet: output layer must map to two logits");
    }

    int input_dim() const { return input_dim_; }
    const std::vector<Layer>& hidden() const { return hidden_; }
    const Layer& output() const { return output_; }

    int relu_count() const {
        int n = 0;
        for (const auto& l : hidden_) n += static_cast<int>(l.w.rows());
        return n;
    }

    // Forward pass returning the two logits.
    Eigen::Vector2d logits(const Vec& x) const {
        Vec h = x;
        for (const auto& l : hidden_) h = (l.w * h + l.b).cwiseMax(0.0);
        Vec out = output_.w * h + output_.b;
        return {out[0], out[1]};
    }

    double score(const Vec& x) const {
        const auto f = logits(x);
        return f[1] - f[0];
    }

    // Pre-activations of every hidden neuron, layer by layer, as the MIP
    // encoding sees them.
    std::vector<Vec> pre_activations(const Vec& x) const {
        std::vector<Vec> pres;
        pres.reserve(hidden_.size());
        Vec h = x;
        for (const auto& l : hidden_) {
            Vec pre = l.w * h + l.b;
            pres.push_back(pre);
            h = pre.cwiseMax(0.0);
        }
        return pres;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        auto layer_json = [](const Layer& l) {
            nlohmann::json lj;
            lj["rows"] = l.w.rows();
            lj["cols"] = l.w.cols();
            std::vector<double> w;
            w.reserve(static_cast<std::size_t>(l.w.size()));
            for (Eigen::Index r = 0; r < l.w.rows(); ++r)
                for (Eigen::Index c = 0; c < l.w.cols(); ++c)
                    w.push_back(l.w(r, c));
            lj["w"] = w;
            lj["b"] = std::vector<double>(l.b.data(), l.b.data() + l.b.size());
            return lj;
        };
        auto layers = nlohmann::json::array();
        for (const auto& l : hidden_) layers.push_back(layer_json(l));
        j["hidden"] = layers;
        j["output"] = layer_json(output_);
        return j;
    }

    static ReluNet from_json(const nlohmann::json& j) {
        auto layer_from = [](const nlohmann::json& lj) {
            const auto rows = lj.at("rows").get<Eigen::Index>();
            const auto cols = lj.at("cols").get<Eigen::Index>();
            Layer l{Mat(rows, cols), Vec(rows)};
            const auto& w = lj.at("w");
            for (Eigen::Index r = 0; r < rows; ++r)
                for (Eigen::Index c = 0; c < cols; ++c)
                    l.w(r, c) = w[static_cast<std::size_t>(r * cols + c)].get<double>();
            const auto& b = lj.at("b");
            for (Eigen::Index r = 0; r < rows; ++r)
                l.b[r] = b[static_cast<std::size_t>(r)].get<double>();
            return l;
        };
        std::vector<Layer> hidden;
        for (const auto& lj : j.at("hidden")) hidden.push_back(layer_from(lj));
        return ReluNet(std::move(hidden), layer_from(j.at("output")));
    }

  private:
    std::vector<Layer> hidden_;
    Layer output_;
    int input_dim_;
};

}  // namespace prae
