#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "prae/core.hpp"
#include "prae/relu_net.hpp"
#include "prae/rng.hpp"

namespace prae {

struct LabeledSample {
    Vec x;
    int y;  // 0 = non-rare, 1 = rare
};

enum class LossKind { CrossEntropy, Squared };

struct Stage1Config {
    std::vector<int> hidden_widths{32, 32};
    LossKind loss = LossKind::CrossEntropy;
    int epochs = 40;
    int batch_size = 64;
    double learning_rate = 0.05;
    std::uint64_t seed = 1;
};

namespace detail {

inline ReluNet init_net(int input_dim, const std::vector<int>& widths,
                        CounterRng& rng) {
    std::vector<ReluNet::Layer> hidden;
    int in = input_dim;
    auto uniform_pm = [&](double scale) {
        return (2.0 * rng.next_uniform() - 1.0) * scale;
    };
    for (int w : widths) {
        if (w < 1) throw PraeError("train_erm: hidden width must be >= 1");
        ReluNet::Layer l{Mat(w, in), Vec(w)};
        const double scale = 1.0 / std::sqrt(static_cast<double>(in));
        for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.w.cols(); ++c)
                l.w(r, c) = uniform_pm(scale);
            l.b[r] = uniform_pm(scale);
        }
        hidden.push_back(std::move(l));
        in = w;
    }
    ReluNet::Layer out{Mat(2, in), Vec(2)};
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (Eigen::Index r = 0; r < 2; ++r) {
        for (Eigen::Index c = 0; c < in; ++c) out.w(r, c) = uniform_pm(scale);
        out.b[r] = uniform_pm(scale);
    }
    return ReluNet(std::move(hidden), std::move(out));
}

// dL/dlogits for one sample. Cross-entropy uses the softmax of the two
// logits; squared loss targets the one-hot pair.
inline Eigen::Vector2d loss_grad(const Eigen::Vector2d& f, int y, LossKind loss,
                                 double* loss_out) {
    if (loss == LossKind::CrossEntropy) {
        const double m = std::max(f[0], f[1]);
        const double z = std::exp(f[0] - m) + std::exp(f[1] - m);
        const double p1 = std::exp(f[1] - m) / z;
        if (loss_out) {
            const double py = y == 1 ? p1 : 1.0 - p1;
            *loss_out = -std::log(std::max(py, 1e-300));
        }
        return {(1.0 - p1) - (y == 0 ? 1.0 : 0.0), p1 - (y == 1 ? 1.0 : 0.0)};
    }
    const Eigen::Vector2d target(y == 0 ? 1.0 : 0.0, y == 1 ? 1.0 : 0.0);
    if (loss_out) *loss_out = (f - target).squaredNorm();
    return 2.0 * (f - target);
}

}  // namespace detail

inline double mean_loss(const ReluNet& net,
                        const std::vector<LabeledSample>& samples,
                        LossKind loss) {
    double acc = 0.0;
    for (const auto& s : samples) {
        double l;
        detail::loss_grad(net.logits(s.x), s.y, loss, &l);
        acc += l;
    }
    return acc / static_cast<double>(samples.size());
}

// Plain mini-batch SGD with a fixed schedule. Single-threaded on purpose:
// identical seeds must give bitwise-identical weights.
inline ReluNet train_erm(const std::vector<LabeledSample>& samples,
                         const Stage1Config& cfg) {
    if (samples.empty()) throw DegenerateLabels("train_erm: no samples");
    bool has0 = false, has1 = false;
    for (const auto& s : samples) (s.y == 0 ? has0 : has1) = true;
    if (!has0 || !has1)
        throw DegenerateLabels("train_erm: both labels must be present");

    const int d = static_cast<int>(samples[0].x.size());
    CounterRng rng(cfg.seed, /*stream=*/0xE12);
    ReluNet net = detail::init_net(d, cfg.hidden_widths, rng);
    const double initial = mean_loss(net, samples, cfg.loss);

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    auto best = net;
    double best_loss = initial;

    const std::size_t n_layers = net.hidden().size();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with the run's own stream.
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.next_below(i)]);
        const double lr =
            cfg.learning_rate / (1.0 + 0.05 * static_cast<double>(epoch));

        std::vector<ReluNet::Layer> hidden = net.hidden();
        ReluNet::Layer out = net.output();
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(
                order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Mat> gw(n_layers);
            std::vector<Vec> gb(n_layers);
            for (std::size_t l = 0; l < n_layers; ++l) {
                gw[l] = Mat::Zero(hidden[l].w.rows(), hidden[l].w.cols());
                gb[l] = Vec::Zero(hidden[l].b.size());
            }
            Mat gow = Mat::Zero(2, out.w.cols());
            Vec gob = Vec::Zero(2);

            for (std::size_t k = start; k < stop; ++k) {
                const auto& s = samples[order[k]];
                // Forward, keeping activations.
                std::vector<Vec> acts;
                acts.reserve(n_layers + 1);
                acts.push_back(s.x);
                for (const auto& l : hidden)
                    acts.push_back((l.w * acts.back() + l.b).cwiseMax(0.0));
                const Eigen::Vector2d f{
                    out.w.row(0).dot(acts.back()) + out.b[0],
                    out.w.row(1).dot(acts.back()) + out.b[1]};
                const Eigen::Vector2d gf =
                    detail::loss_grad(f, s.y, cfg.loss, nullptr);

                gow += gf * acts.back().transpose();
                gob += gf;
                Vec delta = out.w.transpose() * gf;
                for (std::size_t l = n_layers; l-- > 0;) {
                    // ReLU gate: activation > 0 passes gradient.
                    Vec gated =
                        (acts[l + 1].array() > 0.0).select(delta, Vec::Zero(delta.size()));
                    gw[l] += gated * acts[l].transpose();
                    gb[l] += gated;
                    if (l > 0) delta = hidden[l].w.transpose() * gated;
                }
            }

            const double step = lr / static_cast<double>(stop - start);
            for (std::size_t l = 0; l < n_layers; ++l) {
                hidden[l].w -= step * gw[l];
                hidden[l].b -= step * gb[l];
            }
            out.w -= step * gow;
            out.b -= step * gob;
        }
        net = ReluNet(hidden, out);
        const double cur = mean_loss(net, samples, cfg.loss);
        if (cur < best_loss) {
            best_loss = cur;
            best = net;
        }
    }
    // Final loss never exceeds the initial one: the best snapshot includes
    // the untouched initialization.
    return best;
}

inline double train_accuracy(const ReluNet& net,
                             const std::vector<LabeledSample>& samples) {
    int ok = 0;
    for (const auto& s : samples) {
        const int pred = net.score(s.x) >= 0.0 ? 1 : 0;
        ok += pred == s.y ? 1 : 0;
    }
    return static_cast<double>(ok) / static_cast<double>(samples.size());
}

}  // namespace prae
