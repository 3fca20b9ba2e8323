#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "envclass/error.hpp"
#include "envclass/rng.hpp"

namespace envclass {

struct DnnConfig {
    std::vector<size_t> hidden = {64, 32, 16, 8};
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    size_t batch_size = 64;
    size_t max_epochs = 200;
    size_t patience = 10;  // epochs without validation improvement before stopping
};

struct DnnTrainReport {
    size_t epochs_run = 0;
    size_t best_epoch = 0;
    double best_val_loss = 0.0;
    bool early_stopped = false;
};

/// Fully connected network: ReLU hidden layers, softmax output, trained with
/// mini-batch Adam on mean cross-entropy. All math is double precision and
/// every random draw comes from one seeded generator, so training is
/// reproducible bit for bit.
class Mlp {
public:
    struct Layer {
        size_t in = 0;
        size_t out = 0;
        std::vector<double> w;  // row-major, w[r * in + c]
        std::vector<double> b;
    };

    struct LayerGrads {
        std::vector<double> w;
        std::vector<double> b;
    };

    Mlp() = default;

    /// `widths` includes the input and output layer, e.g. {72, 64, 32, 16, 8, 3}.
    /// Weights and biases initialize uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    Mlp(const std::vector<size_t>& widths, Rng& rng) {
        if (widths.size() < 2) throw Error("network needs at least input and output widths");
        for (size_t w : widths) {
            if (w == 0) throw Error("network layer width must be positive");
        }
        for (size_t l = 0; l + 1 < widths.size(); ++l) {
            Layer layer;
            layer.in = widths[l];
            layer.out = widths[l + 1];
            double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
            layer.w.resize(layer.out * layer.in);
            layer.b.resize(layer.out);
            for (double& v : layer.w) v = rng.uniform(-bound, bound);
            for (double& v : layer.b) v = rng.uniform(-bound, bound);
            layers_.push_back(std::move(layer));
        }
    }

    size_t input_size() const { return layers_.front().in; }
    size_t output_size() const { return layers_.back().out; }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    /// Class probabilities for one input.
    std::vector<double> forward(const std::vector<double>& x) const {
        check_input(x);
        std::vector<double> a = x;
        std::vector<double> z;
        for (size_t l = 0; l < layers_.size(); ++l) {
            affine(layers_[l], a, z);
            if (l + 1 < layers_.size()) {
                for (double& v : z) v = v > 0.0 ? v : 0.0;
            }
            a.swap(z);
        }
        softmax_in_place(a);
        return a;
    }

    size_t predict(const std::vector<double>& x) const {
        std::vector<double> p = forward(x);
        size_t best = 0;
        for (size_t k = 1; k < p.size(); ++k) {
            if (p[k] > p[best]) best = k;
        }
        return best;
    }

    /// Pre-activation vectors of every layer for one input, in layer order.
    /// Used by tests to keep finite-difference probes away from ReLU kinks.
    std::vector<std::vector<double>> preactivations(const std::vector<double>& x) const {
        check_input(x);
        std::vector<std::vector<double>> zs;
        std::vector<double> a = x;
        std::vector<double> z;
        for (size_t l = 0; l < layers_.size(); ++l) {
            affine(layers_[l], a, z);
            zs.push_back(z);
            if (l + 1 < layers_.size()) {
                for (double& v : z) v = v > 0.0 ? v : 0.0;
            }
            a.swap(z);
        }
        return zs;
    }

    /// Mean cross-entropy over a batch.
    double loss(const std::vector<std::vector<double>>& xs, const std::vector<size_t>& ys) const {
        if (xs.empty() || xs.size() != ys.size()) throw Error("loss: bad batch shape");
        double total = 0.0;
        for (size_t i = 0; i < xs.size(); ++i) {
            std::vector<double> p = forward(xs[i]);
            total += -std::log(std::max(p.at(ys[i]), 1e-300));
        }
        return total / static_cast<double>(xs.size());
    }

    /// Analytic gradients of the mean cross-entropy over a batch, shaped like
    /// the layers. Optionally reports the batch loss computed in the same pass.
    std::vector<LayerGrads> gradients(const std::vector<std::vector<double>>& xs,
                                      const std::vector<size_t>& ys,
                                      double* batch_loss = nullptr) const {
        if (xs.empty() || xs.size() != ys.size()) throw Error("gradients: bad batch shape");
        std::vector<LayerGrads> grads(layers_.size());
        for (size_t l = 0; l < layers_.size(); ++l) {
            grads[l].w.assign(layers_[l].w.size(), 0.0);
            grads[l].b.assign(layers_[l].b.size(), 0.0);
        }
        const double inv_n = 1.0 / static_cast<double>(xs.size());
        double total_loss = 0.0;

        std::vector<std::vector<double>> activations(layers_.size() + 1);
        std::vector<double> z;
        std::vector<double> delta, delta_prev;
        for (size_t i = 0; i < xs.size(); ++i) {
            check_input(xs[i]);
            activations[0] = xs[i];
            for (size_t l = 0; l < layers_.size(); ++l) {
                affine(layers_[l], activations[l], z);
                if (l + 1 < layers_.size()) {
                    for (double& v : z) v = v > 0.0 ? v : 0.0;
                }
                activations[l + 1] = z;
            }
            std::vector<double>& p = activations.back();
            softmax_in_place(p);
            total_loss += -std::log(std::max(p.at(ys[i]), 1e-300));

            // Output delta for softmax + cross-entropy: p - onehot(y).
            delta = p;
            delta[ys[i]] -= 1.0;
            for (size_t li = layers_.size(); li-- > 0;) {
                const Layer& layer = layers_[li];
                const std::vector<double>& a_in = activations[li];
                for (size_t r = 0; r < layer.out; ++r) {
                    double d = delta[r] * inv_n;
                    grads[li].b[r] += d;
                    double* gw = grads[li].w.data() + r * layer.in;
                    for (size_t c = 0; c < layer.in; ++c) gw[c] += d * a_in[c];
                }
                if (li == 0) break;
                delta_prev.assign(layer.in, 0.0);
                for (size_t r = 0; r < layer.out; ++r) {
                    const double* wr = layer.w.data() + r * layer.in;
                    double d = delta[r];
                    for (size_t c = 0; c < layer.in; ++c) delta_prev[c] += wr[c] * d;
                }
                // ReLU gate of the layer below (its post-activation is a_in).
                for (size_t c = 0; c < layer.in; ++c) {
                    if (a_in[c] <= 0.0) delta_prev[c] = 0.0;
                }
                delta.swap(delta_prev);
            }
        }
        if (batch_loss) *batch_loss = total_loss * inv_n;
        return grads;
    }

    /// Trains a fresh network. Validation loss is checked after every epoch;
    /// training stops once it fails to improve for `patience` epochs and the
    /// best-validation parameters are restored. An empty validation set
    /// disables early stopping.
    static Mlp train(const std::vector<std::vector<double>>& x_train,
                     const std::vector<size_t>& y_train,
                     const std::vector<std::vector<double>>& x_val,
                     const std::vector<size_t>& y_val, size_t n_classes, const DnnConfig& config,
                     std::uint64_t seed, DnnTrainReport* report = nullptr) {
        if (x_train.empty()) throw Error("network training: empty training set");
        if (x_train.size() != y_train.size()) {
            throw Error("network training: feature/label row count mismatch");
        }
        if (config.batch_size == 0) throw Error("network training: batch_size must be positive");
        std::vector<size_t> widths;
        widths.push_back(x_train[0].size());
        widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
        widths.push_back(n_classes);

        Rng rng(seed);
        Mlp net(widths, rng);
        AdamState adam(net);

        std::vector<size_t> order(x_train.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;

        const bool use_val = !x_val.empty();
        double best_val = std::numeric_limits<double>::infinity();
        std::vector<Layer> best_layers = net.layers_;
        size_t best_epoch = 0;
        size_t stale = 0;

        std::vector<std::vector<double>> batch_x;
        std::vector<size_t> batch_y;
        size_t epoch = 0;
        for (; epoch < config.max_epochs; ++epoch) {
            rng.shuffle(order);
            for (size_t start = 0; start < order.size(); start += config.batch_size) {
                size_t end = std::min(order.size(), start + config.batch_size);
                batch_x.clear();
                batch_y.clear();
                for (size_t i = start; i < end; ++i) {
                    batch_x.push_back(x_train[order[i]]);
                    batch_y.push_back(y_train[order[i]]);
                }
                double batch_loss = 0.0;
                std::vector<LayerGrads> grads = net.gradients(batch_x, batch_y, &batch_loss);
                if (!std::isfinite(batch_loss)) {
                    throw Error("network training diverged: non-finite loss at epoch " +
                                std::to_string(epoch) + ", batch " +
                                std::to_string(start / config.batch_size) +
                                " (learning rate " + std::to_string(config.learning_rate) + ")");
                }
                adam.step(net, grads, config);
            }
            if (use_val) {
                double val_loss = net.loss(x_val, y_val);
                if (val_loss < best_val) {
                    best_val = val_loss;
                    best_layers = net.layers_;
                    best_epoch = epoch;
                    stale = 0;
                } else {
                    ++stale;
                    if (stale >= config.patience) {
                        ++epoch;
                        break;
                    }
                }
            }
        }
        if (use_val) net.layers_ = std::move(best_layers);
        if (report) {
            report->epochs_run = epoch;
            report->best_epoch = use_val ? best_epoch : (epoch == 0 ? 0 : epoch - 1);
            report->best_val_loss = use_val ? best_val : 0.0;
            report->early_stopped = use_val && epoch < config.max_epochs;
        }
        return net;
    }

    nlohmann::json to_json() const {
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& l : layers_) {
            layers.push_back(
                nlohmann::json{{"in", l.in}, {"out", l.out}, {"w", l.w}, {"b", l.b}});
        }
        return nlohmann::json{{"layers", layers}};
    }

    static Mlp from_json(const nlohmann::json& j) {
        Mlp net;
        for (const auto& jl : j.at("layers")) {
            Layer l;
            l.in = jl.at("in").get<size_t>();
            l.out = jl.at("out").get<size_t>();
            l.w = jl.at("w").get<std::vector<double>>();
            l.b = jl.at("b").get<std::vector<double>>();
            if (l.w.size() != l.in * l.out || l.b.size() != l.out) {
                throw Error("network JSON: layer parameter shape mismatch");
            }
            net.layers_.push_back(std::move(l));
        }
        if (net.layers_.empty()) throw Error("network JSON: empty layer list");
        for (size_t l = 0; l + 1 < net.layers_.size(); ++l) {
            if (net.layers_[l].out != net.layers_[l + 1].in) {
                throw Error("network JSON: layer widths do not chain");
            }
        }
        return net;
    }

private:
    std::vector<Layer> layers_;

    struct AdamState {
        std::vector<LayerGrads> m;
        std::vector<LayerGrads> v;
        std::uint64_t t = 0;

        explicit AdamState(const Mlp& net) {
            m.resize(net.layers_.size());
            v.resize(net.layers_.size());
            for (size_t l = 0; l < net.layers_.size(); ++l) {
                m[l].w.assign(net.layers_[l].w.size(), 0.0);
                m[l].b.assign(net.layers_[l].b.size(), 0.0);
                v[l].w.assign(net.layers_[l].w.size(), 0.0);
                v[l].b.assign(net.layers_[l].b.size(), 0.0);
            }
        }

        void step(Mlp& net, const std::vector<LayerGrads>& grads, const DnnConfig& c) {
            ++t;
            double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
            double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
            for (size_t l = 0; l < net.layers_.size(); ++l) {
                update(net.layers_[l].w, grads[l].w, m[l].w, v[l].w, c, bc1, bc2);
                update(net.layers_[l].b, grads[l].b, m[l].b, v[l].b, c, bc1, bc2);
            }
        }

        static void update(std::vector<double>& params, const std::vector<double>& g,
                           std::vector<double>& m1, std::vector<double>& m2, const DnnConfig& c,
                           double bc1, double bc2) {
            for (size_t i = 0; i < params.size(); ++i) {
                m1[i] = c.beta1 * m1[i] + (1.0 - c.beta1) * g[i];
                m2[i] = c.beta2 * m2[i] + (1.0 - c.beta2) * g[i] * g[i];
                double mhat = m1[i] / bc1;
                double vhat = m2[i] / bc2;
                params[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
            }
        }
    };

    void check_input(const std::vector<double>& x) const {
        if (layers_.empty()) throw Error("network is uninitialized");
        if (x.size() != layers_.front().in) {
            throw Error("network input: expected " + std::to_string(layers_.front().in) +
                        " features, got " + std::to_string(x.size()));
        }
    }

    static void affine(const Layer& layer, const std::vector<double>& a, std::vector<double>& z) {
        z.assign(layer.out, 0.0);
        for (size_t r = 0; r < layer.out; ++r) {
            const double* wr = layer.w.data() + r * layer.in;
            double acc = layer.b[r];
            for (size_t c = 0; c < layer.in; ++c) acc += wr[c] * a[c];
            z[r] = acc;
        }
    }

    static void softmax_in_place(std::vector<double>& z) {
        double mx = z[0];
        for (double v : z) mx = std::max(mx, v);
        double sum = 0.0;
        for (double& v : z) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (double& v : z) v /= sum;
    }
};

}  // namespace envclass
