#ifndef ONCOBANDIT_MLP_HPP
#define ONCOBANDIT_MLP_HPP

#include "oncobandit/core.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace oncobandit {

/* Multi-head regression network
 * -----------------------------
 * Rectifier hidden layers followed by a linear head with one output per
 * arm. Batches are stored column-wise: one column per example.
 */

struct DenseLayer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;     // out
};

struct MlpParams {
    std::vector<DenseLayer> layers;  // hidden layers, then the output head

    /// He-normal weights for rectifier layers, 1/fan_in variance for the head, zero biases.
    static MlpParams init(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, RngStream& rng) {
        MlpParams p;
        std::size_t fan_in = in;
        for (std::size_t l = 0; l <= hidden.size(); ++l) {
            const bool head = l == hidden.size();
            const std::size_t fan_out = head ? out : hidden[l];
            const double sd = std::sqrt((head ? 1.0 : 2.0) / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
            DenseLayer layer;
            layer.weights.resize(static_cast<Eigen::Index>(fan_out), static_cast<Eigen::Index>(fan_in));
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) layer.weights(r, c) = sd * rng.normal();
            layer.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fan_out));
            p.layers.push_back(std::move(layer));
            fan_in = fan_out;
        }
        return p;
    }

    /// Same shapes, all entries set to `value`.
    MlpParams filled(double value) const {
        MlpParams p = *this;
        for (auto& l : p.layers) {
            l.weights.setConstant(value);
            l.bias.setConstant(value);
        }
        return p;
    }

    std::size_t in_width() const { return static_cast<std::size_t>(layers.front().weights.cols()); }
    std::size_t out_width() const { return static_cast<std::size_t>(layers.back().weights.rows()); }
    std::size_t num_hidden_layers() const { return layers.size() - 1; }

    /// Width of the representation fed to the head.
    std::size_t representation_width() const { return static_cast<std::size_t>(layers.back().weights.cols()); }

    std::size_t num_params() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
        return n;
    }

    Eigen::VectorXd flatten() const {
        Eigen::VectorXd v;
        flatten_into(v);
        return v;
    }

    void flatten_into(Eigen::VectorXd& v) const {
        v.resize(static_cast<Eigen::Index>(num_params()));
        Eigen::Index o = 0;
        for (const auto& l : layers) {
            v.segment(o, l.weights.size()) = l.weights.reshaped();
            o += l.weights.size();
            v.segment(o, l.bias.size()) = l.bias;
            o += l.bias.size();
        }
    }

    void assign(const Eigen::VectorXd& v) {
        if (v.size() != static_cast<Eigen::Index>(num_params())) throw Error("parameter vector size mismatch");
        Eigen::Index o = 0;
        for (auto& l : layers) {
            l.weights.reshaped() = v.segment(o, l.weights.size());
            o += l.weights.size();
            l.bias = v.segment(o, l.bias.size());
            o += l.bias.size();
        }
    }

    bool all_finite() const {
        for (const auto& l : layers)
            if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
        return true;
    }
};

/// Per-hidden-layer multiplicative masks (entries 0 or 1/keep), one column per example.
using DropoutMasks = std::vector<Eigen::MatrixXd>;

struct ForwardCache {
    std::vector<Eigen::MatrixXd> inputs;  // inputs[l] is the input to layer l (after rectifier and mask)
    std::vector<Eigen::MatrixXd> pre;     // pre-activations of hidden layers
    Eigen::MatrixXd outputs;
};

/// Forward pass through the hidden layers only; fills everything in `c`
/// except `outputs`. Storage is reused when the shapes match.
inline void mlp_forward_hidden_into(const MlpParams& p, const Eigen::MatrixXd& x, const DropoutMasks* masks, ForwardCache& c) {
    if (static_cast<std::size_t>(x.rows()) != p.in_width())
        throw Error("mlp input width " + std::to_string(x.rows()) + " != " + std::to_string(p.in_width()));
    const std::size_t depth = p.layers.size();
    c.inputs.resize(depth);
    c.pre.resize(depth - 1);
    c.inputs[0] = x;
    for (std::size_t l = 0; l + 1 < depth; ++l) {
        const auto& layer = p.layers[l];
        c.pre[l].noalias() = layer.weights * c.inputs[l];
        c.pre[l].colwise() += layer.bias;
        c.inputs[l + 1] = c.pre[l].cwiseMax(0.0);
        if (masks) c.inputs[l + 1].array() *= (*masks)[l].array();
    }
}

inline void mlp_forward_batch_into(const MlpParams& p, const Eigen::MatrixXd& x, const DropoutMasks* masks, ForwardCache& c) {
    mlp_forward_hidden_into(p, x, masks, c);
    const auto& head = p.layers.back();
    c.outputs.noalias() = head.weights * c.inputs.back();
    c.outputs.colwise() += head.bias;
}

inline ForwardCache mlp_forward_batch(const MlpParams& p, const Eigen::MatrixXd& x, const DropoutMasks* masks = nullptr) {
    ForwardCache c;
    mlp_forward_batch_into(p, x, masks, c);
    return c;
}

struct MlpOutput {
    Eigen::VectorXd predictions;     // one per arm
    Eigen::VectorXd representation;  // input to the head
};

inline MlpOutput mlp_forward(const MlpParams& p, std::span<const double> x, const DropoutMasks* masks = nullptr) {
    Eigen::MatrixXd col = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    auto c = mlp_forward_batch(p, col, masks);
    return {c.outputs.col(0), c.inputs.back().col(0)};
}

/// d predictions[arm] / d x, by backpropagation.
inline Eigen::VectorXd mlp_input_gradient(const MlpParams& p, std::span<const double> x, std::size_t arm) {
    Eigen::MatrixXd col = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    auto c = mlp_forward_batch(p, col);
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.out_width()));
    delta(static_cast<Eigen::Index>(arm)) = 1.0;
    for (std::size_t l = p.layers.size(); l-- > 0;) {
        Eigen::VectorXd back = p.layers[l].weights.transpose() * delta;
        if (l == 0) return back;
        delta = back.array() * (c.pre[l - 1].col(0).array() > 0.0).cast<double>();
    }
    return delta;
}

/// Mini-batch of (context, arm, reward) triples laid out for the network.
struct Batch {
    Eigen::MatrixXd contexts;          // in x B
    std::vector<std::size_t> actions;  // B
    Eigen::VectorXd rewards;           // B
};

struct LossAndGradient {
    double loss = 0.0;
    MlpParams gradient;
};

/// Buffers reused across training steps so the inner loop does not allocate.
struct MlpWorkspace {
    ForwardCache cache;
    Eigen::MatrixXd delta;
    Eigen::MatrixXd back;
    MlpParams gradient;
};

/// Mean over the batch of (prediction[action] - reward)^2, with its
/// gradient left in `ws.gradient`. Heads of arms not taken by an example
/// receive no gradient from it.
inline double masked_loss_gradient_into(const MlpParams& p, const Batch& b, const DropoutMasks* masks, MlpWorkspace& ws) {
    const auto B = b.contexts.cols();
    mlp_forward_hidden_into(p, b.contexts, masks, ws.cache);
    const auto& c = ws.cache;
    const std::size_t depth = p.layers.size();
    ws.gradient.layers.resize(depth);

    // Only the head row of the taken arm enters the loss, so the output
    // layer is handled one row per example.
    const auto& head = p.layers.back();
    const Eigen::MatrixXd& h = c.inputs.back();
    auto& g_head = ws.gradient.layers.back();
    g_head.weights.setZero(head.weights.rows(), head.weights.cols());
    g_head.bias.setZero(head.bias.size());
    if (depth > 1) ws.delta.resize(h.rows(), B);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < B; ++i) {
        const auto a = static_cast<Eigen::Index>(b.actions[static_cast<std::size_t>(i)]);
        const double err = head.weights.row(a).dot(h.col(i)) + head.bias(a) - b.rewards(i);
        loss += err * err;
        const double d = 2.0 * err / static_cast<double>(B);
        g_head.weights.row(a) += d * h.col(i).transpose();
        g_head.bias(a) += d;
        if (depth > 1) ws.delta.col(i) = d * head.weights.row(a).transpose();
    }
    loss /= static_cast<double>(B);

    for (std::size_t l = depth - 1; l-- > 0;) {
        // ws.delta holds the loss gradient with respect to the output of layer l.
        ws.delta.array() *= (c.pre[l].array() > 0.0).cast<double>();
        if (masks) ws.delta.array() *= (*masks)[l].array();
        ws.gradient.layers[l].weights.noalias() = ws.delta * c.inputs[l].transpose();
        ws.gradient.layers[l].bias = ws.delta.rowwise().sum();
        if (l == 0) break;
        ws.back.noalias() = p.layers[l].weights.transpose() * ws.delta;
        std::swap(ws.delta, ws.back);
    }
    return loss;
}

inline LossAndGradient masked_loss_gradient(const MlpParams& p, const Batch& b, const DropoutMasks* masks = nullptr) {
    MlpWorkspace ws;
    const double loss = masked_loss_gradient_into(p, b, masks, ws);
    return {loss, std::move(ws.gradient)};
}

/* Training schedules
 * ------------------
 * RMSProp with learning rate lr0 / (1 + t / tau). Fixed keeps lr0;
 * Rms2 restarts t at every training period; Rms3 never restarts.
 */

struct TrainSchedule {
    enum class Kind { Fixed, Rms2, Rms3 };

    Kind kind = Kind::Fixed;
    double initial_rate = 0.01;
    double tau = 100.0;
    double rms_decay = 0.9;
    double rms_epsilon = 1e-10;
    double clip_norm = 5.0;

    static TrainSchedule fixed(double rate = 0.01) { return {Kind::Fixed, rate}; }
    static TrainSchedule rms2(double rate = 0.1) { return {Kind::Rms2, rate}; }
    static TrainSchedule rms3(double rate = 1.0) { return {Kind::Rms3, rate}; }

    double rate(std::uint64_t t) const {
        if (kind == Kind::Fixed) return initial_rate;
        return initial_rate / (1.0 + static_cast<double>(t) / tau);
    }
};

inline std::string_view to_string(TrainSchedule::Kind k) {
    switch (k) {
    case TrainSchedule::Kind::Fixed: return "fixed";
    case TrainSchedule::Kind::Rms2: return "rms2";
    case TrainSchedule::Kind::Rms3: return "rms3";
    }
    return "?";
}

inline TrainSchedule::Kind parse_schedule_kind(std::string_view s) {
    if (s == "fixed") return TrainSchedule::Kind::Fixed;
    if (s == "rms2") return TrainSchedule::Kind::Rms2;
    if (s == "rms3") return TrainSchedule::Kind::Rms3;
    throw Error("unknown schedule '" + std::string(s) + "' (expected fixed|rms2|rms3)");
}

/// RMSProp over a flat parameter vector. Mean squares start at 1.
class RmsProp {
public:
    explicit RmsProp(TrainSchedule schedule = {}) : schedule_(schedule) {}

    const TrainSchedule& schedule() const { return schedule_; }

    /// Called at the start of each training period.
    void begin_period() {
        if (schedule_.kind == TrainSchedule::Kind::Rms2) clock_ = 0;
    }

    /// Rate the next step will use.
    double current_rate() const { return schedule_.rate(clock_); }
    std::uint64_t clock() const { return clock_; }

    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
        if (mean_square_.size() != params.size()) mean_square_ = Eigen::VectorXd::Ones(params.size());
        const double norm = grad.norm();
        const double clip = schedule_.clip_norm > 0.0 && norm > schedule_.clip_norm ? schedule_.clip_norm / norm : 1.0;
        const double rate = current_rate();
        mean_square_ = schedule_.rms_decay * mean_square_ + (1.0 - schedule_.rms_decay) * (clip * grad).cwiseAbs2();
        params.array() -= rate * clip * grad.array() / (mean_square_.array() + schedule_.rms_epsilon).sqrt();
        ++clock_;
    }

private:
    TrainSchedule schedule_;
    Eigen::VectorXd mean_square_;
    std::uint64_t clock_ = 0;
};

} // namespace oncobandit

#endif // ONCOBANDIT_MLP_HPP
