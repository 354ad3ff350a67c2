#ifndef ONCOBANDIT_AGENTS_HPP
#define ONCOBANDIT_AGENTS_HPP

#include "oncobandit/agent_spec.hpp"
#include "oncobandit/bbb.hpp"
#include "oncobandit/guidelines.hpp"
#include "oncobandit/mlp.hpp"
#include "oncobandit/nig.hpp"
#include "oncobandit/rewards.hpp"

#include <cmath>
#include <memory>
#include <optional>
#include <vector>

namespace oncobandit {

/* Replay buffer
 * ------------- */

class ReplayBuffer {
public:
    void add(std::span<const double> context, DrugId action, double reward, std::vector<std::uint8_t> mask = {}) {
        if (!contexts_.empty() && context.size() != contexts_.front().size())
            throw Error("replay buffer context width changed");
        contexts_.emplace_back(context.begin(), context.end());
        actions_.push_back(action.index);
        rewards_.push_back(reward);
        masks_.push_back(std::move(mask));
    }

    std::size_t size() const { return contexts_.size(); }
    bool empty() const { return contexts_.empty(); }
    const std::vector<double>& context(std::size_t i) const { return contexts_[i]; }
    std::size_t action(std::size_t i) const { return actions_[i]; }
    double reward(std::size_t i) const { return rewards_[i]; }
    const std::vector<std::uint8_t>& mask(std::size_t i) const { return masks_[i]; }

    /// Indices whose mask includes `replica`.
    std::vector<std::size_t> members(std::size_t replica) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < size(); ++i)
            if (replica < masks_[i].size() && masks_[i][replica]) out.push_back(i);
        return out;
    }

    Batch gather(const std::vector<std::size_t>& idx) const {
        Batch b;
        gather_into(idx, b);
        return b;
    }

    void gather_into(const std::vector<std::size_t>& idx, Batch& b) const {
        const auto width = static_cast<Eigen::Index>(contexts_.front().size());
        b.contexts.resize(width, static_cast<Eigen::Index>(idx.size()));
        b.rewards.resize(static_cast<Eigen::Index>(idx.size()));
        b.actions.resize(idx.size());
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const auto i = idx[j];
            b.contexts.col(static_cast<Eigen::Index>(j)) =
                Eigen::Map<const Eigen::VectorXd>(contexts_[i].data(), width);
            b.actions[j] = actions_[i];
            b.rewards(static_cast<Eigen::Index>(j)) = rewards_[i];
        }
    }

    /// `size` draws with replacement from `pool`, or from the whole buffer if `pool` is null.
    Batch sample(std::size_t size, const std::vector<std::size_t>* pool, RngStream& rng) const {
        Batch b;
        sample_into(b, size, pool, rng);
        return b;
    }

    void sample_into(Batch& b, std::size_t size, const std::vector<std::size_t>* pool, RngStream& rng) const {
        const std::size_t n = pool ? pool->size() : this->size();
        if (n == 0) throw Error("sampling from an empty replay buffer");
        std::vector<std::size_t> idx(size);
        for (auto& i : idx) {
            const auto j = rng.uniform_index(n);
            i = pool ? (*pool)[j] : j;
        }
        gather_into(idx, b);
    }

private:
    std::vector<std::vector<double>> contexts_;
    std::vector<std::size_t> actions_;
    std::vector<double> rewards_;
    std::vector<std::vector<std::uint8_t>> masks_;
};

/* Network training
 * ---------------- */

inline void sample_dropout_masks_into(const MlpParams& p, Eigen::Index columns, double keep, RngStream& rng,
                                      DropoutMasks& masks) {
    masks.resize(p.layers.size() - 1);
    for (std::size_t l = 0; l + 1 < p.layers.size(); ++l) {
        Eigen::MatrixXd& m = masks[l];
        m.resize(p.layers[l].weights.rows(), columns);
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    }
}

inline DropoutMasks sample_dropout_masks(const MlpParams& p, Eigen::Index columns, double keep, RngStream& rng) {
    DropoutMasks masks;
    sample_dropout_masks_into(p, columns, keep, rng, masks);
    return masks;
}

/// Buffers kept between training periods.
struct TrainScratch {
    Batch batch;
    DropoutMasks masks;
    MlpWorkspace workspace;
    Eigen::VectorXd flat;
    Eigen::VectorXd grad;
};

/// One training period: `steps` RMSProp steps on mini-batches of `batch`
/// examples drawn with replacement. With keep < 1 a fresh dropout mask is
/// drawn per step from `dropout_rng`.
inline void mlp_train(MlpParams& params, RmsProp& opt, const ReplayBuffer& buffer, std::size_t steps,
                      std::size_t batch, RngStream& batch_rng, const std::vector<std::size_t>* pool = nullptr,
                      double keep = 1.0, RngStream* dropout_rng = nullptr, TrainScratch* scratch = nullptr) {
    if (buffer.empty()) throw Error("mlp_train on an empty buffer");
    opt.begin_period();
    TrainScratch local;
    auto& [b, masks, ws, flat, grad] = scratch ? *scratch : local;
    for (std::size_t s = 0; s < steps; ++s) {
        buffer.sample_into(b, batch, pool, batch_rng);
        if (keep < 1.0) sample_dropout_masks_into(params, b.contexts.cols(), keep, *dropout_rng, masks);
        masked_loss_gradient_into(params, b, keep < 1.0 ? &masks : nullptr, ws);
        params.flatten_into(flat);
        ws.gradient.flatten_into(grad);
        opt.step(flat, grad);
        params.assign(flat);
    }
}

/// Argmax of the network's predictions; ties to the lowest index.
inline DrugId argmax_arm(const Eigen::VectorXd& predictions) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < predictions.size(); ++i)
        if (predictions(i) > predictions(best)) best = i;
    return DrugId{static_cast<std::size_t>(best)};
}

inline DrugId greedy_act(const MlpParams& p, std::span<const double> x) {
    return argmax_arm(mlp_forward(p, x).predictions);
}

inline DrugId dropout_act(const MlpParams& p, std::span<const double> x, double keep, RngStream& rng) {
    if (!(keep > 0.0 && keep <= 1.0)) throw Error("keep probability must be in (0, 1]");
    if (keep == 1.0) return greedy_act(p, x);
    const auto masks = sample_dropout_masks(p, 1, keep, rng);
    return argmax_arm(mlp_forward(p, x, &masks).predictions);
}

inline DrugId uniform_act(std::size_t k, RngStream& rng) { return DrugId{rng.uniform_index(k)}; }

struct ParamNoiseDecision {
    DrugId action;
    double sigma;  // adapted scale for the next decision
};

/// Greedy action of a Gaussian-perturbed copy of the network. The scale
/// grows by 1% when the perturbed action agrees with the unperturbed one
/// and shrinks by 1.01^((1 - level) / level) when it disagrees, so the
/// disagreement rate settles near `level`.
inline ParamNoiseDecision param_noise_act(const MlpParams& p, std::span<const double> x, double sigma, double level,
                                          RngStream& rng) {
    if (!(sigma >= 0.0)) throw Error("parameter noise scale must be >= 0");
    if (!(level > 0.0 && level < 1.0)) throw Error("parameter noise level must be in (0, 1)");
    Eigen::VectorXd flat = p.flatten();
    for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) += sigma * rng.normal();
    MlpParams noisy = p;
    noisy.assign(flat);
    const DrugId perturbed = greedy_act(noisy, x);
    const DrugId clean = greedy_act(p, x);
    return {perturbed, perturbed == clean ? sigma * 1.01 : sigma / std::pow(1.01, (1.0 - level) / level)};
}

inline DrugId bbb_act(const VariationalMlp& q, std::span<const double> x, RngStream& rng) {
    return greedy_act(q.sample(rng), x);
}

/* Agents
 * ------ */

/// What an agent sees at a decision. `unit` is only read by the
/// reference agents (guideline, oracle).
struct Decision {
    const Context& context;
    UnitId unit;
};

class Agent {
public:
    virtual ~Agent() = default;
    virtual const AgentSpec& spec() const = 0;
    virtual DrugId act(const Decision& d) = 0;
    virtual void update(const Decision& d, DrugId action, double reward) = 0;
};

class UniformAgent final : public Agent {
public:
    UniformAgent(std::size_t k, RngStream stream) : spec_(AgentSpec::defaults(AgentFamily::Uniform)), k_(k), rng_(stream.derive("act")) {}
    const AgentSpec& spec() const override { return spec_; }
    DrugId act(const Decision&) override { return uniform_act(k_, rng_); }
    void update(const Decision&, DrugId, double) override {}

private:
    AgentSpec spec_;
    std::size_t k_;
    RngStream rng_;
};

class GuidelineAgent final : public Agent {
public:
    GuidelineAgent(const Dataset& ds, const RuleSet& rules)
        : spec_(AgentSpec::defaults(AgentFamily::Guideline)), ds_(ds), rules_(rules, ds) {}
    const AgentSpec& spec() const override { return spec_; }
    DrugId act(const Decision& d) override { return rules_.act(ds_, d.unit); }
    void update(const Decision&, DrugId, double) override {}

private:
    AgentSpec spec_;
    const Dataset& ds_;
    BoundRules rules_;
};

/// Plays the per-unit optimal action; cumulative regret is zero by construction.
class OracleAgent final : public Agent {
public:
    OracleAgent(const Dataset& ds, RewardKind kind) : spec_(AgentSpec::defaults(AgentFamily::Oracle)), ds_(ds), kind_(kind) {}
    const AgentSpec& spec() const override { return spec_; }
    DrugId act(const Decision& d) override { return optimal_action(ds_, d.unit, kind_); }
    void update(const Decision&, DrugId, double) override {}

private:
    AgentSpec spec_;
    const Dataset& ds_;
    RewardKind kind_;
};

/// Learning agents share a forced-exploration prologue: the first 2k
/// decisions play every arm twice, round-robin. Training runs after every
/// `training_period` updates.
class LearningAgent : public Agent {
public:
    LearningAgent(AgentSpec spec, std::size_t k) : spec_(std::move(spec)), k_(k) {
        spec_.validate();
        if (k_ == 0) throw Error("agent needs at least one arm");
    }

    const AgentSpec& spec() const final { return spec_; }
    std::size_t num_arms() const { return k_; }
    std::size_t decisions() const { return decisions_; }

    DrugId act(const Decision& d) final {
        const auto t = decisions_++;
        if (t < 2 * k_) return DrugId{t % k_};
        return policy(d.context.values());
    }

    void update(const Decision& d, DrugId action, double reward) final {
        if (action.index >= k_) throw Error("action out of range");
        observe(d.context.values(), action, reward);
        ++updates_;
        const auto period = spec_.net.training_period;
        if (is_neural(spec_.family) && period > 0 && updates_ % period == 0) train();
    }

    virtual DrugId policy(std::span<const double> x) = 0;
    virtual void observe(std::span<const double> x, DrugId action, double reward) = 0;
    virtual void train() {}

protected:
    AgentSpec spec_;
    std::size_t k_;
    std::size_t decisions_ = 0;
    std::size_t updates_ = 0;
};

class LinearTsAgent final : public LearningAgent {
public:
    LinearTsAgent(AgentSpec spec, std::size_t k, std::size_t width, RngStream stream)
        : LearningAgent(std::move(spec), k), rng_(stream.derive("thompson")) {
        arms_.assign(k, NigPosterior(width + 1, spec_.prior));
    }

    DrugId policy(std::span<const double> x) override { return nig_thompson_act(arms_, with_intercept(x), rng_); }

    void observe(std::span<const double> x, DrugId a, double r) override { arms_[a.index].observe(with_intercept(x), r); }

    const std::vector<NigPosterior>& posteriors() const { return arms_; }

private:
    std::vector<NigPosterior> arms_;
    RngStream rng_;
};

/// Network, optimizer and the streams that feed its training.
struct NetworkLearner {
    MlpParams params;
    RmsProp optimizer;
    RngStream batch_rng;
    TrainScratch scratch;

    NetworkLearner(const AgentSpec& spec, std::size_t k, std::size_t width, const RngStream& stream,
                   std::size_t replica, std::optional<MlpParams> initial)
        : optimizer(spec.net.schedule),
          batch_rng(replica == 0 ? stream.derive("batch") : stream.derive("batch", replica)) {
        RngStream init = replica == 0 ? stream.derive("init") : stream.derive("init", replica);
        params = initial ? std::move(*initial) : MlpParams::init(width, spec.net.hidden, k, init);
        if (params.in_width() != width || params.out_width() != k) throw Error("network shape does not match the bandit");
    }

    void train(const AgentSpec& spec, const ReplayBuffer& buffer, const std::vector<std::size_t>* pool = nullptr,
               double keep = 1.0, RngStream* dropout_rng = nullptr) {
        if (buffer.empty() || (pool && pool->empty())) return;
        mlp_train(params, optimizer, buffer, spec.net.train_steps, spec.net.batch_size, batch_rng, pool, keep, dropout_rng,
                  &scratch);
    }
};

class NeuralGreedyAgent final : public LearningAgent {
public:
    NeuralGreedyAgent(AgentSpec spec, std::size_t k, std::size_t width, RngStream stream,
                      std::optional<MlpParams> initial = std::nullopt)
        : LearningAgent(std::move(spec), k), net_(spec_, k, width, stream, 0, std::move(initial)) {}

    DrugId policy(std::span<const double> x) override { return greedy_act(net_.params, x); }
    void observe(std::span<const double> x, DrugId a, double r) override { buffer_.add(x, a, r); }
    void train() override { net_.train(spec_, buffer_); }

    const MlpParams& params() const { return net_.params; }
    const RmsProp& optimizer() const { return net_.optimizer; }

private:
    NetworkLearner net_;
    ReplayBuffer buffer_;
};

class DropoutAgent final : public LearningAgent {
public:
    DropoutAgent(AgentSpec spec, std::size_t k, std::size_t width, RngStream stream,
                 std::optional<MlpParams> initial = std::nullopt)
        : LearningAgent(std::move(spec), k),
          net_(spec_, k, width, stream, 0, std::move(initial)),
          act_rng_(stream.derive("dropout-act")),
          train_rng_(stream.derive("dropout-train")) {}

    DrugId policy(std::span<const double> x) override {
        return dropout_act(net_.params, x, spec_.keep_probability, act_rng_);
    }
    void observe(std::span<const double> x, DrugId a, double r) override { buffer_.add(x, a, r); }
    void train() override { net_.train(spec_, buffer_, nullptr, spec_.keep_probability, &train_rng_); }

    const MlpParams& params() const { return net_.params; }

private:
    NetworkLearner net_;
    ReplayBuffer buffer_;
    RngStream act_rng_;
    RngStream train_rng_;
};

class ParamNoiseAgent final : public LearningAgent {
public:
    ParamNoiseAgent(AgentSpec spec, std::size_t k, std::size_t width, RngStream stream,
                    std::optional<MlpParams> initial = std::nullopt)
        : LearningAgent(std::move(spec), k),
          net_(spec_, k, width, stream, 0, std::move(initial)),
          noise_rng_(stream.derive("noise")),
          sigma_(spec_.noise_sigma) {}

    DrugId policy(std::span<const double> x) override {
        const auto d = param_noise_act(net_.params, x, sigma_, spec_.noise_level, noise_rng_);
        sigma_ = d.sigma;
        return d.action;
    }
    void observe(std::span<const double> x, DrugId a, double r) override { buffer_.add(x, a, r); }
    void train() override { net_.train(spec_, buffer_); }

    double sigma() const { return sigma_; }
    const MlpParams& params() const { return net_.params; }

private:
    NetworkLearner net_;
    ReplayBuffer buffer_;
    RngStream noise_rng_;
    double sigma_;
};

/// q independently trained networks; each data point joins each replica's
/// training set with probability p (at least one replica always gets it).
/// Each decision follows one replica chosen uniformly.
class BootstrappedAgent final : public LearningAgent {
public:
    BootstrappedAgent(AgentSpec spec, std::size_t k, std::size_t width, RngStream stream)
        : LearningAgent(std::move(spec), k), mask_rng_(stream.derive("bootstrap-mask")), pick_rng_(stream.derive("replica")) {
        for (std::size_t i = 0; i < spec_.replicas; ++i) replicas_.emplace_back(spec_, k, width, stream, i, std::nullopt);
    }

    DrugId policy(std::span<const double> x) override {
        const auto i = pick_rng_.uniform_index(replicas_.size());
        return greedy_act(replicas_[i].params, x);
    }

    void observe(std::span<const double> x, DrugId a, double r) override {
        std::vector<std::uint8_t> mask(replicas_.size());
        bool any = false;
        for (auto& m : mask) {
            m = mask_rng_.bernoulli(spec_.inclusion_probability) ? 1 : 0;
            any = any || m;
        }
        if (!any) mask[mask_rng_.uniform_index(mask.size())] = 1;
        buffer_.add(x, a, r, std::move(mask));
    }

    void train() override {
        for (std::size_t i = 0; i < replicas_.size(); ++i) {
            const auto pool = buffer_.members(i);
            replicas_[i].train(spec_, buffer_, &pool);
        }
    }

    const ReplayBuffer& buffer() const { return buffer_; }
    std::size_t num_replicas() const { return replicas_.size(); }

private:
    std::vector<NetworkLearner> replicas_;
    ReplayBuffer buffer_;
    RngStream mask_rng_;
    RngStream pick_rng_;
};

/// Thompson sampling with per-arm conjugate posteriors over the network's
/// last hidden representation. Posteriors are rebuilt from the whole buffer
/// after each retraining.
class NeuralLinearAgent final : public LearningAgent {
public:
    NeuralLinearAgent(AgentSpec spec, std::size_t k, std::size_t width, RngStream stream,
                      std::optional<MlpParams> initial = std::nullopt)
        : LearningAgent(std::move(spec), k),
          net_(spec_, k, width, stream, 0, std::move(initial)),
          rng_(stream.derive("thompson")) {
        arms_.assign(k, NigPosterior(net_.params.representation_width() + 1, spec_.prior));
    }

    DrugId policy(std::span<const double> x) override { return nig_thompson_act(arms_, representation(x), rng_); }

    void observe(std::span<const double> x, DrugId a, double r) override {
        buffer_.add(x, a, r);
        arms_[a.index].observe(representation(x), r);
    }

    void train() override {
        net_.train(spec_, buffer_);
        rebuild_posteriors();
    }

    void rebuild_posteriors() {
        arms_.assign(k_, NigPosterior(net_.params.representation_width() + 1, spec_.prior));
        if (buffer_.empty()) return;
        std::vector<std::size_t> all(buffer_.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        const Batch b = buffer_.gather(all);
        const auto cache = mlp_forward_batch(net_.params, b.contexts);
        const Eigen::MatrixXd& z = cache.inputs.back();
        std::vector<double> row(static_cast<std::size_t>(z.rows()) + 1, 1.0);
        for (Eigen::Index i = 0; i < z.cols(); ++i) {
            for (Eigen::Index j = 0; j < z.rows(); ++j) row[static_cast<std::size_t>(j)] = z(j, i);
            arms_[b.actions[static_cast<std::size_t>(i)]].accumulate(row, b.rewards(i));
        }
        for (auto& a : arms_) a.refresh();
    }

    const std::vector<NigPosterior>& posteriors() const { return arms_; }
    const MlpParams& params() const { return net_.params; }
    const ReplayBuffer& buffer() const { return buffer_; }

private:
    std::vector<double> representation(std::span<const double> x) const {
        const auto out = mlp_forward(net_.params, x);
        return with_intercept(std::span<const double>(out.representation.data(), static_cast<std::size_t>(out.representation.size())));
    }

    NetworkLearner net_;
    ReplayBuffer buffer_;
    std::vector<NigPosterior> arms_;
    RngStream rng_;
};

class BayesByBackpropAgent final : public LearningAgent {
public:
    BayesByBackpropAgent(AgentSpec spec, std::size_t k, std::size_t width, RngStream stream)
        : LearningAgent(std::move(spec), k),
          optimizer_(spec_.net.schedule),
          batch_rng_(stream.derive("batch")),
          train_rng_(stream.derive("bbb-train")),
          act_rng_(stream.derive("bbb-act")) {
        RngStream init = stream.derive("init");
        q_ = VariationalMlp::init(width, spec_.net.hidden, k, spec_.bbb_init_std, init);
    }

    DrugId policy(std::span<const double> x) override { return bbb_act(q_, x, act_rng_); }
    void observe(std::span<const double> x, DrugId a, double r) override { buffer_.add(x, a, r); }

    void train() override {
        if (buffer_.empty()) return;
        optimizer_.begin_period();
        const double n = static_cast<double>(buffer_.size());
        for (std::size_t s = 0; s < spec_.net.train_steps; ++s) {
            buffer_.sample_into(batch_, spec_.net.batch_size, nullptr, batch_rng_);
            bbb_train_step(q_, optimizer_, batch_, spec_.bbb_noise_sigma, n, train_rng_, &workspace_);
        }
    }

    const VariationalMlp& variational() const { return q_; }
    VariationalMlp& variational() { return q_; }

private:
    VariationalMlp q_;
    RmsProp optimizer_;
    ReplayBuffer buffer_;
    RngStream batch_rng_;
    RngStream train_rng_;
    RngStream act_rng_;
    Batch batch_;
    MlpWorkspace workspace_;
};

/// Everything an agent may need at construction.
struct AgentContext {
    const Dataset& dataset;
    const RuleSet* rules = nullptr;  // required by the guideline agent
    RewardKind reward = RewardKind::DiffBest;
    std::size_t context_width = 0;
    RngStream stream;  // the agent's named stream
};

inline std::unique_ptr<Agent> make_agent(const AgentSpec& spec, const AgentContext& ctx) {
    const std::size_t k = ctx.dataset.num_drugs();
    const std::size_t w = ctx.context_width;
    switch (spec.family) {
    case AgentFamily::Uniform: return std::make_unique<UniformAgent>(k, ctx.stream);
    case AgentFamily::Oracle: return std::make_unique<OracleAgent>(ctx.dataset, ctx.reward);
    case AgentFamily::Guideline:
        if (!ctx.rules) throw Error("the guideline agent needs a rule file");
        return std::make_unique<GuidelineAgent>(ctx.dataset, *ctx.rules);
    case AgentFamily::LinearTS: return std::make_unique<LinearTsAgent>(spec, k, w, ctx.stream);
    case AgentFamily::NeuralGreedy: return std::make_unique<NeuralGreedyAgent>(spec, k, w, ctx.stream);
    case AgentFamily::Dropout: return std::make_unique<DropoutAgent>(spec, k, w, ctx.stream);
    case AgentFamily::ParamNoise: return std::make_unique<ParamNoiseAgent>(spec, k, w, ctx.stream);
    case AgentFamily::Bootstrapped: return std::make_unique<BootstrappedAgent>(spec, k, w, ctx.stream);
    case AgentFamily::NeuralLinear: return std::make_unique<NeuralLinearAgent>(spec, k, w, ctx.stream);
    case AgentFamily::BayesByBackprop: return std::make_unique<BayesByBackpropAgent>(spec, k, w, ctx.stream);
    }
    throw Error("unreachable agent family");
}

} // namespace oncobandit

#endif // ONCOBANDIT_AGENTS_HPP
