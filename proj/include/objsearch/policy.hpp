#ifndef OBJSEARCH_POLICY_HPP
#define OBJSEARCH_POLICY_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "objsearch/checkpoint.hpp"
#include "objsearch/env.hpp"
#include "objsearch/error.hpp"
#include "objsearch/nn.hpp"
#include "objsearch/rng.hpp"

namespace objsearch {

inline constexpr std::size_t kLocationGridSide = 5;
inline constexpr std::size_t kLocationGridSize = kLocationGridSide * kLocationGridSide;

/// 5x5 binary image of the detected box, row-major (row = image y).
using LocationGrid = std::array<double, kLocationGridSize>;

/// Marks every grid cell the detected box overlaps with positive area; all
/// zeros when the presence probability is below `tau`.
inline LocationGrid encode_location(const Detection& det, double tau) {
    LocationGrid grid{};
    if (det.p < tau) return grid;
    const double x0 = det.box.x - det.box.w / 2.0;
    const double x1 = det.box.x + det.box.w / 2.0;
    const double y0 = det.box.y - det.box.h / 2.0;
    const double y1 = det.box.y + det.box.h / 2.0;
    const double side = static_cast<double>(kLocationGridSide);
    for (std::size_t r = 0; r < kLocationGridSide; ++r) {
        const double overlap_y = std::min(y1, (r + 1) / side) - std::max(y0, r / side);
        if (overlap_y <= 0.0) continue;
        for (std::size_t c = 0; c < kLocationGridSide; ++c) {
            const double overlap_x = std::min(x1, (c + 1) / side) - std::max(x0, c / side);
            if (overlap_x > 0.0) grid[r * kLocationGridSide + c] = 1.0;
        }
    }
    return grid;
}

struct PolicyConfig {
    int feature_dim = 32;
    int embed_dim = 16;
    int fusion_dim = 32;

    nlohmann::json to_json() const {
        return {{"feature_dim", feature_dim}, {"embed_dim", embed_dim}, {"fusion_dim", fusion_dim}};
    }
    static PolicyConfig from_json(const nlohmann::json& j) {
        PolicyConfig c;
        c.feature_dim = j.value("feature_dim", c.feature_dim);
        c.embed_dim = j.value("embed_dim", c.embed_dim);
        c.fusion_dim = j.value("fusion_dim", c.fusion_dim);
        return c;
    }
};

struct PolicyOutput {
    std::array<double, kNumActions> logits{};
    std::array<double, kNumActions> pi{};
    std::array<double, kNumActions> log_pi{};
    double value = 0.0;
};

/// Actor-critic network. View and target features are embedded by separate
/// layers, concatenated with the location grid and fused; each scene owns a
/// branch producing 8 action logits and a state value. Branch layers start
/// at zero, so an untrained policy is uniform.
class Policy {
public:
    struct Cache {
        std::vector<double> view, target;
        std::vector<double> view_pre, view_act, target_pre, target_act, joint, fuse_pre, fuse_act;
        std::size_t branch = 0;
        PolicyOutput out;
    };

    Policy() = default;

    Policy(const PolicyConfig& config, std::vector<std::string> branches, std::uint64_t seed)
        : config_(config), branches_(std::move(branches)) {
        if (branches_.empty()) throw ConfigError("policy needs at least one scene branch");
        build();
        Rng rng(seed);
        nn::glorot_uniform(params_[view_embed_.weight], rng);
        nn::glorot_uniform(params_[target_embed_.weight], rng);
        nn::glorot_uniform(params_[fusion_.weight], rng);
    }

    static Policy from_checkpoint(const Checkpoint& ckpt) {
        if (ckpt.kind != "policy") throw ParseError("checkpoint kind '" + ckpt.kind + "' is not a policy");
        Policy pol;
        pol.config_ = PolicyConfig::from_json(ckpt.meta.value("config", nlohmann::json::object()));
        pol.branches_ = ckpt.meta.at("branches").get<std::vector<std::string>>();
        pol.build();
        if (!pol.params_.same_shape(ckpt.params)) throw ShapeError("policy checkpoint shapes do not match config");
        pol.params_ = ckpt.params;
        return pol;
    }

    Checkpoint to_checkpoint() const {
        return {"policy", {{"config", config_.to_json()}, {"branches", branches_}}, params_};
    }

    const PolicyConfig& config() const noexcept { return config_; }
    const std::vector<std::string>& branches() const noexcept { return branches_; }
    nn::ParamStore& params() noexcept { return params_; }
    const nn::ParamStore& params() const noexcept { return params_; }

    std::size_t branch_index(std::string_view scene_name) const {
        for (std::size_t i = 0; i < branches_.size(); ++i)
            if (branches_[i] == scene_name) return i;
        throw UnknownIdError("no policy branch for scene '" + std::string(scene_name) + "'");
    }

    void forward(std::size_t branch, std::span<const double> view, std::span<const double> target,
                 const LocationGrid& loc, Cache& c) const {
        if (branch >= branches_.size()) throw UnknownIdError("policy branch index out of range");
        const std::size_t D = static_cast<std::size_t>(config_.feature_dim);
        const std::size_t E = static_cast<std::size_t>(config_.embed_dim);
        const std::size_t F = static_cast<std::size_t>(config_.fusion_dim);
        if (view.size() != D || target.size() != D)
            throw ShapeError("policy expects feature dimension " + std::to_string(D));
        c.branch = branch;
        c.view.assign(view.begin(), view.end());
        c.target.assign(target.begin(), target.end());
        c.view_pre.resize(E);
        c.view_act.resize(E);
        c.target_pre.resize(E);
        c.target_act.resize(E);
        c.joint.resize(2 * E + kLocationGridSize);
        c.fuse_pre.resize(F);
        c.fuse_act.resize(F);

        view_embed_.forward(params_, view, c.view_pre);
        nn::relu(c.view_pre, c.view_act);
        target_embed_.forward(params_, target, c.target_pre);
        nn::relu(c.target_pre, c.target_act);
        auto it = std::copy(c.view_act.begin(), c.view_act.end(), c.joint.begin());
        it = std::copy(c.target_act.begin(), c.target_act.end(), it);
        std::copy(loc.begin(), loc.end(), it);
        fusion_.forward(params_, c.joint, c.fuse_pre);
        nn::relu(c.fuse_pre, c.fuse_act);

        heads_[branch].logits.forward(params_, c.fuse_act, c.out.logits);
        heads_[branch].value.forward(params_, c.fuse_act, std::span<double>(&c.out.value, 1));
        nn::softmax(c.out.logits, c.out.pi);
        nn::log_softmax(c.out.logits, c.out.log_pi);
    }

    PolicyOutput act(std::size_t branch, std::span<const double> view, std::span<const double> target,
                     const LocationGrid& loc) const {
        Cache c;
        forward(branch, view, target, loc, c);
        return c.out;
    }

    /// Accumulates parameter gradients given d(loss)/d(logits) and
    /// d(loss)/d(value) for a cached forward pass.
    void backward(const Cache& c, std::span<const double> d_logits, double d_value, nn::ParamStore& grads) const {
        const std::size_t E = static_cast<std::size_t>(config_.embed_dim);
        const std::size_t F = static_cast<std::size_t>(config_.fusion_dim);
        std::vector<double> d_fuse(F), tmp(F);
        heads_[c.branch].logits.backward(params_, c.fuse_act, d_logits, grads, d_fuse);
        heads_[c.branch].value.backward(params_, c.fuse_act, std::span<const double>(&d_value, 1), grads, tmp);
        for (std::size_t i = 0; i < F; ++i) d_fuse[i] += tmp[i];

        std::vector<double> d_fuse_pre(F), d_joint(2 * E + kLocationGridSize), d_view(E), d_target(E);
        nn::relu_backward(c.fuse_pre, d_fuse, d_fuse_pre);
        fusion_.backward(params_, c.joint, d_fuse_pre, grads, d_joint);
        nn::relu_backward(c.view_pre, std::span<const double>(d_joint).first(E), d_view);
        nn::relu_backward(c.target_pre, std::span<const double>(d_joint).subspan(E, E), d_target);
        view_embed_.backward(params_, c.view, d_view, grads, {});
        target_embed_.backward(params_, c.target, d_target, grads, {});
    }

private:
    struct Branch {
        nn::Dense logits;
        nn::Dense value;
    };

    void build() {
        const std::size_t D = static_cast<std::size_t>(config_.feature_dim);
        const std::size_t E = static_cast<std::size_t>(config_.embed_dim);
        const std::size_t F = static_cast<std::size_t>(config_.fusion_dim);
        if (D < 1 || E < 1 || F < 1) throw ConfigError("policy dims must be positive");
        params_ = {};
        view_embed_ = nn::Dense::create(params_, "view_embed", D, E);
        target_embed_ = nn::Dense::create(params_, "target_embed", D, E);
        fusion_ = nn::Dense::create(params_, "fusion", 2 * E + kLocationGridSize, F);
        heads_.clear();
        for (std::size_t b = 0; b < branches_.size(); ++b) {
            const std::string prefix = "branch" + std::to_string(b);
            heads_.push_back({nn::Dense::create(params_, prefix + ".logits", F, kNumActions),
                              nn::Dense::create(params_, prefix + ".value", F, 1)});
        }
    }

    PolicyConfig config_;
    std::vector<std::string> branches_;
    nn::ParamStore params_;
    nn::Dense view_embed_, target_embed_, fusion_;
    std::vector<Branch> heads_;
};

/// Entropy of an action distribution, in nats.
inline double policy_entropy(std::span<const double> pi) { return nn::entropy(pi); }

} // namespace objsearch

#endif // OBJSEARCH_POLICY_HPP
