#ifndef OBJSEARCH_DETECTOR_HPP
#define OBJSEARCH_DETECTOR_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "objsearch/checkpoint.hpp"
#include "objsearch/env.hpp"
#include "objsearch/error.hpp"
#include "objsearch/nn.hpp"
#include "objsearch/rng.hpp"
#include "objsearch/scene.hpp"

namespace objsearch {

inline constexpr double kProbEpsilon = 1e-7;

struct DetectorConfig {
    int feature_dim = 32;
    int embed_dim = 16;
    double lambda = 0.5; ///< box-loss weight
    double lr = 0.2;
    double tau = 0.5;    ///< presence threshold
    int batch_size = 32;
    int epochs = 1000;

    void validate() const {
        if (feature_dim < 1 || embed_dim < 1) throw ConfigError("detector dims must be positive");
        if (!(lambda > 0.0)) throw ConfigError("lambda must be > 0");
        if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
        if (!(lr >= 0.0)) throw ConfigError("detector lr must be >= 0");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (epochs < 0) throw ConfigError("epochs must be >= 0");
    }

    nlohmann::json to_json() const {
        return {{"feature_dim", feature_dim}, {"embed_dim", embed_dim}, {"lambda", lambda}, {"lr", lr},
                {"tau", tau}, {"batch_size", batch_size}, {"epochs", epochs}};
    }
    static DetectorConfig from_json(const nlohmann::json& j) {
        DetectorConfig c;
        c.feature_dim = j.value("feature_dim", c.feature_dim);
        c.embed_dim = j.value("embed_dim", c.embed_dim);
        c.lambda = j.value("lambda", c.lambda);
        c.lr = j.value("lr", c.lr);
        c.tau = j.value("tau", c.tau);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        return c;
    }
};

/// Presence probability and squashed box before any thresholding.
struct RawPrediction {
    double p = 0.5;
    std::array<double, 4> box{0.5, 0.5, 0.5, 0.5};
};

struct DetectionLabel {
    bool present = false;
    std::optional<Box> box; ///< set iff present
};

inline std::array<double, 4> box_coords(const Box& b) { return {b.x, b.y, b.w, b.h}; }

/// Joint loss for one example: binary cross-entropy on the presence
/// probability (clamped to [eps, 1 - eps]) plus lambda times the squared L2
/// box error, the latter only for positive labels.
inline double detection_loss(const RawPrediction& pred, const DetectionLabel& label, double lambda) {
    if (label.present != label.box.has_value())
        throw InvariantError("detection label: box must be given iff the object is present");
    const double p = std::clamp(pred.p, kProbEpsilon, 1.0 - kProbEpsilon);
    const double y = label.present ? 1.0 : 0.0;
    double loss = -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    if (label.present) {
        const auto target = box_coords(*label.box);
        double sq = 0.0;
        for (std::size_t i = 0; i < 4; ++i) sq += (pred.box[i] - target[i]) * (pred.box[i] - target[i]);
        loss += lambda * sq;
    }
    return loss;
}

/// Target-conditioned detector: separate projections of the view and target
/// features, a fusion layer over their concatenation, then a two-layer
/// classification head (sigmoid) and a two-layer regression head (sigmoid per
/// box coordinate).
class Detector {
public:
    struct Cache {
        std::vector<double> view, target;
        std::vector<double> view_pre, view_act, target_pre, target_act, joint, fuse_pre, fuse_act;
        std::vector<double> cls_pre, cls_act, reg_pre, reg_act;
        double logit = 0.0;
        std::array<double, 4> box_raw{};
        RawPrediction pred;
    };

    Detector() = default;

    Detector(const DetectorConfig& config, std::uint64_t seed) : config_(config) {
        config_.validate();
        build();
        Rng rng(seed);
        for (const nn::Dense* d : layers()) nn::glorot_uniform(params_[d->weight], rng);
    }

    static Detector from_checkpoint(const Checkpoint& ckpt) {
        if (ckpt.kind != "detector") throw ParseError("checkpoint kind '" + ckpt.kind + "' is not a detector");
        Detector det;
        det.config_ = DetectorConfig::from_json(ckpt.meta.value("config", nlohmann::json::object()));
        det.config_.validate();
        det.build();
        if (!det.params_.same_shape(ckpt.params)) throw ShapeError("detector checkpoint shapes do not match config");
        det.params_ = ckpt.params;
        return det;
    }

    Checkpoint to_checkpoint() const { return {"detector", {{"config", config_.to_json()}}, params_}; }

    const DetectorConfig& config() const noexcept { return config_; }
    nn::ParamStore& params() noexcept { return params_; }
    const nn::ParamStore& params() const noexcept { return params_; }

    void forward(std::span<const double> view, std::span<const double> target, Cache& c) const {
        const std::size_t D = static_cast<std::size_t>(config_.feature_dim);
        const std::size_t E = static_cast<std::size_t>(config_.embed_dim);
        if (view.size() != D || target.size() != D)
            throw ShapeError("detector expects feature dimension " + std::to_string(D));
        c.view.assign(view.begin(), view.end());
        c.target.assign(target.begin(), target.end());
        c.view_pre.resize(E);
        c.view_act.resize(E);
        c.target_pre.resize(E);
        c.target_act.resize(E);
        c.joint.resize(2 * E);
        c.fuse_pre.resize(E);
        c.fuse_act.resize(E);
        c.cls_pre.resize(E);
        c.cls_act.resize(E);
        c.reg_pre.resize(E);
        c.reg_act.resize(E);

        view_proj_.forward(params_, view, c.view_pre);
        nn::relu(c.view_pre, c.view_act);
        target_proj_.forward(params_, target, c.target_pre);
        nn::relu(c.target_pre, c.target_act);
        std::copy(c.view_act.begin(), c.view_act.end(), c.joint.begin());
        std::copy(c.target_act.begin(), c.target_act.end(), c.joint.begin() + static_cast<std::ptrdiff_t>(E));
        fusion_.forward(params_, c.joint, c.fuse_pre);
        nn::relu(c.fuse_pre, c.fuse_act);

        cls_hidden_.forward(params_, c.fuse_act, c.cls_pre);
        nn::relu(c.cls_pre, c.cls_act);
        cls_out_.forward(params_, c.cls_act, std::span<double>(&c.logit, 1));
        c.pred.p = nn::sigmoid(c.logit);

        reg_hidden_.forward(params_, c.fuse_act, c.reg_pre);
        nn::relu(c.reg_pre, c.reg_act);
        reg_out_.forward(params_, c.reg_act, c.box_raw);
        for (std::size_t i = 0; i < 4; ++i) c.pred.box[i] = nn::sigmoid(c.box_raw[i]);
    }

    RawPrediction predict(std::span<const double> view, std::span<const double> target) const {
        Cache c;
        forward(view, target, c);
        return c.pred;
    }

    Detection detect(std::span<const double> view, std::span<const double> target) const {
        const RawPrediction r = predict(view, target);
        Detection d;
        d.p = r.p;
        d.box = Box{r.box[0], r.box[1], std::max(r.box[2], kProbEpsilon), std::max(r.box[3], kProbEpsilon)};
        d.present = r.p >= config_.tau;
        return d;
    }

    /// Loss for one example; accumulates d(loss)/d(params) scaled by `scale`
    /// into `grads` when non-null.
    double loss_and_grad(std::span<const double> view, std::span<const double> target, const DetectionLabel& label,
                         nn::ParamStore* grads, double scale = 1.0) const {
        Cache c;
        forward(view, target, c);
        const double loss = detection_loss(c.pred, label, config_.lambda);
        if (grads) backward(c, label, *grads, scale);
        return loss;
    }

    void backward(const Cache& c, const DetectionLabel& label, nn::ParamStore& grads, double scale) const {
        const std::size_t E = static_cast<std::size_t>(config_.embed_dim);
        const double y = label.present ? 1.0 : 0.0;
        const double p = c.pred.p;
        // The clamp is flat outside [eps, 1 - eps].
        double dlogit = (p < kProbEpsilon || p > 1.0 - kProbEpsilon) ? 0.0 : (p - y);
        dlogit *= scale;

        std::vector<double> d_cls_act(E), d_cls_pre(E), d_fuse(E, 0.0), tmp(E);
        cls_out_.backward(params_, c.cls_act, std::span<const double>(&dlogit, 1), grads, d_cls_act);
        nn::relu_backward(c.cls_pre, d_cls_act, d_cls_pre);
        cls_hidden_.backward(params_, c.fuse_act, d_cls_pre, grads, tmp);
        for (std::size_t i = 0; i < E; ++i) d_fuse[i] += tmp[i];

        if (label.present) {
            const auto target = box_coords(*label.box);
            std::array<double, 4> d_raw{};
            for (std::size_t i = 0; i < 4; ++i) {
                const double b = c.pred.box[i];
                d_raw[i] = scale * 2.0 * config_.lambda * (b - target[i]) * b * (1.0 - b);
            }
            std::vector<double> d_reg_act(E), d_reg_pre(E);
            reg_out_.backward(params_, c.reg_act, d_raw, grads, d_reg_act);
            nn::relu_backward(c.reg_pre, d_reg_act, d_reg_pre);
            reg_hidden_.backward(params_, c.fuse_act, d_reg_pre, grads, tmp);
            for (std::size_t i = 0; i < E; ++i) d_fuse[i] += tmp[i];
        }

        std::vector<double> d_fuse_pre(E), d_joint(2 * E), d_view_pre(E), d_target_pre(E);
        nn::relu_backward(c.fuse_pre, d_fuse, d_fuse_pre);
        fusion_.backward(params_, c.joint, d_fuse_pre, grads, d_joint);
        nn::relu_backward(c.view_pre, std::span<const double>(d_joint).first(E), d_view_pre);
        nn::relu_backward(c.target_pre, std::span<const double>(d_joint).subspan(E), d_target_pre);
        view_proj_.backward(params_, c.view, d_view_pre, grads, {});
        target_proj_.backward(params_, c.target, d_target_pre, grads, {});
    }

private:
    std::array<const nn::Dense*, 7> layers() const {
        return {&view_proj_, &target_proj_, &fusion_, &cls_hidden_, &cls_out_, &reg_hidden_, &reg_out_};
    }

    void build() {
        const std::size_t D = static_cast<std::size_t>(config_.feature_dim);
        const std::size_t E = static_cast<std::size_t>(config_.embed_dim);
        params_ = {};
        view_proj_ = nn::Dense::create(params_, "view_proj", D, E);
        target_proj_ = nn::Dense::create(params_, "target_proj", D, E);
        fusion_ = nn::Dense::create(params_, "fusion", 2 * E, E);
        cls_hidden_ = nn::Dense::create(params_, "cls_hidden", E, E);
        cls_out_ = nn::Dense::create(params_, "cls_out", E, 1);
        reg_hidden_ = nn::Dense::create(params_, "reg_hidden", E, E);
        reg_out_ = nn::Dense::create(params_, "reg_out", E, 4);
    }

    DetectorConfig config_;
    nn::ParamStore params_;
    nn::Dense view_proj_, target_proj_, fusion_, cls_hidden_, cls_out_, reg_hidden_, reg_out_;
};

/// One (state, object) training example drawn from a scene.
struct DetectorExample {
    const Scene* scene = nullptr;
    RobotState state;
    std::size_t object = 0;

    DetectionLabel label() const {
        const auto& b = scene->truth_box(state, object);
        return b ? DetectionLabel{true, *b} : DetectionLabel{false, std::nullopt};
    }
};

inline std::vector<DetectorExample> detector_examples(std::span<const Scene* const> scenes) {
    std::vector<DetectorExample> out;
    for (const Scene* scene : scenes)
        for (const auto& s : scene->valid_states())
            for (std::size_t k = 0; k < scene->objects().size(); ++k) out.push_back({scene, s, k});
    return out;
}

struct DetectorTrainResult {
    Detector detector;
    double initial_loss = 0.0;       ///< mean loss over all examples before training
    std::vector<double> epoch_loss;  ///< mean minibatch loss per epoch
    double final_loss = 0.0;         ///< mean loss over all examples after training
};

inline double mean_detector_loss(const Detector& det, std::span<const DetectorExample> examples) {
    double total = 0.0;
    for (const auto& ex : examples)
        total += det.loss_and_grad(ex.scene->feature(ex.state), ex.scene->target_feature(ex.object), ex.label(),
                                   nullptr);
    return examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
}

/// Minibatch SGD over every (state, object) pair of `scenes`; each batch step
/// uses the mean gradient of its examples. Deterministic given `seed`.
inline DetectorTrainResult train_detector(std::span<const Scene* const> scenes, const DetectorConfig& config,
                                          std::uint64_t seed) {
    config.validate();
    for (const Scene* s : scenes)
        if (s->feature_dim() != config.feature_dim)
            throw ConfigError("scene '" + s->name() + "' feature_dim " + std::to_string(s->feature_dim()) +
                              " does not match detector feature_dim " + std::to_string(config.feature_dim));
    for (const Scene* s : scenes)
        for (std::size_t k = 0; k < s->objects().size(); ++k) {
            std::size_t pos = 0;
            for (const auto& st : s->valid_states()) pos += s->truth_box(st, k).has_value();
            if (pos == 0 || pos == s->valid_states().size())
                throw ConfigError("object '" + s->objects()[k].id + "' in scene '" + s->name() +
                                  "' needs both positive and negative states");
        }
    auto examples = detector_examples(scenes);
    if (examples.empty()) throw ConfigError("no training examples");

    DetectorTrainResult result{Detector(config, derive_seed(seed, 0x1D17)), 0.0, {}, 0.0};
    Detector& det = result.detector;
    result.initial_loss = mean_detector_loss(det, examples);

    Rng rng(derive_seed(seed, 0x5AFF));
    nn::ParamStore grads = det.params().zeros_like();
    const std::size_t batch = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = examples.size(); i > 1; --i) std::swap(examples[i - 1], examples[rng.below(i)]);
        double epoch_total = 0.0;
        for (std::size_t start = 0; start < examples.size(); start += batch) {
            const std::size_t end = std::min(examples.size(), start + batch);
            const double scale = 1.0 / static_cast<double>(end - start);
            grads.set_zero();
            for (std::size_t i = start; i < end; ++i) {
                const auto& ex = examples[i];
                const double l = det.loss_and_grad(ex.scene->feature(ex.state), ex.scene->target_feature(ex.object),
                                                   ex.label(), &grads, scale);
                if (!std::isfinite(l))
                    throw NonFiniteError("detector loss became non-finite at epoch " + std::to_string(epoch) +
                                         " on state " + to_string(ex.state));
                epoch_total += l;
            }
            nn::sgd_step(det.params(), grads, config.lr);
        }
        result.epoch_loss.push_back(epoch_total / static_cast<double>(examples.size()));
    }
    result.final_loss = mean_detector_loss(det, examples);
    return result;
}

struct DetectorMetrics {
    double accuracy = 0.0;        ///< presence classification over all pairs
    double recall = 0.0;          ///< fraction of truth-box pairs reported present
    double specificity = 0.0;     ///< fraction of empty pairs reported absent
    double box_mse = 0.0;         ///< mean squared error per box coordinate, over truth-box pairs
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

inline DetectorMetrics evaluate_detector(const Detector& det, std::span<const Scene* const> scenes) {
    DetectorMetrics m;
    std::size_t correct = 0, true_pos = 0, true_neg = 0;
    double sq = 0.0;
    for (const auto& ex : detector_examples(scenes)) {
        const Detection d = det.detect(ex.scene->feature(ex.state), ex.scene->target_feature(ex.object));
        const auto& truth = ex.scene->truth_box(ex.state, ex.object);
        if (truth) {
            ++m.positives;
            if (d.present) ++true_pos, ++correct;
            const auto pred = det.predict(ex.scene->feature(ex.state), ex.scene->target_feature(ex.object));
            const auto t = box_coords(*truth);
            for (std::size_t i = 0; i < 4; ++i) sq += (pred.box[i] - t[i]) * (pred.box[i] - t[i]);
        } else {
            ++m.negatives;
            if (!d.present) ++true_neg, ++correct;
        }
    }
    const std::size_t n = m.positives + m.negatives;
    m.accuracy = n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
    m.recall = m.positives ? static_cast<double>(true_pos) / static_cast<double>(m.positives) : 1.0;
    m.specificity = m.negatives ? static_cast<double>(true_neg) / static_cast<double>(m.negatives) : 1.0;
    m.box_mse = m.positives ? sq / (4.0 * static_cast<double>(m.positives)) : 0.0;
    return m;
}

/// Runs the frozen detector once over every (state, object) pair.
inline DetectionTable detection_table(const Detector& det, const Scene& scene) {
    DetectionTable t(scene.lattice_size(), scene.objects().size());
    for (const auto& s : scene.valid_states())
        for (std::size_t k = 0; k < scene.objects().size(); ++k)
            t.set(scene.index(s), k, det.detect(scene.feature(s), scene.target_feature(k)));
    return t;
}

} // namespace objsearch

#endif // OBJSEARCH_DETECTOR_HPP
