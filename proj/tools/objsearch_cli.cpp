// objsearch: scene generation, detector and policy training, evaluation and
// artifact export from the command line.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "objsearch/objsearch.hpp"

namespace fs = std::filesystem;
using namespace objsearch;

namespace {

/// Relative output paths land under $OBJSEARCH_OUT_DIR when it is set.
fs::path out_path(const std::string& p) {
    fs::path path(p);
    if (path.is_relative())
        if (const char* dir = std::getenv("OBJSEARCH_OUT_DIR"); dir && *dir) return fs::path(dir) / path;
    return path;
}

std::pair<int, int> parse_grid(const std::string& s) {
    const auto x = s.find_first_of("xX");
    if (x == std::string::npos) throw ConfigError("grid must look like WxH, got '" + s + "'");
    try {
        return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
    } catch (const std::logic_error&) {
        throw ConfigError("grid must look like WxH, got '" + s + "'");
    }
}

std::vector<Scene> load_scenes(const std::vector<std::string>& paths) {
    std::vector<Scene> scenes;
    for (const auto& p : paths) scenes.push_back(load_scene(p));
    return scenes;
}

std::vector<const Scene*> pointers(const std::vector<Scene>& scenes) {
    std::vector<const Scene*> out;
    for (const auto& s : scenes) out.push_back(&s);
    return out;
}

DetectionTable detections_for(const Scene& scene, const std::optional<Detector>& det) {
    return det ? detection_table(*det, scene) : DetectionTable::ground_truth(scene);
}

std::vector<std::size_t> object_indices(const Scene& scene, const std::vector<std::string>& ids) {
    std::vector<std::size_t> out;
    if (ids.empty())
        for (std::size_t k = 0; k < scene.objects().size(); ++k) out.push_back(k);
    for (const auto& id : ids) out.push_back(scene.object_index(id));
    return out;
}

struct GenArgs {
    std::uint64_t seed = 0;
    std::string grid = "5x5";
    int objects = 1;
    int feature_dim = 32;
    int visibility = 2;
    std::string name = "synthetic";
    std::string out;
};

void cmd_gen(const GenArgs& a) {
    if (a.objects < 1) throw ConfigError("--objects must be at least 1");
    SyntheticOptions opt;
    opt.seed = a.seed;
    std::tie(opt.width, opt.height) = parse_grid(a.grid);
    opt.n_objects = a.objects;
    opt.feature_dim = a.feature_dim;
    opt.visibility_range = a.visibility;
    opt.name = a.name;
    const Scene scene = generate_synthetic(opt);
    save_scene(scene, out_path(a.out));
    std::cout << "scene '" << scene.name() << "': " << scene.valid_states().size() << " valid states, "
              << scene.objects().size() << " objects\n";
}

struct DetectorArgs {
    std::vector<std::string> scenes;
    DetectorConfig config;
    std::uint64_t seed = 0;
    std::string out;
    std::string loss_csv;
};

void cmd_train_detector(const DetectorArgs& a) {
    const auto scenes = load_scenes(a.scenes);
    const auto ptrs = pointers(scenes);
    DetectorConfig cfg = a.config;
    cfg.feature_dim = scenes.front().feature_dim();
    const auto result = train_detector(ptrs, cfg, a.seed);
    const auto m = evaluate_detector(result.detector, ptrs);
    save_checkpoint(out_path(a.out), result.detector.to_checkpoint());
    if (!a.loss_csv.empty()) {
        std::ofstream f(out_path(a.loss_csv));
        if (!f) throw IoError("cannot open '" + a.loss_csv + "' for writing");
        f << "epoch,loss\n";
        f.precision(17);
        for (std::size_t i = 0; i < result.epoch_loss.size(); ++i) f << i << ',' << result.epoch_loss[i] << '\n';
    }
    std::cout << "loss " << result.initial_loss << " -> " << result.final_loss << "; accuracy " << m.accuracy
              << ", box mse " << m.box_mse << '\n';
}

struct PolicyArgs {
    std::vector<std::string> scenes;
    std::vector<std::string> objects;
    std::string detector;
    bool ground_truth = false;
    std::string reward = "record";
    std::string preset = "default";
    std::string config_file;
    TrainConfig config;
    std::string optimizer = "sgd";
    double tau = 0.5;
    std::uint64_t init_seed = 0;
    std::string out;
    std::string curve_csv;
};

void cmd_train_policy(PolicyArgs a, const CLI::App& sub) {
    if (a.detector.empty() == !a.ground_truth) throw ConfigError("give exactly one of --detector or --ground-truth");
    TrainConfig cfg = a.preset == "desk" ? TrainConfig::desk() : TrainConfig{};
    if (!a.config_file.empty()) {
        std::ifstream f(a.config_file);
        if (!f) throw IoError("cannot open config '" + a.config_file + "'");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(f);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("config '" + a.config_file + "': " + e.what());
        }
        cfg = TrainConfig::from_json(j, cfg);
    }
    const auto given = [&](const char* flag) { return sub.count(flag) > 0; };
    if (given("--beta")) cfg.beta = a.config.beta;
    if (given("--gamma")) cfg.gamma = a.config.gamma;
    if (given("--lr")) cfg.lr = a.config.lr;
    if (given("--n-step")) cfg.n_step = a.config.n_step;
    if (given("--max-steps")) cfg.max_steps = a.config.max_steps;
    if (given("--episodes")) cfg.episodes = a.config.episodes;
    if (given("--budget-scale")) cfg.budget_scale = a.config.budget_scale;
    if (given("--workers")) cfg.workers = a.config.workers;
    if (given("--seed")) cfg.seed = a.config.seed;
    if (given("--max-grad-norm")) cfg.max_grad_norm = a.config.max_grad_norm;
    if (given("--optimizer")) cfg.optimizer = TrainConfig::parse_optimizer(a.optimizer);
    if (given("--rms-epsilon")) cfg.rms_epsilon = a.config.rms_epsilon;
    if (given("--checkpoint-every")) cfg.checkpoint_every = a.config.checkpoint_every;
    cfg.validate();

    const auto scenes = load_scenes(a.scenes);
    std::optional<Detector> det;
    if (!a.detector.empty()) det = Detector::from_checkpoint(load_checkpoint(a.detector));
    std::vector<DetectionTable> tables;
    for (const auto& s : scenes) tables.push_back(detections_for(s, det));
    std::vector<TrainTask> tasks;
    std::vector<std::string> branches;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        branches.push_back(scenes[i].name());
        for (std::size_t k : object_indices(scenes[i], a.objects)) tasks.push_back({&scenes[i], k, &tables[i]});
    }
    PolicyConfig pc;
    pc.feature_dim = scenes.front().feature_dim();
    Policy initial(pc, branches, a.init_seed);

    const fs::path out = out_path(a.out);
    TrainHooks hooks;
    hooks.on_checkpoint = [&](std::size_t done, const Policy& p) {
        fs::path step = out;
        step.replace_filename(out.stem().string() + ".ep" + std::to_string(done) + out.extension().string());
        save_checkpoint(step, p.to_checkpoint());
    };
    const auto result = train_policy(std::move(initial), tasks, parse_scheme(a.reward, cfg.gamma), cfg, a.tau, hooks);
    auto ckpt = result.policy.to_checkpoint();
    ckpt.meta["train"] = cfg.to_json();
    ckpt.meta["reward"] = a.reward;
    save_checkpoint(out, ckpt);
    if (!a.curve_csv.empty()) save_curve_csv(out_path(a.curve_csv), result.curve);
    std::size_t successes = 0;
    for (const auto& r : result.curve) successes += r.success;
    std::cout << result.curve.size() << " episodes, " << successes << " reached a goal\n";
}

struct EvalArgs {
    std::string scene;
    std::vector<std::string> objects;
    std::string policy;
    std::string baseline;
    std::string detector;
    bool greedy = false;
    double tau = 0.5;
    EvalOptions opt;
    std::string report;
    std::string summary;
    std::string svg;
    std::string trace_csv;
    std::size_t trace_episode = 0;
};

void cmd_eval(EvalArgs a) {
    if (a.policy.empty() == a.baseline.empty()) throw ConfigError("give exactly one of --policy or --baseline");
    if (!a.baseline.empty() && a.baseline != "random" && a.baseline != "oracle")
        throw ConfigError("unknown baseline '" + a.baseline + "' (expected random or oracle)");
    const Scene scene = load_scene(a.scene);
    std::optional<Policy> policy;
    if (!a.policy.empty()) policy = Policy::from_checkpoint(load_checkpoint(a.policy));
    std::optional<Detector> det;
    if (!a.detector.empty()) det = Detector::from_checkpoint(load_checkpoint(a.detector));
    const DetectionTable table = detections_for(scene, det);
    a.opt.keep_traces = !a.svg.empty() || !a.trace_csv.empty();

    std::vector<EvalReport> parts;
    for (std::size_t k : object_indices(scene, a.objects)) {
        ActionChooser chooser;
        if (policy)
            chooser = policy_chooser(*policy, policy->branch_index(scene.name()), a.tau, a.greedy);
        else if (a.baseline == "random")
            chooser = random_chooser();
        else
            chooser = oracle_chooser(scene, goal_distances(scene, k));
        parts.push_back(evaluate(chooser, scene, k, table, a.opt));
    }
    const EvalReport report = merge_reports(parts);
    if (!a.report.empty()) save_report_csv(out_path(a.report), report);
    if (!a.summary.empty()) save_summary_csv(out_path(a.summary), report);
    if (a.opt.keep_traces) {
        if (a.trace_episode >= report.traces.size())
            throw ConfigError("--trace-episode " + std::to_string(a.trace_episode) + " out of range");
        const EpisodeTrace& t = report.traces[a.trace_episode];
        if (!a.svg.empty()) save_trajectory_svg(out_path(a.svg), scene, &t);
        if (!a.trace_csv.empty()) save_trace_csv(out_path(a.trace_csv), t);
    }
    write_summary_csv(std::cout, report);
}

struct EntropyArgs {
    std::string scene;
    std::string object;
    std::string policy;
    std::string detector;
    double tau = 0.5;
    std::string out;
};

void cmd_entropy_map(const EntropyArgs& a) {
    const Scene scene = load_scene(a.scene);
    const Policy policy = Policy::from_checkpoint(load_checkpoint(a.policy));
    std::optional<Detector> det;
    if (!a.detector.empty()) det = Detector::from_checkpoint(load_checkpoint(a.detector));
    const std::size_t k = a.object.empty() ? 0 : scene.object_index(a.object);
    const EntropyMap map =
        entropy_map(policy, policy.branch_index(scene.name()), scene, k, detections_for(scene, det), a.tau);
    if (a.out.empty())
        write_entropy_csv(std::cout, map);
    else
        save_entropy_csv(out_path(a.out), map);
    std::cout << "mean entropy " << map.mean() << " nats\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Target-driven object search in a discrete lattice: scene generation, detector and policy "
                 "training, evaluation. Relative output paths are placed under $OBJSEARCH_OUT_DIR when set. "
                 "Exit codes: 0 ok, 1 usage, 2 runtime."};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate a seeded synthetic scene file (JSON)");
    g->add_option("--seed", gen.seed, "RNG seed");
    g->add_option("--grid", gen.grid, "Grid size WxH, in cells");
    g->add_option("--objects", gen.objects, "Number of target objects (>= 1)");
    g->add_option("--feature-dim", gen.feature_dim, "View/target feature dimension");
    g->add_option("--visibility", gen.visibility, "Visibility range, in cells (Chebyshev)");
    g->add_option("--name", gen.name, "Scene name (also the policy branch id)");
    g->add_option("--out", gen.out, "Output scene path")->required();

    DetectorArgs det;
    auto* d = app.add_subcommand("train-detector", "Train the recognition network on one or more scenes");
    d->add_option("--scene", det.scenes, "Scene file(s)")->required()->check(CLI::ExistingFile);
    d->add_option("--embed-dim", det.config.embed_dim, "Embedding width");
    d->add_option("--lambda", det.config.lambda, "Box-loss weight");
    d->add_option("--lr", det.config.lr, "SGD learning rate");
    d->add_option("--tau", det.config.tau, "Presence threshold in (0,1)");
    d->add_option("--batch-size", det.config.batch_size, "Minibatch size, in examples");
    d->add_option("--epochs", det.config.epochs, "Passes over all (state, object) pairs");
    d->add_option("--seed", det.seed, "RNG seed");
    d->add_option("--loss-csv", det.loss_csv, "Optional per-epoch loss CSV");
    d->add_option("--out", det.out, "Output checkpoint path")->required();

    PolicyArgs pol;
    pol.config.workers = 1;
    auto* p = app.add_subcommand("train-policy", "Train the actor-critic search policy");
    p->add_option("--scene", pol.scenes, "Scene file(s); one policy branch per scene")
        ->required()
        ->check(CLI::ExistingFile);
    p->add_option("--object", pol.objects, "Object id(s) to train on (default: all)");
    auto* det_opt = p->add_option("--detector", pol.detector, "Detector checkpoint supplying the policy's detections");
    p->add_flag("--ground-truth", pol.ground_truth, "Use truth boxes as detections instead of a detector")
        ->excludes(det_opt);
    p->add_option("--reward", pol.reward, "Reward scheme")->check(CLI::IsMember({"sparse", "cumulative", "record"}));
    p->add_option("--preset", pol.preset,
                  "Base settings: default (full budget, SGD) or desk (RMSProp, gamma 0.7, lr 1e-3, 2000 "
                  "episodes)")
        ->check(CLI::IsMember({"default", "desk"}));
    p->add_option("--config", pol.config_file, "JSON file with TrainConfig fields, applied over the preset")
        ->check(CLI::ExistingFile);
    p->add_option("--beta", pol.config.beta, "Entropy weight");
    p->add_option("--gamma", pol.config.gamma, "Discount in (0,1]");
    p->add_option("--lr", pol.config.lr, "Learning rate");
    p->add_option("--n-step", pol.config.n_step, "Return horizon, in steps");
    p->add_option("--max-steps", pol.config.max_steps, "Step limit per training episode");
    p->add_option("--episodes", pol.config.episodes, "Episode budget before scaling");
    p->add_option("--budget-scale", pol.config.budget_scale, "Multiplier on --episodes");
    p->add_option("--workers", pol.config.workers, "Worker threads (1 is bit-deterministic)");
    p->add_option("--seed", pol.config.seed, "Training RNG seed");
    p->add_option("--init-seed", pol.init_seed, "Weight initialization seed");
    p->add_option("--optimizer", pol.optimizer, "sgd or rmsprop")->check(CLI::IsMember({"sgd", "rmsprop"}));
    p->add_option("--rms-epsilon", pol.config.rms_epsilon, "RMSProp denominator epsilon");
    p->add_option("--max-grad-norm", pol.config.max_grad_norm, "Per-episode gradient clip, L2 (<= 0 disables)");
    p->add_option("--checkpoint-every", pol.config.checkpoint_every, "Write <out>.ep<N> every N episodes (0 = off)");
    p->add_option("--tau", pol.tau, "Presence threshold for the location grid");
    p->add_option("--curve-csv", pol.curve_csv, "Optional training-curve CSV");
    p->add_option("--out", pol.out, "Output checkpoint path")->required();

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Evaluate a policy or baseline from seeded random starts");
    e->add_option("--scene", ev.scene, "Scene file")->required()->check(CLI::ExistingFile);
    e->add_option("--object", ev.objects, "Object id(s) (default: all)");
    e->add_option("--policy", ev.policy, "Policy checkpoint");
    e->add_option("--baseline", ev.baseline, "random or oracle (shortest path)");
    e->add_option("--detector", ev.detector, "Detector checkpoint (default: ground-truth detections)");
    e->add_flag("--greedy", ev.greedy, "Take the most probable action instead of sampling");
    e->add_option("--tau", ev.tau, "Presence threshold for the location grid");
    e->add_option("--episodes", ev.opt.n_episodes, "Episodes per object");
    e->add_option("--max-steps", ev.opt.max_steps, "Step limit per episode");
    e->add_option("--seed", ev.opt.seed, "RNG seed for starts and action sampling");
    e->add_option("--workers", ev.opt.workers, "Worker threads (results do not depend on it)");
    e->add_option("--report", ev.report, "Per-episode report CSV");
    e->add_option("--summary", ev.summary, "Per-object summary CSV");
    e->add_option("--svg", ev.svg, "Top-down trajectory SVG of one episode");
    e->add_option("--trace-csv", ev.trace_csv, "Step-by-step CSV of one episode");
    e->add_option("--trace-episode", ev.trace_episode, "Episode index used by --svg and --trace-csv");

    EntropyArgs en;
    auto* m = app.add_subcommand("entropy-map", "Per-cell mean policy entropy, in nats");
    m->add_option("--scene", en.scene, "Scene file")->required()->check(CLI::ExistingFile);
    m->add_option("--object", en.object, "Object id (default: first object)");
    m->add_option("--policy", en.policy, "Policy checkpoint")->required();
    m->add_option("--detector", en.detector, "Detector checkpoint (default: ground-truth detections)");
    m->add_option("--tau", en.tau, "Presence threshold for the location grid");
    m->add_option("--out", en.out, "Output CSV (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        std::cerr << "error: usage: " << ex.what() << '\n';
        return 1;
    }

    try {
        if (*g) cmd_gen(gen);
        else if (*d) cmd_train_detector(det);
        else if (*p) cmd_train_policy(pol, *p);
        else if (*e) cmd_eval(ev);
        else if (*m) cmd_entropy_map(en);
    } catch (const ConfigError& ex) {
        std::cerr << "error: " << ex.kind() << ": " << ex.what() << '\n';
        return 1;
    } catch (const Error& ex) {
        std::cerr << "error: " << ex.kind() << ": " << ex.what() << '\n';
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: runtime: " << ex.what() << '\n';
        return 2;
    }
    return 0;
}
