#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fmnav/checkpoint.hpp"
#include "fmnav/config.hpp"
#include "fmnav/dataset_io.hpp"
#include "fmnav/errors.hpp"
#include "fmnav/eval.hpp"
#include "fmnav/parallel.hpp"
#include "fmnav/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fmnav;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> workers;
};

config::RunConfig load_with_overrides(const CommonOpts& opts) {
    config::RunConfig cfg = config::load_config(opts.config_path);
    if (opts.seed) cfg.master_seed = *opts.seed;
    if (opts.out) cfg.out_dir = *opts.out;
    if (opts.workers) cfg.workers = *opts.workers;
    return cfg;
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
}

std::string fd(double v) { return dataset_io::format_double(v); }

std::string dataset_path(const config::RunConfig& cfg) { return cfg.out_dir + "/dataset.txt"; }

std::string checkpoint_path(const config::RunConfig& cfg, const std::string& head, bool depth) {
    return cfg.out_dir + "/checkpoint_" + head + (depth ? "_depth" : "_nodepth") + ".json";
}

const char* mode_name(eval::Mode m) { return m == eval::Mode::navigation ? "nav" : "explore"; }

json trace_to_json(const world::Environment& env, const eval::EpisodeTrace& trace) {
    json j;
    j["schema_version"] = 1;
    svg::Scene scene = svg::scene_from_environment(env);
    j["grid"] = {{"rows", scene.rows},
                 {"cols", scene.cols},
                 {"cell_size", scene.cell_size},
                 {"rows_data", scene.grid}};
    j["goal"] = {env.goal_pose.x, env.goal_pose.y};
    json sampled = json::array();
    for (const auto& cycle : trace.sampled) {
        for (const auto& traj : cycle) {
            json poly = json::array();
            for (const world::Pose& p : traj) poly.push_back({p.x, p.y});
            sampled.push_back(std::move(poly));
        }
    }
    j["sampled"] = std::move(sampled);
    json executed = json::array();
    for (const world::Pose& p : trace.executed) executed.push_back({p.x, p.y});
    j["executed"] = std::move(executed);
    return j;
}

svg::Scene scene_from_trace_json(const json& j) {
    svg::Scene scene;
    try {
        if (j.at("schema_version").get<int>() != 1) throw DataError("trace: schema version");
        const json& g = j.at("grid");
        scene.rows = g.at("rows").get<int>();
        scene.cols = g.at("cols").get<int>();
        scene.cell_size = g.at("cell_size").get<double>();
        scene.grid = g.at("rows_data").get<std::vector<std::string>>();
        if (j.contains("goal")) {
            const auto goal = j.at("goal").get<std::vector<double>>();
            if (goal.size() != 2) throw DataError("trace: bad goal");
            scene.goal = {{goal[0], goal[1]}};
        }
        for (const json& poly : j.at("sampled")) {
            std::vector<std::array<double, 2>> traj;
            for (const json& pt : poly) traj.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
            scene.sampled.push_back(std::move(traj));
        }
        for (const json& pt : j.at("executed")) {
            scene.executed.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("trace: malformed: ") + e.what());
    }
    return scene;
}

int cmd_init_config(const std::string& out_path) {
    dataset_io::write_file_atomic(out_path, config::config_to_json_text(config::default_config()));
    std::cout << "wrote " << out_path << "\n";
    return kExitOk;
}

int cmd_gen_data(const CommonOpts& opts) {
    const config::RunConfig cfg = load_with_overrides(opts);
    ensure_out_dir(cfg.out_dir);
    const world::DatasetConfig dc = config::dataset_config(cfg);
    const world::DatasetBuild build = world::build_dataset(dc, cfg.master_seed);
    dataset_io::write_dataset(dataset_path(cfg), build, dc, cfg.master_seed);
    std::cout << "records=" << build.records.size() << " skipped=" << build.skipped << "\n"
              << "wrote " << dataset_path(cfg) << "\n";
    return kExitOk;
}

int cmd_train(const CommonOpts& opts, const std::string& head, const std::string& depth_flag) {
    const config::RunConfig cfg = load_with_overrides(opts);
    ensure_out_dir(cfg.out_dir);

    policy::PolicyConfig pc = config::policy_config(cfg);
    if (!head.empty()) {
        if (head != "cfm" && head != "ddpm") throw DataError("--head must be cfm or ddpm");
        pc.head_kind = head == "cfm" ? policy::HeadKind::cfm : policy::HeadKind::ddpm;
    }
    if (!depth_flag.empty()) {
        if (depth_flag != "on" && depth_flag != "off") throw DataError("--depth must be on or off");
        pc.use_depth = depth_flag == "on";
    }
    const std::string head_name = pc.head_kind == policy::HeadKind::cfm ? "cfm" : "ddpm";

    const dataset_io::DatasetFile data = dataset_io::read_dataset(dataset_path(cfg));
    if (pc.use_depth && !data.with_depth) {
        throw DataError("train: config requires depth but the dataset was generated without");
    }
    policy::TrainSettings ts = config::train_settings(cfg);
    ts.seed = cfg.master_seed;

    const policy::TrainResult result = policy::train_policy(data.records, pc, ts, data.stats);

    const std::string ckpt = checkpoint_path(cfg, head_name, pc.use_depth);
    checkpoint::write_checkpoint(ckpt, result.policy, ts);

    std::ostringstream losses;
    losses << "step,loss\n";
    for (std::size_t i = 0; i < result.step_losses.size(); ++i) {
        losses << i << ',' << fd(result.step_losses[i]) << '\n';
    }
    const std::string loss_path =
        cfg.out_dir + "/losses_" + head_name + (pc.use_depth ? "_depth" : "_nodepth") + ".csv";
    dataset_io::write_file_atomic(loss_path, losses.str());

    std::cout << "steps=" << result.step_losses.size()
              << " first_loss=" << fd(result.step_losses.front())
              << " final_loss=" << fd(result.step_losses.back()) << "\n"
              << "wrote " << ckpt << "\n";
    return kExitOk;
}

int cmd_eval(const CommonOpts& opts, const std::string& ckpt_path, const std::string& mode_str,
             std::optional<int> k_opt, std::optional<int> episodes_opt) {
    const config::RunConfig cfg = load_with_overrides(opts);
    ensure_out_dir(cfg.out_dir);
    if (!fs::exists(ckpt_path)) throw DataError("missing checkpoint: " + ckpt_path);
    const checkpoint::LoadedCheckpoint loaded = checkpoint::read_checkpoint(ckpt_path);
    const policy::Policy& pol = loaded.policy;

    eval::Mode mode;
    if (mode_str == "nav") {
        mode = eval::Mode::navigation;
    } else if (mode_str == "explore") {
        mode = eval::Mode::exploration;
    } else {
        throw DataError("--mode must be nav or explore");
    }
    const int k = k_opt.value_or(cfg.cfm.default_k);
    const int episodes = episodes_opt.value_or(cfg.eval.episodes);
    eval::EpisodeSettings settings = config::episode_settings(cfg);
    settings.k_steps = k;
    const world::Difficulty difficulty = config::parse_difficulty(cfg.eval.difficulty);
    const world::MapLayout layout =
        mode == eval::Mode::navigation ? world::MapLayout::corridor : world::MapLayout::loop;

    std::vector<eval::EpisodeResult> results(episodes);
    eval::EpisodeTrace trace;
    world::Environment trace_env;
    parallel_for(episodes, cfg.workers, [&](int e) {
        const std::uint64_t env_seed =
            derive_seed(cfg.master_seed, "eval_env", static_cast<std::uint64_t>(e));
        const world::Environment env = world::generate_environment(env_seed, difficulty, layout);
        Rng rng(derive_seed(cfg.master_seed, "eval_rng", static_cast<std::uint64_t>(e)));
        if (e == 0) {
            trace_env = env;
            results[e] = eval::run_episode(env, pol, mode, settings, rng, &trace);
        } else {
            results[e] = eval::run_episode(env, pol, mode, settings, rng);
        }
    });

    int successes = 0;
    double collisions = 0.0, ms = 0.0;
    for (const eval::EpisodeResult& r : results) {
        successes += r.success ? 1 : 0;
        collisions += r.collisions;
        ms += r.mean_inference_ms;
    }
    double lo, hi;
    eval::wilson_interval(successes, episodes, lo, hi);
    const double rate = static_cast<double>(successes) / episodes;
    const double coll_rate = collisions / episodes;

    const std::string tag = std::string(mode_name(mode)) + "_k" + std::to_string(k);
    std::ostringstream csv;
    csv << "schema_version,mode,k,episodes,successes,success_rate,wilson_lo,wilson_hi,"
           "collisions_per_run\n";
    csv << 1 << ',' << mode_name(mode) << ',' << k << ',' << episodes << ',' << successes << ','
        << fd(rate) << ',' << fd(lo) << ',' << fd(hi) << ',' << fd(coll_rate) << '\n';
    dataset_io::write_file_atomic(cfg.out_dir + "/report_" + tag + ".csv", csv.str());

    std::ostringstream timing;
    timing << "episode,mean_inference_ms\n";
    for (int e = 0; e < episodes; ++e) {
        timing << e << ',' << fd(results[e].mean_inference_ms) << '\n';
    }
    dataset_io::write_file_atomic(cfg.out_dir + "/report_" + tag + ".timing.csv", timing.str());

    dataset_io::write_file_atomic(cfg.out_dir + "/trace_" + tag + ".json",
                                  trace_to_json(trace_env, trace).dump() + "\n");

    std::cout << mode_name(mode) << " k=" << k << " episodes=" << episodes
              << " success_rate=" << fd(rate) << " collisions_per_run=" << fd(coll_rate)
              << " mean_inference_ms=" << fd(ms / episodes) << "\n";
    return kExitOk;
}

int cmd_sweep(const CommonOpts& opts, const std::vector<std::string>& checkpoints,
              std::optional<int> episodes_opt) {
    const config::RunConfig cfg = load_with_overrides(opts);
    ensure_out_dir(cfg.out_dir);
    if (checkpoints.empty()) throw DataError("sweep: need at least one checkpoint");

    std::vector<checkpoint::LoadedCheckpoint> loaded;
    loaded.reserve(checkpoints.size());
    std::vector<eval::NamedPolicy> named;
    for (const std::string& path : checkpoints) {
        if (!fs::exists(path)) throw DataError("missing checkpoint: " + path);
        loaded.push_back(checkpoint::read_checkpoint(path));
    }
    for (const checkpoint::LoadedCheckpoint& lc : loaded) {
        const policy::Policy& p = lc.policy;
        std::string name = p.config.head_kind == policy::HeadKind::cfm ? "cfm" : "ddpm";
        name += p.config.use_depth ? "+depth" : "-depth";
        named.push_back({name, &p});
    }

    const int episodes = episodes_opt.value_or(cfg.eval.episodes);
    eval::EpisodeSettings settings = config::episode_settings(cfg);
    const eval::SweepReport report = eval::sweep_k(
        named, cfg.eval.k_values, episodes, cfg.master_seed,
        config::parse_difficulty(cfg.eval.difficulty), settings, cfg.workers);

    std::ostringstream csv;
    csv << "schema_version,method,k,use_depth,episodes,success_rate,wilson_lo,wilson_hi,"
           "collisions_per_run,seed_hash\n";
    std::ostringstream timing;
    timing << "method,k,mean_inference_ms\n";
    for (const eval::SweepCell& c : report.cells) {
        csv << 1 << ',' << c.method << ',' << c.k_steps << ',' << (c.use_depth ? 1 : 0) << ','
            << c.episodes << ',' << fd(c.success_rate) << ',' << fd(c.wilson_lo) << ','
            << fd(c.wilson_hi) << ',' << fd(c.collisions_per_run) << ',' << c.seed_hash << '\n';
        timing << c.method << ',' << c.k_steps << ',' << fd(c.mean_inference_ms) << '\n';
        std::cout << c.method << " k=" << c.k_steps << " success_rate=" << fd(c.success_rate)
                  << " collisions_per_run=" << fd(c.collisions_per_run) << "\n";
    }
    dataset_io::write_file_atomic(cfg.out_dir + "/sweep.csv", csv.str());
    dataset_io::write_file_atomic(cfg.out_dir + "/sweep.timing.csv", timing.str());
    std::cout << "wrote " << cfg.out_dir << "/sweep.csv\n";
    return kExitOk;
}

int cmd_plot(const std::string& trace_path, const std::string& out_path) {
    std::ifstream in(trace_path);
    if (!in) throw DataError("plot: cannot open " + trace_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(std::string("plot: malformed trace: ") + e.what());
    }
    const svg::Scene scene = scene_from_trace_json(j);
    dataset_io::write_file_atomic(out_path, svg::render_svg(scene));
    std::cout << "wrote " << out_path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Flow-matching vs diffusion action policies on a 2D navigation testbed"};
    app.require_subcommand(1);

    std::string init_out = "fmnav.json";
    CLI::App* init = app.add_subcommand("init-config", "Write the default config file");
    init->add_option("--out", init_out, "Output path");

    CommonOpts gen_opts;
    CLI::App* gen = app.add_subcommand("gen-data", "Generate the expert dataset");
    gen->add_option("--config", gen_opts.config_path, "Config file")->required();
    gen->add_option("--seed", gen_opts.seed, "Master seed override");
    gen->add_option("--out", gen_opts.out, "Output directory override");

    CommonOpts train_opts;
    std::string train_head, train_depth;
    CLI::App* train = app.add_subcommand("train", "Train a policy on the generated dataset");
    train->add_option("--config", train_opts.config_path, "Config file")->required();
    train->add_option("--head", train_head, "Generative head: cfm or ddpm");
    train->add_option("--depth", train_depth, "Depth conditioning: on or off");
    train->add_option("--seed", train_opts.seed, "Master seed override");
    train->add_option("--out", train_opts.out, "Output directory override");

    CommonOpts eval_opts;
    std::string eval_ckpt, eval_mode = "nav";
    std::optional<int> eval_k, eval_episodes;
    CLI::App* evalc = app.add_subcommand("eval", "Run evaluation episodes for a checkpoint");
    evalc->add_option("checkpoint", eval_ckpt, "Checkpoint file")->required();
    evalc->add_option("--config", eval_opts.config_path, "Config file")->required();
    evalc->add_option("--mode", eval_mode, "nav or explore");
    evalc->add_option("--k", eval_k, "Inference steps");
    evalc->add_option("--episodes", eval_episodes, "Episode count");
    evalc->add_option("--seed", eval_opts.seed, "Master seed override");
    evalc->add_option("--out", eval_opts.out, "Output directory override");
    evalc->add_option("--workers", eval_opts.workers, "Parallel workers");

    CommonOpts sweep_opts;
    std::vector<std::string> sweep_ckpts;
    std::optional<int> sweep_episodes;
    CLI::App* sweep = app.add_subcommand("sweep", "K-sweep over several checkpoints");
    sweep->add_option("checkpoints", sweep_ckpts, "Checkpoint files")->required();
    sweep->add_option("--config", sweep_opts.config_path, "Config file")->required();
    sweep->add_option("--episodes", sweep_episodes, "Episodes per cell");
    sweep->add_option("--seed", sweep_opts.seed, "Master seed override");
    sweep->add_option("--out", sweep_opts.out, "Output directory override");
    sweep->add_option("--workers", sweep_opts.workers, "Parallel workers");

    std::string plot_trace, plot_out = "trace.svg";
    CLI::App* plot = app.add_subcommand("plot", "Render an episode trace to SVG");
    plot->add_option("trace", plot_trace, "Trace JSON file")->required();
    plot->add_option("--out", plot_out, "Output SVG path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (init->parsed()) return cmd_init_config(init_out);
        if (gen->parsed()) return cmd_gen_data(gen_opts);
        if (train->parsed()) return cmd_train(train_opts, train_head, train_depth);
        if (evalc->parsed()) return cmd_eval(eval_opts, eval_ckpt, eval_mode, eval_k, eval_episodes);
        if (sweep->parsed()) return cmd_sweep(sweep_opts, sweep_ckpts, sweep_episodes);
        if (plot->parsed()) return cmd_plot(plot_trace, plot_out);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
