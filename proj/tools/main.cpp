#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "fmnet/checkpoint.hpp"
#include "fmnet/cost.hpp"
#include "fmnet/trainer.hpp"
#include "fmnet/util.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fmnet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Effective configuration with per-key provenance, written into the manifest.
struct EffectiveConfig {
    json values = json::object();
    json sources = json::object();

    void set(const std::string& key, json value, const std::string& source) {
        values[key] = std::move(value);
        sources[key] = source;
    }
};

// flags > config file > defaults
template <typename T>
T resolve(const CLI::Option* opt, const T& flag_value, const json& cfg_file,
          const std::string& key, const T& def, EffectiveConfig& eff) {
    if (opt && opt->count() > 0) {
        eff.set(key, flag_value, "flag");
        return flag_value;
    }
    if (cfg_file.contains(key)) {
        T v = cfg_file[key].get<T>();
        eff.set(key, v, "config");
        return v;
    }
    eff.set(key, def, "default");
    return def;
}

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw UsageError(std::string("config file: ") + e.what());
    }
}

void write_manifest(const std::string& out_dir, const std::string& command, uint64_t seed,
                    const EffectiveConfig& eff, const std::vector<std::string>& input_files,
                    const std::vector<std::string>& output_files) {
    json inputs = json::object();
    for (const auto& p : input_files) inputs[p] = sha1_file_hex(p);
    json m{{"command", command},
           {"seed", seed},
           {"config", eff.values},
           {"config_sources", eff.sources},
           {"inputs", inputs},
           {"outputs", output_files}};
    write_file(out_dir + "/manifest.json", m.dump(2) + "\n");
}

// Reduced-size spatial-fusion configuration that trains in minutes on a CPU.
ModelConfig desk_model_config(int horizon) {
    ModelConfig mc;
    mc.backbone = BackboneConfig::fmnet_table1().scaled(64, 0.5);
    mc.raster.n = 64;
    mc.raster.resolution = 0.3;
    mc.horizon = horizon;
    mc.fusion = FusionKind::spatial;
    mc.concat_hidden = 512;
    return mc;
}

ModelConfig model_config_from_sources(const std::string& model_config_path, bool full_scale,
                                      int horizon) {
    if (!model_config_path.empty()) return ModelConfig::from_json(read_file(model_config_path));
    if (full_scale) {
        ModelConfig mc;
        mc.horizon = horizon;
        return mc;
    }
    return desk_model_config(horizon);
}

Dataset load_dataset_checked(const std::string& map_path, const std::string& tracks_path,
                             const std::string& lights_path, const WindowOptions& opt) {
    if (!fs::exists(map_path)) throw UsageError("map file not found: " + map_path);
    if (!fs::exists(tracks_path)) throw UsageError("track log not found: " + tracks_path);
    if (!lights_path.empty() && !fs::exists(lights_path))
        throw UsageError("light log not found: " + lights_path);
    return load_dataset(map_path, tracks_path, lights_path, opt);
}

std::vector<float> floats_from_json(const json& a) {
    std::vector<float> v;
    for (const auto& x : a) v.push_back(x.get<float>());
    return v;
}

json floats_to_json(const std::vector<float>& v) {
    json a = json::array();
    for (float x : v) a.push_back(x);
    return a;
}

int cmd_rasterize(const std::string& map_path, const std::string& tracks_path,
                  const std::string& lights_path, const std::string& actor_id, double time,
                  const RasterConfig& rc, bool multichannel, const std::string& out_dir) {
    const SceneMap map = load_map(map_path);
    const auto log = load_track_log(tracks_path);
    std::vector<ActorState> frame;
    for (const auto& s : log)
        if (std::abs(s.t - time) < kTrackDt / 2) frame.push_back(s);
    const ActorState* target = nullptr;
    for (const auto& s : frame)
        if (s.actor_id == actor_id) target = &s;
    if (!target)
        throw UsageError("actor '" + actor_id + "' not tracked at t=" + format_double(time, 1));

    LightFrame lf;
    const LightFrame* lfp = nullptr;
    if (!lights_path.empty()) {
        for (const auto& f : load_light_log(lights_path))
            if (std::abs(f.t - time) < kTrackDt / 2) {
                lf = f;
                lfp = &lf;
                break;
            }
    }
    fs::create_directories(out_dir);
    std::vector<std::string> outputs;
    if (multichannel) {
        RasterConfig rcm = rc;
        rcm.color_mode = ColorMode::multichannel_binary;
        const RasterImage img = rasterize_multichannel(map, frame, *target, rcm, lfp);
        write_channel_pngs(img, out_dir + "/raster");
        for (int c = 0; c < img.channels; ++c)
            outputs.push_back(out_dir + "/raster_c" + std::to_string(c) + ".png");
    } else {
        const RasterImage img = rasterize(map, frame, *target, rc, lfp);
        write_png(img, out_dir + "/raster.png");
        outputs.push_back(out_dir + "/raster.png");
    }
    json rj{{"n", rc.n},
            {"resolution", rc.resolution},
            {"rotated", rc.rotated},
            {"encode_lane_heading", rc.encode_lane_heading},
            {"encode_traffic_lights", rc.encode_traffic_lights},
            {"color_mode", multichannel ? "multichannel_binary" : "manual_rgb"},
            {"target_placement", {rc.target_w(), rc.target_h()}}};
    write_file(out_dir + "/raster_config.json", rj.dump(2) + "\n");
    outputs.push_back(out_dir + "/raster_config.json");
    std::cout << "wrote " << outputs.size() << " file(s) under " << out_dir << "\n";
    return kExitOk;
}

int cmd_analyze(const std::string& model_config_path, const std::string& csv_path) {
    std::vector<ModelCost> rows;
    auto add_row = [&rows](const std::string& name, const ModelConfig& mc) {
        Model m = build_model(mc);
        const CostReport rep = analyze(m.graph);
        ModelCost r;
        r.name = name;
        r.flops = rep.flops;
        r.params_total = rep.params;
        r.params_backbone = count_params(m.graph, true);
        for (const auto& row : rep.rows) {
            if (scope_is_fusion(row.scope)) continue;
            r.mac_bytes_backbone += row.mac_bytes;
            r.num_ops_backbone += row.canonical_ops;
        }
        rows.push_back(std::move(r));
    };

    if (!model_config_path.empty()) {
        add_row("custom", ModelConfig::from_json(read_file(model_config_path)));
    } else {
        ModelConfig mnv2;
        mnv2.backbone = BackboneConfig::mnv2_width05();
        mnv2.fusion = FusionKind::concat;
        add_row("MNv2-0.5", mnv2);
        ModelConfig fm;
        fm.fusion = FusionKind::concat;
        add_row("FMNet", fm);
        ModelConfig fms;
        fms.fusion = FusionKind::spatial;
        add_row("FMNet-spatial-fusion", fms);
    }
    std::cout << cost_table(rows);
    if (!csv_path.empty()) {
        write_file(csv_path, cost_table_csv(rows));
        std::cout << "csv written to " << csv_path << "\n";
    }
    return kExitOk;
}

int cmd_inspect(const std::string& path) {
    const LoadedCheckpoint ck = read_checkpoint(path);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(ck.fingerprint));
    std::cout << "fingerprint: " << buf << "\n";
    long long total = 0;
    for (const auto& [name, t] : ck.tensors) total += t.shape.elements();
    std::cout << "tensors: " << ck.tensors.size() << " (" << total << " values)\n";
    for (const auto& [k, v] : ck.meta)
        std::cout << "meta." << k << ": " << (v.size() > 64 ? v.substr(0, 61) + "..." : v) << "\n";
    for (const auto& [name, t] : ck.tensors)
        std::cout << "  " << name << "  " << t.shape.str() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bird's-eye-view rasterization and motion prediction toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir, map_path, tracks_path, lights_path, model_config_path;
    std::string actor_id, checkpoint_path, spec_path, grid_path, csv_path;
    uint64_t seed = 0;
    double time = 0.0, resolution = 0.2;
    int raster_n = 300, horizon = 30, stride = 1;
    long long iters = 500;
    int batch = 64;
    double lr0 = 1e-4;
    bool no_rotate = false, no_lane_heading = false, no_lights = false, multichannel = false;
    bool full_scale = false, use_ukf = false;

    auto add_shared = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file (flags take precedence)");
        sub->add_option("--seed", seed, "random seed");
        sub->add_option("--out", out_dir, "output directory");
    };

    CLI::App* raster_cmd = app.add_subcommand("rasterize", "Render one actor-centric raster");
    add_shared(raster_cmd);
    raster_cmd->add_option("--map", map_path, "map JSON")->required();
    raster_cmd->add_option("--tracks", tracks_path, "track log JSONL")->required();
    raster_cmd->add_option("--lights", lights_path, "light-state log JSONL");
    raster_cmd->add_option("--actor-id", actor_id, "target actor id")->required();
    raster_cmd->add_option("--time", time, "timestamp (s)")->required();
    auto* res_opt = raster_cmd->add_option("--resolution", resolution, "meters per pixel");
    auto* n_opt = raster_cmd->add_option("--n", raster_n, "raster side (pixels)");
    raster_cmd->add_flag("--no-rotate", no_rotate, "north-up raster, actor centered");
    raster_cmd->add_flag("--no-lane-heading", no_lane_heading, "constant lane color");
    raster_cmd->add_flag("--no-traffic-lights", no_lights,
                         "drop light markers and crosswalk state");
    raster_cmd->add_flag("--multichannel", multichannel, "binary channel per layer type");

    CLI::App* gen_cmd = app.add_subcommand("generate", "Synthesize scenario files");
    add_shared(gen_cmd);
    gen_cmd->add_option("--spec", spec_path, "scenario spec JSON");

    CLI::App* train_cmd = app.add_subcommand("train", "Train a prediction model");
    add_shared(train_cmd);
    train_cmd->add_option("--map", map_path, "map JSON")->required();
    train_cmd->add_option("--tracks", tracks_path, "track log JSONL")->required();
    train_cmd->add_option("--lights", lights_path, "light-state log JSONL");
    train_cmd->add_option("--model-config", model_config_path, "model config JSON");
    auto* iters_opt = train_cmd->add_option("--iterations", iters, "training iterations");
    auto* batch_opt = train_cmd->add_option("--batch-size", batch, "examples per batch");
    auto* lr_opt = train_cmd->add_option("--lr", lr0, "initial learning rate");
    auto* hor_opt = train_cmd->add_option("--horizon", horizon, "prediction steps");
    train_cmd->add_option("--stride", stride, "window subsampling stride");
    train_cmd->add_flag("--full", full_scale, "published 300x300 / H=60 configuration");
    train_cmd->add_option("--warm-start", checkpoint_path, "checkpoint for fine-tuning");

    CLI::App* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint or the UKF");
    add_shared(eval_cmd);
    eval_cmd->add_option("--map", map_path, "map JSON")->required();
    eval_cmd->add_option("--tracks", tracks_path, "track log JSONL")->required();
    eval_cmd->add_option("--lights", lights_path, "light-state log JSONL");
    eval_cmd->add_option("--checkpoint", checkpoint_path, "trained checkpoint");
    eval_cmd->add_flag("--ukf", use_ukf, "evaluate the filter rollout baseline");
    eval_cmd->add_option("--horizon", horizon, "prediction steps (ukf mode)");
    eval_cmd->add_option("--stride", stride, "window subsampling stride");

    CLI::App* ablate_cmd = app.add_subcommand("ablate", "Train/evaluate a rasterization grid");
    add_shared(ablate_cmd);
    ablate_cmd->add_option("--map", map_path, "map JSON")->required();
    ablate_cmd->add_option("--tracks", tracks_path, "track log JSONL")->required();
    ablate_cmd->add_option("--lights", lights_path, "light-state log JSONL");
    ablate_cmd->add_option("--grid", grid_path, "JSON list of config overrides")->required();
    ablate_cmd->add_option("--iterations", iters, "training iterations per config");
    ablate_cmd->add_option("--batch-size", batch, "examples per batch");
    ablate_cmd->add_option("--horizon", horizon, "prediction steps");
    ablate_cmd->add_option("--stride", stride, "window subsampling stride");

    CLI::App* analyze_cmd = app.add_subcommand("analyze", "Static cost comparison table");
    analyze_cmd->add_option("--model-config", model_config_path, "analyze one custom model");
    analyze_cmd->add_option("--csv", csv_path, "write the table as CSV");

    CLI::App* inspect_cmd = app.add_subcommand("inspect-checkpoint", "Describe a checkpoint file");
    inspect_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        const json cfg_file = load_config_file(config_path);
        EffectiveConfig eff;
        if (cfg_file.contains("seed") && seed == 0) seed = cfg_file["seed"].get<uint64_t>();
        eff.set("seed", seed, "effective");

        if (raster_cmd->parsed()) {
            if (out_dir.empty()) throw UsageError("rasterize requires --out");
            RasterConfig rc;
            rc.resolution = resolve(res_opt, resolution, cfg_file, "resolution", 0.2, eff);
            rc.n = resolve(n_opt, raster_n, cfg_file, "n", 300, eff);
            if (no_rotate) rc.rotated = false;
            if (no_lane_heading) rc.encode_lane_heading = false;
            if (no_lights) rc.encode_traffic_lights = false;
            eff.set("rotated", rc.rotated, no_rotate ? "flag" : "default");
            eff.set("encode_lane_heading", rc.encode_lane_heading,
                    no_lane_heading ? "flag" : "default");
            eff.set("encode_traffic_lights", rc.encode_traffic_lights,
                    no_lights ? "flag" : "default");
            rc.validate();
            const int rcode = cmd_rasterize(map_path, tracks_path, lights_path, actor_id, time, rc,
                                            multichannel, out_dir);
            std::vector<std::string> inputs{map_path, tracks_path};
            if (!lights_path.empty()) inputs.push_back(lights_path);
            write_manifest(out_dir, "rasterize", seed, eff, inputs, {});
            return rcode;
        }

        if (gen_cmd->parsed()) {
            if (out_dir.empty()) throw UsageError("generate requires --out");
            ScenarioSpec spec;
            if (!spec_path.empty()) spec = ScenarioSpec::from_json(read_file(spec_path));
            if (seed != 0) spec.seed = seed;
            eff.set("scenario_spec", json::parse(spec.to_json()),
                    spec_path.empty() ? "default" : "config");
            const GeneratedScenes g = generate_scenarios(spec);
            write_scenarios(g, out_dir);
            write_file(out_dir + "/scenario_spec.json", spec.to_json());
            std::vector<std::string> inputs;
            if (!spec_path.empty()) inputs.push_back(spec_path);
            write_manifest(out_dir, "generate", spec.seed, eff, inputs,
                           {out_dir + "/map.json", out_dir + "/tracks.jsonl",
                            out_dir + "/lights.jsonl"});
            std::cout << "generated " << g.tracks.size() << " track rows, " << g.lights.size()
                      << " light frames\n";
            return kExitOk;
        }

        if (train_cmd->parsed()) {
            if (out_dir.empty()) throw UsageError("train requires --out");
            fs::create_directories(out_dir);
            const int H = resolve(hor_opt, horizon, cfg_file, "horizon", 30, eff);
            ModelConfig mc = model_config_from_sources(model_config_path, full_scale, H);
            TrainConfig tc;
            tc.max_iterations = resolve(iters_opt, iters, cfg_file, "iterations", 500ll, eff);
            tc.batch_size = resolve(batch_opt, batch, cfg_file, "batch_size", 64, eff);
            tc.lr0 = resolve(lr_opt, lr0, cfg_file, "lr", 1e-4, eff);
            tc.seed = seed;
            WindowOptions wo;
            wo.horizon = mc.horizon;
            wo.stride = stride;
            const Dataset ds = load_dataset_checked(map_path, tracks_path, lights_path, wo);
            if (ds.examples.empty()) throw UsageError("no usable training windows in the log");
            const SplitIndices split = split_dataset(ds, seed);
            Model model = build_model(mc);
            Executor<float> exec(model.graph);
            exec.init_params(seed);
            if (!checkpoint_path.empty()) {
                const WarmStartReport rep = warm_start(model.graph, exec, checkpoint_path, false);
                std::cout << "warm start: " << rep.loaded << " tensors loaded, "
                          << rep.skipped.size() << " skipped, " << rep.left_initialized.size()
                          << " initialized\n";
            }
            const ModelInputs inputs = build_inputs(ds, mc, split.train);
            const TrainResult result = train(model, exec, inputs, split.train, tc);
            save_checkpoint(model.graph, exec, out_dir + "/checkpoint.bin",
                            {{"model_config", mc.to_json()},
                             {"aux_mean", floats_to_json(inputs.aux_mean).dump()},
                             {"aux_std", floats_to_json(inputs.aux_std).dump()}});
            write_file(out_dir + "/model_config.json", mc.to_json());
            std::string curve = "iteration,loss\n";
            for (size_t i = 0; i < result.loss_curve.size(); ++i)
                curve += std::to_string(i) + "," + format_double(result.loss_curve[i]) + "\n";
            write_file(out_dir + "/loss_curve.csv", curve);
            const MetricsReport val_rep = evaluate(ds, split.val.empty() ? split.train : split.val,
                                                   model_predictor(model, exec, inputs));
            write_file(out_dir + "/val_metrics.csv", val_rep.to_csv());
            std::vector<std::string> infiles{map_path, tracks_path};
            if (!lights_path.empty()) infiles.push_back(lights_path);
            if (!model_config_path.empty()) infiles.push_back(model_config_path);
            write_manifest(out_dir, "train", seed, eff, infiles,
                           {out_dir + "/checkpoint.bin", out_dir + "/loss_curve.csv",
                            out_dir + "/val_metrics.csv"});
            std::cout << "final training loss " << format_double(result.loss_curve.back(), 4)
                      << " m\n"
                      << val_rep.to_table();
            return kExitOk;
        }

        if (eval_cmd->parsed()) {
            if (out_dir.empty()) throw UsageError("evaluate requires --out");
            if (!use_ukf && checkpoint_path.empty())
                throw UsageError("evaluate needs --checkpoint or --ukf");
            fs::create_directories(out_dir);
            MetricsReport rep;
            std::vector<std::string> infiles{map_path, tracks_path};
            if (!lights_path.empty()) infiles.push_back(lights_path);
            if (use_ukf) {
                WindowOptions wo;
                wo.horizon = horizon;
                wo.stride = stride;
                const Dataset ds = load_dataset_checked(map_path, tracks_path, lights_path, wo);
                std::vector<int> all(ds.examples.size());
                for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
                rep = evaluate(ds, all, ukf_predictor(ds, horizon));
            } else {
                const LoadedCheckpoint ck = read_checkpoint(checkpoint_path);
                auto it = ck.meta.find("model_config");
                if (it == ck.meta.end())
                    throw UsageError("checkpoint lacks an embedded model config");
                const ModelConfig mc = ModelConfig::from_json(it->second);
                WindowOptions wo;
                wo.horizon = mc.horizon;
                wo.stride = stride;
                const Dataset ds = load_dataset_checked(map_path, tracks_path, lights_path, wo);
                Model model = build_model(mc);
                Executor<float> exec(model.graph);
                exec.init_params(seed);
                warm_start(model.graph, exec, checkpoint_path, true);
                std::vector<float> mean, stddev;
                if (ck.meta.count("aux_mean"))
                    mean = floats_from_json(json::parse(ck.meta.at("aux_mean")));
                if (ck.meta.count("aux_std"))
                    stddev = floats_from_json(json::parse(ck.meta.at("aux_std")));
                const ModelInputs inputs = build_inputs(ds, mc, mean, stddev);
                std::vector<int> all(ds.examples.size());
                for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
                rep = evaluate(ds, all, model_predictor(model, exec, inputs));
                infiles.push_back(checkpoint_path);
            }
            write_file(out_dir + "/metrics.csv", rep.to_csv());
            write_manifest(out_dir, "evaluate", seed, eff, infiles, {out_dir + "/metrics.csv"});
            std::cout << rep.to_table();
            return kExitOk;
        }

        if (ablate_cmd->parsed()) {
            if (out_dir.empty()) throw UsageError("ablate requires --out");
            fs::create_directories(out_dir);
            const json grid = json::parse(read_file(grid_path));
            if (!grid.is_array() || grid.empty())
                throw UsageError("ablation grid must be a non-empty JSON array");
            std::vector<AblationConfigEntry> entries;
            for (const auto& item : grid) {
                AblationConfigEntry e;
                e.model = desk_model_config(horizon);
                const json ov = item.value("overrides", json::object());
                if (ov.contains("resolution")) e.model.raster.resolution = ov["resolution"];
                if (ov.contains("rotated")) e.model.raster.rotated = ov["rotated"];
                if (ov.contains("encode_lane_heading"))
                    e.model.raster.encode_lane_heading = ov["encode_lane_heading"];
                if (ov.contains("encode_traffic_lights"))
                    e.model.raster.encode_traffic_lights = ov["encode_traffic_lights"];
                if (ov.contains("learned_colors")) e.model.learned_colors = ov["learned_colors"];
                e.name = item.value("name", "cfg" + std::to_string(entries.size()));
                entries.push_back(std::move(e));
            }
            WindowOptions wo;
            wo.horizon = horizon;
            wo.stride = stride;
            const Dataset ds = load_dataset_checked(map_path, tracks_path, lights_path, wo);
            const SplitIndices split = split_dataset(ds, seed);
            TrainConfig tc;
            tc.max_iterations = iters;
            tc.batch_size = batch;
            tc.seed = seed;
            const MetricsReport rep = run_ablation(entries, ds, split, tc);
            write_file(out_dir + "/ablation.csv", rep.to_csv());
            std::vector<std::string> infiles{map_path, tracks_path, grid_path};
            if (!lights_path.empty()) infiles.push_back(lights_path);
            write_manifest(out_dir, "ablate", seed, eff, infiles, {out_dir + "/ablation.csv"});
            std::cout << rep.to_table();
            return kExitOk;
        }

        if (analyze_cmd->parsed()) return cmd_analyze(model_config_path, csv_path);
        if (inspect_cmd->parsed()) return cmd_inspect(checkpoint_path);
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
