#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fmnet/net.hpp"
#include "fmnet/scene.hpp"

namespace fmnet {

// --- displacement metrics ---

double ade(const Trajectory& pred, const Trajectory& gt);
double displacement_at(const Trajectory& pred, const Trajectory& gt, double t_seconds,
                       double dt = kTrackDt);

double lr_schedule(long long iteration, double lr0 = 1e-4, double factor = 0.9,
                   long long every = 20000);

struct MetricsRow {
    std::string label;
    int count = 0;
    double ade = 0.0;
    double d_at_1s = 0.0;
    double d_at_5s = 0.0;  // NaN when the horizon is shorter than 5 s
};

struct MetricsReport {
    std::vector<MetricsRow> rows;
    std::string to_csv() const;
    std::string to_table() const;
    const MetricsRow* find(const std::string& label) const;
};

// --- datasets ---

struct Dataset {
    SceneMap map;
    std::vector<LightFrame> lights;
    std::vector<Example> examples;
};

Dataset load_dataset(const std::string& map_path, const std::string& tracks_path,
                     const std::string& lights_path, const WindowOptions& opt);

struct SplitIndices {
    std::vector<int> train, val, test;
};

// 80/10/10 by actor id so no actor's windows straddle a split.
SplitIndices split_dataset(const Dataset& ds, uint64_t seed);

// Rasterized inputs, standardized aux vectors, and flat 2H targets, cached
// for reuse across epochs. Standardization statistics come from the training
// subset.
struct ModelInputs {
    std::vector<Tensor> rasters;
    std::vector<Tensor> aux;
    std::vector<Tensor> targets;
    std::vector<float> aux_mean, aux_std;
};

ModelInputs build_inputs(const Dataset& ds, const ModelConfig& cfg,
                         const std::vector<int>& standardize_on);
// Standardize with previously fitted statistics (evaluation path).
ModelInputs build_inputs(const Dataset& ds, const ModelConfig& cfg,
                         const std::vector<float>& aux_mean, const std::vector<float>& aux_std);

// --- training ---

struct TrainConfig {
    int batch_size = 64;
    double lr0 = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double lr_decay = 0.9;
    long long lr_decay_every = 20000;
    long long max_iterations = 1000;
    uint64_t seed = 0;
    int checkpoint_every = 0;  // 0 disables periodic checkpoints
    std::string checkpoint_dir;
};

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainResult {
    std::vector<double> loss_curve;  // mean batch ADE per iteration
};

// Adam on mean batch ADE; deterministic given the seed. Throws TrainError
// with the offending batch ids and gradient norms if the loss goes
// non-finite.
TrainResult train(const Model& model, Executor<float>& exec, const ModelInputs& inputs,
                  const std::vector<int>& train_indices, const TrainConfig& cfg);

// --- evaluation ---

using PredictFn = std::function<Trajectory(int example_index)>;

MetricsReport evaluate(const Dataset& ds, const std::vector<int>& indices, PredictFn predict,
                       double dt = kTrackDt,
                       const std::function<std::string(const Example&)>& group_by = nullptr);

PredictFn model_predictor(const Model& model, const Executor<float>& exec,
                          const ModelInputs& inputs);
PredictFn ukf_predictor(const Dataset& ds, int horizon, double dt = kTrackDt);

// --- scenario synthesis ---

struct ScenarioSpec {
    uint64_t seed = 0;
    double dt = kTrackDt;
    int straight_pedestrians = 8;
    int crossing_pedestrians = 8;
    int through_bicyclists = 8;
    int turning_bicyclists = 8;
    int red_light_bicyclists = 8;   // paired red/green approaches
    double observation_noise = 0.0; // std dev on x, y (meters) and heading (rad)
    double duration = 14.0;

    std::string to_json() const;
    static ScenarioSpec from_json(const std::string& text);
};

struct GeneratedScenes {
    SceneMap map;
    std::vector<ActorState> tracks;
    std::vector<LightFrame> lights;
};

// Demo intersection map used by the generator and the bundled fixture.
SceneMap demo_intersection_map();

GeneratedScenes generate_scenarios(const ScenarioSpec& spec);
void write_scenarios(const GeneratedScenes& g, const std::string& dir);

// Ablation over rasterization settings: each axis value trains a fresh model
// and reports metrics on the evaluation split.
struct AblationConfigEntry {
    std::string name;
    ModelConfig model;
};

MetricsReport run_ablation(const std::vector<AblationConfigEntry>& grid, const Dataset& ds,
                           const SplitIndices& split, const TrainConfig& tc);

}  // namespace fmnet
