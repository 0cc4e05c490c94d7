#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fmnet/graph.hpp"
#include "fmnet/raster.hpp"

namespace fmnet {

enum class BlockVariant { mnv2, fmnet };
enum class FusionKind { concat, spatial };

struct BlockSpec {
    int in_channels = 0;
    int out_channels = 0;
    int stride = 1;  // stride 2 selects the strided block form
    int upsample_factor = 6;
    BlockVariant variant = BlockVariant::fmnet;
};

struct StageSpec {
    int channels = 0;
    int stride = 1;
    int repeats = 1;
};

struct BackboneConfig {
    BlockVariant variant = BlockVariant::fmnet;
    int input_size = 300;
    int input_channels = 3;
    int stem_channels = 24;
    int stem_conv_stride = 2;
    int stem_dw_stride = 2;
    bool mnv2_t1_bottleneck = false;  // MNv2's expansion-1 first bottleneck
    int t1_channels = 0;
    std::vector<StageSpec> stages;
    int embed_channels = 640;
    int upsample_factor = 6;

    // FastMobileNet as published: 300x300x3 in, 640-d embedding out.
    static BackboneConfig fmnet_table1();
    // Genuine MobileNet-v2 geometry at width 0.5 (exact halving, 640 head).
    static BackboneConfig mnv2_width05();
    // MNv2 blocks dropped into the fmnet_table1 geometry; used by the
    // per-block cost comparisons.
    static BackboneConfig mnv2_table1();
    // Reduced copies for desk-scale training and gradient oracles.
    BackboneConfig scaled(int input_size, double width_mult) const;
};

struct ModelConfig {
    BackboneConfig backbone = BackboneConfig::fmnet_table1();
    RasterConfig raster;
    int aux_dim = 17;
    int horizon = 60;
    FusionKind fusion = FusionKind::spatial;
    bool learned_colors = false;
    int multichannel_layers = kNumLayerTypes;
    int concat_hidden = 4096;
    int fusion_mid_channels = 8;

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

// A built model: the graph plus the node ids the harness needs.
struct Model {
    Graph graph;
    ModelConfig cfg;
    int raster_input = -1;
    int aux_input = -1;
    int embedding_node = -1;
    int output_node = -1;
    // Output shapes of the backbone rows (input, stem conv, stem dw, one per
    // block group, 1x1 conv, pooling) for architecture-table assertions.
    std::vector<std::pair<std::string, Shape>> row_shapes;
};

// Appends one block; returns the output node.
int append_mnv2_block(Graph& g, int x, const BlockSpec& spec, const std::string& scope);
int append_fmnet_block(Graph& g, int x, const BlockSpec& spec, const std::string& scope);
int append_block(Graph& g, int x, const BlockSpec& spec, const std::string& scope);

// Invoked on the stage-3 output so spatial fusion can rewire the trunk.
using FusionHook = std::function<int(Graph&, int tap_node)>;

// Backbone through global average pooling; fills row_shapes when given.
int build_backbone(Graph& g, int input_node, const BackboneConfig& cfg,
                   std::vector<std::pair<std::string, Shape>>* row_shapes = nullptr,
                   const FusionHook& after_stage3 = nullptr);

Model build_model(const ModelConfig& cfg);

// Reshape the flat 2H output into H actor-frame waypoints.
Trajectory to_trajectory(const Tensor& flat_output);

// Convenience inference path: raster (+ aux) in, trajectory out.
Trajectory predict(const Model& m, const Executor<float>& exec, const Tensor& raster,
                   const Tensor& aux);

// Standardized auxiliary features: bbox dims plus (v, a, heading rate) for
// the current and past_steps previous states, oldest first.
std::vector<float> raw_aux_features(const Example& ex);
Tensor standardize_aux(const std::vector<float>& raw, const std::vector<float>& mean,
                       const std::vector<float>& stddev);

Tensor raster_to_tensor(const RasterImage& img);

}  // namespace fmnet
