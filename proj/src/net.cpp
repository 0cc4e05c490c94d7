#include "fmnet/net.hpp"

#include <cmath>

#include "json.hpp"

namespace fmnet {

using nlohmann::json;

namespace {

// Phase tags follow output channel width relative to the block input: nodes
// producing k*C channels sit in the upsampled phase.
void tag_phase(Graph& g, int first_node, int upsampled_channels) {
    for (int i = first_node; i < g.num_nodes(); ++i) {
        Node& n = g.nodes[i];
        n.phase = (n.out.c() == upsampled_channels) ? Phase::upsampled : Phase::bottleneck;
    }
}

}  // namespace

int append_mnv2_block(Graph& g, int x, const BlockSpec& spec, const std::string& scope) {
    if (g.shape(x).c() != spec.in_channels)
        throw std::invalid_argument(scope + ": input has " + std::to_string(g.shape(x).c()) +
                                    " channels, spec expects " +
                                    std::to_string(spec.in_channels));
    const int first = g.num_nodes();
    const int kc = spec.upsample_factor * spec.in_channels;
    int h = g.conv2d(x, kc, 1, 1, false, scope + "/expand");
    h = g.batch_norm(h, scope + "/expand_bn");
    h = g.relu(h, scope + "/expand_relu");
    h = g.dwconv2d(h, spec.stride, scope + "/dw");
    h = g.batch_norm(h, scope + "/dw_bn");
    h = g.relu(h, scope + "/dw_relu");
    h = g.conv2d(h, spec.out_channels, 1, 1, false, scope + "/compress");
    h = g.batch_norm(h, scope + "/compress_bn");
    if (spec.stride == 1 && spec.in_channels == spec.out_channels)
        h = g.add(h, x, scope + "/residual");
    tag_phase(g, first, kc);
    return h;
}

int append_fmnet_block(Graph& g, int x, const BlockSpec& spec, const std::string& scope) {
    if (g.shape(x).c() != spec.in_channels)
        throw std::invalid_argument(scope + ": input has " + std::to_string(g.shape(x).c()) +
                                    " channels, spec expects " +
                                    std::to_string(spec.in_channels));
    const int first = g.num_nodes();
    const int kc = spec.upsample_factor * spec.in_channels;
    // bottleneck phase: strided depthwise first, then the linear 1x1 pair
    int h = g.dwconv2d(x, spec.stride, scope + "/dw");
    h = g.conv2d(h, kc, 1, 1, false, scope + "/expand");
    h = g.relu(h, scope + "/expand_relu");
    h = g.conv2d(h, spec.out_channels, 1, 1, false, scope + "/compress");
    h = g.bias_add(h, scope + "/bias");
    int skip = x;
    if (spec.stride != 1) skip = g.subsample(skip, spec.stride, scope + "/skip_subsample");
    if (spec.in_channels != spec.out_channels)
        skip = g.conv2d(skip, spec.out_channels, 1, 1, false, scope + "/skip_proj");
    h = g.add(h, skip, scope + "/residual");
    tag_phase(g, first, kc);
    return h;
}

int append_block(Graph& g, int x, const BlockSpec& spec, const std::string& scope) {
    return spec.variant == BlockVariant::mnv2 ? append_mnv2_block(g, x, spec, scope)
                                              : append_fmnet_block(g, x, spec, scope);
}

BackboneConfig BackboneConfig::fmnet_table1() {
    BackboneConfig c;
    c.variant = BlockVariant::fmnet;
    c.input_size = 300;
    c.stem_channels = 24;
    c.stages = {{12, 1, 2}, {16, 2, 3}, {32, 2, 4}, {48, 1, 3}, {80, 2, 3}, {160, 1, 1}};
    c.embed_channels = 640;
    return c;
}

BackboneConfig BackboneConfig::mnv2_width05() {
    BackboneConfig c;
    c.variant = BlockVariant::mnv2;
    c.input_size = 300;
    c.stem_channels = 16;
    c.stem_dw_stride = 1;
    c.mnv2_t1_bottleneck = true;
    c.t1_channels = 8;
    c.stages = {{12, 2, 2}, {16, 2, 3}, {32, 2, 4}, {48, 1, 3}, {80, 2, 3}, {160, 1, 1}};
    c.embed_channels = 640;
    return c;
}

BackboneConfig BackboneConfig::mnv2_table1() {
    BackboneConfig c = fmnet_table1();
    c.variant = BlockVariant::mnv2;
    return c;
}

BackboneConfig BackboneConfig::scaled(int input_size, double width_mult) const {
    BackboneConfig c = *this;
    c.input_size = input_size;
    auto sc = [width_mult](int ch) {
        return std::max(1, static_cast<int>(std::llround(ch * width_mult)));
    };
    c.stem_channels = sc(c.stem_channels);
    if (c.t1_channels > 0) c.t1_channels = sc(c.t1_channels);
    for (auto& s : c.stages) s.channels = sc(s.channels);
    c.embed_channels = sc(c.embed_channels);
    return c;
}

int build_backbone(Graph& g, int input_node, const BackboneConfig& cfg,
                   std::vector<std::pair<std::string, Shape>>* row_shapes,
                   const FusionHook& after_stage3) {
    const Shape in = g.shape(input_node);
    if (in.rank != 3 || in.d0 != cfg.input_size || in.d1 != cfg.input_size)
        throw std::invalid_argument("backbone expects a " + std::to_string(cfg.input_size) + "x" +
                                    std::to_string(cfg.input_size) + " raster input, got " +
                                    in.str());
    auto record = [&](const std::string& name, int node) {
        if (row_shapes) row_shapes->push_back({name, g.shape(node)});
    };
    record("raster", input_node);

    const bool mnv2 = cfg.variant == BlockVariant::mnv2;
    int h;
    if (mnv2) {
        h = g.conv2d(input_node, cfg.stem_channels, 3, cfg.stem_conv_stride, false, "stem/conv");
        h = g.batch_norm(h, "stem/conv_bn");
        h = g.relu(h, "stem/conv_relu");
        record("stem_conv", h);
        h = g.dwconv2d(h, cfg.stem_dw_stride, "stem/dw");
        h = g.batch_norm(h, "stem/dw_bn");
        h = g.relu(h, "stem/dw_relu");
        record("stem_dw", h);
        if (cfg.mnv2_t1_bottleneck) {
            h = g.conv2d(h, cfg.t1_channels, 1, 1, false, "stem/t1_compress");
            h = g.batch_norm(h, "stem/t1_bn");
            record("stem_t1", h);
        }
    } else {
        h = g.conv2d(input_node, cfg.stem_channels, 3, cfg.stem_conv_stride, true, "stem/conv");
        h = g.relu(h, "stem/conv_relu");
        record("stem_conv", h);
        h = g.dwconv2d(h, cfg.stem_dw_stride, "stem/dw");
        h = g.bias_add(h, "stem/dw_bias");
        h = g.relu(h, "stem/dw_relu");
        record("stem_dw", h);
    }

    int block_id = 0;
    for (size_t gi = 0; gi < cfg.stages.size(); ++gi) {
        const StageSpec& st = cfg.stages[gi];
        for (int r = 0; r < st.repeats; ++r) {
            BlockSpec spec;
            spec.in_channels = g.shape(h).c();
            spec.out_channels = st.channels;
            spec.stride = (r == 0) ? st.stride : 1;
            spec.upsample_factor = cfg.upsample_factor;
            spec.variant = cfg.variant;
            const std::string scope =
                "b" + std::to_string(gi + 1) + "." + std::to_string(r);
            const int first = g.num_nodes();
            h = append_block(g, h, spec, scope);
            g.tag_block(first, block_id++);
        }
        record("block" + std::to_string(gi + 1), h);
        if (after_stage3 && gi == 2) h = after_stage3(g, h);
    }

    if (mnv2) {
        h = g.conv2d(h, cfg.embed_channels, 1, 1, false, "final/conv");
        h = g.batch_norm(h, "final/conv_bn");
        h = g.relu(h, "final/conv_relu");
    } else {
        h = g.conv2d(h, cfg.embed_channels, 1, 1, true, "final/conv");
        h = g.relu(h, "final/conv_relu");
    }
    record("conv1x1", h);
    h = g.global_avg_pool(h, "final/pool");
    record("global_avg_pool", h);
    return h;
}

Model build_model(const ModelConfig& cfg) {
    if (cfg.raster.n != cfg.backbone.input_size)
        throw std::invalid_argument("raster size " + std::to_string(cfg.raster.n) +
                                    " does not match backbone input " +
                                    std::to_string(cfg.backbone.input_size));
    Model m;
    m.cfg = cfg;
    Graph& g = m.graph;
    const int in_ch = cfg.learned_colors ? cfg.multichannel_layers : 3;
    m.raster_input = g.add_input(Shape::hwc(cfg.raster.n, cfg.raster.n, in_ch), "input/raster");
    m.aux_input = g.add_input(Shape::vec(cfg.aux_dim), "input/aux");

    int x = m.raster_input;
    if (cfg.learned_colors) {
        x = g.conv2d(x, 3, 1, 1, true, "color/conv");
    }

    FusionHook hook;
    if (cfg.fusion == FusionKind::spatial) {
        hook = [&m, &cfg](Graph& gg, int tap) {
            const Shape s = gg.shape(tap);
            int f = gg.fc(m.aux_input, s.d0 * s.d1 * cfg.fusion_mid_channels, true, "fusion/fc");
            f = gg.relu(f, "fusion/fc_relu");
            f = gg.reshape(f, Shape::hwc(s.d0, s.d1, cfg.fusion_mid_channels), "fusion/reshape");
            f = gg.conv2d(f, s.d2, 1, 1, true, "fusion/conv");
            return gg.add(tap, f, "fusion/add");
        };
    }
    m.embedding_node = build_backbone(g, x, cfg.backbone, &m.row_shapes, hook);
    m.row_shapes.push_back({"embedding", g.shape(m.embedding_node)});

    const int two_h = 2 * cfg.horizon;
    if (cfg.fusion == FusionKind::concat) {
        int cat = g.concat(m.embedding_node, m.aux_input, "head/concat");
        int h1 = g.fc(cat, cfg.concat_hidden, true, "head/fc1");
        h1 = g.relu(h1, "head/fc1_relu");
        m.output_node = g.fc(h1, two_h, true, "head/fc2");
    } else {
        m.output_node = g.fc(m.embedding_node, two_h, true, "head/fc_out");
    }
    return m;
}

Trajectory to_trajectory(const Tensor& flat) {
    if (flat.shape.rank != 1 || flat.shape.d0 % 2 != 0)
        throw std::invalid_argument("trajectory output must be a flat 2H vector");
    Trajectory t;
    const int H = flat.shape.d0 / 2;
    t.points.reserve(H);
    for (int i = 0; i < H; ++i)
        t.points.push_back({static_cast<double>(flat.v[2 * i]),
                            static_cast<double>(flat.v[2 * i + 1])});
    return t;
}

Trajectory predict(const Model& m, const Executor<float>& exec, const Tensor& raster,
                   const Tensor& aux) {
    ExecState<float> st;
    exec.forward(st, {raster, aux}, false);
    return to_trajectory(st.act[m.output_node]);
}

std::vector<float> raw_aux_features(const Example& ex) {
    std::vector<float> f;
    f.reserve(2 + 3 * ex.past.size());
    f.push_back(static_cast<float>(ex.target.length));
    f.push_back(static_cast<float>(ex.target.width));
    for (const auto& s : ex.past) {
        f.push_back(static_cast<float>(s.velocity));
        f.push_back(static_cast<float>(s.acceleration));
        f.push_back(static_cast<float>(s.heading_change_rate));
    }
    return f;
}

Tensor standardize_aux(const std::vector<float>& raw, const std::vector<float>& mean,
                       const std::vector<float>& stddev) {
    Tensor t = Tensor::zeros(Shape::vec(static_cast<int>(raw.size())));
    for (size_t i = 0; i < raw.size(); ++i) {
        const float sd = stddev.empty() ? 1.f : std::max(stddev[i], 1e-6f);
        const float mu = mean.empty() ? 0.f : mean[i];
        t.v[i] = (raw[i] - mu) / sd;
    }
    return t;
}

Tensor raster_to_tensor(const RasterImage& img) {
    Tensor t = Tensor::zeros(Shape::hwc(img.height, img.width, img.channels));
    const float scale = img.channels == 3 ? 1.f / 255.f : 1.f;
    for (size_t i = 0; i < img.data.size(); ++i) t.v[i] = img.data[i] * scale;
    return t;
}

namespace {

json raster_json(const RasterConfig& r) {
    return json{{"n", r.n},
                {"resolution", r.resolution},
                {"rotated", r.rotated},
                {"encode_lane_heading", r.encode_lane_heading},
                {"encode_traffic_lights", r.encode_traffic_lights},
                {"color_mode",
                 r.color_mode == ColorMode::manual_rgb ? "manual_rgb" : "multichannel_binary"}};
}

RasterConfig raster_from_json(const json& j) {
    RasterConfig r;
    r.n = j.value("n", 300);
    r.resolution = j.value("resolution", 0.2);
    r.rotated = j.value("rotated", true);
    r.encode_lane_heading = j.value("encode_lane_heading", true);
    r.encode_traffic_lights = j.value("encode_traffic_lights", true);
    r.color_mode = j.value("color_mode", "manual_rgb") == std::string("manual_rgb")
                       ? ColorMode::manual_rgb
                       : ColorMode::multichannel_binary;
    return r;
}

}  // namespace

std::string ModelConfig::to_json() const {
    json stages = json::array();
    for (const auto& s : backbone.stages)
        stages.push_back({{"channels", s.channels}, {"stride", s.stride}, {"repeats", s.repeats}});
    json j{{"backbone",
            {{"variant", backbone.variant == BlockVariant::mnv2 ? "mnv2" : "fmnet"},
             {"input_size", backbone.input_size},
             {"input_channels", backbone.input_channels},
             {"stem_channels", backbone.stem_channels},
             {"stem_conv_stride", backbone.stem_conv_stride},
             {"stem_dw_stride", backbone.stem_dw_stride},
             {"mnv2_t1_bottleneck", backbone.mnv2_t1_bottleneck},
             {"t1_channels", backbone.t1_channels},
             {"stages", stages},
             {"embed_channels", backbone.embed_channels},
             {"upsample_factor", backbone.upsample_factor}}},
           {"raster", raster_json(raster)},
           {"aux_dim", aux_dim},
           {"horizon", horizon},
           {"fusion", fusion == FusionKind::concat ? "concat" : "spatial"},
           {"learned_colors", learned_colors},
           {"multichannel_layers", multichannel_layers},
           {"concat_hidden", concat_hidden},
           {"fusion_mid_channels", fusion_mid_channels}};
    return j.dump(2) + "\n";
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    ModelConfig c;
    const json& b = j.at("backbone");
    c.backbone.variant =
        b.value("variant", "fmnet") == std::string("mnv2") ? BlockVariant::mnv2 : BlockVariant::fmnet;
    c.backbone.input_size = b.value("input_size", 300);
    c.backbone.input_channels = b.value("input_channels", 3);
    c.backbone.stem_channels = b.value("stem_channels", 24);
    c.backbone.stem_conv_stride = b.value("stem_conv_stride", 2);
    c.backbone.stem_dw_stride = b.value("stem_dw_stride", 2);
    c.backbone.mnv2_t1_bottleneck = b.value("mnv2_t1_bottleneck", false);
    c.backbone.t1_channels = b.value("t1_channels", 0);
    c.backbone.stages.clear();
    for (const auto& s : b.at("stages"))
        c.backbone.stages.push_back(
            {s.at("channels").get<int>(), s.at("stride").get<int>(), s.at("repeats").get<int>()});
    c.backbone.embed_channels = b.value("embed_channels", 640);
    c.backbone.upsample_factor = b.value("upsample_factor", 6);
    c.raster = raster_from_json(j.at("raster"));
    c.aux_dim = j.value("aux_dim", 17);
    c.horizon = j.value("horizon", 60);
    c.fusion = j.value("fusion", "spatial") == std::string("concat") ? FusionKind::concat
                                                                     : FusionKind::spatial;
    c.learned_colors = j.value("learned_colors", false);
    c.multichannel_layers = j.value("multichannel_layers", kNumLayerTypes);
    c.concat_hidden = j.value("concat_hidden", 4096);
    c.fusion_mid_channels = j.value("fusion_mid_channels", 8);
    return c;
}

}  // namespace fmnet
