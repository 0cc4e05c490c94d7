#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "fmnet/checkpoint.hpp"
#include "fmnet/trainer.hpp"
#include "fmnet/util.hpp"

namespace fmnet {

Dataset load_dataset(const std::string& map_path, const std::string& tracks_path,
                     const std::string& lights_path, const WindowOptions& opt) {
    Dataset ds;
    ds.map = load_map(map_path);
    ds.lights = lights_path.empty() ? std::vector<LightFrame>{} : load_light_log(lights_path);
    const auto log = load_track_log(tracks_path);
    ds.examples = make_examples(log, ds.lights, opt).examples;
    return ds;
}

SplitIndices split_dataset(const Dataset& ds, uint64_t seed) {
    // Group actors by the id prefix before the trailing index so every
    // scenario family lands in every split; 80/10/10 within each family.
    auto family_of = [](const std::string& id) {
        const size_t cut = id.find_last_of('_');
        return cut == std::string::npos ? id : id.substr(0, cut);
    };
    std::map<std::string, std::set<std::string>> families;
    for (const auto& ex : ds.examples)
        families[family_of(ex.target.actor_id)].insert(ex.target.actor_id);

    std::map<std::string, int> bucket;  // 0 train, 1 val, 2 test
    for (auto& [family, members] : families) {
        std::vector<std::string> ordered(members.begin(), members.end());
        Rng rng = make_rng(seed, "dataset_split/" + family);
        std::shuffle(ordered.begin(), ordered.end(), rng);
        const size_t n = ordered.size();
        for (size_t i = 0; i < n; ++i) {
            if (n >= 3 && i + 1 == n)
                bucket[ordered[i]] = 2;
            else if (n >= 4 && i + 2 == n)
                bucket[ordered[i]] = 1;
            else if (i < (n * 8 + 9) / 10)
                bucket[ordered[i]] = 0;
            else if (i < (n * 9) / 10)
                bucket[ordered[i]] = 1;
            else
                bucket[ordered[i]] = 2;
        }
    }
    SplitIndices split;
    for (size_t i = 0; i < ds.examples.size(); ++i) {
        switch (bucket[ds.examples[i].target.actor_id]) {
            case 0: split.train.push_back(static_cast<int>(i)); break;
            case 1: split.val.push_back(static_cast<int>(i)); break;
            default: split.test.push_back(static_cast<int>(i)); break;
        }
    }
    return split;
}

namespace {

std::vector<std::vector<float>> gather_raw_aux(const Dataset& ds, const ModelConfig& cfg) {
    std::vector<std::vector<float>> raw(ds.examples.size());
    for (size_t i = 0; i < ds.examples.size(); ++i) {
        const Example& ex = ds.examples[i];
        raw[i] = raw_aux_features(ex);
        if (static_cast<int>(raw[i].size()) != cfg.aux_dim)
            throw std::invalid_argument("aux feature dim " + std::to_string(raw[i].size()) +
                                        " does not match model aux_dim " +
                                        std::to_string(cfg.aux_dim));
        if (static_cast<int>(ex.ground_truth.size()) != cfg.horizon)
            throw std::invalid_argument("example horizon " +
                                        std::to_string(ex.ground_truth.size()) +
                                        " does not match model horizon " +
                                        std::to_string(cfg.horizon));
    }
    return raw;
}

ModelInputs assemble_inputs(const Dataset& ds, const ModelConfig& cfg,
                            const std::vector<std::vector<float>>& raw,
                            std::vector<float> mean, std::vector<float> stddev);

}  // namespace

ModelInputs build_inputs(const Dataset& ds, const ModelConfig& cfg,
                         const std::vector<int>& standardize_on) {
    const auto raw = gather_raw_aux(ds, cfg);
    const size_t dim = raw.empty() ? 0 : raw[0].size();
    std::vector<float> mean(dim, 0.f), stddev(dim, 1.f);
    if (!standardize_on.empty()) {
        for (int idx : standardize_on)
            for (size_t d = 0; d < dim; ++d) mean[d] += raw[idx][d];
        for (size_t d = 0; d < dim; ++d) mean[d] /= static_cast<float>(standardize_on.size());
        std::vector<float> var(dim, 0.f);
        for (int idx : standardize_on)
            for (size_t d = 0; d < dim; ++d) {
                const float diff = raw[idx][d] - mean[d];
                var[d] += diff * diff;
            }
        for (size_t d = 0; d < dim; ++d)
            stddev[d] = std::sqrt(var[d] / static_cast<float>(standardize_on.size()));
    }
    return assemble_inputs(ds, cfg, raw, std::move(mean), std::move(stddev));
}

ModelInputs build_inputs(const Dataset& ds, const ModelConfig& cfg,
                         const std::vector<float>& aux_mean, const std::vector<float>& aux_std) {
    return assemble_inputs(ds, cfg, gather_raw_aux(ds, cfg), aux_mean, aux_std);
}

namespace {

ModelInputs assemble_inputs(const Dataset& ds, const ModelConfig& cfg,
                            const std::vector<std::vector<float>>& raw,
                            std::vector<float> mean, std::vector<float> stddev) {
    ModelInputs out;
    out.aux_mean = std::move(mean);
    out.aux_std = std::move(stddev);
    out.rasters.reserve(ds.examples.size());
    out.aux.reserve(ds.examples.size());
    out.targets.reserve(ds.examples.size());
    for (size_t i = 0; i < ds.examples.size(); ++i) {
        const Example& ex = ds.examples[i];
        const LightFrame* lf =
            ex.light_frame >= 0 ? &ds.lights[ex.light_frame] : nullptr;
        const RasterImage img =
            cfg.learned_colors
                ? rasterize_multichannel(ds.map, ex.context, ex.target, cfg.raster, lf)
                : rasterize(ds.map, ex.context, ex.target, cfg.raster, lf);
        out.rasters.push_back(raster_to_tensor(img));
        out.aux.push_back(standardize_aux(raw[i], out.aux_mean, out.aux_std));
        Tensor tgt = Tensor::zeros(Shape::vec(2 * cfg.horizon));
        for (int k = 0; k < cfg.horizon; ++k) {
            tgt.v[2 * k] = static_cast<float>(ex.ground_truth.points[k].x);
            tgt.v[2 * k + 1] = static_cast<float>(ex.ground_truth.points[k].y);
        }
        out.targets.push_back(std::move(tgt));
    }
    return out;
}

}  // namespace

namespace {

// mean-ADE loss over one example; fills dL/dout scaled by 1/batch
double ade_loss_grad(const Tensor& out, const Tensor& target, int batch, Tensor& grad) {
    const int H = out.shape.d0 / 2;
    grad.shape = out.shape;
    grad.v.assign(out.v.size(), 0.f);
    double loss = 0.0;
    for (int h = 0; h < H; ++h) {
        const double dx = out.v[2 * h] - target.v[2 * h];
        const double dy = out.v[2 * h + 1] - target.v[2 * h + 1];
        const double n = std::sqrt(dx * dx + dy * dy);
        loss += n;
        const double denom = std::max(n, 1e-12) * H * batch;
        grad.v[2 * h] = static_cast<float>(dx / denom);
        grad.v[2 * h + 1] = static_cast<float>(dy / denom);
    }
    return loss / H;
}

bool graph_has_bn(const Graph& g) {
    for (const auto& n : g.nodes)
        if (n.kind == OpKind::batch_norm) return true;
    return false;
}

}  // namespace

TrainResult train(const Model& model, Executor<float>& exec, const ModelInputs& inputs,
                  const std::vector<int>& train_indices, const TrainConfig& cfg) {
    if (train_indices.empty()) throw TrainError("train: empty training set");
    const Graph& g = model.graph;
    const bool has_bn = graph_has_bn(g);

    std::vector<Tensor> m_state = exec.zero_param_grads();
    std::vector<Tensor> v_state = exec.zero_param_grads();
    std::vector<Tensor> grads = exec.zero_param_grads();

    std::vector<int> order = train_indices;
    Rng shuffle_rng = make_rng(cfg.seed, "batch_shuffle");
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    size_t cursor = 0;

    ExecState<float> st;
    Tensor out_grad;
    TrainResult result;
    result.loss_curve.reserve(cfg.max_iterations);

    for (long long iter = 0; iter < cfg.max_iterations; ++iter) {
        for (auto& t : grads) std::fill(t.v.begin(), t.v.end(), 0.f);
        double batch_loss = 0.0;
        std::vector<int> batch_ids;
        batch_ids.reserve(cfg.batch_size);
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size()) {
                std::shuffle(order.begin(), order.end(), shuffle_rng);
                cursor = 0;
            }
            const int idx = order[cursor++];
            batch_ids.push_back(idx);
            exec.forward(st, {inputs.rasters[idx], inputs.aux[idx]}, true);
            batch_loss +=
                ade_loss_grad(st.act[model.output_node], inputs.targets[idx], cfg.batch_size,
                              out_grad);
            exec.backward(st, model.output_node, out_grad, grads, true);
            if (has_bn) exec.update_bn_stats(st);
        }
        batch_loss /= cfg.batch_size;

        if (!std::isfinite(batch_loss)) {
            double gnorm = 0.0;
            for (const auto& t : grads)
                for (float v : t.v) gnorm += static_cast<double>(v) * v;
            std::ostringstream os;
            os << "non-finite loss at iteration " << iter << "; batch ids:";
            for (int id : batch_ids) os << ' ' << id;
            os << "; grad norm " << std::sqrt(gnorm);
            throw TrainError(os.str());
        }

        const double lr = lr_schedule(iter, cfg.lr0, cfg.lr_decay, cfg.lr_decay_every);
        const double t = static_cast<double>(iter + 1);
        const double bc1 = 1.0 - std::pow(cfg.beta1, t);
        const double bc2 = 1.0 - std::pow(cfg.beta2, t);
        for (size_t p = 0; p < grads.size(); ++p) {
            if (!g.params[p].trainable) continue;
            auto& mp = m_state[p].v;
            auto& vp = v_state[p].v;
            auto& gp = grads[p].v;
            auto& wp = exec.params()[p].v;
            for (size_t i = 0; i < gp.size(); ++i) {
                mp[i] = static_cast<float>(cfg.beta1 * mp[i] + (1.0 - cfg.beta1) * gp[i]);
                vp[i] = static_cast<float>(cfg.beta2 * vp[i] +
                                           (1.0 - cfg.beta2) * static_cast<double>(gp[i]) * gp[i]);
                const double mhat = mp[i] / bc1;
                const double vhat = vp[i] / bc2;
                wp[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg.eps));
            }
        }

        result.loss_curve.push_back(batch_loss);
        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
            (iter + 1) % cfg.checkpoint_every == 0) {
            save_checkpoint(g, exec,
                            cfg.checkpoint_dir + "/ckpt_" + std::to_string(iter + 1) + ".bin",
                            {{"model_config", model.cfg.to_json()}});
        }
    }
    return result;
}

MetricsReport run_ablation(const std::vector<AblationConfigEntry>& grid, const Dataset& ds,
                           const SplitIndices& split, const TrainConfig& tc) {
    MetricsReport combined;
    for (const auto& entry : grid) {
        Model model = build_model(entry.model);
        Executor<float> exec(model.graph);
        exec.init_params(tc.seed);
        ModelInputs inputs = build_inputs(ds, entry.model, split.train);
        train(model, exec, inputs, split.train, tc);
        const auto& eval_on = split.test.empty() ? split.train : split.test;
        MetricsReport rep = evaluate(ds, eval_on, model_predictor(model, exec, inputs));
        for (auto& row : rep.rows) {
            row.label = entry.name + "/" + row.label;
            combined.rows.push_back(row);
        }
    }
    return combined;
}

}  // namespace fmnet
