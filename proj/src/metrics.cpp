#include <cmath>
#include <sstream>

#include "fmnet/trainer.hpp"
#include "fmnet/ukf.hpp"
#include "fmnet/util.hpp"

namespace fmnet {

double ade(const Trajectory& pred, const Trajectory& gt) {
    if (pred.size() != gt.size())
        throw std::invalid_argument("ade: trajectory lengths differ (" +
                                    std::to_string(pred.size()) + " vs " +
                                    std::to_string(gt.size()) + ")");
    if (pred.size() == 0) throw std::invalid_argument("ade: empty trajectories");
    double sum = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) sum += dist(pred.points[i], gt.points[i]);
    return sum / static_cast<double>(pred.size());
}

double displacement_at(const Trajectory& pred, const Trajectory& gt, double t_seconds, double dt) {
    if (pred.size() != gt.size()) throw std::invalid_argument("displacement_at: length mismatch");
    const long long step = std::llround(t_seconds / dt);
    if (step < 1 || step > static_cast<long long>(pred.size()))
        throw std::invalid_argument("displacement_at: t=" + format_double(t_seconds, 2) +
                                    "s is outside the horizon");
    return dist(pred.points[step - 1], gt.points[step - 1]);
}

double lr_schedule(long long iteration, double lr0, double factor, long long every) {
    return lr0 * std::pow(factor, static_cast<double>(iteration / every));
}

const MetricsRow* MetricsReport::find(const std::string& label) const {
    for (const auto& r : rows)
        if (r.label == label) return &r;
    return nullptr;
}

std::string MetricsReport::to_csv() const {
    std::ostringstream os;
    os << "label,count,ade,d_at_1s,d_at_5s\n";
    for (const auto& r : rows) {
        os << r.label << ',' << r.count << ',' << format_double(r.ade) << ','
           << format_double(r.d_at_1s) << ',';
        os << (std::isnan(r.d_at_5s) ? std::string("nan") : format_double(r.d_at_5s)) << '\n';
    }
    return os.str();
}

std::string MetricsReport::to_table() const {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-28s %8s %10s %10s %10s\n", "group", "count", "ADE[m]",
                  "@1s[m]", "@5s[m]");
    os << line;
    for (const auto& r : rows) {
        char d5[24];
        if (std::isnan(r.d_at_5s))
            std::snprintf(d5, sizeof d5, "%10s", "-");
        else
            std::snprintf(d5, sizeof d5, "%10.3f", r.d_at_5s);
        std::snprintf(line, sizeof line, "%-28s %8d %10.3f %10.3f %s\n", r.label.c_str(), r.count,
                      r.ade, r.d_at_1s, d5);
        os << line;
    }
    return os.str();
}

MetricsReport evaluate(const Dataset& ds, const std::vector<int>& indices, PredictFn predict,
                       double dt, const std::function<std::string(const Example&)>& group_by) {
    struct Acc {
        int count = 0;
        double ade = 0, d1 = 0, d5 = 0;
        bool has_d5 = true;
    };
    std::map<std::string, Acc> groups;
    auto group_of = [&](const Example& ex) {
        return group_by ? group_by(ex) : std::string(to_string(ex.target.type));
    };
    for (int idx : indices) {
        const Example& ex = ds.examples[idx];
        const Trajectory pred = predict(idx);
        const double a = ade(pred, ex.ground_truth);
        const double d1 = displacement_at(pred, ex.ground_truth, 1.0, dt);
        const long long h5 = std::llround(5.0 / dt);
        const bool has5 = h5 >= 1 && h5 <= static_cast<long long>(pred.size());
        const double d5 = has5 ? displacement_at(pred, ex.ground_truth, 5.0, dt) : 0.0;
        for (const std::string& key : {group_of(ex), std::string("all")}) {
            Acc& acc = groups[key];
            ++acc.count;
            acc.ade += a;
            acc.d1 += d1;
            acc.d5 += d5;
            acc.has_d5 = acc.has_d5 && has5;
        }
    }
    MetricsReport rep;
    for (auto& [label, acc] : groups) {
        MetricsRow row;
        row.label = label;
        row.count = acc.count;
        row.ade = acc.ade / std::max(1, acc.count);
        row.d_at_1s = acc.d1 / std::max(1, acc.count);
        row.d_at_5s = acc.has_d5 ? acc.d5 / std::max(1, acc.count)
                                 : std::numeric_limits<double>::quiet_NaN();
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

PredictFn model_predictor(const Model& model, const Executor<float>& exec,
                          const ModelInputs& inputs) {
    return [&model, &exec, &inputs](int idx) {
        return predict(model, exec, inputs.rasters[idx], inputs.aux[idx]);
    };
}

PredictFn ukf_predictor(const Dataset& ds, int horizon, double dt) {
    return [&ds, horizon, dt](int idx) {
        const Example& ex = ds.examples[idx];
        const UkfState posterior = track_states(ex.past);
        Trajectory world_frame = ukf_rollout(posterior, horizon, dt);
        // rollout points are in the filtered-state frame; re-express them in
        // the frame of the observed actor state at t_j
        const ActorFrame state_frame{{posterior.mean(0), posterior.mean(1)}, posterior.mean(3)};
        const ActorFrame target_frame = ex.target.frame();
        Trajectory out;
        out.points.reserve(world_frame.size());
        for (const auto& p : world_frame.points)
            out.points.push_back(world_to_actor(actor_to_world(p, state_frame), target_frame));
        return out;
    };
}

}  // namespace fmnet
