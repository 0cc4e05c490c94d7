#include "fmnet/ukf.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace fmnet {

namespace {

constexpr double kAlpha = 1e-3;
constexpr double kBeta = 2.0;
constexpr double kKappa = 0.0;
constexpr double kTurnRateEps = 1e-6;

struct SigmaPoints {
    std::vector<UkfVec> pts;
    std::vector<double> wm, wc;
};

SigmaPoints sigma_points(const UkfVec& mean, const UkfMat& cov) {
    const int n = kUkfDim;
    const double lambda = kAlpha * kAlpha * (n + kKappa) - n;
    Eigen::LLT<UkfMat> llt((n + lambda) * cov);
    if (llt.info() != Eigen::Success)
        throw FilterError("ukf: covariance is not positive definite");
    const UkfMat sqrt_mat = llt.matrixL();
    SigmaPoints sp;
    sp.pts.resize(2 * n + 1);
    sp.wm.resize(2 * n + 1);
    sp.wc.resize(2 * n + 1);
    sp.pts[0] = mean;
    sp.wm[0] = lambda / (n + lambda);
    sp.wc[0] = sp.wm[0] + (1.0 - kAlpha * kAlpha + kBeta);
    for (int i = 0; i < n; ++i) {
        sp.pts[1 + i] = mean + sqrt_mat.col(i);
        sp.pts[1 + n + i] = mean - sqrt_mat.col(i);
        sp.wm[1 + i] = sp.wm[1 + n + i] = 1.0 / (2.0 * (n + lambda));
        sp.wc[1 + i] = sp.wc[1 + n + i] = sp.wm[1 + i];
    }
    return sp;
}

}  // namespace

UkfVec ctra_step(const UkfVec& s, double dt) {
    const double x = s(0), y = s(1), v = s(2), th = s(3), w = s(4), a = s(5);
    UkfVec out = s;
    out(2) = v + a * dt;
    out(3) = normalize_angle(th + w * dt);
    if (std::abs(w) < kTurnRateEps) {
        const double d = v * dt + 0.5 * a * dt * dt;
        out(0) = x + d * std::cos(th);
        out(1) = y + d * std::sin(th);
    } else {
        const double th1 = th + w * dt;
        const double v1 = v + a * dt;
        const double inv_w2 = 1.0 / (w * w);
        out(0) = x + inv_w2 * (v1 * w * std::sin(th1) + a * std::cos(th1) - v * w * std::sin(th) -
                               a * std::cos(th));
        out(1) = y + inv_w2 * (-v1 * w * std::cos(th1) + a * std::sin(th1) + v * w * std::cos(th) -
                               a * std::sin(th));
    }
    return out;
}

void unscented_transform(const UkfVec& mean, const UkfMat& cov,
                         const std::function<UkfVec(const UkfVec&)>& fn, UkfVec& out_mean,
                         UkfMat& out_cov) {
    SigmaPoints sp = sigma_points(mean, cov);
    std::vector<UkfVec> mapped(sp.pts.size());
    for (size_t i = 0; i < sp.pts.size(); ++i) mapped[i] = fn(sp.pts[i]);
    out_mean.setZero();
    for (size_t i = 0; i < mapped.size(); ++i) out_mean += sp.wm[i] * mapped[i];
    out_cov.setZero();
    for (size_t i = 0; i < mapped.size(); ++i) {
        UkfVec d = mapped[i] - out_mean;
        d(3) = normalize_angle(d(3));
        out_cov += sp.wc[i] * d * d.transpose();
    }
}

UkfState ukf_predict(const UkfState& s, double dt, const UkfNoise& noise) {
    if (dt <= 0.0) throw std::invalid_argument("ukf_predict: dt must be positive");
    UkfState out;
    unscented_transform(s.mean, s.cov, [dt](const UkfVec& p) { return ctra_step(p, dt); },
                        out.mean, out.cov);
    for (int i = 0; i < kUkfDim; ++i)
        out.cov(i, i) += noise.process_std(i) * noise.process_std(i);
    out.cov = ((out.cov + out.cov.transpose()) / 2.0).eval();
    return out;
}

UkfState ukf_update(const UkfState& s, Point2 pos, double heading, const UkfNoise& noise) {
    SigmaPoints sp = sigma_points(s.mean, s.cov);
    // measurement model picks (x, y, heading)
    std::vector<Eigen::Vector3d> zs(sp.pts.size());
    for (size_t i = 0; i < sp.pts.size(); ++i)
        zs[i] = Eigen::Vector3d(sp.pts[i](0), sp.pts[i](1), sp.pts[i](3));
    Eigen::Vector3d z_mean = Eigen::Vector3d::Zero();
    for (size_t i = 0; i < zs.size(); ++i) z_mean += sp.wm[i] * zs[i];
    z_mean(2) = normalize_angle(z_mean(2));
    Eigen::Matrix3d S = Eigen::Matrix3d::Zero();
    Eigen::Matrix<double, kUkfDim, 3> C = Eigen::Matrix<double, kUkfDim, 3>::Zero();
    for (size_t i = 0; i < zs.size(); ++i) {
        Eigen::Vector3d dz = zs[i] - z_mean;
        dz(2) = normalize_angle(dz(2));
        UkfVec dx = sp.pts[i] - s.mean;
        dx(3) = normalize_angle(dx(3));
        S += sp.wc[i] * dz * dz.transpose();
        C += sp.wc[i] * dx * dz.transpose();
    }
    for (int i = 0; i < 3; ++i) S(i, i) += noise.meas_std(i) * noise.meas_std(i);
    const Eigen::Matrix<double, kUkfDim, 3> K = C * S.inverse();
    Eigen::Vector3d innov(pos.x - z_mean(0), pos.y - z_mean(1),
                          normalize_angle(heading - z_mean(2)));
    UkfState out;
    out.mean = s.mean + K * innov;
    out.mean(3) = normalize_angle(out.mean(3));
    out.cov = s.cov - K * S * K.transpose();
    out.cov = ((out.cov + out.cov.transpose()) / 2.0).eval();
    Eigen::SelfAdjointEigenSolver<UkfMat> es(out.cov);
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw FilterError("ukf_update: covariance lost positive definiteness (min eig " +
                          std::to_string(es.eigenvalues().minCoeff()) + ")");
    return out;
}

Trajectory ukf_rollout(const UkfState& s, int horizon, double dt) {
    const ActorFrame frame{{s.mean(0), s.mean(1)}, s.mean(3)};
    Trajectory t;
    t.points.reserve(horizon);
    UkfVec cur = s.mean;
    for (int i = 0; i < horizon; ++i) {
        cur = ctra_step(cur, dt);
        t.points.push_back(world_to_actor({cur(0), cur(1)}, frame));
    }
    return t;
}

UkfState state_from_observation(const ActorState& obs) {
    UkfState s;
    s.mean << obs.pose.position.x, obs.pose.position.y, obs.velocity, obs.pose.heading,
        obs.heading_change_rate, obs.acceleration;
    s.cov = UkfMat::Identity();
    s.cov(0, 0) = s.cov(1, 1) = 0.25;
    s.cov(2, 2) = 1.0;
    s.cov(3, 3) = 0.04;
    s.cov(4, 4) = 0.25;
    s.cov(5, 5) = 1.0;
    return s;
}

UkfState track_states(const std::vector<ActorState>& history, const UkfNoise& noise) {
    if (history.empty()) throw std::invalid_argument("track_states: empty history");
    UkfState s = state_from_observation(history.front());
    s = ukf_update(s, history.front().pose.position, history.front().pose.heading, noise);
    for (size_t i = 1; i < history.size(); ++i) {
        const double dt = history[i].t - history[i - 1].t;
        if (dt <= 0) continue;  // padded duplicates in the history window
        s = ukf_predict(s, dt, noise);
        s = ukf_update(s, history[i].pose.position, history[i].pose.heading, noise);
    }
    return s;
}

}  // namespace fmnet
