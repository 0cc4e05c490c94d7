#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>

#include "fmnet/geom.hpp"
#include "fmnet/scene.hpp"

namespace fmnet {

// State: [x, y, v, heading, heading_change_rate, a]
constexpr int kUkfDim = 6;
using UkfVec = Eigen::Matrix<double, kUkfDim, 1>;
using UkfMat = Eigen::Matrix<double, kUkfDim, kUkfDim>;

struct UkfState {
    UkfVec mean = UkfVec::Zero();
    UkfMat cov = UkfMat::Identity();
};

struct FilterError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UkfNoise {
    // Per-step process std devs (x, y, v, heading, heading rate, a).
    UkfVec process_std = (UkfVec() << 0.1, 0.1, 0.5, 0.05, 0.05, 0.5).finished();
    // Measurement std devs (x, y, heading).
    Eigen::Vector3d meas_std = Eigen::Vector3d(0.1, 0.1, 0.05);
};

// Constant-turn-rate-and-acceleration step; falls back to the straight-line
// closed form below the turn-rate singularity.
UkfVec ctra_step(const UkfVec& s, double dt);

// Sigma-point propagation (alpha=1e-3, beta=2, kappa=0) of mean/cov through
// an arbitrary state map; exposed for the linear-exactness oracle.
void unscented_transform(const UkfVec& mean, const UkfMat& cov,
                         const std::function<UkfVec(const UkfVec&)>& fn, UkfVec& out_mean,
                         UkfMat& out_cov);

UkfState ukf_predict(const UkfState& s, double dt, const UkfNoise& noise = {});

// Measurement update with observation (x, y, heading); the heading
// innovation is wrapped.
UkfState ukf_update(const UkfState& s, Point2 pos, double heading, const UkfNoise& noise = {});

// Zero-noise propagation of the mean for H steps, reported in the actor
// frame at rollout start.
Trajectory ukf_rollout(const UkfState& s, int horizon, double dt);

// Filter a short observation history (oldest first) and return the posterior
// at the last observation; the standard baseline entry point.
UkfState track_states(const std::vector<ActorState>& history, const UkfNoise& noise = {});

UkfState state_from_observation(const ActorState& obs);

}  // namespace fmnet
