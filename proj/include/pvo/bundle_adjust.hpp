#pragma once

#include <Eigen/Core>

#include <ostream>
#include <vector>

#include "pvo/camera.hpp"
#include "pvo/patch_graph.hpp"
#include "pvo/se3.hpp"

namespace pvo {

// Damping constant added to the full Hessian diagonal.
constexpr double kDefaultDamping = 1e-4;

// Reprojections this far outside the image no longer count as observations.
constexpr double kMaxObservableMarginPx = 32.0;

struct BAEdge {
    int patch_id = -1;      // index into BAProblem::patches
    int target_pose = -1;   // index into BAProblem::poses
    Vec2 target_point = Vec2::Zero();
    Vec2 weight = Vec2::Zero();  // components in (0,1); 0 marks a disabled residual
};

// Weighted reprojection problem over a set of poses and per-patch inverse
// depths. Patch source_frame fields index into `poses`. Inverse depths are
// the free structure scalars unless masked by depth_free (used by tests
// and for patches outside the optimization window).
struct BAProblem {
    std::vector<Pose> poses;
    std::vector<bool> pose_fixed;
    std::vector<Patch> patches;
    std::vector<bool> depth_free;  // empty means all free
    std::vector<BAEdge> edges;
    Intrinsics intrinsics;
    double damping = kDefaultDamping;

    void validate() const;
};

struct BASolution {
    std::vector<Pose> poses;             // fixed entries bit-identical to the input
    std::vector<double> inverse_depths;  // clamped at 0
    // Weighted RMS residual (pixels) at each iteration boundary:
    // residual_norms[0] before the first update, then one entry per update.
    std::vector<double> residual_norms;
    int num_edges = 0;  // residuals in the assembled problem
};

// Thrown when the window is degenerate (non-finite residuals or a failed
// solve after damping); the caller skips the update.
struct DegenerateProblem : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Optimization target for one edge: center of the patch reprojected at the
// current graph state, plus the edge's revision delta. Frozen by the caller
// for the subsequent Gauss-Newton iterations. Throws if the edge has no
// revision.
Vec2 build_target(const PatchGraph& graph, const PatchGraph::EdgeKey& edge);

// Captured damped normal equations, for oracle comparison in tests.
struct NormalEquations {
    Eigen::MatrixXd h;  // full dense (6F + P) system, free parameters only
    Eigen::VectorXd b;
    int num_free_poses = 0;
    int num_free_depths = 0;

    void dump(std::ostream& out) const;
};

// One damped Gauss-Newton update of poses and inverse depths. Residuals are
// r_e = reprojected_center - target_e, weighted by diag(weight_e); damping
// adds `damping` to the full Hessian diagonal; depths are eliminated with
// the Schur complement; pose updates are applied through retract and depth
// updates clamped at zero.
BASolution gauss_newton_step(const BAProblem& problem, NormalEquations* debug = nullptr);

struct SchurResult {
    Eigen::VectorXd pose_delta;
    Eigen::VectorXd depth_delta;
};

// Solves the block system [H_pp, H_pd; H_pd^T, diag(h_dd)] [dp; dd] = [b_p; b_d]
// by eliminating the depth block. All h_dd entries must be positive (damped).
SchurResult schur_solve(const Eigen::MatrixXd& h_pose_pose, const Eigen::MatrixXd& h_pose_depth,
                        const Eigen::VectorXd& h_depth_depth, const Eigen::VectorXd& b_pose,
                        const Eigen::VectorXd& b_depth);

struct WindowOptions {
    int window = 10;      // number of most recent keyframes with free poses
    int iterations = 2;   // joint Gauss-Newton iterations per call
    // Structure-only iterations run first with every pose held fixed (a
    // diagonal depth solve): freshly spawned patches start from the median
    // depth heuristic, and letting their depths settle before the joint
    // iterations keeps that churn out of the window poses.
    int structure_only_iterations = 0;
    double damping = kDefaultDamping;
};

// Windowed optimization over the patch graph: builds frozen targets from
// the current edge revisions, frees the poses of the last `window`
// keyframes (the very first keyframe always stays fixed) and the inverse
// depths of patches sourced within the window, runs the Gauss-Newton
// iterations, and writes the result back into the graph. Patches sourced
// before the window are left out of the problem entirely. Edges without a
// revision are skipped; edges reprojecting behind the camera contribute
// zero-weight residuals.
BASolution optimize_window(PatchGraph& graph, const WindowOptions& options);

}  // namespace pvo
