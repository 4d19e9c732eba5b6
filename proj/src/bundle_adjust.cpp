#include "pvo/bundle_adjust.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pvo {

void BAProblem::validate() const {
    if (poses.size() != pose_fixed.size()) {
        throw std::invalid_argument("ba: pose/fixed-mask size mismatch");
    }
    if (!depth_free.empty() && depth_free.size() != patches.size()) {
        throw std::invalid_argument("ba: depth mask size mismatch");
    }
    for (const BAEdge& edge : edges) {
        if (edge.patch_id < 0 || edge.patch_id >= static_cast<int>(patches.size()) ||
            edge.target_pose < 0 || edge.target_pose >= static_cast<int>(poses.size())) {
            throw std::invalid_argument("ba: edge references an unknown patch or pose");
        }
        if (!edge.target_point.allFinite()) {
            throw std::invalid_argument("ba: non-finite edge target");
        }
        if (edge.weight.x() < 0 || edge.weight.x() >= 1 || edge.weight.y() < 0 ||
            edge.weight.y() >= 1) {
            throw std::invalid_argument("ba: edge weights must lie in [0, 1)");
        }
    }
    for (const Patch& patch : patches) {
        if (patch.source_frame < 0 || patch.source_frame >= static_cast<int>(poses.size())) {
            throw std::invalid_argument("ba: patch source pose out of range");
        }
    }
}

void NormalEquations::dump(std::ostream& out) const {
    out << h.rows() << " " << num_free_poses << " " << num_free_depths << "\n";
    out.precision(17);
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
        for (Eigen::Index c = 0; c < h.cols(); ++c) out << h(r, c) << " ";
        out << b(r) << "\n";
    }
}

Vec2 build_target(const PatchGraph& graph, const PatchGraph::EdgeKey& edge) {
    const auto it = graph.edges().find(edge);
    if (it == graph.edges().end()) {
        throw std::invalid_argument("build_target: no such edge");
    }
    if (!it->second.has_value()) {
        throw std::invalid_argument("build_target: edge has no revision");
    }
    const Patch& patch = graph.patch(edge.first);
    const PatchReprojection reproj =
        reproject_patch(graph.frame(patch.source_frame).pose, graph.frame(edge.second).pose,
                        graph.intrinsics(), patch);
    return reproj.center(patch) + it->second->delta;
}

SchurResult schur_solve(const Eigen::MatrixXd& h_pose_pose, const Eigen::MatrixXd& h_pose_depth,
                        const Eigen::VectorXd& h_depth_depth, const Eigen::VectorXd& b_pose,
                        const Eigen::VectorXd& b_depth) {
    if ((h_depth_depth.array() <= 0).any()) {
        throw DegenerateProblem("schur: non-positive damped depth-block entry");
    }

    const Eigen::VectorXd d_inv = h_depth_depth.cwiseInverse();
    SchurResult result;

    if (h_pose_pose.rows() > 0) {
        const Eigen::MatrixXd reduced =
            h_pose_pose - h_pose_depth * d_inv.asDiagonal() * h_pose_depth.transpose();
        const Eigen::VectorXd rhs = b_pose - h_pose_depth * d_inv.cwiseProduct(b_depth).eval();
        Eigen::LDLT<Eigen::MatrixXd> ldlt(reduced);
        if (ldlt.info() != Eigen::Success) {
            throw DegenerateProblem("schur: reduced camera system factorization failed");
        }
        result.pose_delta = ldlt.solve(rhs);
        if (!result.pose_delta.allFinite()) {
            throw DegenerateProblem("schur: non-finite pose update");
        }
    } else {
        result.pose_delta.resize(0);
    }

    result.depth_delta =
        d_inv.cwiseProduct(b_depth - h_pose_depth.transpose() * result.pose_delta);
    if (!result.depth_delta.allFinite()) {
        throw DegenerateProblem("schur: non-finite depth update");
    }
    return result;
}

namespace {

// Weighted RMS pixel residual over the problem's edges at its current state.
double weighted_residual_norm(const BAProblem& problem) {
    double sum = 0;
    double weight_sum = 0;
    for (const BAEdge& edge : problem.edges) {
        const Patch& patch = problem.patches[edge.patch_id];
        const PatchReprojection reproj =
            reproject_patch(problem.poses[patch.source_frame], problem.poses[edge.target_pose],
                            problem.intrinsics, patch);
        const Vec2 r = reproj.center(patch) - edge.target_point;
        const Vec2 w = reproj.behind_camera ? Vec2::Zero() : edge.weight;
        sum += w.x() * r.x() * r.x() + w.y() * r.y() * r.y();
        weight_sum += w.x() + w.y();
    }
    return weight_sum > 0 ? std::sqrt(sum / weight_sum) : 0.0;
}

}  // namespace

BASolution gauss_newton_step(const BAProblem& problem, NormalEquations* debug) {
    problem.validate();
    if (problem.edges.empty()) {
        throw std::invalid_argument("ba: need at least one edge");
    }

    // Slot maps for the free parameters.
    std::vector<int> pose_slot(problem.poses.size(), -1);
    int num_free_poses = 0;
    for (size_t i = 0; i < problem.poses.size(); ++i) {
        if (!problem.pose_fixed[i]) pose_slot[i] = num_free_poses++;
    }
    std::vector<int> depth_slot(problem.patches.size(), -1);
    int num_free_depths = 0;
    for (size_t k = 0; k < problem.patches.size(); ++k) {
        if (problem.depth_free.empty() || problem.depth_free[k]) depth_slot[k] = num_free_depths++;
    }

    const int np = 6 * num_free_poses;
    const int nd = num_free_depths;

    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(np + nd, np + nd);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(np + nd);

    for (const BAEdge& edge : problem.edges) {
        const Patch& patch = problem.patches[edge.patch_id];
        const ReprojectionJacobians jac =
            reprojection_jacobians(problem.poses[patch.source_frame],
                                   problem.poses[edge.target_pose], problem.intrinsics, patch);
        const Vec2 residual = jac.center - edge.target_point;
        if (!residual.allFinite()) {
            throw DegenerateProblem("ba: non-finite residual");
        }
        const Vec2 w = jac.behind_camera ? Vec2::Zero() : edge.weight;
        if (w.isZero()) continue;
        const Mat2 weight = w.asDiagonal();

        const int si = pose_slot[patch.source_frame];
        const int sj = pose_slot[edge.target_pose];
        const int sd = depth_slot[edge.patch_id];

        // Column blocks participating in this residual.
        struct Block {
            int offset;
            int cols;
            Eigen::Matrix<double, 2, 6> j;  // first `cols` columns used
        };
        Block blocks[3];
        int num_blocks = 0;
        if (si >= 0) blocks[num_blocks++] = {6 * si, 6, jac.d_pose_i};
        if (sj >= 0) blocks[num_blocks++] = {6 * sj, 6, jac.d_pose_j};
        if (sd >= 0) {
            Eigen::Matrix<double, 2, 6> jd = Eigen::Matrix<double, 2, 6>::Zero();
            jd.col(0) = jac.d_inverse_depth;
            blocks[num_blocks++] = {np + sd, 1, jd};
        }

        for (int a = 0; a < num_blocks; ++a) {
            const auto ja = blocks[a].j.leftCols(blocks[a].cols);
            b.segment(blocks[a].offset, blocks[a].cols) -= ja.transpose() * weight * residual;
            for (int c = 0; c < num_blocks; ++c) {
                const auto jc = blocks[c].j.leftCols(blocks[c].cols);
                h.block(blocks[a].offset, blocks[c].offset, blocks[a].cols, blocks[c].cols) +=
                    ja.transpose() * weight * jc;
            }
        }
    }

    h.diagonal().array() += problem.damping;

    if (debug) {
        debug->h = h;
        debug->b = b;
        debug->num_free_poses = num_free_poses;
        debug->num_free_depths = num_free_depths;
    }

    const SchurResult delta = schur_solve(
        h.topLeftCorner(np, np), h.topRightCorner(np, nd), h.diagonal().tail(nd),
        b.head(np), b.tail(nd));

    BASolution solution;
    solution.num_edges = static_cast<int>(problem.edges.size());
    solution.residual_norms.push_back(weighted_residual_norm(problem));

    solution.poses = problem.poses;
    for (size_t i = 0; i < problem.poses.size(); ++i) {
        if (pose_slot[i] >= 0) {
            solution.poses[i] =
                retract(problem.poses[i], Tangent(delta.pose_delta.segment<6>(6 * pose_slot[i])));
        }
    }
    solution.inverse_depths.resize(problem.patches.size());
    for (size_t k = 0; k < problem.patches.size(); ++k) {
        double d = problem.patches[k].inverse_depth;
        if (depth_slot[k] >= 0) d = std::max(0.0, d + delta.depth_delta(depth_slot[k]));
        solution.inverse_depths[k] = d;
    }

    BAProblem updated = problem;
    updated.poses = solution.poses;
    for (size_t k = 0; k < updated.patches.size(); ++k) {
        updated.patches[k].inverse_depth = solution.inverse_depths[k];
    }
    solution.residual_norms.push_back(weighted_residual_norm(updated));
    return solution;
}

BASolution optimize_window(PatchGraph& graph, const WindowOptions& options) {
    if (options.window < 1) throw std::invalid_argument("ba: window must be >= 1");

    const auto& frames = graph.frames();
    const int num_frames = static_cast<int>(frames.size());

    // Keyframe order position of every surviving frame.
    std::map<int, int> position;
    {
        int pos = 0;
        for (const auto& [index, node] : frames) position[index] = pos++;
    }
    const int window_start = std::max(num_frames - options.window, 0);
    const int first_free = std::max(num_frames - options.window, 1);

    // Patches sourced within the window, plus their revised edges.
    std::vector<int> patch_ids;
    std::vector<std::pair<PatchGraph::EdgeKey, const FlowRevision*>> active;
    for (const auto& [patch_id, patch] : graph.patches()) {
        if (position.at(patch.source_frame) < window_start) continue;
        bool any = false;
        for (const auto& key : graph.edges_of_patch(patch_id)) {
            const auto& revision = graph.edges().at(key);
            if (!revision.has_value()) continue;
            active.emplace_back(key, &*revision);
            any = true;
        }
        if (any) patch_ids.push_back(patch_id);
    }
    if (active.empty()) {
        BASolution noop;
        return noop;
    }

    // Pose set: every frame referenced by an included patch or edge.
    std::map<int, int> pose_index;
    auto touch_frame = [&pose_index](int frame_index) { pose_index.emplace(frame_index, 0); };
    for (int patch_id : patch_ids) touch_frame(graph.patch(patch_id).source_frame);
    for (const auto& [key, revision] : active) touch_frame(key.second);
    {
        int slot = 0;
        for (auto& [frame_index, idx] : pose_index) idx = slot++;
    }

    BAProblem problem;
    problem.intrinsics = graph.intrinsics();
    problem.damping = options.damping;
    problem.poses.reserve(pose_index.size());
    problem.pose_fixed.reserve(pose_index.size());
    for (const auto& [frame_index, slot] : pose_index) {
        problem.poses.push_back(graph.frame(frame_index).pose);
        problem.pose_fixed.push_back(position.at(frame_index) < first_free);
    }

    std::map<int, int> patch_index;
    for (int patch_id : patch_ids) {
        patch_index[patch_id] = static_cast<int>(problem.patches.size());
        Patch patch = graph.patch(patch_id);
        patch.source_frame = pose_index.at(patch.source_frame);
        problem.patches.push_back(std::move(patch));
    }

    // Frozen targets from the current state. Edges reprojecting behind the
    // camera or far outside the image are unobservable; they contribute
    // zero-weight residuals so system dimensions stay put.
    const double margin = 2.0 * kMaxObservableMarginPx;
    for (const auto& [key, revision] : active) {
        const Patch& patch = graph.patch(key.first);
        const PatchReprojection reproj = reproject_patch(
            graph.frame(patch.source_frame).pose, graph.frame(key.second).pose,
            graph.intrinsics(), patch);
        const Vec2 center = reproj.center(patch);
        const bool observable = !reproj.behind_camera && center.x() > -margin &&
                                center.y() > -margin &&
                                center.x() < graph.image_width() - 1 + margin &&
                                center.y() < graph.image_height() - 1 + margin;
        BAEdge edge;
        edge.patch_id = patch_index.at(key.first);
        edge.target_pose = pose_index.at(key.second);
        edge.target_point = center + revision->delta;
        edge.weight = observable ? revision->weight : Vec2::Zero();
        problem.edges.push_back(edge);
    }

    BASolution combined;
    combined.num_edges = static_cast<int>(problem.edges.size());
    combined.poses = problem.poses;
    combined.inverse_depths.reserve(problem.patches.size());
    for (const Patch& patch : problem.patches) {
        combined.inverse_depths.push_back(patch.inverse_depth);
    }

    for (int iter = 0; iter < options.structure_only_iterations; ++iter) {
        BAProblem structure = problem;
        structure.pose_fixed.assign(structure.poses.size(), true);
        const BASolution step = gauss_newton_step(structure);
        for (size_t k = 0; k < problem.patches.size(); ++k) {
            problem.patches[k].inverse_depth = step.inverse_depths[k];
        }
        combined.inverse_depths = step.inverse_depths;
    }

    for (int iter = 0; iter < options.iterations; ++iter) {
        BASolution step = gauss_newton_step(problem);

        // Divergence guard: far from the solution (poor initialization,
        // wild targets) the lightly damped step can overshoot into a
        // collapsed-scale basin it never leaves. Retry such steps with
        // heavier damping and keep the state put if nothing helps.
        if (step.residual_norms.back() > 1.5 * step.residual_norms.front() + 1e-9) {
            bool accepted = false;
            for (double extra = 1e3; extra <= 1e9; extra *= 1e3) {
                problem.damping = options.damping * extra;
                BASolution damped = gauss_newton_step(problem);
                if (damped.residual_norms.back() <=
                    1.5 * damped.residual_norms.front() + 1e-9) {
                    step = damped;
                    accepted = true;
                    break;
                }
            }
            problem.damping = options.damping;
            if (!accepted) {
                if (combined.residual_norms.empty()) {
                    combined.residual_norms.push_back(step.residual_norms.front());
                }
                combined.residual_norms.push_back(step.residual_norms.front());
                continue;  // skip the update entirely
            }
        }

        if (combined.residual_norms.empty()) {
            combined.residual_norms.push_back(step.residual_norms.front());
        }
        combined.residual_norms.push_back(step.residual_norms.back());
        combined.poses = step.poses;
        combined.inverse_depths = step.inverse_depths;
        problem.poses = step.poses;
        for (size_t k = 0; k < problem.patches.size(); ++k) {
            problem.patches[k].inverse_depth = step.inverse_depths[k];
        }
    }

    for (const auto& [frame_index, slot] : pose_index) {
        if (!problem.pose_fixed[slot]) graph.set_pose(frame_index, combined.poses[slot]);
    }
    for (const auto& [patch_id, slot] : patch_index) {
        graph.set_inverse_depth(patch_id, combined.inverse_depths[slot]);
    }
    return combined;
}

}  // namespace pvo
