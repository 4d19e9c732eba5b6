#include "pvo/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace pvo {

namespace {

uint64_t hash64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double lattice(int64_t ix, int64_t iy, uint64_t seed) {
    const uint64_t h =
        hash64(static_cast<uint64_t>(ix) * 0x100000001b3ULL ^
               hash64(static_cast<uint64_t>(iy) ^ hash64(seed)));
    return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

double smooth5(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

}  // namespace

double value_noise(double x, double y, uint64_t seed) {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const int64_t ix = static_cast<int64_t>(fx);
    const int64_t iy = static_cast<int64_t>(fy);
    const double tx = smooth5(x - fx);
    const double ty = smooth5(y - fy);
    const double v00 = lattice(ix, iy, seed);
    const double v10 = lattice(ix + 1, iy, seed);
    const double v01 = lattice(ix, iy + 1, seed);
    const double v11 = lattice(ix + 1, iy + 1, seed);
    return (1 - tx) * (1 - ty) * v00 + tx * (1 - ty) * v10 + (1 - tx) * ty * v01 + tx * ty * v11;
}

double textured_noise(double x, double y, uint64_t seed) {
    // Three octaves: the slow one keeps the coarse pyramid level trackable,
    // the middle one carries most of the matching signal, the fast one adds
    // detail. The fast octave stays above the quarter-resolution Nyquist
    // wavelength so the pooled feature grid sees no aliased phantom motion.
    const double slow = value_noise(0.3 * x + 3.1, 0.3 * y - 5.7, hash64(seed + 2));
    const double base = value_noise(x, y, seed);
    const double detail = value_noise(1.6 * x + 11.3, 1.6 * y - 7.9, hash64(seed + 1));
    return 0.45 * slow + 0.35 * base + 0.20 * detail;
}

SimulatedScene SimulatedScene::generate(uint64_t seed, int num_frames, MotionModel motion,
                                        SceneOptions options) {
    if (num_frames < 2) throw std::invalid_argument("simulator: need at least 2 frames");
    if (options.static_tail_frames >= num_frames) {
        throw std::invalid_argument("simulator: static tail covers the whole sequence");
    }

    SimulatedScene scene;
    scene.options_ = options;
    scene.motion_ = motion;
    scene.background_seed_ = hash64(seed ^ 0xb5c0fbcfULL);

    const int moving = num_frames - options.static_tail_frames;
    const Intrinsics& K = options.intrinsics;
    const double mid_depth = 0.5 * (options.min_landmark_depth + options.max_landmark_depth);

    double scale = options.target_flow_px > 0 ? 1.0 : 0.0;
    for (int attempt = 0; attempt < 5; ++attempt) {
        std::mt19937_64 rng(hash64(seed));
        std::normal_distribution<double> gauss(0.0, 1.0);

        // Camera path. World frame = first camera frame.
        scene.poses_.clear();
        scene.poses_.push_back(Pose::identity());
        if (motion == MotionModel::kConstantVelocity) {
            const double speed = scale * options.target_flow_px * mid_depth / K.fx;
            Vec3 dir(0.8 + 0.4 * gauss(rng), 0.3 * gauss(rng), 0.2 * gauss(rng));
            dir.normalize();
            const Vec3 rot = options.rotation_scale * 0.1 * speed / mid_depth *
                             Vec3(gauss(rng), gauss(rng), gauss(rng));
            const Tangent twist(-speed * dir, rot);  // camera moving +dir in the world
            for (int k = 1; k < moving; ++k) {
                scene.poses_.push_back(retract(scene.poses_.back(), twist));
            }
        } else if (motion == MotionModel::kSmoothRandom) {
            const double speed = scale * options.target_flow_px * mid_depth / K.fx;
            Tangent velocity(speed * Vec3(1, 0, 0), Vec3::Zero());
            for (int k = 1; k < moving; ++k) {
                const Vec3 dt_step = 0.35 * speed * Vec3(gauss(rng), 0.6 * gauss(rng),
                                                         0.4 * gauss(rng));
                const Vec3 dr_step = options.rotation_scale * 0.25 * speed / mid_depth *
                                     Vec3(gauss(rng), gauss(rng), gauss(rng));
                velocity.translational = 0.85 * velocity.translational + dt_step;
                velocity.rotational = 0.85 * velocity.rotational + dr_step;
                // Keep the per-frame step near the calibrated speed.
                const double norm = velocity.translational.norm();
                if (norm > 1e-12) velocity.translational *= speed / norm;
                scene.poses_.push_back(retract(scene.poses_.back(), velocity));
            }
        } else {  // kOrbit
            const Vec3 center(0, 0, mid_depth);
            const double radius = mid_depth;
            const double step = scale * options.target_flow_px / K.fx;
            // Arcs below one revolution are continuous; longer orbits snap
            // to whole revolutions so the path closes exactly.
            double sweep = step * std::max(moving - 1, 1);
            if (sweep > 2.0 * M_PI) {
                sweep = 2.0 * M_PI * std::max(1.0, std::round(sweep / (2.0 * M_PI)));
            }
            for (int k = 1; k < moving; ++k) {
                const double theta = sweep * k / std::max(moving - 1, 1);
                const Vec3 c = center + radius * Vec3(std::sin(theta), 0, -std::cos(theta));
                const Vec3 z_axis = (center - c).normalized();
                const Vec3 x_axis = Vec3(0, 1, 0).cross(z_axis).normalized();
                const Vec3 y_axis = z_axis.cross(x_axis);
                Mat3 r_wc;  // camera axes as columns -> world-to-camera is the transpose
                r_wc.col(0) = x_axis;
                r_wc.col(1) = y_axis;
                r_wc.col(2) = z_axis;
                const Mat3 r = r_wc.transpose();
                scene.poses_.push_back(Pose(Quat(r), -(r * c)));
            }
        }
        while (static_cast<int>(scene.poses_.size()) < num_frames) {
            scene.poses_.push_back(scene.poses_.back());
        }

        // Landmarks: a bed anchored at frame 0 plus a trickle per frame so
        // the view stays textured as the camera moves.
        scene.landmarks_.clear();
        const int total = options.num_landmarks > 0 ? options.num_landmarks
                                                    : 64 + 2 * num_frames;
        const int base = std::max(total - 2 * (num_frames - 1), total / 2);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        int next_id = 0;
        auto place = [&](int anchor) {
            const Pose& T = scene.poses_[anchor];
            const Mat3 r_t = T.rotation_matrix().transpose();
            const Vec3 cam_center = -(r_t * T.translation());
            for (int tries = 0; tries < 24; ++tries) {
                const double margin = 24.0;
                const Vec2 pixel(margin + unit(rng) * (options.image_width - 2 * margin),
                                 margin + unit(rng) * (options.image_height - 2 * margin));
                const double depth =
                    options.min_landmark_depth *
                    std::pow(options.max_landmark_depth / options.min_landmark_depth, unit(rng));
                const Vec3 x_cam = depth * K.unproject(pixel);
                const Vec3 world = r_t * (x_cam - T.translation());

                Landmark lm;
                lm.id = next_id;
                lm.world = world;
                lm.normal = r_t.col(2);
                lm.basis_u = r_t.col(0);
                lm.basis_v = r_t.col(1);
                lm.half_size = 0.5 * options.landmark_size_px * depth / K.fx;
                lm.anchor_frame = anchor;
                lm.anchor_depth = depth;
                lm.texture_seed = hash64(seed ^ (0x51ed270bULL + next_id));
                lm.brightness = 0.5 * (unit(rng) - 0.5);
                (void)cam_center;

                // Must be seen somewhere beyond its anchor.
                const int neighbor = anchor + 1 < num_frames ? anchor + 1 : anchor - 1;
                if (scene.visible(world, anchor) && scene.visible(world, neighbor)) {
                    scene.landmarks_.push_back(lm);
                    ++next_id;
                    return;
                }
            }
        };
        for (int i = 0; i < base; ++i) place(0);
        for (int k = 1; k < num_frames && next_id < total; ++k) place(k);
        while (next_id < total) place(static_cast<int>(hash64(seed + next_id) % num_frames));

        if (options.target_flow_px <= 0) break;
        const double measured = scene.mean_flow();
        if (measured <= 1e-9) {
            scale *= 2;
            continue;
        }
        if (std::abs(measured - options.target_flow_px) < 0.05 * options.target_flow_px) break;
        // Quantized revolutions make further orbit corrections oscillate;
        // one proportional adjustment is as close as it gets.
        if (motion == MotionModel::kOrbit && attempt >= 1) break;
        scale *= std::clamp(options.target_flow_px / measured, 0.2, 5.0);
    }

    scene.ground_truth_ = Trajectory();
    for (int k = 0; k < num_frames; ++k) {
        // Static tails repeat the pose; nudge nothing, timestamps only.
        scene.ground_truth_.push_back(scene.timestamp(k), scene.poses_[k]);
    }
    return scene;
}

SimulatedScene::SurfaceHit SimulatedScene::cast_ray(int frame, const Vec2& pixel) const {
    const Pose& T = poses_.at(frame);
    const Mat3 r_t = T.rotation_matrix().transpose();
    const Vec3 origin = -(r_t * T.translation());
    const Vec3 dir = r_t * options_.intrinsics.unproject(pixel);  // z-depth parameterization

    SurfaceHit best;
    if (dir.z() > 1e-12) {
        const double lambda = (options_.background_depth - origin.z()) / dir.z();
        if (lambda > 1e-9) {
            best.hit = true;
            best.depth = lambda;
            best.landmark = -1;
            const Vec3 point = origin + lambda * dir;
            best.uv = Vec2(point.x(), point.y());
        }
    }
    for (const Landmark& lm : landmarks_) {
        const double denom = lm.normal.dot(dir);
        if (std::abs(denom) < 1e-12) continue;
        const double lambda = lm.normal.dot(lm.world - origin) / denom;
        if (lambda <= 1e-9 || (best.hit && lambda >= best.depth)) continue;
        const Vec3 local = origin + lambda * dir - lm.world;
        const double u = lm.basis_u.dot(local);
        const double v = lm.basis_v.dot(local);
        if (std::abs(u) > lm.half_size || std::abs(v) > lm.half_size) continue;
        best.hit = true;
        best.depth = lambda;
        best.landmark = lm.id;
        best.uv = Vec2(u, v);
    }
    return best;
}

double SimulatedScene::inverse_depth_at(int frame, const Vec2& pixel) const {
    const SurfaceHit hit = cast_ray(frame, pixel);
    return hit.hit ? 1.0 / hit.depth : 0.0;
}

Vec2 SimulatedScene::project(const Vec3& world, int frame, bool* in_front) const {
    const Vec3 cam = poses_.at(frame).apply(world);
    if (in_front) *in_front = cam.z() > kDepthEpsilon;
    const double z = std::max(cam.z(), kDepthEpsilon);
    return Vec2(options_.intrinsics.fx * cam.x() / z + options_.intrinsics.cx,
                options_.intrinsics.fy * cam.y() / z + options_.intrinsics.cy);
}

bool SimulatedScene::visible(const Vec3& world, int frame) const {
    bool in_front = false;
    const Vec2 pixel = project(world, frame, &in_front);
    return in_front && pixel.x() >= 0 && pixel.y() >= 0 && pixel.x() <= options_.image_width - 1 &&
           pixel.y() <= options_.image_height - 1;
}

Vec2 SimulatedScene::ground_truth_flow(const Vec2& pixel, int frame_i, int frame_j,
                                       bool* visible_out) const {
    Patch probe = Patch::make(frame_i, pixel, 1, inverse_depth_at(frame_i, pixel));
    const PatchReprojection reproj =
        reproject_patch(poses_.at(frame_i), poses_.at(frame_j), options_.intrinsics, probe);
    const Vec2 target = reproj.points[0];
    if (visible_out) {
        *visible_out = !reproj.behind_camera && target.x() >= 0 && target.y() >= 0 &&
                       target.x() <= options_.image_width - 1 &&
                       target.y() <= options_.image_height - 1;
    }
    return target - pixel;
}

Vec2 SimulatedScene::ground_truth_flow(const Patch& patch, int frame_j, bool* visible_out) const {
    return ground_truth_flow(patch.center(), patch.source_frame, frame_j, visible_out);
}

Image SimulatedScene::render(int frame) const {
    const Pose& T = poses_.at(frame);
    const Mat3 r_t = T.rotation_matrix().transpose();
    const Vec3 origin = -(r_t * T.translation());
    const Intrinsics& K = options_.intrinsics;

    Image image(options_.image_width, options_.image_height);
    std::vector<double> zbuf(image.pixels.size(), std::numeric_limits<double>::infinity());

    // Background plane. The projected mid-octave wavelength lands around
    // 15 px so the quarter-resolution features see real structure.
    const double bg_freq = 1.0 / 2.34;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const Vec3 dir = r_t * K.unproject(Vec2(x, y));
            double value = 0.5;
            if (dir.z() > 1e-12) {
                const double lambda = (options_.background_depth - origin.z()) / dir.z();
                if (lambda > 0) {
                    const Vec3 p = origin + lambda * dir;
                    value = 0.25 + 0.5 * textured_noise(p.x() * bg_freq, p.y() * bg_freq,
                                                        background_seed_);
                    zbuf[static_cast<size_t>(y) * image.width + x] = lambda;
                }
            }
            image.at(x, y) = static_cast<float>(value);
        }
    }

    // Landmark splats, z-buffered.
    for (const Landmark& lm : landmarks_) {
        double min_x = 1e30, min_y = 1e30, max_x = -1e30, max_y = -1e30;
        bool any_front = false;
        for (int corner = 0; corner < 4; ++corner) {
            const double su = corner % 2 == 0 ? -1 : 1;
            const double sv = corner / 2 == 0 ? -1 : 1;
            const Vec3 world =
                lm.world + su * lm.half_size * lm.basis_u + sv * lm.half_size * lm.basis_v;
            bool in_front = false;
            const Vec2 pixel = project(world, frame, &in_front);
            any_front = any_front || in_front;
            min_x = std::min(min_x, pixel.x());
            min_y = std::min(min_y, pixel.y());
            max_x = std::max(max_x, pixel.x());
            max_y = std::max(max_y, pixel.y());
        }
        if (!any_front) continue;
        const int x0 = std::max(0, static_cast<int>(std::floor(min_x)));
        const int y0 = std::max(0, static_cast<int>(std::floor(min_y)));
        const int x1 = std::min(image.width - 1, static_cast<int>(std::ceil(max_x)));
        const int y1 = std::min(image.height - 1, static_cast<int>(std::ceil(max_y)));

        const double freq = 0.85 / lm.half_size;
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const Vec3 dir = r_t * K.unproject(Vec2(x, y));
                const double denom = lm.normal.dot(dir);
                if (std::abs(denom) < 1e-12) continue;
                const double lambda = lm.normal.dot(lm.world - origin) / denom;
                if (lambda <= 1e-9) continue;
                const size_t idx = static_cast<size_t>(y) * image.width + x;
                if (lambda >= zbuf[idx]) continue;
                const Vec3 local = origin + lambda * dir - lm.world;
                const double u = lm.basis_u.dot(local);
                const double v = lm.basis_v.dot(local);
                if (std::abs(u) > lm.half_size || std::abs(v) > lm.half_size) continue;
                zbuf[idx] = lambda;
                const double value = 0.3 + lm.brightness +
                                     0.5 * textured_noise(u * freq, v * freq, lm.texture_seed);
                image.at(x, y) = static_cast<float>(std::clamp(value, 0.0, 1.0));
            }
        }
    }
    return image;
}

double SimulatedScene::mean_flow() const {
    const int moving = num_frames() - options_.static_tail_frames;
    double sum = 0;
    int count = 0;
    for (int k = 0; k + 1 < moving; ++k) {
        for (const Landmark& lm : landmarks_) {
            if (!visible(lm.world, k) || !visible(lm.world, k + 1)) continue;
            sum += (project(lm.world, k + 1) - project(lm.world, k)).norm();
            ++count;
        }
    }
    return count > 0 ? sum / count : 0.0;
}

int SimulatedScene::frame_at_timestamp(double t) const {
    const int k = std::clamp(static_cast<int>(std::lround(t / options_.dt)), 0, num_frames() - 1);
    if (std::abs(t - timestamp(k)) > 0.25 * options_.dt) {
        throw std::invalid_argument("simulator: timestamp matches no frame");
    }
    return k;
}

}  // namespace pvo
