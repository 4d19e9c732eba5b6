#include "pvo/trajectory.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace pvo {

void Trajectory::push_back(double timestamp, const Pose& pose) {
    if (!entries_.empty() && timestamp <= entries_.back().timestamp) {
        throw std::invalid_argument("trajectory: timestamps must be strictly increasing");
    }
    entries_.push_back({timestamp, pose});
}

Sim3 Sim3::inverse() const {
    Sim3 inv;
    inv.scale = 1.0 / scale;
    inv.rotation = rotation.conjugate();
    inv.translation = -(inv.scale * (inv.rotation * translation));
    return inv;
}

Sim3 Sim3::operator*(const Sim3& other) const {
    Sim3 out;
    out.scale = scale * other.scale;
    out.rotation = (rotation * other.rotation).normalized();
    out.translation = scale * (rotation * other.translation) + translation;
    return out;
}

Trajectory Sim3::apply(const Trajectory& trajectory) const {
    Trajectory out;
    for (const auto& entry : trajectory) {
        const Vec3 p = apply(entry.pose.translation());
        const Quat q = (rotation * entry.pose.rotation()).normalized();
        out.push_back(entry.timestamp, Pose(q, p));
    }
    return out;
}

std::vector<std::pair<size_t, size_t>> associate(const Trajectory& pred, const Trajectory& gt,
                                                 double tolerance_sec) {
    std::vector<std::pair<size_t, size_t>> pairs;
    size_t j = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double t = pred[i].timestamp;
        while (j + 1 < gt.size() &&
               std::abs(gt[j + 1].timestamp - t) <= std::abs(gt[j].timestamp - t)) {
            ++j;
        }
        if (!gt.empty() && std::abs(gt[j].timestamp - t) <= tolerance_sec) {
            pairs.emplace_back(i, j);
        }
    }
    return pairs;
}

Sim3 umeyama_align(const Trajectory& pred, const Trajectory& gt) {
    const auto pairs = associate(pred, gt);
    const size_t n = pairs.size();
    if (n < 3) {
        throw std::runtime_error("umeyama: need at least 3 associated pairs, got " +
                                 std::to_string(n));
    }

    Vec3 mean_p = Vec3::Zero();
    Vec3 mean_g = Vec3::Zero();
    for (const auto& [i, j] : pairs) {
        mean_p += pred[i].pose.translation();
        mean_g += gt[j].pose.translation();
    }
    mean_p /= static_cast<double>(n);
    mean_g /= static_cast<double>(n);

    Mat3 cross_cov = Mat3::Zero();
    double var_p = 0;
    for (const auto& [i, j] : pairs) {
        const Vec3 dp = pred[i].pose.translation() - mean_p;
        const Vec3 dg = gt[j].pose.translation() - mean_g;
        cross_cov += dg * dp.transpose();
        var_p += dp.squaredNorm();
    }
    cross_cov /= static_cast<double>(n);
    var_p /= static_cast<double>(n);

    Eigen::JacobiSVD<Mat3> svd(cross_cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 sv = svd.singularValues();
    if (var_p < 1e-18 || sv(1) < 1e-12 * std::max(sv(0), 1e-12)) {
        throw std::runtime_error("umeyama: degenerate (collinear) point configuration");
    }

    Mat3 sign = Mat3::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) {
        sign(2, 2) = -1;
    }
    const Mat3 r = svd.matrixU() * sign * svd.matrixV().transpose();

    Sim3 result;
    result.scale = (sv.asDiagonal() * sign).trace() / var_p;
    result.rotation = Quat(r).normalized();
    result.translation = mean_g - result.scale * (result.rotation * mean_p);
    return result;
}

double ate(const Trajectory& pred, const Trajectory& gt, AteMode mode) {
    const Sim3 alignment = umeyama_align(pred, gt);
    const auto pairs = associate(pred, gt);

    double sum_sq = 0;
    double sum = 0;
    for (const auto& [i, j] : pairs) {
        const Vec3 err = alignment.apply(pred[i].pose.translation()) - gt[j].pose.translation();
        sum_sq += err.squaredNorm();
        sum += err.norm();
    }
    if (mode == AteMode::kSum) return sum;
    return std::sqrt(sum_sq / static_cast<double>(pairs.size()));
}

Trajectory read_tum(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);

    Trajectory trajectory;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;

        std::istringstream fields(line);
        double t, tx, ty, tz, qx, qy, qz, qw;
        if (!(fields >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
            throw std::runtime_error(path + ":" + std::to_string(line_number) +
                                     ": malformed TUM line (need 8 fields)");
        }
        std::string extra;
        if (fields >> extra) {
            throw std::runtime_error(path + ":" + std::to_string(line_number) +
                                     ": malformed TUM line (trailing fields)");
        }

        Quat q(qw, qx, qy, qz);
        const double norm = q.norm();
        if (norm < 1e-12) {
            throw std::runtime_error(path + ":" + std::to_string(line_number) +
                                     ": zero quaternion");
        }
        if (std::abs(norm - 1.0) > 1e-6) {
            std::cerr << path << ":" << line_number << ": warning: quaternion norm " << norm
                      << ", normalizing\n";
        }
        trajectory.push_back(t, Pose(q, Vec3(tx, ty, tz)));
    }
    return trajectory;
}

void write_tum(const std::string& path, const Trajectory& trajectory) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# timestamp tx ty tz qx qy qz qw\n";
    out.precision(12);
    out.setf(std::ios::fixed);
    for (const auto& entry : trajectory) {
        const Vec3& t = entry.pose.translation();
        const Quat& q = entry.pose.rotation();
        out << entry.timestamp << " " << t.x() << " " << t.y() << " " << t.z() << " " << q.x()
            << " " << q.y() << " " << q.z() << " " << q.w() << "\n";
    }
    if (!out) throw std::runtime_error("short write to " + path);
}

}  // namespace pvo
