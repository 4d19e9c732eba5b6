#pragma once

#include <string>
#include <vector>

#include "pvo/se3.hpp"

namespace pvo {

// Time-indexed pose sequence with strictly increasing timestamps.
class Trajectory {
  public:
    struct Entry {
        double timestamp = 0;
        Pose pose;
    };

    Trajectory() = default;

    void push_back(double timestamp, const Pose& pose);
    size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const Entry& operator[](size_t i) const { return entries_[i]; }
    const std::vector<Entry>& entries() const { return entries_; }

    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

  private:
    std::vector<Entry> entries_;
};

// Similarity transform x -> scale * R * x + t.
struct Sim3 {
    double scale = 1.0;
    Quat rotation = Quat::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
    Sim3 inverse() const;
    Sim3 operator*(const Sim3& other) const;  // composition: this after other

    // Transforms positions; orientations are left-composed with the rotation.
    Trajectory apply(const Trajectory& trajectory) const;
};

// Closed-form least-squares Sim(3) aligning the predicted positions onto
// the ground truth: minimizes sum || s R p_i + t - g_i ||^2 over pairs
// associated by nearest timestamp within 0.02 s. Throws std::runtime_error
// with fewer than 3 pairs or a collinear configuration.
Sim3 umeyama_align(const Trajectory& pred, const Trajectory& gt);

// Timestamp association tolerance shared by alignment and the metrics.
constexpr double kAssociationToleranceSec = 0.02;

enum class AteMode {
    kRmse,  // root-mean-square translational error after alignment
    kSum,   // plain sum of translational error norms after alignment
};

double ate(const Trajectory& pred, const Trajectory& gt, AteMode mode = AteMode::kRmse);

// TUM trajectory text format: "timestamp tx ty tz qx qy qz qw" per line,
// '#' starts a comment. Malformed lines are reported with their number;
// non-unit quaternions are normalized with a warning on stderr.
Trajectory read_tum(const std::string& path);
void write_tum(const std::string& path, const Trajectory& trajectory);

// Nearest-timestamp association within the shared tolerance; returns index
// pairs (into pred, into gt).
std::vector<std::pair<size_t, size_t>> associate(const Trajectory& pred, const Trajectory& gt,
                                                 double tolerance_sec = kAssociationToleranceSec);

}  // namespace pvo
