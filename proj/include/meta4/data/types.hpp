#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "meta4/core/error.hpp"

namespace meta4::data {

// The 14 image-schema classes, integer encoding fixed in this order.
enum class SchemaLabel : int {
    kCenterPeriphery = 0,
    kContact,
    kContainment,
    kCovering,
    kForce,
    kLink,
    kObject,
    kPartWhole,
    kScale,
    kSourcePathGoal,
    kSplitting,
    kSubstance,
    kSupport,
    kVerticality,
};

inline constexpr size_t kNumSchemaClasses = 14;

const std::array<std::string, kNumSchemaClasses>& schema_label_names();
const std::string& schema_label_name(SchemaLabel label);
// Throws an Error listing the valid names when unknown.
SchemaLabel parse_schema_label(const std::string& name);

// Upper-body skeleton: 11 joints in a fixed order, parent links forming a
// tree rooted at MidHip.
enum Joint : size_t {
    kNose = 0,
    kNeck,
    kRShoulder,
    kRElbow,
    kRWrist,
    kLShoulder,
    kLElbow,
    kLWrist,
    kMidHip,
    kRHip,
    kLHip,
};

inline constexpr size_t kNumJoints = 11;
inline constexpr size_t kPoseWidth = kNumJoints * 2;  // 22
inline constexpr size_t kPoseFrames = 64;
inline constexpr double kFrameRate = 15.0;

struct Skeleton {
    std::array<std::string, kNumJoints> joint_names;
    // parent[j] for every joint; the root (MidHip) maps to itself.
    std::array<size_t, kNumJoints> parent;

    size_t joint_index(const std::string& name) const;
};

const Skeleton& skeleton();

// 64 frames x 11 joints x 2 coordinates, row-major frames x (x0,y0,x1,y1,...).
struct PoseSequence {
    std::vector<double> values;

    PoseSequence() : values(kPoseFrames * kPoseWidth, 0.0) {}

    double x(size_t frame, size_t joint) const {
        return values[frame * kPoseWidth + joint * 2];
    }
    double y(size_t frame, size_t joint) const {
        return values[frame * kPoseWidth + joint * 2 + 1];
    }
    void set(size_t frame, size_t joint, double px, double py) {
        values[frame * kPoseWidth + joint * 2] = px;
        values[frame * kPoseWidth + joint * 2 + 1] = py;
    }
    void validate() const;
};

// Inverse data for normalize_poses: per-frame neck translation plus the
// global shoulder scale taken from frame 0.
struct NormalizationParams {
    double scale = 1.0;
    std::vector<double> neck_path;  // kPoseFrames x 2

    void validate() const;
};

// Labeled sentence for the schema corpus.
struct TextSample {
    std::string text;
    SchemaLabel label = SchemaLabel::kCenterPeriphery;
};

}  // namespace meta4::data
