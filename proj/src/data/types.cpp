#include "meta4/data/types.hpp"

#include <cmath>

namespace meta4::data {

const std::array<std::string, kNumSchemaClasses>& schema_label_names() {
    static const std::array<std::string, kNumSchemaClasses> names = {
        "CENTER-PERIPHERY", "CONTACT",   "CONTAINMENT", "COVERING",
        "FORCE",            "LINK",      "OBJECT",      "PART-WHOLE",
        "SCALE",            "SOURCE_PATH_GOAL",         "SPLITTING",
        "SUBSTANCE",        "SUPPORT",   "VERTICALITY",
    };
    return names;
}

const std::string& schema_label_name(SchemaLabel label) {
    int i = static_cast<int>(label);
    require(i >= 0 && i < static_cast<int>(kNumSchemaClasses),
            "schema label index ", i, " out of range");
    return schema_label_names()[static_cast<size_t>(i)];
}

SchemaLabel parse_schema_label(const std::string& name) {
    const auto& names = schema_label_names();
    for (size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<SchemaLabel>(i);
    }
    std::string valid;
    for (size_t i = 0; i < names.size(); ++i) {
        if (i) valid += ", ";
        valid += names[i];
    }
    raise("unknown schema label '", name, "'; valid labels: ", valid);
}

size_t Skeleton::joint_index(const std::string& name) const {
    for (size_t j = 0; j < kNumJoints; ++j) {
        if (joint_names[j] == name) return j;
    }
    raise("unknown joint name '", name, "'");
}

const Skeleton& skeleton() {
    static const Skeleton s = [] {
        Skeleton sk;
        sk.joint_names = {"Nose",   "Neck",      "RShoulder", "RElbow",
                          "RWrist", "LShoulder", "LElbow",    "LWrist",
                          "MidHip", "RHip",      "LHip"};
        sk.parent[kMidHip] = kMidHip;  // root
        sk.parent[kNeck] = kMidHip;
        sk.parent[kNose] = kNeck;
        sk.parent[kRShoulder] = kNeck;
        sk.parent[kRElbow] = kRShoulder;
        sk.parent[kRWrist] = kRElbow;
        sk.parent[kLShoulder] = kNeck;
        sk.parent[kLElbow] = kLShoulder;
        sk.parent[kLWrist] = kLElbow;
        sk.parent[kRHip] = kMidHip;
        sk.parent[kLHip] = kMidHip;
        return sk;
    }();
    return s;
}

void PoseSequence::validate() const {
    require(values.size() == kPoseFrames * kPoseWidth,
            "pose sequence has ", values.size(), " values, expected ",
            kPoseFrames * kPoseWidth);
    for (double v : values) {
        require(std::isfinite(v), "pose sequence contains non-finite values");
    }
}

void NormalizationParams::validate() const {
    require(scale > 0.0, "normalization scale must be positive, got ", scale);
    require(neck_path.size() == kPoseFrames * 2,
            "normalization neck path has wrong length");
}

}  // namespace meta4::data
