#include "meta4/viz/svg.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace meta4::viz {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

// 64 semicolon-joined per-frame values for one animated attribute.
std::string frame_values(const data::PoseSequence& poses, size_t joint,
                         bool is_y) {
    std::string out;
    for (size_t t = 0; t < data::kPoseFrames; ++t) {
        if (t) out += ';';
        out += is_y ? num(to_py(poses.y(t, joint)))
                    : num(to_px(poses.x(t, joint)));
    }
    return out;
}

std::string animate(const std::string& attr, const std::string& values,
                    const std::string& dur) {
    return "    <animate attributeName=\"" + attr + "\" values=\"" + values +
           "\" dur=\"" + dur + "\" calcMode=\"discrete\" "
           "repeatCount=\"indefinite\"/>\n";
}

std::string duration() {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6fs",
                  static_cast<double>(data::kPoseFrames) / data::kFrameRate);
    return buf;
}

std::string header() {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" "
           "height=\"400\" viewBox=\"0 0 400 400\">\n"
           "  <rect width=\"400\" height=\"400\" fill=\"#fafafa\"/>\n";
}

}  // namespace

double to_px(double x) { return kCanvasSize / 2.0 + kScale * x; }
double to_py(double y) { return kCanvasSize / 2.0 - kScale * y; }

std::string animated_svg_text(const data::PoseSequence& poses) {
    poses.validate();
    const data::Skeleton& sk = data::skeleton();
    const std::string dur = duration();
    std::string out = header();

    for (size_t j = 0; j < data::kNumJoints; ++j) {
        size_t p = sk.parent[j];
        if (p == j) continue;  // root has no bone
        out += "  <line x1=\"" + num(to_px(poses.x(0, j))) + "\" y1=\"" +
               num(to_py(poses.y(0, j))) + "\" x2=\"" +
               num(to_px(poses.x(0, p))) + "\" y2=\"" +
               num(to_py(poses.y(0, p))) +
               "\" stroke=\"#335577\" stroke-width=\"3\" "
               "stroke-linecap=\"round\">\n";
        out += animate("x1", frame_values(poses, j, false), dur);
        out += animate("y1", frame_values(poses, j, true), dur);
        out += animate("x2", frame_values(poses, p, false), dur);
        out += animate("y2", frame_values(poses, p, true), dur);
        out += "  </line>\n";
    }
    for (size_t j = 0; j < data::kNumJoints; ++j) {
        out += "  <circle cx=\"" + num(to_px(poses.x(0, j))) + "\" cy=\"" +
               num(to_py(poses.y(0, j))) +
               "\" r=\"4\" fill=\"#cc4433\">\n";
        out += animate("cx", frame_values(poses, j, false), dur);
        out += animate("cy", frame_values(poses, j, true), dur);
        out += "  </circle>\n";
    }
    out += "</svg>\n";
    return out;
}

std::string frame_svg_text(const data::PoseSequence& poses, size_t frame) {
    poses.validate();
    require(frame < data::kPoseFrames, "frame_svg_text: frame ", frame,
            " out of range");
    const data::Skeleton& sk = data::skeleton();
    std::string out = header();
    for (size_t j = 0; j < data::kNumJoints; ++j) {
        size_t p = sk.parent[j];
        if (p == j) continue;
        out += "  <line x1=\"" + num(to_px(poses.x(frame, j))) + "\" y1=\"" +
               num(to_py(poses.y(frame, j))) + "\" x2=\"" +
               num(to_px(poses.x(frame, p))) + "\" y2=\"" +
               num(to_py(poses.y(frame, p))) +
               "\" stroke=\"#335577\" stroke-width=\"3\" "
               "stroke-linecap=\"round\"/>\n";
    }
    for (size_t j = 0; j < data::kNumJoints; ++j) {
        out += "  <circle cx=\"" + num(to_px(poses.x(frame, j))) + "\" cy=\"" +
               num(to_py(poses.y(frame, j))) +
               "\" r=\"4\" fill=\"#cc4433\"/>\n";
    }
    out += "</svg>\n";
    return out;
}

void render_svg(const data::PoseSequence& poses, const std::string& path,
                bool with_stills) {
    namespace fs = std::filesystem;
    fs::path out(path);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    {
        std::ofstream f(out, std::ios::binary);
        require(f.good(), "render_svg: cannot write ", path);
        f << animated_svg_text(poses);
    }
    if (!with_stills) return;
    fs::path dir = out.parent_path() / (out.stem().string() + "_frames");
    fs::create_directories(dir);
    for (size_t t = 0; t < data::kPoseFrames; ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%02zu.svg", t);
        std::ofstream f(dir / name, std::ios::binary);
        require(f.good(), "render_svg: cannot write ",
                (dir / name).string());
        f << frame_svg_text(poses, t);
    }
}

}  // namespace meta4::viz
