#pragma once

#include <string>

#include "meta4/data/types.hpp"

namespace meta4::viz {

// 400x400 viewport; normalized pose coordinates map through
// px = 200 + 125*x, py = 200 - 125*y (y points up in pose space).
inline constexpr double kCanvasSize = 400.0;
inline constexpr double kScale = 125.0;

double to_px(double x);
double to_py(double y);

// Animated stick figure: one <line> per bone and one <circle> per joint,
// each animated with 64 discrete steps at 15 fps, looping. Byte output is
// deterministic for a given input.
std::string animated_svg_text(const data::PoseSequence& poses);

// A single frame as a static SVG.
std::string frame_svg_text(const data::PoseSequence& poses, size_t frame);

// Writes the animated SVG to `path` and, when `with_stills` is set, the 64
// per-frame stills to "<path minus .svg>_frames/frame_NN.svg".
void render_svg(const data::PoseSequence& poses, const std::string& path,
                bool with_stills = false);

}  // namespace meta4::viz
