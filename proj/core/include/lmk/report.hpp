#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "lmk/evalharness.hpp"
#include "lmk/metrics.hpp"

namespace lmk {

/// Published full-scale results, shipped for side-by-side display only.
/// None of them is desk-reproducible: the datasets are not redistributable
/// and full-scale training is out of reach on a desktop CPU.
struct ReferenceConstant {
  std::string_view key;
  std::string_view description;
  double value;
  std::string_view unit;
};

inline constexpr ReferenceConstant kReferenceConstants[] = {
    {"bbc_pose.two_step.pck6_avg", "BBC Pose test, PCK@6px average, two-step", 72.9, "%"},
    {"bbc_pose.end_to_end.pck6_avg", "BBC Pose test, PCK@6px average, end-to-end", 44.0, "%"},
    {"bbc_pose.two_step.pck6_head", "BBC Pose test, PCK@6px head, two-step", 99.4, "%"},
    {"bbc_pose.two_step.pck6_wrists", "BBC Pose test, PCK@6px wrists, two-step", 33.5, "%"},
    {"bbc_pose.two_step.pck6_elbows", "BBC Pose test, PCK@6px elbows, two-step", 78.3, "%"},
    {"bbc_pose.two_step.pck6_shoulders", "BBC Pose test, PCK@6px shoulders, two-step", 93.5, "%"},
    {"bbc_pose.two_step.pck6_100_samples", "BBC Pose, readout fit on 100 samples, mean (std 0.6)", 69.4, "%"},
    {"bbc_pose.end_to_end.layer1_acc20", "BBC Pose, Layer-1 Acc(d=20), end-to-end features", 57.0, "%"},
    {"bbc_pose.two_step.layer1_acc20", "BBC Pose, Layer-1 Acc(d=20), pretrained features", 87.0, "%"},
    {"cat_head.k10.iod_mse", "Cat Head full data, K=10 (a second table lists 14.74)", 14.59, "%"},
    {"cat_head.k10.iod_mse_alt", "Cat Head full data, K=10, value listed with the ablation", 14.74, "%"},
    {"cat_head.k20.iod_mse", "Cat Head full data, K=20", 13.80, "%"},
    {"mafl.k30.iod_mse", "MAFL, K=30", 4.59, "%"},
    {"mafl.k50.iod_mse", "MAFL, K=50", 4.31, "%"},
};

/// Text table of the reference constants, each flagged "not desk-reproducible".
std::string reference_table();
nlohmann::json reference_json();

/// Appends one compact JSON object per line.
void append_jsonl(const std::filesystem::path& path, const nlohmann::json& record);
void write_text(const std::filesystem::path& path, std::string_view text);

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
  bool dashed = false;
};

/// Static SVG line plot with axes from 0; x-axis "distance d (px)".
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<PlotSeries>& series, double y_max = 1.0);

/// Text table of a sample-efficiency sweep.
std::string sweep_table(const std::vector<SweepRow>& rows, const std::string& metric);

}  // namespace lmk
