#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "lmk/example.hpp"
#include "lmk/metrics.hpp"
#include "lmk/netarch.hpp"

namespace lmk {

/// Linear map from 2K unsupervised coordinates to 2J targets, no intercept.
struct RegressorFit {
  Eigen::MatrixXd weights;  // 2K x 2J
  double alpha = 0.1;
  std::string train_id;
};

/// Solves (XᵀX + αI) W = XᵀY. If `mask` (N x J, nonzero = visible) is given,
/// the two columns of target j are fitted on the rows where j is visible.
/// Throws NumericError when α = 0 and XᵀX is singular.
RegressorFit fit_readout(const Eigen::MatrixXd& unsup, const Eigen::MatrixXd& gt, double alpha,
                         const Eigen::MatrixXi* mask = nullptr);

/// max |(XᵀX + αI)W - XᵀY| / max(|XᵀY|, tiny).
double normal_equation_residual(const RegressorFit& fit, const Eigen::MatrixXd& unsup, const Eigen::MatrixXd& gt);

/// Landmark coordinates of a set of images, normalised to [0, 1] per axis
/// (row / H, col / W) and interleaved (r_1, c_1, r_2, c_2, ...).
struct ReadoutData {
  int height = 0, width = 0;
  Eigen::MatrixXd unsup;  // N x 2K
  Eigen::MatrixXd gt;     // N x 2J
  Eigen::MatrixXi mask;   // N x J visibility
  std::vector<LandmarkSet> gt_sets;

  std::size_t size() const { return gt_sets.size(); }
  ReadoutData subset(const std::vector<std::size_t>& rows) const;
};

Eigen::RowVectorXd normalise_landmarks(const std::vector<Point>& pts, int height, int width);
std::vector<Point> denormalise_landmarks(const Eigen::RowVectorXd& row, int height, int width);

/// Runs the model's soft-argmax landmarks over `data`.
ReadoutData collect_readout_data(const LandmarkModel& model, const Dataset& data, unsigned threads = 1);
/// Readout data with given unsupervised landmarks (e.g. oracle landmarks).
ReadoutData readout_data_from(const std::vector<std::vector<Point>>& unsup, const Dataset& data);

/// Regressed landmark sets for every row of `data`.
std::vector<LandmarkSet> predict_landmarks(const RegressorFit& fit, const ReadoutData& data);

struct EvalReport {
  std::string metric;  // "pck@<d>" or "iod-mse"
  double value = 0.0;
  std::vector<double> per_landmark;  // PCK only
  std::size_t samples = 0;

  nlohmann::json to_json() const;
};

struct EvalMetric {
  enum class Kind { Pck, IodMse };
  Kind kind = Kind::Pck;
  double threshold = 3.0;
  std::pair<int, int> eyes{0, 1};

  std::string name() const;
};

/// Throws ConfigError if the fit does not match the data's K or J.
EvalReport evaluate_readout(const RegressorFit& fit, const ReadoutData& test, const EvalMetric& metric);

struct SweepRow {
  std::size_t size = 0;
  bool full = false;
  std::vector<double> values;  // one per repeat
  double mean = 0.0;
  double stddev = 0.0;  // population std over repeats

  nlohmann::json to_json() const;
};

/// For each size (0 = full pool) draws `repeats` subsets of the pool with
/// seeds (seed, size, repeat), fits with `alpha` and evaluates on `test`.
/// The full pool is evaluated once. Throws ConfigError if a size exceeds the pool.
std::vector<SweepRow> sample_efficiency_sweep(const ReadoutData& pool, const ReadoutData& test,
                                              const std::vector<std::size_t>& sizes, int repeats, std::uint64_t seed,
                                              double alpha, const EvalMetric& metric);

/// True when each mean is at most the previous mean plus the larger of the two stds.
bool sweep_non_increasing(const std::vector<SweepRow>& rows);

struct AblationArm {
  std::string name;
  PckReport pck;
  AccuracyCurve curve;  // Acc(d) of regressed landmarks against ground truth
};

struct AblationReport {
  std::vector<std::string> landmark_names;
  double pck_threshold = 0.0;
  std::vector<AblationArm> arms;

  std::string to_table() const;
  nlohmann::json to_json() const;
};

/// Fits each model's readout on `fit_data` and scores it on `test_data`.
/// Throws ConfigError if the models' configs differ.
AblationReport ablation_report(const LandmarkModel& end_to_end, const LandmarkModel& two_step,
                               const Dataset& fit_data, const Dataset& test_data,
                               const std::vector<std::string>& landmark_names, double alpha, double pck_threshold,
                               const std::vector<double>& thresholds, unsigned threads = 1);

/// Errors |pred - gt| over visible landmarks.
std::vector<double> landmark_errors(const std::vector<LandmarkSet>& preds, const std::vector<LandmarkSet>& gts);

}  // namespace lmk
