#include "lmk/evalharness.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "lmk/errors.hpp"
#include "lmk/parallel.hpp"
#include "lmk/rng.hpp"

namespace lmk {

namespace {

Eigen::MatrixXd solve_ridge(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double alpha) {
  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += alpha;
  const Eigen::MatrixXd rhs = x.transpose() * y;
  if (alpha == 0.0) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    if (lu.rank() < gram.rows()) {
      throw NumericError("fit_readout: X^T X is singular (rank " + std::to_string(lu.rank()) + " of " +
                         std::to_string(gram.rows()) + "); use ridge alpha > 0");
    }
    return lu.solve(rhs);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success) throw NumericError("fit_readout: ridge system could not be factorised");
  return ldlt.solve(rhs);
}

}  // namespace

RegressorFit fit_readout(const Eigen::MatrixXd& unsup, const Eigen::MatrixXd& gt, double alpha,
                         const Eigen::MatrixXi* mask) {
  if (unsup.rows() < 1) throw ConfigError("fit_readout: need at least one sample");
  if (unsup.rows() != gt.rows()) throw DimensionError("fit_readout: sample counts differ");
  if (!(alpha >= 0.0)) throw ConfigError("fit_readout: alpha must be >= 0");
  if (!unsup.allFinite() || !gt.allFinite()) throw NumericError("fit_readout: non-finite coordinates");
  RegressorFit fit;
  fit.alpha = alpha;
  if (!mask || (mask->array() != 0).all()) {
    fit.weights = solve_ridge(unsup, gt, alpha);
    return fit;
  }
  if (mask->rows() != gt.rows() || 2 * mask->cols() != gt.cols()) throw DimensionError("fit_readout: mask shape");
  fit.weights = Eigen::MatrixXd::Zero(unsup.cols(), gt.cols());
  for (Eigen::Index j = 0; j < mask->cols(); ++j) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < mask->rows(); ++i) {
      if ((*mask)(i, j) != 0) rows.push_back(i);
    }
    if (rows.empty()) continue;
    Eigen::MatrixXd xs(static_cast<Eigen::Index>(rows.size()), unsup.cols());
    Eigen::MatrixXd ys(static_cast<Eigen::Index>(rows.size()), 2);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      xs.row(static_cast<Eigen::Index>(r)) = unsup.row(rows[r]);
      ys.row(static_cast<Eigen::Index>(r)) = gt.block(rows[r], 2 * j, 1, 2);
    }
    fit.weights.middleCols(2 * j, 2) = solve_ridge(xs, ys, alpha);
  }
  return fit;
}

double normal_equation_residual(const RegressorFit& fit, const Eigen::MatrixXd& unsup, const Eigen::MatrixXd& gt) {
  Eigen::MatrixXd gram = unsup.transpose() * unsup;
  gram.diagonal().array() += fit.alpha;
  const Eigen::MatrixXd rhs = unsup.transpose() * gt;
  const double denom = std::max(rhs.cwiseAbs().maxCoeff(), 1e-300);
  return (gram * fit.weights - rhs).cwiseAbs().maxCoeff() / denom;
}

ReadoutData ReadoutData::subset(const std::vector<std::size_t>& rows) const {
  ReadoutData out;
  out.height = height;
  out.width = width;
  out.unsup.resize(static_cast<Eigen::Index>(rows.size()), unsup.cols());
  out.gt.resize(static_cast<Eigen::Index>(rows.size()), gt.cols());
  out.mask.resize(static_cast<Eigen::Index>(rows.size()), mask.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    out.unsup.row(static_cast<Eigen::Index>(i)) = unsup.row(r);
    out.gt.row(static_cast<Eigen::Index>(i)) = gt.row(r);
    out.mask.row(static_cast<Eigen::Index>(i)) = mask.row(r);
    out.gt_sets.push_back(gt_sets[rows[i]]);
  }
  return out;
}

Eigen::RowVectorXd normalise_landmarks(const std::vector<Point>& pts, int height, int width) {
  Eigen::RowVectorXd row(2 * static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    row(2 * static_cast<Eigen::Index>(i)) = pts[i].row / height;
    row(2 * static_cast<Eigen::Index>(i) + 1) = pts[i].col / width;
  }
  return row;
}

std::vector<Point> denormalise_landmarks(const Eigen::RowVectorXd& row, int height, int width) {
  std::vector<Point> pts(static_cast<std::size_t>(row.size() / 2));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pts[i] = {row(2 * static_cast<Eigen::Index>(i)) * height, row(2 * static_cast<Eigen::Index>(i) + 1) * width};
  }
  return pts;
}

ReadoutData readout_data_from(const std::vector<std::vector<Point>>& unsup, const Dataset& data) {
  if (unsup.size() != data.size()) throw DimensionError("readout_data_from: landmark and example counts differ");
  if (data.empty()) throw ConfigError("readout data: empty dataset");
  ReadoutData out;
  out.height = data[0].image.height();
  out.width = data[0].image.width();
  const auto k2 = 2 * static_cast<Eigen::Index>(unsup[0].size());
  const auto j = static_cast<Eigen::Index>(data[0].landmarks.size());
  out.unsup.resize(static_cast<Eigen::Index>(data.size()), k2);
  out.gt.resize(static_cast<Eigen::Index>(data.size()), 2 * j);
  out.mask.resize(static_cast<Eigen::Index>(data.size()), j);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (static_cast<Eigen::Index>(2 * unsup[i].size()) != k2 ||
        static_cast<Eigen::Index>(data[i].landmarks.size()) != j) {
      throw DimensionError("readout data: inconsistent landmark counts");
    }
    out.unsup.row(r) = normalise_landmarks(unsup[i], out.height, out.width);
    out.gt.row(r) = normalise_landmarks(data[i].landmarks.points, out.height, out.width);
    for (Eigen::Index c = 0; c < j; ++c) out.mask(r, c) = data[i].landmarks.valid[static_cast<std::size_t>(c)];
    out.gt_sets.push_back(data[i].landmarks);
  }
  return out;
}

ReadoutData collect_readout_data(const LandmarkModel& model, const Dataset& data, unsigned threads) {
  std::vector<std::vector<Point>> unsup(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) { unsup[i] = model.landmarks(data[i].image).points; });
  return readout_data_from(unsup, data);
}

std::vector<LandmarkSet> predict_landmarks(const RegressorFit& fit, const ReadoutData& data) {
  if (fit.weights.rows() != data.unsup.cols() || fit.weights.cols() != data.gt.cols()) {
    throw ConfigError("readout fit maps " + std::to_string(fit.weights.rows() / 2) + " landmarks to " +
                      std::to_string(fit.weights.cols() / 2) + " targets; data has " +
                      std::to_string(data.unsup.cols() / 2) + " and " + std::to_string(data.gt.cols() / 2));
  }
  const Eigen::MatrixXd pred = data.unsup * fit.weights;
  std::vector<LandmarkSet> out;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    out.emplace_back(denormalise_landmarks(pred.row(i), data.height, data.width));
  }
  return out;
}

nlohmann::json EvalReport::to_json() const {
  return {{"metric", metric}, {"value", value}, {"per_landmark", per_landmark}, {"samples", samples}};
}

std::string EvalMetric::name() const {
  if (kind == Kind::IodMse) return "iod-mse";
  char buf[32];
  std::snprintf(buf, sizeof buf, "pck@%g", threshold);
  return buf;
}

EvalReport evaluate_readout(const RegressorFit& fit, const ReadoutData& test, const EvalMetric& metric) {
  const auto preds = predict_landmarks(fit, test);
  EvalReport r;
  r.metric = metric.name();
  r.samples = test.size();
  if (metric.kind == EvalMetric::Kind::Pck) {
    const PckReport p = pck_dataset(preds, test.gt_sets, metric.threshold);
    r.value = p.average;
    r.per_landmark = p.per_landmark;
  } else {
    r.value = iod_mse(preds, test.gt_sets, metric.eyes);
  }
  return r;
}

nlohmann::json SweepRow::to_json() const {
  return {{"size", full ? nlohmann::json("full") : nlohmann::json(size)},
          {"samples", size},
          {"values", values},
          {"mean", mean},
          {"std", stddev}};
}

std::vector<SweepRow> sample_efficiency_sweep(const ReadoutData& pool, const ReadoutData& test,
                                              const std::vector<std::size_t>& sizes, int repeats, std::uint64_t seed,
                                              double alpha, const EvalMetric& metric) {
  if (repeats < 1) throw ConfigError("sample_efficiency_sweep: repeats must be >= 1");
  std::vector<SweepRow> rows;
  for (std::size_t size : sizes) {
    SweepRow row;
    row.full = size == 0 || size == pool.size();
    row.size = row.full ? pool.size() : size;
    if (row.size > pool.size()) {
      throw ConfigError("sample_efficiency_sweep: size " + std::to_string(size) + " exceeds the pool of " +
                        std::to_string(pool.size()));
    }
    const int reps = row.full ? 1 : repeats;
    for (int r = 0; r < reps; ++r) {
      std::vector<std::size_t> idx(pool.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      Rng rng(derive_seed(seed, row.size, static_cast<std::uint64_t>(r)));
      for (std::size_t i = 0; i < row.size; ++i) std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
      idx.resize(row.size);
      const ReadoutData sub = pool.subset(idx);
      const RegressorFit fit = fit_readout(sub.unsup, sub.gt, alpha, &sub.mask);
      row.values.push_back(evaluate_readout(fit, test, metric).value);
    }
    row.mean = std::accumulate(row.values.begin(), row.values.end(), 0.0) / static_cast<double>(row.values.size());
    double ss = 0.0;
    for (double v : row.values) ss += (v - row.mean) * (v - row.mean);
    row.stddev = std::sqrt(ss / static_cast<double>(row.values.size()));
    rows.push_back(std::move(row));
  }
  return rows;
}

bool sweep_non_increasing(const std::vector<SweepRow>& rows) {
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].mean > rows[i - 1].mean + std::max(rows[i].stddev, rows[i - 1].stddev)) return false;
  }
  return true;
}

std::vector<double> landmark_errors(const std::vector<LandmarkSet>& preds, const std::vector<LandmarkSet>& gts) {
  if (preds.size() != gts.size()) throw DimensionError("landmark_errors: count mismatch");
  std::vector<double> errors;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (preds[i].size() != gts[i].size()) throw DimensionError("landmark_errors: landmark count mismatch");
    for (std::size_t j = 0; j < gts[i].size(); ++j) {
      if (gts[i].valid[j]) errors.push_back(distance(preds[i].points[j], gts[i].points[j]));
    }
  }
  return errors;
}

std::string AblationReport::to_table() const {
  std::ostringstream os;
  char buf[64];
  std::size_t width = 10;
  for (const auto& a : arms) width = std::max(width, a.name.size() + 2);
  os << "PCK@" << pck_threshold << "px (%)\n";
  os << std::string(width, ' ');
  for (const auto& n : landmark_names) {
    std::snprintf(buf, sizeof buf, "%15s", n.c_str());
    os << buf;
  }
  os << "            avg\n";
  for (const auto& a : arms) {
    os << a.name << std::string(width - a.name.size(), ' ');
    for (double v : a.pck.per_landmark) {
      std::snprintf(buf, sizeof buf, "%15.1f", v);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "%15.1f", a.pck.average);
    os << buf << '\n';
  }
  os << "\nAcc(d) of regressed landmarks\n" << std::string(width, ' ');
  if (!arms.empty()) {
    for (double d : arms[0].curve.thresholds) {
      std::snprintf(buf, sizeof buf, "%8g", d);
      os << buf;
    }
  }
  os << '\n';
  for (const auto& a : arms) {
    os << a.name << std::string(width - a.name.size(), ' ');
    for (double v : a.curve.values) {
      std::snprintf(buf, sizeof buf, "%8.3f", v);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json arms_json = nlohmann::json::array();
  for (const auto& a : arms) {
    arms_json.push_back({{"name", a.name},
                         {"pck_per_landmark", a.pck.per_landmark},
                         {"pck_avg", a.pck.average},
                         {"curve", a.curve.to_json()}});
  }
  return {{"landmark_names", landmark_names}, {"pck_threshold", pck_threshold}, {"arms", arms_json}};
}

AblationReport ablation_report(const LandmarkModel& end_to_end, const LandmarkModel& two_step,
                               const Dataset& fit_data, const Dataset& test_data,
                               const std::vector<std::string>& landmark_names, double alpha, double pck_threshold,
                               const std::vector<double>& thresholds, unsigned threads) {
  if (!(end_to_end.config() == two_step.config())) {
    throw ConfigError("ablation_report: the two checkpoints use different architectures");
  }
  AblationReport rep;
  rep.landmark_names = landmark_names;
  rep.pck_threshold = pck_threshold;
  const std::pair<const char*, const LandmarkModel*> arms[] = {{"End-to-end", &end_to_end},
                                                               {"Two-step", &two_step}};
  for (const auto& [name, model] : arms) {
    const ReadoutData fit_rd = collect_readout_data(*model, fit_data, threads);
    const ReadoutData test_rd = collect_readout_data(*model, test_data, threads);
    const RegressorFit fit = fit_readout(fit_rd.unsup, fit_rd.gt, alpha, &fit_rd.mask);
    const auto preds = predict_landmarks(fit, test_rd);
    AblationArm arm;
    arm.name = name;
    arm.pck = pck_dataset(preds, test_rd.gt_sets, pck_threshold);
    arm.curve = curve_from_errors(landmark_errors(preds, test_rd.gt_sets), 0, thresholds);
    rep.arms.push_back(std::move(arm));
  }
  return rep;
}

}  // namespace lmk
