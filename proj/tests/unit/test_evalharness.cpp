#include <cmath>

#include <Eigen/Dense>

#include "doctest.h"

#include "lmk/data.hpp"
#include "lmk/errors.hpp"
#include "lmk/evalharness.hpp"
#include "lmk/report.hpp"
#include "lmk/rng.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace lmk;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = uniform(rng, -1.0, 1.0);
  }
  return m;
}

// Ground-truth landmarks, optionally jittered, as unsupervised coordinates.
std::vector<std::vector<Point>> oracle_landmarks(const Dataset& data, double jitter, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<Point>> out;
  for (const auto& ex : data) {
    std::vector<Point> pts = ex.landmarks.points;
    for (Point& p : pts) {
      p.row += uniform(rng, -jitter, jitter);
      p.col += uniform(rng, -jitter, jitter);
    }
    out.push_back(pts);
  }
  return out;
}

SplitDataset small_split(std::uint64_t seed) {
  DatasetSpec spec;
  spec.height = spec.width = 32;
  spec.train = 4;
  spec.val = 40;
  spec.test = 20;
  spec.seed = seed;
  return build_dataset(spec);
}

}  // namespace

TEST_SUITE("evalharness") {

TEST_CASE("ridge with alpha zero recovers an exact linear map") {
  const Eigen::MatrixXd x = random_matrix(30, 6, 1);
  const Eigen::MatrixXd w = random_matrix(6, 4, 2);
  const RegressorFit fit = fit_readout(x, x * w, 0.0);
  CHECK((fit.weights - w).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(normal_equation_residual(fit, x, x * w) < 1e-8);
}

TEST_CASE("ridge fit matches the closed form and solves its normal equations") {
  const Eigen::MatrixXd x = random_matrix(25, 4, 3);
  const Eigen::MatrixXd y = random_matrix(25, 2, 4);
  const double alpha = 0.7;
  const RegressorFit fit = fit_readout(x, y, alpha);
  const Eigen::MatrixXd a = x.transpose() * x + alpha * Eigen::MatrixXd::Identity(4, 4);
  const Eigen::MatrixXd expect = a.inverse() * (x.transpose() * y);
  CHECK((fit.weights - expect).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(normal_equation_residual(fit, x, y) < 1e-8);
  CHECK(fit.alpha == alpha);
}

TEST_CASE("identity unsupervised coordinates give the identity readout") {
  const Eigen::MatrixXd x = random_matrix(20, 4, 5);
  const RegressorFit fit = fit_readout(x, x, 0.0);
  CHECK((fit.weights - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("strong regularisation shrinks the readout to zero") {
  const Eigen::MatrixXd x = random_matrix(20, 4, 6);
  const Eigen::MatrixXd y = random_matrix(20, 2, 7);
  CHECK(fit_readout(x, y, 1e12).weights.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("a singular system without regularisation is a numeric error") {
  Eigen::MatrixXd x = random_matrix(10, 4, 8);
  x.col(3) = x.col(2);
  CHECK_THROWS_AS(fit_readout(x, random_matrix(10, 2, 9), 0.0), NumericError);
  CHECK_NOTHROW(fit_readout(x, random_matrix(10, 2, 9), 0.1));
  CHECK_THROWS_AS(fit_readout(x, random_matrix(10, 2, 9), -1.0), ConfigError);
  CHECK_THROWS_AS(fit_readout(x, random_matrix(9, 2, 9), 0.1), DimensionError);
}

TEST_CASE("masked targets are fitted on visible rows only") {
  const Eigen::MatrixXd x = random_matrix(30, 4, 10);
  const Eigen::MatrixXd w = random_matrix(4, 4, 11);
  Eigen::MatrixXd y = x * w;
  Eigen::MatrixXi mask = Eigen::MatrixXi::Ones(30, 2);
  for (int i = 0; i < 30; i += 3) {
    mask(i, 1) = 0;
    y(i, 2) = 1e6;
    y(i, 3) = -1e6;
  }
  const RegressorFit fit = fit_readout(x, y, 0.0, &mask);
  CHECK((fit.weights - w).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("landmark normalisation round trips") {
  const std::vector<Point> pts{{3.0, 4.0}, {60.0, 10.5}};
  const Eigen::RowVectorXd row = normalise_landmarks(pts, 64, 32);
  CHECK(row.size() == 4);
  CHECK(row(0) == doctest::Approx(3.0 / 64));
  CHECK(row(1) == doctest::Approx(4.0 / 32));
  const auto back = denormalise_landmarks(row, 64, 32);
  CHECK(distance(back[1], pts[1]) < 1e-12);
}

TEST_CASE("oracle landmarks give perfect readout scores") {
  const SplitDataset d = small_split(1);
  const ReadoutData pool = readout_data_from(oracle_landmarks(d.val, 0.0, 0), d.val);
  const ReadoutData test = readout_data_from(oracle_landmarks(d.test, 0.0, 0), d.test);
  // Figure landmarks are linearly dependent, so a vanishing ridge keeps the system solvable.
  const RegressorFit fit = fit_readout(pool.unsup, pool.gt, 1e-9, &pool.mask);
  const EvalReport pck = evaluate_readout(fit, test, {EvalMetric::Kind::Pck, 3.0, {0, 1}});
  CHECK(pck.metric == "pck@3");
  CHECK(pck.value == doctest::Approx(100.0));
  CHECK(pck.samples == 20);
  const EvalReport iod = evaluate_readout(fit, test, {EvalMetric::Kind::IodMse, 0.0, {0, 1}});
  CHECK(iod.metric == "iod-mse");
  CHECK(iod.value < 1e-5);
}

TEST_CASE("readout scores agree with the metric oracles") {
  const SplitDataset d = small_split(2);
  const ReadoutData pool = readout_data_from(oracle_landmarks(d.val, 4.0, 1), d.val);
  const ReadoutData test = readout_data_from(oracle_landmarks(d.test, 4.0, 2), d.test);
  const RegressorFit fit = fit_readout(pool.unsup, pool.gt, 0.1, &pool.mask);
  const auto preds = predict_landmarks(fit, test);
  REQUIRE(preds.size() == test.size());
  const EvalReport pck = evaluate_readout(fit, test, {EvalMetric::Kind::Pck, 3.0, {0, 1}});
  // Synthetic landmarks are all visible, so the per-landmark mean equals the per-image mean.
  double hits = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += oracle::pck(preds[i], test.gt_sets[i], 3.0);
  CHECK(std::abs(pck.value - 100.0 * hits / static_cast<double>(preds.size())) < 1e-10);
  const EvalReport iod = evaluate_readout(fit, test, {EvalMetric::Kind::IodMse, 0.0, {0, 1}});
  CHECK(std::abs(iod.value - oracle::iod_mse(preds, test.gt_sets, 0, 1)) < 1e-10);
  CHECK(pck.value < 100.0);
}

TEST_CASE("a constant predictor scores the oracle iod error") {
  const SplitDataset d = small_split(3);
  std::vector<std::vector<Point>> zero(d.val.size(), std::vector<Point>(2, Point{0.0, 0.0}));
  const ReadoutData pool = readout_data_from(zero, d.val);
  const ReadoutData test = readout_data_from(std::vector<std::vector<Point>>(d.test.size(), zero[0]), d.test);
  // All-zero inputs leave only the regulariser, so every prediction is the origin.
  const RegressorFit fit = fit_readout(pool.unsup, pool.gt, 0.1);
  const std::vector<LandmarkSet> origin(test.size(), LandmarkSet(std::vector<Point>(test.gt_sets[0].size())));
  const EvalReport iod = evaluate_readout(fit, test, {EvalMetric::Kind::IodMse, 0.0, {0, 1}});
  CHECK(std::abs(iod.value - oracle::iod_mse(origin, test.gt_sets, 0, 1)) < 1e-10);
}

TEST_CASE("a readout for another landmark count is rejected") {
  const SplitDataset d = small_split(4);
  const ReadoutData pool = readout_data_from(oracle_landmarks(d.val, 0.0, 0), d.val);
  std::vector<std::vector<Point>> three(d.test.size(), std::vector<Point>(3));
  const ReadoutData test = readout_data_from(three, d.test);
  const RegressorFit fit = fit_readout(pool.unsup, pool.gt, 0.1);
  CHECK_THROWS_AS(evaluate_readout(fit, test, {}), ConfigError);
}

TEST_CASE("sample-efficiency sweep is reproducible and sized by the pool") {
  const SplitDataset d = small_split(5);
  const ReadoutData pool = readout_data_from(oracle_landmarks(d.val, 3.0, 3), d.val);
  const ReadoutData test = readout_data_from(oracle_landmarks(d.test, 3.0, 4), d.test);
  const EvalMetric metric{EvalMetric::Kind::Pck, 3.0, {0, 1}};
  const auto rows = sample_efficiency_sweep(pool, test, {5, 10, 0}, 3, 42, 0.1, metric);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].size == 5);
  CHECK(rows[0].values.size() == 3);
  CHECK(rows[2].full);
  CHECK(rows[2].size == 40);
  CHECK(rows[2].values.size() == 1);
  CHECK(rows[2].stddev == 0.0);
  double mean = 0.0;
  for (double v : rows[0].values) mean += v / 3.0;
  CHECK(rows[0].mean == doctest::Approx(mean));

  const auto again = sample_efficiency_sweep(pool, test, {5, 10, 0}, 3, 42, 0.1, metric);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].values == again[i].values);
  CHECK_THROWS_AS(sample_efficiency_sweep(pool, test, {41}, 3, 42, 0.1, metric), ConfigError);
  CHECK_THROWS_AS(sample_efficiency_sweep(pool, test, {5}, 0, 42, 0.1, metric), ConfigError);
}

TEST_CASE("sweep monotonicity allows one standard deviation of slack") {
  auto row = [](double mean, double sd) {
    SweepRow r;
    r.mean = mean;
    r.stddev = sd;
    return r;
  };
  CHECK(sweep_non_increasing({row(10, 1), row(8, 1), row(8.5, 0.6)}));
  CHECK(sweep_non_increasing({row(10, 1), row(10.9, 0)}));
  CHECK_FALSE(sweep_non_increasing({row(10, 1), row(11.5, 0.5)}));
  CHECK(sweep_non_increasing({}));
}

TEST_CASE("ablation of identical checkpoints gives identical rows") {
  ExperimentConfig cfg = test_support::tiny_config(2);
  const SplitDataset d = build_dataset(cfg.data);
  const LandmarkModel m(cfg.model, 5);
  const AblationReport rep = ablation_report(m, m, d.val, d.test, d.names, 0.1, 3.0, {2, 4, 8});
  REQUIRE(rep.arms.size() == 2);
  CHECK(rep.arms[0].pck.per_landmark == rep.arms[1].pck.per_landmark);
  CHECK(rep.arms[0].curve.values == rep.arms[1].curve.values);
  CHECK(rep.arms[0].curve.thresholds == std::vector<double>{2, 4, 8});
  CHECK(rep.to_table().find(d.names[0]) != std::string::npos);
  CHECK(rep.to_json()["arms"].size() == 2);

  ModelConfig other = cfg.model;
  other.landmarks = 6;
  CHECK_THROWS_AS(ablation_report(m, LandmarkModel(other, 5), d.val, d.test, d.names, 0.1, 3.0, {2}), ConfigError);
}

TEST_CASE("reference constants are flagged as not desk-reproducible") {
  const std::string table = reference_table();
  for (const auto& c : kReferenceConstants) CHECK(table.find(std::string(c.key)) != std::string::npos);
  CHECK(table.find("not desk-reproducible") != std::string::npos);
  const nlohmann::json j = reference_json();
  CHECK(j.dump().find("bbc_pose.two_step.pck6_avg") != std::string::npos);
}

TEST_CASE("svg plots and sweep tables render") {
  const std::string svg = svg_line_plot("Acc", "distance d (px)", "accuracy",
                                        {{"a", {2, 4, 6}, {0.1, 0.5, 0.9}, false}, {"b", {2, 4, 6}, {0, 0.2, 0.4}, true}});
  CHECK(svg.starts_with("<svg"));
  CHECK(svg.find("stroke-dasharray") != std::string::npos);
  CHECK(svg.find("distance d (px)") != std::string::npos);
  SweepRow r;
  r.size = 5;
  r.values = {50.0};
  r.mean = 50.0;
  CHECK(sweep_table({r}, "pck@3").find("pck@3") != std::string::npos);
}

}  // TEST_SUITE
