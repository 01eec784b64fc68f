// Acceptance suite: one PASS/FAIL line per criterion.
//
//   lmk_acceptance --lmk <path to lmk> --work <scratch dir> [--only 1,3,...]
//
// Criteria 5 and 6 train the desk configuration for three seeds through the
// lmk command line and take most of the runtime.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "lmk/config.hpp"
#include "lmk/data.hpp"
#include "lmk/errors.hpp"
#include "lmk/evalharness.hpp"
#include "lmk/geometry.hpp"
#include "lmk/losses.hpp"
#include "lmk/metrics.hpp"
#include "lmk/readout.hpp"
#include "lmk/rng.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace lmk;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Settings {
  fs::path lmk;
  fs::path work;
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

std::string fmt(double v, int digits = 3) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Tracks the worst value of a quantity that must stay below a bound.
struct Worst {
  double value = 0.0;
  std::string where;
  void update(double v, const std::string& at) {
    if (!(v <= value)) {
      value = v;
      where = at;
    }
  }
};

std::vector<double> flatten(const std::vector<ScalarField>& fields) {
  std::vector<double> out;
  for (const auto& f : fields) out.insert(out.end(), f.values.begin(), f.values.end());
  return out;
}

std::vector<ScalarField> unflatten(const std::vector<double>& v, std::size_t k, int h, int w) {
  std::vector<ScalarField> out(k, ScalarField(h, w));
  for (std::size_t i = 0; i < k; ++i) {
    std::copy(v.begin() + static_cast<std::ptrdiff_t>(i * h * w), v.begin() + static_cast<std::ptrdiff_t>((i + 1) * h * w),
              out[i].values.begin());
  }
  return out;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -1.0, 1.0);
  return m;
}

// ---------------------------------------------------------------------------
// 1. Gradient suite

Outcome gradient_suite() {
  Stopwatch clock;
  constexpr double kStep = 1e-5, kTol = 1e-4;
  Worst worst;

  for (std::uint64_t s = 0; s < 5; ++s) {
    Rng rng(10 + s);
    std::vector<Point> a, b;
    for (int i = 0; i < 4; ++i) {
      a.push_back({uniform(rng, 0, 16), uniform(rng, 0, 16)});
      b.push_back({uniform(rng, 0, 16), uniform(rng, 0, 16)});
    }
    const auto l = equivariance_loss(LandmarkSet(a), LandmarkSet(b));
    std::vector<double> x, analytic;
    for (int i = 0; i < 4; ++i) {
      x.insert(x.end(), {a[i].row, a[i].col});
      analytic.insert(analytic.end(), {l.grad_deformed[i].row, l.grad_deformed[i].col});
    }
    for (int i = 0; i < 4; ++i) {
      x.insert(x.end(), {b[i].row, b[i].col});
      analytic.insert(analytic.end(), {l.grad_transported[i].row, l.grad_transported[i].col});
    }
    auto f = [](const std::vector<double>& v) {
      std::vector<Point> p, q;
      for (int i = 0; i < 4; ++i) p.push_back({v[2 * i], v[2 * i + 1]});
      for (int i = 0; i < 4; ++i) q.push_back({v[8 + 2 * i], v[8 + 2 * i + 1]});
      return equivariance_loss(LandmarkSet(p), LandmarkSet(q)).value;
    };
    worst.update(oracle::max_relative_error(analytic, oracle::numeric_gradient(f, x, kStep)), "L_eqv");
  }

  for (std::uint64_t s = 0; s < 5; ++s) {
    std::vector<ProbMap> maps;
    for (int k = 0; k < 3; ++k) maps.push_back(test_support::random_probmap(4, 4, 300 + 10 * s + k));
    const auto l = diversity_loss(maps, 2);
    auto f = [](const std::vector<double>& v) { return diversity_loss(unflatten(v, 3, 4, 4), 2).value; };
    worst.update(oracle::max_relative_error(flatten(l.grad), oracle::numeric_gradient(f, flatten(maps), kStep)),
                 "L_div");
  }

  for (std::uint64_t s = 0; s < 5; ++s) {
    const Eigen::MatrixXd a = random_matrix(4, 3, 400 + s), b = random_matrix(4, 3, 500 + s);
    const auto l = contrastive_loss(a, b, 0.1);
    std::vector<double> x(a.data(), a.data() + a.size());
    std::vector<double> analytic(l.grad_anchor.data(), l.grad_anchor.data() + a.size());
    x.insert(x.end(), b.data(), b.data() + b.size());
    analytic.insert(analytic.end(), l.grad_positive.data(), l.grad_positive.data() + b.size());
    auto f = [](const std::vector<double>& v) {
      const Eigen::Map<const Eigen::MatrixXd> aa(v.data(), 4, 3), bb(v.data() + 12, 4, 3);
      return contrastive_loss(aa, bb, 0.1).value;
    };
    worst.update(oracle::max_relative_error(analytic, oracle::numeric_gradient(f, x, kStep)), "L_contrast");
  }

  for (std::uint64_t s = 0; s < 5; ++s) {
    std::vector<std::vector<ProbMap>> batch(2);
    for (int b = 0; b < 2; ++b) {
      for (int k = 0; k < 3; ++k) batch[b].push_back(test_support::random_probmap(6, 6, 600 + 10 * s + 3 * b + k));
    }
    const auto l = variance_loss(batch);
    std::vector<double> x, analytic;
    for (int b = 0; b < 2; ++b) {
      const auto fx = flatten(batch[b]), ga = flatten(l.grad[b]);
      x.insert(x.end(), fx.begin(), fx.end());
      analytic.insert(analytic.end(), ga.begin(), ga.end());
    }
    auto f = [](const std::vector<double>& v) {
      const std::size_t half = v.size() / 2;
      std::vector<std::vector<ProbMap>> bb{unflatten({v.begin(), v.begin() + static_cast<std::ptrdiff_t>(half)}, 3, 6, 6),
                                           unflatten({v.begin() + static_cast<std::ptrdiff_t>(half), v.end()}, 3, 6, 6)};
      return variance_loss(bb).value;
    };
    worst.update(oracle::max_relative_error(analytic, oracle::numeric_gradient(f, x, kStep)), "L_variance");
  }

  for (std::uint64_t s = 0; s < 5; ++s) {
    const Heatmap h = test_support::random_field(6, 7, 700 + s, -2.0, 2.0);
    const ProbMap p = spatial_softmax(h);
    Rng rng(800 + s);
    const Point w{uniform(rng, -1, 1), uniform(rng, -1, 1)};
    const Heatmap g = spatial_soft_argmax_backward(p, w);
    auto f = [&](const std::vector<double>& v) {
      Heatmap hh(6, 7);
      hh.values = v;
      const Point y = spatial_soft_argmax(hh);
      return w.row * y.row + w.col * y.col;
    };
    worst.update(oracle::max_relative_error(g.values, oracle::numeric_gradient(f, h.values, kStep)), "soft-argmax");
  }

  const double t = clock.seconds();
  return {worst.value < kTol && t < 30.0, "max relative error " + fmt(worst.value) + " (" + worst.where +
                                               "), limit 1e-4; " + fmt(t) + " s, limit 30 s"};
}

// ---------------------------------------------------------------------------
// 2. Contrastive oracle

Outcome contrastive_oracle() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Eigen::Index b = 1 + static_cast<Eigen::Index>(s % 3), k = 1 + static_cast<Eigen::Index>((s / 3) % 3);
    const Eigen::Index n = std::max<Eigen::Index>(2, b * k), d = 2 + static_cast<Eigen::Index>(s % 4);
    const Eigen::MatrixXd f = random_matrix(n, d, 900 + 2 * s), fp = random_matrix(n, d, 901 + 2 * s);
    const double tau = 0.05 + 0.05 * static_cast<double>(s % 4);
    worst = std::max(worst, std::abs(contrastive_loss(f, fp, tau).value - oracle::contrastive(f, fp, tau)));
  }
  double identical = 0.0;
  for (Eigen::Index b = 1; b <= 3; ++b) {
    for (Eigen::Index k = 1; k <= 3; ++k) {
      if (b * k < 2) continue;
      const Eigen::MatrixXd f = Eigen::MatrixXd::Constant(b * k, 4, 0.3);
      const double expect = 2.0 * std::log(2.0 * static_cast<double>(b * k) - 1.0);
      identical = std::max(identical, std::abs(contrastive_loss(f, f, 0.1).value - expect));
    }
  }
  return {worst < 1e-9 && identical < 1e-9,
          "20 random instances max |diff| " + fmt(worst) + "; identical features max |diff| from 2 log(2BK-1) " +
              fmt(identical) + "; limit 1e-9"};
}

// ---------------------------------------------------------------------------
// 3. Geometry suite

Outcome geometry_suite() {
  Stopwatch clock;
  const DomainSpec dom{64, 64, 3};
  std::vector<std::pair<std::string, CoordMap>> maps{
      {"identity", CoordMap()},
      {"translation", make_translation(3.5, -2.25)},
      {"rotation", make_affine(0.4, {1, 1}, 0.0, {0, 0}, dom.center())},
      {"scale", make_affine(0.0, {1.3, 0.8}, 0.0, {0, 0}, dom.center())},
      {"shear", make_affine(0.0, {1, 1}, 0.25, {0, 0}, dom.center())},
  };
  Rng rng(2024);
  for (int t = 0; t < 10; ++t) {
    const CoordMap a = make_affine(uniform(rng, -0.5, 0.5), {uniform(rng, 0.7, 1.4), uniform(rng, 0.7, 1.4)},
                                   uniform(rng, -0.2, 0.2), {uniform(rng, -5, 5), uniform(rng, -5, 5)}, dom.center());
    const CoordMap e = make_elastic(dom, {5, 5}, uniform(rng, 0.5, 8.0), 16.0, rng());
    maps.push_back({"affine", a});
    maps.push_back({"elastic", e});
    maps.push_back({"elastic o affine", compose(e, a)});
    maps.push_back({"inverse of affine o elastic", compose(a, e).inverted()});
  }
  for (const char* preset : {"pretrain", "landmark"}) {
    const AugmentConfig aug = AugmentConfig::preset(preset);
    for (std::uint64_t i = 0; i < 10; ++i) {
      Rng r(derive_seed(55, i));
      maps.push_back({std::string("sampled ") + preset, sample_deformation(aug, dom, r)});
    }
  }
  Worst inverse;
  for (const auto& [name, g] : maps) inverse.update(inverse_consistency_error(g, dom), name);

  // Integer translations move pixels and landmarks together, exactly.
  bool coherent = true;
  const Image x = test_support::random_image(3, 64, 64, 12);
  for (const auto& [dr, dc] : std::vector<std::pair<int, int>>{{2, 5}, {-7, 3}, {0, -11}, {13, 13}}) {
    const CoordMap g = make_translation(dr, dc);
    const Image y = warp_image(g, x);
    for (int r = 0; r < 64; ++r) {
      for (int c = 0; c < 64; ++c) {
        const LandmarkSet moved = transport_landmarks(g, LandmarkSet({{double(r), double(c)}}), dom);
        const Point p = moved.points[0];
        if (p.row != r + dr || p.col != c + dc) coherent = false;
        // Λ includes its far edge, which has no pixel.
        if (!moved.valid[0] || p.row > 63 || p.col > 63) continue;
        for (int ch = 0; ch < 3; ++ch) {
          if (y.at(ch, static_cast<int>(p.row), static_cast<int>(p.col)) != x.at(ch, r, c)) coherent = false;
        }
      }
    }
  }

  // Warp then unwarp smooth images; compare away from the border.
  Worst roundtrip;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const DomainSpec d1{64, 64, 1};
    const Image img = test_support::smooth_image(64, 64, 30 + s);
    const CoordMap g = compose(make_elastic(d1, {5, 5}, 4.0 + s, 16.0, 40 + s),
                               make_affine(0.1 + 0.1 * double(s), {1.1, 0.9}, 0.05, {1.5, -2.0}, d1.center()));
    const Image back = warp_image(g.inverted(), warp_image(g, img));
    roundtrip.update(test_support::interior_mae(img, back, 16) / test_support::dynamic_range(img),
                     "smooth image " + std::to_string(s));
  }

  const double t = clock.seconds();
  return {inverse.value < 1e-3 && coherent && roundtrip.value < 1e-2 && t < 60.0,
          "inverse consistency " + fmt(inverse.value) + " px over " + std::to_string(maps.size()) +
              " maps (limit 1e-3); integer translation coherence " + (coherent ? "exact" : "BROKEN") +
              "; warp-unwarp interior error " + fmt(roundtrip.value) + " of range (limit 1e-2); " + fmt(t) +
              " s (limit 60 s)"};
}

// ---------------------------------------------------------------------------
// 4. Metric suite

Outcome metric_suite() {
  int mismatches = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    FeatureMap f = test_support::random_image(4, 9, 7, 1000 + s);
    for (float& v : f.values()) v = 2.0f * v - 1.0f;
    Rng rng(2000 + s);
    std::vector<double> ref(4);
    for (double& v : ref) v = uniform(rng, -1, 1);
    if (!(match_location(ref, f) == oracle::argmax_cosine(ref, f))) ++mismatches;
  }

  bool monotone = true;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(3000 + s);
    std::vector<double> errs(200);
    for (double& e : errs) e = std::abs(15.0 * normal01(rng));
    const AccuracyCurve c = curve_from_errors(errs, 0, default_thresholds());
    for (std::size_t i = 1; i < c.values.size(); ++i) monotone = monotone && c.values[i] >= c.values[i - 1];
  }

  const DomainSpec dom{64, 64, 3};
  const std::vector<Point> targets{{32, 32}, {3, 3}, {0, 50}, {60, 15}, {31.5, 63}, {10, 40}};
  const auto thresholds = default_thresholds();
  const auto exact = expected_random_accuracy(targets, dom, thresholds);
  const auto mc = oracle::random_baseline_mc(targets, 64, 64, thresholds, 200000, 4242);
  double worst_z = 0.0;
  std::string zs;
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const double z = (exact[i] - mc.mean[i]) / mc.standard_error[i];
    worst_z = std::max(worst_z, std::abs(z));
    zs += (i ? " " : "") + fmt(z);
  }

  return {mismatches == 0 && monotone && worst_z <= 2.0,
          "match_location vs brute force: " + std::to_string(mismatches) + "/100 mismatches; Acc(d) monotone: " +
              (monotone ? "yes" : "no") + "; random baseline vs Monte-Carlo worst |z| " + fmt(worst_z) +
              " (limit 2; per threshold: " + zs + ")"};
}

// ---------------------------------------------------------------------------
// Command-line helpers

std::string quote(const std::string& s) { return "'" + s + "'"; }

int run_lmk(const Settings& st, const std::vector<std::string>& args, const fs::path& log) {
  std::string cmd = quote(st.lmk.string());
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " >> " + quote(log.string()) + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot read " + p.string());
  return json::parse(in);
}

// ---------------------------------------------------------------------------
// 5 and 6. Desk-scale ablation over three seeds

struct SeedRun {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<double> two_curve, e2e_curve;
  double two_pck = 0.0, e2e_pck = 0.0;
  bool sweep_ok = false;
  std::vector<std::string> sweep_sizes;
};

std::vector<SeedRun> desk_runs(const Settings& st) {
  static std::vector<SeedRun> cache;
  if (!cache.empty()) return cache;
  for (std::uint64_t seed : st.seeds) {
    SeedRun r;
    r.seed = seed;
    const fs::path dir = st.work / ("desk_seed" + std::to_string(seed));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const fs::path log = dir / "commands.log";
    const std::string s = std::to_string(seed);
    if (run_lmk(st, {"ablate", "--seed", s, "--out", dir.string()}, log) != 0) {
      r.error = "lmk ablate failed, see " + log.string();
    } else if (run_lmk(st, {"eval", "--seed", s, "--checkpoint", (dir / "two_step.ckpt").string(), "--metric", "pck",
                            "--out", (dir / "eval").string()},
                       log) != 0) {
      r.error = "lmk eval failed, see " + log.string();
    } else {
      const json abl = read_json(dir / "ablation.json");
      r.two_curve = abl["layer1_curves"]["Two-step"]["values"].get<std::vector<double>>();
      r.e2e_curve = abl["layer1_curves"]["End-to-end"]["values"].get<std::vector<double>>();
      for (const auto& arm : abl["ablation"]["arms"]) {
        const double avg = arm["pck_avg"].get<double>();
        (arm["name"] == "Two-step" ? r.two_pck : r.e2e_pck) = avg;
      }
      const json ev = read_json(dir / "eval" / "eval_report.json");
      r.sweep_ok = ev["sweep_non_increasing"].get<bool>();
      for (const auto& row : ev["sweep"]) r.sweep_sizes.push_back(row["size"].dump());
      r.ok = true;
    }
    cache.push_back(r);
  }
  return cache;
}

Outcome layer1_dominance(const Settings& st) {
  Stopwatch clock;
  const auto runs = desk_runs(st);
  int passing = 0;
  std::string detail;
  for (const auto& r : runs) {
    detail += "seed " + std::to_string(r.seed) + ": ";
    if (!r.ok) {
      detail += r.error + "; ";
      continue;
    }
    bool dominates = r.two_curve.size() == r.e2e_curve.size() && !r.two_curve.empty();
    double gap = -1.0, worst = 1.0;
    for (std::size_t i = 0; i < r.two_curve.size(); ++i) {
      dominates = dominates && r.two_curve[i] >= r.e2e_curve[i];
      gap = std::max(gap, r.two_curve[i] - r.e2e_curve[i]);
      worst = std::min(worst, r.two_curve[i] - r.e2e_curve[i]);
    }
    const bool pass = dominates && gap >= 0.10;
    passing += pass ? 1 : 0;
    detail += std::string(pass ? "pass" : "fail") + " (Acc(20) two-step " + fmt(r.two_curve.back()) + " vs " +
              fmt(r.e2e_curve.back()) + ", max gap " + fmt(100 * gap) + " pp, min gap " + fmt(100 * worst) +
              " pp); ";
  }
  return {passing >= 2, detail + std::to_string(passing) + "/3 seeds pass (need 2); " + fmt(clock.seconds()) +
                            " s including training"};
}

Outcome downstream_readout(const Settings& st) {
  const auto runs = desk_runs(st);
  int wins = 0, sweeps = 0;
  std::string detail;
  const std::vector<std::string> expected{"5", "10", "50", "100", "\"full\""};
  for (const auto& r : runs) {
    detail += "seed " + std::to_string(r.seed) + ": ";
    if (!r.ok) {
      detail += r.error + "; ";
      continue;
    }
    const bool win = r.two_pck > r.e2e_pck;
    const bool sweep = r.sweep_ok && r.sweep_sizes == expected;
    wins += win ? 1 : 0;
    sweeps += sweep ? 1 : 0;
    detail += "PCK@3 two-step " + fmt(r.two_pck) + " vs end-to-end " + fmt(r.e2e_pck) + ", sweep " +
              (sweep ? "non-increasing" : r.sweep_ok ? "missing sizes" : "increasing") + "; ";
  }
  const bool pass = wins >= 2 && sweeps == static_cast<int>(runs.size());
  return {pass, detail + std::to_string(wins) + "/3 seeds with higher two-step PCK (need 2), " +
                    std::to_string(sweeps) + "/3 sweeps over {5,10,50,100,full} non-increasing (need 3)"};
}

// ---------------------------------------------------------------------------
// 7. Exact small-system checks

Outcome exact_small_systems() {
  double ridge = 0.0, residual = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Eigen::MatrixXd x = random_matrix(40, 8, 5000 + s), w = random_matrix(8, 6, 6000 + s);
    const RegressorFit fit = fit_readout(x, x * w, 0.0);
    ridge = std::max(ridge, (fit.weights - w).cwiseAbs().maxCoeff());
    residual = std::max(residual, normal_equation_residual(fit, x, x * w));
  }
  double pck_err = 0.0, iod_err = 0.0;
  Rng rng(7000);
  for (int t = 0; t < 100; ++t) {
    const int j = 2 + t % 7;
    std::vector<LandmarkSet> preds, gts;
    for (int i = 0; i < 5; ++i) {
      std::vector<Point> p, g;
      for (int k = 0; k < j; ++k) {
        g.push_back({uniform(rng, 0, 64), uniform(rng, 0, 64)});
        p.push_back(g.back() + Point{uniform(rng, -6, 6), uniform(rng, -6, 6)});
      }
      preds.emplace_back(p);
      gts.emplace_back(g);
      if (t % 4 == 0) gts.back().valid[static_cast<std::size_t>(j - 1)] = 0;
    }
    const double d = uniform(rng, 0.5, 8);
    for (int i = 0; i < 5; ++i) {
      pck_err = std::max(pck_err, std::abs(pck_within(preds[i], gts[i], d) - oracle::pck(preds[i], gts[i], d)));
    }
    iod_err = std::max(iod_err, std::abs(iod_mse(preds, gts, {0, 1}) - oracle::iod_mse(preds, gts, 0, 1)));
  }
  return {ridge < 1e-6 && residual < 1e-6 && pck_err < 1e-10 && iod_err < 1e-10,
          "ridge alpha=0 weight error " + fmt(ridge) + ", residual " + fmt(residual) + " (limit 1e-6); pck_within " +
              fmt(pck_err) + ", iod_mse " + fmt(iod_err) + " vs oracles (limit 1e-10)"};
}

// ---------------------------------------------------------------------------
// 8. Reproducibility

json strip_times(json j) {
  if (j.is_object()) {
    j.erase("wall_seconds");
    for (auto& [k, v] : j.items()) v = strip_times(v);
  } else if (j.is_array()) {
    for (auto& v : j) v = strip_times(v);
  }
  return j;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Empty string when every output of `a` (manifest aside) is reproduced in `b`.
std::string compare_outputs(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    if (rel == "run.jsonl") continue;
    const fs::path other = b / rel;
    if (!fs::exists(other)) return rel.string() + " missing in replay";
    ++files;
    const std::string ext = rel.extension().string();
    bool same;
    if (ext == ".json") {
      same = strip_times(read_json(entry.path())) == strip_times(read_json(other));
    } else if (ext == ".jsonl") {
      std::ifstream ia(entry.path()), ib(other);
      std::string la, lb;
      same = true;
      while (same) {
        const bool ga = static_cast<bool>(std::getline(ia, la)), gb = static_cast<bool>(std::getline(ib, lb));
        if (ga != gb) same = false;
        if (!ga || !gb) break;
        same = strip_times(json::parse(la)) == strip_times(json::parse(lb));
      }
    } else {
      same = file_bytes(entry.path()) == file_bytes(other);
    }
    if (!same) return rel.string() + " differs";
  }
  return files == 0 ? "no outputs" : "";
}

Outcome reproducibility(const Settings& st) {
  const fs::path root = st.work / "replay";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path log = root / "commands.log";

  ExperimentConfig cfg = test_support::tiny_config(11);
  cfg.strict_determinism = true;
  cfg.data.train = 16;
  cfg.data.val = 8;
  cfg.data.test = 8;
  cfg.pretrain.epochs = 2;
  cfg.landmark.epochs = 2;
  cfg.eval.curve_images = 8;
  cfg.eval.sweep_sizes = {2, 4, 0};
  const fs::path cfg_path = root / "strict.json";
  std::ofstream(cfg_path) << cfg.to_json().dump(2) << "\n";
  const std::string c = cfg_path.string();
  auto dir = [&](const std::string& n) { return (root / n).string(); };

  const std::vector<std::pair<std::string, std::vector<std::string>>> stages{
      {"synth", {"synth", "--config", c, "--n", "24", "--out", dir("synth")}},
      {"pretrain", {"pretrain", "--config", c, "--out", dir("pretrain")}},
      {"train", {"train", "--config", c, "--features", dir("pretrain") + "/features.ckpt", "--out", dir("train")}},
      {"e2e", {"e2e", "--config", c, "--out", dir("e2e")}},
      {"acc-curve", {"acc-curve", "--config", c, "--checkpoint", dir("train") + "/model.ckpt", "--layer", "layer2",
                     "--out", dir("acc-curve")}},
      {"eval", {"eval", "--config", c, "--checkpoint", dir("train") + "/model.ckpt", "--metric", "iod-mse", "--out",
                dir("eval")}},
      {"ablate", {"ablate", "--config", c, "--two-step", dir("train") + "/model.ckpt", "--e2e",
                  dir("e2e") + "/model.ckpt", "--out", dir("ablate")}},
  };
  int reproduced = 0;
  std::string failures;
  for (const auto& [name, args] : stages) {
    if (run_lmk(st, args, log) != 0) {
      failures += name + ": stage failed; ";
      continue;
    }
    const std::string again = dir(name + "_replay");
    if (run_lmk(st, {"replay", dir(name) + "/run.jsonl", "--out", again}, log) != 0) {
      failures += name + ": replay failed; ";
      continue;
    }
    const std::string diff = compare_outputs(dir(name), again);
    if (diff.empty()) {
      ++reproduced;
    } else {
      failures += name + ": " + diff + "; ";
    }
  }
  return {reproduced == static_cast<int>(stages.size()),
          std::to_string(reproduced) + "/" + std::to_string(stages.size()) +
              " stages reproduced bit-identically from their manifests" + (failures.empty() ? "" : "; " + failures)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Settings st;
  std::string only;
  app.add_option("--lmk", st.lmk, "Path to the lmk executable")->required();
  app.add_option("--work", st.work, "Scratch directory for training runs")->required();
  app.add_option("--only", only, "Comma-separated criterion numbers to run");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  std::stringstream ss(only);
  for (std::string tok; std::getline(ss, tok, ',');) {
    if (!tok.empty()) selected.insert(std::stoi(tok));
  }
  fs::create_directories(st.work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"contrastive oracle", contrastive_oracle},
      {"geometry suite", geometry_suite},
      {"metric suite", metric_suite},
      {"desk Layer-1 dominance", [&] { return layer1_dominance(st); }},
      {"downstream readout", [&] { return downstream_readout(st); }},
      {"exact small systems", exact_small_systems},
      {"reproducibility", [&] { return reproducibility(st); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << "criterion " << number << " [" << criteria[i].first << "] " << (o.pass ? "PASS" : "FAIL") << ": "
              << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
