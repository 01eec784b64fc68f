#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "lmk/tensor.hpp"

namespace lmk {

/// A location in the image domain, in pixel units. Pixel (i, j) of an array
/// sits at (row = i, col = j); continuous coordinates interpolate between
/// pixel centres.
struct Point {
  double row = 0.0;
  double col = 0.0;

  friend Point operator+(Point a, Point b) { return {a.row + b.row, a.col + b.col}; }
  friend Point operator-(Point a, Point b) { return {a.row - b.row, a.col - b.col}; }
  friend Point operator*(double s, Point a) { return {s * a.row, s * a.col}; }
  friend bool operator==(Point a, Point b) = default;
};

double distance(Point a, Point b);
double squared_distance(Point a, Point b);

/// Image domain Λ = [0,H] x [0,W] with C channels.
struct DomainSpec {
  int height = 0;
  int width = 0;
  int channels = 1;

  /// Throws InvalidParameter unless H >= 8, W >= 8, C >= 1.
  void validate() const;
  bool contains(Point p) const {
    return p.row >= 0.0 && p.row <= height && p.col >= 0.0 && p.col <= width;
  }
  Point center() const { return {0.5 * (height - 1), 0.5 * (width - 1)}; }
  friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

DomainSpec domain_of(const Image& x);

/// Row-major 2x2 matrix.
struct Mat2 {
  double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

  double det() const { return a * d - b * c; }
  Mat2 inverse() const;
  Point operator*(Point p) const { return {a * p.row + b * p.col, c * p.row + d * p.col}; }
  friend Mat2 operator*(const Mat2& x, const Mat2& y) {
    return {x.a * y.a + x.b * y.c, x.a * y.b + x.b * y.d, x.c * y.a + x.d * y.c,
            x.c * y.b + x.d * y.d};
  }
  Mat2 transpose() const { return {a, c, b, d}; }
};

struct ElasticParams {
  int grid_rows = 5;
  int grid_cols = 5;
  double magnitude = 0.0;   // max displacement, pixels
  double smoothness = 16.0; // Gaussian sigma, pixels
  std::uint64_t seed = 0;
};

/// Smooth random displacement field u on a control grid spanning the domain,
/// evaluated by bilinear interpolation (clamped outside the grid). Immutable.
class ElasticField {
 public:
  ElasticField(const DomainSpec& domain, const ElasticParams& params);

  Point displacement(Point p) const;
  /// Jacobian of u at p (du/drow in the first column, du/dcol in the second).
  Mat2 jacobian(Point p) const;

  const DomainSpec& domain() const { return domain_; }
  const ElasticParams& params() const { return params_; }
  /// Control-grid displacements, row-major nodes, (drow, dcol) interleaved.
  const std::vector<double>& nodes() const { return nodes_; }
  /// Upper bound on the Lipschitz constant of u (max Frobenius norm of its Jacobian).
  double lipschitz_bound() const;

 private:
  DomainSpec domain_;
  ElasticParams params_;
  std::vector<double> nodes_;
};

/// Invertible deformation g of the image domain with exact forward and inverse
/// coordinate evaluation. A CoordMap is a chain of stages applied in order
/// (first stage innermost). Affine stages invert in closed form; elastic stages
/// store the inverse displacement directly (p -> p + u(p)) and recover the
/// forward map by Newton iteration.
class CoordMap {
 public:
  enum class Kind { Affine, Elastic, Composite };

  /// Identity map.
  CoordMap();

  static CoordMap affine(const Mat2& linear, Point offset);
  static CoordMap elastic(std::shared_ptr<const ElasticField> field);

  Kind kind() const;
  std::size_t stage_count() const { return stages_.size(); }

  Point forward(Point p) const;
  Point inverse(Point p) const;
  Mat2 forward_jacobian(Point p) const;

  /// False if an elastic stage was built for a different H x W.
  bool compatible_with(const DomainSpec& domain) const;

  CoordMap inverted() const;
  friend CoordMap compose(const CoordMap& outer, const CoordMap& inner);

  nlohmann::json to_json() const;
  static CoordMap from_json(const nlohmann::json& j);

 private:
  struct AffineStage {
    Mat2 linear;
    Point offset;
  };
  struct ElasticStage {
    std::shared_ptr<const ElasticField> field;
    bool inverted = false;
  };
  using Stage = std::variant<AffineStage, ElasticStage>;

  static Point stage_forward(const Stage& s, Point p);
  static Point stage_inverse(const Stage& s, Point p);
  static Mat2 stage_jacobian(const Stage& s, Point p);

  std::vector<Stage> stages_;
};

/// forward(p) = outer.forward(inner.forward(p)).
CoordMap compose(const CoordMap& outer, const CoordMap& inner);

/// Rotation (radians), anisotropic scale, shear and translation about `center`:
///   forward(p) = center + R(rotation) * Shear(shear) * diag(scale) * (p - center) + translation
CoordMap make_affine(double rotation, std::pair<double, double> scale, double shear,
                     std::pair<double, double> translation, Point center = {});
CoordMap make_translation(double d_row, double d_col);

/// Maximum elastic magnitude as a fraction of min(H, W).
inline constexpr double kElasticMagnitudeFraction = 0.2;
inline constexpr double kMinElasticSmoothness = 8.0;

CoordMap make_elastic(const DomainSpec& domain, std::pair<int, int> control_grid, double magnitude,
                      double smoothness, std::uint64_t seed);

/// Max over a grid x grid interior lattice of |forward(inverse(p)) - p|.
double inverse_consistency_error(const CoordMap& g, const DomainSpec& domain, int grid = 17);

// ---------------------------------------------------------------------------
// Images and landmarks

struct FillPolicy {
  enum class Kind { EdgeClamp, Constant };
  Kind kind = Kind::EdgeClamp;
  float value = 0.0f;

  static FillPolicy edge_clamp() { return {}; }
  static FillPolicy constant(float v) { return {Kind::Constant, v}; }
};

/// Bilinear sample of every channel of x at p into out (size C).
void bilinear_sample(const Tensor& x, Point p, FillPolicy fill, std::span<float> out);

/// g♯x: output pixel λ = bilinear sample of x at g.inverse(λ).
Image warp_image(const CoordMap& g, const Image& x, FillPolicy fill = FillPolicy::edge_clamp());

/// K landmark coordinates with a per-landmark validity flag.
struct LandmarkSet {
  std::vector<Point> points;
  std::vector<std::uint8_t> valid;

  LandmarkSet() = default;
  explicit LandmarkSet(std::vector<Point> pts)
      : points(std::move(pts)), valid(points.size(), 1) {}

  std::size_t size() const { return points.size(); }
  std::size_t valid_count() const;
};

/// y_k -> g.forward(y_k); results outside Λ are flagged invalid, not clamped.
LandmarkSet transport_landmarks(const CoordMap& g, const LandmarkSet& y, const DomainSpec& domain);

}  // namespace lmk
