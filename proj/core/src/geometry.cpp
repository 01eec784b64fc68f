#include "lmk/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lmk/errors.hpp"
#include "lmk/rng.hpp"

namespace lmk {

double squared_distance(Point a, Point b) {
  const double dr = a.row - b.row, dc = a.col - b.col;
  return dr * dr + dc * dc;
}

double distance(Point a, Point b) { return std::sqrt(squared_distance(a, b)); }

void DomainSpec::validate() const {
  if (height < 8 || width < 8 || channels < 1) {
    throw InvalidParameter("domain must satisfy H>=8, W>=8, C>=1; got " + std::to_string(height) +
                           "x" + std::to_string(width) + "x" + std::to_string(channels));
  }
}

DomainSpec domain_of(const Image& x) {
  if (x.rank() != 3) throw DimensionError("expected a (C,H,W) image, got " + shape_string(x.shape()));
  return {x.height(), x.width(), x.channels()};
}

Mat2 Mat2::inverse() const {
  const double dt = det();
  if (dt == 0.0 || !std::isfinite(dt)) throw NumericError("singular 2x2 matrix");
  return {d / dt, -b / dt, -c / dt, a / dt};
}

// ---------------------------------------------------------------------------
// ElasticField

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable Gaussian filter over a rows x cols grid of 2-vectors, clamped at the border.
void smooth_nodes(std::vector<double>& nodes, int rows, int cols, double sigma_r, double sigma_c) {
  const auto kr = gaussian_kernel(sigma_r), kc = gaussian_kernel(sigma_c);
  const int rr = static_cast<int>(kr.size()) / 2, rc = static_cast<int>(kc.size()) / 2;
  std::vector<double> tmp(nodes.size(), 0.0);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      for (int t = -rc; t <= rc; ++t) {
        const int jj = std::clamp(j + t, 0, cols - 1);
        for (int ch = 0; ch < 2; ++ch) tmp[(i * cols + j) * 2 + ch] += kc[t + rc] * nodes[(i * cols + jj) * 2 + ch];
      }
    }
  }
  std::fill(nodes.begin(), nodes.end(), 0.0);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      for (int t = -rr; t <= rr; ++t) {
        const int ii = std::clamp(i + t, 0, rows - 1);
        for (int ch = 0; ch < 2; ++ch) nodes[(i * cols + j) * 2 + ch] += kr[t + rr] * tmp[(ii * cols + j) * 2 + ch];
      }
    }
  }
}

}  // namespace

ElasticField::ElasticField(const DomainSpec& domain, const ElasticParams& params)
    : domain_(domain), params_(params) {
  domain.validate();
  if (params.grid_rows < 2 || params.grid_cols < 2) {
    throw InvalidParameter("elastic control grid needs at least 2x2 nodes");
  }
  const double bound = kElasticMagnitudeFraction * std::min(domain.height, domain.width);
  if (!(params.magnitude >= 0.0) || params.magnitude > bound) {
    throw InvalidParameter("elastic magnitude " + std::to_string(params.magnitude) +
                           " exceeds bijectivity bound " + std::to_string(bound));
  }
  if (params.magnitude > 0.0 && params.smoothness < kMinElasticSmoothness) {
    throw InvalidParameter("elastic smoothness must be >= " + std::to_string(kMinElasticSmoothness) +
                           " px");
  }
  const int rows = params.grid_rows, cols = params.grid_cols;
  nodes_.assign(static_cast<std::size_t>(rows) * cols * 2, 0.0);
  if (params.magnitude == 0.0) return;

  Rng rng(params.seed);
  for (double& v : nodes_) v = uniform(rng, -1.0, 1.0);
  const double spacing_r = static_cast<double>(domain.height) / (rows - 1);
  const double spacing_c = static_cast<double>(domain.width) / (cols - 1);
  smooth_nodes(nodes_, rows, cols, params.smoothness / spacing_r, params.smoothness / spacing_c);

  double max_norm = 0.0;
  for (std::size_t n = 0; n < nodes_.size(); n += 2) {
    max_norm = std::max(max_norm, std::hypot(nodes_[n], nodes_[n + 1]));
  }
  if (max_norm > 0.0) {
    const double s = params.magnitude / max_norm;
    for (double& v : nodes_) v *= s;
  }
  // A contraction keeps p -> p + u(p) bijective and the Newton solve convergent.
  if (lipschitz_bound() >= 0.9) {
    throw InvalidParameter("elastic field too rough for invertibility (Lipschitz bound " +
                           std::to_string(lipschitz_bound()) + "); lower magnitude or raise smoothness");
  }
}

Point ElasticField::displacement(Point p) const {
  const int rows = params_.grid_rows, cols = params_.grid_cols;
  const double tr = std::clamp(p.row * (rows - 1) / domain_.height, 0.0, rows - 1.0);
  const double tc = std::clamp(p.col * (cols - 1) / domain_.width, 0.0, cols - 1.0);
  const int i0 = std::min(static_cast<int>(tr), rows - 2), j0 = std::min(static_cast<int>(tc), cols - 2);
  const double fr = tr - i0, fc = tc - j0;
  auto node = [&](int i, int j, int ch) { return nodes_[(static_cast<std::size_t>(i) * cols + j) * 2 + ch]; };
  Point u;
  for (int ch = 0; ch < 2; ++ch) {
    const double v = (1 - fr) * ((1 - fc) * node(i0, j0, ch) + fc * node(i0, j0 + 1, ch)) +
                     fr * ((1 - fc) * node(i0 + 1, j0, ch) + fc * node(i0 + 1, j0 + 1, ch));
    (ch == 0 ? u.row : u.col) = v;
  }
  return u;
}

Mat2 ElasticField::jacobian(Point p) const {
  const int rows = params_.grid_rows, cols = params_.grid_cols;
  const double sr = (rows - 1) / static_cast<double>(domain_.height);
  const double sc = (cols - 1) / static_cast<double>(domain_.width);
  const double tr_raw = p.row * sr, tc_raw = p.col * sc;
  const double tr = std::clamp(tr_raw, 0.0, rows - 1.0), tc = std::clamp(tc_raw, 0.0, cols - 1.0);
  const bool clamp_r = tr_raw < 0.0 || tr_raw > rows - 1.0;
  const bool clamp_c = tc_raw < 0.0 || tc_raw > cols - 1.0;
  const int i0 = std::min(static_cast<int>(tr), rows - 2), j0 = std::min(static_cast<int>(tc), cols - 2);
  const double fr = tr - i0, fc = tc - j0;
  auto node = [&](int i, int j, int ch) { return nodes_[(static_cast<std::size_t>(i) * cols + j) * 2 + ch]; };
  double d_dr[2], d_dc[2];
  for (int ch = 0; ch < 2; ++ch) {
    d_dr[ch] = clamp_r ? 0.0
                       : sr * ((1 - fc) * (node(i0 + 1, j0, ch) - node(i0, j0, ch)) +
                               fc * (node(i0 + 1, j0 + 1, ch) - node(i0, j0 + 1, ch)));
    d_dc[ch] = clamp_c ? 0.0
                       : sc * ((1 - fr) * (node(i0, j0 + 1, ch) - node(i0, j0, ch)) +
                               fr * (node(i0 + 1, j0 + 1, ch) - node(i0 + 1, j0, ch)));
  }
  return {d_dr[0], d_dc[0], d_dr[1], d_dc[1]};
}

double ElasticField::lipschitz_bound() const {
  const int rows = params_.grid_rows, cols = params_.grid_cols;
  const double sr = (rows - 1) / static_cast<double>(domain_.height);
  const double sc = (cols - 1) / static_cast<double>(domain_.width);
  auto node = [&](int i, int j, int ch) { return nodes_[(static_cast<std::size_t>(i) * cols + j) * 2 + ch]; };
  double best = 0.0;
  // The Jacobian of a bilinear patch is affine in the cell, so its norm peaks at a corner.
  for (int i = 0; i + 1 < rows; ++i) {
    for (int j = 0; j + 1 < cols; ++j) {
      for (int cr = 0; cr < 2; ++cr) {
        for (int cc = 0; cc < 2; ++cc) {
          double f2 = 0.0;
          for (int ch = 0; ch < 2; ++ch) {
            const double d_dr = sr * (node(i + 1, j + cc, ch) - node(i, j + cc, ch));
            const double d_dc = sc * (node(i + cr, j + 1, ch) - node(i + cr, j, ch));
            f2 += d_dr * d_dr + d_dc * d_dc;
          }
          best = std::max(best, std::sqrt(f2));
        }
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// CoordMap

namespace {

// Solves q + u(q) = p.
Point solve_elastic(const ElasticField& field, Point p) {
  Point q = p - field.displacement(p);
  for (int it = 0; it < 20; ++it) {
    const Point r = q + field.displacement(q) - p;
    if (std::hypot(r.row, r.col) < 1e-10) break;
    Mat2 j = field.jacobian(q);
    j.a += 1.0;
    j.d += 1.0;
    const double dt = j.det();
    if (std::abs(dt) > 1e-12) {
      q = q - j.inverse() * r;
    } else {
      q = p - field.displacement(q);
    }
  }
  return q;
}

}  // namespace

CoordMap::CoordMap() = default;

CoordMap CoordMap::affine(const Mat2& linear, Point offset) {
  if (linear.det() == 0.0 || !std::isfinite(linear.det())) {
    throw InvalidParameter("affine map must have a nonzero determinant");
  }
  CoordMap m;
  m.stages_.push_back(AffineStage{linear, offset});
  return m;
}

CoordMap CoordMap::elastic(std::shared_ptr<const ElasticField> field) {
  CoordMap m;
  m.stages_.push_back(ElasticStage{std::move(field), false});
  return m;
}

CoordMap::Kind CoordMap::kind() const {
  if (stages_.empty()) return Kind::Affine;
  if (stages_.size() > 1) return Kind::Composite;
  return std::holds_alternative<AffineStage>(stages_.front()) ? Kind::Affine : Kind::Elastic;
}

Point CoordMap::stage_forward(const Stage& s, Point p) {
  if (const auto* a = std::get_if<AffineStage>(&s)) return a->linear * p + a->offset;
  const auto& e = std::get<ElasticStage>(s);
  return e.inverted ? p + e.field->displacement(p) : solve_elastic(*e.field, p);
}

Point CoordMap::stage_inverse(const Stage& s, Point p) {
  if (const auto* a = std::get_if<AffineStage>(&s)) return a->linear.inverse() * (p - a->offset);
  const auto& e = std::get<ElasticStage>(s);
  return e.inverted ? solve_elastic(*e.field, p) : p + e.field->displacement(p);
}

Mat2 CoordMap::stage_jacobian(const Stage& s, Point p) {
  if (const auto* a = std::get_if<AffineStage>(&s)) return a->linear;
  const auto& e = std::get<ElasticStage>(s);
  if (e.inverted) {
    Mat2 j = e.field->jacobian(p);
    j.a += 1.0;
    j.d += 1.0;
    return j;
  }
  // Inverse function theorem at the solved preimage.
  const Point q = solve_elastic(*e.field, p);
  Mat2 j = e.field->jacobian(q);
  j.a += 1.0;
  j.d += 1.0;
  return j.inverse();
}

Point CoordMap::forward(Point p) const {
  for (const auto& s : stages_) p = stage_forward(s, p);
  return p;
}

Point CoordMap::inverse(Point p) const {
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) p = stage_inverse(*it, p);
  return p;
}

Mat2 CoordMap::forward_jacobian(Point p) const {
  Mat2 j;
  for (const auto& s : stages_) {
    j = stage_jacobian(s, p) * j;
    p = stage_forward(s, p);
  }
  return j;
}

bool CoordMap::compatible_with(const DomainSpec& domain) const {
  for (const auto& s : stages_) {
    if (const auto* e = std::get_if<ElasticStage>(&s)) {
      const auto& d = e->field->domain();
      if (d.height != domain.height || d.width != domain.width) return false;
    }
  }
  return true;
}

CoordMap CoordMap::inverted() const {
  CoordMap m;
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
    if (const auto* a = std::get_if<AffineStage>(&*it)) {
      const Mat2 inv = a->linear.inverse();
      m.stages_.push_back(AffineStage{inv, -1.0 * (inv * a->offset)});
    } else {
      auto e = std::get<ElasticStage>(*it);
      e.inverted = !e.inverted;
      m.stages_.push_back(e);
    }
  }
  return m;
}

CoordMap compose(const CoordMap& outer, const CoordMap& inner) {
  CoordMap m;
  m.stages_ = inner.stages_;
  m.stages_.insert(m.stages_.end(), outer.stages_.begin(), outer.stages_.end());
  return m;
}

namespace {
const char* kind_name(CoordMap::Kind k) {
  switch (k) {
    case CoordMap::Kind::Affine: return "affine";
    case CoordMap::Kind::Elastic: return "elastic";
    case CoordMap::Kind::Composite: return "composite";
  }
  return "?";
}
}  // namespace

nlohmann::json CoordMap::to_json() const {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : stages_) {
    if (const auto* a = std::get_if<AffineStage>(&s)) {
      stages.push_back({{"kind", "affine"},
                        {"linear", {a->linear.a, a->linear.b, a->linear.c, a->linear.d}},
                        {"offset", {a->offset.row, a->offset.col}}});
    } else {
      const auto& e = std::get<ElasticStage>(s);
      const auto& p = e.field->params();
      const auto& d = e.field->domain();
      stages.push_back({{"kind", "elastic"},
                        {"domain", {d.height, d.width, d.channels}},
                        {"grid", {p.grid_rows, p.grid_cols}},
                        {"magnitude", p.magnitude},
                        {"smoothness", p.smoothness},
                        {"seed", p.seed},
                        {"inverted", e.inverted}});
    }
  }
  const char* kind = kind_name(this->kind());
  return {{"version", 1}, {"kind", kind}, {"stages", stages}};
}

CoordMap CoordMap::from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw ConfigError("unsupported CoordMap record version");
    CoordMap m;
    for (const auto& s : j.at("stages")) {
      const auto kind = s.at("kind").get<std::string>();
      if (kind == "affine") {
        const auto l = s.at("linear").get<std::vector<double>>();
        const auto o = s.at("offset").get<std::vector<double>>();
        if (l.size() != 4 || o.size() != 2) throw ConfigError("malformed affine stage");
        m.stages_.push_back(AffineStage{{l[0], l[1], l[2], l[3]}, {o[0], o[1]}});
      } else if (kind == "elastic") {
        const auto d = s.at("domain").get<std::vector<int>>();
        const auto g = s.at("grid").get<std::vector<int>>();
        if (d.size() != 3 || g.size() != 2) throw ConfigError("malformed elastic stage");
        ElasticParams p{g[0], g[1], s.at("magnitude").get<double>(), s.at("smoothness").get<double>(),
                        s.at("seed").get<std::uint64_t>()};
        auto field = std::make_shared<const ElasticField>(DomainSpec{d[0], d[1], d[2]}, p);
        m.stages_.push_back(ElasticStage{std::move(field), s.at("inverted").get<bool>()});
      } else {
        throw ConfigError("unknown CoordMap stage kind '" + kind + "'");
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed CoordMap record: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Constructors

CoordMap make_affine(double rotation, std::pair<double, double> scale, double shear,
                     std::pair<double, double> translation, Point center) {
  if (!(scale.first > 0.0) || !(scale.second > 0.0)) {
    throw InvalidParameter("affine scale factors must be > 0");
  }
  const double c = std::cos(rotation), s = std::sin(rotation);
  const Mat2 rot{c, -s, s, c};
  const Mat2 sh{1.0, shear, 0.0, 1.0};
  const Mat2 sc{scale.first, 0.0, 0.0, scale.second};
  const Mat2 linear = rot * sh * sc;
  const Point offset = center - linear * center + Point{translation.first, translation.second};
  return CoordMap::affine(linear, offset);
}

CoordMap make_translation(double d_row, double d_col) {
  return CoordMap::affine(Mat2{}, {d_row, d_col});
}

CoordMap make_elastic(const DomainSpec& domain, std::pair<int, int> control_grid, double magnitude,
                      double smoothness, std::uint64_t seed) {
  ElasticParams p{control_grid.first, control_grid.second, magnitude, smoothness, seed};
  return CoordMap::elastic(std::make_shared<const ElasticField>(domain, p));
}

double inverse_consistency_error(const CoordMap& g, const DomainSpec& domain, int grid) {
  double worst = 0.0;
  for (int i = 1; i <= grid; ++i) {
    for (int j = 1; j <= grid; ++j) {
      const Point p{domain.height * i / (grid + 1.0), domain.width * j / (grid + 1.0)};
      worst = std::max(worst, distance(g.forward(g.inverse(p)), p));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Images and landmarks

void bilinear_sample(const Tensor& x, Point p, FillPolicy fill, std::span<float> out) {
  const int h = x.height(), w = x.width(), c = x.channels();
  double r = p.row, q = p.col;
  if (fill.kind == FillPolicy::Kind::EdgeClamp) {
    r = std::clamp(r, 0.0, h - 1.0);
    q = std::clamp(q, 0.0, w - 1.0);
  }
  const double fr0 = std::floor(r), fq0 = std::floor(q);
  const int r0 = static_cast<int>(fr0), q0 = static_cast<int>(fq0);
  const double fr = r - fr0, fq = q - fq0;
  const int rs[2] = {r0, r0 + 1};
  const int qs[2] = {q0, q0 + 1};
  const double wr[2] = {1.0 - fr, fr};
  const double wq[2] = {1.0 - fq, fq};
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const double wt = wr[a] * wq[b];
        if (wt == 0.0) continue;
        const int rr = rs[a], qq = qs[b];
        float v;
        if (rr >= 0 && rr < h && qq >= 0 && qq < w) {
          v = x.at(ch, rr, qq);
        } else if (fill.kind == FillPolicy::Kind::EdgeClamp) {
          v = x.at(ch, std::clamp(rr, 0, h - 1), std::clamp(qq, 0, w - 1));
        } else {
          v = fill.value;
        }
        acc += wt * v;
      }
    }
    out[static_cast<std::size_t>(ch)] = static_cast<float>(acc);
  }
}

Image warp_image(const CoordMap& g, const Image& x, FillPolicy fill) {
  const DomainSpec dom = domain_of(x);
  if (!g.compatible_with(dom)) {
    throw DimensionError("warp_image: image " + shape_string(x.shape()) +
                         " does not match the deformation's domain");
  }
  Image y(x.shape());
  std::vector<float> px(static_cast<std::size_t>(dom.channels));
  for (int r = 0; r < dom.height; ++r) {
    for (int q = 0; q < dom.width; ++q) {
      bilinear_sample(x, g.inverse({static_cast<double>(r), static_cast<double>(q)}), fill, px);
      for (int ch = 0; ch < dom.channels; ++ch) y.at(ch, r, q) = px[static_cast<std::size_t>(ch)];
    }
  }
  return y;
}

std::size_t LandmarkSet::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

LandmarkSet transport_landmarks(const CoordMap& g, const LandmarkSet& y, const DomainSpec& domain) {
  LandmarkSet out;
  out.points.reserve(y.size());
  out.valid.reserve(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) {
    const Point p = g.forward(y.points[k]);
    out.points.push_back(p);
    const bool was_valid = k < y.valid.size() ? y.valid[k] != 0 : true;
    out.valid.push_back(was_valid && domain.contains(p) ? 1 : 0);
  }
  return out;
}

}  // namespace lmk
