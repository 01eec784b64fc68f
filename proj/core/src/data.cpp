#include "lmk/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "lmk/errors.hpp"
#include "lmk/image_io.hpp"
#include "lmk/rng.hpp"

namespace lmk {

namespace fs = std::filesystem;

Layout parse_layout(std::string_view name) {
  if (name == "bbc-pose-like") return Layout::BbcPoseLike;
  if (name == "cat-head-like") return Layout::CatHeadLike;
  if (name == "celeba-mafl-like") return Layout::CelebaMaflLike;
  throw ConfigError("unknown dataset layout '" + std::string(name) +
                    "'; valid layouts: bbc-pose-like, cat-head-like, celeba-mafl-like");
}

std::string layout_name(Layout layout) {
  switch (layout) {
    case Layout::BbcPoseLike: return "bbc-pose-like";
    case Layout::CatHeadLike: return "cat-head-like";
    case Layout::CelebaMaflLike: return "celeba-mafl-like";
  }
  return "?";
}

int layout_raw_points(Layout layout) {
  switch (layout) {
    case Layout::BbcPoseLike: return 7;
    case Layout::CatHeadLike: return 9;
    case Layout::CelebaMaflLike: return 5;
  }
  return 0;
}

int layout_landmarks(Layout layout) { return layout == Layout::CatHeadLike ? 7 : layout_raw_points(layout); }

std::pair<int, int> layout_eye_indices(Layout layout) {
  return layout == Layout::BbcPoseLike ? std::pair{1, 2} : std::pair{0, 1};
}

const Dataset& SplitDataset::split(std::string_view name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + std::string(name) + "'; valid splits: train, val, test");
}

namespace {

// Raw point indices kept by a layout.
std::vector<int> kept_points(Layout layout) {
  std::vector<int> keep;
  for (int i = 0; i < layout_raw_points(layout); ++i) {
    // Cat heads: 0-based points 4 and 7 are the ear tips.
    if (layout == Layout::CatHeadLike && (i == 4 || i == 7)) continue;
    keep.push_back(i);
  }
  return keep;
}

double parse_number(const std::string& token, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size() || !std::isfinite(v)) {
    throw DataError(where + ": malformed number '" + token + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

SplitDataset load_directory_dataset(const fs::path& root, Layout layout, int height, int width) {
  const fs::path index_path = root / "index.txt";
  std::ifstream in(index_path);
  if (!in) throw DataError("missing annotation index " + index_path.string());

  std::map<std::string, std::string> split_of;
  if (std::ifstream sp(root / "splits.txt"); sp) {
    std::string split, rel;
    while (sp >> split >> rel) {
      if (split != "train" && split != "val" && split != "test") {
        throw DataError((root / "splits.txt").string() + ": unknown split '" + split + "'");
      }
      split_of[rel] = split;
    }
  }

  const int raw = layout_raw_points(layout);
  const auto keep = kept_points(layout);
  SplitDataset out;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = index_path.string() + ":" + std::to_string(line_no);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok[0] == "#landmarks") {
      if (static_cast<int>(tok.size()) - 1 != raw) {
        throw DataError(where + ": header names " + std::to_string(tok.size() - 1) + " points, layout " +
                        layout_name(layout) + " expects " + std::to_string(raw));
      }
      for (int i : keep) out.names.push_back(tok[static_cast<std::size_t>(i) + 1]);
      have_header = true;
      continue;
    }
    if (tok[0].starts_with("#")) continue;
    if (!have_header) throw DataError(where + ": annotation row before the #landmarks header");
    if (static_cast<int>(tok.size()) != 2 + 2 * raw) {
      throw DataError(where + ": expected path, visibility and " + std::to_string(2 * raw) + " coordinates, got " +
                      std::to_string(tok.size()) + " fields");
    }
    unsigned long long mask = 0;
    const auto res = std::from_chars(tok[1].data(), tok[1].data() + tok[1].size(), mask);
    if (res.ec != std::errc() || res.ptr != tok[1].data() + tok[1].size()) {
      throw DataError(where + ": malformed visibility mask '" + tok[1] + "'");
    }
    const fs::path image_path = root / tok[0];
    if (!fs::exists(image_path)) throw DataError(where + ": image " + image_path.string() + " not found");
    const Image original = read_png(image_path);
    const double sr = static_cast<double>(height) / original.height();
    const double sc = static_cast<double>(width) / original.width();

    AnnotatedExample ex;
    ex.id = tok[0];
    ex.image = resize_bilinear(original, height, width);
    std::vector<Point> pts;
    std::vector<std::uint8_t> vis;
    for (int i : keep) {
      const double x = parse_number(tok[2 + 2 * static_cast<std::size_t>(i)], where);
      const double y = parse_number(tok[3 + 2 * static_cast<std::size_t>(i)], where);
      pts.push_back({y * sr, x * sc});
      vis.push_back(((mask >> i) & 1ULL) ? 1 : 0);
    }
    ex.landmarks = LandmarkSet(std::move(pts));
    ex.landmarks.valid = std::move(vis);
    const auto it = split_of.find(tok[0]);
    const std::string split = it == split_of.end() ? "train" : it->second;
    (split == "val" ? out.val : split == "test" ? out.test : out.train).push_back(std::move(ex));
  }
  if (!have_header) throw DataError(index_path.string() + ": missing #landmarks header");
  return out;
}

void export_dataset(const fs::path& root, const SplitDataset& data, const nlohmann::json& manifest) {
  fs::create_directories(root);
  std::ofstream index(root / "index.txt", std::ios::trunc);
  std::ofstream splits(root / "splits.txt", std::ios::trunc);
  if (!index || !splits) throw DataError("cannot write dataset files under " + root.string());
  index << "#landmarks";
  for (const auto& n : data.names) index << ' ' << n;
  index << '\n';
  for (const char* split : {"train", "val", "test"}) {
    for (const auto& ex : data.split(split)) {
      const std::string rel = std::string("images/") + split + "/" + ex.id + ".png";
      write_png(root / rel, ex.image);
      unsigned long long mask = 0;
      for (std::size_t j = 0; j < ex.landmarks.size(); ++j) {
        if (ex.landmarks.valid[j]) mask |= 1ULL << j;
      }
      index << rel << ' ' << mask;
      for (const Point& p : ex.landmarks.points) index << ' ' << format_double(p.col) << ' ' << format_double(p.row);
      index << '\n';
      splits << split << ' ' << rel << '\n';
    }
  }
  std::ofstream(root / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
}

void DatasetSpec::validate() const {
  if (height < 16 || width < 16 || height % 16 != 0 || width % 16 != 0) {
    throw ConfigError("dataset resolution " + std::to_string(height) + "x" + std::to_string(width) +
                      " must be divisible by 16");
  }
  if (source == Source::Directory && root.empty()) throw ConfigError("directory dataset needs a root path");
  if (readout_split != "train" && readout_split != "val" && readout_split != "test") {
    throw ConfigError("readout_split must be train, val or test");
  }
}

nlohmann::json DatasetSpec::to_json() const {
  return {{"source", source == Source::Synthetic ? "synthetic" : "directory"},
          {"height", height},
          {"width", width},
          {"train", train},
          {"val", val},
          {"test", test},
          {"seed", seed},
          {"root", root.string()},
          {"layout", layout_name(layout)},
          {"readout_split", readout_split}};
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
  DatasetSpec s;
  const std::string src = j.value("source", "synthetic");
  if (src == "synthetic") {
    s.source = Source::Synthetic;
  } else if (src == "directory") {
    s.source = Source::Directory;
  } else {
    throw ConfigError("data.source must be 'synthetic' or 'directory', got '" + src + "'");
  }
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.train = j.value("train", s.train);
  s.val = j.value("val", s.val);
  s.test = j.value("test", s.test);
  s.seed = j.value("seed", s.seed);
  s.root = j.value("root", std::string());
  s.layout = parse_layout(j.value("layout", std::string("bbc-pose-like")));
  s.readout_split = j.value("readout_split", s.readout_split);
  s.validate();
  return s;
}

SplitDataset build_dataset(const DatasetSpec& spec) {
  spec.validate();
  if (spec.source == DatasetSpec::Source::Directory) {
    return load_directory_dataset(spec.root, spec.layout, spec.height, spec.width);
  }
  SplitDataset out;
  out.names = figure_landmark_names();
  const SyntheticSpec synth{spec.height, spec.width, spec.train + spec.val + spec.test, spec.seed};
  for (std::size_t i = 0; i < synth.count; ++i) {
    auto ex = render_figure(synth, i);
    (i < spec.train ? out.train : i < spec.train + spec.val ? out.val : out.test).push_back(std::move(ex));
  }
  return out;
}

// ---------------------------------------------------------------------------

AugmentConfig AugmentConfig::preset(std::string_view name) {
  AugmentConfig c;
  if (name == "identity") return c;
  if (name == "pretrain") {
    c.rotation = 0.26;
    c.scale_jitter = 0.1;
    c.shear = 0.1;
    c.translation = 0.05;
    c.zoom = 0.25;
    c.elastic_magnitude = 0.05;
    c.noise = 0.02;
    c.brightness = 0.2;
    c.contrast = 0.3;
    return c;
  }
  if (name == "landmark") {
    c.rotation = 0.26;
    c.elastic_magnitude = 0.05;
    return c;
  }
  throw ConfigError("unknown augmentation preset '" + std::string(name) + "'; valid presets: identity, pretrain, landmark");
}

void AugmentConfig::validate() const {
  if (rotation < 0 || scale_jitter < 0 || scale_jitter >= 1 || shear < 0 || translation < 0 || zoom < 0 ||
      elastic_magnitude < 0 || elastic_magnitude > kElasticMagnitudeFraction || noise < 0 || brightness < 0 ||
      brightness >= 1 || contrast < 0 || contrast >= 1 || elastic_grid < 2) {
    throw ConfigError("augmentation parameters out of range: " + to_json().dump());
  }
  if (elastic_magnitude > 0 && elastic_smoothness < kMinElasticSmoothness) {
    throw ConfigError("elastic_smoothness must be >= 8 pixels");
  }
}

nlohmann::json AugmentConfig::to_json() const {
  return {{"rotation", rotation},
          {"scale_jitter", scale_jitter},
          {"shear", shear},
          {"translation", translation},
          {"zoom", zoom},
          {"elastic_magnitude", elastic_magnitude},
          {"elastic_smoothness", elastic_smoothness},
          {"elastic_grid", elastic_grid},
          {"noise", noise},
          {"brightness", brightness},
          {"contrast", contrast}};
}

AugmentConfig AugmentConfig::from_json(const nlohmann::json& j) {
  AugmentConfig c = preset(j.value("preset", std::string("identity")));
  c.rotation = j.value("rotation", c.rotation);
  c.scale_jitter = j.value("scale_jitter", c.scale_jitter);
  c.shear = j.value("shear", c.shear);
  c.translation = j.value("translation", c.translation);
  c.zoom = j.value("zoom", c.zoom);
  c.elastic_magnitude = j.value("elastic_magnitude", c.elastic_magnitude);
  c.elastic_smoothness = j.value("elastic_smoothness", c.elastic_smoothness);
  c.elastic_grid = j.value("elastic_grid", c.elastic_grid);
  c.noise = j.value("noise", c.noise);
  c.brightness = j.value("brightness", c.brightness);
  c.contrast = j.value("contrast", c.contrast);
  c.validate();
  return c;
}

CoordMap sample_deformation(const AugmentConfig& cfg, const DomainSpec& domain, Rng& rng) {
  const double side = std::min(domain.height, domain.width);
  const double rotation = uniform(rng, -cfg.rotation, cfg.rotation);
  const double scale = uniform(rng, 1.0 - cfg.scale_jitter, 1.0 + cfg.scale_jitter);
  const double shear = uniform(rng, -cfg.shear, cfg.shear);
  const double t_row = uniform(rng, -cfg.translation, cfg.translation) * side;
  const double t_col = uniform(rng, -cfg.translation, cfg.translation) * side;
  // Crop and zoom: magnify by z about a random point of the central crop.
  const double z = uniform(rng, 1.0, 1.0 + cfg.zoom);
  const double reach = 0.5 * (1.0 - 1.0 / z);
  const double c_row = uniform(rng, -reach, reach) * domain.height;
  const double c_col = uniform(rng, -reach, reach) * domain.width;
  const std::uint64_t elastic_seed = rng();

  CoordMap g = make_affine(rotation, {scale * z, scale * z}, shear,
                           {t_row - (z - 1.0) * c_row, t_col - (z - 1.0) * c_col}, domain.center());
  if (cfg.elastic_magnitude > 0.0) {
    const CoordMap e = make_elastic(domain, {cfg.elastic_grid, cfg.elastic_grid}, cfg.elastic_magnitude * side,
                                    cfg.elastic_smoothness, elastic_seed);
    g = compose(e, g);
  }
  return g;
}

AppearanceMap sample_appearance(const AugmentConfig& cfg, Rng& rng) {
  AppearanceMap r;
  const double contrast = uniform(rng, 1.0 - cfg.contrast, 1.0 + cfg.contrast);
  const double scale = uniform(rng, 1.0 - cfg.brightness, 1.0 + cfg.brightness);
  const double shift = uniform(rng, -0.5 * cfg.brightness, 0.5 * cfg.brightness);
  const std::uint64_t noise_seed = rng();
  if (cfg.contrast > 0.0) r.ops.push_back(AppearanceOp::contrast(contrast));
  if (cfg.brightness > 0.0) r.ops.push_back(AppearanceOp::scale_shift(scale, shift));
  if (cfg.noise > 0.0) r.ops.push_back(AppearanceOp::noise(cfg.noise, noise_seed));
  return r;
}

std::vector<PairSample> sample_pair_batch(const Dataset& data, std::span<const std::size_t> indices, int k,
                                          const AugmentConfig& aug, std::uint64_t seed) {
  if (indices.empty()) throw ConfigError("sample_pair_batch: B must be >= 1");
  if (k < 0) throw ConfigError("sample_pair_batch: K must be >= 0");
  std::vector<PairSample> out;
  out.reserve(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= data.size()) throw ConfigError("sample_pair_batch: index out of range");
    Rng rng(derive_seed(seed, b));
    PairSample s;
    s.index = indices[b];
    s.x = data[s.index].image;
    const DomainSpec domain = domain_of(s.x);
    s.g = sample_deformation(aug, domain, rng);
    s.r = sample_appearance(aug, rng);
    s.x_prime = apply_appearance(s.r, warp_image(s.g, s.x));
    for (int i = 0; i < k; ++i) {
      bool placed = false;
      for (int attempt = 0; attempt < kLocationRetries && !placed; ++attempt) {
        const Point lambda{uniform(rng, kInteriorMargin, 1.0 - kInteriorMargin) * domain.height,
                           uniform(rng, kInteriorMargin, 1.0 - kInteriorMargin) * domain.width};
        const Point image = s.g.forward(lambda);
        if (!domain.contains(image)) continue;
        s.locations.push_back(lambda);
        s.locations_prime.push_back(image);
        placed = true;
      }
      if (!placed) {
        throw SamplingError("sample_pair_batch: no in-domain location after " + std::to_string(kLocationRetries) +
                            " draws for batch seed " + std::to_string(seed) + ", item " + std::to_string(b) +
                            "; the deformation config is too aggressive");
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace lmk
