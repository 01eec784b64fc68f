#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "lmk/appearance.hpp"
#include "lmk/example.hpp"
#include "lmk/geometry.hpp"
#include "lmk/rng.hpp"
#include "lmk/synthetic.hpp"

namespace lmk {

// ---------------------------------------------------------------------------
// Dataset layouts and splits

enum class Layout { BbcPoseLike, CatHeadLike, CelebaMaflLike };

Layout parse_layout(std::string_view name);
std::string layout_name(Layout layout);
/// Number of points per row in the index file for this layout.
int layout_raw_points(Layout layout);
/// Number of landmarks exposed after normalisation (cat-head drops the two ear tips).
int layout_landmarks(Layout layout);
/// Inter-ocular index pair for iod-mse (face layouts; bbc-pose-like uses the shoulders).
std::pair<int, int> layout_eye_indices(Layout layout);

struct SplitDataset {
  std::vector<std::string> names;
  Dataset train, val, test;

  const Dataset& split(std::string_view name) const;
};

/// Reads `<root>/index.txt`:
///   #landmarks name_1 ... name_P
///   relative/path.png v x_1 y_1 ... x_P y_P
/// with x = column, y = row (pixels of the stored image) and v a bitmask whose
/// bit j marks point j visible. `<root>/splits.txt` ("split relative/path" per
/// line) assigns rows to train/val/test; without it every row is train.
/// Images are resized to (height, width) and annotations scaled to match.
/// Throws DataError naming the offending file and line.
SplitDataset load_directory_dataset(const std::filesystem::path& root, Layout layout, int height, int width);

/// Writes images as PNG under `<root>/images/<split>/`, plus index.txt,
/// splits.txt and manifest.json (the given manifest object). Output is a pure
/// function of the inputs.
void export_dataset(const std::filesystem::path& root, const SplitDataset& data, const nlohmann::json& manifest);

struct DatasetSpec {
  enum class Source { Synthetic, Directory };
  Source source = Source::Synthetic;
  int height = 64;
  int width = 64;
  std::size_t train = 512;
  std::size_t val = 64;
  std::size_t test = 128;
  std::uint64_t seed = 0;
  std::filesystem::path root;
  Layout layout = Layout::BbcPoseLike;
  /// Split used to fit the readout ("val" for bbc-pose-like, "train" for faces).
  std::string readout_split = "val";

  void validate() const;
  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& j);
};

/// Synthetic: examples 0..train-1 form the train split, the next `val` the
/// validation split, then `test`; membership is a function of (seed, index).
SplitDataset build_dataset(const DatasetSpec& spec);

// ---------------------------------------------------------------------------
// Augmentation

/// Random deformation and appearance family. Pixel quantities scale with the
/// image: translation, crop shift and elastic magnitude are fractions of min(H, W).
struct AugmentConfig {
  double rotation = 0.0;          // uniform in [-rotation, rotation], radians
  double scale_jitter = 0.0;      // isotropic scale in [1 - j, 1 + j]
  double shear = 0.0;             // uniform in [-shear, shear]
  double translation = 0.0;       // per axis, fraction of min(H, W)
  double zoom = 0.0;              // crop-and-zoom factor in [1, 1 + zoom] with a random crop centre
  double elastic_magnitude = 0.0; // fraction of min(H, W)
  double elastic_smoothness = 16.0;
  int elastic_grid = 5;
  double noise = 0.0;             // additive Gaussian std
  double brightness = 0.0;        // scale in [1 - b, 1 + b], shift in [-b/2, b/2]
  double contrast = 0.0;          // factor in [1 - c, 1 + c]

  /// "identity", "pretrain" (affine + crop/zoom + elastic + appearance),
  /// "landmark" (rotation + elastic).
  static AugmentConfig preset(std::string_view name);
  void validate() const;
  nlohmann::json to_json() const;
  static AugmentConfig from_json(const nlohmann::json& j);
};

CoordMap sample_deformation(const AugmentConfig& cfg, const DomainSpec& domain, Rng& rng);
AppearanceMap sample_appearance(const AugmentConfig& cfg, Rng& rng);

/// One training pair x' = (r ∘ g♯)(x) with K corresponding locations.
struct PairSample {
  std::size_t index = 0;
  Image x, x_prime;
  CoordMap g;
  AppearanceMap r;
  std::vector<Point> locations;        // λ, drawn from the interior margin
  std::vector<Point> locations_prime;  // g(λ), all inside Λ
};

/// Fraction of each dimension excluded on either side when drawing locations.
inline constexpr double kInteriorMargin = 0.1;
inline constexpr int kLocationRetries = 100;

/// Builds one pair per entry of `indices`. Item b uses sub-seed (seed, b).
/// Locations whose image leaves Λ are redrawn up to kLocationRetries times,
/// after which SamplingError is thrown.
std::vector<PairSample> sample_pair_batch(const Dataset& data, std::span<const std::size_t> indices, int k,
                                          const AugmentConfig& aug, std::uint64_t seed);

}  // namespace lmk
