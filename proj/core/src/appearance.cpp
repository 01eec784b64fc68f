#include "lmk/appearance.hpp"

#include "lmk/errors.hpp"
#include "lmk/rng.hpp"

namespace lmk {

Image apply_appearance(const AppearanceMap& r, const Image& x) {
  Image y = x;
  for (const auto& op : r.ops) {
    switch (op.kind) {
      case AppearanceOp::Kind::Noise: {
        Rng rng(op.seed);
        for (float& v : y.values()) v += static_cast<float>(op.a * normal01(rng));
        break;
      }
      case AppearanceOp::Kind::ScaleShift:
        for (float& v : y.values()) v = static_cast<float>(v * op.a + op.b);
        break;
      case AppearanceOp::Kind::Contrast:
        for (int c = 0; c < y.channels(); ++c) {
          auto plane = y.channel(c);
          double mean = 0.0;
          for (float v : plane) mean += v;
          mean /= static_cast<double>(plane.size());
          for (float& v : plane) v = static_cast<float>((v - mean) * op.a + mean);
        }
        break;
    }
  }
  return y;
}

nlohmann::json AppearanceMap::to_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& op : ops) {
    const char* kind = op.kind == AppearanceOp::Kind::Noise        ? "noise"
                       : op.kind == AppearanceOp::Kind::ScaleShift ? "scale_shift"
                                                                   : "contrast";
    arr.push_back({{"kind", kind}, {"a", op.a}, {"b", op.b}, {"seed", op.seed}});
  }
  return {{"version", 1}, {"ops", arr}};
}

AppearanceMap AppearanceMap::from_json(const nlohmann::json& j) {
  try {
    AppearanceMap r;
    for (const auto& o : j.at("ops")) {
      const auto kind = o.at("kind").get<std::string>();
      AppearanceOp op;
      if (kind == "noise") op.kind = AppearanceOp::Kind::Noise;
      else if (kind == "scale_shift") op.kind = AppearanceOp::Kind::ScaleShift;
      else if (kind == "contrast") op.kind = AppearanceOp::Kind::Contrast;
      else throw ConfigError("unknown appearance op '" + kind + "'");
      op.a = o.at("a").get<double>();
      op.b = o.at("b").get<double>();
      op.seed = o.at("seed").get<std::uint64_t>();
      r.ops.push_back(op);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed appearance record: ") + e.what());
  }
}

}  // namespace lmk
