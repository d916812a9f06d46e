#include "pyconv/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pyconv {

namespace {

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

void require_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": " + std::to_string(a) + " deltas for " +
                                std::to_string(b) + " default boxes");
  }
}

template <typename Fn>
void for_each_map_entry(const std::map<std::string, Tensor<float>>& outputs, const DefaultBoxConfig& cfg,
                        const char* prefix, int per_box, Fn&& fn) {
  for (std::size_t m = 0; m < cfg.sides.size(); ++m) {
    const std::string name = prefix + std::to_string(m);
    const auto it = outputs.find(name);
    if (it == outputs.end()) throw std::invalid_argument("missing detection output '" + name + "'");
    const Tensor<float>& t = it->second;
    const std::int64_t side = cfg.sides[m];
    const std::int64_t boxes = cfg.boxes_per_map[m];
    if (t.dims() != Dims{1, boxes * per_box, side, side}) {
      throw ShapeError("detection output '" + name + "' has dims " + to_string(t.dims()));
    }
    for (std::int64_t y = 0; y < side; ++y) {
      for (std::int64_t x = 0; x < side; ++x) {
        for (std::int64_t b = 0; b < boxes; ++b) {
          fn([&](std::int64_t k) { return static_cast<double>(t.at({0, b * per_box + k, y, x})); });
        }
      }
    }
  }
}

}  // namespace

std::vector<double> DefaultBoxConfig::scales() const {
  const std::size_t m = sides.size();
  std::vector<double> s(m + 1);
  for (std::size_t k = 0; k < m; ++k) {
    s[k] = m == 1 ? min_scale
                  : min_scale + (max_scale - min_scale) * static_cast<double>(k) / static_cast<double>(m - 1);
  }
  const double step = m == 1 ? 0.0 : (max_scale - min_scale) / static_cast<double>(m - 1);
  s[m] = std::min(1.0, max_scale + step);
  return s;
}

std::vector<double> DefaultBoxConfig::aspect_ratios(std::size_t map) const {
  if (boxes_per_map.at(map) == 4) return {1.0, 2.0, 0.5};
  return {1.0, 2.0, 0.5, 3.0, 1.0 / 3.0};
}

void DefaultBoxConfig::validate() const {
  if (sides.size() != boxes_per_map.size() || sides.empty()) {
    throw std::invalid_argument("default boxes: sides and box counts must have equal, non-zero length");
  }
  for (std::size_t m = 0; m < sides.size(); ++m) {
    if (sides[m] < 1) throw std::invalid_argument("default boxes: map sides must be positive");
    if (boxes_per_map[m] != 4 && boxes_per_map[m] != 6) {
      throw std::invalid_argument("default boxes: box count must be 4 or 6, got " +
                                  std::to_string(boxes_per_map[m]));
    }
  }
  if (!(min_scale > 0.0 && max_scale >= min_scale)) throw std::invalid_argument("default boxes: bad scales");
}

std::int64_t DefaultBoxConfig::box_count() const {
  std::int64_t n = 0;
  for (std::size_t m = 0; m < sides.size(); ++m) {
    n += static_cast<std::int64_t>(sides[m]) * sides[m] * boxes_per_map[m];
  }
  return n;
}

std::vector<Box> generate_default_boxes(const DefaultBoxConfig& cfg) {
  cfg.validate();
  const auto s = cfg.scales();
  std::vector<Box> out;
  out.reserve(static_cast<std::size_t>(cfg.box_count()));
  for (std::size_t m = 0; m < cfg.sides.size(); ++m) {
    const int side = cfg.sides[m];
    std::vector<std::pair<double, double>> shapes;
    shapes.emplace_back(s[m], s[m]);
    const double extra = std::sqrt(s[m] * s[m + 1]);
    shapes.emplace_back(extra, extra);
    for (double r : cfg.aspect_ratios(m)) {
      if (r == 1.0) continue;
      shapes.emplace_back(s[m] * std::sqrt(r), s[m] / std::sqrt(r));
    }
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        const double cx = (x + 0.5) / side;
        const double cy = (y + 0.5) / side;
        for (const auto& [w, h] : shapes) out.push_back({cx, cy, clip01(w), clip01(h)});
      }
    }
  }
  return out;
}

std::vector<Box> decode_center(const std::vector<BoxDelta>& deltas, const std::vector<Box>& defaults, Variances v) {
  require_same(deltas.size(), defaults.size(), "decode");
  std::vector<Box> out(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    const Box& d = defaults[i];
    const BoxDelta& t = deltas[i];
    out[i] = {d.cx + t[0] * v.center * d.w, d.cy + t[1] * v.center * d.h, d.w * std::exp(t[2] * v.size),
              d.h * std::exp(t[3] * v.size)};
  }
  return out;
}

std::vector<Corners> decode_boxes(const std::vector<BoxDelta>& deltas, const std::vector<Box>& defaults,
                                  Variances v) {
  const auto centers = decode_center(deltas, defaults, v);
  std::vector<Corners> out(centers.size());
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const Corners c = to_corners(centers[i]);
    out[i] = {clip01(c.x0), clip01(c.y0), clip01(c.x1), clip01(c.y1)};
  }
  return out;
}

std::vector<BoxDelta> encode_boxes(const std::vector<Box>& boxes, const std::vector<Box>& defaults, Variances v) {
  require_same(boxes.size(), defaults.size(), "encode");
  std::vector<BoxDelta> out(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Box& d = defaults[i];
    const Box& b = boxes[i];
    if (!(b.w > 0 && b.h > 0)) throw std::invalid_argument("encode: box sizes must be positive");
    out[i] = {(b.cx - d.cx) / (v.center * d.w), (b.cy - d.cy) / (v.center * d.h), std::log(b.w / d.w) / v.size,
              std::log(b.h / d.h) / v.size};
  }
  return out;
}

Corners to_corners(const Box& b) {
  return {b.cx - b.w / 2, b.cy - b.h / 2, b.cx + b.w / 2, b.cy + b.h / 2};
}

double iou(const Corners& a, const Corners& b) {
  const double iw = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double ih = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = iw * ih;
  const double area_a = std::max(0.0, a.x1 - a.x0) * std::max(0.0, a.y1 - a.y0);
  const double area_b = std::max(0.0, b.x1 - b.x0) * std::max(0.0, b.y1 - b.y0);
  const double uni = area_a + area_b - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::vector<std::size_t> nms(const std::vector<Corners>& boxes, const std::vector<double>& scores,
                             double iou_threshold, int top_k) {
  if (boxes.size() != scores.size()) {
    throw std::invalid_argument("nms: " + std::to_string(boxes.size()) + " boxes but " +
                                std::to_string(scores.size()) + " scores");
  }
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    if (top_k > 0 && kept.size() >= static_cast<std::size_t>(top_k)) break;
    const bool suppressed =
        std::any_of(kept.begin(), kept.end(), [&](std::size_t k) { return iou(boxes[k], boxes[i]) > iou_threshold; });
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

std::vector<BoxDelta> gather_loc(const std::map<std::string, Tensor<float>>& outputs, const DefaultBoxConfig& cfg) {
  std::vector<BoxDelta> out;
  out.reserve(static_cast<std::size_t>(cfg.box_count()));
  for_each_map_entry(outputs, cfg, "loc", 4, [&](auto get) { out.push_back({get(0), get(1), get(2), get(3)}); });
  return out;
}

std::vector<std::vector<double>> gather_conf(const std::map<std::string, Tensor<float>>& outputs,
                                             const DefaultBoxConfig& cfg, int num_classes) {
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(cfg.box_count()));
  for_each_map_entry(outputs, cfg, "conf", num_classes, [&](auto get) {
    std::vector<double> row(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) row[static_cast<std::size_t>(c)] = get(c);
    out.push_back(std::move(row));
  });
  return out;
}

std::vector<Detection> detect(const std::map<std::string, Tensor<float>>& outputs, const DefaultBoxConfig& config,
                              int num_classes, const DetectOptions& options) {
  if (num_classes < 2) throw std::invalid_argument("detect: need a background class and at least one object class");
  const std::vector<Box> defaults = generate_default_boxes(config);
  const std::vector<Corners> boxes = decode_boxes(gather_loc(outputs, config), defaults);
  std::vector<std::vector<double>> conf = gather_conf(outputs, config, num_classes);
  for (auto& row : conf) {
    const double zmax = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) sum += (v = std::exp(v - zmax));
    for (double& v : row) v /= sum;
  }

  std::vector<Detection> found;
  for (int c = 1; c < num_classes; ++c) {
    std::vector<Corners> cand;
    std::vector<double> scores;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const double s = conf[i][static_cast<std::size_t>(c)];
      if (s > options.score_threshold) {
        cand.push_back(boxes[i]);
        scores.push_back(s);
      }
    }
    for (std::size_t k : nms(cand, scores, options.iou_threshold, options.top_k)) {
      found.push_back({c, scores[k], cand[k]});
    }
  }
  std::stable_sort(found.begin(), found.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  if (options.top_k > 0 && found.size() > static_cast<std::size_t>(options.top_k)) {
    found.resize(static_cast<std::size_t>(options.top_k));
  }
  return found;
}

}  // namespace pyconv
