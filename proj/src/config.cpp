#include "pyconv/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace pyconv {

using nlohmann::json;

std::string task_name(Task t) {
  switch (t) {
    case Task::classification: return "classification";
    case Task::segmentation: return "segmentation";
    case Task::detection: return "detection";
    case Task::video: return "video";
  }
  return "?";
}

namespace {

Task parse_task(const std::string& s) {
  if (s == "classification") return Task::classification;
  if (s == "segmentation") return Task::segmentation;
  if (s == "detection") return Task::detection;
  if (s == "video") return Task::video;
  throw ConfigError("task: unknown value '" + s + "'");
}

std::string layout_name(DownsampleLayout l) {
  return l == DownsampleLayout::stem_maxpool ? "stem-maxpool" : "shortcut-maxpool";
}

DownsampleLayout parse_layout(const std::string& s) {
  if (s == "stem-maxpool") return DownsampleLayout::stem_maxpool;
  if (s == "shortcut-maxpool") return DownsampleLayout::shortcut_maxpool;
  throw ConfigError("downsample: unknown value '" + s + "'");
}

template <typename T>
T get_as(const json& doc, const char* key) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(key) + ": wrong type");
  }
}

int get_int(const json& doc, const char* key) {
  const json& v = doc.at(key);
  if (!v.is_number_integer()) throw ConfigError(std::string(key) + ": expected an integer");
  return v.get<int>();
}

}  // namespace

ModelConfig default_config(Task task) {
  ModelConfig c;
  c.task = task;
  switch (task) {
    case Task::classification:
      c.num_classes = 1000;
      c.input_shape = {1, 3, 224, 224};
      break;
    case Task::segmentation:
      c.family = Family::resnet_baseline;
      c.num_classes = 150;
      c.input_shape = {1, 3, 473, 473};
      break;
    case Task::detection:
      c.num_classes = 81;
      c.input_shape = {1, 3, 300, 300};
      break;
    case Task::video:
      c.num_classes = 400;
      c.input_shape = {1, 3, 16, 224, 224};
      break;
  }
  return c;
}

ModelConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known{"family",      "depth",         "level_schedule", "task",
                                           "num_classes", "output_stride", "input_shape",    "width_divisor",
                                           "downsample",  "global_bins",   "aux"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "'");
  }

  const Task task = doc.contains("task") ? parse_task(get_as<std::string>(doc, "task")) : Task::classification;
  ModelConfig c = default_config(task);
  if (doc.contains("family")) {
    try {
      c.family = parse_family(get_as<std::string>(doc, "family"));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("family: ") + e.what());
    }
  }
  if (doc.contains("depth")) c.depth = get_int(doc, "depth");
  if (c.depth != 50 && c.depth != 101 && c.depth != 152) {
    throw ConfigError("depth: must be 50, 101 or 152, got " + std::to_string(c.depth));
  }
  if (doc.contains("level_schedule")) {
    const json& s = doc.at("level_schedule");
    if (!s.is_array() || s.size() != 4) throw ConfigError("level_schedule: expected 4 integers");
    for (std::size_t i = 0; i < 4; ++i) {
      if (!s[i].is_number_integer()) throw ConfigError("level_schedule: expected 4 integers");
      const int v = s[i].get<int>();
      if (v < 1 || v > 5) throw ConfigError("level_schedule: entries must be 1..5");
      c.level_schedule[i] = v;
    }
  }
  if (doc.contains("num_classes")) {
    c.num_classes = get_int(doc, "num_classes");
    if (c.num_classes < 1) throw ConfigError("num_classes: must be >= 1");
  }
  if (doc.contains("output_stride")) {
    c.output_stride = get_int(doc, "output_stride");
    if (c.output_stride != 8 && c.output_stride != 16) throw ConfigError("output_stride: must be 8 or 16");
  }
  if (doc.contains("input_shape")) {
    const json& s = doc.at("input_shape");
    if (!s.is_array()) throw ConfigError("input_shape: expected an array");
    Dims d;
    for (const auto& e : s) {
      if (!e.is_number_integer() || e.get<std::int64_t>() < 1) {
        throw ConfigError("input_shape: extents must be positive integers");
      }
      d.push_back(e.get<std::int64_t>());
    }
    const std::size_t want = task == Task::video ? 5 : 4;
    if (d.size() != want) throw ConfigError("input_shape: expected " + std::to_string(want) + " extents");
    c.input_shape = d;
  }
  if (doc.contains("width_divisor")) {
    c.width_divisor = get_int(doc, "width_divisor");
    if (c.width_divisor < 1 || 64 % c.width_divisor != 0) throw ConfigError("width_divisor: must divide 64");
  }
  if (doc.contains("downsample")) c.downsample = parse_layout(get_as<std::string>(doc, "downsample"));
  if (doc.contains("global_bins")) {
    c.global_bins = get_int(doc, "global_bins");
    if (c.global_bins < 1) throw ConfigError("global_bins: must be >= 1");
  }
  if (doc.contains("aux")) {
    if (!doc.at("aux").is_boolean()) throw ConfigError("aux: expected a boolean");
    c.aux = doc.at("aux").get<bool>();
  }
  if (c.task == Task::detection && c.family != Family::pyconvresnet && c.family != Family::resnet_baseline) {
    throw ConfigError("family: detection supports pyconvresnet and resnet-baseline");
  }
  if (c.task == Task::video && c.family != Family::pyconvresnet && c.family != Family::resnet_baseline) {
    throw ConfigError("family: video supports pyconvresnet and resnet-baseline");
  }
  if (c.family == Family::pyconvhgresnet && c.level_schedule != LevelSchedule{4, 3, 2, 1}) {
    throw ConfigError("level_schedule: pyconvhgresnet uses (4,3,2,1)");
  }
  if (c.input_shape[1] != 3) throw ConfigError("input_shape: channel extent must be 3");
  return c;
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ModelConfig& c) {
  json doc;
  doc["family"] = family_name(c.family);
  doc["depth"] = c.depth;
  doc["level_schedule"] = c.level_schedule;
  doc["task"] = task_name(c.task);
  doc["num_classes"] = c.num_classes;
  doc["input_shape"] = c.input_shape;
  if (c.task == Task::segmentation) {
    doc["output_stride"] = c.output_stride;
    doc["global_bins"] = c.global_bins;
    doc["aux"] = c.aux;
  }
  if (c.width_divisor != 1) doc["width_divisor"] = c.width_divisor;
  if (c.downsample) doc["downsample"] = layout_name(*c.downsample);
  return doc.dump(2);
}

NetworkGraph build_network(const ModelConfig& c) {
  switch (c.task) {
    case Task::classification: {
      ClassificationOptions o;
      o.backbone.family = c.family;
      o.backbone.depth = c.depth;
      o.backbone.level_schedule = c.level_schedule;
      o.backbone.layout = c.downsample;
      o.backbone.width_divisor = c.width_divisor;
      o.num_classes = c.num_classes;
      return build_classification_net(o);
    }
    case Task::segmentation: {
      SegmentationOptions o;
      o.backbone.family = c.family;
      o.backbone.depth = c.depth;
      o.backbone.level_schedule = c.level_schedule;
      o.backbone.layout = c.downsample;
      o.backbone.width_divisor = c.width_divisor;
      o.num_classes = c.num_classes;
      o.output_stride = c.output_stride;
      o.global_bins = c.global_bins;
      o.aux = c.aux;
      return build_pyconvsegnet(o);
    }
    case Task::detection: {
      DetectionOptions o;
      o.family = c.family;
      o.depth = c.depth;
      o.num_classes = c.num_classes;
      o.width_divisor = c.width_divisor;
      return build_ssd(o);
    }
    case Task::video: {
      VideoOptions o;
      o.pyconv = c.family == Family::pyconvresnet;
      o.depth = c.depth;
      o.num_classes = c.num_classes;
      o.width_divisor = c.width_divisor;
      return build_video_net(o);
    }
  }
  throw ConfigError("unknown task");
}

}  // namespace pyconv
