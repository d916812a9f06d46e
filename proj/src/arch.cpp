#include "pyconv/arch.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace pyconv {

std::string family_name(Family f) {
  switch (f) {
    case Family::resnet_baseline: return "resnet-baseline";
    case Family::pyconvresnet: return "pyconvresnet";
    case Family::pyconvhgresnet: return "pyconvhgresnet";
    case Family::pyconvresnet_top: return "pyconvresnet-top";
  }
  return "?";
}

Family parse_family(const std::string& name) {
  if (name == "resnet-baseline" || name == "resnet") return Family::resnet_baseline;
  if (name == "pyconvresnet") return Family::pyconvresnet;
  if (name == "pyconvhgresnet") return Family::pyconvhgresnet;
  if (name == "pyconvresnet-top") return Family::pyconvresnet_top;
  throw std::invalid_argument("unknown family '" + name + "'");
}

std::array<int, 4> blocks_for_depth(int depth) {
  switch (depth) {
    case 50: return {3, 4, 6, 3};
    case 101: return {3, 4, 23, 3};
    case 152: return {3, 8, 36, 3};
    default: throw std::invalid_argument("unsupported depth " + std::to_string(depth) +
                                         " (expected 50, 101 or 152)");
  }
}

namespace {

constexpr std::array<int, 5> kPyramidKernels{3, 5, 7, 9, 11};

std::vector<int> rep(int v, int rank) { return std::vector<int>(static_cast<std::size_t>(rank), v); }

ConvSpec make_conv(std::int64_t in, std::int64_t out, std::vector<int> kernel, std::vector<int> stride,
                   std::vector<int> pad, std::int64_t groups = 1, int dilation = 1) {
  ConvSpec c;
  c.dilation = rep(dilation, static_cast<int>(kernel.size()));
  c.kernel = std::move(kernel);
  c.stride = std::move(stride);
  c.padding = std::move(pad);
  c.groups = groups;
  c.in_channels = in;
  c.out_channels = out;
  return c;
}

ConvSpec pointwise(std::int64_t in, std::int64_t out, const std::vector<int>& stride) {
  const int r = static_cast<int>(stride.size());
  return make_conv(in, out, rep(1, r), stride, rep(0, r));
}

bool all_ones(const std::vector<int>& v) {
  return std::all_of(v.begin(), v.end(), [](int x) { return x == 1; });
}

std::string join_kernel(const std::vector<int>& k) {
  std::string s;
  for (std::size_t i = 0; i < k.size(); ++i) s += (i ? "x" : "") + std::to_string(k[i]);
  return s;
}

std::string stride_text(const std::vector<int>& s) {
  if (all_ones(s)) return "";
  const bool same = std::all_of(s.begin(), s.end(), [&](int x) { return x == s[0]; });
  if (same) return ", s=" + std::to_string(s[0]);
  std::string t = ", s=";
  for (std::size_t i = 0; i < s.size(); ++i) t += (i ? "," : "") + std::to_string(s[i]);
  return t;
}

/// Largest power of two <= g dividing both channel counts.
std::int64_t cap_groups(std::int64_t g, std::int64_t in, std::int64_t out) {
  while (g > 1 && (in % g != 0 || out % g != 0)) g /= 2;
  return g;
}

std::vector<std::int64_t> level_splits(std::int64_t width, int levels) {
  switch (levels) {
    case 1: return {width};
    case 2: return {width / 2, width / 2};
    case 3: return {width / 4, width / 4, width / 2};
    case 4: return {width / 4, width / 4, width / 4, width / 4};
    case 5: return {width / 4, width / 4, width / 4, width / 8, width / 8};
    default: throw std::invalid_argument("pyramid levels must be 1..5");
  }
}

std::vector<int> video_kernel(int k) {
  switch (k) {
    case 3: return {3, 3, 3};
    case 5: return {3, 5, 5};
    case 7: return {5, 7, 7};
    case 9: return {7, 9, 9};
    default: throw std::invalid_argument("video pyramid supports kernels 3..9");
  }
}

int check_divisor(int d) {
  if (d < 1 || 64 % d != 0) throw std::invalid_argument("width_divisor must divide 64");
  return d;
}

}  // namespace

PyConvSpec stage_pyconv(const BackboneOptions& o, int stage, std::int64_t width, std::vector<int> stride) {
  const int dil = o.dilation.at(static_cast<std::size_t>(stage));
  PyConvSpec s;
  s.in_channels = width;
  s.stride = std::move(stride);
  if (o.family == Family::resnet_baseline) {
    s.levels.push_back({rep(3, o.video ? 3 : 2), width, 1, dil});
    return s;
  }
  const int n = o.level_schedule.at(static_cast<std::size_t>(stage));
  if (n < 1 || n > 5) throw std::invalid_argument("level schedule entries must be 1..5");
  if (o.video && n > 4) throw std::invalid_argument("video networks support at most 4 levels");
  const std::vector<int> ks(kPyramidKernels.begin(), kPyramidKernels.begin() + n);
  const auto splits = level_splits(width, n);
  std::vector<std::int64_t> groups;
  if (o.family == Family::pyconvhgresnet) {
    static const std::vector<std::vector<std::int64_t>> hg{{32, 32, 32, 32}, {32, 64, 64}, {32, 64}, {32}};
    groups = hg.at(static_cast<std::size_t>(stage));
  } else {
    groups = default_group_schedule(width, ks);
  }
  auto kernel_of = [&](int k) { return o.video ? video_kernel(k) : rep(k, 2); };
  if (o.family == Family::pyconvresnet_top) {
    s.levels.push_back({kernel_of(ks.back()), width, cap_groups(groups.back(), width, width), dil});
    return s;
  }
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    s.levels.push_back({kernel_of(ks[ui]), splits[ui], cap_groups(groups[ui], width, splits[ui]), dil});
  }
  return s;
}

std::string describe_spatial(const PyConvSpec& spec, bool plain) {
  if (plain) {
    const auto& l = spec.levels.front();
    std::string s = join_kernel(l.kernel) + ", " + std::to_string(l.out_channels);
    if (l.groups != 1) s += ", G=" + std::to_string(l.groups);
    if (l.dilation != 1) s += ", d=" + std::to_string(l.dilation);
    return s;
  }
  std::ostringstream os;
  os << "PyConv" << spec.levels.size() << ", " << spec.out_channels() << ": ";
  for (std::size_t i = spec.levels.size(); i-- > 0;) {
    const auto& l = spec.levels[i];
    os << join_kernel(l.kernel) << ", " << l.out_channels << ", G=" << l.groups;
    if (l.dilation != 1) os << ", d=" << l.dilation;
    if (i) os << " | ";
  }
  return os.str();
}

void check_block(const BlockSpec& b) {
  if (b.in_channels < 1 || b.width < 1 || b.out_channels < 1) {
    throw std::invalid_argument("block '" + b.name + "': channel counts must be positive");
  }
  const auto violations = validate(b.spatial);
  if (!violations.empty()) {
    throw std::invalid_argument("block '" + b.name + "': " + violations.front());
  }
  if (b.spatial.in_channels != b.width || b.spatial.out_channels() != b.width) {
    throw std::invalid_argument("block '" + b.name + "': spatial layer must map width to width");
  }
  if (b.plain_spatial && b.spatial.levels.size() != 1) {
    throw std::invalid_argument("block '" + b.name + "': a plain spatial layer has one level");
  }
  const bool reshapes = !all_ones(b.spatial.stride) || b.in_channels != b.out_channels;
  if (reshapes && b.shortcut == ShortcutKind::identity) {
    throw std::invalid_argument("block '" + b.name +
                                "': projection shortcut required when stride or channels change");
  }
  if (b.shortcut == ShortcutKind::maxpool_projection &&
      static_cast<int>(b.pool_window.size()) != b.spatial.spatial_rank()) {
    throw std::invalid_argument("block '" + b.name + "': pool window needs one entry per axis");
  }
}

int build_bottleneck(NetworkGraph& g, const BlockSpec& b, int input) {
  check_block(b);
  const int r = b.spatial.spatial_rank();
  const auto ones = rep(1, r);
  const std::string& p = b.name;

  int x = g.add_conv(p + ".conv1", pointwise(b.in_channels, b.width, ones), input);
  x = g.add_batchnorm(p + ".bn1", b.width, x);
  x = g.add_relu(p + ".relu1", x);
  x = b.plain_spatial ? g.add_conv(p + ".conv2", b.spatial.level_conv(0), x)
                      : g.add_pyconv(p + ".pyconv2", b.spatial, x);
  x = g.add_batchnorm(p + ".bn2", b.width, x);
  x = g.add_relu(p + ".relu2", x);
  x = g.add_conv(p + ".conv3", pointwise(b.width, b.out_channels, ones), x);
  x = g.add_batchnorm(p + ".bn3", b.out_channels, x);

  int sc = input;
  if (b.shortcut == ShortcutKind::projection) {
    sc = g.add_conv(p + ".shortcut.conv", pointwise(b.in_channels, b.out_channels, b.spatial.stride), sc);
    sc = g.add_batchnorm(p + ".shortcut.bn", b.out_channels, sc);
  } else if (b.shortcut == ShortcutKind::maxpool_projection) {
    PoolSpec pool;
    pool.window = b.pool_window;
    pool.stride = b.spatial.stride;
    for (int w : b.pool_window) pool.padding.push_back((w - 1) / 2);
    sc = g.add_maxpool(p + ".shortcut.pool", pool, sc);
    sc = g.add_conv(p + ".shortcut.conv", pointwise(b.in_channels, b.out_channels, ones), sc);
    sc = g.add_batchnorm(p + ".shortcut.bn", b.out_channels, sc);
  }
  x = g.add_add(p + ".add", x, sc);
  return g.add_relu(p + ".relu3", x);
}

Backbone add_backbone(NetworkGraph& g, const BackboneOptions& o) {
  const auto blocks = blocks_for_depth(o.depth);
  const int d = check_divisor(o.width_divisor);
  if (o.stages < 1 || o.stages > 4) throw std::invalid_argument("backbone stages must be 1..4");
  if (o.family == Family::pyconvhgresnet && o.level_schedule != LevelSchedule{4, 3, 2, 1}) {
    throw std::invalid_argument("pyconvhgresnet only supports the (4,3,2,1) schedule");
  }
  if (o.video && (o.family == Family::pyconvhgresnet || o.family == Family::pyconvresnet_top)) {
    throw std::invalid_argument("video networks support resnet-baseline and pyconvresnet only");
  }
  const DownsampleLayout layout = o.layout.value_or(
      o.family == Family::resnet_baseline ? DownsampleLayout::stem_maxpool : DownsampleLayout::shortcut_maxpool);
  const std::array<int, 4> strides = o.strides.value_or(
      layout == DownsampleLayout::stem_maxpool ? std::array<int, 4>{1, 2, 2, 2} : std::array<int, 4>{2, 2, 2, 2});
  const int r = o.video ? 3 : 2;
  const std::int64_t stem_c = 64 / d;

  StageInfo stem{"stem", -1, {}, 1};
  int x;
  if (o.video) {
    x = g.add_conv("stem.conv", make_conv(o.in_channels, stem_c, {5, 7, 7}, {1, 2, 2}, {2, 3, 3}), g.input());
    stem.rows.push_back("5x7x7, " + std::to_string(stem_c) + ", s=1,2,2");
  } else {
    x = g.add_conv("stem.conv", ConvSpec::conv2d(o.in_channels, stem_c, 7, 2, 3), g.input());
    stem.rows.push_back("7x7, " + std::to_string(stem_c) + ", s=2");
  }
  x = g.add_batchnorm("stem.bn", stem_c, x);
  x = g.add_relu("stem.relu", x);
  if (layout == DownsampleLayout::stem_maxpool) {
    if (o.video) {
      x = g.add_maxpool("stem.pool", PoolSpec{{1, 3, 3}, {1, 2, 2}, {0, 1, 1}}, x);
      stem.rows.push_back("1x3x3 max pool, s=1,2,2");
    } else {
      x = g.add_maxpool("stem.pool", PoolSpec::pool2d(3, 2, 1), x);
      stem.rows.push_back("3x3 max pool, s=2");
    }
  }
  stem.output_node = x;
  g.add_stage(stem);

  Backbone bb;
  std::int64_t in = stem_c;
  for (int s = 0; s < o.stages; ++s) {
    const auto us = static_cast<std::size_t>(s);
    const std::int64_t width = (std::int64_t{64} << s) / d * (o.family == Family::pyconvhgresnet ? 2 : 1);
    const std::int64_t out = (std::int64_t{256} << s) / d;
    std::vector<int> stride = o.video ? std::vector<int>{o.temporal_strides[us], strides[us], strides[us]}
                                      : std::vector<int>{strides[us], strides[us]};
    StageInfo info{"stage" + std::to_string(s + 1), -1, {}, blocks[us]};
    for (int b = 0; b < blocks[us]; ++b) {
      BlockSpec bs;
      bs.name = "layer" + std::to_string(s + 1) + "." + std::to_string(b);
      bs.in_channels = in;
      bs.width = width;
      bs.out_channels = out;
      const std::vector<int> st = b == 0 ? stride : rep(1, r);
      bs.spatial = stage_pyconv(o, s, width, st);
      bs.plain_spatial = o.family == Family::resnet_baseline;
      if (!all_ones(st)) {
        bs.shortcut = layout == DownsampleLayout::shortcut_maxpool ? ShortcutKind::maxpool_projection
                                                                   : ShortcutKind::projection;
      } else if (in != out) {
        bs.shortcut = ShortcutKind::projection;
      }
      bs.pool_window = o.video ? std::vector<int>{st[0] > 1 ? 3 : 1, 3, 3} : std::vector<int>{3, 3};
      x = build_bottleneck(g, bs, x);
      if (b == 0) {
        info.rows = {"1x1, " + std::to_string(width), describe_spatial(bs.spatial, bs.plain_spatial) + stride_text(st),
                     "1x1, " + std::to_string(out)};
      }
      in = out;
    }
    info.output_node = x;
    g.add_stage(info);
    bb.stage_outputs.push_back(x);
  }
  bb.output = x;
  bb.channels = in;
  return bb;
}

NetworkGraph build_classification_net(const ClassificationOptions& o) {
  const BackboneOptions& b = o.backbone;
  NetworkGraph g(family_name(b.family) + "-" + std::to_string(b.depth), b.in_channels, b.video ? 3 : 2);
  if (b.stages != 4) throw std::invalid_argument("classification networks use all four stages");
  const Backbone bb = add_backbone(g, b);
  int x = g.add_global_avgpool("head.pool", bb.output);
  x = g.add_linear("head.fc", bb.channels, o.num_classes, x);
  g.set_output("logits", x);
  g.add_stage({"head", x, {"global avg pool, " + std::to_string(o.num_classes) + "-d fc"}, 1});
  return g;
}

NetworkGraph build_classification_net(Family family, int depth, LevelSchedule schedule) {
  ClassificationOptions o;
  o.backbone.family = family;
  o.backbone.depth = depth;
  o.backbone.level_schedule = schedule;
  return build_classification_net(o);
}

namespace {

/// 1x1 -> BN -> ReLU -> PyConv4 -> BN -> ReLU -> 1x1 -> BN -> ReLU.
int add_pyconv_branch(NetworkGraph& g, const std::string& p, std::int64_t in, std::int64_t width,
                      int input) {
  int x = g.add_conv(p + ".conv1", ConvSpec::conv2d(in, width, 1), input);
  x = g.add_batchnorm(p + ".bn1", width, x);
  x = g.add_relu(p + ".relu1", x);
  const auto splits = level_splits(width, 4);
  const std::vector<int> ks{3, 5, 7, 9};
  auto groups = default_group_schedule(width, ks);
  for (std::size_t i = 0; i < groups.size(); ++i) groups[i] = cap_groups(groups[i], width, splits[i]);
  x = g.add_pyconv(p + ".pyconv", make_pyconv2d(width, width, ks, 1, splits, groups), x);
  x = g.add_batchnorm(p + ".bn2", width, x);
  x = g.add_relu(p + ".relu2", x);
  x = g.add_conv(p + ".conv3", ConvSpec::conv2d(width, width, 1), x);
  x = g.add_batchnorm(p + ".bn3", width, x);
  return g.add_relu(p + ".relu3", x);
}

}  // namespace

NetworkGraph build_pyconvsegnet(const SegmentationOptions& o) {
  if (o.output_stride != 8 && o.output_stride != 16) {
    throw std::invalid_argument("output_stride must be 8 or 16");
  }
  BackboneOptions b = o.backbone;
  if (b.video) throw std::invalid_argument("segmentation backbone must be 2D");
  b.stages = 4;
  const DownsampleLayout layout = b.layout.value_or(
      b.family == Family::resnet_baseline ? DownsampleLayout::stem_maxpool : DownsampleLayout::shortcut_maxpool);
  b.layout = layout;
  std::array<int, 4> strides = layout == DownsampleLayout::stem_maxpool ? std::array<int, 4>{1, 2, 2, 2}
                                                                        : std::array<int, 4>{2, 2, 2, 2};
  b.dilation = o.output_stride == 8 ? std::array<int, 4>{1, 1, 2, 4} : std::array<int, 4>{1, 1, 1, 2};
  for (std::size_t s = 0; s < 4; ++s) {
    if (b.dilation[s] > 1) strides[s] = 1;
  }
  b.strides = strides;

  const int d = check_divisor(b.width_divisor);
  NetworkGraph g("pyconvsegnet-" + family_name(b.family) + "-" + std::to_string(b.depth) + "-os" +
                     std::to_string(o.output_stride),
                 b.in_channels, 2);
  const Backbone bb = add_backbone(g, b);
  const std::int64_t head = 512 / d;
  const std::int64_t merge = 256 / d;

  const int local = add_pyconv_branch(g, "head.local", bb.channels, head, bb.output);
  int glob = g.add_adaptive_avgpool("head.global.pool", o.global_bins, bb.output);
  glob = add_pyconv_branch(g, "head.global", bb.channels, head, glob);
  glob = g.add_upsample("head.global.upsample", glob, bb.output);
  int x = g.add_concat("head.merge.concat", {local, glob});
  x = g.add_pyconv("head.merge.pyconv", make_pyconv2d(2 * head, merge, {3}), x);
  x = g.add_batchnorm("head.merge.bn", merge, x);
  x = g.add_relu("head.merge.relu", x);
  x = g.add_conv("head.classifier", ConvSpec::conv2d(merge, o.num_classes, 1), x, true);
  x = g.add_upsample("head.upsample", x, g.input());
  g.set_output("main", x);
  StageInfo hs{"head", x, {}, 1};
  hs.rows.push_back("local: 1x1, " + std::to_string(head) + " | " +
                    describe_spatial(std::get<PyConvSpec>(g.node(g.find("head.local.pyconv")).spec), false) +
                    " | 1x1, " + std::to_string(head));
  hs.rows.push_back("global: adaptive avg pool " + std::to_string(o.global_bins) + " | same branch | upsample");
  hs.rows.push_back("merge: concat " + std::to_string(2 * head) + " | 3x3, " + std::to_string(merge));
  hs.rows.push_back("1x1, " + std::to_string(o.num_classes) + " | bilinear upsample to input");

  if (o.aux) {
    const std::int64_t c3 = 1024 / d;
    int a = g.add_conv("aux.conv", ConvSpec::conv2d(c3, merge, 3, 1, 1), bb.stage_outputs[2]);
    a = g.add_batchnorm("aux.bn", merge, a);
    a = g.add_relu("aux.relu", a);
    a = g.add_dropout("aux.dropout", 0.1, a);
    a = g.add_conv("aux.classifier", ConvSpec::conv2d(merge, o.num_classes, 1), a, true);
    a = g.add_upsample("aux.upsample", a, g.input());
    g.set_output("aux", a);
    hs.rows.push_back("aux (stage3): 3x3, " + std::to_string(merge) + " | dropout 0.1 | 1x1, " +
                      std::to_string(o.num_classes));
  }
  g.add_stage(hs);
  return g;
}

NetworkGraph build_pyconvsegnet(int depth, int num_classes, int output_stride) {
  SegmentationOptions o;
  o.backbone.depth = depth;
  o.num_classes = num_classes;
  o.output_stride = output_stride;
  return build_pyconvsegnet(o);
}

NetworkGraph build_ssd(const DetectionOptions& o) {
  if (o.family != Family::pyconvresnet && o.family != Family::resnet_baseline) {
    throw std::invalid_argument("detection supports pyconvresnet and resnet-baseline backbones");
  }
  const bool py = o.family == Family::pyconvresnet;
  BackboneOptions b;
  b.family = o.family;
  b.depth = o.depth;
  b.width_divisor = o.width_divisor;
  b.stages = 3;
  b.strides = py ? std::array<int, 4>{2, 2, 1, 2} : std::array<int, 4>{1, 2, 1, 2};
  const int d = check_divisor(o.width_divisor);
  NetworkGraph g(std::string(py ? "pyconvssd-" : "ssd-") + std::to_string(o.depth), b.in_channels, 2);
  const Backbone bb = add_backbone(g, b);

  const std::array<std::int64_t, 5> mids{256, 256, 128, 128, 128};
  const std::array<std::int64_t, 5> outs{512, 512, 256, 256, 256};
  const std::array<int, 3> levels{4, 3, 2};
  std::vector<int> sources{bb.output};
  std::vector<std::int64_t> channels{bb.channels};
  StageInfo ex{"extras", -1, {}, 1};
  int x = bb.output;
  std::int64_t in = bb.channels;
  for (std::size_t i = 0; i < mids.size(); ++i) {
    const std::string p = "extra" + std::to_string(i + 1);
    const std::int64_t mid = mids[i] / d, out = outs[i] / d;
    x = g.add_conv(p + ".conv1", ConvSpec::conv2d(in, mid, 1), x);
    x = g.add_batchnorm(p + ".bn1", mid, x);
    x = g.add_relu(p + ".relu1", x);
    std::string row = "1x1, " + std::to_string(mid) + " | ";
    if (i < 3 && py) {
      const std::vector<int> ks(kPyramidKernels.begin(), kPyramidKernels.begin() + levels[i]);
      const auto splits = level_splits(out, levels[i]);
      auto groups = default_group_schedule(mid, ks);
      for (std::size_t l = 0; l < groups.size(); ++l) groups[l] = cap_groups(groups[l], mid, splits[l]);
      const PyConvSpec spec = make_pyconv2d(mid, out, ks, 2, splits, groups);
      x = g.add_pyconv(p + ".pyconv2", spec, x);
      row += describe_spatial(spec, false) + ", s=2";
    } else if (i < 3) {
      x = g.add_conv(p + ".conv2", ConvSpec::conv2d(mid, out, 3, 2, 1), x);
      row += "3x3, " + std::to_string(out) + ", s=2";
    } else {
      x = g.add_conv(p + ".conv2", ConvSpec::conv2d(mid, out, 3, 1, 0), x);
      row += "3x3, " + std::to_string(out) + ", pad 0";
    }
    x = g.add_batchnorm(p + ".bn2", out, x);
    x = g.add_relu(p + ".relu2", x);
    ex.rows.push_back(row);
    sources.push_back(x);
    channels.push_back(out);
    in = out;
  }
  ex.output_node = x;
  g.add_stage(ex);

  StageInfo hs{"heads", -1, {}, 1};
  for (std::size_t m = 0; m < sources.size(); ++m) {
    const std::int64_t boxes = kSsdBoxesPerMap[m];
    const std::string p = "head" + std::to_string(m);
    const int loc = g.add_conv(p + ".loc", ConvSpec::conv2d(channels[m], boxes * 4, 3, 1, 1), sources[m], true);
    const int conf =
        g.add_conv(p + ".conf", ConvSpec::conv2d(channels[m], boxes * o.num_classes, 3, 1, 1), sources[m], true);
    g.set_output("loc" + std::to_string(m), loc);
    g.set_output("conf" + std::to_string(m), conf);
    hs.rows.push_back("map " + std::to_string(m) + ": " + std::to_string(boxes) + " boxes, loc 3x3 " +
                      std::to_string(boxes * 4) + ", conf 3x3 " + std::to_string(boxes * o.num_classes));
    hs.output_node = conf;
  }
  g.add_stage(hs);
  return g;
}

NetworkGraph build_pyconvssd(int depth, int num_classes) {
  DetectionOptions o;
  o.depth = depth;
  o.num_classes = num_classes;
  return build_ssd(o);
}

NetworkGraph build_video_net(const VideoOptions& o) {
  BackboneOptions b;
  b.family = o.pyconv ? Family::pyconvresnet : Family::resnet_baseline;
  b.depth = o.depth;
  b.width_divisor = o.width_divisor;
  b.video = true;
  NetworkGraph g(std::string(o.pyconv ? "pyconvresnet3d-" : "resnet3d-") + std::to_string(o.depth),
                 b.in_channels, 3);
  const Backbone bb = add_backbone(g, b);
  int x = g.add_global_avgpool("head.pool", bb.output);
  x = g.add_dropout("head.dropout", o.dropout, x);
  x = g.add_linear("head.fc", bb.channels, o.num_classes, x);
  g.set_output("logits", x);
  g.add_stage({"head", x, {"global avg pool, dropout " + std::to_string(o.dropout).substr(0, 3) + ", " +
                           std::to_string(o.num_classes) + "-d fc"},
               1});
  return g;
}

NetworkGraph build_pyconvresnet3d(int depth) {
  VideoOptions o;
  o.depth = depth;
  return build_video_net(o);
}

NetworkGraph build_resnet3d(int depth) {
  VideoOptions o;
  o.pyconv = false;
  o.depth = depth;
  return build_video_net(o);
}

}  // namespace pyconv
