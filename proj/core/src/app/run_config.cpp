#include "kdmos/app/run_config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "kdmos/binary_io.hpp"
#include "kdmos/error.hpp"

namespace kdmos::app {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": not a number: '" + std::string(v) + "'");
  }
  return out;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view v) {
  Int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": not an integer: '" + std::string(v) + "'");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(std::string(key) + ": expected true/false, got '" + std::string(v) + "'");
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(trim(v.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

struct Entry {
  std::string key;
  std::string description;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string str(double v) { return io::format_double(v); }
std::string str(int v) { return std::to_string(v); }
std::string str(bool v) { return v ? "true" : "false"; }

#define KDMOS_DOUBLE(k, field, doc)                                                        \
  Entry {                                                                                  \
    k, doc, [](RunConfig& c, std::string_view v) { c.field = to_double(k, v); },           \
        [](const RunConfig& c) { return str(c.field); }                                    \
  }
#define KDMOS_INT(k, field, doc)                                                           \
  Entry {                                                                                  \
    k, doc, [](RunConfig& c, std::string_view v) { c.field = to_int<int>(k, v); },         \
        [](const RunConfig& c) { return str(c.field); }                                    \
  }
#define KDMOS_BOOL(k, field, doc)                                                          \
  Entry {                                                                                  \
    k, doc, [](RunConfig& c, std::string_view v) { c.field = to_bool(k, v); },             \
        [](const RunConfig& c) { return str(c.field); }                                    \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      Entry{"grid.mode", "polar | cartesian",
            [](RunConfig& c, std::string_view v) {
              if (v == "polar") c.bev.grid.mode = GridMode::Polar;
              else if (v == "cartesian") c.bev.grid.mode = GridMode::Cartesian;
              else throw ConfigError("grid.mode: expected polar or cartesian");
            },
            [](const RunConfig& c) {
              return std::string(c.bev.grid.mode == GridMode::Polar ? "polar" : "cartesian");
            }},
      KDMOS_INT("grid.n_radial", bev.grid.n_radial, "range bins (x bins in cartesian mode)"),
      KDMOS_INT("grid.n_angular", bev.grid.n_angular, "angle bins (y bins in cartesian mode)"),
      KDMOS_DOUBLE("grid.r_max", bev.grid.r_max, "maximum range in metres"),
      KDMOS_DOUBLE("grid.z_min", bev.grid.z_min, "lower height cut (exclusive)"),
      KDMOS_DOUBLE("grid.z_max", bev.grid.z_max, "upper height cut (exclusive)"),
      KDMOS_INT("bev.n_frames", bev.n_frames, "frames per input window"),
      KDMOS_INT("bev.n2", bev.n2, "size of the recent half of the window"),
      Entry{"bev.aggregate", "max | mean | latest",
            [](RunConfig& c, std::string_view v) {
              if (v == "max") c.bev.motion.aggregate = WindowAggregate::Max;
              else if (v == "mean") c.bev.motion.aggregate = WindowAggregate::Mean;
              else if (v == "latest") c.bev.motion.aggregate = WindowAggregate::Latest;
              else throw ConfigError("bev.aggregate: expected max, mean or latest");
            },
            [](const RunConfig& c) {
              switch (c.bev.motion.aggregate) {
                case WindowAggregate::Max: return std::string("max");
                case WindowAggregate::Mean: return std::string("mean");
                case WindowAggregate::Latest: return std::string("latest");
              }
              return std::string("max");
            }},
      KDMOS_BOOL("bev.per_frame_residuals", bev.motion.per_frame_residuals,
                 "pair frame k with frame k+n2 instead of the two window images"),
      KDMOS_BOOL("bev.appearance", bev.motion.appearance,
                 "append per-frame height images to the input"),
      KDMOS_DOUBLE("distill.temperature", distill.temperature, "softmax temperature"),
      KDMOS_DOUBLE("distill.beta", distill.beta, "non-target term weight"),
      KDMOS_DOUBLE("distill.gamma", distill.gamma, "distillation weight in the total loss"),
      KDMOS_DOUBLE("distill.weight_floor", distill.weight_floor,
                   "lower bound on frame class weights; <= 0 means 1/#valid cells"),
      KDMOS_DOUBLE("distill.prob_floor", distill.prob_floor, "probability floor inside logs"),
      Entry{"distill.tckd_scope", "moving | all",
            [](RunConfig& c, std::string_view v) {
              if (v == "moving") c.distill.tckd_scope = TckdScope::MovingOnly;
              else if (v == "all") c.distill.tckd_scope = TckdScope::AllClasses;
              else throw ConfigError("distill.tckd_scope: expected moving or all");
            },
            [](const RunConfig& c) {
              return std::string(c.distill.tckd_scope == TckdScope::MovingOnly ? "moving" : "all");
            }},
      KDMOS_INT("scene.n_frames", scene.n_frames, "frames per synthetic sequence"),
      KDMOS_INT("scene.n_moving", scene.n_moving, "moving discs"),
      KDMOS_INT("scene.n_static_movable", scene.n_static_movable, "parked discs"),
      KDMOS_INT("scene.n_static", scene.n_static, "background points"),
      KDMOS_DOUBLE("scene.radius_min", scene.radius_min, "disc radius lower bound (m)"),
      KDMOS_DOUBLE("scene.radius_max", scene.radius_max, "disc radius upper bound (m)"),
      KDMOS_DOUBLE("scene.speed_min", scene.speed_min, "moving disc speed lower bound (m/frame)"),
      KDMOS_DOUBLE("scene.speed_max", scene.speed_max, "moving disc speed upper bound (m/frame)"),
      KDMOS_INT("scene.points_per_disc", scene.points_per_disc, "points per disc per frame"),
      KDMOS_DOUBLE("scene.ego_vx", scene.ego_vx, "ego velocity x (m/frame)"),
      KDMOS_DOUBLE("scene.ego_vy", scene.ego_vy, "ego velocity y (m/frame)"),
      KDMOS_DOUBLE("scene.arena_radius", scene.arena_radius, "outer placement radius (m)"),
      KDMOS_DOUBLE("scene.inner_radius", scene.inner_radius, "inner placement radius (m)"),
      KDMOS_INT("model.width", model_width, "student base width; the teacher uses twice this"),
      KDMOS_DOUBLE("model.offset_factor", offset_factor, "DySample offset scale"),
      KDMOS_DOUBLE("optim.lr", optim.lr, "initial learning rate"),
      KDMOS_DOUBLE("optim.momentum", optim.momentum, "SGD momentum"),
      KDMOS_DOUBLE("optim.weight_decay", optim.weight_decay, "L2 weight decay"),
      KDMOS_DOUBLE("optim.epoch_decay", optim.epoch_decay, "learning-rate factor per epoch"),
      KDMOS_INT("train.epochs", epochs, "training epochs"),
      KDMOS_INT("train.batch_size", batch_size, "frames per optimizer step"),
      KDMOS_DOUBLE("train.holdout_fraction", holdout_fraction,
                   "fraction of sequences held out for evaluation"),
      Entry{"train.wce_weights", "cross-entropy weights for classes 0,1,2,3",
            [](RunConfig& c, std::string_view v) {
              const auto parts = split_list(v);
              if (parts.size() != kNumClasses) {
                throw ConfigError("train.wce_weights: expected 4 comma-separated values");
              }
              for (std::size_t i = 0; i < parts.size(); ++i) {
                c.wce_weights[i] = to_double("train.wce_weights", parts[i]);
              }
            },
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.wce_weights.size(); ++i) {
                if (i) s += ',';
                s += str(c.wce_weights[i]);
              }
              return s;
            }},
      Entry{"train.lovasz_classes", "classes averaged by the Lovasz term",
            [](RunConfig& c, std::string_view v) {
              c.lovasz_classes.clear();
              for (auto p : split_list(v)) {
                c.lovasz_classes.push_back(to_int<ClassId>("train.lovasz_classes", p));
              }
            },
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.lovasz_classes.size(); ++i) {
                if (i) s += ',';
                s += std::to_string(c.lovasz_classes[i]);
              }
              return s;
            }},
      KDMOS_DOUBLE("teacher.kappa", teacher_kappa, "synthetic teacher margin"),
      KDMOS_DOUBLE("teacher.sigma", teacher_sigma, "synthetic teacher noise"),
      Entry{"data.class_map", "class map file; empty uses the built-in MOS map",
            [](RunConfig& c, std::string_view v) { c.class_map = std::string(v); },
            [](const RunConfig& c) { return c.class_map; }},
      Entry{"seed", "master seed",
            [](RunConfig& c, std::string_view v) {
              c.seed = to_int<std::uint64_t>("seed", v);
              c.scene.seed = c.seed;
            },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
  };
  return table;
}

#undef KDMOS_DOUBLE
#undef KDMOS_INT
#undef KDMOS_BOOL

const Entry& find(std::string_view key) {
  for (const auto& e : entries()) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  find(trim(key)).set(*this, trim(value));
}

std::string RunConfig::get(std::string_view key) const { return find(trim(key)).get(*this); }

void RunConfig::validate() const {
  bev.validate();
  distill.validate();
  scene.validate(bev.grid.r_max);
  if (model_width < 1) throw ConfigError("model.width must be >= 1");
  if (!(offset_factor >= 0.0)) throw ConfigError("model.offset_factor must be >= 0");
  if (!(optim.lr > 0.0)) throw ConfigError("optim.lr must be > 0");
  if (!(optim.momentum >= 0.0 && optim.momentum < 1.0)) {
    throw ConfigError("optim.momentum must be in [0, 1)");
  }
  if (!(optim.weight_decay >= 0.0)) throw ConfigError("optim.weight_decay must be >= 0");
  if (!(optim.epoch_decay > 0.0)) throw ConfigError("optim.epoch_decay must be > 0");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("train.holdout_fraction must be in [0, 1)");
  }
  for (double w : wce_weights) {
    if (!(w >= 0.0)) throw ConfigError("train.wce_weights must be >= 0");
  }
  for (ClassId c : lovasz_classes) {
    if (c >= kNumClasses) throw ConfigError("train.lovasz_classes entries must be < 4");
  }
  if (!(teacher_sigma >= 0.0)) throw ConfigError("teacher.sigma must be >= 0");
  if (bev.grid.rows() % 4 != 0 || bev.grid.cols() % 4 != 0) {
    throw ConfigError("grid dimensions must be divisible by 4 for the network");
  }
  if (scene.n_frames < bev.n_frames) {
    throw ConfigError("scene.n_frames must be >= bev.n_frames");
  }
}

nn::ArchSpec RunConfig::student_arch() const {
  nn::ArchSpec a;
  a.kind = nn::ArchKind::Student;
  a.in_channels = bev.input_channels();
  a.base_width = model_width;
  a.offset_factor = offset_factor;
  return a;
}

nn::ArchSpec RunConfig::teacher_arch() const {
  nn::ArchSpec a = student_arch();
  a.kind = nn::ArchKind::Teacher;
  return a;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const auto& e : entries()) out << e.key << " = " << e.get(*this) << '\n';
  return out.str();
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      cfg.set(line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  try {
    return parse(io::read_text(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

const std::vector<RunConfig::KeyDoc>& RunConfig::describe() {
  static const std::vector<KeyDoc> docs = [] {
    std::vector<KeyDoc> d;
    for (const auto& e : entries()) d.push_back({e.key, e.description});
    return d;
  }();
  return docs;
}

}  // namespace kdmos::app
