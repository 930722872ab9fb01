#include "kdmos/app/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "kdmos/app/dataset.hpp"
#include "kdmos/app/trainer.hpp"
#include "kdmos/app/verify.hpp"
#include "kdmos/binary_io.hpp"
#include "kdmos/error.hpp"
#include "kdmos/eval.hpp"
#include "kdmos/geometry.hpp"
#include "kdmos/nnet/checkpoint.hpp"
#include "kdmos/parallel.hpp"
#include "kdmos/synthbench.hpp"
#include "kdmos/teacher_bridge.hpp"

namespace kdmos::app {

namespace fs = std::filesystem;

int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.category());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::bad_alloc&) {
    err << "error: out of memory\n";
    return kExitNumeric;
  }
}

namespace {

std::vector<LoadedSequence> load_all(const std::vector<fs::path>& dirs, const RunConfig& cfg) {
  if (dirs.empty()) throw ConfigError("no sequence directory given");
  const ClassMap map = load_class_map(cfg.class_map);
  std::vector<LoadedSequence> seqs;
  for (const auto& d : dirs) seqs.push_back(load_sequence(d, map));
  return seqs;
}

std::vector<Sample> samples_of(const std::vector<LoadedSequence>& seqs, const RunConfig& cfg,
                               int threads) {
  std::vector<Sample> all;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    auto s = build_samples(seqs[i], i, cfg.bev, threads);
    std::move(s.begin(), s.end(), std::back_inserter(all));
  }
  return all;
}

nn::Network load_model(const fs::path& ckpt) {
  if (ckpt.empty()) throw ConfigError("no checkpoint given");
  if (!fs::is_regular_file(ckpt)) throw ConfigError(ckpt.string() + ": checkpoint not found");
  return nn::load_checkpoint(ckpt);
}

std::string sequence_name(int k) {
  std::string s = std::to_string(k);
  return s.size() < 2 ? "0" + s : s;
}

}  // namespace

int cmd_synth_gen(const RunConfig& cfg, const SynthGenOptions& opt, std::ostream& out) {
  cfg.scene.validate(cfg.bev.grid.r_max);
  if (opt.sequences < 1) throw ConfigError("--sequences must be >= 1");
  try {
    for (int k = 0; k < opt.sequences; ++k) {
      SceneConfig scene = cfg.scene;
      scene.seed = cfg.scene.seed + static_cast<std::uint64_t>(k);
      const fs::path dir = opt.sequences == 1 ? opt.out_dir : opt.out_dir / sequence_name(k);
      const SyntheticSequence seq = gen_sequence(scene);
      emit_kitti(seq, dir);
      std::size_t moving = 0, points = 0;
      for (const auto& lab : seq.labels) {
        points += lab.size();
        moving += static_cast<std::size_t>(std::count(lab.begin(), lab.end(), ClassId{kMoving}));
      }
      out << "sequence=" << dir.string() << " frames=" << seq.frames.size() << " points=" << points
          << " moving_points=" << moving << '\n';
    }
  } catch (const IoFailure& e) {
    throw ConfigError(e.what());
  }
  return kExitOk;
}

int cmd_project(const RunConfig& cfg, const ProjectOptions& opt, std::ostream& out) {
  cfg.bev.validate();
  const LoadedSequence seq = load_sequence(opt.seq_dir, load_class_map(cfg.class_map));
  const std::vector<Sample> samples = build_samples(seq, 0, cfg.bev, opt.threads);
  fs::create_directories(opt.out_dir);
  for (const Sample& s : samples) {
    const std::string name = frame_name(s.frame);
    io::write_file(opt.out_dir / (name + ".motion"), encode_motion_tensor(s.input));
    io::write_file(opt.out_dir / (name + ".cells"), encode_cell_labels(s.labels));
    if (opt.render) {
      const Tensor3& t = s.input.channels;
      for (int c = 0; c < t.c; ++c) {
        render_pgm(opt.out_dir / "render" / (name + "_c" + std::to_string(c) + ".pgm"), t.channel(c),
                   t.h, t.w);
      }
    }
  }
  out << "frames=" << seq.frames.size() << " projected=" << samples.size() << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const TrainOptions& opt, std::ostream& out) {
  cfg.validate();
  if (opt.out_ckpt.empty()) throw ConfigError("no output checkpoint given");
  const TeacherSpec teacher = TeacherSpec::parse(opt.teacher, cfg);
  const std::vector<LoadedSequence> seqs = load_all(opt.seq_dirs, cfg);
  for (const auto& s : seqs) {
    if (!s.frames.empty() && s.classes.front().empty()) {
      throw FormatError(s.dir.string() + ": training needs labels/");
    }
  }
  auto [train, held] = split_holdout(samples_of(seqs, cfg, opt.threads), seqs.size(), cfg.holdout_fraction);
  if (train.empty()) throw ConfigError("no training frames: sequences shorter than the window");
  const std::vector<LogitGrid> targets = teacher_targets(teacher, seqs, train, cfg.seed);

  out << "teacher=" << teacher.to_string() << " train_frames=" << train.size()
      << " heldout_frames=" << held.size() << '\n';
  std::ostringstream log;
  struct Tee : std::streambuf {
    std::ostream& a;
    std::ostream& b;
    Tee(std::ostream& x, std::ostream& y) : a(x), b(y) {}
    int overflow(int ch) override {
      a.put(static_cast<char>(ch));
      b.put(static_cast<char>(ch));
      return ch;
    }
    int sync() override {
      a.flush();
      return 0;
    }
  } tee(out, log);
  std::ostream both(&tee);
  const TrainResult result = train_student(train, targets, held, cfg, opt.threads, &both);
  nn::save_checkpoint(opt.out_ckpt, result.net);
  if (!opt.log_path.empty()) io::write_text(opt.log_path, log.str());
  out << "checkpoint=" << opt.out_ckpt.string() << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const EvalOptions& opt, std::ostream& out) {
  cfg.bev.validate();
  std::optional<nn::Network> net;
  if (!opt.oracle) net = load_model(opt.ckpt);
  const std::vector<LoadedSequence> seqs = load_all(opt.seq_dirs, cfg);
  const std::vector<Sample> samples = samples_of(seqs, cfg, opt.threads);
  const MetricsReport report = opt.oracle ? evaluate_oracle(samples) : evaluate(*net, samples, opt.threads);
  const std::string text = format_metrics(report);
  out << text;
  if (!opt.metrics_path.empty()) io::write_text(opt.metrics_path, text);
  return kExitOk;
}

int cmd_verify(const std::string& suite, std::ostream& out) {
  bool ok = true;
  for (const SuiteReport& r : run_verify(suite)) {
    out << format_report(r);
    ok = ok && r.passed();
  }
  return ok ? kExitOk : kExitNumeric;
}

namespace {

struct LatencyStats {
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p99_ms = 0.0;
  double fps = 0.0;
};

LatencyStats summarize(std::vector<double> ms) {
  LatencyStats s;
  if (ms.empty()) return s;
  std::sort(ms.begin(), ms.end());
  s.mean_ms = pairwise_sum(ms) / static_cast<double>(ms.size());
  const std::size_t n = ms.size();
  s.median_ms = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  // nearest-rank percentile
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(n)));
  s.p99_ms = ms[std::max<std::size_t>(rank, 1) - 1];
  s.fps = s.mean_ms > 0.0 ? 1000.0 / s.mean_ms : 0.0;
  return s;
}

LoadedSequence synthetic_bench_sequence(std::size_t points, int frames, std::uint64_t seed,
                                        double r_max) {
  LoadedSequence seq;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> radius(1.0, 0.98 * r_max);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> height(-2.0, 1.0);
  for (int f = 0; f < frames; ++f) {
    PointCloud cloud;
    cloud.frame_id = static_cast<std::uint32_t>(f);
    cloud.points.resize(points);
    for (auto& p : cloud.points) {
      const double r = radius(rng);
      const double a = angle(rng);
      p = Point{r * std::cos(a), r * std::sin(a), height(rng), 0.5f};
    }
    seq.frames.push_back(std::move(cloud));
    seq.poses.push_back(Pose::translation(0.3 * f, 0.0, 0.0));
  }
  seq.classes.resize(static_cast<std::size_t>(frames));
  return seq;
}

}  // namespace

int cmd_bench(const RunConfig& cfg, const BenchOptions& opt, std::ostream& out) {
  cfg.bev.validate();
  if (opt.frames < 1) throw ConfigError("--frames must be >= 1");
  const int window = cfg.bev.n_frames;
  const LoadedSequence seq =
      opt.seq_dir.empty()
          ? synthetic_bench_sequence(opt.synthetic_points, window + opt.frames - 1, cfg.seed,
                                     cfg.bev.grid.r_max)
          : load_sequence(opt.seq_dir, load_class_map(cfg.class_map));
  const std::size_t available = sample_count(seq.frames.size(), window);
  if (available == 0) throw ConfigError("sequence shorter than the window");
  const std::size_t runs = std::min<std::size_t>(available, static_cast<std::size_t>(opt.frames));

  nn::Network net;
  if (opt.ckpt.empty()) {
    net = nn::Network(cfg.student_arch());
    net.initialize(cfg.seed);
  } else {
    net = load_model(opt.ckpt);
  }

  using Clock = std::chrono::steady_clock;
  auto ms_since = [](Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  };
  std::vector<double> projection_ms, inference_ms;
  std::size_t points = 0;
  for (std::size_t i = 0; i < runs; ++i) {
    const std::size_t frame = static_cast<std::size_t>(window) - 1 + i;
    points += seq.frames[frame].points.size();
    auto t0 = Clock::now();
    const Sample s = build_sample(seq, frame, cfg.bev, opt.threads);
    projection_ms.push_back(ms_since(t0));
    t0 = Clock::now();
    const Grid<ClassId> preds = nn::predict_classes(nn::student_forward(s.input, net));
    const std::vector<ClassId> point_preds = back_project(preds, s.cells);
    inference_ms.push_back(ms_since(t0));
  }
  std::vector<double> total_ms(runs);
  for (std::size_t i = 0; i < runs; ++i) total_ms[i] = projection_ms[i] + inference_ms[i];

  const LatencyStats proj = summarize(projection_ms);
  const LatencyStats inf = summarize(inference_ms);
  const LatencyStats tot = summarize(total_ms);
  std::ostringstream r;
  r << "frames=" << runs << '\n'
    << "points_per_frame=" << points / runs << '\n'
    << "window=" << window << '\n'
    << "grid=" << cfg.bev.grid.rows() << "x" << cfg.bev.grid.cols() << '\n'
    << "threads=" << opt.threads << '\n';
  auto emit = [&](const char* name, const LatencyStats& s) {
    r << name << "_mean_ms=" << io::format_double(s.mean_ms) << '\n'
      << name << "_median_ms=" << io::format_double(s.median_ms) << '\n'
      << name << "_p99_ms=" << io::format_double(s.p99_ms) << '\n'
      << name << "_fps=" << io::format_double(s.fps) << '\n';
  };
  emit("projection", proj);
  emit("inference", inf);
  emit("total", tot);
  out << r.str();
  if (!opt.out_path.empty()) io::write_text(opt.out_path, r.str());
  return kExitOk;
}

int cmd_export_logits(const RunConfig& cfg, const ExportOptions& opt, std::ostream& out) {
  cfg.bev.validate();
  if (opt.out_dir.empty()) throw ConfigError("no output directory given");
  const nn::Network model = load_model(opt.ckpt);
  const std::vector<LoadedSequence> seqs = load_all(opt.seq_dirs, cfg);
  std::size_t written = 0;
  for (std::size_t k = 0; k < seqs.size(); ++k) {
    const fs::path dir = seqs.size() > 1 ? opt.out_dir / seqs[k].dir.filename() : opt.out_dir;
    const std::vector<Sample> samples = build_samples(seqs[k], k, cfg.bev, opt.threads);
    std::vector<LogitGrid> grids(samples.size());
    const std::size_t workers = std::max<std::size_t>(
        1, std::min<std::size_t>(samples.size(), static_cast<std::size_t>(std::max(1, opt.threads))));
    std::vector<nn::Network> replicas(workers, model);
    parallel_for(workers, static_cast<int>(workers), [&](std::size_t w) {
      for (std::size_t i = samples.size() * w / workers; i < samples.size() * (w + 1) / workers; ++i) {
        grids[i] = nn::student_forward(samples[i].input, replicas[w]);
        grids[i].valid = samples[i].labels.valid;
        for (std::size_t c = 0; c < grids[i].num_cells(); ++c) {
          if (grids[i].valid[c]) continue;
          for (double& v : grids[i].cell_span(c)) v = 0.0;
        }
      }
    });
    for (std::size_t i = 0; i < samples.size(); ++i) {
      write_logits(grids[i], logits_path(dir, samples[i].frame));
      ++written;
    }
  }
  out << "exported=" << written << " dir=" << opt.out_dir.string() << '\n';
  return kExitOk;
}

}  // namespace kdmos::app
