// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any fails.
//
// usage: acceptance <kdmos binary> <benchmark profile>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>

#include "kdmos/app/dataset.hpp"
#include "kdmos/app/run_config.hpp"
#include "kdmos/app/trainer.hpp"
#include "kdmos/app/verify.hpp"
#include "kdmos/binary_io.hpp"
#include "kdmos/bev.hpp"
#include "kdmos/eval.hpp"
#include "kdmos/geometry.hpp"
#include "kdmos/kitti_io.hpp"
#include "kdmos/nnet/checkpoint.hpp"
#include "kdmos/synthbench.hpp"
#include "kdmos/teacher_bridge.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace kdmos;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

int hardware_threads() {
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

// ---- AC1, AC2, AC4: verification suites ---------------------------------

Outcome suite_check(const std::function<app::SuiteReport()>& run, double max_seconds) {
  const auto t0 = Clock::now();
  const app::SuiteReport r = run();
  const double s = seconds_since(t0);
  return {r.passed() && s < max_seconds,
          "instances=" + std::to_string(r.instances) + " max_error=" + num(r.max_error) +
              " threshold=" + num(r.threshold) + " runtime_s=" + num(s)};
}

// ---- AC3: projection oracle ------------------------------------------------

Outcome projection_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> npts(0, 100);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    BevGrid g;
    g.mode = GridMode::Polar;
    g.n_radial = 1 + trial % 9;
    g.n_angular = 1 + (trial * 7) % 37;
    g.r_max = 5.0 + trial % 60;
    g.z_min = -4.0 + (trial % 3);
    g.z_max = 2.0 - (trial % 2);
    std::uniform_real_distribution<double> xy(-1.2 * g.r_max, 1.2 * g.r_max);
    std::uniform_real_distribution<double> z(g.z_min - 1.0, g.z_max + 1.0);
    PointCloud pc;
    const int n = npts(rng);
    for (int i = 0; i < n; ++i) pc.points.push_back({xy(rng), xy(rng), z(rng), 0.f});

    const CellIndexMap map = project_to_cells(pc, g);
    for (std::size_t i = 0; i < pc.size(); ++i) {
      mismatches += map.cell_of(i) != oracle::brute_force_cell(pc.points[i], g);
    }
    std::vector<int> occupied;
    const auto expected = oracle::brute_force_heights(pc, g, &occupied);
    const HeightImage h = height_image(map, pc, g);
    for (std::size_t c = 0; c < expected.size(); ++c) {
      mismatches += h.values[c] != expected[c] || h.occupancy[c] != occupied[c];
    }
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && s < 10.0,
          "clouds=200 mismatches=" + std::to_string(mismatches) + " runtime_s=" + num(s)};
}

// ---- AC5: alignment consistency -----------------------------------------

struct Centroid {
  double x = 0, y = 0, z = 0;
};

Centroid centroid_of(const PointCloud& pc, const std::vector<std::int32_t>& owner, std::int32_t disc) {
  Centroid c;
  int n = 0;
  for (std::size_t i = 0; i < pc.size(); ++i) {
    if (owner[i] != disc) continue;
    c.x += pc.points[i].x;
    c.y += pc.points[i].y;
    c.z += pc.points[i].z;
    ++n;
  }
  c.x /= n;
  c.y /= n;
  c.z /= n;
  return c;
}

Outcome alignment_consistency() {
  double static_err = 0.0, moving_err = 0.0;
  int scenes = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SceneConfig cfg;
    cfg.seed = seed;
    cfg.n_frames = 8;
    cfg.n_static = 500;
    cfg.ego_vx = 0.4 + 0.3 * static_cast<double>(seed);
    cfg.ego_vy = -0.2 * static_cast<double>(seed);
    const SyntheticSequence seq = gen_sequence(cfg);
    const int cur = cfg.n_frames - 1;
    const AlignedSequence al = align_to_current(seq.frames, seq.poses, static_cast<std::size_t>(cur));
    for (std::int32_t d = -1; d < static_cast<std::int32_t>(seq.discs.size()); ++d) {
      const bool moving = d >= 0 && seq.discs[d].cls == kMoving;
      const Centroid now = centroid_of(al.frames[0].cloud, seq.point_disc[cur], d);
      for (std::size_t k = 1; k < al.frames.size(); ++k) {
        const Centroid past = centroid_of(al.frames[k].cloud, seq.point_disc[cur - k], d);
        const double dist = std::sqrt((now.x - past.x) * (now.x - past.x) +
                                      (now.y - past.y) * (now.y - past.y) +
                                      (now.z - past.z) * (now.z - past.z));
        if (moving) {
          const double speed = std::hypot(seq.discs[d].vx, seq.discs[d].vy);
          moving_err = std::max(moving_err, std::abs(dist - speed * static_cast<double>(k)));
        } else {
          static_err = std::max(static_err, dist);
        }
      }
    }
    ++scenes;
  }
  return {static_err < 1e-6 && moving_err < 1e-6,
          "scenes=" + std::to_string(scenes) + " static_centroid_err_m=" + num(static_err) +
              " moving_displacement_err_m=" + num(moving_err)};
}

// ---- AC6, AC7: distillation benchmark -----------------------------------

struct SeedScores {
  std::uint64_t seed = 0;
  double base = 0, wdcd = 0, all = 0;
};

double heldout_iou(std::span<const app::Sample> train, std::span<const LogitGrid> teacher,
                   std::span<const app::Sample> held, const app::RunConfig& cfg, int threads) {
  const app::TrainResult r = app::train_student(train, teacher, held, cfg, threads);
  return app::evaluate(r.net, held, threads).points.iou(kMoving);
}

std::vector<SeedScores> run_benchmark(const fs::path& profile, double& seconds) {
  constexpr int kSequences = 6;
  const auto t0 = Clock::now();
  const int threads = hardware_threads();
  std::vector<SeedScores> out;
  for (std::uint64_t s = 0; s < 5; ++s) {
    app::RunConfig cfg = app::RunConfig::load(profile);
    cfg.set("seed", std::to_string(s * 100));
    test::TempDir dir;
    std::vector<app::LoadedSequence> seqs;
    std::vector<app::Sample> samples;
    for (int k = 0; k < kSequences; ++k) {
      SceneConfig scene = cfg.scene;
      scene.seed = cfg.scene.seed + static_cast<std::uint64_t>(k);
      const fs::path seq_dir = dir.path() / std::to_string(k);
      emit_kitti(gen_sequence(scene), seq_dir);
      seqs.push_back(app::load_sequence(seq_dir, ClassMap::semantic_kitti_mos()));
      auto built = app::build_samples(seqs.back(), static_cast<std::size_t>(k), cfg.bev, threads);
      std::move(built.begin(), built.end(), std::back_inserter(samples));
    }
    auto [train, held] = app::split_holdout(std::move(samples), seqs.size(), cfg.holdout_fraction);
    app::TeacherSpec teacher;
    teacher.kind = app::TeacherSpec::Kind::Synth;
    teacher.kappa = 10.0;
    teacher.sigma = 1.0;
    const auto targets = app::teacher_targets(teacher, seqs, train, cfg.seed);

    SeedScores sc;
    sc.seed = cfg.seed;
    sc.base = heldout_iou(train, {}, held, cfg, threads);
    sc.wdcd = heldout_iou(train, targets, held, cfg, threads);
    app::RunConfig all_cfg = cfg;
    all_cfg.set("distill.tckd_scope", "all");
    sc.all = heldout_iou(train, targets, held, all_cfg, threads);
    std::cerr << "benchmark seed=" << sc.seed << " base=" << num(sc.base) << " wdcd=" << num(sc.wdcd)
              << " all=" << num(sc.all) << " elapsed_s=" << num(seconds_since(t0)) << '\n';
    out.push_back(sc);
  }
  seconds = seconds_since(t0);
  return out;
}

// ---- AC8: format round trips --------------------------------------------

using Tree = std::map<std::string, std::vector<std::byte>>;

Tree read_tree(const fs::path& root) {
  Tree t;
  if (!fs::exists(root)) return t;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) t[fs::relative(e.path(), root).generic_string()] = io::read_file(e.path());
  }
  return t;
}

Outcome format_round_trips() {
  std::vector<std::string> failed;

  nn::ArchSpec arch;
  arch.base_width = 4;
  nn::Network net(arch);
  net.initialize(8);
  const auto ck = nn::encode_checkpoint(net);
  const bool ck_ok = nn::encode_checkpoint(nn::decode_checkpoint(ck)) == ck;
  if (!ck_ok) failed.push_back("checkpoint");

  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 5.0);
  LogitGrid grid(7, 9);
  for (std::size_t c = 0; c < grid.num_cells(); ++c) {
    grid.valid[c] = rng() % 4 != 0;
    if (grid.valid[c]) grid.set_cell(c, {double(float(n(rng))), double(float(n(rng))), double(float(n(rng))), double(float(n(rng)))});
  }
  const auto lg = encode_logits(grid);
  const LogitGrid grid_back = decode_logits(lg);
  if (!(grid_back == grid && encode_logits(grid_back) == lg)) failed.push_back("logits");

  // Synthetic sequence: parse every file and write it again.
  test::TempDir a, b;
  SceneConfig scene;
  scene.seed = 12;
  scene.n_frames = 5;
  scene.ego_vx = 0.7;
  scene.ego_vy = 0.2;
  emit_kitti(gen_sequence(scene), a.path());
  const SequenceLayout la{a.path()}, lb{b.path()};
  const Calibration calib = read_calibration(la.calib());
  write_calibration(lb.calib(), calib);
  write_poses(lb.poses(), read_poses(la.poses(), calib), calib);
  for (std::size_t f = 0; f < la.frame_count(); ++f) {
    const PointCloud pc = read_scan(la.scan(f));
    write_scan(lb.scan(f), pc);
    fs::create_directories(lb.label(f).parent_path());
    io::write_file(lb.label(f), encode_labels(read_labels(la.label(f), pc.size())));
  }
  const Tree ta = read_tree(a.path());
  if (ta.empty() || ta != read_tree(b.path())) failed.push_back("kitti_sequence");

  std::string detail = "checkpoint_bytes=" + std::to_string(ck.size()) +
                       " logits_bytes=" + std::to_string(lg.size()) +
                       " sequence_files=" + std::to_string(ta.size());
  for (const auto& f : failed) detail += " mismatch=" + f;
  return {failed.empty(), detail};
}

// ---- AC9, AC10: command-line checks ---------------------------------------

std::string quote(const std::string& s) { return "'" + s + "'"; }

int run_cli(const std::string& kdmos, const std::string& args, const fs::path& stdout_file) {
  const std::string cmd = quote(kdmos) + " " + args + " > " + quote(stdout_file.string()) + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::map<std::string, std::string> key_values(const fs::path& p) {
  return parse_key_values(io::read_text(p));
}

Outcome bench_throughput(const std::string& kdmos) {
  test::TempDir dir;
  const fs::path report = dir.path() / "bench.txt";
  const int rc = run_cli(kdmos, "-j 1 bench --points 130000 --frames 10 -o " + quote(report.string()),
                         dir.path() / "stdout.txt");
  if (rc != 0) return {false, "bench exit code " + std::to_string(rc)};
  const auto kv = key_values(report);
  const double proj_fps = std::stod(kv.at("projection_fps"));
  const double total_fps = std::stod(kv.at("total_fps"));
  return {proj_fps >= 5.0,
          "points_per_frame=" + kv.at("points_per_frame") + " projection_ms=" +
              num(std::stod(kv.at("projection_mean_ms"))) + " projection_fps=" + num(proj_fps) +
              " total_fps=" + num(total_fps) + " reference_full_system_fps=40"};
}

// Bench report keys that do not depend on wall-clock time.
std::map<std::string, std::string> bench_shape(const fs::path& p) {
  auto kv = key_values(p);
  std::erase_if(kv, [](const auto& e) { return e.first.find("_ms") != std::string::npos ||
                                               e.first.find("_fps") != std::string::npos ||
                                               e.first == "threads"; });
  return kv;
}

Outcome determinism(const std::string& kdmos) {
  test::TempDir root;
  const std::string cfg =
      "--set grid.n_angular=64 --set scene.n_frames=10 --set scene.n_static=800 "
      "--set model.width=4 --set train.epochs=3 --set seed=21";
  std::vector<std::string> mismatched;
  int failures = 0;

  // One full pass of every subcommand under `tag` with `threads` workers.
  auto pass = [&](const std::string& tag, int threads) {
    const fs::path d = root.path() / tag;
    fs::create_directories(d);
    const std::string g = cfg + " -j " + std::to_string(threads) + " ";
    auto q = [&](const std::string& rel) { return quote((d / rel).string()); };
    const std::vector<std::pair<std::string, std::string>> steps = {
        {"synth-gen", g + "synth-gen --sequences 2 " + q("data")},
        {"project", g + "project --render " + q("data/00") + " " + q("proj")},
        {"train", g + "train " + q("data/00") + " " + q("data/01") + " --teacher synth -o " +
                      q("model.ckpt") + " --log " + q("train.log")},
        {"eval", g + "eval " + q("data/00") + " " + q("data/01") + " --ckpt " + q("model.ckpt") +
                     " -o " + q("metrics.txt")},
        {"export-logits", g + "export-logits --ckpt " + q("model.ckpt") + " " + q("data/00") + " " +
                              q("data/01") + " -o " + q("logits")},
        {"train-logits", g + "train " + q("data/00") + " " + q("data/01") + " --teacher logits:" +
                             q("logits") + " -o " + q("student2.ckpt")},
        {"verify", g + "verify all"},
        {"config", g + "config --describe"},
        {"bench", g + "bench --points 2000 --frames 2 --ckpt " + q("model.ckpt") + " -o " + q("bench.txt")},
    };
    for (const auto& [name, args] : steps) {
      const int rc = run_cli(kdmos, args, d / ("stdout_" + name + ".txt"));
      if (rc != 0) {
        ++failures;
        std::cerr << "determinism: " << tag << " " << name << " exit " << rc << '\n';
      }
    }
  };
  pass("a", 1);
  pass("b", 1);
  pass("c", 4);

  Tree a = read_tree(root.path() / "a"), b = read_tree(root.path() / "b");
  const auto bench_a = bench_shape(root.path() / "a" / "bench.txt");
  const auto bench_b = bench_shape(root.path() / "b" / "bench.txt");
  if (bench_a != bench_b) mismatched.push_back("bench.txt");
  for (Tree* t : {&a, &b}) {
    t->erase("bench.txt");
    t->erase("stdout_bench.txt");
  }
  // command output echoes its own paths, which differ between the passes
  auto normalized = [&](const std::string& tag, const std::vector<std::byte>& bytes) {
    std::string text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    const std::string prefix = (root.path() / tag).string();
    for (auto pos = text.find(prefix); pos != std::string::npos; pos = text.find(prefix, pos)) {
      text.replace(pos, prefix.size(), "<dir>");
    }
    return text;
  };
  for (const auto& [path, bytes] : a) {
    auto it = b.find(path);
    if (it == b.end()) {
      mismatched.push_back(path);
    } else if (path.starts_with("stdout_") ? normalized("a", bytes) != normalized("b", it->second)
                                           : it->second != bytes) {
      mismatched.push_back(path);
    }
  }
  if (a.size() != b.size()) mismatched.push_back("file_count");

  const bool metrics_same =
      io::read_text(root.path() / "a" / "metrics.txt") == io::read_text(root.path() / "c" / "metrics.txt");
  const bool ckpt_same = io::read_file(root.path() / "a" / "model.ckpt") ==
                         io::read_file(root.path() / "c" / "model.ckpt");

  std::string detail = "subcommands=9 files_compared=" + std::to_string(a.size()) +
                       " exit_failures=" + std::to_string(failures) +
                       " threads4_metrics_identical=" + (metrics_same ? "1" : "0") +
                       " threads4_checkpoint_identical=" + (ckpt_same ? "1" : "0");
  for (std::size_t i = 0; i < mismatched.size() && i < 5; ++i) detail += " mismatch=" + mismatched[i];
  return {failures == 0 && mismatched.empty() && metrics_same, detail};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: acceptance <kdmos binary> <benchmark profile>\n";
    return 2;
  }
  const std::string kdmos = argv[1];
  const fs::path profile = argv[2];
  int failed = 0;
  auto report = [&](int id, const std::string& name, const Outcome& o) {
    std::cout << "AC" << id << " " << (o.pass ? "PASS" : "FAIL") << " " << name << " " << o.detail
              << std::endl;
    failed += !o.pass;
  };
  auto guarded = [&](int id, const std::string& name, const std::function<Outcome()>& f) {
    try {
      report(id, name, f());
    } catch (const std::exception& e) {
      report(id, name, {false, std::string("exception: ") + e.what()});
    }
  };

  guarded(1, "decomposition_identity", [] { return suite_check([] { return app::verify_identity(); }, 1.0); });
  guarded(2, "gradient_oracle", [] { return suite_check([] { return app::verify_gradcheck(); }, 60.0); });
  guarded(3, "projection_oracle", projection_oracle);
  guarded(4, "dysample_degeneracy", [] { return suite_check([] { return app::verify_dysample(); }, 60.0); });
  guarded(5, "alignment_consistency", alignment_consistency);

  std::vector<SeedScores> scores;
  double bench_seconds = 0.0;
  std::string bench_error;
  try {
    scores = run_benchmark(profile, bench_seconds);
  } catch (const std::exception& e) {
    bench_error = e.what();
  }
  auto mean = [&](double SeedScores::*m) {
    double s = 0;
    for (const auto& x : scores) s += x.*m;
    return scores.empty() ? 0.0 : s / static_cast<double>(scores.size());
  };
  {
    Outcome o;
    if (!bench_error.empty()) {
      o = {false, "exception: " + bench_error};
    } else {
      const double gain = 100.0 * (mean(&SeedScores::wdcd) - mean(&SeedScores::base));
      double worst_pair = 1e9;
      std::string per_seed;
      for (const auto& s : scores) {
        worst_pair = std::min(worst_pair, 100.0 * (s.wdcd - s.base));
        per_seed += " seed" + std::to_string(s.seed) + "=" + num(100 * s.base) + "/" + num(100 * s.wdcd);
      }
      o.pass = scores.size() == 5 && gain >= 2.0 && worst_pair >= -0.5 && bench_seconds < 900.0;
      o.detail = "mean_base_iou=" + num(100 * mean(&SeedScores::base)) +
                 " mean_wdcd_iou=" + num(100 * mean(&SeedScores::wdcd)) + " gain_points=" + num(gain) +
                 " worst_paired_points=" + num(worst_pair) + " runtime_s=" + num(bench_seconds) + per_seed;
    }
    report(6, "wdcd_beats_baseline", o);
  }
  {
    Outcome o;
    if (!bench_error.empty()) {
      o = {false, "exception: " + bench_error};
    } else {
      const double diff = 100.0 * (mean(&SeedScores::wdcd) - mean(&SeedScores::all));
      o.pass = scores.size() == 5 && diff >= -0.5;
      o.detail = "mean_wdcd_iou=" + num(100 * mean(&SeedScores::wdcd)) +
                 " mean_all_classes_iou=" + num(100 * mean(&SeedScores::all)) + " wdcd_minus_all_points=" + num(diff);
    }
    report(7, "all_class_tckd_not_better", o);
  }

  guarded(8, "format_round_trips", format_round_trips);
  guarded(9, "bench_throughput", [&] { return bench_throughput(kdmos); });
  guarded(10, "cli_determinism", [&] { return determinism(kdmos); });

  std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << std::endl;
  return failed == 0 ? 0 : 1;
}
