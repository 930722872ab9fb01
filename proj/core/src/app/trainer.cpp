#include "kdmos/app/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "kdmos/binary_io.hpp"
#include "kdmos/error.hpp"
#include "kdmos/nnet/sgd.hpp"
#include "kdmos/parallel.hpp"
#include "kdmos/teacher_bridge.hpp"

namespace kdmos::app {

namespace fs = std::filesystem;

TeacherSpec TeacherSpec::parse(std::string_view text, const RunConfig& cfg) {
  TeacherSpec t;
  t.kappa = cfg.teacher_kappa;
  t.sigma = cfg.teacher_sigma;
  if (text == "none") return t;
  if (text.starts_with("logits:")) {
    t.kind = Kind::Logits;
    t.logits_dir = std::string(text.substr(7));
    if (t.logits_dir.empty()) throw ConfigError("teacher logits: directory missing");
    return t;
  }
  if (text == "synth" || text.starts_with("synth:")) {
    t.kind = Kind::Synth;
    if (text.size() > 5) {
      const std::string_view args = text.substr(6);
      const auto comma = args.find(',');
      if (comma == std::string_view::npos) throw ConfigError("teacher synth: expected synth:KAPPA,SIGMA");
      auto num = [](std::string_view s) {
        double v = 0.0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size()) {
          throw ConfigError("teacher synth: bad number '" + std::string(s) + "'");
        }
        return v;
      };
      t.kappa = num(args.substr(0, comma));
      t.sigma = num(args.substr(comma + 1));
    }
    if (!(t.sigma >= 0.0) || !std::isfinite(t.kappa)) throw ConfigError("teacher synth: bad kappa/sigma");
    return t;
  }
  throw ConfigError("teacher must be none, logits:DIR or synth[:KAPPA,SIGMA], got '" +
                    std::string(text) + "'");
}

std::string TeacherSpec::to_string() const {
  switch (kind) {
    case Kind::None: return "none";
    case Kind::Logits: return "logits:" + logits_dir.string();
    case Kind::Synth: return "synth:" + io::format_double(kappa) + "," + io::format_double(sigma);
  }
  return "none";
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined key
  std::uint64_t z = seed ^ (a * 0x9E3779B97F4A7C15ull) ^ (b * 0xC2B2AE3D27D4EB4Full);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

std::vector<LogitGrid> teacher_targets(const TeacherSpec& teacher,
                                       std::span<const LoadedSequence> sequences,
                                       std::span<const Sample> samples, std::uint64_t seed) {
  std::vector<LogitGrid> out;
  if (teacher.kind == TeacherSpec::Kind::None) return out;
  out.reserve(samples.size());
  for (const Sample& s : samples) {
    if (teacher.kind == TeacherSpec::Kind::Synth) {
      out.push_back(synth_teacher(s.labels, teacher.kappa, teacher.sigma,
                                  mix_seed(seed, s.sequence, s.frame)));
      continue;
    }
    fs::path dir = teacher.logits_dir;
    if (sequences.size() > 1) dir /= sequences[s.sequence].dir.filename();
    LogitGrid g = read_logits(logits_path(dir, s.frame));
    if (g.rows() != s.labels.labels.rows() || g.cols() != s.labels.labels.cols()) {
      throw ShapeMismatch(logits_path(dir, s.frame).string() + ": teacher grid " +
                          std::to_string(g.rows()) + "x" + std::to_string(g.cols()) +
                          " does not match the BEV grid");
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::string format_epoch(const EpochStats& s) {
  std::ostringstream o;
  o << "epoch=" << s.epoch << " lr=" << io::format_double(s.lr)
    << " loss=" << io::format_double(s.loss) << " wce=" << io::format_double(s.wce)
    << " lovasz=" << io::format_double(s.lovasz) << " wdcd=" << io::format_double(s.wdcd)
    << " heldout_moving_iou=" << io::format_double(s.heldout_moving_iou)
    << " heldout_moving_absent=" << (s.heldout_absent ? 1 : 0);
  return o.str();
}

namespace {

struct FrameOutcome {
  double loss = 0.0;
  double wce = 0.0;
  double lovasz = 0.0;
  double wdcd = 0.0;
  std::vector<double> grad;  // all parameters, flattened in params() order
};

void copy_values(const nn::Network& from, nn::Network& to) {
  auto src = from.params();
  auto dst = to.params();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
}

}  // namespace

TrainResult train_student(std::span<const Sample> train, std::span<const LogitGrid> teacher,
                          std::span<const Sample> heldout, const RunConfig& cfg, int threads,
                          std::ostream* log) {
  cfg.validate();
  if (!teacher.empty() && teacher.size() != train.size()) {
    throw LengthMismatch("teacher grids (" + std::to_string(teacher.size()) +
                         ") do not match training samples (" + std::to_string(train.size()) + ")");
  }
  DistillConfig distill = cfg.distill;
  const bool distilling = !teacher.empty() && distill.gamma != 0.0;
  if (teacher.empty()) distill.gamma = 0.0;

  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].labels.valid_count() > 0) usable.push_back(i);
  }

  TrainResult result;
  result.net = nn::Network(cfg.student_arch());
  result.net.initialize(cfg.seed);
  nn::Network& net = result.net;
  nn::Sgd sgd(cfg.optim);

  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t n_workers =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(1, threads)), batch));
  std::vector<nn::Network> replicas(n_workers, net);
  std::vector<FrameOutcome> outcomes(batch);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x5348554646ull, 0));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = usable;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> ep_loss, ep_wce, ep_lovasz, ep_wdcd;
    const double lr = sgd.lr();

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      for (auto& r : replicas) copy_values(net, r);
      const std::size_t workers = std::min(n_workers, count);
      parallel_for(workers, static_cast<int>(workers), [&](std::size_t w) {
        nn::Network& rep = replicas[w];
        for (std::size_t k = count * w / workers; k < count * (w + 1) / workers; ++k) {
          const std::size_t idx = order[start + k];
          const Sample& s = train[idx];
          rep.zero_grad();
          LogitGrid logits = nn::student_forward(s.input, rep);
          logits.valid = s.labels.valid;
          const LogitGrid* t = distilling ? &teacher[idx] : nullptr;
          const TotalLoss tl =
              total_loss(logits, t, s.labels, distill, cfg.wce_weights, cfg.lovasz_classes);
          if (!std::isfinite(tl.total.value)) {
            throw NonFiniteLoss("non-finite loss at sequence " + std::to_string(s.sequence) +
                                " frame " + frame_name(s.frame) + " (epoch " +
                                std::to_string(epoch) + ")");
          }
          rep.backward(nn::to_tensor(tl.total.grad));
          FrameOutcome& o = outcomes[k];
          o.loss = tl.total.value;
          o.wce = tl.wce;
          o.lovasz = tl.lovasz;
          o.wdcd = tl.wdcd;
          o.grad.clear();
          for (const nn::Param* p : std::as_const(rep).params()) {
            o.grad.insert(o.grad.end(), p->grad.begin(), p->grad.end());
          }
        }
      });

      // mean gradient, summed in frame order
      net.zero_grad();
      const double inv = 1.0 / static_cast<double>(count);
      for (std::size_t k = 0; k < count; ++k) {
        const FrameOutcome& o = outcomes[k];
        std::size_t off = 0;
        for (nn::Param* p : net.params()) {
          for (std::size_t j = 0; j < p->size(); ++j) p->grad[j] += o.grad[off + j];
          off += p->size();
        }
        ep_loss.push_back(o.loss);
        ep_wce.push_back(o.wce);
        ep_lovasz.push_back(o.lovasz);
        ep_wdcd.push_back(o.wdcd);
      }
      for (nn::Param* p : net.params()) {
        for (double& g : p->grad) g *= inv;
      }
      const auto params = net.params();
      sgd.step(params);
    }
    sgd.end_epoch();

    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    auto mean = [](const std::vector<double>& v) {
      return v.empty() ? 0.0 : pairwise_sum(v) / static_cast<double>(v.size());
    };
    st.loss = mean(ep_loss);
    st.wce = mean(ep_wce);
    st.lovasz = mean(ep_lovasz);
    st.wdcd = mean(ep_wdcd);
    if (!heldout.empty()) {
      const MetricsReport m = evaluate(net, heldout, threads);
      st.heldout_moving_iou = m.points.iou(kMoving);
      st.heldout_absent = !m.points.iou_defined(kMoving);
    }
    if (log) *log << format_epoch(st) << '\n' << std::flush;
    result.epochs.push_back(st);
  }
  return result;
}

namespace {

std::vector<ClassId> masked_truth(const CellLabelGrid& labels) {
  std::vector<ClassId> truth(labels.labels.size(), kUnlabeled);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (labels.valid[i]) truth[i] = labels.labels[i];
  }
  return truth;
}

void score_sample(const Sample& s, const Grid<ClassId>& cell_preds,
                  std::span<const ClassId> point_preds, MetricsReport& m) {
  m.cells.accumulate(cell_preds.data(), masked_truth(s.labels));
  if (!s.point_classes.empty()) m.points.accumulate(point_preds, s.point_classes);
}

}  // namespace

MetricsReport evaluate(const nn::Network& net, std::span<const Sample> samples, int threads) {
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(samples.size(), static_cast<std::size_t>(std::max(1, threads))));
  std::vector<MetricsReport> per_sample(samples.size());
  std::vector<nn::Network> replicas(workers, net);
  parallel_for(workers, static_cast<int>(workers), [&](std::size_t w) {
    for (std::size_t i = samples.size() * w / workers; i < samples.size() * (w + 1) / workers; ++i) {
      const Sample& s = samples[i];
      const Grid<ClassId> preds = nn::predict_classes(nn::student_forward(s.input, replicas[w]));
      const std::vector<ClassId> point_preds = back_project(preds, s.cells);
      score_sample(s, preds, point_preds, per_sample[i]);
    }
  });
  MetricsReport total;
  for (const auto& m : per_sample) {
    total.cells += m.cells;
    total.points += m.points;
  }
  return total;
}

MetricsReport evaluate_oracle(std::span<const Sample> samples) {
  MetricsReport total;
  for (const Sample& s : samples) score_sample(s, s.labels.labels, s.point_classes, total);
  return total;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_holdout(std::vector<Sample> samples,
                                                                  std::size_t n_sequences,
                                                                  double fraction) {
  std::vector<Sample> train, held;
  if (fraction <= 0.0 || samples.empty()) return {std::move(samples), {}};
  if (n_sequences > 1) {
    std::size_t n_held =
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n_sequences)));
    n_held = std::min(n_held, n_sequences - 1);
    const std::size_t first_held = n_sequences - n_held;
    for (auto& s : samples) (s.sequence >= first_held ? held : train).push_back(std::move(s));
  } else {
    std::size_t n_held =
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(samples.size())));
    n_held = std::min(n_held, samples.size() - 1);
    const std::size_t first_held = samples.size() - n_held;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      (i >= first_held ? held : train).push_back(std::move(samples[i]));
    }
  }
  return {std::move(train), std::move(held)};
}

}  // namespace kdmos::app
