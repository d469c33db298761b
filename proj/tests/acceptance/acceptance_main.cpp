#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>

#include "beamgrid/error.hpp"
#include "beamgrid/io.hpp"
#include "beamgrid/losses.hpp"
#include "beamgrid/metrics.hpp"
#include "beamgrid/optimal_transport.hpp"
#include "beamgrid/predictor.hpp"
#include "beamgrid/scene.hpp"
#include "cli.hpp"
#include "support/oracles.hpp"

using namespace beamgrid;

namespace {

const BeamDims kDims{8, 4, 4};
const std::vector<int> kReportK{1, 2, 4, 8, 16, 32};

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Scene {
  HeightMap map;
  TxSite tx;
  SceneChannels channels;
  TensorMap tensors;
};

Scene make_scene(int size, std::uint64_t seed) {
  const SceneConfig cfg;
  Scene s;
  s.map = generate_city(size, size, seed);
  s.tx = place_tx(s.map, seed, cfg.tx_mast_m);
  s.channels = trace_paths(s.map, s.tx, cfg);
  s.tensors = tensorize(s.channels, Codebook::dft(kDims.na, kDims.ne, kDims.nr), s.tx.frame);
  return s;
}

Verdict oracle_identity() {
  double worst_time = 0.0;
  bool exact = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const Scene s = make_scene(64, seed);
    const PredictionMap pred = oracle_predictor(s.tensors);
    const EvalReport rep = evaluate(s.tensors, candidates(pred, 32), kReportK, LinkBudget{});
    worst_time = std::max(worst_time, seconds_since(t0));
    for (std::size_t i = 0; i < kReportK.size(); ++i) exact = exact && rep.accuracy[i] == 1.0 && rep.tpr[i] == 1.0;
    exact = exact && rep.samples > 0;
  }
  return {exact && worst_time < 10.0, fmt("all k exact=%s, worst 64x64 runtime %.3f s (< 10 s)",
                                          exact ? "yes" : "no", worst_time)};
}

Verdict conservation() {
  const Codebook cb = Codebook::dft(kDims.na, kDims.ne, kDims.nr);
  Rng rng(1001);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const MultipathChannel ch = oracle::random_channel(rng, 1);
    const auto t = effective_tensor(ch, cb, oracle::random_frame(rng));
    const double c2 = ch.paths[0].magnitude * ch.paths[0].magnitude;
    worst = std::max(worst, oracle::rel_err(t.sum(), c2 * kDims.na * kDims.ne));
  }
  return {worst < 1e-9, fmt("1000 channels, worst relative deviation %.3e (< 1e-9)", worst)};
}

Verdict brute_force() {
  const BeamDims d{2, 2, 2};
  const Codebook cb = Codebook::dft(2, 2, 2);
  Rng rng(1002);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const MultipathChannel ch = oracle::random_channel(rng, static_cast<int>(uniform_int(rng, 2, 6)));
    const ArrayFrame f = oracle::random_frame(rng);
    const auto t = effective_tensor(ch, cb, f);
    const auto brute = oracle::brute_tensor(ch, d, f);
    for (int b = 0; b < d.size(); ++b) {
      const double ref = brute[static_cast<std::size_t>(b)];
      if (ref == 0.0 && t[b] == 0.0) continue;
      worst = std::max(worst, oracle::rel_err(t[b], ref));
    }
  }
  return {worst < 1e-10, fmt("100 channels, worst relative deviation %.3e (< 1e-10)", worst)};
}

Verdict metric_dominance() {
  Rng rng(1003);
  std::vector<int> ks(128);
  std::iota(ks.begin(), ks.end(), 1);
  bool ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    const TensorMap truth = oracle::random_tensor_map(rng, 8, 8, kDims, 0.1);
    std::vector<CandidateSet> preds(truth.pixel_count());
    for (auto& p : preds) {
      std::vector<double> scores(128);
      for (auto& x : scores) x = uniform01(rng);
      p.beams = oracle::sort_desc(scores);
    }
    const EvalReport rep = evaluate(truth, preds, ks, LinkBudget{});
    for (std::size_t i = 0; i < ks.size(); ++i) {
      ok = ok && rep.tpr[i] >= rep.accuracy[i];
      if (i > 0) ok = ok && rep.accuracy[i] >= rep.accuracy[i - 1] && rep.tpr[i] >= rep.tpr[i - 1];
    }
    ok = ok && rep.accuracy.back() == 1.0 && rep.tpr.back() == 1.0;
  }
  return {ok, "50 random outputs, T_k >= Acc_k, nondecreasing, both 1 at k = 128"};
}

Verdict gradient_suite() {
  Rng rng(1004);
  const BeamDistanceMatrix dist(kDims);
  const double eps = kDefaultEpsilonScale * dist.max();
  auto logits = [&](std::size_t n) {
    std::vector<double> z(n);
    for (auto& x : z) x = normal(rng);
    return z;
  };
  auto tensor = [&] {
    std::vector<double> v(128);
    for (auto& x : v) x = std::pow(10.0, uniform(rng, -12.0, -8.0));
    return EffectiveChannelTensor(kDims, v);
  };
  using oracle::Real;
  double dev[5] = {0, 0, 0, 0, 0};
  double loss_dev = 0.0;
  double double_fd = 0.0;
  auto record = [&](int slot, const LossFunction& f, auto&& reference, const std::vector<double>& x) {
    const LossResult r = f(x);
    const oracle::FdResult fd = oracle::fd_check(reference, x, r.grad, r.loss);
    dev[slot] = std::max(dev[slot], fd.max_relative);
    loss_dev = std::max(loss_dev, fd.max_loss_relative);
    double_fd = std::max(double_fd, grad_check(f, x).max_relative);
  };
  for (int i = 0; i < 100; ++i) {
    const BeamIndex t{static_cast<int>(uniform_int(rng, 0, 7)), static_cast<int>(uniform_int(rng, 0, 3)),
                      static_cast<int>(uniform_int(rng, 0, 3))};
    const auto tn = tensor();
    const std::vector<double> power(tn.values().begin(), tn.values().end());
    const auto z = logits(128);
    record(0, [&](std::span<const double> x) { return ce_loss(Logits::joint({x.begin(), x.end()}), t, kDims); },
           [&](const std::vector<Real>& x) { return oracle::ce(x, kDims.flat(t)); }, z);
    const auto soft = cep_target(tn, -30.0);
    record(1, [&](std::span<const double> x) { return cep_loss(Logits::joint({x.begin(), x.end()}), soft); },
           [&](const std::vector<Real>& x) { return oracle::cep(x, power, -30.0L); }, z);
    std::vector<double> g = floored_db(tn.values(), -30.0);
    for (auto& x : g) x += normal(rng, 0.0, 2.0);
    record(2, [&](std::span<const double> x) { return gr_loss(Logits::joint({x.begin(), x.end()}), tn, -30.0); },
           [&](const std::vector<Real>& x) { return oracle::gr(x, power, -30.0L); }, g);
    const std::vector<double> tri{uniform(rng, -1, 8), uniform(rng, -1, 4), uniform(rng, -1, 4)};
    record(3, [&](std::span<const double> x) { return ir_loss(Logits::sep({x[0]}, {x[1]}, {x[2]}), t); },
           [&](const std::vector<Real>& x) { return oracle::ir(x, t); }, tri);
    record(4, [&](std::span<const double> x) {
      return ws_loss(Logits::joint({x.begin(), x.end()}), kDims.flat(t), dist, eps);
    }, [&](const std::vector<Real>& x) { return oracle::ws_point_mass(x, kDims, kDims.flat(t)); }, z);
  }
  const double worst = *std::max_element(std::begin(dev), std::end(dev));
  return {worst < 1e-4 && loss_dev < 1e-12,
          fmt("max relative deviation CE %.1e CEP %.1e GR %.1e IR %.1e WS %.1e (< 1e-4, step 1e-5, extended-precision "
              "differences); library losses match references to %.1e (< 1e-12); double-precision differences %.1e",
              dev[0], dev[1], dev[2], dev[3], dev[4], loss_dev, double_fd)};
}

Verdict ot_oracle() {
  const BeamDistanceMatrix dist(BeamDims{2, 2, 2});
  const std::vector<double> cost(dist.data().begin(), dist.data().end());
  Rng rng(1005);
  std::vector<std::vector<double>> hs(20, std::vector<double>(8));
  for (auto& h : hs) {
    double s = 0.0;
    for (auto& x : h) s += (x = -std::log(1.0 - uniform01(rng)));
    for (auto& x : h) x /= s;
  }
  double worst_rel = 0.0;
  double worst_self = 0.0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    for (std::size_t j = 0; j < hs.size(); ++j) {
      const double entropic = sinkhorn(hs[i], hs[j], cost, 1e-3 * dist.max()).cost;
      const double exact = oracle::exact_ot(hs[i], hs[j], cost);
      if (i == j) {
        worst_self = std::max(worst_self, entropic);
      } else {
        worst_rel = std::max(worst_rel, oracle::rel_err(entropic, exact));
      }
    }
  }
  const bool ok = worst_rel < 0.02 && worst_self < 0.02 * dist.max();
  return {ok, fmt("380 distinct pairs worst relative %.3e (< 2%%), self pairs worst cost %.3e (< 0.02 max D)", worst_rel,
                  worst_self)};
}

Verdict downscale_stat() {
  const LinkBudget budget;
  bool ok = true;
  double min_acc = 1.0, max_acc = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Scene s = make_scene(64, 100 + seed);
    const TensorMap lo = downscale_tensor_map(s.tensors, 4);
    const ConsistencyStats st = downscale_consistency(s.tensors, lo, 1, budget);
    ok = ok && st.tpr >= st.accuracy && st.accuracy > 0.0 && st.accuracy < 1.0;
    min_acc = std::min(min_acc, st.accuracy);
    max_acc = std::max(max_acc, st.accuracy);

    // Block-constant copy of the low-resolution map.
    TensorMap flat(64, 64, kDims);
    for (int r = 0; r < 64; ++r) {
      for (int c = 0; c < 64; ++c) {
        if (!lo.valid(r / 4, c / 4)) continue;
        flat.set(r, c, lo.tensor_copy(r / 4, c / 4));
        flat.set_valid(r, c, true);
      }
    }
    const ConsistencyStats fc = downscale_consistency(flat, downscale_tensor_map(flat, 4), 1, budget);
    ok = ok && fc.accuracy == 1.0 && fc.tpr == 1.0;
  }
  return {ok, fmt("20 scenes, TPR1 >= Acc1, Acc1 in [%.3f, %.3f] inside (0,1), block-constant maps exactly 1", min_acc,
                  max_acc)};
}

Verdict trained_model() {
  const LinkBudget budget;
  const auto t_data = std::chrono::steady_clock::now();
  std::vector<std::string> names;
  std::vector<FeatureMaps> features;
  std::vector<TensorMap> tensors;
  for (int i = 0; i < 20; ++i) {
    const Scene s = make_scene(64, 200 + static_cast<std::uint64_t>(i));
    names.push_back("scene_" + std::to_string(i));
    features.push_back(downscale_features(build_features(s.map, s.tx), 4));
    tensors.push_back(downscale_tensor_map(s.tensors, 4));
  }
  const double data_s = seconds_since(t_data);
  const SceneSplit split = split_scenes(names, 1);
  auto gather = [&](const std::vector<std::string>& part, TrainingSet& set) {
    for (const auto& n : part) {
      const auto i = static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin());
      set.add_scene(features[i], tensors[i], budget);
    }
  };
  TrainingSet train_set{kDims, {}}, val_set{kDims, {}};
  gather(split.train, train_set);
  gather(split.validation, val_set);

  const auto t_train = std::chrono::steady_clock::now();
  const SoftmaxModel initial(LossConfig{}, kDims, static_cast<int>(FeatureMaps::names().size()), 1);
  const TrainResult result = train(initial, train_set, val_set, TrainHyper{});
  const double train_s = seconds_since(t_train);

  std::vector<int> truths;
  std::vector<CandidateSet> preds;
  std::vector<EffectiveChannelTensor> test_tensors;
  for (const auto& n : split.test) {
    const auto i = static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin());
    const auto cands = candidates(predict(result.model, features[i], tensors[i].mask()), 128);
    const Grid<std::uint8_t> excluded = exclusion_mask(tensors[i], budget);
    for (int r = 0; r < tensors[i].rows(); ++r) {
      for (int c = 0; c < tensors[i].cols(); ++c) {
        if (excluded(r, c)) continue;
        test_tensors.push_back(tensors[i].tensor_copy(r, c));
        truths.push_back(optimal_beam(test_tensors.back()).flat);
        preds.push_back(cands[excluded.index(r, c)]);
      }
    }
  }
  const double acc1 = topk_accuracy(truths, preds, 1);
  const double acc8 = topk_accuracy(truths, preds, 8);
  const double tpr8 = throughput_ratio(test_tensors, preds, 8, budget);

  // Geometric baseline on obstacle-free maps.
  double geo_worst = 1.0;
  const Codebook cb = Codebook::dft(kDims.na, kDims.ne, kDims.nr);
  Rng rng(1006);
  for (int i = 0; i < 5; ++i) {
    const HeightMap empty(64, 64);
    TxSite tx;
    tx.pixel = {static_cast<int>(uniform_int(rng, 0, 63)), static_cast<int>(uniform_int(rng, 0, 63))};
    tx.height_m = uniform(rng, 8.0, 30.0);
    tx.frame = {uniform(rng, 0.0, 2.0 * oracle::kPi), oracle::kPi / 4};
    const TensorMap truth = tensorize(trace_paths(empty, tx, SceneConfig{}), cb, tx.frame);
    const EvalReport rep = evaluate(truth, candidates(geometric_predictor(empty, tx, cb), 1), std::vector<int>{1}, budget);
    geo_worst = std::min(geo_worst, rep.accuracy[0]);
  }

  const bool ok = acc1 > 5.0 / 128.0 && tpr8 > acc8 && geo_worst >= 0.9 && train_s < 300.0;
  return {ok, fmt("held-out top-1 acc %.4f (> %.4f), top-8 TPR %.4f > top-8 acc %.4f, geometric empty-map top-1 worst "
                  "%.4f (>= 0.9), training %.1f s on 20 scenes (< 300 s, data %.1f s, %zu train samples)",
                  acc1, 5.0 / 128.0, tpr8, acc8, geo_worst, train_s, data_s, train_set.samples.size())};
}

Verdict phase_freeness() {
  const Codebook cb = Codebook::dft(kDims.na, kDims.ne, kDims.nr);
  Rng rng(1007);
  MultipathChannel ch = oracle::random_channel(rng, 3);
  for (auto& p : ch.paths) p.aoa_azimuth = 0.4;
  const ArrayFrame f = oracle::random_frame(rng);
  const Beam beam = cb.beam(optimal_beam(effective_tensor(ch, cb, f)).flat);
  const double rss = beam_gain(ch, beam, f);
  double mean = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    for (auto& p : ch.paths) p.phase = uniform(rng, 0.0, 2.0 * oracle::kPi);
    mean += instantaneous_gain(ch, beam, f);
  }
  mean /= draws;
  const double rel = oracle::rel_err(mean, rss);
  return {rel < 0.02, fmt("1e5 draws on a 3-path channel, relative deviation %.3e (< 2%%)", rel)};
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "beamgrid");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

Verdict cli_determinism() {
  std::string report[2];
  std::string model[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path d = fs::temp_directory_path() / ("beamgrid_acceptance_" + std::to_string(run));
    fs::remove_all(d);
    for (int i = 0; i < 4; ++i) {
      const fs::path s = d / "scenes" / ("s" + std::to_string(i));
      fs::create_directories(s);
      auto p = [&](const char* f) { return (s / f).string(); };
      if (run_cli({"generate", "--rows", "32", "--cols", "32", "--seed", std::to_string(40 + i), "--out",
                   p("scene.bgrd"), "--tx-out", p("tx.json")}) ||
          run_cli({"trace", "--scene", p("scene.bgrd"), "--tx", p("tx.json"), "--out", p("paths.csv")}) ||
          run_cli({"tensorize", "--paths", p("paths.csv"), "--tx", p("tx.json"), "--out", s.string()})) {
        return {false, "pipeline step failed"};
      }
    }
    write_text(d / "cfg.json", R"({"train": {"epochs": 5}})");
    const fs::path s0 = d / "scenes" / "s0";
    if (run_cli({"train", "--scenes", (d / "scenes").string(), "--model-out", (d / "m.model").string(), "--config",
                 (d / "cfg.json").string()}) ||
        run_cli({"predict", "--method", "model", "--model", (d / "m.model").string(), "--tensors", s0.string(),
                 "--scene", (s0 / "scene.bgrd").string(), "--tx", (s0 / "tx.json").string(), "--out",
                 (d / "p.bgrd").string()}) ||
        run_cli({"evaluate", "--tensors", s0.string(), "--pred", (d / "p.bgrd").string(), "--report",
                 (d / "r.json").string()})) {
      return {false, "pipeline step failed"};
    }
    report[run] = read_text(d / "r.json");
    model[run] = read_text(d / "m.model");
    fs::remove_all(d);
  }
  const bool ok = report[0] == report[1] && model[0] == model[1];
  return {ok, fmt("two seeded runs, reports %s, models %s", report[0] == report[1] ? "identical" : "differ",
                  model[0] == model[1] ? "identical" : "differ")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"oracle identity", oracle_identity},
      {"conservation", conservation},
      {"brute-force equivalence", brute_force},
      {"metric dominance and monotonicity", metric_dominance},
      {"gradient suite", gradient_suite},
      {"OT oracle", ot_oracle},
      {"downscale consistency", downscale_stat},
      {"trained model and geometric baseline", trained_model},
      {"phase-freeness", phase_freeness},
      {"CLI determinism", cli_determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
