#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "beamgrid/error.hpp"
#include "beamgrid/io.hpp"
#include "beamgrid/metrics.hpp"
#include "beamgrid/predictor.hpp"
#include "beamgrid/scene.hpp"

namespace beamgrid::cli {

namespace {

using json = nlohmann::json;

RunConfig config_or_default(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return load_config(path);
}

fs::path config_base(const std::string& path) {
  return path.empty() ? fs::path{} : fs::path(path).parent_path();
}

HeightMap load_scene(const std::string& path, const RunConfig& cfg) {
  return height_map_from_grid(read_grid(path), cfg.resolution_m);
}

TxSite load_tx(const std::string& path, const HeightMap& map) {
  TxSite tx = tx_from_json(read_text(path));
  if (!map.building.contains(tx.pixel)) {
    fail(ErrorKind::kInvalidArgument, "Tx pixel (" + std::to_string(tx.pixel.row) + ", " +
                                          std::to_string(tx.pixel.col) + ") lies outside the " +
                                          std::to_string(map.rows()) + "x" + std::to_string(map.cols()) + " scene");
  }
  return tx;
}

std::string shape(int rows, int cols) { return std::to_string(rows) + "x" + std::to_string(cols); }

int block_factor(int hi_rows, int hi_cols, int lo_rows, int lo_cols) {
  if (lo_rows < 1 || hi_rows % lo_rows != 0 || hi_cols % lo_cols != 0 || hi_rows / lo_rows != hi_cols / lo_cols) {
    fail(ErrorKind::kInvalidArgument,
         "scene " + shape(hi_rows, hi_cols) + " is not a block multiple of tensors " + shape(lo_rows, lo_cols));
  }
  return hi_rows / lo_rows;
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct SceneData {
  std::string name;
  FeatureMaps features;
  TensorMap tensors;
};

SceneData load_scene_dir(const fs::path& dir, const RunConfig& cfg) {
  SceneData s;
  s.name = dir.filename().string();
  const HeightMap map = load_scene((dir / "scene.bgrd").string(), cfg);
  const TxSite tx = load_tx((dir / "tx.json").string(), map);
  s.tensors = read_tensor_dir(dir, cfg.dims);
  const int factor = block_factor(map.rows(), map.cols(), s.tensors.rows(), s.tensors.cols());
  s.features = downscale_features(build_features(map, tx), factor);
  return s;
}

void cmd_generate(int rows, int cols, std::uint64_t seed, const std::string& out_path, const std::string& tx_out,
                  const std::string& config_path, std::ostream& out) {
  const RunConfig cfg = config_or_default(config_path);
  CityStyle style;
  style.building_fraction = cfg.building_fraction;
  HeightMap map = generate_city(rows, cols, seed, style);
  map.resolution_m = cfg.resolution_m;
  // Trace from the stored precision so every later stage sees the same scene.
  const GridFile grid = height_map_to_grid(map);
  map = height_map_from_grid(grid, cfg.resolution_m);
  const TxSite tx = place_tx(map, seed ^ 0x9E3779B97F4A7C15ull, cfg.scene.tx_mast_m);
  write_grid(out_path, grid);
  const std::string tx_json = tx_to_json(tx);
  if (!tx_out.empty()) write_text(tx_out, tx_json + "\n");
  out << tx_json << "\n";
}

void cmd_trace(const std::string& scene_path, const std::string& tx_path, const std::string& config_path,
               const std::string& out_path, std::ostream& out) {
  const RunConfig cfg = config_or_default(config_path);
  const HeightMap map = load_scene(scene_path, cfg);
  const TxSite tx = load_tx(tx_path, map);
  const SceneChannels channels = trace_paths(map, tx, cfg.scene, cfg.rx_height_m);
  write_text(out_path, encode_paths(channels));
  std::size_t street = 0;
  std::size_t paths = 0;
  for (int r = 0; r < map.rows(); ++r) {
    for (int c = 0; c < map.cols(); ++c) {
      if (map.is_building(r, c)) continue;
      ++street;
      paths += channels.at(r, c).paths.size();
    }
  }
  const double mean = street == 0 ? 0.0 : static_cast<double>(paths) / static_cast<double>(street);
  out << "pixels " << street << "  paths " << paths << "  mean_paths " << fixed(mean, 4) << "\n";
}

void cmd_tensorize(const std::string& paths_path, const std::string& tx_path, const std::string& config_path,
                   const std::string& out_dir, int downscale, std::ostream& out) {
  const RunConfig cfg = config_or_default(config_path);
  const SceneChannels channels = decode_paths(read_text(paths_path), paths_path);
  const TxSite tx = tx_from_json(read_text(tx_path));
  if (channels.rows % downscale != 0 || channels.cols % downscale != 0) {
    fail(ErrorKind::kInvalidArgument, "grid " + shape(channels.rows, channels.cols) +
                                          " is not divisible by --downscale " + std::to_string(downscale));
  }
  const Codebook codebook = make_codebook(cfg, config_base(config_path));
  TensorMap tensors = tensorize(channels, codebook, tx.frame);
  if (downscale > 1) tensors = downscale_tensor_map(tensors, downscale);
  const TensorFiles files = tensor_map_to_files(tensors, cfg.budget);
  write_tensor_dir(out_dir, files);
  const auto scored = static_cast<std::size_t>(std::ranges::count(files.mask.u8, std::uint8_t{1}));
  out << "pixels " << tensors.pixel_count() << "  valid " << tensors.valid_count() << "  scored " << scored
      << "  channels " << files.tensor.channels << "\n";
}

void cmd_predict(const std::string& method, const std::string& tensors_dir, const std::string& scene_path,
                 const std::string& tx_path, const std::string& model_path, const std::string& config_path,
                 int downscale, const std::string& out_path, std::ostream& out) {
  const RunConfig cfg = config_or_default(config_path);
  std::optional<TensorMap> tensors;
  if (!tensors_dir.empty()) tensors = read_tensor_dir(tensors_dir, cfg.dims);
  PredictionMap pred;
  if (method == "oracle") {
    if (!tensors) fail(ErrorKind::kInvalidArgument, "the oracle needs --tensors");
    // Linear power ranks exactly like its dB logits and survives f32 storage
    // without creating ties.
    pred = PredictionMap(tensors->rows(), tensors->cols(), tensors->dims(), PredictionForm::kJoint);
    for (int r = 0; r < tensors->rows(); ++r) {
      for (int c = 0; c < tensors->cols(); ++c) {
        if (tensors->valid(r, c)) pred.set(r, c, tensors->tensor(r, c));
      }
    }
  } else {
    if (scene_path.empty() || tx_path.empty()) fail(ErrorKind::kInvalidArgument, method + " needs --scene and --tx");
    const HeightMap map = load_scene(scene_path, cfg);
    const TxSite tx = load_tx(tx_path, map);
    const int factor = tensors ? block_factor(map.rows(), map.cols(), tensors->rows(), tensors->cols()) : downscale;
    if (method == "geometric") {
      pred = geometric_predictor(map, tx, make_codebook(cfg, config_base(config_path)), cfg.rx_height_m, factor);
    } else {
      if (model_path.empty()) fail(ErrorKind::kInvalidArgument, "model prediction needs --model");
      const SoftmaxModel model = read_model(model_path);
      if (!(model.dims() == cfg.dims)) fail(ErrorKind::kInvalidArgument, "model codebook differs from the config");
      const FeatureMaps features = downscale_features(build_features(map, tx), factor);
      const Grid<std::uint8_t> mask =
          tensors ? tensors->mask() : Grid<std::uint8_t>(features.rows(), features.cols(), 1);
      pred = predict(model, features, mask);
    }
  }
  write_grid(out_path, prediction_to_grid(pred));
  out << "predictions " << std::ranges::count(pred.mask().data(), std::uint8_t{1}) << "  width " << pred.width()
      << "\n";
}

void cmd_evaluate(const std::string& tensors_dir, const std::string& pred_path, const std::string& config_path,
                  const std::string& report_path, const std::string& maps_dir, const std::string& scene_path,
                  const std::string& tx_path, const std::string& paths_path, std::ostream& out) {
  const RunConfig cfg = config_or_default(config_path);
  const TensorMap truth = read_tensor_dir(tensors_dir, cfg.dims);
  const PredictionMap pred = prediction_from_grid(read_grid(pred_path), cfg.dims);
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    fail(ErrorKind::kInvalidArgument, "prediction map " + shape(pred.rows(), pred.cols()) +
                                          " does not match tensor map " + shape(truth.rows(), truth.cols()));
  }
  const int kmax = cfg.k_list.back();
  const std::vector<CandidateSet> cands = candidates(pred, kmax);
  const EvalReport report = evaluate(truth, cands, cfg.k_list, cfg.budget);
  const fs::path rp(report_path);
  write_text(rp, report_to_json(report));
  const std::string table = report_table(report);
  fs::path txt = rp;
  txt.replace_extension(".txt");
  write_text(txt, table);
  out << table;

  const fs::path dir = maps_dir.empty() ? rp.parent_path() : fs::path(maps_dir);
  if (!dir.empty()) fs::create_directories(dir);
  const std::string stem = rp.stem().string();
  for (int k : cfg.k_list) {
    write_pgm(dir / (stem + "_hit_k" + std::to_string(k) + ".pgm"),
              hit_image(hit_map(truth, cands, k, cfg.budget)));
  }
  if (!scene_path.empty() && !tx_path.empty() && !paths_path.empty()) {
    const HeightMap map = load_scene(scene_path, cfg);
    const TxSite tx = load_tx(tx_path, map);
    const SceneChannels channels = decode_paths(read_text(paths_path), paths_path);
    if (channels.rows != map.rows() || channels.cols != map.cols()) {
      fail(ErrorKind::kInvalidArgument, "path grid " + shape(channels.rows, channels.cols) +
                                            " does not match scene " + shape(map.rows(), map.cols()));
    }
    write_pgm(dir / (stem + "_los.pgm"), los_image(los_class_map(map, tx, channels)));
  }
}

void cmd_train(const std::string& scenes_dir, const std::string& config_path, const std::string& model_out,
               const std::string& history_out, std::ostream& out) {
  const RunConfig cfg = config_or_default(config_path);
  if (!fs::is_directory(scenes_dir)) fail(ErrorKind::kIo, "not a directory: " + scenes_dir);
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(scenes_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "scene.bgrd")) names.push_back(entry.path().filename().string());
  }
  const SceneSplit split = split_scenes(names, cfg.train.seed);
  auto gather = [&](const std::vector<std::string>& part, TrainingSet& set, std::vector<SceneData>* keep) {
    for (const std::string& name : part) {
      SceneData s = load_scene_dir(fs::path(scenes_dir) / name, cfg);
      set.add_scene(s.features, s.tensors, cfg.budget);
      if (keep) keep->push_back(std::move(s));
    }
  };
  TrainingSet train_set;
  TrainingSet val_set;
  TrainingSet test_set;
  std::vector<SceneData> test_scenes;
  gather(split.train, train_set, nullptr);
  gather(split.validation, val_set, nullptr);
  gather(split.test, test_set, &test_scenes);

  const SoftmaxModel initial(cfg.loss, cfg.dims, static_cast<int>(FeatureMaps::names().size()), cfg.train.seed);
  const TrainResult result = train(initial, train_set, val_set, cfg.train);
  write_model(model_out, result.model);
  write_text(history_out.empty() ? model_out + ".history.csv" : history_out, history_to_csv(result.history));

  // Held-out scores use the model as stored.
  const SoftmaxModel stored = round_to_f32(result.model);
  std::vector<EffectiveChannelTensor> tensors;
  std::vector<CandidateSet> preds;
  std::vector<int> truths;
  for (const SceneData& s : test_scenes) {
    const PredictionMap pred = predict(stored, s.features, s.tensors.mask());
    const std::vector<CandidateSet> cands = candidates(pred, cfg.k_list.back());
    const Grid<std::uint8_t> excluded = exclusion_mask(s.tensors, cfg.budget);
    for (int r = 0; r < s.tensors.rows(); ++r) {
      for (int c = 0; c < s.tensors.cols(); ++c) {
        if (excluded(r, c)) continue;
        tensors.push_back(s.tensors.tensor_copy(r, c));
        truths.push_back(optimal_beam(tensors.back()).flat);
        preds.push_back(cands[s.tensors.mask().index(r, c)]);
      }
    }
  }
  json summary;
  summary["train"] = split.train;
  summary["validation"] = split.validation;
  summary["test"] = split.test;
  summary["samples"] = {{"train", train_set.samples.size()},
                        {"validation", val_set.samples.size()},
                        {"test", test_set.samples.size()}};
  summary["epochs"] = result.history.size();
  summary["best_epoch"] = result.best_epoch;
  if (!truths.empty()) {
    json acc = json::array();
    json tpr = json::array();
    for (int k : cfg.k_list) {
      acc.push_back(topk_accuracy(truths, preds, k));
      tpr.push_back(throughput_ratio(tensors, preds, k, cfg.budget));
    }
    summary["test_metrics"] = {{"k", cfg.k_list}, {"accuracy", acc}, {"tpr", tpr}};
  }
  out << summary.dump(2) << "\n";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIterationLimit:
    case ErrorKind::kUndefinedResult:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Beam-training simulation and evaluation toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string config_path;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "RunConfig JSON")->check(CLI::ExistingFile);
  };

  int rows = 0;
  int cols = 0;
  std::uint64_t seed = 1;
  std::string out_path;
  std::string tx_out;
  auto* gen = app.add_subcommand("generate", "Generate a synthetic city height map and a Tx site");
  gen->add_option("--rows", rows, "grid rows (>= 16)")->required()->check(CLI::Range(16, 1 << 14));
  gen->add_option("--cols", cols, "grid columns (>= 16)")->required()->check(CLI::Range(16, 1 << 14));
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--out", out_path, "output height map grid file")->required();
  gen->add_option("--tx-out", tx_out, "also write the Tx site JSON here");
  add_config(gen);

  std::string scene_path;
  std::string tx_path;
  auto* trace = app.add_subcommand("trace", "Trace direct and first-order reflected paths");
  trace->add_option("--scene", scene_path, "height map grid file")->required()->check(CLI::ExistingFile);
  trace->add_option("--tx", tx_path, "Tx site JSON")->required()->check(CLI::ExistingFile);
  trace->add_option("--out", out_path, "output path CSV")->required();
  add_config(trace);

  std::string paths_path;
  int downscale = 4;
  auto* tens = app.add_subcommand("tensorize", "Build effective channel tensors from a path file");
  tens->add_option("--paths", paths_path, "path CSV")->required()->check(CLI::ExistingFile);
  tens->add_option("--tx", tx_path, "Tx site JSON (array orientation)")->required()->check(CLI::ExistingFile);
  tens->add_option("--out", out_path, "output directory")->required();
  tens->add_option("--downscale", downscale, "block-mean factor")->capture_default_str()->check(CLI::Range(1, 1024));
  add_config(tens);

  std::string method = "oracle";
  std::string tensors_dir;
  std::string model_path;
  auto* pred = app.add_subcommand("predict", "Write a prediction map (oracle, geometric or model)");
  pred->add_option("--method", method, "predictor")
      ->capture_default_str()
      ->check(CLI::IsMember({"oracle", "geometric", "model"}));
  pred->add_option("--tensors", tensors_dir, "tensor directory (shape and mask)")->check(CLI::ExistingDirectory);
  pred->add_option("--scene", scene_path, "height map grid file")->check(CLI::ExistingFile);
  pred->add_option("--tx", tx_path, "Tx site JSON")->check(CLI::ExistingFile);
  pred->add_option("--model", model_path, "model file")->check(CLI::ExistingFile);
  pred->add_option("--downscale", downscale, "block factor when --tensors is absent")
      ->check(CLI::Range(1, 1024));
  pred->add_option("--out", out_path, "output prediction grid file")->required();
  add_config(pred);

  std::string report_path;
  std::string maps_dir;
  auto* eval = app.add_subcommand("evaluate", "Score predictions with top-k accuracy and throughput ratio");
  eval->add_option("--tensors", tensors_dir, "tensor directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--pred", model_path, "prediction grid file")->required()->check(CLI::ExistingFile);
  eval->add_option("--report", report_path, "output report JSON")->required();
  eval->add_option("--maps", maps_dir, "directory for hit and LoS maps (default: next to the report)");
  eval->add_option("--scene", scene_path, "height map, for the LoS map")->check(CLI::ExistingFile);
  eval->add_option("--tx", tx_path, "Tx site JSON, for the LoS map")->check(CLI::ExistingFile);
  eval->add_option("--paths", paths_path, "path CSV, for the LoS map")->check(CLI::ExistingFile);
  add_config(eval);

  std::string scenes_dir;
  std::string history_out;
  auto* trn = app.add_subcommand("train", "Train the per-pixel softmax model on a directory of scenes");
  trn->add_option("--scenes", scenes_dir, "directory of scene subdirectories")->required();
  trn->add_option("--model-out", out_path, "output model file")->required();
  trn->add_option("--history", history_out, "loss history CSV (default: <model-out>.history.csv)");
  add_config(trn);

  std::string format = "table";
  auto* rep = app.add_subcommand("report", "Print a report JSON as a table");
  rep->add_option("--report", report_path, "report JSON")->required()->check(CLI::ExistingFile);
  rep->add_option("--format", format, "table or json")->capture_default_str()->check(CLI::IsMember({"table", "json"}));

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*gen) {
      cmd_generate(rows, cols, seed, out_path, tx_out, config_path, out);
    } else if (*trace) {
      cmd_trace(scene_path, tx_path, config_path, out_path, out);
    } else if (*tens) {
      cmd_tensorize(paths_path, tx_path, config_path, out_path, downscale, out);
    } else if (*pred) {
      cmd_predict(method, tensors_dir, scene_path, tx_path, model_path, config_path, downscale, out_path, out);
    } else if (*eval) {
      cmd_evaluate(tensors_dir, model_path, config_path, report_path, maps_dir, scene_path, tx_path, paths_path, out);
    } else if (*trn) {
      cmd_train(scenes_dir, config_path, out_path, history_out, out);
    } else if (*rep) {
      const std::string text = read_text(report_path);
      const EvalReport report = report_from_json(text);
      if (format == "json") {
        out << report_to_json(report);
      } else {
        out << report_table(report);
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: io: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace beamgrid::cli
