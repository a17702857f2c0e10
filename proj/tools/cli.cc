// Copyright 2026 The asfield Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.h"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "asf/dataset.h"
#include "asf/error.h"
#include "asf/manifest.h"
#include "asf/oracle.h"
#include "asf/pointcloud.h"
#include "asf/propagate.h"
#include "asf/regressor.h"
#include "asf/render.h"
#include "asf/shfield.h"
#include "json.hpp"

namespace asf {
namespace fs = std::filesystem;
using nlohmann::json;

int ExitCodeFor(const std::exception& e) {
  if (dynamic_cast<const InvalidArgument*>(&e) != nullptr) return kExitInvalidArgument;
  if (dynamic_cast<const std::invalid_argument*>(&e) != nullptr) return kExitInvalidArgument;
  if (dynamic_cast<const json::exception*>(&e) != nullptr) return kExitInvalidArgument;
  if (dynamic_cast<const IoError*>(&e) != nullptr) return kExitIoError;
  if (dynamic_cast<const fs::filesystem_error*>(&e) != nullptr) return kExitIoError;
  return kExitNumericalFailure;
}

namespace {

struct Globals {
  uint64_t seed = 1;
  bool seed_set = false;
  int threads = 1;
  bool threads_set = false;
  std::string log_level = "info";
};

fs::path PrepareOut(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw IoError("cannot create output directory " + out);
  return fs::path(out);
}

std::ofstream OpenOut(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw IoError("cannot write " + p.string());
  f.precision(10);
  return f;
}

Vec3 ParseVec3(const std::vector<double>& v, const char* what) {
  if (v.size() != 3) throw InvalidArgument(std::string(what) + " needs three components");
  return Vec3(v[0], v[1], v[2]);
}

// ---- gen-dataset -----------------------------------------------------------

struct GenDatasetOpts {
  int count = 100;
  std::vector<double> freqs = {125, 250, 500, 1000};
  double composites = 0.0;
  std::string out;
};

void RunGenDataset(const GenDatasetOpts& o, const Globals& g) {
  if (o.count < 1) throw InvalidArgument("--count must be at least 1");
  DatasetSpec spec;
  spec.count = o.count;
  spec.frequencies = o.freqs;
  spec.composite_fraction = o.composites;
  spec.seed = g.seed;
  const fs::path dir = PrepareOut(o.out);
  const Dataset ds = GenerateDataset(spec);
  WriteJsonl(ds, (dir / "dataset.jsonl").string());
  int composite = 0;
  for (const auto& r : ds.records) composite += r.composite ? 1 : 0;
  spdlog::info("wrote {} records ({} composite) to {}", ds.records.size(), composite,
               (dir / "dataset.jsonl").string());
  WriteManifest(dir.string(), "gen-dataset",
                {{"count", o.count}, {"freqs", o.freqs}, {"composites", o.composites}}, g.seed);
}

// ---- fit-sh ----------------------------------------------------------------

struct FitShOpts {
  std::string dataset;
  int max_order = 8;
  int spheres = 50;
  std::vector<double> freqs = {125, 250, 500, 1000};
  std::string out;
};

void RunFitSh(const FitShOpts& o, const Globals& g) {
  if (o.max_order < 0) throw InvalidArgument("--max-order must be non-negative");
  const fs::path dir = PrepareOut(o.out);
  // frequency -> fields to fit
  std::map<double, std::vector<SphericalField>> fields;
  if (!o.dataset.empty()) {
    const Dataset ds = ReadJsonl(o.dataset);
    auto grid = std::make_shared<const FieldGrid>(Icosphere(ds.grid_level));
    for (const auto& rec : ds.records) {
      for (const auto& [f, label] : rec.labels) {
        if (label.pressures.size() != grid->size()) {
          throw InvalidArgument("dataset labels carry no grid pressures");
        }
        fields[f].push_back({grid, label.pressures, f, ds.r_ref});
      }
    }
  } else {
    if (o.spheres < 1) throw InvalidArgument("--spheres must be at least 1");
    auto grid = std::make_shared<const FieldGrid>(Icosphere(kDefaultGridLevel));
    Rng rng(g.seed);
    std::uniform_real_distribution<double> radius(0.5, 1.0);
    std::vector<double> radii(o.spheres);
    for (double& r : radii) r = radius(rng);
    for (double f : o.freqs) {
      for (double r : radii) {
        ScatterConfig cfg;
        cfg.frequency = f;
        cfg.scatterers = {SphereScatterer{r, Vec3::Zero()}};
        fields[f].push_back(ComputeAsf(cfg, grid).field);
      }
    }
  }
  std::ofstream csv = OpenOut(dir / "fit_error.csv");
  csv << "frequency,order,relative_error,nre,count\n";
  for (const auto& [f, list] : fields) {
    std::vector<double> rel(o.max_order + 1, 0.0);
    std::vector<double> nre(o.max_order + 1, 0.0);
    for (const auto& field : list) {
      for (const auto& pt : FitErrorCurve(field, o.max_order)) {
        rel[pt.order] += pt.relative_error;
        nre[pt.order] += pt.nre;
      }
    }
    const double n = static_cast<double>(list.size());
    for (int k = 0; k <= o.max_order; ++k) {
      csv << f << ',' << k << ',' << rel[k] / n << ',' << nre[k] / n << ',' << list.size() << '\n';
    }
    spdlog::info("{} Hz: order-3 relative error {:.4f} over {} fields", f,
                 o.max_order >= 3 ? rel[3] / n : rel.back() / n, list.size());
  }
  WriteManifest(dir.string(), "fit-sh",
                {{"dataset", o.dataset},
                 {"max_order", o.max_order},
                 {"spheres", o.spheres},
                 {"freqs", o.freqs}},
                g.seed);
}

// ---- train -----------------------------------------------------------------

struct TrainOpts {
  std::string dataset;
  std::vector<double> freqs;
  int epochs = 30;
  int batch_size = 128;
  double lr = 1e-3;
  double train_ratio = 0.9;
  bool safeguard = false;
  std::string out;
};

void RunTrain(const TrainOpts& o, const Globals& g) {
  const Dataset ds = ReadJsonl(o.dataset);
  const fs::path dir = PrepareOut(o.out);
  const std::vector<double> freqs = o.freqs.empty() ? ds.Frequencies() : o.freqs;
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.learning_rate = o.lr;
  cfg.train_ratio = o.train_ratio;
  cfg.safeguard = o.safeguard;
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  cfg.Validate();
  const Split split = SplitDataset(ds.records.size(), g.seed, o.train_ratio);
  spdlog::info("{} train / {} test records, {} parameters per model", split.train.size(),
               split.test.size(), ParameterCount(cfg.network));
  json summary = json::object();
  for (double f : freqs) {
    const TrainResult r = Train(ds, split, f, cfg, [f](const EpochLog& e) {
      spdlog::info("{} Hz epoch {} train {:.3e} test {:.3e} lr {:.2e}", f, e.epoch, e.train_loss,
                   e.test_loss, e.lr);
    });
    const fs::path model = dir / ModelFileName(f);
    SaveModel(r.params, model.string());
    std::ofstream metrics = OpenOut(dir / ("metrics_" + model.stem().string().substr(4) + ".csv"));
    WriteMetricsCsv(r.history, metrics);
    summary[std::to_string(static_cast<int>(f))] = {
        {"best_epoch", r.best_epoch},
        {"final_train_loss", r.history.back().train_loss},
        {"final_test_loss", r.history.back().test_loss}};
  }
  OpenOut(dir / "train_summary.json") << summary.dump(2) << '\n';
  WriteManifest(dir.string(), "train",
                {{"dataset", o.dataset},
                 {"freqs", freqs},
                 {"epochs", o.epochs},
                 {"batch_size", o.batch_size},
                 {"lr", o.lr},
                 {"train_ratio", o.train_ratio},
                 {"safeguard", o.safeguard},
                 {"threads", g.threads}},
                g.seed);
}

// ---- predict ---------------------------------------------------------------

struct PredictOpts {
  std::string model;
  std::string obj;
  std::string dataset;
  int record = 0;
  double freq = 125;
  std::vector<double> incoming = {-1, 0, 0};
  std::string out;
};

void RunPredict(const PredictOpts& o, const Globals& g) {
  if (o.obj.empty() == o.dataset.empty()) {
    throw InvalidArgument("predict needs exactly one of --obj or --dataset");
  }
  PointCloud cloud;
  if (!o.obj.empty()) {
    Rng rng(g.seed);
    const PointCloud dense = SampleSurface(LoadObj(o.obj), 4096, rng);
    cloud = FarthestPointSample(dense, kCloudSize, rng);
  } else {
    const Dataset ds = ReadJsonl(o.dataset);
    if (o.record < 0 || o.record >= static_cast<int>(ds.records.size())) {
      throw InvalidArgument("--record out of range");
    }
    cloud = ds.records[o.record].cloud;
  }
  const ModelSet models = LoadModelDir(o.model);
  const Vec3 in = ParseVec3(o.incoming, "--incoming");
  const SHCoefficients sh = PredictAsf(models, cloud, in, o.freq);
  const fs::path dir = PrepareOut(o.out);
  json j = ToJson(sh);
  j["incoming"] = o.incoming;
  OpenOut(dir / "prediction.json") << j.dump(2) << '\n';
  WriteManifest(dir.string(), "predict",
                {{"model", o.model},
                 {"obj", o.obj},
                 {"dataset", o.dataset},
                 {"record", o.record},
                 {"freq", o.freq},
                 {"incoming", o.incoming}},
                g.seed);
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateOpts {
  std::string dataset;
  std::string model;
  double train_ratio = 0.9;
  bool all = false;
  double bin_width = 0.01;
  std::string out;
};

void RunEvaluate(const EvaluateOpts& o, const Globals& g) {
  Dataset ds = ReadJsonl(o.dataset);
  const ModelSet models = LoadModelDir(o.model);
  if (models.empty()) throw InvalidArgument("no models in " + o.model);
  // Bands without a model are left out of the statistics.
  for (auto& rec : ds.records) {
    std::erase_if(rec.labels, [&](const auto& kv) { return !models.contains(kv.first); });
  }
  std::vector<int> indices;
  if (o.all) {
    for (int i = 0; i < static_cast<int>(ds.records.size()); ++i) indices.push_back(i);
  } else {
    indices = SplitDataset(ds.records.size(), g.seed, o.train_ratio).test;
  }
  if (indices.empty()) throw InvalidArgument("evaluation split is empty");
  const NreStats st = EvaluateTestset(models, ds, indices);
  const fs::path dir = PrepareOut(o.out);
  std::ofstream table = OpenOut(dir / "nre.csv");
  table << "scope,mean_nre,count\n";
  for (const auto& [f, m] : st.mean_by_frequency) {
    table << f << ',' << m << ',' << st.values_by_frequency.at(f).size() << '\n';
    spdlog::info("{} Hz mean NRE {:.4f}", f, m);
  }
  table << "overall," << st.overall_mean << ',' << st.count << '\n';
  table << "p50," << st.p50 << ",\np75," << st.p75 << ",\np95," << st.p95 << ",\n";
  spdlog::info("overall mean NRE {:.4f} (p50 {:.4f}, p75 {:.4f}, p95 {:.4f})", st.overall_mean,
               st.p50, st.p75, st.p95);
  std::ofstream hist = OpenOut(dir / "nre_histogram.csv");
  WriteNreHistogramCsv(st, o.bin_width, hist);
  WriteManifest(dir.string(), "evaluate",
                {{"dataset", o.dataset},
                 {"model", o.model},
                 {"train_ratio", o.train_ratio},
                 {"all", o.all},
                 {"bin_width", o.bin_width}},
                g.seed);
}

// ---- simulate --------------------------------------------------------------

struct SimulateOpts {
  std::string scene;
  int sample_rate = kDefaultSampleRate;
  bool ir_csv = false;
  std::string out;
};

std::unique_ptr<AsfSource> MakeAsfSource(const Scene& scene) {
  switch (scene.sim.asf_mode) {
    case AsfMode::kNetwork:
      if (scene.sim.model_dir.empty()) {
        throw InvalidArgument("sim.asf is \"network\" but sim.model_dir is not set");
      }
      return std::make_unique<NetworkAsfSource>(LoadModelDir(scene.sim.model_dir));
    case AsfMode::kOracle:
      return std::make_unique<OracleSphereAsfSource>();
    case AsfMode::kNone:
      return nullptr;
  }
  return nullptr;
}

void RunSimulate(const SimulateOpts& o, const Globals& g) {
  Scene scene = LoadScene(o.scene);
  if (g.seed_set) scene.sim.seed = g.seed;
  if (g.threads_set) scene.sim.threads = g.threads;
  scene.Validate();
  const auto asf = MakeAsfSource(scene);
  const fs::path dir = PrepareOut(o.out);
  std::ofstream timing = OpenOut(dir / "timings.csv");
  timing << "frame,time,seconds,scatter_events,fallbacks,asf_cache_size\n";
  char name[64];
  Simulate(scene, asf.get(), [&](const FrameResult& r) {
    std::snprintf(name, sizeof(name), "frame_%04d", r.frame);
    const std::string stem = name;
    std::ofstream h = OpenOut(dir / (stem + "_histogram.csv"));
    WriteHistogramCsv(r.histograms, h);
    const ImpulseResponse ir = Synthesize(Envelopes(r.histograms), o.sample_rate,
                                          scene.sim.seed + static_cast<uint64_t>(r.frame));
    WriteWav((dir / (stem + "_ir.wav")).string(), ir.samples, ir.sample_rate);
    if (o.ir_csv) {
      std::ofstream c = OpenOut(dir / (stem + "_ir.csv"));
      WriteIrCsv(ir, c);
    }
    timing << r.frame << ',' << r.time << ',' << r.seconds << ',' << r.scatter_events << ','
           << r.fallbacks << ',' << r.asf_cache_size << '\n';
    timing.flush();
    spdlog::info("frame {} t={:.3f}s {:.3f}s wall, {} scatter events, {} fallbacks", r.frame,
                 r.time, r.seconds, r.scatter_events, r.fallbacks);
  });
  std::ifstream raw(o.scene);
  WriteManifest(dir.string(), "simulate",
                {{"scene", o.scene},
                 {"scene_json", json::parse(raw)},
                 {"sample_rate", o.sample_rate},
                 {"threads", scene.sim.threads}},
                scene.sim.seed);
}

// ---- render ----------------------------------------------------------------

struct RenderOpts {
  std::string ir;
  std::string dry;
  std::string out;
  bool pcm16 = false;
};

void RunRender(const RenderOpts& o, const Globals& g) {
  const Audio ir_audio = ReadWav(o.ir);
  const Audio dry = ReadWav(o.dry);
  ImpulseResponse ir;
  ir.samples = ir_audio.samples;
  ir.sample_rate = ir_audio.sample_rate;
  const ConvolveResult r = Convolve(ir, dry);
  const fs::path dir = PrepareOut(o.out);
  WriteWav((dir / "wet.wav").string(), r.audio.samples, r.audio.sample_rate,
           o.pcm16 ? WavFormat::kPcm16 : WavFormat::kFloat32);
  spdlog::info("wrote {} samples, gain {:.4g}", r.audio.samples.size(), r.gain);
  WriteManifest(dir.string(), "render",
                {{"ir", o.ir}, {"dry", o.dry}, {"pcm16", o.pcm16}, {"gain", r.gain}}, g.seed);
}

}  // namespace

int RunCli(int argc, const char* const* argv) {
  CLI::App app{"Acoustic scattering fields: dataset, training and propagation tools"};
  app.set_version_flag("--version", std::string(kVersion));
  app.set_config("--config", "", "TOML/INI file with option values; flags win");
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Global seed")->each([&](const std::string&) {
    g.seed_set = true;
  });
  app.add_option("--threads", g.threads, "Worker threads")
      ->envname("ASFIELD_THREADS")
      ->check(CLI::PositiveNumber)
      ->each([&](const std::string&) { g.threads_set = true; });
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off");

  GenDatasetOpts gen;
  auto* c_gen = app.add_subcommand("gen-dataset", "Generate an oracle-labelled dataset");
  c_gen->add_option("--count", gen.count, "Base record count");
  c_gen->add_option("--freqs", gen.freqs, "Frequencies in Hz")->delimiter(',');
  c_gen->add_option("--composites", gen.composites, "Fraction of two-sphere records")
      ->check(CLI::Range(0.0, 1.0));
  c_gen->add_option("--out", gen.out, "Output directory")->required();

  FitShOpts fit;
  auto* c_fit = app.add_subcommand("fit-sh", "SH order study on oracle fields");
  c_fit->add_option("--dataset", fit.dataset, "Dataset JSON-lines (default: oracle spheres)");
  c_fit->add_option("--max-order", fit.max_order, "Highest SH order");
  c_fit->add_option("--spheres", fit.spheres, "Oracle spheres per frequency");
  c_fit->add_option("--freqs", fit.freqs, "Frequencies in Hz")->delimiter(',');
  c_fit->add_option("--out", fit.out, "Output directory")->required();

  TrainOpts tr;
  auto* c_tr = app.add_subcommand("train", "Train one regressor per band");
  c_tr->add_option("--dataset", tr.dataset, "Dataset JSON-lines")->required();
  c_tr->add_option("--freqs", tr.freqs, "Bands to train (default: all)")->delimiter(',');
  c_tr->add_option("--epochs", tr.epochs, "Epochs");
  c_tr->add_option("--batch-size", tr.batch_size, "Batch size");
  c_tr->add_option("--lr", tr.lr, "Initial learning rate");
  c_tr->add_option("--train-ratio", tr.train_ratio, "Train fraction");
  c_tr->add_flag("--safeguard", tr.safeguard, "Halve lr when the train loss rises");
  c_tr->add_option("--out", tr.out, "Model directory")->required();

  PredictOpts pr;
  auto* c_pr = app.add_subcommand("predict", "Predict SH coefficients for one object");
  c_pr->add_option("--model", pr.model, "Model directory")->required();
  c_pr->add_option("--obj", pr.obj, "Object mesh (OBJ)");
  c_pr->add_option("--dataset", pr.dataset, "Dataset JSON-lines");
  c_pr->add_option("--record", pr.record, "Record index in --dataset");
  c_pr->add_option("--freq", pr.freq, "Band in Hz");
  c_pr->add_option("--incoming", pr.incoming, "Propagation direction x,y,z")
      ->delimiter(',')
      ->expected(3);
  c_pr->add_option("--out", pr.out, "Output directory")->required();

  EvaluateOpts ev;
  auto* c_ev = app.add_subcommand("evaluate", "NRE of trained models on a dataset split");
  c_ev->add_option("--dataset", ev.dataset, "Dataset JSON-lines")->required();
  c_ev->add_option("--model", ev.model, "Model directory")->required();
  c_ev->add_option("--train-ratio", ev.train_ratio, "Train fraction of the split");
  c_ev->add_flag("--all", ev.all, "Evaluate every record instead of the test split");
  c_ev->add_option("--bin-width", ev.bin_width, "Histogram bin width");
  c_ev->add_option("--out", ev.out, "Output directory")->required();

  SimulateOpts si;
  auto* c_si = app.add_subcommand("simulate", "Trace a scene and synthesize per-frame IRs");
  c_si->add_option("--scene", si.scene, "Scene JSON")->required();
  c_si->add_option("--sample-rate", si.sample_rate, "IR sample rate");
  c_si->add_flag("--ir-csv", si.ir_csv, "Also write IRs as CSV");
  c_si->add_option("--out", si.out, "Output directory")->required();

  RenderOpts re;
  auto* c_re = app.add_subcommand("render", "Convolve a dry signal with an IR");
  c_re->add_option("--ir", re.ir, "IR WAV")->required();
  c_re->add_option("--dry", re.dry, "Dry WAV")->required();
  c_re->add_flag("--pcm16", re.pcm16, "Write 16-bit PCM instead of float");
  c_re->add_option("--out", re.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalidArgument;
  }

  const auto level = spdlog::level::from_str(g.log_level);
  if (level == spdlog::level::off && g.log_level != "off") {
    std::fprintf(stderr, "error: unknown --log-level %s\n", g.log_level.c_str());
    return kExitInvalidArgument;
  }
  spdlog::set_level(level);

  try {
    const auto start = std::chrono::steady_clock::now();
    if (c_gen->parsed()) RunGenDataset(gen, g);
    if (c_fit->parsed()) RunFitSh(fit, g);
    if (c_tr->parsed()) RunTrain(tr, g);
    if (c_pr->parsed()) RunPredict(pr, g);
    if (c_ev->parsed()) RunEvaluate(ev, g);
    if (c_si->parsed()) RunSimulate(si, g);
    if (c_re->parsed()) RunRender(re, g);
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    spdlog::debug("done in {:.2f}s", s);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return ExitCodeFor(e);
  }
  return kExitOk;
}

}  // namespace asf
