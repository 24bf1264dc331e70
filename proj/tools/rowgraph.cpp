// rowgraph: dataset generation, training, inference, evaluation and gradient
// verification from the command line.
//
// Exit codes: 0 ok, 1 usage, 2 I/O, 3 divergence, 4 incompatible weights,
// 5 verification failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rowgraph/config.hpp"
#include "rowgraph/dataset_io.hpp"
#include "rowgraph/eval/ablation.hpp"
#include "rowgraph/net/checkpoint.hpp"
#include "rowgraph/net/train.hpp"
#include "rowgraph/overlay.hpp"
#include "rowgraph/pipeline.hpp"
#include "rowgraph/verify.hpp"

namespace {

using namespace rowgraph;
namespace fs = std::filesystem;

enum Exit { kOk = 0, kUsage = 1, kIo = 2, kDivergence = 3, kIncompatible = 4, kVerification = 5 };

struct IncompatibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Overrides {
  std::optional<std::size_t> stages, samples;
  std::optional<double> width_scale, tau, delta;
  std::optional<std::uint64_t> seed;
};

struct Globals {
  std::string config;
  Overrides over;
  std::size_t threads = 1;
};

Settings settings_for(const Globals& g) {
  Settings s = load_settings(g.config);
  if (g.over.stages) s.stages = *g.over.stages;
  if (g.over.samples) s.samples = *g.over.samples;
  if (g.over.width_scale) s.width_scale = *g.over.width_scale;
  if (g.over.tau) s.tau = *g.over.tau;
  if (g.over.delta) s.delta = *g.over.delta;
  if (g.over.seed) s.seed = *g.over.seed;
  s.gen.seed = s.seed;
  validate(s);
  return s;
}

// Explicit command-line overrides must agree with what a weight file records.
void check_overrides(const Overrides& o, const net::RunMeta& m, bool with_samples, const std::string& what) {
  net::RunMeta want = m;
  if (o.stages) want.stages = *o.stages;
  if (o.width_scale) want.width_scale = *o.width_scale;
  if (o.tau) want.tau = *o.tau;
  if (o.delta) want.delta = *o.delta;
  if (with_samples && o.samples) want.samples = *o.samples;
  const auto diffs = net::compare_meta(m, want, with_samples);
  if (diffs.empty()) return;
  std::string msg = what + " is incompatible with the requested settings:";
  for (const auto& d : diffs) msg += "\n  " + d.field + ": file has " + d.have + ", requested " + d.want;
  throw IncompatibleError(msg);
}

void check_pair(const net::RunMeta& kem, const net::RunMeta& ecm) {
  auto diffs = net::compare_meta(ecm, kem, false);
  if (diffs.empty()) return;
  std::string msg = "edge head and map model were trained under different settings:";
  for (const auto& d : diffs) msg += "\n  " + d.field + ": edge head " + d.have + ", map model " + d.want;
  throw IncompatibleError(msg);
}

std::string history_csv(const net::History& h) {
  std::string out = "epoch,train_loss,val_loss,grad_norm\n";
  char buf[160];
  for (const auto& e : h.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", e.epoch, e.train_loss, e.val_loss, e.grad_norm);
    out += buf;
  }
  return out;
}

void progress(const char* what, const net::EpochRecord& r) {
  std::fprintf(stderr, "%s epoch %zu  train %.6g  val %.6g\n", what, r.epoch, r.train_loss, r.val_loss);
}

// ---------------------------------------------------------------------------

int cmd_generate(const Globals& g, const std::string& out, std::optional<std::size_t> patches,
                 std::optional<std::size_t> patch_size) {
  Settings s = settings_for(g);
  if (patches) s.patches = *patches;
  if (patch_size) s.patch_size = *patch_size;
  validate(s);
  const auto sum = write_dataset(out, s);
  std::printf("wrote %zu patches to %s (train %zu, val %zu, test %zu)\n", sum.train + sum.val + sum.test,
              out.c_str(), sum.train, sum.val, sum.test);
  return kOk;
}

int cmd_train_kem(const Globals& g, const std::string& data, const std::string& out, std::string history) {
  const Settings s = settings_for(g);
  const auto train = read_patches(data, "train");
  const auto val = read_patches(data, "val");
  if (train.empty()) throw std::invalid_argument("train-kem: training split is empty");
  std::vector<net::KemSample> tr, va;
  for (const auto& p : train) tr.push_back(net::make_kem_sample(p, s.stages));
  for (const auto& p : val) va.push_back(net::make_kem_sample(p, s.stages));
  const auto meta = s.meta();
  net::KemModel<float> model(net::backbone_config(meta), net::kem_config(meta));
  model.init(s.seed, s.output_gain);
  const auto h = net::train_kem(model, tr, va, s.kem_train(), [](const auto& r) { progress("kem", r); });
  net::save_kem(out, model, meta);
  if (history.empty()) history = out + ".history.csv";
  fieldgen::write_file(history, history_csv(h));
  std::printf("kem: %zu epochs, best epoch %zu (val loss %.6g), weights %s\n", h.epochs.size(), h.best_epoch,
              h.best_val_loss, out.c_str());
  return kOk;
}

int cmd_train_ecm(const Globals& g, const std::string& data, const std::string& kem_path, const std::string& out,
                  std::string history) {
  const Settings s = settings_for(g);
  auto kem = net::load_kem(kem_path);
  check_overrides(g.over, kem.meta, false, "map model '" + kem_path + "'");
  net::RunMeta meta = kem.meta;
  meta.samples = s.samples;
  const auto build = [&](const std::string& split) {
    std::vector<net::EcmSample> v;
    for (const auto& p : read_patches(data, split)) v.push_back(net::make_ecm_sample(*kem.model, p));
    return v;
  };
  const auto tr = build("train"), va = build("val"), te = build("test");
  net::EcmHead<float> head(net::ecm_config(meta), kem.model->backbone().feature_channels());
  net::init_head(head, s.seed);
  const auto cfg = s.ecm_train();
  const auto h = net::train_ecm(head, tr, va, cfg, [](const auto& r) { progress("ecm", r); });
  net::save_ecm(out, head, meta);
  if (history.empty()) history = out + ".history.csv";
  fieldgen::write_file(history, history_csv(h));
  const double held_out = net::ecm_mean_loss(head, te, cfg.negative_ratio, s.seed);
  std::printf("ecm: L=%zu, %zu epochs, best epoch %zu, held-out BCE %.6f, weights %s\n", meta.samples,
              h.epochs.size(), h.best_epoch, held_out, out.c_str());
  return kOk;
}

nlohmann::json detection_json(const Detection& d, const net::RunMeta& meta) {
  nlohmann::json j;
  j["header"] = {{"stages", meta.stages},
                 {"L", meta.samples},
                 {"width_scale", meta.width_scale},
                 {"tau", meta.tau},
                 {"delta", meta.delta}};
  auto vs = nlohmann::json::array();
  for (const auto& v : d.graph.vertices) vs.push_back({{"x", v.position.x}, {"y", v.position.y}, {"conf", v.confidence}});
  auto es = nlohmann::json::array();
  for (const auto& e : d.graph.edges)
    es.push_back({{"i", e.i},
                  {"j", e.j},
                  {"p_vis", e.scores.visual},
                  {"p_vec", e.scores.vector},
                  {"p_pix", e.scores.pixel},
                  {"accepted", e.accepted}});
  auto ls = nlohmann::json::array();
  for (const auto& l : d.lines.lines) ls.push_back(l.polyline);
  j["vertices"] = vs;
  j["edges"] = es;
  j["lines"] = ls;
  return j;
}

struct Models {
  net::LoadedKem kem;
  net::LoadedEcm ecm;
};

Models load_models(const Globals& g, const std::string& kem_path, const std::string& ecm_path) {
  Models m{net::load_kem(kem_path), net::load_ecm(ecm_path)};
  check_pair(m.kem.meta, m.ecm.meta);
  check_overrides(g.over, m.ecm.meta, true, "weights");
  return m;
}

DetectOptions options_for(const net::RunMeta& meta) {
  DetectOptions o;
  o.tau = meta.tau;
  o.delta = meta.delta;
  return o;
}

int cmd_infer(const Globals& g, const std::string& image_path, const std::string& kem_path,
              const std::string& ecm_path, const std::string& out, const std::string& overlay,
              const std::string& scene_path) {
  const Settings s = settings_for(g);
  const auto models = load_models(g, kem_path, ecm_path);
  const auto image = fieldgen::read_ppm(image_path);
  const auto d = detect(*models.kem.model, *models.ecm.head, image, options_for(models.ecm.meta));
  fieldgen::write_file(out, detection_json(d, models.ecm.meta).dump(1) + "\n");
  if (!overlay.empty()) {
    std::optional<std::vector<linegraph::Vec2>> labels;
    if (!scene_path.empty()) labels = label_plants(fieldgen::read_scene(scene_path));
    fieldgen::write_ppm(overlay, render_overlay(image, d.graph, labels, s.plant_radius));
  }
  std::printf("%zu plants, %zu accepted edges, %zu lines\n", d.graph.vertices.size(),
              static_cast<std::size_t>(std::count_if(d.graph.edges.begin(), d.graph.edges.end(),
                                                     [](const auto& e) { return e.accepted; })),
              d.lines.lines.size());
  return kOk;
}

struct EvalInputs {
  fieldgen::PatchSet patches;
  EvalRadii radii;
};

// Estimates are shared by every row that uses the same map model.
std::vector<Estimates> estimates_for(const net::KemModel<float>& model, const fieldgen::PatchSet& patches) {
  std::vector<Estimates> out;
  for (const auto& p : patches) out.push_back(estimate(model, p.image));
  return out;
}

SetEvaluation evaluate_set(const std::vector<Estimates>& est, const net::EcmHead<float>& head,
                           const net::RunMeta& meta, const linegraph::Gate& gate, const EvalInputs& in) {
  std::vector<PatchEvaluation> per;
  for (std::size_t i = 0; i < est.size(); ++i) {
    auto o = options_for(meta);
    per.push_back(evaluate_detection(finish(scored_graph(est[i], head, o), gate), in.patches[i].scene, in.radii));
  }
  return summarize(per);
}

int cmd_evaluate(const Globals& g, const std::string& data, const std::string& split, const std::string& kem_path,
                 const std::string& ecm_path, const std::string& grid_name, const std::string& models_dir,
                 const std::string& out, std::string csv, std::optional<double> plant_radius,
                 std::optional<double> line_radius) {
  const Settings s = settings_for(g);
  EvalInputs in{read_patches(data, split), {s.plant_radius, s.line_radius}};
  if (plant_radius) in.radii.plant = *plant_radius;
  if (line_radius) in.radii.line = *line_radius;
  if (in.patches.empty()) throw std::invalid_argument("evaluate: split '" + split + "' is empty");

  nlohmann::json report;
  report["split"] = split;
  report["patches"] = in.patches.size();
  report["radii"] = {{"plant", in.radii.plant}, {"line", in.radii.line}};

  if (grid_name.empty()) {
    if (kem_path.empty() || ecm_path.empty()) throw std::invalid_argument("evaluate: --kem and --ecm are required");
    const auto m = load_models(g, kem_path, ecm_path);
    const auto est = estimates_for(*m.kem.model, in.patches);
    const auto r = evaluate_set(est, *m.ecm.head, m.ecm.meta, linegraph::Gate::all(), in);
    report["plants"] = eval::report_json(r.plants);
    report["lines"] = eval::report_json(r.lines);
    std::printf("plants: P %.4f R %.4f F1 %.4f MAE %.3f | lines: P %.4f R %.4f F1 %.4f\n", r.plants.pooled.precision,
                r.plants.pooled.recall, r.plants.pooled.f1, r.plants.mae, r.lines.pooled.precision,
                r.lines.pooled.recall, r.lines.pooled.f1);
  } else {
    const auto grid = eval::parse_grid(grid_name);
    if (!grid) throw std::invalid_argument("evaluate: --grid must be stages, samples or features");
    if (models_dir.empty()) throw std::invalid_argument("evaluate: --grid needs --models DIR");
    auto table = eval::empty_table(*grid);
    std::vector<eval::MetricsReport> other(table.rows.size());
    const fs::path dir(models_dir);
    const auto kem_file = [&](std::size_t t) { return dir / ("kem_T" + std::to_string(t) + ".rgw"); };
    const auto ecm_file = [&](std::size_t t, std::size_t l) {
      return dir / ("ecm_T" + std::to_string(t) + "_L" + std::to_string(l) + ".rgw");
    };
    const auto run_row = [&](std::size_t row, std::size_t t, std::size_t l, const linegraph::Gate& gate,
                             std::optional<Models>& cache_models, std::vector<Estimates>& cache_est) {
      auto& r = table.rows[row];
      if (!fs::exists(kem_file(t)) || !fs::exists(ecm_file(t, l))) {
        r.note = "missing " + (!fs::exists(kem_file(t)) ? kem_file(t) : ecm_file(t, l)).filename().string();
        return;
      }
      if (!cache_models || cache_models->kem.meta.stages != t || cache_models->ecm.meta.samples != l) {
        const bool same_kem = cache_models && cache_models->kem.meta.stages == t;
        Models m{net::load_kem(kem_file(t).string()), net::load_ecm(ecm_file(t, l).string())};
        check_pair(m.kem.meta, m.ecm.meta);
        cache_models = std::move(m);
        if (!same_kem) cache_est = estimates_for(*cache_models->kem.model, in.patches);
      }
      const auto res = evaluate_set(cache_est, *cache_models->ecm.head, cache_models->ecm.meta, gate, in);
      const bool plants = table.metric == "plants";
      r.metrics = plants ? res.plants : res.lines;
      other[row] = plants ? res.lines : res.plants;
    };
    std::optional<Models> cache;
    std::vector<Estimates> est;
    switch (*grid) {
      case eval::Grid::Stages:
        run_row(0, 1, s.samples, linegraph::Gate::all(), cache, est);
        run_row(1, 2, s.samples, linegraph::Gate::all(), cache, est);
        break;
      case eval::Grid::Samples:
        run_row(0, s.stages, 4, linegraph::Gate::all(), cache, est);
        run_row(1, s.stages, 8, linegraph::Gate::all(), cache, est);
        run_row(2, s.stages, 16, linegraph::Gate::all(), cache, est);
        break;
      case eval::Grid::Features: {
        const linegraph::Gate gates[] = {linegraph::Gate::visual_only(), linegraph::Gate::visual_vector(),
                                         linegraph::Gate::visual_line(), linegraph::Gate::all()};
        for (std::size_t i = 0; i < 4; ++i) run_row(i, s.stages, s.samples, gates[i], cache, est);
        break;
      }
    }
    report["table"] = eval::table_json(table, &other);
    if (csv.empty()) csv = out + ".csv";
    fieldgen::write_file(csv, eval::table_csv(table));
    std::printf("%s", eval::table_csv(table).c_str());
  }
  fieldgen::write_file(out, report.dump(1) + "\n");
  return kOk;
}

int cmd_gradcheck(std::size_t seeds, bool corrupt) {
  if (corrupt) diff::corrupt_conv2d_backward() = true;
  const auto reports = run_gradcheck_suite(seeds);
  bool ok = true;
  for (const auto& r : reports) {
    std::printf("%-20s max_rel_err %.3e  checked %zu  skipped %zu  %s\n", r.name.c_str(), r.max_relative_error,
                r.checked, r.skipped, r.passed ? "ok" : "FAIL");
    ok = ok && r.passed;
  }
  if (!ok) {
    std::string failed;
    for (const auto& r : reports)
      if (!r.passed) failed += (failed.empty() ? "" : ", ") + r.name;
    std::fprintf(stderr, "gradient check failed: %s\n", failed.c_str());
    return kVerification;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plantation line detection with a graph over detected plants"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "key=value settings file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.over.seed, "random seed");
  app.add_option("--threads", g.threads, "worker threads (computation is single-threaded)")->check(CLI::PositiveNumber);
  app.add_option("--stages", g.over.stages, "refinement stages T");
  app.add_option("--L", g.over.samples, "points sampled per edge");
  app.add_option("--width-scale", g.over.width_scale, "channel width multiplier");
  app.add_option("--tau", g.over.tau, "peak threshold");
  app.add_option("--delta", g.over.delta, "minimum peak distance in pixels");

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  std::string gen_out;
  std::optional<std::size_t> gen_patches, gen_size;
  gen->add_option("--out", gen_out, "dataset directory")->required();
  gen->add_option("--patches", gen_patches, "number of patches");
  gen->add_option("--patch-size", gen_size, "patch edge length in pixels");

  auto* tk = app.add_subcommand("train-kem", "train backbone and estimation module");
  std::string tk_data, tk_out, tk_hist;
  tk->add_option("--data", tk_data, "dataset directory")->required();
  tk->add_option("--out", tk_out, "weights file")->required();
  tk->add_option("--history", tk_hist, "history CSV (default <out>.history.csv)");

  auto* te = app.add_subcommand("train-ecm", "train the edge head on frozen features");
  std::string te_data, te_kem, te_out, te_hist;
  te->add_option("--data", te_data, "dataset directory")->required();
  te->add_option("--kem", te_kem, "map model weights")->required();
  te->add_option("--out", te_out, "head weights file")->required();
  te->add_option("--history", te_hist, "history CSV (default <out>.history.csv)");

  auto* inf = app.add_subcommand("infer", "detect plants and lines in one image");
  std::string in_image, in_kem, in_ecm, in_out, in_overlay, in_scene;
  inf->add_option("--image", in_image, "RGB image (PPM)")->required();
  inf->add_option("--kem", in_kem, "map model weights")->required();
  inf->add_option("--ecm", in_ecm, "edge head weights")->required();
  inf->add_option("--out", in_out, "detection JSON")->required();
  inf->add_option("--overlay", in_overlay, "overlay image (PPM)");
  inf->add_option("--scene", in_scene, "labeled scene JSON used to colour the overlay");

  auto* ev = app.add_subcommand("evaluate", "score a dataset split");
  std::string ev_data, ev_split = "test", ev_kem, ev_ecm, ev_grid, ev_models, ev_out, ev_csv;
  std::optional<double> ev_pr, ev_lr;
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--split", ev_split, "train, val or test");
  ev->add_option("--kem", ev_kem, "map model weights");
  ev->add_option("--ecm", ev_ecm, "edge head weights");
  ev->add_option("--grid", ev_grid, "ablation grid: stages, samples or features");
  ev->add_option("--models", ev_models, "directory with kem_T<t>.rgw and ecm_T<t>_L<l>.rgw");
  ev->add_option("--out", ev_out, "report JSON")->required();
  ev->add_option("--csv", ev_csv, "ablation table CSV (default <out>.csv)");
  ev->add_option("--plant-radius", ev_pr, "plant match radius in pixels (default 8)");
  ev->add_option("--line-radius", ev_lr, "line pixel match radius in pixels (default 5)");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  std::size_t gc_seeds = 20;
  bool gc_corrupt = false;
  gc->add_option("--seeds", gc_seeds, "random cases per primitive")->check(CLI::PositiveNumber);
  gc->add_flag("--corrupt-conv2d-backward", gc_corrupt)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_generate(g, gen_out, gen_patches, gen_size);
    if (*tk) return cmd_train_kem(g, tk_data, tk_out, tk_hist);
    if (*te) return cmd_train_ecm(g, te_data, te_kem, te_out, te_hist);
    if (*inf) return cmd_infer(g, in_image, in_kem, in_ecm, in_out, in_overlay, in_scene);
    if (*ev)
      return cmd_evaluate(g, ev_data, ev_split, ev_kem, ev_ecm, ev_grid, ev_models, ev_out, ev_csv, ev_pr, ev_lr);
    if (*gc) return cmd_gradcheck(gc_seeds, gc_corrupt);
  } catch (const diff::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const net::DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDivergence;
  } catch (const IncompatibleError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIncompatible;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
  return kUsage;
}
