// Command-line front end: simulate, layout, dataset generation, training,
// evaluation, yaw optimization, direction sweeps, attention export and the
// fitness-backend benchmark.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "wakeforge/checkpoint.hpp"
#include "wakeforge/dataset.hpp"
#include "wakeforge/ga.hpp"
#include "wakeforge/io.hpp"
#include "wakeforge/layout.hpp"
#include "wakeforge/rng.hpp"
#include "wakeforge/surrogate.hpp"
#include "wakeforge/wake.hpp"
#include "wakeforge/wind_frame.hpp"

using json = nlohmann::json;
using namespace wakeforge;

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double timed_seconds(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count();
}

struct RangeFlags {
  ScenarioRanges ranges;
  void attach(CLI::App* cmd) {
    cmd->add_option("--n-min", ranges.n_min, "Minimum turbine count");
    cmd->add_option("--n-max", ranges.n_max, "Maximum turbine count");
    cmd->add_option("--speed-min", ranges.speed_min, "Minimum wind speed (m/s)");
    cmd->add_option("--speed-max", ranges.speed_max, "Maximum wind speed (m/s)");
    cmd->add_option("--dir-min", ranges.dir_min, "Minimum wind direction (deg)");
    cmd->add_option("--dir-max", ranges.dir_max, "Maximum wind direction (deg)");
    cmd->add_option("--ti-min", ranges.ti_min, "Minimum turbulence intensity");
    cmd->add_option("--ti-max", ranges.ti_max, "Maximum turbulence intensity");
    cmd->add_option("--yaw-max", ranges.yaw_abs_max_deg, "Yaw bound (deg)");
    cmd->add_option("--min-spacing", ranges.min_spacing, "Minimum spacing (d0 multiples)");
  }
};

struct WakeFlags {
  WakeParams params;
  void attach(CLI::App* cmd) {
    cmd->add_option("--k", params.k, "Wake growth rate");
    cmd->add_option("--kd", params.kd, "Deflection decay constant");
    cmd->add_option("--yaw-exponent", params.yaw_power_exponent, "Yaw power-loss exponent");
    cmd->add_flag("--k-from-ti", params.k_from_ti, "Derive k from turbulence intensity");
    cmd->add_option("--k-ti-slope", params.k_ti_slope, "Slope when k is derived from TI");
  }
};

struct GaFlags {
  GaConfig config;
  void attach(CLI::App* cmd) {
    cmd->add_option("--pop", config.population_size, "Population size");
    cmd->add_option("--gens", config.n_generations, "Generations");
    cmd->add_option("--crossover", config.crossover_prob, "Crossover probability");
    cmd->add_option("--mutation", config.mutation_rate, "Per-gene mutation rate");
    cmd->add_option("--elitism", config.elitism, "Elite count");
    cmd->add_option("--tournament", config.tournament_size, "Tournament size");
    cmd->add_option("--yaw-bound", config.yaw_bound_deg, "Yaw bound (deg)");
  }
};

FarmScenario load_scenario(const std::string& path) {
  return io::scenario_from_json(io::read_json_file(path));
}

std::string history_csv(const GaHistory& hist) {
  std::string out = "generation,best_w,mean_w\n";
  for (std::size_t g = 0; g < hist.best_w.size(); ++g)
    out += std::to_string(g) + "," + io::csv_cell(hist.best_w[g]) + "," +
           io::csv_cell(hist.mean_w[g]) + "\n";
  return out;
}

json champion_json(const Individual& best, const std::string& backend) {
  json j;
  j["backend"] = backend;
  j["fitness_w"] = best.fitness;
  std::vector<double> yaw(best.chromosome.data(), best.chromosome.data() + best.chromosome.size());
  j["yaw"] = yaw;
  return j;
}

int run(int argc, char** argv) {
  CLI::App app{"wakeforge: analytical wake simulation, learned farm-power surrogates and "
               "GA yaw steering"};
  app.require_subcommand(1);

  // ---- simulate ----------------------------------------------------------
  auto* simulate = app.add_subcommand("simulate", "Run the analytical simulator on a scenario");
  std::string sim_scenario, sim_out, field_out;
  int field_nx = 120, field_ny = 80;
  double field_margin = 4.0;
  WakeFlags sim_wake;
  simulate->add_option("--scenario", sim_scenario, "Scenario JSON")->required();
  simulate->add_option("--out", sim_out, "Result JSON path");
  simulate->add_option("--field-out", field_out, "Wake-field CSV path (x,y,uw)");
  simulate->add_option("--field-nx", field_nx, "Field grid columns");
  simulate->add_option("--field-ny", field_ny, "Field grid rows");
  simulate->add_option("--field-margin", field_margin, "Field margin (d0 multiples)");
  sim_wake.attach(simulate);
  simulate->callback([&] {
    const FarmScenario sc = load_scenario(sim_scenario);
    const SimulationResult res = simulate_farm(sc, sim_wake.params);
    const json j = io::result_to_json(res);
    if (!sim_out.empty()) io::write_json_file(sim_out, j);
    std::cout << j.dump() << "\n";
    if (!field_out.empty()) {
      const double margin = field_margin * sc.spec.rotor_diameter;
      const double x0 = sc.positions.col(0).minCoeff() - margin;
      const double x1 = sc.positions.col(0).maxCoeff() + margin;
      const double y0 = sc.positions.col(1).minCoeff() - margin;
      const double y1 = sc.positions.col(1).maxCoeff() + margin;
      Eigen::MatrixX2d pts(field_nx * field_ny, 2);
      for (int r = 0; r < field_ny; ++r)
        for (int c = 0; c < field_nx; ++c) {
          pts(r * field_nx + c, 0) = x0 + (x1 - x0) * c / std::max(1, field_nx - 1);
          pts(r * field_nx + c, 1) = y0 + (y1 - y0) * r / std::max(1, field_ny - 1);
        }
      const Eigen::VectorXd uw = sample_wake_field(sc, sim_wake.params, pts);
      std::string csv = "x,y,uw\n";
      for (Eigen::Index i = 0; i < pts.rows(); ++i)
        csv += io::csv_cell(pts(i, 0)) + "," + io::csv_cell(pts(i, 1)) + "," +
               io::csv_cell(uw(i)) + "\n";
      io::write_text(field_out, csv);
    }
  });

  // ---- layout -------------------------------------------------------------
  auto* layout = app.add_subcommand("layout", "Generate a farm layout");
  std::string layout_style = "cluster", layout_out, layout_manifest;
  LayoutParams layout_params;
  double layout_heading = std::numeric_limits<double>::quiet_NaN();
  layout->add_option("--style", layout_style,
                     "cluster | single_string | multiple_string | parallel_string | regular_grid");
  layout->add_option("--n", layout_params.n_turbines, "Turbine count")->required();
  layout->add_option("--seed", layout_params.seed, "RNG seed");
  layout->add_option("--min-spacing", layout_params.min_spacing, "Minimum spacing (d0 multiples)");
  layout->add_option("--d0", layout_params.d0, "Rotor diameter (m)");
  layout->add_option("--heading", layout_heading, "String heading (deg)");
  layout->add_option("--pitch-scale", layout_params.pitch_scale, "String pitch scale");
  layout->add_option("--radius-scale", layout_params.cluster_radius_scale, "Cluster radius scale");
  layout->add_option("--out", layout_out, "Layout JSON path")->required();
  layout->add_option("--manifest", layout_manifest, "Style manifest JSON path");
  layout->callback([&] {
    if (!std::isnan(layout_heading)) layout_params.heading_deg = layout_heading;
    const LayoutStyle style = layout_style_from_string(layout_style);
    const Eigen::MatrixX2d pts = generate_layout(style, layout_params);
    json positions = json::array();
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
      positions.push_back({pts(i, 0), pts(i, 1)});
    io::write_json_file(layout_out, json{{"positions", positions}});
    if (!layout_manifest.empty()) {
      json m{{"style", layout_style},
             {"n_turbines", layout_params.n_turbines},
             {"min_spacing", layout_params.min_spacing},
             {"d0", layout_params.d0},
             {"pitch_scale", layout_params.pitch_scale},
             {"cluster_radius_scale", layout_params.cluster_radius_scale},
             {"seed", layout_params.seed}};
      if (layout_params.heading_deg) m["heading_deg"] = *layout_params.heading_deg;
      io::write_json_file(layout_manifest, m);
    }
    std::cout << json{{"written", layout_out}, {"n", layout_params.n_turbines}}.dump() << "\n";
  });

  // ---- dataset ------------------------------------------------------------
  auto* ds_std = app.add_subcommand("dataset-standard", "Generate a random-yaw dataset");
  auto* ds_enh = app.add_subcommand("dataset-enhanced", "Generate a GA-sampled dataset");
  struct DatasetFlags {
    int n = 100;
    std::uint64_t seed = 0;
    std::string out;
    std::vector<double> split{0.8, 0.1, 0.1};
    bool gzip = false;
    int threads = 0;
    RangeFlags ranges;
    WakeFlags wake;
  };
  DatasetFlags std_flags, enh_flags;
  int enh_samples = 25;
  GaFlags enh_ga;
  enh_ga.config = GaConfig{};  // data-generation defaults: pop 100, 50 gens, 0.7/0.5
  for (auto [cmd, flags] : {std::pair{ds_std, &std_flags}, std::pair{ds_enh, &enh_flags}}) {
    cmd->add_option("--n", flags->n, "Scenario count")->required();
    cmd->add_option("--seed", flags->seed, "Master seed");
    cmd->add_option("--out", flags->out, "Output prefix")->required();
    cmd->add_option("--split", flags->split, "Train/val/test fractions")->expected(3);
    cmd->add_flag("--gzip", flags->gzip, "Compress record files");
    cmd->add_option("--threads", flags->threads, "Generation threads (0 = WAKEFORGE_THREADS)");
    flags->ranges.attach(cmd);
    flags->wake.attach(cmd);
  }
  ds_enh->add_option("--samples", enh_samples, "Yaw configurations sampled per scenario");
  enh_ga.attach(ds_enh);

  auto write_generated = [](const DatasetFlags& flags, std::vector<DatasetRecord> records,
                            DatasetManifest manifest) {
    manifest.ranges = flags.ranges.ranges;
    manifest.wake_params = flags.wake.params;
    manifest.n_scenarios = flags.n;
    manifest.master_seed = flags.seed;
    manifest.split_fractions = {flags.split[0], flags.split[1], flags.split[2]};
    const DatasetSplits splits =
        split_by_scenario(records, manifest.split_fractions, derive_seed(flags.seed, 0x5197ull));
    write_dataset(flags.out, splits, manifest, flags.gzip);
    std::cout << json{{"written", flags.out},
                      {"train", splits.train.size()},
                      {"val", splits.val.size()},
                      {"test", splits.test.size()}}
                     .dump()
              << "\n";
  };
  ds_std->callback([&] {
    const int threads = std_flags.threads > 0 ? std_flags.threads : thread_cap();
    auto records = gen_standard(std_flags.n, std_flags.ranges.ranges, std_flags.wake.params,
                                std_flags.seed, threads);
    DatasetManifest manifest;
    manifest.kind = "standard";
    write_generated(std_flags, std::move(records), std::move(manifest));
  });
  ds_enh->callback([&] {
    const int threads = enh_flags.threads > 0 ? enh_flags.threads : thread_cap();
    auto records = gen_enhanced(enh_flags.n, enh_flags.ranges.ranges, enh_flags.wake.params,
                                enh_ga.config, enh_samples, enh_flags.seed, threads);
    DatasetManifest manifest;
    manifest.kind = "enhanced";
    manifest.ga = enh_ga.config;
    manifest.samples_per_scenario = enh_samples;
    write_generated(enh_flags, std::move(records), std::move(manifest));
  });

  // ---- train --------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train a surrogate on a dataset");
  std::string train_dataset, train_model = "transformer", train_out, curve_out;
  TrainConfig train_cfg;
  TransformerConfig tf_cfg;
  GnnConfig gnn_cfg;
  long train_steps = 20000, train_warmup = 500;
  train->add_option("--dataset", train_dataset, "Dataset prefix")->required();
  train->add_option("--model", train_model, "transformer | gnn");
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--curve-out", curve_out, "Loss curve CSV path");
  train->add_option("--steps", train_steps, "Training steps");
  train->add_option("--batch", train_cfg.batch_size, "Batch size (scenarios)");
  train->add_option("--seed", train_cfg.seed, "Training seed");
  train->add_option("--max-lr", train_cfg.schedule.max_lr, "Peak learning rate");
  train->add_option("--warmup", train_warmup, "Warmup steps");
  train->add_option("--floor-lr", train_cfg.schedule.floor_lr, "Final learning rate");
  train->add_option("--wd", train_cfg.weight_decay, "Weight decay");
  train->add_option("--val-interval", train_cfg.val_interval, "Validation interval (steps)");
  train->add_option("--blocks", tf_cfg.n_blocks, "Attention blocks");
  train->add_option("--heads", tf_cfg.n_heads, "Attention heads");
  train->add_option("--d", tf_cfg.d_model, "Hidden width");
  train->add_option("--enc-hidden", tf_cfg.enc_hidden, "Encoder MLP hidden width");
  train->add_option("--dec-hidden", tf_cfg.dec_hidden, "Decoder MLP hidden width");
  train->add_option("--ffn-hidden", tf_cfg.ffn_hidden, "Feed-forward hidden width");
  train->add_option("--dropout", tf_cfg.dropout, "Dropout probability");
  train->add_option("--gnn-blocks", gnn_cfg.n_blocks, "Graph-net blocks");
  train->add_option("--gnn-width", gnn_cfg.mlp_hidden, "Graph-net MLP width");
  train->add_option("--latent-vertex", gnn_cfg.latent_vertex, "Vertex latent width");
  train->add_option("--latent-edge", gnn_cfg.latent_edge, "Edge latent width");
  train->add_option("--latent-global", gnn_cfg.latent_global, "Global latent width");
  train->callback([&] {
    const auto [splits, manifest] = read_dataset(train_dataset);
    train_cfg.schedule.total_steps = train_steps;
    train_cfg.schedule.warmup_steps = train_warmup;
    TrainResult result;
    if (train_model == "transformer")
      result = train_transformer(tf_cfg, train_cfg, splits.train, splits.val);
    else if (train_model == "gnn")
      result = train_gnn(gnn_cfg, train_cfg, splits.train, splits.val);
    else
      throw std::invalid_argument("train: unknown model kind " + train_model);
    save_checkpoint(train_out, result.checkpoint);
    if (!curve_out.empty()) {
      std::string csv = "step,train_loss\n";
      for (const auto& [step, loss] : result.train_curve)
        csv += std::to_string(step) + "," + io::csv_cell(loss) + "\n";
      csv += "step,val_mse\n";
      for (const auto& [step, mse] : result.val_curve)
        csv += std::to_string(step) + "," + io::csv_cell(mse) + "\n";
      io::write_text(curve_out, csv);
    }
    std::cout << json{{"checkpoint", train_out},
                      {"steps", train_steps},
                      {"best_val_mse", result.best_val_mse}}
                     .dump()
              << "\n";
  });

  // ---- eval ---------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  std::string eval_ckpt, eval_dataset, eval_split = "test", eval_out;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
  eval->add_option("--dataset", eval_dataset, "Dataset prefix")->required();
  eval->add_option("--split", eval_split, "train | val | test");
  eval->add_option("--out", eval_out, "Metrics JSON path");
  eval->callback([&] {
    const Checkpoint ckpt = load_checkpoint(eval_ckpt);
    const auto [splits, manifest] = read_dataset(eval_dataset);
    const std::vector<DatasetRecord>* records = nullptr;
    if (eval_split == "train") records = &splits.train;
    else if (eval_split == "val") records = &splits.val;
    else if (eval_split == "test") records = &splits.test;
    else throw std::invalid_argument("eval: unknown split " + eval_split);
    const Metrics m = evaluate(ckpt, *records);
    const json j{{"split", eval_split},
                 {"records", records->size()},
                 {"mse", m.mse},
                 {"mean_rel_acc", m.mean_rel_acc},
                 {"min_rel_acc", m.min_rel_acc}};
    if (!eval_out.empty()) io::write_json_file(eval_out, j);
    std::cout << j.dump() << "\n";
  });

  // ---- optimize -----------------------------------------------------------
  auto* optimize = app.add_subcommand("optimize", "GA yaw optimization for one scenario");
  std::string opt_scenario, opt_backend = "simulator", opt_ckpt, opt_out, opt_history;
  GaFlags opt_ga;
  WakeFlags opt_wake;
  std::uint64_t opt_seed = 0;
  int opt_threads = 0;
  optimize->add_option("--scenario", opt_scenario, "Scenario JSON")->required();
  optimize->add_option("--backend", opt_backend, "simulator | surrogate");
  optimize->add_option("--checkpoint", opt_ckpt, "Checkpoint (surrogate backend)");
  optimize->add_option("--out", opt_out, "Champion JSON path");
  optimize->add_option("--history", opt_history, "History CSV path");
  optimize->add_option("--seed", opt_seed, "GA seed");
  optimize->add_option("--threads", opt_threads, "Surrogate threads (0 = WAKEFORGE_THREADS)");
  opt_ga.attach(optimize);
  opt_wake.attach(optimize);
  optimize->callback([&] {
    const FarmScenario sc = load_scenario(opt_scenario);
    opt_ga.config.seed = opt_seed;
    std::unique_ptr<SurrogateEvaluator> evaluator;
    FitnessFn fitness;
    if (opt_backend == "simulator") {
      fitness = make_simulator_backend(sc, opt_wake.params);
    } else if (opt_backend == "surrogate") {
      if (opt_ckpt.empty())
        throw std::invalid_argument("optimize: surrogate backend needs --checkpoint");
      evaluator = std::make_unique<SurrogateEvaluator>(load_checkpoint(opt_ckpt), sc,
                                                       opt_threads > 0 ? opt_threads : thread_cap());
      fitness = evaluator->as_backend();
    } else {
      throw std::invalid_argument("optimize: unknown backend " + opt_backend);
    }
    const GaResult res = run_ga(fitness, static_cast<int>(sc.size()), opt_ga.config);
    if (res.aborted) throw std::runtime_error("optimize: fitness backend failed: " + res.error);
    if (!opt_history.empty()) io::write_text(opt_history, history_csv(res.history));
    const json j = champion_json(res.best, opt_backend);
    if (!opt_out.empty()) io::write_json_file(opt_out, j);
    std::cout << j.dump() << "\n";
  });

  // ---- sweep ---------------------------------------------------------------
  auto* sweep = app.add_subcommand("sweep", "Total power across wind directions");
  std::string sweep_scenario, sweep_backend = "simulator", sweep_ckpt, sweep_out, sweep_yaw_file;
  double step_deg = 1.0;
  WakeFlags sweep_wake;
  sweep->add_option("--scenario", sweep_scenario, "Scenario JSON")->required();
  sweep->add_option("--backend", sweep_backend, "simulator | surrogate | both");
  sweep->add_option("--checkpoint", sweep_ckpt, "Checkpoint (surrogate backends)");
  sweep->add_option("--step-deg", step_deg, "Direction step (deg)");
  sweep->add_option("--out", sweep_out, "CSV path")->required();
  sweep->add_option("--yaw-file", sweep_yaw_file, "JSON with a fixed yaw array");
  sweep_wake.attach(sweep);
  sweep->callback([&] {
    FarmScenario sc = load_scenario(sweep_scenario);
    sc.yaw_deg.setZero();  // turbines face the swept wind unless a yaw file is given
    if (!sweep_yaw_file.empty()) {
      const json y = io::read_json_file(sweep_yaw_file);
      const auto yaw = y.at("yaw").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(yaw.size()) != sc.size())
        throw std::invalid_argument("sweep: yaw file length differs from turbine count");
      sc.yaw_deg = Eigen::Map<const Eigen::VectorXd>(yaw.data(),
                                                     static_cast<Eigen::Index>(yaw.size()));
    }
    if (step_deg <= 0.0 || step_deg > 360.0)
      throw std::invalid_argument("sweep: step must lie in (0, 360]");
    const bool want_sim = sweep_backend == "simulator" || sweep_backend == "both";
    const bool want_sur = sweep_backend == "surrogate" || sweep_backend == "both";
    if (!want_sim && !want_sur)
      throw std::invalid_argument("sweep: unknown backend " + sweep_backend);
    Checkpoint ckpt;
    if (want_sur) {
      if (sweep_ckpt.empty())
        throw std::invalid_argument("sweep: surrogate backend needs --checkpoint");
      ckpt = load_checkpoint(sweep_ckpt);
    }
    std::string csv = sweep_backend == "both" ? "direction_deg,total_power_w,surrogate_w,rel_err\n"
                                              : "direction_deg,total_power_w\n";
    double acc_sum = 0.0, acc_min = std::numeric_limits<double>::infinity();
    int rows = 0;
    for (double dir = 0.0; dir < 360.0 - 1e-9; dir += step_deg) {
      sc.conditions.wind_direction_deg = dir;
      double sim_w = 0.0, sur_w = 0.0;
      if (want_sim) sim_w = simulate_farm(sc, sweep_wake.params).total_power;
      if (want_sur) sur_w = predict_powers(ckpt, sc).sum();
      if (sweep_backend == "both") {
        const double rel_err = sim_w != 0.0 ? std::abs(sur_w - sim_w) / sim_w : 0.0;
        const double acc = 1.0 - rel_err;
        acc_sum += acc;
        acc_min = std::min(acc_min, acc);
        csv += io::csv_cell(dir) + "," + io::csv_cell(sim_w) + "," + io::csv_cell(sur_w) + "," +
               io::csv_cell(rel_err) + "\n";
      } else {
        csv += io::csv_cell(dir) + "," + io::csv_cell(want_sim ? sim_w : sur_w) + "\n";
      }
      ++rows;
    }
    io::write_text(sweep_out, csv);
    json j{{"written", sweep_out}, {"rows", rows}};
    if (sweep_backend == "both") {
      j["mean_rel_acc"] = acc_sum / rows;
      j["min_rel_acc"] = acc_min;
    }
    std::cout << j.dump() << "\n";
  });

  // ---- attention ------------------------------------------------------------
  auto* attention = app.add_subcommand("attention", "Export thresholded attention triples");
  std::string attn_scenario, attn_ckpt, attn_out;
  double attn_threshold = 0.1;
  attention->add_option("--scenario", attn_scenario, "Scenario JSON")->required();
  attention->add_option("--checkpoint", attn_ckpt, "Checkpoint path")->required();
  attention->add_option("--threshold", attn_threshold, "Score threshold");
  attention->add_option("--out", attn_out, "CSV path");
  attention->callback([&] {
    const FarmScenario sc = load_scenario(attn_scenario);
    const auto triples = extract_attention(load_checkpoint(attn_ckpt), sc, attn_threshold);
    std::string csv = "i,j,score\n";
    for (const auto& [i, j, score] : triples)
      csv += std::to_string(i) + "," + std::to_string(j) + "," + io::csv_cell(score) + "\n";
    if (!attn_out.empty()) io::write_text(attn_out, csv);
    std::cout << json{{"edges", triples.size()}}.dump() << "\n";
    if (attn_out.empty()) std::cout << csv;
  });

  // ---- bench -----------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "Per-generation timing: simulator vs surrogate");
  std::string bench_scenario, bench_ckpt, bench_out;
  int bench_pop = 200, bench_rounds = 5, bench_threads = 0;
  std::uint64_t bench_seed = 0;
  WakeFlags bench_wake;
  bench->add_option("--scenario", bench_scenario, "Scenario JSON")->required();
  bench->add_option("--checkpoint", bench_ckpt, "Checkpoint path")->required();
  bench->add_option("--pop", bench_pop, "Individuals per generation");
  bench->add_option("--rounds", bench_rounds, "Timed generations");
  bench->add_option("--seed", bench_seed, "Chromosome seed");
  bench->add_option("--threads", bench_threads, "Surrogate threads (0 = WAKEFORGE_THREADS)");
  bench->add_option("--out", bench_out, "Report JSON path");
  bench_wake.attach(bench);
  bench->callback([&] {
    const FarmScenario sc = load_scenario(bench_scenario);
    const Checkpoint ckpt = load_checkpoint(bench_ckpt);
    const int threads = bench_threads > 0 ? bench_threads : thread_cap();
    SurrogateEvaluator evaluator(ckpt, sc, threads);
    Rng rng(bench_seed);
    const int n = static_cast<int>(sc.size());
    std::vector<double> t_sim, t_seq, t_bat;
    for (int round = 0; round < bench_rounds; ++round) {
      std::vector<Eigen::VectorXd> chroms(static_cast<std::size_t>(bench_pop));
      for (auto& c : chroms) {
        c.resize(n);
        for (int g = 0; g < n; ++g) c(g) = rng.uniform(-30.0, 30.0);
      }
      std::vector<double> sim_fit, seq_fit, bat_fit;
      t_sim.push_back(timed_seconds([&] { sim_fit = simulator_fitness(sc, bench_wake.params, chroms); }));
      t_seq.push_back(timed_seconds([&] { seq_fit = evaluator.sequential(chroms); }));
      t_bat.push_back(timed_seconds([&] { bat_fit = evaluator.batched(chroms); }));
      for (std::size_t i = 0; i < bat_fit.size(); ++i) {
        const double denom = std::max(std::abs(seq_fit[i]), 1.0);
        if (std::abs(bat_fit[i] - seq_fit[i]) / denom > 1e-5)
          throw std::runtime_error("bench: batched and per-individual fitness disagree");
      }
    }
    const double sim_s = median(t_sim), seq_s = median(t_seq), bat_s = median(t_bat);
    const json j{{"n_individuals", bench_pop},
                 {"n_turbines", n},
                 {"rounds", bench_rounds},
                 {"threads", threads},
                 {"simulator_sequential_s_per_gen", sim_s},
                 {"surrogate_sequential_s_per_gen", seq_s},
                 {"surrogate_batched_s_per_gen", bat_s},
                 {"speedup_batched_vs_sequential_surrogate", seq_s / bat_s},
                 {"speedup_batched_vs_simulator", sim_s / bat_s}};
    if (!bench_out.empty()) io::write_json_file(bench_out, j);
    std::cout << j.dump() << "\n";
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const std::domain_error*>(&e)) return "domain_error";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "invalid_argument";
  if (dynamic_cast<const std::logic_error*>(&e)) return "logic_error";
  if (dynamic_cast<const std::runtime_error*>(&e)) return "runtime_error";
  return "error";
}

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    json err;
    err["error"] = {{"type", error_kind(e)}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
}
