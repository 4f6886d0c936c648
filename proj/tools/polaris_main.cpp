// polaris: command-line driver wiring datasets, training, DSE runs, baselines,
// ablations and reports into reproducible experiments.
//
// Exit codes: 0 success, 2 usage/validation error, 1 runtime failure.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "polaris/baselines.hpp"

namespace fs = std::filesystem;
using namespace polaris;

namespace {

constexpr const char* kVersion = "v0.1.0";

// Flag/value errors discovered after CLI11 parsing still exit with the usage
// code so scripts can tell bad invocations from failed runs.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalOpts {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  int jobs = 1;
  std::string cost_model_path;
};

void add_global_flags(CLI::App* cmd, GlobalOpts* g) {
  cmd->add_option("--seed", g->seed, "Base RNG seed")
      ->envname("POLARIS_SEED")
      ->capture_default_str();
  cmd->add_option("--out-dir", g->out_dir, "Directory all relative paths resolve against")
      ->capture_default_str();
  cmd->add_option("--jobs", g->jobs, "Worker cap for data generation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--cost-model", g->cost_model_path,
                  "JSON file overriding cost-model constants");
}

// Relative paths resolve under --out-dir; absolute paths pass through.
std::string resolve(const GlobalOpts& g, const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return p.string();
  return (fs::path(g.out_dir) / p).string();
}

CostModelConstants load_constants(const GlobalOpts& g) {
  if (g.cost_model_path.empty()) return {};
  const std::string path = resolve(g, g.cost_model_path);
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("cannot open cost-model file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("bad cost-model JSON in " + path + ": " + e.what());
  }
  return CostModelConstants::from_json(j);
}

Workload load_one_workload(const GlobalOpts& g, const std::string& path) {
  const std::string full = resolve(g, path);
  if (!fs::exists(full)) throw std::runtime_error("workload file not found: " + full);
  auto all = load_workload(full);
  check(!all.empty(), "workload file is empty: " + full);
  if (all.size() > 1)
    std::cerr << "polaris: " << full << " holds " << all.size()
              << " workloads, using the first (" << all.front().name << ")\n";
  return all.front();
}

// Provenance tag embedded in every CSV artifact: resolved-config hash + version.
std::string provenance(const nlohmann::json& resolved_config) {
  return "cfg=" + hash_hex(fnv1a64(resolved_config.dump())) + ";" + kVersion;
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  check(out.good(), "cannot open output file " + path);
  out << body;
  check(out.good(), "write failed for " + path);
}

std::vector<int> parse_int_list(const std::string& csv, const char* what) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw UsageError(std::string(what) + ": bad integer '" + tok + "' in list '" + csv + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string(what) + ": empty list");
  return out;
}

HwConfig parse_hw(const std::string& csv) {
  const auto v = parse_int_list(csv, "--fix-hw");
  if (v.size() != 3)
    throw UsageError("--fix-hw: expected array_dim,acc_kb,spad_kb, got '" + csv + "'");
  HwConfig hw{v[0], v[1], v[2]};
  try {
    validate_hw(hw);
  } catch (const std::exception& e) {
    throw UsageError(std::string("--fix-hw: ") + e.what());
  }
  return hw;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataOpts {
  GlobalOpts g;
  std::string workload_path;
  std::string fidelity;
  int n = 0;
  std::string out_path;
};

int cmd_gen_data(const GenDataOpts& o) {
  const Workload w = load_one_workload(o.g, o.workload_path);
  const auto constants = load_constants(o.g);
  const Fidelity fid = o.fidelity == "low" ? Fidelity::kLow : Fidelity::kHigh;
  Dataset ds = collect_dataset(fid, w.layers, static_cast<std::size_t>(o.n), o.g.seed,
                               constants, o.g.jobs);
  std::string out = o.out_path.empty()
                        ? "dataset_" + o.fidelity + "_" + w.name + "_n" + std::to_string(o.n) +
                              "_s" + std::to_string(o.g.seed) + ".jsonl"
                        : o.out_path;
  out = resolve(o.g, out);
  save_dataset(ds, out);
  std::cout << "wrote " << out << " (" << ds.samples.size() << " samples, "
            << ds.redraws << " redraws)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-low

struct TrainLowCmdOpts {
  GlobalOpts g;
  std::string dataset_path;
  TrainLowOptions train;
  std::string out_path;
  std::string history_path;
};

int cmd_train_low(const TrainLowCmdOpts& o) {
  Dataset ds = load_dataset(resolve(o.g, o.dataset_path));
  if (ds.oracle_id != "low")
    throw std::runtime_error("train-low: dataset fidelity is '" + ds.oracle_id +
                             "', expected 'low' (use gen-data --fidelity low)");
  StarlightLowModel m = train_low(ds, o.g.seed, o.train);
  const double rho = evaluate_low(m, ds, ds.test_indices());

  const std::string ckpt = resolve(
      o.g, o.out_path.empty() ? "checkpoint_low_s" + std::to_string(o.g.seed) + ".json"
                              : o.out_path);
  save_starlight_low(m, ckpt);

  nlohmann::json cfg{{"cmd", "train-low"},      {"dataset_hash", m.dataset_hash},
                     {"epochs", o.train.epochs}, {"batch_size", o.train.batch_size},
                     {"lr", o.train.lr},         {"seed", o.g.seed}};
  std::string csv = "# polaris " + provenance(cfg) + "\nepoch,pred,recon,kl,total\n";
  for (std::size_t i = 0; i < m.history.total.size(); ++i) {
    csv += std::to_string(i + 1) + "," + format_double(m.history.pred[i]) + "," +
           format_double(m.history.recon[i]) + "," + format_double(m.history.kl[i]) + "," +
           format_double(m.history.total[i]) + "\n";
  }
  const std::string hist = resolve(
      o.g, o.history_path.empty() ? "history_low_s" + std::to_string(o.g.seed) + ".csv"
                                  : o.history_path);
  write_text(hist, csv);
  std::cout << "wrote " << ckpt << "\nwrote " << hist << "\ntest spearman rho: " << rho
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-high

struct TrainHighCmdOpts {
  GlobalOpts g;
  std::string dataset_path;
  std::string low_ckpt_path;
  bool from_scratch = false;
  int epochs = 1000;
  double lr_gp = 0.05;
  double lr_encoder = -1.0;  // default: lr_gp / 10
  std::string out_path;
  std::string history_path;
};

int cmd_train_high(const TrainHighCmdOpts& o) {
  Dataset ds = load_dataset(resolve(o.g, o.dataset_path));
  if (ds.oracle_id != "high")
    throw std::runtime_error("train-high: dataset fidelity is '" + ds.oracle_id +
                             "', expected 'high' (use gen-data --fidelity high)");

  StarlightModel m;
  if (o.from_scratch) {
    m = init_from_scratch(ds, o.g.seed);
  } else {
    StarlightLowModel low = load_starlight_low(resolve(o.g, o.low_ckpt_path));
    m = init_from_transfer(export_encoder(low), ds);
  }
  const double lr_enc = o.lr_encoder >= 0.0 ? o.lr_encoder : o.lr_gp / 10.0;
  const auto rho_history = train_joint(m, o.epochs, lr_enc, o.lr_gp, o.g.seed);

  nn::Matrix x_test, y_test;
  dataset_matrices(ds, ds.test_indices(), &x_test, &y_test);
  std::vector<double> targets(y_test.data(), y_test.data() + y_test.cols());
  const auto metrics = evaluate_surrogate(m, x_test, targets);

  const char* tag = o.from_scratch ? "scratch" : "high";
  const std::string ckpt = resolve(
      o.g, o.out_path.empty()
               ? "checkpoint_" + std::string(tag) + "_s" + std::to_string(o.g.seed) + ".json"
               : o.out_path);
  save_starlight(m, ckpt);

  nlohmann::json cfg{{"cmd", "train-high"},   {"dataset_hash", m.dataset_hash},
                     {"epochs", o.epochs},    {"lr_gp", o.lr_gp},
                     {"lr_encoder", lr_enc},  {"from_scratch", o.from_scratch},
                     {"seed", o.g.seed}};
  const int interval = std::max(1, o.epochs / 20);
  std::string csv = "# polaris " + provenance(cfg) + "\nepoch,rho\n";
  for (std::size_t i = 0; i < rho_history.size(); ++i) {
    const int epoch = std::min(o.epochs, static_cast<int>(i + 1) * interval);
    csv += std::to_string(epoch) + "," + format_double(rho_history[i]) + "\n";
  }
  const std::string hist = resolve(
      o.g, o.history_path.empty()
               ? "history_" + std::string(tag) + "_s" + std::to_string(o.g.seed) + ".csv"
               : o.history_path);
  write_text(hist, csv);
  std::cout << "wrote " << ckpt << "\nwrote " << hist << "\ntest spearman rho: "
            << metrics.spearman << "\ntest pearson r: " << metrics.pearson << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// run-dse / run-baseline shared reporting

std::string history_filename(const RunHistory& h) {
  return "history_" + h.method + "_" + h.workload_name + "_s" + std::to_string(h.seed) +
         ".jsonl";
}

void write_trial_summary(const GlobalOpts& g, const std::vector<RunHistory>& trials,
                         const nlohmann::json& cfg, const std::string& out_name) {
  std::vector<RunSeries> series;
  series.reserve(trials.size());
  for (const auto& h : trials) series.push_back(to_run_series(h));
  auto rows = summaries_to_csv_rows(summarize_runs(series));
  for (auto& r : rows) r.context = provenance(cfg);
  const std::string path = resolve(g, out_name);
  write_text(path, to_csv(rows));
  std::cout << "wrote " << path << "\n";
}

struct RunDseOpts {
  GlobalOpts g;
  std::string workload_path;
  std::string ckpt_path;
  BoConfig bo;
  int trials = 1;
  std::string fix_hw;
  std::string resume_path;
};

int cmd_run_dse(const RunDseOpts& o) {
  const Workload w = load_one_workload(o.g, o.workload_path);
  const auto constants = load_constants(o.g);
  if (!o.resume_path.empty() && o.trials != 1)
    throw UsageError("run-dse: --resume only works with --trials 1");
  if (!o.fix_hw.empty() && !o.resume_path.empty())
    throw UsageError("run-dse: --resume does not apply to --fix-hw runs");

  std::vector<RunHistory> trials;
  for (int t = 0; t < o.trials; ++t) {
    BoConfig cfg = o.bo;
    cfg.seed = o.g.seed + static_cast<std::uint64_t>(t);
    StarlightModel model = load_starlight(resolve(o.g, o.ckpt_path));
    RunHistory h;
    if (!o.fix_hw.empty()) {
      cfg.fix_hw = parse_hw(o.fix_hw);
      h = run_sw_dse(cfg, w, model, constants);
    } else if (!o.resume_path.empty()) {
      const RunHistory prior = load_history(resolve(o.g, o.resume_path));
      h = run_codesign(cfg, w, model, constants, &prior);
    } else {
      h = run_codesign(cfg, w, model, constants);
    }
    const std::string path = resolve(o.g, history_filename(h));
    save_history(path, h);
    std::cout << "wrote " << path << " (final EDP " << h.records.back().cumulative_min_edp
              << ", " << h.n_high_evals << " high evals)\n";
    trials.push_back(std::move(h));
  }

  nlohmann::json cfg_json{{"cmd", "run-dse"},
                          {"workload", w.name},
                          {"bo", trials.front().config.to_json()},
                          {"trials", o.trials},
                          {"seed", o.g.seed}};
  write_trial_summary(o.g, trials,
                      cfg_json,
                      "summary_" + trials.front().method + "_" + w.name + "_s" +
                          std::to_string(o.g.seed) + ".csv");
  return 0;
}

struct RunBaselineOpts {
  GlobalOpts g;
  std::string workload_path;
  std::string kind;
  std::string ckpt_path;
  int samples_per_layer = 48000;
  BoConfig bo;
  int trials = 1;
};

int cmd_run_baseline(const RunBaselineOpts& o) {
  const BaselineKind kind = baseline_kind_from_string(o.kind);
  if (kind != BaselineKind::kOfflineRandom && kind != BaselineKind::kVanillaBo)
    throw UsageError("run-baseline: kind '" + o.kind +
                     "' is a surrogate ablation; use the ablate subcommand");
  const Workload w = load_one_workload(o.g, o.workload_path);
  const auto constants = load_constants(o.g);

  std::vector<RunHistory> trials;
  for (int t = 0; t < o.trials; ++t) {
    const std::uint64_t seed = o.g.seed + static_cast<std::uint64_t>(t);
    RunHistory h;
    if (kind == BaselineKind::kOfflineRandom) {
      if (o.ckpt_path.empty())
        throw UsageError("run-baseline: offline_random needs --checkpoint (trained surrogate)");
      StarlightModel model = load_starlight(resolve(o.g, o.ckpt_path));
      h = offline_random(model, w, o.samples_per_layer, seed, constants);
    } else {
      BoConfig cfg = o.bo;
      cfg.seed = seed;
      VanillaGp gp_model;
      h = vanilla_bo(cfg, w, gp_model, constants);
    }
    const std::string path = resolve(o.g, history_filename(h));
    save_history(path, h);
    std::cout << "wrote " << path << " (final EDP " << h.records.back().cumulative_min_edp
              << ", " << h.n_high_evals << " high evals)\n";
    trials.push_back(std::move(h));
  }

  nlohmann::json cfg_json{{"cmd", "run-baseline"},
                          {"kind", o.kind},
                          {"workload", w.name},
                          {"samples_per_layer", o.samples_per_layer},
                          {"bo", o.bo.to_json()},
                          {"trials", o.trials},
                          {"seed", o.g.seed}};
  write_trial_summary(o.g, trials, cfg_json,
                      "summary_" + o.kind + "_" + w.name + "_s" + std::to_string(o.g.seed) +
                          ".csv");
  return 0;
}

// ---------------------------------------------------------------------------
// ablate

struct AblateOpts {
  GlobalOpts g;
  std::string low_ckpt_path;
  std::string dataset_path;
  std::string sizes = "8,32,128";
  std::string seeds = "1,2,3";
  AblationOptions ab;
  std::string out_path;
};

int cmd_ablate(const AblateOpts& o) {
  StarlightLowModel low = load_starlight_low(resolve(o.g, o.low_ckpt_path));
  Dataset ds = load_dataset(resolve(o.g, o.dataset_path));
  if (ds.oracle_id != "high")
    throw std::runtime_error("ablate: dataset fidelity is '" + ds.oracle_id +
                             "', expected 'high'");
  std::vector<std::int64_t> sizes;
  for (int v : parse_int_list(o.sizes, "--sizes")) {
    if (v < 2) throw UsageError("--sizes: sizes must be >= 2");
    sizes.push_back(v);
  }
  std::vector<std::uint64_t> seeds;
  for (int v : parse_int_list(o.seeds, "--seeds"))
    seeds.push_back(static_cast<std::uint64_t>(v));

  const auto rows = ablation_suite(low, ds, sizes, seeds, o.ab);

  nlohmann::json cfg{{"cmd", "ablate"},   {"sizes", o.sizes},
                     {"seeds", o.seeds},  {"joint_epochs", o.ab.joint_epochs},
                     {"nn_epochs", o.ab.nn_epochs}, {"finetune_epochs", o.ab.finetune_epochs}};
  std::vector<CsvRow> csv_rows;
  for (const auto& r : rows) {
    const std::string name = r.variant + "@" + std::to_string(r.train_size);
    csv_rows.push_back(CsvRow{"rho_mean", name, r.mean_rho, static_cast<int>(r.rhos.size()), 0,
                        provenance(cfg)});
    csv_rows.push_back(CsvRow{"rho_std", name, r.std_rho, static_cast<int>(r.rhos.size()), 0,
                        provenance(cfg)});
  }
  const std::string path = resolve(o.g, o.out_path.empty() ? "ablation.csv" : o.out_path);
  write_text(path, to_csv(csv_rows));

  std::cout << "variant        size   mean_rho   std_rho\n";
  for (const auto& r : rows) {
    std::ostringstream line;
    line.setf(std::ios::fixed);
    line.precision(4);
    line.width(0);
    line << r.variant;
    for (std::size_t i = r.variant.size(); i < 15; ++i) line << ' ';
    line << r.train_size << "   " << r.mean_rho << "   " << r.std_rho;
    std::cout << line.str() << "\n";
  }
  std::cout << "wrote " << path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportOpts {
  GlobalOpts g;
  std::vector<std::string> inputs;
  std::string in_dir;
  std::string compare;
  std::string out_path;
};

int cmd_report(const ReportOpts& o) {
  std::vector<std::string> paths;
  for (const auto& p : o.inputs) paths.push_back(resolve(o.g, p));
  if (!o.in_dir.empty()) {
    const std::string dir = resolve(o.g, o.in_dir);
    if (!fs::is_directory(dir)) throw std::runtime_error("report: not a directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (name.rfind("history_", 0) == 0 && e.path().extension() == ".jsonl")
        paths.push_back(e.path().string());
    }
    std::sort(paths.begin(), paths.end());
  }
  if (paths.empty()) throw UsageError("report: no history files (pass --inputs or --in-dir)");

  std::vector<std::string> methods;
  if (!o.compare.empty()) {
    std::stringstream ss(o.compare);
    std::string tok;
    while (std::getline(ss, tok, ',')) methods.push_back(tok);
  }

  std::vector<RunSeries> series;
  for (const auto& p : paths) {
    RunSeries s = to_run_series(load_history(p));
    if (!methods.empty() &&
        std::find(methods.begin(), methods.end(), s.method) == methods.end())
      continue;
    series.push_back(std::move(s));
  }
  if (series.empty())
    throw std::runtime_error("report: no runs left after --compare filter '" + o.compare +
                             "'");

  const auto summaries = summarize_runs(series);
  std::cout << "workload        method           n   median_edp      min_edp      max_edp\n";
  for (const auto& s : summaries) {
    std::ostringstream line;
    line << s.workload;
    for (std::size_t i = s.workload.size(); i < 16; ++i) line << ' ';
    line << s.method;
    for (std::size_t i = s.method.size(); i < 17; ++i) line << ' ';
    line.setf(std::ios::scientific);
    line.precision(4);
    line << s.n_runs << "   " << s.median_edp << "   " << s.min_edp << "   " << s.max_edp;
    std::cout << line.str() << "\n";
  }

  nlohmann::json cfg{{"cmd", "report"}, {"compare", o.compare}, {"n_inputs", paths.size()}};
  auto rows = summaries_to_csv_rows(summaries);
  for (auto& r : rows) r.context = provenance(cfg);
  const std::string path = resolve(o.g, o.out_path.empty() ? "report.csv" : o.out_path);
  write_text(path, to_csv(rows));
  std::cout << "wrote " << path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// make-paper-figures

struct FiguresOpts {
  GlobalOpts g;
  std::string scale = "desk";
  std::string workload_dir = "workloads";
};

int cmd_make_paper_figures(const FiguresOpts& o) {
  const bool smoke = o.scale == "smoke";
  fs::create_directories(o.g.out_dir);

  const std::vector<std::string> names =
      smoke ? std::vector<std::string>{"micro"}
            : std::vector<std::string>{"resnet_like", "unet_like", "bert_like",
                                       "retinanet_like"};
  const int low_n = smoke ? 128 : 4096;
  const int high_n = smoke ? 48 : 320;
  TrainLowOptions low_opts;
  low_opts.epochs = smoke ? 40 : 1000;
  low_opts.batch_size = smoke ? 64 : 256;
  const int joint_epochs = smoke ? 80 : 1000;
  BoConfig bo;
  bo.n_outer = smoke ? 2 : 4;
  bo.m_inner = smoke ? 2 : 4;
  bo.sw_pool_size = smoke ? 128 : 2000;
  bo.hw_probe_count = smoke ? 4 : 16;
  bo.refit_steps = smoke ? 3 : 10;
  const int offline_samples = smoke ? 500 : 48000;
  const int n_trials = smoke ? 1 : 3;

  std::vector<std::string> history_files;
  for (const auto& name : names) {
    const Workload w =
        load_one_workload(o.g, (fs::path(o.workload_dir) / (name + ".json")).string());
    std::cout << "=== " << name << "\n";

    GenDataOpts gd;
    gd.g = o.g;
    gd.workload_path = (fs::path(o.workload_dir) / (name + ".json")).string();
    gd.fidelity = "low";
    gd.n = low_n;
    gd.out_path = "dataset_low_" + name + ".jsonl";
    cmd_gen_data(gd);
    gd.fidelity = "high";
    gd.n = high_n;
    gd.g.seed = o.g.seed + 1;
    gd.out_path = "dataset_high_" + name + ".jsonl";
    cmd_gen_data(gd);

    TrainLowCmdOpts tl;
    tl.g = o.g;
    tl.dataset_path = "dataset_low_" + name + ".jsonl";
    tl.train = low_opts;
    tl.out_path = "checkpoint_low_" + name + ".json";
    tl.history_path = "history_low_" + name + ".csv";
    cmd_train_low(tl);

    TrainHighCmdOpts th;
    th.g = o.g;
    th.dataset_path = "dataset_high_" + name + ".jsonl";
    th.low_ckpt_path = "checkpoint_low_" + name + ".json";
    th.epochs = joint_epochs;
    th.out_path = "checkpoint_high_" + name + ".json";
    th.history_path = "history_rho_" + name + ".csv";
    cmd_train_high(th);

    RunDseOpts rd;
    rd.g = o.g;
    rd.workload_path = gd.workload_path;
    rd.ckpt_path = "checkpoint_high_" + name + ".json";
    rd.bo = bo;
    rd.trials = n_trials;
    cmd_run_dse(rd);

    RunBaselineOpts rb;
    rb.g = o.g;
    rb.workload_path = gd.workload_path;
    rb.kind = "offline_random";
    rb.ckpt_path = "checkpoint_high_" + name + ".json";
    rb.samples_per_layer = offline_samples;
    rb.trials = n_trials;
    cmd_run_baseline(rb);

    rb.kind = "vanilla_bo";
    rb.bo = bo;
    cmd_run_baseline(rb);
  }

  ReportOpts rp;
  rp.g = o.g;
  rp.in_dir = ".";
  rp.out_path = "report.csv";
  cmd_report(rp);
  std::cout << "pipeline complete (" << o.scale << " scale)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"polaris: multi-fidelity design-space exploration for DL accelerators"};
  app.set_version_flag("--version", std::string("polaris ") + kVersion);
  app.require_subcommand(1);

  GenDataOpts gd;
  auto* c_gd = app.add_subcommand("gen-data", "Sample a dataset from an oracle");
  add_global_flags(c_gd, &gd.g);
  c_gd->add_option("--workload", gd.workload_path, "Workload JSON file")->required();
  c_gd->add_option("--fidelity", gd.fidelity, "Oracle fidelity")
      ->required()
      ->check(CLI::IsMember({"low", "high"}));
  c_gd->add_option("--n", gd.n, "Sample count")->required()->check(CLI::PositiveNumber);
  c_gd->add_option("--out", gd.out_path, "Output dataset file (JSONL)");

  TrainLowCmdOpts tl;
  auto* c_tl = app.add_subcommand("train-low", "Train the low-fidelity VAE + predictor");
  add_global_flags(c_tl, &tl.g);
  c_tl->add_option("--dataset", tl.dataset_path, "Low-fidelity dataset file")->required();
  c_tl->add_option("--epochs", tl.train.epochs)->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_tl->add_option("--batch-size", tl.train.batch_size)->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_tl->add_option("--lr", tl.train.lr)->capture_default_str();
  c_tl->add_option("--lambda-pred", tl.train.lambda_pred)->capture_default_str();
  c_tl->add_option("--lambda-recon", tl.train.lambda_recon)->capture_default_str();
  c_tl->add_option("--lambda-kl", tl.train.lambda_kl)->capture_default_str();
  c_tl->add_option("--out", tl.out_path, "Checkpoint file");
  c_tl->add_option("--history", tl.history_path, "Loss-history CSV");

  TrainHighCmdOpts th;
  auto* c_th = app.add_subcommand("train-high", "Fine-tune the DKL surrogate jointly");
  add_global_flags(c_th, &th.g);
  c_th->add_option("--dataset", th.dataset_path, "High-fidelity dataset file")->required();
  c_th->add_option("--low-checkpoint", th.low_ckpt_path,
                   "Transfer source (train-low checkpoint)");
  c_th->add_flag("--from-scratch", th.from_scratch,
                 "Random encoder init instead of transfer");
  c_th->add_option("--epochs", th.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  c_th->add_option("--lr-gp", th.lr_gp)->capture_default_str();
  c_th->add_option("--lr-encoder", th.lr_encoder, "Encoder rate (default lr-gp/10)");
  c_th->add_option("--out", th.out_path, "Checkpoint file");
  c_th->add_option("--history", th.history_path, "Rho-history CSV");

  RunDseOpts rd;
  auto* c_rd = app.add_subcommand("run-dse", "Run the two-level BO co-design loop");
  add_global_flags(c_rd, &rd.g);
  c_rd->add_option("--workload", rd.workload_path)->required();
  c_rd->add_option("--checkpoint", rd.ckpt_path, "Trained surrogate (train-high output)")
      ->required();
  c_rd->add_option("--n-outer", rd.bo.n_outer)->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_rd->add_option("--m-inner", rd.bo.m_inner)->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_rd->add_option("--pool", rd.bo.sw_pool_size, "Software candidate pool per iteration")
      ->check(CLI::PositiveNumber)->capture_default_str();
  c_rd->add_option("--beta", rd.bo.beta, "UCB exploration weight")->capture_default_str();
  c_rd->add_option("--probe", rd.bo.hw_probe_count, "Mappings probed per HW candidate")
      ->check(CLI::PositiveNumber)->capture_default_str();
  c_rd->add_option("--refit", rd.bo.refit_steps, "Surrogate refit steps per observation")
      ->capture_default_str();
  c_rd->add_option("--trials", rd.trials, "Independent runs (seeds seed..seed+trials-1)")
      ->check(CLI::PositiveNumber)->capture_default_str();
  c_rd->add_option("--fix-hw", rd.fix_hw, "array,acc_kb,spad_kb: software-only DSE");
  c_rd->add_option("--sw-iters", rd.bo.m_inner_fixed_hw,
                   "Per-layer iterations with --fix-hw")
      ->check(CLI::PositiveNumber)->capture_default_str();
  c_rd->add_option("--resume", rd.resume_path, "Continue from a saved history");

  RunBaselineOpts rb;
  auto* c_rb = app.add_subcommand("run-baseline", "Run a search baseline");
  add_global_flags(c_rb, &rb.g);
  c_rb->add_option("--workload", rb.workload_path)->required();
  c_rb->add_option("--kind", rb.kind, "offline_random or vanilla_bo")->required();
  c_rb->add_option("--checkpoint", rb.ckpt_path, "Trained surrogate (offline_random)");
  c_rb->add_option("--samples-per-layer", rb.samples_per_layer)
      ->check(CLI::PositiveNumber)->capture_default_str();
  c_rb->add_option("--n-outer", rb.bo.n_outer)->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_rb->add_option("--m-inner", rb.bo.m_inner)->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_rb->add_option("--pool", rb.bo.sw_pool_size)->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_rb->add_option("--beta", rb.bo.beta)->capture_default_str();
  c_rb->add_option("--probe", rb.bo.hw_probe_count)->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_rb->add_option("--refit", rb.bo.refit_steps)->capture_default_str();
  c_rb->add_option("--trials", rb.trials)->check(CLI::PositiveNumber)->capture_default_str();

  AblateOpts ab;
  auto* c_ab = app.add_subcommand("ablate", "Transfer-learning ablation grid");
  add_global_flags(c_ab, &ab.g);
  c_ab->add_option("--low-checkpoint", ab.low_ckpt_path)->required();
  c_ab->add_option("--dataset", ab.dataset_path, "High-fidelity dataset")->required();
  c_ab->add_option("--sizes", ab.sizes, "Training sizes, comma separated")
      ->capture_default_str();
  c_ab->add_option("--seeds", ab.seeds, "Trial seeds, comma separated")
      ->capture_default_str();
  c_ab->add_option("--joint-epochs", ab.ab.joint_epochs)->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_ab->add_option("--nn-epochs", ab.ab.nn_epochs)->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_ab->add_option("--finetune-epochs", ab.ab.finetune_epochs)->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_ab->add_option("--out", ab.out_path, "Ablation CSV");

  ReportOpts rp;
  auto* c_rp = app.add_subcommand("report", "Summarize run histories");
  add_global_flags(c_rp, &rp.g);
  c_rp->add_option("--inputs", rp.inputs, "History files");
  c_rp->add_option("--in-dir", rp.in_dir, "Directory scanned for history_*.jsonl");
  c_rp->add_option("--compare", rp.compare, "Comma-separated method filter");
  c_rp->add_option("--out", rp.out_path, "Report CSV");

  FiguresOpts fo;
  auto* c_fo = app.add_subcommand("make-paper-figures",
                                  "Full pipeline: data, training, DSE, baselines, report");
  add_global_flags(c_fo, &fo.g);
  c_fo->add_option("--scale", fo.scale)->check(CLI::IsMember({"smoke", "desk"}))
      ->capture_default_str();
  c_fo->add_option("--workload-dir", fo.workload_dir, "Directory with workload JSON files")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(c_gd)) return cmd_gen_data(gd);
    if (app.got_subcommand(c_tl)) return cmd_train_low(tl);
    if (app.got_subcommand(c_th)) {
      if (!th.from_scratch && th.low_ckpt_path.empty())
        throw UsageError(
            "train-high: transfer source required (pass --low-checkpoint or --from-scratch)");
      return cmd_train_high(th);
    }
    if (app.got_subcommand(c_rd)) return cmd_run_dse(rd);
    if (app.got_subcommand(c_rb)) return cmd_run_baseline(rb);
    if (app.got_subcommand(c_ab)) return cmd_ablate(ab);
    if (app.got_subcommand(c_rp)) return cmd_report(rp);
    if (app.got_subcommand(c_fo)) return cmd_make_paper_figures(fo);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
