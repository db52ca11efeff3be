// klmm command line: simulate family-structured GWAS cohorts, run
// mixed-model and univariate association scans, and report p-value
// calibration among non-causal SNPs.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "klmm/calibrate.hpp"
#include "klmm/errors.hpp"
#include "klmm/io.hpp"
#include "klmm/lmm.hpp"
#include "klmm/simulate.hpp"
#include "klmm/spectral_kernel.hpp"
#include "klmm/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCalibrationFailed = 1;
constexpr int kExitError = 2;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// One manifest per output directory; every run appends an entry that lists
// all files it read and wrote.
struct ManifestRun {
  std::string command;
  std::string started_at;
  std::uint64_t seed = 0;
  json config = json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<std::pair<std::string, std::string>> stages;

  void stage(const std::string& name, const std::string& status = "ok") {
    stages.emplace_back(name, status);
  }
};

void append_manifest(const fs::path& dir, const ManifestRun& run) {
  const fs::path path = dir / klmm::files::manifest;
  json doc;
  if (fs::exists(path)) {
    std::ifstream in(path);
    try {
      in >> doc;
    } catch (const json::exception&) {
      doc = json::object();
    }
  }
  if (!doc.contains("runs")) {
    doc = json{{"tool", "klmm"}, {"version", klmm::kVersion}, {"runs", json::array()}};
  }
  json stages = json::array();
  for (const auto& [name, status] : run.stages) {
    stages.push_back(json{{"name", name}, {"status", status}});
  }
  doc["runs"].push_back(json{{"command", run.command},
                             {"started_at", run.started_at},
                             {"finished_at", utc_now()},
                             {"seed", run.seed},
                             {"config", run.config},
                             {"inputs", run.inputs},
                             {"outputs", run.outputs},
                             {"stages", stages}});
  std::ofstream out(path);
  if (!out) throw klmm::IoError("cannot write manifest: " + path.string());
  out << doc.dump(2) << '\n';
}

struct GridSpec {
  std::vector<double> family_fractions;
  std::vector<Eigen::Index> n_causal;
  std::vector<double> heritability;
  int replicates = 3;
};

struct ConfigFile {
  klmm::SimConfig base;
  std::optional<GridSpec> grid;
};

ConfigFile load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw klmm::IoError("cannot open config file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw klmm::ConfigError("malformed config JSON in " + path.string() + ": " +
                            e.what());
  }
  ConfigFile cf;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("n_individuals", cf.base.n_individuals);
    get("n_snps", cf.base.n_snps);
    get("family_fraction", cf.base.family_fraction);
    get("offspring_per_pair", cf.base.offspring_per_pair);
    get("maf_low", cf.base.maf_low);
    get("maf_high", cf.base.maf_high);
    get("n_causal", cf.base.n_causal);
    get("heritability", cf.base.heritability);
    get("hidden_enabled", cf.base.hidden_enabled);
    get("n_hidden", cf.base.n_hidden);
    get("hidden_strength", cf.base.hidden_strength);
    get("seed", cf.base.seed);
    if (j.contains("grid")) {
      GridSpec gs;
      const json& g = j.at("grid");
      gs.family_fractions = g.at("family_fraction").get<std::vector<double>>();
      gs.n_causal = g.at("n_causal").get<std::vector<Eigen::Index>>();
      gs.heritability = g.at("heritability").get<std::vector<double>>();
      if (g.contains("replicates")) gs.replicates = g.at("replicates").get<int>();
      cf.grid = std::move(gs);
    }
  } catch (const json::exception& e) {
    throw klmm::ConfigError("bad config value in " + path.string() + ": " +
                            e.what());
  }
  return cf;
}

json config_snapshot(const klmm::SimConfig& c) {
  return json{{"n_individuals", c.n_individuals},
              {"n_snps", c.n_snps},
              {"family_fraction", c.family_fraction},
              {"offspring_per_pair", c.offspring_per_pair},
              {"maf_low", c.maf_low},
              {"maf_high", c.maf_high},
              {"n_causal", c.n_causal},
              {"heritability", c.heritability},
              {"hidden_enabled", c.hidden_enabled},
              {"n_hidden", c.n_hidden},
              {"hidden_strength", c.hidden_strength},
              {"seed", c.seed}};
}

std::vector<std::string> dataset_files(const klmm::SimulatedCohort& cohort,
                                       bool text) {
  std::vector<std::string> out;
  out.push_back(text ? klmm::files::genotypes_text : klmm::files::genotypes_binary);
  out.push_back(klmm::files::phenotype);
  out.push_back(klmm::files::metadata);
  if (cohort.hidden_genotypes) {
    out.push_back(text ? klmm::files::hidden_text : klmm::files::hidden_binary);
  }
  return out;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string config_path;
  std::string out_dir;
  bool grid_mode = false;
  int replicates = 0;  // 0 = from config file
  bool text = false;
  std::optional<std::uint64_t> seed;
  std::optional<Eigen::Index> n_individuals, n_snps, n_causal;
  std::optional<double> family_fraction, heritability;
  std::optional<bool> hidden;
};

int cmd_simulate(const SimulateArgs& args) {
  ConfigFile cf = load_config_file(args.config_path);
  if (args.seed) cf.base.seed = *args.seed;
  if (args.n_individuals) cf.base.n_individuals = *args.n_individuals;
  if (args.n_snps) cf.base.n_snps = *args.n_snps;
  if (args.n_causal) cf.base.n_causal = *args.n_causal;
  if (args.family_fraction) cf.base.family_fraction = *args.family_fraction;
  if (args.heritability) cf.base.heritability = *args.heritability;
  if (args.hidden) cf.base.hidden_enabled = *args.hidden;

  const fs::path out = args.out_dir;
  fs::create_directories(out);
  const auto format = args.text ? klmm::GenotypeFileFormat::text
                                : klmm::GenotypeFileFormat::binary;

  ManifestRun run;
  run.command = "simulate";
  run.started_at = utc_now();
  run.seed = cf.base.seed;
  run.config = config_snapshot(cf.base);
  run.inputs.push_back(args.config_path);

  if (args.grid_mode) {
    if (!cf.grid) {
      throw klmm::ConfigError("--grid requires a \"grid\" section in the config file");
    }
    GridSpec gs = *cf.grid;
    if (args.replicates > 0) gs.replicates = args.replicates;
    const std::vector<klmm::SimConfig> configs =
        klmm::generate_grid(cf.base, gs.family_fractions, gs.n_causal,
                            gs.heritability, gs.replicates);
    run.config["grid"] = json{{"family_fraction", gs.family_fractions},
                              {"n_causal", gs.n_causal},
                              {"heritability", gs.heritability},
                              {"replicates", gs.replicates}};
    char name[32];
    for (std::size_t i = 0; i < configs.size(); ++i) {
      std::snprintf(name, sizeof(name), "ds_%04zu", i);
      const fs::path ds_dir = out / name;
      const klmm::SimulatedCohort cohort = klmm::generate_cohort(configs[i]);
      klmm::write_cohort(ds_dir, cohort, format);
      for (const auto& f : dataset_files(cohort, args.text)) {
        run.outputs.push_back(std::string(name) + "/" + f);
      }
    }
    run.stage("grid:" + std::to_string(configs.size()) + " datasets");
    std::cout << "simulated " << configs.size() << " datasets under " << out
              << "\n";
  } else {
    const klmm::SimulatedCohort cohort = klmm::generate_cohort(cf.base);
    klmm::write_cohort(out, cohort, format);
    for (const auto& f : dataset_files(cohort, args.text)) run.outputs.push_back(f);
    run.stage("single dataset");
    std::cout << "simulated dataset (N=" << cf.base.n_individuals
              << ", M=" << cf.base.n_snps << ") under " << out << "\n";
  }
  run.outputs.push_back(klmm::files::manifest);
  append_manifest(out, run);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// scan

struct ScanArgs {
  std::string dataset_dir;
  std::string out_dir;  // empty = dataset dir
  std::string method = "both";
  std::string exclusion = "woodbury";
  std::string uni_stat = "lrt";
  bool refit_per_snp = false;
  int grid_points = 100;
  int threads = 1;
  std::optional<double> fixed_delta;
};

int cmd_scan(const ScanArgs& args) {
  const fs::path ds_dir = args.dataset_dir;
  const fs::path out = args.out_dir.empty() ? ds_dir : fs::path(args.out_dir);
  fs::create_directories(out);

  ManifestRun run;
  run.command = "scan";
  run.started_at = utc_now();
  run.config = json{{"dataset", ds_dir.string()},
                    {"method", args.method},
                    {"exclusion", args.exclusion},
                    {"uni_stat", args.uni_stat},
                    {"refit_per_snp", args.refit_per_snp},
                    {"grid_points", args.grid_points},
                    {"threads", args.threads}};
  if (args.fixed_delta) run.config["fixed_delta"] = *args.fixed_delta;
  run.inputs.push_back((ds_dir / klmm::files::metadata).string());

  const klmm::LoadedDataset ds = klmm::read_cohort(ds_dir);
  run.seed = ds.config.seed;
  const klmm::GenotypeMatrix genotypes = klmm::standardize(ds.genotypes);
  run.stage("load+standardize");

  const bool want_lmm = args.method == "lmm" || args.method == "both";
  const bool want_uni = args.method == "univariate" || args.method == "both";
  if (!want_lmm && !want_uni) {
    throw klmm::ConfigError("unknown method: " + args.method);
  }

  if (want_lmm) {
    const klmm::SpectralKernel kernel = klmm::build_rrm(genotypes);
    run.stage("kernel");
    double delta;
    if (args.fixed_delta) {
      delta = *args.fixed_delta;
      run.config["delta"] = delta;
    } else {
      const klmm::LmmFit fit = klmm::fit_variance_ratio(
          ds.phenotype, kernel, klmm::default_delta_grid(args.grid_points));
      delta = fit.delta;
      run.config["delta"] = delta;
      run.config["sigma_g2"] = fit.sigma_g2;
      run.config["sigma_e2"] = fit.sigma_e2;
      run.stage("variance ratio fit");
    }
    klmm::ScanOptions opt;
    if (args.exclusion == "woodbury") {
      opt.exclusion = klmm::Exclusion::woodbury;
    } else if (args.exclusion == "exact") {
      opt.exclusion = klmm::Exclusion::exact;
    } else if (args.exclusion == "none") {
      opt.exclusion = klmm::Exclusion::none;
    } else {
      throw klmm::ConfigError("unknown exclusion mode: " + args.exclusion);
    }
    opt.refit_per_snp = args.refit_per_snp;
    opt.grid_points = args.grid_points;
    opt.threads = args.threads;
    const klmm::AssociationScan scan =
        klmm::scan_lmm(ds.phenotype, genotypes, kernel, delta, opt);
    const fs::path table = out / klmm::files::scan_table("lmm");
    klmm::write_association_table(table, scan);
    run.outputs.push_back(table.string());
    run.stage("lmm scan");
  }
  if (want_uni) {
    const klmm::UnivariateStat stat = args.uni_stat == "ftest"
                                          ? klmm::UnivariateStat::ftest
                                          : klmm::UnivariateStat::lrt;
    const klmm::AssociationScan scan =
        klmm::scan_univariate(ds.phenotype, genotypes, stat, args.threads);
    const fs::path table = out / klmm::files::scan_table("univariate");
    klmm::write_association_table(table, scan);
    run.outputs.push_back(table.string());
    run.stage("univariate scan");
  }
  run.outputs.push_back((out / klmm::files::manifest).string());
  append_manifest(out, run);
  std::cout << "scan complete: " << out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateArgs {
  std::vector<std::string> dataset_dirs;
  std::string out_dir = "calibration";
  int alpha_points = 50;
  double level = 0.95;
  double min_inside_fraction = 0.90;
  double min_ks_p = 1e-3;
};

int cmd_calibrate(const CalibrateArgs& args) {
  ManifestRun run;
  run.command = "calibrate";
  run.started_at = utc_now();
  run.config = json{{"alpha_points", args.alpha_points},
                    {"level", args.level},
                    {"min_inside_fraction", args.min_inside_fraction},
                    {"min_ks_p", args.min_ks_p},
                    {"datasets", args.dataset_dirs}};

  std::vector<klmm::DatasetPvals> pooled;
  for (const std::string& dir : args.dataset_dirs) {
    const fs::path ds = dir;
    const std::vector<Eigen::Index> causal = klmm::read_causal_indices(ds);
    const std::set<Eigen::Index> causal_set(causal.begin(), causal.end());
    run.inputs.push_back((ds / klmm::files::metadata).string());
    bool any_table = false;
    for (const char* method : {"lmm", "univariate"}) {
      const fs::path table = ds / klmm::files::scan_table(method);
      if (!fs::exists(table)) continue;
      any_table = true;
      run.inputs.push_back(table.string());
      const klmm::AssociationScan scan = klmm::read_association_table(table);
      klmm::DatasetPvals dp;
      dp.method = scan.method;
      for (const auto& r : scan.results) {
        if (causal_set.count(r.snp_index)) continue;
        if (r.status == klmm::ScanStatus::ok) {
          dp.pvals.push_back(r.p_value);
        } else {
          ++dp.n_missing;
        }
      }
      pooled.push_back(std::move(dp));
    }
    if (!any_table) {
      throw klmm::IoError("no scan tables found in " + ds.string() +
                          " (run `klmm scan` first)");
    }
  }

  const std::vector<double> grid = klmm::default_alpha_grid(args.alpha_points);
  const klmm::CalibrationReport report =
      klmm::build_report(pooled, grid, args.level, args.min_inside_fraction,
                         args.min_ks_p);

  const fs::path out = args.out_dir;
  fs::create_directories(out);
  klmm::write_report_csv(out / klmm::files::report_csv, report);
  klmm::write_report_summary(out / klmm::files::report_summary, report);
  run.outputs.push_back((out / klmm::files::report_csv).string());
  run.outputs.push_back((out / klmm::files::report_summary).string());
  run.outputs.push_back((out / klmm::files::manifest).string());
  run.stage("pooled " + std::to_string(pooled.size()) + " scan tables");
  append_manifest(out, run);

  for (const auto& m : report.methods) {
    std::printf("%-12s n_tests=%zu missing=%zu inside_band=%.3f ks_p=%.4g %s\n",
                m.method.c_str(), m.n_tests, m.n_missing,
                m.inside_band_fraction, m.ks_p, m.pass ? "PASS" : "FAIL");
  }
  const klmm::MethodCalibration* lmm = report.find("lmm");
  if (lmm == nullptr) {
    std::cerr << "no lmm results to judge\n";
    return kExitCalibrationFailed;
  }
  return lmm->pass ? kExitOk : kExitCalibrationFailed;
}

// ---------------------------------------------------------------------------
// report

int cmd_report(const std::string& summary_path) {
  const klmm::CalibrationReport report =
      klmm::read_report_summary(summary_path);
  std::printf("calibration report (%zu alpha points, level %.2f)\n",
              report.alpha_grid.size(), report.level);
  std::printf("thresholds: inside_band >= %.2f, ks_p > %g\n",
              report.min_inside_fraction, report.min_ks_p);
  for (const auto& m : report.methods) {
    std::printf("\nmethod %s\n", m.method.c_str());
    std::printf("  n_tests   %zu (missing %zu)\n", m.n_tests, m.n_missing);
    std::printf("  ks        D=%.5f  p=%.4g  [%s]\n", m.ks_statistic, m.ks_p,
                m.pass_ks ? "pass" : "fail");
    std::printf("  in band   %.1f%%  [%s]\n", 100.0 * m.inside_band_fraction,
                m.pass_inside ? "pass" : "fail");
    std::printf("  overall   %s\n", m.pass ? "PASS" : "FAIL");
  }
  std::printf("\n%-12s %-12s %-12s %-12s %-12s\n", "alpha", "fpr_lmm",
              "fpr_univar", "ci_low", "ci_high");
  const klmm::MethodCalibration* lmm = report.find("lmm");
  const klmm::MethodCalibration* uni = report.find("univariate");
  const klmm::MethodCalibration* band =
      lmm ? lmm : (report.methods.empty() ? nullptr : &report.methods.front());
  for (std::size_t i = 0; i < report.alpha_grid.size(); ++i) {
    auto cell = [&](const klmm::MethodCalibration* m, const std::vector<double>*
                                                          v) {
      return (m != nullptr && v != nullptr) ? (*v)[i]
                                            : std::numeric_limits<double>::quiet_NaN();
    };
    std::printf("%-12.5g %-12.5g %-12.5g %-12.5g %-12.5g\n",
                report.alpha_grid[i], cell(lmm, lmm ? &lmm->fpr : nullptr),
                cell(uni, uni ? &uni->fpr : nullptr),
                cell(band, band ? &band->ci_low : nullptr),
                cell(band, band ? &band->ci_high : nullptr));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"linear mixed model GWAS with family-structured synthetic cohorts"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(klmm::kVersion));

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "generate synthetic cohorts from a config file");
  simulate->add_option("--config", sim.config_path, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);
  simulate->add_option("--out", sim.out_dir, "output directory")->required();
  simulate->add_flag("--grid", sim.grid_mode,
                     "expand the config's grid section into one dataset per cell");
  simulate->add_option("--replicates", sim.replicates,
                       "override grid replicates");
  simulate->add_flag("--text-genotypes", sim.text,
                     "write the plain-text genotype container");
  std::uint64_t sim_seed = 0;
  CLI::Option* sim_seed_opt =
      simulate->add_option("--seed", sim_seed, "override the config seed");
  Eigen::Index sim_n = 0, sim_m = 0, sim_c = 0;
  double sim_ff = 0.0, sim_h2 = 0.0;
  CLI::Option* sim_n_opt = simulate->add_option("--n-individuals", sim_n);
  CLI::Option* sim_m_opt = simulate->add_option("--n-snps", sim_m);
  CLI::Option* sim_c_opt = simulate->add_option("--n-causal", sim_c);
  CLI::Option* sim_ff_opt = simulate->add_option("--family-fraction", sim_ff);
  CLI::Option* sim_h2_opt = simulate->add_option("--heritability", sim_h2);
  bool sim_hidden = false;
  CLI::Option* sim_hidden_opt = simulate->add_flag(
      "--hidden,!--no-hidden", sim_hidden, "enable or disable hidden causal SNPs");

  ScanArgs scan;
  CLI::App* scan_cmd =
      app.add_subcommand("scan", "run association scans on a dataset");
  scan_cmd->add_option("--dataset", scan.dataset_dir, "dataset directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  scan_cmd->add_option("--out", scan.out_dir,
                       "output directory (default: dataset directory)");
  scan_cmd->add_option("--method", scan.method, "lmm | univariate | both")
      ->check(CLI::IsMember({"lmm", "univariate", "both"}));
  scan_cmd->add_option("--exclusion", scan.exclusion,
                       "test-SNP kernel exclusion: woodbury | exact | none")
      ->check(CLI::IsMember({"woodbury", "exact", "none"}));
  scan_cmd->add_option("--uni-stat", scan.uni_stat,
                       "univariate statistic: lrt | ftest")
      ->check(CLI::IsMember({"lrt", "ftest"}));
  scan_cmd->add_flag("--refit-per-snp", scan.refit_per_snp,
                     "refit the variance ratio for every test SNP");
  scan_cmd->add_option("--grid-points", scan.grid_points,
                       "delta grid resolution");
  scan_cmd->add_option("--threads", scan.threads,
                       "worker threads (does not change results)");
  double fixed_delta = 0.0;
  CLI::Option* fixed_delta_opt = scan_cmd->add_option(
      "--fixed-delta", fixed_delta, "skip the fit and force this variance ratio");

  CalibrateArgs cal;
  CLI::App* cal_cmd = app.add_subcommand(
      "calibrate", "pool non-causal p-values and report calibration");
  cal_cmd->add_option("dirs", cal.dataset_dirs, "scanned dataset directories")
      ->required()
      ->check(CLI::ExistingDirectory);
  cal_cmd->add_option("--out", cal.out_dir, "report output directory");
  cal_cmd->add_option("--alpha-points", cal.alpha_points, "alpha grid size");
  cal_cmd->add_option("--level", cal.level, "band confidence level");
  cal_cmd->add_option("--min-inside-fraction", cal.min_inside_fraction,
                      "pass threshold on the fraction of grid points in band");
  cal_cmd->add_option("--min-ks-p", cal.min_ks_p, "pass threshold on the KS p-value");

  std::string report_path;
  CLI::App* report_cmd =
      app.add_subcommand("report", "pretty-print a calibration summary");
  report_cmd->add_option("summary", report_path, "summary.json path")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      if (*sim_seed_opt) sim.seed = sim_seed;
      if (*sim_n_opt) sim.n_individuals = sim_n;
      if (*sim_m_opt) sim.n_snps = sim_m;
      if (*sim_c_opt) sim.n_causal = sim_c;
      if (*sim_ff_opt) sim.family_fraction = sim_ff;
      if (*sim_h2_opt) sim.heritability = sim_h2;
      if (*sim_hidden_opt) sim.hidden = sim_hidden;
      return cmd_simulate(sim);
    }
    if (*scan_cmd) {
      if (*fixed_delta_opt) scan.fixed_delta = fixed_delta;
      return cmd_scan(scan);
    }
    if (*cal_cmd) return cmd_calibrate(cal);
    if (*report_cmd) return cmd_report(report_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
