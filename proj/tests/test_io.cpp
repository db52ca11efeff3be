#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "klmm/errors.hpp"
#include "klmm/io.hpp"
#include "klmm/rng.hpp"
#include "klmm/simulate.hpp"

using namespace klmm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("klmm_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("binary genotype container round-trips bit-exactly") {
  TempDir tmp("geno_bin");
  Rng rng(601);
  const GenotypeMatrix g = generate_founders(37, 23, 0.1, 0.5, rng);
  const fs::path p = tmp.path / "g.kgeno";
  write_genotypes(p, g);
  const GenotypeMatrix back = read_genotypes(p);
  CHECK(back.raw() == g.raw());

  write_genotypes(tmp.path / "g2.kgeno", back);
  CHECK(slurp(p) == slurp(tmp.path / "g2.kgeno"));

  // Header sanity: magic string and little-endian dimensions.
  const std::string bytes = slurp(p);
  CHECK(bytes.substr(0, 4) == "KLMM");
  CHECK(bytes.size() == 4 + 2 + 8 + 8 + 37 * 23);
}

TEST_CASE("text genotype container round-trips") {
  TempDir tmp("geno_txt");
  Rng rng(603);
  const GenotypeMatrix g = generate_founders(9, 14, 0.2, 0.5, rng);
  const fs::path p = tmp.path / "g.txt";
  write_genotypes(p, g, GenotypeFileFormat::text);
  const GenotypeMatrix back = read_genotypes(p);
  CHECK(back.raw() == g.raw());

  std::ofstream bad(tmp.path / "bad.txt");
  bad << "0 1 2\n0 3 1\n";
  bad.close();
  CHECK_THROWS_AS(read_genotypes(tmp.path / "bad.txt"), IoError);
}

TEST_CASE("phenotype file preserves doubles exactly") {
  TempDir tmp("pheno");
  Rng rng(605);
  Eigen::VectorXd y(64);
  for (int i = 0; i < 64; ++i) y[i] = rng.normal() * std::pow(10.0, i % 7 - 3);
  const fs::path p = tmp.path / "phenotype.txt";
  write_phenotype(p, y);
  const Eigen::VectorXd back = read_phenotype(p);
  REQUIRE(back.size() == y.size());
  for (int i = 0; i < 64; ++i) CHECK(back[i] == y[i]);
}

TEST_CASE("cohort persistence round-trips metadata and data") {
  TempDir tmp("cohort");
  SimConfig cfg;
  cfg.n_individuals = 80;
  cfg.n_snps = 120;
  cfg.family_fraction = 0.75;
  cfg.n_causal = 9;
  cfg.heritability = 0.35;
  cfg.hidden_enabled = true;
  cfg.n_hidden = 30;
  cfg.hidden_strength = 0.3;
  cfg.seed = 0xdeadbeefcafe1234ull;
  const SimulatedCohort cohort = generate_cohort(cfg);
  write_cohort(tmp.path, cohort);

  const LoadedDataset ds = read_cohort(tmp.path);
  CHECK(ds.genotypes.raw() == cohort.genotypes.raw());
  REQUIRE(ds.hidden_genotypes.has_value());
  CHECK(ds.hidden_genotypes->raw() == cohort.hidden_genotypes->raw());
  CHECK(ds.phenotype == cohort.phenotype);
  CHECK(ds.causal_indices == cohort.causal_indices);
  CHECK(ds.family_of == cohort.family_of);
  CHECK(ds.config.seed == cfg.seed);
  CHECK(ds.config.n_individuals == cfg.n_individuals);
  CHECK(ds.config.heritability == cfg.heritability);

  // Standardization of the reloaded raw matrix reproduces the in-memory
  // values exactly (integer column statistics).
  const GenotypeMatrix std_back = standardize(ds.genotypes);
  CHECK(std_back.values() == cohort.genotypes.values());

  CHECK(read_causal_indices(tmp.path) == cohort.causal_indices);
}

TEST_CASE("missing causal truth is a typed error") {
  TempDir tmp("truth");
  std::ofstream meta(tmp.path / files::metadata);
  meta << "{\"seed\": 1}\n";
  meta.close();
  CHECK_THROWS_AS(read_causal_indices(tmp.path), MissingTruthError);
}

TEST_CASE("association tables round-trip") {
  TempDir tmp("table");
  AssociationScan scan;
  scan.method = "lmm";
  for (int j = 0; j < 5; ++j) {
    AssociationResult r;
    r.snp_index = j;
    r.beta_hat = 0.1 * j - 0.2;
    r.f_statistic = 1.5 * j;
    r.p_value = std::pow(10.0, -j);
    r.status = j == 3 ? ScanStatus::singular_downdate : ScanStatus::ok;
    if (j == 3) {
      r.beta_hat = r.f_statistic = r.p_value =
          std::numeric_limits<double>::quiet_NaN();
    }
    scan.results.push_back(r);
  }
  const fs::path p = tmp.path / files::scan_table("lmm");
  write_association_table(p, scan);

  const std::string text = slurp(p);
  CHECK(text.rfind("snp_index,beta_hat,f_stat,p_value,method,status\n", 0) == 0);

  const AssociationScan back = read_association_table(p);
  CHECK(back.method == "lmm");
  REQUIRE(back.results.size() == 5);
  for (int j = 0; j < 5; ++j) {
    CHECK(back.results[j].snp_index == j);
    CHECK(back.results[j].status == scan.results[j].status);
    if (j != 3) {
      CHECK(back.results[j].beta_hat == scan.results[j].beta_hat);
      CHECK(back.results[j].p_value == scan.results[j].p_value);
    } else {
      CHECK(std::isnan(back.results[j].p_value));
    }
  }
}

TEST_CASE("reports round-trip through csv and summary") {
  TempDir tmp("report");
  Rng rng(607);
  DatasetPvals lmm{"lmm", {}, 2};
  DatasetPvals uni{"univariate", {}, 0};
  for (int i = 0; i < 2000; ++i) lmm.pvals.push_back(rng.uniform01());
  for (int i = 0; i < 2000; ++i) uni.pvals.push_back(rng.uniform01());
  const std::vector<DatasetPvals> all = {lmm, uni};
  const CalibrationReport report = build_report(all, default_alpha_grid(25));

  write_report_csv(tmp.path / files::report_csv, report);
  write_report_summary(tmp.path / files::report_summary, report);

  const std::string csv = slurp(tmp.path / files::report_csv);
  CHECK(csv.rfind("alpha,fpr_lmm,fpr_univariate,ci_low,ci_high\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 26);

  const CalibrationReport back =
      read_report_summary(tmp.path / files::report_summary);
  REQUIRE(back.methods.size() == 2);
  const MethodCalibration* m = back.find("lmm");
  REQUIRE(m != nullptr);
  CHECK(m->n_tests == 2000);
  CHECK(m->n_missing == 2);
  CHECK(m->fpr == report.find("lmm")->fpr);
  CHECK(m->ks_p == report.find("lmm")->ks_p);
  CHECK(m->pass == report.find("lmm")->pass);
  CHECK(back.alpha_grid == report.alpha_grid);
}
