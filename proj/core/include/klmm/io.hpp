#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "klmm/calibrate.hpp"
#include "klmm/genotype_matrix.hpp"
#include "klmm/lmm.hpp"
#include "klmm/simulate.hpp"

namespace klmm {

enum class GenotypeFileFormat { binary, text };

// Dataset directory layout.
namespace files {
inline constexpr const char* genotypes_binary = "genotypes.kgeno";
inline constexpr const char* genotypes_text = "genotypes.txt";
inline constexpr const char* hidden_binary = "hidden_genotypes.kgeno";
inline constexpr const char* hidden_text = "hidden_genotypes.txt";
inline constexpr const char* phenotype = "phenotype.txt";
inline constexpr const char* metadata = "metadata.json";
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* report_csv = "report.csv";
inline constexpr const char* report_summary = "summary.json";
std::string scan_table(const std::string& method);  // "scan_<method>.csv"
}  // namespace files

/// Binary genotype container: magic "KLMM", format version u16, N and M as
/// u64 (all little-endian), then row-major u8 allele counts. The text
/// variant is one individual per line, space-separated 0/1/2.
void write_genotypes(const std::filesystem::path& path,
                     const GenotypeMatrix& g,
                     GenotypeFileFormat format = GenotypeFileFormat::binary);

/// Reads either container format (auto-detected via the magic string).
GenotypeMatrix read_genotypes(const std::filesystem::path& path);

/// One decimal value per line, 17 significant digits.
void write_phenotype(const std::filesystem::path& path,
                     const Eigen::VectorXd& y);
Eigen::VectorXd read_phenotype(const std::filesystem::path& path);

/// Writes genotype container(s), phenotype, and the metadata sidecar into
/// `dir` (created if needed).
void write_cohort(const std::filesystem::path& dir,
                  const SimulatedCohort& cohort,
                  GenotypeFileFormat format = GenotypeFileFormat::binary);

struct LoadedDataset {
  GenotypeMatrix genotypes;  // raw; standardize before analysis
  std::optional<GenotypeMatrix> hidden_genotypes;
  Eigen::VectorXd phenotype;
  std::vector<Eigen::Index> causal_indices;
  std::vector<int> family_of;
  SimConfig config;
};

LoadedDataset read_cohort(const std::filesystem::path& dir);

/// Causal ground truth only; throws MissingTruthError when the metadata
/// lacks causal indices.
std::vector<Eigen::Index> read_causal_indices(const std::filesystem::path& dir);

/// Association table: header
///   snp_index,beta_hat,f_stat,p_value,method,status
/// with 17-significant-digit decimals, ordered by snp_index.
void write_association_table(const std::filesystem::path& path,
                             const AssociationScan& scan);
AssociationScan read_association_table(const std::filesystem::path& path);

/// Report table `alpha,fpr_lmm,fpr_univariate,ci_low,ci_high` (nan for an
/// absent method; the band is the lmm one when present) plus a structured
/// JSON summary with n_tests, KS results, and pass/fail flags.
void write_report_csv(const std::filesystem::path& path,
                      const CalibrationReport& report);
void write_report_summary(const std::filesystem::path& path,
                          const CalibrationReport& report);
CalibrationReport read_report_summary(const std::filesystem::path& path);

}  // namespace klmm
