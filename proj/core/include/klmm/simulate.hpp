#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "klmm/genotype_matrix.hpp"
#include "klmm/rng.hpp"

namespace klmm {

struct SimConfig {
  Eigen::Index n_individuals = 500;
  Eigen::Index n_snps = 2000;
  double family_fraction = 0.0;
  int offspring_per_pair = 10;
  double maf_low = 0.05;
  double maf_high = 0.5;
  Eigen::Index n_causal = 0;
  double heritability = 0.0;        // sigma_g^2 / (sigma_g^2 + sigma_e^2)
  bool hidden_enabled = false;
  Eigen::Index n_hidden = 100;
  double hidden_strength = 0.3;     // sigma_h^2 / (sigma_h^2 + sigma_e^2)
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct VarianceComponents {
  double sigma_g2 = 0.0;
  double sigma_e2 = 1.0;
  double sigma_h2 = 0.0;
};

/// Resolves the config's variance fractions against the sigma_e^2 = 1
/// anchor: sigma_g^2 = h/(1-h), sigma_h^2 = s/(1-s).
VarianceComponents variance_components(const SimConfig& cfg);

struct SimulatedCohort {
  GenotypeMatrix genotypes;                        // standardized
  std::optional<GenotypeMatrix> hidden_genotypes;  // standardized
  Eigen::VectorXd phenotype;
  std::vector<Eigen::Index> causal_indices;        // sorted, distinct
  std::vector<int> family_of;                      // family id, -1 = independent founder
  SimConfig config;

  // Disposable parent pool retained for pedigree verification. Family k's
  // mother and father are pool rows 2k and 2k+1.
  GenotypeCounts parent_pool;
  std::optional<GenotypeCounts> parent_pool_hidden;

  Eigen::Index n_offspring() const;
  Eigen::Index n_families() const;
};

/// Founder genotypes: per-SNP minor allele frequency drawn once from
/// Uniform[maf_low, maf_high], each genotype the sum of two independent
/// Bernoulli(maf) allele draws. If `drawn_mafs` is given it receives the
/// per-SNP frequencies.
GenotypeMatrix generate_founders(Eigen::Index n, Eigen::Index m,
                                 double maf_low, double maf_high, Rng& rng,
                                 std::vector<double>* drawn_mafs = nullptr);

/// One mating: per SNP, each parent transmits a deterministic allele when
/// homozygous and a fair coin flip when heterozygous; the child genotype is
/// the sum of the two transmitted alleles.
Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic> mate(
    const Eigen::Ref<const Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic>>& mother,
    const Eigen::Ref<const Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic>>& father,
    Rng& rng);

/// Full cohort draw: floor(family_fraction*N/offspring_per_pair) families of
/// offspring from a disposable founder pool, independent founders for the
/// remainder, causal SNPs sampled without replacement, optional hidden SNPs
/// realized over the same pedigree, and the phenotype. Columns that come out
/// monomorphic across the cohort are redrawn (up to 100 attempts each).
SimulatedCohort generate_cohort(const SimConfig& cfg);

/// Phenotype draw given fixed genotypes and causal indices:
///   y = X_causal beta + W gamma + eps
/// with beta_j ~ N(0, sigma_g^2 / n_causal), gamma_k ~ N(0, sigma_h^2 /
/// n_hidden), eps ~ N(0, sigma_e^2 I); equivalent to sampling y from the
/// kernel form with 1/C-scaled similarity matrices.
Eigen::VectorXd generate_phenotype(const SimulatedCohort& cohort,
                                   const SimConfig& cfg, Rng& rng);

/// Cartesian product of the three parameter grids times `replicates`, each
/// descriptor with a distinct derived seed.
std::vector<SimConfig> generate_grid(const SimConfig& base,
                                     std::span<const double> family_fractions,
                                     std::span<const Eigen::Index> n_causal_grid,
                                     std::span<const double> heritability_grid,
                                     int replicates);

/// True when every offspring genotype is consistent with a valid
/// transmission from its recorded parents, for the observed and (when
/// present) hidden SNP sets:
///   (mother==2)+(father==2) <= child <= (mother>0)+(father>0).
bool mendelian_consistent(const SimulatedCohort& cohort);

}  // namespace klmm
