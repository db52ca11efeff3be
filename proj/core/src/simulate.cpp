#include "klmm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "klmm/errors.hpp"

namespace klmm {

namespace {

constexpr int kMonomorphicRetries = 100;

std::uint8_t transmit(std::uint8_t parent, Rng& rng) {
  if (parent == 0) return 0;
  if (parent == 2) return 1;
  return rng.bernoulli(0.5) ? 1 : 0;
}

std::uint8_t founder_genotype(double maf, Rng& rng) {
  return static_cast<std::uint8_t>(rng.bernoulli(maf)) +
         static_cast<std::uint8_t>(rng.bernoulli(maf));
}

struct Pedigree {
  Eigen::Index n_pairs = 0;
  Eigen::Index n_offspring = 0;
  Eigen::Index n_independent = 0;
  int offspring_per_pair = 0;
};

Pedigree make_pedigree(const SimConfig& cfg) {
  Pedigree p;
  p.offspring_per_pair = cfg.offspring_per_pair;
  const double target = cfg.family_fraction * static_cast<double>(cfg.n_individuals);
  p.n_pairs = static_cast<Eigen::Index>(std::floor(target / cfg.offspring_per_pair));
  p.n_offspring = p.n_pairs * cfg.offspring_per_pair;
  p.n_independent = cfg.n_individuals - p.n_offspring;
  return p;
}

// Draws one SNP column over the pedigree: fresh MAF, pool-parent and
// independent-founder genotypes, then per-child transmissions. Cohort rows
// are offspring first, then independent founders. Columns that come out
// monomorphic across the cohort are redrawn from scratch.
void realize_columns(const Pedigree& ped, Eigen::Index m, double maf_low,
                     double maf_high, Rng& rng, GenotypeCounts& cohort,
                     GenotypeCounts& pool) {
  const Eigen::Index n = ped.n_offspring + ped.n_independent;
  cohort.resize(n, m);
  pool.resize(2 * ped.n_pairs, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    bool accepted = false;
    for (int attempt = 0; attempt < kMonomorphicRetries && !accepted; ++attempt) {
      const double maf = rng.uniform(maf_low, maf_high);
      for (Eigen::Index i = 0; i < 2 * ped.n_pairs; ++i) {
        pool(i, j) = founder_genotype(maf, rng);
      }
      for (Eigen::Index i = 0; i < ped.n_independent; ++i) {
        cohort(ped.n_offspring + i, j) = founder_genotype(maf, rng);
      }
      for (Eigen::Index k = 0; k < ped.n_pairs; ++k) {
        const std::uint8_t mother = pool(2 * k, j);
        const std::uint8_t father = pool(2 * k + 1, j);
        for (int child = 0; child < ped.offspring_per_pair; ++child) {
          cohort(k * ped.offspring_per_pair + child, j) =
              transmit(mother, rng) + transmit(father, rng);
        }
      }
      const std::uint8_t first = cohort(0, j);
      for (Eigen::Index i = 1; i < n; ++i) {
        if (cohort(i, j) != first) {
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) {
      throw ConfigError("SNP column " + std::to_string(j) +
                        " stayed monomorphic after " +
                        std::to_string(kMonomorphicRetries) + " redraws");
    }
  }
}

std::vector<Eigen::Index> sample_without_replacement(Eigen::Index m,
                                                     Eigen::Index k, Rng& rng) {
  std::vector<Eigen::Index> idx(m);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index t = 0; t < k; ++t) {
    const Eigen::Index r =
        t + static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(m - t)));
    std::swap(idx[t], idx[r]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

void SimConfig::validate() const {
  if (n_individuals < 1) throw ConfigError("n_individuals must be >= 1");
  if (n_snps < 1) throw ConfigError("n_snps must be >= 1");
  if (family_fraction < 0.0 || family_fraction > 1.0) {
    throw ConfigError("family_fraction must lie in [0, 1]");
  }
  if (offspring_per_pair < 1) throw ConfigError("offspring_per_pair must be >= 1");
  if (!(maf_low > 0.0) || !(maf_low < maf_high) || !(maf_high <= 0.5)) {
    throw ConfigError("maf range must satisfy 0 < low < high <= 0.5");
  }
  if (n_causal < 0 || n_causal > n_snps) {
    throw ConfigError("n_causal must lie in [0, n_snps]");
  }
  if (heritability < 0.0 || heritability >= 1.0) {
    throw ConfigError("heritability must lie in [0, 1)");
  }
  if (hidden_strength < 0.0 || hidden_strength >= 1.0) {
    throw ConfigError("hidden_strength must lie in [0, 1)");
  }
  if (hidden_enabled && n_hidden < 1) {
    throw ConfigError("n_hidden must be >= 1 when hidden SNPs are enabled");
  }
}

VarianceComponents variance_components(const SimConfig& cfg) {
  VarianceComponents vc;
  vc.sigma_e2 = 1.0;
  vc.sigma_g2 = cfg.heritability / (1.0 - cfg.heritability);
  vc.sigma_h2 =
      cfg.hidden_enabled ? cfg.hidden_strength / (1.0 - cfg.hidden_strength) : 0.0;
  return vc;
}

Eigen::Index SimulatedCohort::n_offspring() const {
  Eigen::Index n = 0;
  for (int f : family_of) {
    if (f >= 0) ++n;
  }
  return n;
}

Eigen::Index SimulatedCohort::n_families() const {
  int max_id = -1;
  for (int f : family_of) max_id = std::max(max_id, f);
  return max_id + 1;
}

GenotypeMatrix generate_founders(Eigen::Index n, Eigen::Index m, double maf_low,
                                 double maf_high, Rng& rng,
                                 std::vector<double>* drawn_mafs) {
  if (n < 1 || m < 1) throw ConfigError("generate_founders needs n, m >= 1");
  if (!(maf_low > 0.0) || maf_low > maf_high || !(maf_high < 1.0)) {
    throw ConfigError("generate_founders: invalid maf range");
  }
  if (drawn_mafs) drawn_mafs->clear();
  GenotypeCounts counts(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double maf = rng.uniform(maf_low, maf_high);
    if (drawn_mafs) drawn_mafs->push_back(maf);
    for (Eigen::Index i = 0; i < n; ++i) {
      counts(i, j) = founder_genotype(maf, rng);
    }
  }
  return GenotypeMatrix(std::move(counts));
}

Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic> mate(
    const Eigen::Ref<const Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic>>& mother,
    const Eigen::Ref<const Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic>>& father,
    Rng& rng) {
  if (mother.size() != father.size()) throw ConfigError("mate: SNP count mismatch");
  Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic> child(mother.size());
  for (Eigen::Index j = 0; j < mother.size(); ++j) {
    child[j] = transmit(mother[j], rng) + transmit(father[j], rng);
  }
  return child;
}

SimulatedCohort generate_cohort(const SimConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const Pedigree ped = make_pedigree(cfg);

  SimulatedCohort cohort;
  cohort.config = cfg;

  GenotypeCounts observed;
  realize_columns(ped, cfg.n_snps, cfg.maf_low, cfg.maf_high, rng, observed,
                  cohort.parent_pool);
  if (cfg.hidden_enabled) {
    GenotypeCounts hidden;
    GenotypeCounts hidden_pool;
    realize_columns(ped, cfg.n_hidden, cfg.maf_low, cfg.maf_high, rng, hidden,
                    hidden_pool);
    cohort.hidden_genotypes = standardize(GenotypeMatrix(std::move(hidden)));
    cohort.parent_pool_hidden = std::move(hidden_pool);
  }

  cohort.causal_indices = sample_without_replacement(cfg.n_snps, cfg.n_causal, rng);

  cohort.family_of.resize(cfg.n_individuals);
  for (Eigen::Index i = 0; i < ped.n_offspring; ++i) {
    cohort.family_of[i] = static_cast<int>(i / ped.offspring_per_pair);
  }
  for (Eigen::Index i = ped.n_offspring; i < cfg.n_individuals; ++i) {
    cohort.family_of[i] = -1;
  }

  cohort.genotypes = standardize(GenotypeMatrix(std::move(observed)));
  cohort.phenotype = generate_phenotype(cohort, cfg, rng);
  return cohort;
}

Eigen::VectorXd generate_phenotype(const SimulatedCohort& cohort,
                                   const SimConfig& cfg, Rng& rng) {
  if (!cohort.genotypes.standardized()) {
    throw Error("generate_phenotype requires standardized genotypes");
  }
  const Eigen::Index n = cohort.genotypes.n_individuals();
  const VarianceComponents vc = variance_components(cfg);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);

  if (!cohort.causal_indices.empty()) {
    const double sd =
        std::sqrt(vc.sigma_g2 / static_cast<double>(cohort.causal_indices.size()));
    for (Eigen::Index idx : cohort.causal_indices) {
      y += cohort.genotypes.values().col(idx) * (rng.normal() * sd);
    }
  }
  if (cfg.hidden_enabled) {
    if (!cohort.hidden_genotypes) {
      throw Error("hidden SNPs enabled but not realized");
    }
    const double sd = std::sqrt(
        vc.sigma_h2 / static_cast<double>(cohort.hidden_genotypes->n_snps()));
    for (Eigen::Index k = 0; k < cohort.hidden_genotypes->n_snps(); ++k) {
      y += cohort.hidden_genotypes->values().col(k) * (rng.normal() * sd);
    }
  }
  const double noise_sd = std::sqrt(vc.sigma_e2);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] += rng.normal() * noise_sd;
  }
  return y;
}

std::vector<SimConfig> generate_grid(const SimConfig& base,
                                     std::span<const double> family_fractions,
                                     std::span<const Eigen::Index> n_causal_grid,
                                     std::span<const double> heritability_grid,
                                     int replicates) {
  if (family_fractions.empty() || n_causal_grid.empty() ||
      heritability_grid.empty() || replicates < 1) {
    throw ConfigError("generate_grid requires nonempty grids and replicates >= 1");
  }
  std::vector<SimConfig> out;
  out.reserve(family_fractions.size() * n_causal_grid.size() *
              heritability_grid.size() * replicates);
  for (std::size_t a = 0; a < family_fractions.size(); ++a) {
    for (std::size_t b = 0; b < n_causal_grid.size(); ++b) {
      for (std::size_t c = 0; c < heritability_grid.size(); ++c) {
        for (int r = 0; r < replicates; ++r) {
          SimConfig cfg = base;
          cfg.family_fraction = family_fractions[a];
          cfg.n_causal = n_causal_grid[b];
          cfg.heritability = heritability_grid[c];
          cfg.seed = derive_seed(base.seed,
                                 {static_cast<std::uint64_t>(a),
                                  static_cast<std::uint64_t>(b),
                                  static_cast<std::uint64_t>(c),
                                  static_cast<std::uint64_t>(r)});
          out.push_back(cfg);
        }
      }
    }
  }
  return out;
}

namespace {

bool mendelian_block(const GenotypeCounts& cohort, const GenotypeCounts& pool,
                     const std::vector<int>& family_of, int offspring_per_pair) {
  for (Eigen::Index i = 0; i < cohort.rows(); ++i) {
    const int fam = family_of[i];
    if (fam < 0) continue;
    for (Eigen::Index j = 0; j < cohort.cols(); ++j) {
      const std::uint8_t mother = pool(2 * fam, j);
      const std::uint8_t father = pool(2 * fam + 1, j);
      const int lo = (mother == 2 ? 1 : 0) + (father == 2 ? 1 : 0);
      const int hi = (mother > 0 ? 1 : 0) + (father > 0 ? 1 : 0);
      const int child = cohort(i, j);
      if (child < lo || child > hi) return false;
    }
  }
  (void)offspring_per_pair;
  return true;
}

}  // namespace

bool mendelian_consistent(const SimulatedCohort& cohort) {
  if (!mendelian_block(cohort.genotypes.raw(), cohort.parent_pool,
                       cohort.family_of, cohort.config.offspring_per_pair)) {
    return false;
  }
  if (cohort.hidden_genotypes && cohort.parent_pool_hidden) {
    return mendelian_block(cohort.hidden_genotypes->raw(),
                           *cohort.parent_pool_hidden, cohort.family_of,
                           cohort.config.offspring_per_pair);
  }
  return true;
}

}  // namespace klmm
