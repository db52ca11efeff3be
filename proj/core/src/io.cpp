#include "klmm/io.hpp"

#include <array>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace klmm {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'K', 'L', 'M', 'M'};
constexpr std::uint16_t kFormatVersion = 1;

void append_u16_le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void append_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

std::uint16_t read_u16_le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0]) |
         static_cast<std::uint16_t>(p[1]) << 8;
}

std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::string format_double(double v) {
  std::array<char, 40> buf;
  std::snprintf(buf.data(), buf.size(), "%.17g", v);
  return std::string(buf.data());
}

std::ifstream open_input(const std::filesystem::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

json config_to_json(const SimConfig& cfg) {
  return json{{"n_individuals", cfg.n_individuals},
              {"n_snps", cfg.n_snps},
              {"family_fraction", cfg.family_fraction},
              {"offspring_per_pair", cfg.offspring_per_pair},
              {"maf_low", cfg.maf_low},
              {"maf_high", cfg.maf_high},
              {"n_causal", cfg.n_causal},
              {"heritability", cfg.heritability},
              {"hidden_enabled", cfg.hidden_enabled},
              {"n_hidden", cfg.n_hidden},
              {"hidden_strength", cfg.hidden_strength},
              {"seed", cfg.seed}};
}

SimConfig config_from_json(const json& j) {
  SimConfig cfg;
  cfg.n_individuals = j.at("n_individuals").get<Eigen::Index>();
  cfg.n_snps = j.at("n_snps").get<Eigen::Index>();
  cfg.family_fraction = j.at("family_fraction").get<double>();
  cfg.offspring_per_pair = j.at("offspring_per_pair").get<int>();
  cfg.maf_low = j.at("maf_low").get<double>();
  cfg.maf_high = j.at("maf_high").get<double>();
  cfg.n_causal = j.at("n_causal").get<Eigen::Index>();
  cfg.heritability = j.at("heritability").get<double>();
  cfg.hidden_enabled = j.at("hidden_enabled").get<bool>();
  cfg.n_hidden = j.at("n_hidden").get<Eigen::Index>();
  cfg.hidden_strength = j.at("hidden_strength").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

json load_json(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, false);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

}  // namespace

namespace files {
std::string scan_table(const std::string& method) {
  return "scan_" + method + ".csv";
}
}  // namespace files

void write_genotypes(const std::filesystem::path& path, const GenotypeMatrix& g,
                     GenotypeFileFormat format) {
  const Eigen::Index n = g.n_individuals();
  const Eigen::Index m = g.n_snps();
  if (format == GenotypeFileFormat::binary) {
    std::ofstream out = open_output(path, true);
    std::string header;
    header.append(kMagic, 4);
    append_u16_le(header, kFormatVersion);
    append_u64_le(header, static_cast<std::uint64_t>(n));
    append_u64_le(header, static_cast<std::uint64_t>(m));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    std::vector<char> row(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        row[static_cast<std::size_t>(j)] = static_cast<char>(g.raw()(i, j));
      }
      out.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("write failed: " + path.string());
  } else {
    std::ofstream out = open_output(path, false);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        if (j) out.put(' ');
        out.put(static_cast<char>('0' + g.raw()(i, j)));
      }
      out.put('\n');
    }
    if (!out) throw IoError("write failed: " + path.string());
  }
}

GenotypeMatrix read_genotypes(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, true);
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() == 4 && std::memcmp(magic.data(), kMagic, 4) == 0) {
    std::array<unsigned char, 18> rest{};
    in.read(reinterpret_cast<char*>(rest.data()), 18);
    if (in.gcount() != 18) throw IoError("truncated genotype header: " + path.string());
    const std::uint16_t version = read_u16_le(rest.data());
    if (version != kFormatVersion) {
      throw IoError("unsupported genotype format version " +
                    std::to_string(version) + " in " + path.string());
    }
    const std::uint64_t n = read_u64_le(rest.data() + 2);
    const std::uint64_t m = read_u64_le(rest.data() + 10);
    GenotypeCounts counts(static_cast<Eigen::Index>(n),
                          static_cast<Eigen::Index>(m));
    std::vector<unsigned char> row(m);
    for (std::uint64_t i = 0; i < n; ++i) {
      in.read(reinterpret_cast<char*>(row.data()),
              static_cast<std::streamsize>(m));
      if (in.gcount() != static_cast<std::streamsize>(m)) {
        throw IoError("truncated genotype data: " + path.string());
      }
      for (std::uint64_t j = 0; j < m; ++j) {
        counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            row[j];
      }
    }
    return GenotypeMatrix(std::move(counts));
  }

  // Plain-text variant: one individual per line, space-separated 0/1/2.
  in.clear();
  in.seekg(0);
  std::vector<std::vector<std::uint8_t>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::uint8_t> row;
    std::istringstream ls(line);
    int v;
    while (ls >> v) {
      if (v < 0 || v > 2) {
        throw IoError("allele count out of range in " + path.string());
      }
      row.push_back(static_cast<std::uint8_t>(v));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError("ragged genotype rows in " + path.string());
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("empty genotype file: " + path.string());
  GenotypeCounts counts(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < counts.rows(); ++i) {
    for (Eigen::Index j = 0; j < counts.cols(); ++j) {
      counts(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return GenotypeMatrix(std::move(counts));
}

void write_phenotype(const std::filesystem::path& path, const Eigen::VectorXd& y) {
  std::ofstream out = open_output(path, false);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    out << format_double(y[i]) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Eigen::VectorXd read_phenotype(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, false);
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    values.push_back(std::stod(line));
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(),
                                     static_cast<Eigen::Index>(values.size()));
}

void write_cohort(const std::filesystem::path& dir, const SimulatedCohort& cohort,
                  GenotypeFileFormat format) {
  std::filesystem::create_directories(dir);
  const bool binary = format == GenotypeFileFormat::binary;
  const char* geno_name = binary ? files::genotypes_binary : files::genotypes_text;
  write_genotypes(dir / geno_name, cohort.genotypes, format);
  write_phenotype(dir / files::phenotype, cohort.phenotype);

  json meta{{"format_version", 1},
            {"seed", cohort.config.seed},
            {"config", config_to_json(cohort.config)},
            {"causal_indices", cohort.causal_indices},
            {"family_of", cohort.family_of},
            {"genotype_file", geno_name},
            {"phenotype_file", files::phenotype},
            {"hidden_genotype_file", nullptr}};
  if (cohort.hidden_genotypes) {
    const char* hidden_name = binary ? files::hidden_binary : files::hidden_text;
    write_genotypes(dir / hidden_name, *cohort.hidden_genotypes, format);
    meta["hidden_genotype_file"] = hidden_name;
  }
  std::ofstream out = open_output(dir / files::metadata, false);
  out << meta.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + (dir / files::metadata).string());
}

LoadedDataset read_cohort(const std::filesystem::path& dir) {
  const json meta = load_json(dir / files::metadata);
  LoadedDataset ds;
  try {
    ds.config = config_from_json(meta.at("config"));
    ds.causal_indices = meta.at("causal_indices").get<std::vector<Eigen::Index>>();
    ds.family_of = meta.at("family_of").get<std::vector<int>>();
    ds.genotypes = read_genotypes(dir / meta.at("genotype_file").get<std::string>());
    ds.phenotype = read_phenotype(dir / meta.at("phenotype_file").get<std::string>());
    if (!meta.at("hidden_genotype_file").is_null()) {
      ds.hidden_genotypes =
          read_genotypes(dir / meta.at("hidden_genotype_file").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw IoError("bad metadata in " + dir.string() + ": " + e.what());
  }
  return ds;
}

std::vector<Eigen::Index> read_causal_indices(const std::filesystem::path& dir) {
  const json meta = load_json(dir / files::metadata);
  if (!meta.contains("causal_indices")) {
    throw MissingTruthError("metadata lacks causal indices: " + dir.string());
  }
  try {
    return meta.at("causal_indices").get<std::vector<Eigen::Index>>();
  } catch (const json::exception& e) {
    throw MissingTruthError("unreadable causal indices in " + dir.string() +
                            ": " + e.what());
  }
}

void write_association_table(const std::filesystem::path& path,
                             const AssociationScan& scan) {
  std::ofstream out = open_output(path, false);
  out << "snp_index,beta_hat,f_stat,p_value,method,status\n";
  for (const auto& r : scan.results) {
    out << r.snp_index << ',' << format_double(r.beta_hat) << ','
        << format_double(r.f_statistic) << ',' << format_double(r.p_value)
        << ',' << scan.method << ',' << to_string(r.status) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

AssociationScan read_association_table(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, false);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty table: " + path.string());
  AssociationScan scan;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    AssociationResult r;
    std::getline(ls, field, ',');
    r.snp_index = std::stoll(field);
    std::getline(ls, field, ',');
    r.beta_hat = std::strtod(field.c_str(), nullptr);
    std::getline(ls, field, ',');
    r.f_statistic = std::strtod(field.c_str(), nullptr);
    std::getline(ls, field, ',');
    r.p_value = std::strtod(field.c_str(), nullptr);
    std::getline(ls, field, ',');
    if (scan.method.empty()) {
      scan.method = field;
    } else if (scan.method != field) {
      throw IoError("mixed methods in table: " + path.string());
    }
    std::getline(ls, field, ',');
    if (field == "ok") {
      r.status = ScanStatus::ok;
    } else if (field == "singular_downdate") {
      r.status = ScanStatus::singular_downdate;
    } else if (field == "singular_design") {
      r.status = ScanStatus::singular_design;
    } else {
      throw IoError("unknown status '" + field + "' in " + path.string());
    }
    scan.results.push_back(r);
  }
  return scan;
}

void write_report_csv(const std::filesystem::path& path,
                      const CalibrationReport& report) {
  const MethodCalibration* lmm = report.find("lmm");
  const MethodCalibration* uni = report.find("univariate");
  const MethodCalibration* band_source =
      lmm ? lmm : (report.methods.empty() ? nullptr : &report.methods.front());
  std::ofstream out = open_output(path, false);
  out << "alpha,fpr_lmm,fpr_univariate,ci_low,ci_high\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < report.alpha_grid.size(); ++i) {
    out << format_double(report.alpha_grid[i]) << ','
        << format_double(lmm ? lmm->fpr[i] : nan) << ','
        << format_double(uni ? uni->fpr[i] : nan) << ','
        << format_double(band_source ? band_source->ci_low[i] : nan) << ','
        << format_double(band_source ? band_source->ci_high[i] : nan) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_report_summary(const std::filesystem::path& path,
                          const CalibrationReport& report) {
  json methods = json::object();
  for (const auto& m : report.methods) {
    methods[m.method] = json{{"n_tests", m.n_tests},
                             {"n_missing", m.n_missing},
                             {"ks_statistic", m.ks_statistic},
                             {"ks_p", m.ks_p},
                             {"inside_band_fraction", m.inside_band_fraction},
                             {"pass_inside", m.pass_inside},
                             {"pass_ks", m.pass_ks},
                             {"pass", m.pass},
                             {"fpr", m.fpr},
                             {"ci_low", m.ci_low},
                             {"ci_high", m.ci_high}};
  }
  const json j{{"alpha_grid", report.alpha_grid},
               {"level", report.level},
               {"thresholds",
                json{{"min_inside_fraction", report.min_inside_fraction},
                     {"min_ks_p", report.min_ks_p}}},
               {"methods", methods}};
  std::ofstream out = open_output(path, false);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

CalibrationReport read_report_summary(const std::filesystem::path& path) {
  const json j = load_json(path);
  CalibrationReport report;
  try {
    report.alpha_grid = j.at("alpha_grid").get<std::vector<double>>();
    report.level = j.at("level").get<double>();
    report.min_inside_fraction =
        j.at("thresholds").at("min_inside_fraction").get<double>();
    report.min_ks_p = j.at("thresholds").at("min_ks_p").get<double>();
    for (const auto& [name, jm] : j.at("methods").items()) {
      MethodCalibration m;
      m.method = name;
      m.n_tests = jm.at("n_tests").get<std::size_t>();
      m.n_missing = jm.at("n_missing").get<std::size_t>();
      m.ks_statistic = jm.at("ks_statistic").get<double>();
      m.ks_p = jm.at("ks_p").get<double>();
      m.inside_band_fraction = jm.at("inside_band_fraction").get<double>();
      m.pass_inside = jm.at("pass_inside").get<bool>();
      m.pass_ks = jm.at("pass_ks").get<bool>();
      m.pass = jm.at("pass").get<bool>();
      m.fpr = jm.at("fpr").get<std::vector<double>>();
      m.ci_low = jm.at("ci_low").get<std::vector<double>>();
      m.ci_high = jm.at("ci_high").get<std::vector<double>>();
      report.methods.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw IoError("bad report summary in " + path.string() + ": " + e.what());
  }
  return report;
}

}  // namespace klmm
