#include "hkt/analysis/report.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hkt/error.hpp"

namespace hkt::analysis {

namespace {

using nlohmann::json;

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

// JSON has no infinity; non-finite values become null.
json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json tagged(const char* kind) { return {{"format", kReportFormat}, {"kind", kind}}; }

}  // namespace

std::string decomposition_csv(const DecompositionReport& r) {
  std::string out =
      "layer,level,head,frob_ms,frob_ma,ratio,fraction_negative,min_eigenvalue,energy,"
      "energy_from_ma,max_sym_dev,max_anti_dev,exact_entries,entries\n";
  for (const auto& d : r.rows)
    out += std::to_string(d.layer) + "," + std::to_string(d.level) + "," +
           std::to_string(d.head) + "," + num(d.frob_ms) + "," + num(d.frob_ma) + "," +
           num(d.ratio) + "," + num(d.spectrum.fraction_negative) + "," +
           num(d.spectrum.min_eigenvalue) + "," + num(d.energy) + "," + num(d.energy_from_ma) +
           "," + num(d.max_sym_dev) + "," + num(d.max_anti_dev) + "," +
           std::to_string(d.exact_entries) + "," + std::to_string(d.entries) + "\n";
  return out;
}

std::string ratio_table_csv(const DecompositionReport& r) {
  std::string out = "level";
  for (std::size_t layer = 0; layer < r.mean_ratio.size(); ++layer)
    out += ",layer" + std::to_string(layer);
  out += "\n";
  const std::size_t L = r.mean_ratio.empty() ? 0 : r.mean_ratio[0].size();
  for (std::size_t l = 0; l < L; ++l) {
    out += std::to_string(l);
    for (const auto& row : r.mean_ratio) out += "," + num(row[l]);
    out += "\n";
  }
  return out;
}

std::string psd_csv(const std::vector<PsdRow>& rows) {
  std::string out = "layer,level,head,negative,positive,fraction_negative,min_eigenvalue\n";
  for (const auto& p : rows)
    out += std::to_string(p.layer) + "," + std::to_string(p.level) + "," +
           std::to_string(p.head) + "," + std::to_string(p.spectrum.negative) + "," +
           std::to_string(p.spectrum.positive) + "," + num(p.spectrum.fraction_negative) + "," +
           num(p.spectrum.min_eigenvalue) + "\n";
  return out;
}

std::string info_csv(const InfoReport& r) {
  std::string out =
      "level,n,p,rho2,kappa,kappa_pairwise,gaussian_bound,nongaussian_bound,delta_ng,"
      "lambda_star\n";
  for (const auto& l : r.levels)
    out += std::to_string(l.level) + "," + std::to_string(l.n) + "," + std::to_string(l.p) + "," +
           num(l.rho2) + "," + num(l.kappa) + "," + num(l.kappa_pairwise) + "," +
           num(l.gaussian_bound) + "," + num(l.nongaussian_bound) + "," + num(l.delta_ng) + "," +
           num(l.lambda_star) + "\n";
  return out;
}

std::string gram_csv(const GramReport& r) {
  std::string out = "level,lambda,min_eigenvalue\n";
  for (std::size_t l = 0; l < r.level_min_eig.size(); ++l)
    out += std::to_string(l) + "," + num(r.lambda[l]) + "," + num(r.level_min_eig[l]) + "\n";
  out += "hier,1," + num(r.min_eig) + "\n";
  return out;
}

std::string decomposition_jsonl(const DecompositionReport& r) {
  std::string out;
  for (const auto& d : r.rows) {
    json j = tagged("decomposition");
    j["layer"] = d.layer;
    j["level"] = d.level;
    j["head"] = d.head;
    j["frob_ms"] = jnum(d.frob_ms);
    j["frob_ma"] = jnum(d.frob_ma);
    j["ratio"] = jnum(d.ratio);
    j["eigenvalues"] = d.spectrum.eigenvalues;
    j["fraction_negative"] = d.spectrum.fraction_negative;
    j["min_eigenvalue"] = d.spectrum.min_eigenvalue;
    j["energy"] = d.energy;
    j["energy_from_ma"] = d.energy_from_ma;
    j["max_sym_dev"] = d.max_sym_dev;
    j["max_anti_dev"] = d.max_anti_dev;
    j["exact_entries"] = d.exact_entries;
    j["entries"] = d.entries;
    j["max_split_error"] = d.max_split_error;
    out += j.dump() + "\n";
  }
  return out;
}

std::string psd_jsonl(const std::vector<PsdRow>& rows) {
  std::string out;
  for (const auto& p : rows) {
    json j = tagged("psd_audit");
    j["layer"] = p.layer;
    j["level"] = p.level;
    j["head"] = p.head;
    j["eigenvalues"] = p.spectrum.eigenvalues;
    j["fraction_negative"] = p.spectrum.fraction_negative;
    j["min_eigenvalue"] = p.spectrum.min_eigenvalue;
    out += j.dump() + "\n";
  }
  return out;
}

std::string info_jsonl(const InfoReport& r) {
  std::string out;
  for (const auto& l : r.levels) {
    json j = tagged("info");
    j["layer"] = r.layer;
    j["level"] = l.level;
    j["target"] = "true-class logit";
    j["block"] = r.block;
    j["n"] = l.n;
    j["p"] = l.p;
    j["rho2"] = l.rho2;
    j["kappa"] = l.kappa;
    j["kappa_pairwise"] = l.kappa_pairwise;
    j["mardia_classical"] = l.mardia_classical;
    j["mardia_pairwise"] = l.mardia_pairwise;
    j["gaussian_bound"] = l.gaussian_bound;
    j["nongaussian_bound"] = l.nongaussian_bound;
    j["delta_ng"] = l.delta_ng;
    j["lambda_star"] = l.lambda_star;
    j["sigma_f2"] = r.sigma_f2;
    j["eps0"] = r.eps0;
    j["lambda_star_fallback"] = r.lambda_star_fallback;
    out += j.dump() + "\n";
  }
  return out;
}

std::string gram_jsonl(const GramReport& r) {
  json j = tagged("gram");
  j["layer"] = r.layer;
  j["head"] = r.head;
  j["n"] = r.n;
  j["lambda"] = r.lambda;
  j["level_min_eigenvalue"] = r.level_min_eig;
  j["min_eigenvalue"] = r.min_eig;
  j["frobenius"] = r.frobenius;
  j["input_scale"] = r.input_scale;
  j["linear_rank"] = r.linear_rank;
  j["rank_bound"] = r.rank_bound;
  return j.dump() + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace hkt::analysis
