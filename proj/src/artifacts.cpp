#include "psd/artifacts.hpp"

#include "psd/errors.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace psd::io {

using nlohmann::json;

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

const char* change_name(sampling::BoundChange c) {
  switch (c) {
    case sampling::BoundChange::expanded: return "expanded";
    case sampling::BoundChange::shrunk: return "shrunk";
    case sampling::BoundChange::discarded: return "discarded";
    case sampling::BoundChange::none: break;
  }
  return "none";
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& s, int row) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) {
    // from_chars rejects "inf"/"nan" spellings produced by other tools.
    if (s == "nan" || s == "NaN") return std::nan("");
    throw DataError("row " + std::to_string(row) + ": not a number: '" + s + "'");
  }
  return v;
}

json histogram_json(const analysis::Histogram& h) {
  return {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}};
}

void open_out(std::ofstream& f, const std::filesystem::path& path) {
  f.open(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

std::string metrics_line(const train::EpochMetrics& m) {
  json j = {{"epoch", m.epoch},
            {"episodes", m.episodes},
            {"L_min", m.L_min},
            {"L_max", m.L_max},
            {"mean_return_psd", m.mean_return_psd},
            {"mean_return_ext", m.mean_return_ext},
            {"encoder_loss", opt(m.encoder_loss)},
            {"actor_loss", opt(m.actor_loss)},
            {"critic_loss", opt(m.critic_loss)},
            {"alpha", m.alpha}};
  if (m.lambda_m) {
    j["lambda_m"] = *m.lambda_m;
    j["metra_reward_mean"] = opt(m.metra_reward_mean);
  }
  if (m.bounds_eval) {
    const auto& b = *m.bounds_eval;
    j["bounds_eval"] = {{"R_min", b.R_min},
                        {"R_max", b.R_max},
                        {"min_change", change_name(b.min_change)},
                        {"max_change", change_name(b.max_change)}};
  }
  return j.dump();
}

std::string downstream_line(const hierarchy::DownstreamEpoch& e) {
  return json{{"epoch", e.epoch},
              {"mean_task_return", e.mean_task_return},
              {"random_baseline_return", e.random_baseline_return}}
      .dump();
}

void write_trajectory_csv(std::ostream& out, const SkillTrajectory& traj) {
  const int T = traj.length();
  const auto nz = traj.z.size(), no = traj.states.cols(), na = traj.actions.cols();
  out << "t,L";
  for (Eigen::Index i = 0; i < nz; ++i) out << ",z_" << i;
  for (Eigen::Index i = 0; i < no; ++i) out << ",obs_" << i;
  for (Eigen::Index i = 0; i < na; ++i) out << ",act_" << i;
  out << ",r_psd,r_ext\n";
  const bool has_psd = traj.r_psd.size() == T, has_ext = traj.r_ext.size() == T;
  for (int t = 0; t < T; ++t) {
    out << t << ',' << traj.L;
    for (Eigen::Index i = 0; i < nz; ++i) out << ',' << format_number(traj.z(i));
    for (Eigen::Index i = 0; i < no; ++i) out << ',' << format_number(traj.states(t, i));
    for (Eigen::Index i = 0; i < na; ++i) out << ',' << format_number(traj.actions(t, i));
    out << ',' << (has_psd ? format_number(traj.r_psd(t)) : "nan");
    out << ',' << (has_ext ? format_number(traj.r_ext(t)) : "nan") << '\n';
  }
}

void write_trajectory_csv(const std::filesystem::path& path, const SkillTrajectory& traj) {
  std::ofstream f;
  open_out(f, path);
  write_trajectory_csv(f, traj);
}

TrajectoryTable read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("row 1: empty file, expected a header");
  const std::vector<std::string> header = split(line);
  if (header.size() < 4 || header[0] != "t" || header[1] != "L")
    throw DataError("row 1: header must start with 't,L'");
  if (header[header.size() - 2] != "r_psd" || header.back() != "r_ext")
    throw DataError("row 1: header must end with 'r_psd,r_ext'");

  // Columns must appear as z_0.., obs_0.., act_0.. in that order.
  int nz = 0, no = 0, na = 0;
  std::size_t c = 2;
  const std::size_t last = header.size() - 2;
  while (c < last && header[c] == "z_" + std::to_string(nz)) ++nz, ++c;
  while (c < last && header[c] == "obs_" + std::to_string(no)) ++no, ++c;
  while (c < last && header[c] == "act_" + std::to_string(na)) ++na, ++c;
  if (c != last) throw DataError("row 1: unexpected column '" + header[c] + "'");
  if (no == 0 || na == 0) throw DataError("row 1: need at least one obs_ and one act_ column");

  std::vector<std::vector<double>> rows;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(cells.size()));
    std::vector<double> v;
    v.reserve(cells.size());
    for (const auto& c : cells) v.push_back(parse_double(c, row));
    if (v[0] != static_cast<double>(rows.size()))
      throw DataError("row " + std::to_string(row) + ": t must count up from 0");
    if (!rows.empty() && v[1] != rows.front()[1])
      throw DataError("row " + std::to_string(row) + ": L changes within one trajectory");
    rows.push_back(std::move(v));
  }
  if (rows.empty()) throw DataError("row 2: no data rows");

  TrajectoryTable tab;
  const auto T = static_cast<Eigen::Index>(rows.size());
  tab.L = static_cast<int>(rows.front()[1]);
  tab.z.resize(nz);
  tab.obs.resize(T, no);
  tab.act.resize(T, na);
  tab.r_psd.resize(T);
  tab.r_ext.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& r = rows[static_cast<std::size_t>(t)];
    std::size_t c = 2;
    for (int i = 0; i < nz; ++i, ++c)
      if (t == 0) tab.z(i) = r[c];
    for (int i = 0; i < no; ++i, ++c) tab.obs(t, i) = r[c];
    for (int i = 0; i < na; ++i, ++c) tab.act(t, i) = r[c];
    tab.r_psd(t) = r[c++];
    tab.r_ext(t) = r[c];
  }
  return tab;
}

TrajectoryTable read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path.string());
  try {
    return read_trajectory_csv(f);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_latent_csv(std::ostream& out, int L, const Matrix& latents) {
  out << "t,L";
  for (Eigen::Index i = 0; i < latents.cols(); ++i) out << ",z_" << i;
  out << '\n';
  for (Eigen::Index t = 0; t < latents.rows(); ++t) {
    out << t << ',' << L;
    for (Eigen::Index i = 0; i < latents.cols(); ++i) out << ',' << format_number(latents(t, i));
    out << '\n';
  }
}

void write_pca_csv(std::ostream& out, const std::vector<int>& Ls, const std::vector<Matrix>& projected) {
  if (Ls.size() != projected.size()) throw DataError("write_pca_csv: one L per projected block");
  out << "t,L,pc1,pc2\n";
  for (std::size_t k = 0; k < Ls.size(); ++k) {
    const Matrix& p = projected[k];
    if (p.cols() < 2) throw DataError("write_pca_csv: need two components");
    for (Eigen::Index t = 0; t < p.rows(); ++t)
      out << t << ',' << Ls[k] << ',' << format_number(p(t, 0)) << ',' << format_number(p(t, 1)) << '\n';
  }
}

std::vector<SpectrumRow> spectrum_rows(int skill_id, int L, const analysis::Spectrum& s) {
  std::vector<SpectrumRow> rows;
  int rank = 1;
  for (const auto& [f, a] : s.top_k) rows.push_back({skill_id, L, f, a, rank++});
  return rows;
}

void write_spectrum_csv(std::ostream& out, const std::vector<SpectrumRow>& rows) {
  out << "skill_id,L,freq,amp,rank\n";
  for (const auto& r : rows)
    out << r.skill_id << ',' << r.L << ',' << format_number(r.freq) << ',' << format_number(r.amp) << ','
        << r.rank << '\n';
}

std::string geometry_json(const analysis::GeometryReport& r) {
  const double chord = r.L * std::sin(M_PI / (2.0 * r.L));
  json j = {{"L", r.L},
            {"optimal_onestep", chord},
            {"optimal_Lstep", static_cast<double>(r.L)},
            {"onestep_mean", r.onestep_mean},
            {"Lstep_mean", r.Lstep_mean},
            {"antipodal_mean", r.antipodal_mean},
            {"rel_err_onestep", r.rel_err_onestep},
            {"rel_err_Lstep", r.rel_err_Lstep},
            {"onestep_hist", histogram_json(r.onestep)},
            {"Lstep_hist", histogram_json(r.Lstep)}};
  return j.dump(2);
}

}  // namespace psd::io
