#pragma once

// Report generation: reads evaluation CSVs, emits a markdown summary with the
// per-system table and best-alpha picks, plus two deterministic SVG plots of
// the alpha sweep (one per metric).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nnvme/evaluate.hpp"

namespace nnvme {

inline std::vector<EvalRow> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<EvalRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    EvalRow r;
    std::getline(ss, r.system, ',');
    std::getline(ss, field, ',');
    r.sample_id = std::stoi(field);
    std::getline(ss, field, ',');
    r.alpha = field.empty() ? std::nan("") : std::stod(field);
    std::getline(ss, field, ',');
    r.sdr_vm = field.empty() ? std::nan("") : std::stod(field);
    std::getline(ss, field, ',');
    r.sdr_bf = std::stod(field);
    std::getline(ss, field, ',');
    std::stringstream ps(field);
    std::string tok;
    while (std::getline(ps, tok, '|')) r.permutation.push_back(std::stoi(tok));
    std::getline(ss, field, ',');
    r.t60 = std::stod(field);
    std::getline(ss, field, ',');
    r.sir_mean = std::stod(field);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw std::runtime_error("empty evaluation CSV: " + path);
  return rows;
}

namespace reportdetail {

inline std::string fmt(double v, int decimals = 2) {
  if (std::isnan(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

struct Point {
  double alpha, value;
};

// Minimal line plot: fixed 520x360 canvas, axes, polyline, circle markers,
// numeric tick labels. All coordinates printed at fixed precision so the
// bytes are a pure function of the input.
inline void write_svg(const std::string& path, const std::string& title,
                      std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.alpha < b.alpha; });
  double lo = 1e300, hi = -1e300;
  for (const auto& p : pts) {
    lo = std::min(lo, p.value);
    hi = std::max(hi, p.value);
  }
  if (hi - lo < 1.0) {
    hi += 0.5;
    lo -= 0.5;
  }
  const double W = 520, H = 360, ml = 70, mr = 20, mt = 40, mb = 50;
  auto X = [&](double a) { return ml + a * (W - ml - mr); };
  auto Y = [&](double v) { return H - mb - (v - lo) / (hi - lo) * (H - mt - mb); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"520\" height=\"360\" "
         "font-family=\"monospace\" font-size=\"12\">\n";
  out << "<text x=\"" << num(W / 2) << "\" y=\"20\" text-anchor=\"middle\">" << title
      << "</text>\n";
  out << "<line x1=\"" << num(ml) << "\" y1=\"" << num(H - mb) << "\" x2=\"" << num(W - mr)
      << "\" y2=\"" << num(H - mb) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << num(ml) << "\" y1=\"" << num(mt) << "\" x2=\"" << num(ml)
      << "\" y2=\"" << num(H - mb) << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double a = i / 5.0;
    out << "<text x=\"" << num(X(a)) << "\" y=\"" << num(H - mb + 18)
        << "\" text-anchor=\"middle\">" << num(a) << "</text>\n";
    const double v = lo + (hi - lo) * i / 5.0;
    out << "<text x=\"" << num(ml - 8) << "\" y=\"" << num(Y(v) + 4)
        << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
  out << "<text x=\"" << num(W / 2) << "\" y=\"" << num(H - 10)
      << "\" text-anchor=\"middle\">alpha</text>\n";
  if (!pts.empty()) {
    out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
      out << (i ? " " : "") << num(X(pts[i].alpha)) << ',' << num(Y(pts[i].value));
    out << "\"/>\n";
    for (const auto& p : pts)
      out << "<circle cx=\"" << num(X(p.alpha)) << "\" cy=\"" << num(Y(p.value))
          << "\" r=\"3\" fill=\"steelblue\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace reportdetail

// Writes <out_dir>/report.md, sdr_vm_vs_alpha.svg, sdr_bf_vs_alpha.svg.
inline void write_report(const std::string& out_dir, const std::vector<EvalRow>& rows) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const auto summaries = summarize(rows);

  std::vector<reportdetail::Point> vm_pts, bf_pts;
  const SystemSummary* best_vm = nullptr;
  const SystemSummary* best_bf = nullptr;
  for (const auto& s : summaries) {
    if (s.system != "vm") continue;
    vm_pts.push_back({s.alpha, s.mean_sdr_vm});
    bf_pts.push_back({s.alpha, s.mean_sdr_bf});
    if (!best_vm || s.mean_sdr_vm > best_vm->mean_sdr_vm) best_vm = &s;
    if (!best_bf || s.mean_sdr_bf > best_bf->mean_sdr_bf) best_bf = &s;
  }
  reportdetail::write_svg((fs::path(out_dir) / "sdr_vm_vs_alpha.svg").string(),
                          "SDR_VM (dB) vs alpha", vm_pts);
  reportdetail::write_svg((fs::path(out_dir) / "sdr_bf_vs_alpha.svg").string(),
                          "SDR_BF (dB) vs alpha", bf_pts);

  std::ofstream md((fs::path(out_dir) / "report.md").string());
  if (!md) throw std::runtime_error("cannot write report.md");
  md << "# Evaluation summary\n\n";
  md << "SDR uses orthogonal projection onto the reference and is clamped to +-60 dB.\n";
  md << "Beamformer permutations are resolved by projection-based SIR.\n\n";
  md << "| system | alpha | SDR_VM (dB) | SDR_BF (dB) | samples |\n";
  md << "|---|---|---|---|---|\n";
  for (const auto& s : summaries)
    md << "| " << s.system << " | " << reportdetail::fmt(s.alpha, 1) << " | "
       << reportdetail::fmt(s.mean_sdr_vm) << " | " << reportdetail::fmt(s.mean_sdr_bf) << " | "
       << s.count << " |\n";
  md << "\n";
  if (best_vm)
    md << "Best alpha for SDR_VM: " << reportdetail::fmt(best_vm->alpha, 1) << " ("
       << reportdetail::fmt(best_vm->mean_sdr_vm) << " dB)\n\n";
  if (best_bf)
    md << "Best alpha for SDR_BF: " << reportdetail::fmt(best_bf->alpha, 1) << " ("
       << reportdetail::fmt(best_bf->mean_sdr_bf) << " dB)\n\n";
  md << "![SDR_VM vs alpha](sdr_vm_vs_alpha.svg)\n";
  md << "![SDR_BF vs alpha](sdr_bf_vs_alpha.svg)\n";
}

}  // namespace nnvme
