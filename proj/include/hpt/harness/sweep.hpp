#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "hpt/errors.hpp"
#include "hpt/harness/metrics.hpp"

namespace hpt::harness {

inline const std::vector<std::string>& sweep_parameters() {
  static const std::vector<std::string> names{"t", "eps", "kappa", "M", "b", "gamma"};
  return names;
}

struct SweepRow {
  std::string value;
  bool ran = false;
  std::string note;  // reason when skipped
  AttackReport report;
};

struct SweepTable {
  std::string parameter;
  std::vector<SweepRow> rows;
};

/// Runs `attack` once per value. A value the runner rejects with an
/// InputError/ValidationError (e.g. M larger than the attacker pool) is
/// skipped and the reason recorded.
inline SweepTable sweep(const std::string& parameter, const std::vector<std::string>& values,
                        const std::function<AttackReport(const std::string&)>& attack) {
  const auto& known = sweep_parameters();
  if (std::find(known.begin(), known.end(), parameter) == known.end()) {
    throw ValidationError("sweep: unknown parameter '" + parameter + "' (expected t, eps, kappa, M, b or gamma)");
  }
  if (values.empty()) throw ValidationError("sweep: no values given");
  SweepTable table{parameter, {}};
  for (const auto& v : values) {
    SweepRow row{v, false, {}, {}};
    try {
      row.report = attack(v);
      row.ran = true;
    } catch (const InputError& e) {
      row.note = e.what();
    } catch (const ValidationError& e) {
      row.note = e.what();
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline std::string sweep_csv(const SweepTable& t) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << t.parameter << ",ran,ta,pa_ta,asr,n_flip,mse,note\n";
  for (const auto& r : t.rows) {
    os << r.value << ',' << (r.ran ? 1 : 0) << ',';
    if (r.ran) {
      os << r.report.ta << ',' << r.report.pa_ta << ',' << r.report.asr << ',' << r.report.n_flip << ','
         << r.report.mse;
    } else {
      os << ",,,,";
    }
    std::string note = r.note;
    std::replace(note.begin(), note.end(), ',', ';');
    std::replace(note.begin(), note.end(), '\n', ' ');
    os << ',' << note << '\n';
  }
  return os.str();
}

/// Line plot of ASR, PA-TA and TA (percent) over the swept values; values
/// are placed at equal spacing in the given order.
inline std::string sweep_svg(const SweepTable& t) {
  constexpr double W = 520, H = 320, L = 60, R = 110, T = 30, B = 50;
  const double pw = W - L - R, ph = H - T - B;
  const std::size_t n = t.rows.size();
  auto x_at = [&](std::size_t i) { return L + (n > 1 ? pw * static_cast<double>(i) / static_cast<double>(n - 1) : pw / 2); };
  auto y_at = [&](double pct) { return T + ph * (1.0 - std::clamp(pct, 0.0, 100.0) / 100.0); };

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\">sweep over " << t.parameter << "</text>\n";
  for (int p = 0; p <= 100; p += 25) {
    os << "<line x1=\"" << L << "\" x2=\"" << L + pw << "\" y1=\"" << y_at(p) << "\" y2=\"" << y_at(p)
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << y_at(p) + 4 << "\" text-anchor=\"end\">" << p << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i)
    os << "<text x=\"" << x_at(i) << "\" y=\"" << T + ph + 18 << "\" text-anchor=\"middle\">" << t.rows[i].value
       << "</text>\n";
  os << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << t.parameter << "</text>\n";
  os << "<text x=\"16\" y=\"" << T + ph / 2 << "\" transform=\"rotate(-90 16 " << T + ph / 2
     << ")\" text-anchor=\"middle\">percent</text>\n";

  struct Series {
    const char* name;
    const char* color;
    double AttackReport::*field;
  };
  const Series series[] = {{"ASR", "#c0392b", &AttackReport::asr},
                           {"PA-TA", "#2471a3", &AttackReport::pa_ta},
                           {"TA", "#7f8c8d", &AttackReport::ta}};
  int k = 0;
  for (const auto& s : series) {
    std::ostringstream pts;
    pts << std::fixed << std::setprecision(2);
    for (std::size_t i = 0; i < n; ++i) {
      if (!t.rows[i].ran) continue;
      const double y = y_at(t.rows[i].report.*s.field);
      pts << x_at(i) << ',' << y << ' ';
      os << "<circle cx=\"" << x_at(i) << "\" cy=\"" << y << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"" << pts.str() << "\"/>\n";
    const double ly = T + 12 + 18 * k++;
    os << "<line x1=\"" << W - R + 12 << "\" x2=\"" << W - R + 32 << "\" y1=\"" << ly << "\" y2=\"" << ly
       << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 38 << "\" y=\"" << ly + 4 << "\">" << s.name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace hpt::harness
