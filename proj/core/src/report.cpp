#include "advforge/report.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "bytes.hpp"

namespace advforge::eval {

namespace {

bool has(std::span<const VerdictRecord> records, Source src) {
  if (records.empty()) return false;
  return std::all_of(records.begin(), records.end(), [&](const VerdictRecord& r) {
    switch (src) {
      case Source::reg: return r.r.has_value();
      case Source::hist: return r.h.has_value();
      case Source::resid: return r.i.has_value();
      default: return r.r && r.h && r.i;
    }
  });
}

bool has_scores(std::span<const VerdictRecord> records) {
  return !records.empty() &&
         std::all_of(records.begin(), records.end(),
                     [](const VerdictRecord& r) { return r.residual_score.has_value(); });
}

std::string pct(const std::optional<double>& v) {
  return v ? fmt::format("{:.1f}", 100.0 * *v) : std::string("n/a");
}

void put_text(const std::filesystem::path& path, const std::string& text) {
  detail::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> xy;
  bool dashed = false;
};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string plot_svg(const std::vector<Series>& series, const std::string& title,
                     const std::string& x_label, const std::string& y_label) {
  constexpr double kLeft = 60, kTop = 40, kSize = 360;
  auto px = [&](double x) { return kLeft + x * kSize; };
  auto py = [&](double y) { return kTop + (1.0 - y) * kSize; };
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\">\n",
      kLeft + kSize + 160, kTop + kSize + 60);
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += fmt::format("<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">{}</text>\n",
                     kLeft, escape(title));
  for (int k = 0; k <= 10; ++k) {
    const double t = k / 10.0;
    svg += fmt::format("<path d=\"M {:.2f} {:.2f} L {:.2f} {:.2f}\" stroke=\"#e0e0e0\" fill=\"none\"/>\n",
                       px(t), py(0), px(t), py(1));
    svg += fmt::format("<path d=\"M {:.2f} {:.2f} L {:.2f} {:.2f}\" stroke=\"#e0e0e0\" fill=\"none\"/>\n",
                       px(0), py(t), px(1), py(t));
    if (k % 2 == 0) {
      svg += fmt::format(
          "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
          "text-anchor=\"middle\">{:.1f}</text>\n",
          px(t), py(0) + 16, t);
      svg += fmt::format(
          "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
          "text-anchor=\"end\">{:.1f}</text>\n",
          px(0) - 6, py(t) + 4, t);
    }
  }
  svg += fmt::format(
      "<path d=\"M {:.2f} {:.2f} L {:.2f} {:.2f} L {:.2f} {:.2f}\" stroke=\"black\" fill=\"none\"/>\n",
      px(0), py(1), px(0), py(0), px(1), py(0));
  svg += fmt::format(
      "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
      "text-anchor=\"middle\">{}</text>\n",
      px(0.5), py(0) + 36, escape(x_label));
  svg += fmt::format(
      "<text x=\"16\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
      "text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2f})\">{}</text>\n",
      py(0.5), py(0.5), escape(y_label));
  for (std::size_t s = 0; s < series.size(); ++s) {
    const Series& ser = series[s];
    const char* color = kColors[s % std::size(kColors)];
    if (!ser.xy.empty()) {
      std::string d;
      for (std::size_t k = 0; k < ser.xy.size(); ++k) {
        d += fmt::format("{} {:.2f} {:.2f} ", k == 0 ? "M" : "L", px(ser.xy[k].first),
                         py(ser.xy[k].second));
      }
      d.pop_back();
      svg += fmt::format("<path d=\"{}\" stroke=\"{}\" stroke-width=\"{}\" fill=\"none\"{}/>\n", d,
                         color, ser.dashed ? 1.5 : 2, ser.dashed ? " stroke-dasharray=\"5 3\"" : "");
    }
    const double ly = kTop + 14 + 18.0 * static_cast<double>(s);
    svg += fmt::format("<path d=\"M {:.2f} {:.2f} L {:.2f} {:.2f}\" stroke=\"{}\" stroke-width=\"2\" fill=\"none\"/>\n",
                       px(1) + 16, ly, px(1) + 36, ly, color);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
                       px(1) + 42, ly + 4, escape(ser.name));
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<Curve> all_curves(const Summary& s) {
  std::vector<Curve> out = s.roc;
  if (s.envelope) out.push_back(*s.envelope);
  return out;
}

}  // namespace

Summary summarize(std::span<const VerdictRecord> records, std::span<const double> grid,
                  std::span<const Rule> rules) {
  Summary s;
  s.records = records.size();
  s.positives = static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const VerdictRecord& r) { return r.truth; }));
  std::vector<Source> sources{Source::reg, Source::hist, Source::resid};
  const bool combinable = has(records, Source::T1);
  if (combinable) {
    for (Rule rule : rules) sources.push_back(source_of(rule));
  }
  for (Source src : sources) {
    if (has(records, src)) s.rows.push_back({src, precision_recall(records, src)});
  }
  if (has_scores(records)) {
    if (combinable && !rules.empty()) {
      for (Rule rule : rules) s.roc.push_back(roc_sweep(records, source_of(rule), grid));
      s.envelope = roc_envelope(s.roc);
    } else {
      s.roc.push_back(roc_sweep(records, Source::resid, grid));
    }
  }
  return s;
}

std::string summary_markdown(const Summary& s, const std::string& title) {
  std::string md = fmt::format("# {}\n\n", title);
  md += fmt::format("Items: {} ({} adversarial, {} real)\n\n", s.records, s.positives,
                    s.records - s.positives);
  md += "| Detector | Precision (%) | Recall (%) | TP | FP | FN | TN |\n";
  md += "|---|---:|---:|---:|---:|---:|---:|\n";
  for (const SummaryRow& row : s.rows) {
    const Counts& c = row.pr.counts;
    md += fmt::format("| {} | {} | {} | {} | {} | {} | {} |\n", to_string(row.source),
                      pct(row.pr.precision), pct(row.pr.recall), c.tp, c.fp, c.fn, c.tn);
  }
  const auto curves = all_curves(s);
  if (!curves.empty()) {
    md += "\n| ROC curve | AUC |\n|---|---:|\n";
    for (const Curve& c : curves) md += fmt::format("| {} | {:.4f} |\n", c.name, c.auc);
  }
  return md;
}

std::string roc_svg(const Summary& s, const std::string& title) {
  std::vector<Series> series;
  for (const Curve& c : all_curves(s)) {
    Series ser{fmt::format("{} (AUC {:.3f})", c.name, c.auc), {{0.0, 0.0}}, c.name == "envelope"};
    for (const CurvePoint& p : c.points) ser.xy.emplace_back(p.fpr, p.tpr);
    ser.xy.emplace_back(1.0, 1.0);
    series.push_back(std::move(ser));
  }
  return plot_svg(series, title, "false positive rate", "true positive rate");
}

std::string pr_svg(const Summary& s, const std::string& title) {
  std::vector<Series> series;
  for (const Curve& c : s.roc) {
    Series ser{c.name, {}, false};
    for (const CurvePoint& p : c.points) {
      if (p.precision) ser.xy.emplace_back(p.recall, *p.precision);
    }
    std::stable_sort(ser.xy.begin(), ser.xy.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    series.push_back(std::move(ser));
  }
  return plot_svg(series, title, "recall", "precision");
}

ReportFiles write_report(const std::filesystem::path& dir, const std::string& title,
                         std::span<const VerdictRecord> records, std::span<const double> grid,
                         std::span<const Rule> rules) {
  const Summary s = summarize(records, grid, rules);
  ReportFiles files{dir / "verdicts.csv", dir / "summary.md", dir / "roc.svg", dir / "pr.svg"};
  std::vector<CsvRow> rows;
  if (has(records, Source::T1) && !rules.empty()) {
    rows = rule_rows(records, rules);
  } else {
    for (const VerdictRecord& rec : records) {
      for (Source src : {Source::reg, Source::hist, Source::resid}) {
        if (has(records, src)) rows.push_back({rec, to_string(src), flag(rec, src)});
      }
    }
  }
  write_csv(files.csv, rows);
  put_text(files.summary, summary_markdown(s, title));
  put_text(files.roc, roc_svg(s, title + ": ROC"));
  put_text(files.pr, pr_svg(s, title + ": precision/recall"));
  return files;
}

}  // namespace advforge::eval
