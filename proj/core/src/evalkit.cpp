#include "advforge/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "advforge/error.hpp"
#include "bytes.hpp"

namespace advforge::eval {

const char* to_string(Rule r) { return to_string(source_of(r)); }

const char* to_string(Source s) {
  switch (s) {
    case Source::reg: return "reg";
    case Source::hist: return "hist";
    case Source::resid: return "resid";
    case Source::T1: return "T1";
    case Source::T2: return "T2";
    case Source::T3: return "T3";
    case Source::T4: return "T4";
  }
  return "?";
}

Rule parse_rule(const std::string& name) {
  if (name == "T1") return Rule::T1;
  if (name == "T2") return Rule::T2;
  if (name == "T3") return Rule::T3;
  if (name == "T4") return Rule::T4;
  throw InvalidInput("unknown combination rule '" + name + "'");
}

Source parse_source(const std::string& name) {
  if (name == "reg") return Source::reg;
  if (name == "hist") return Source::hist;
  if (name == "resid") return Source::resid;
  return source_of(parse_rule(name));
}

Source source_of(Rule r) {
  switch (r) {
    case Rule::T1: return Source::T1;
    case Rule::T2: return Source::T2;
    case Rule::T3: return Source::T3;
    case Rule::T4: return Source::T4;
  }
  return Source::T1;
}

bool combine(bool r, bool h, bool i, Rule rule) {
  switch (rule) {
    case Rule::T1: return r && h && i;
    case Rule::T2: return r || h || i;
    case Rule::T3: return (r && h) || (r && i) || (h && i);
    case Rule::T4: return h && (r || i);
  }
  return false;
}

bool combine(const VerdictRecord& rec, Rule rule) {
  if (!rec.r || !rec.h || !rec.i) {
    throw InvalidInput("combine: item '" + rec.item_id + "' is missing a detector verdict");
  }
  return combine(*rec.r, *rec.h, *rec.i, rule);
}

bool flag(const VerdictRecord& rec, Source src) {
  auto need = [&](const std::optional<bool>& v, const char* name) {
    if (!v) throw InvalidInput(fmt::format("item '{}' has no {} verdict", rec.item_id, name));
    return *v;
  };
  switch (src) {
    case Source::reg: return need(rec.r, "reg");
    case Source::hist: return need(rec.h, "hist");
    case Source::resid: return need(rec.i, "resid");
    case Source::T1: return combine(rec, Rule::T1);
    case Source::T2: return combine(rec, Rule::T2);
    case Source::T3: return combine(rec, Rule::T3);
    case Source::T4: return combine(rec, Rule::T4);
  }
  return false;
}

namespace {

Counts count_flags(std::span<const VerdictRecord> records, Source src, double theta,
                   bool sweep) {
  Counts c;
  for (const VerdictRecord& rec : records) {
    bool f;
    if (sweep) {
      if (!rec.residual_score) {
        throw InvalidInput("roc_sweep: item '" + rec.item_id + "' has no residual score");
      }
      VerdictRecord swept = rec;
      swept.i = *rec.residual_score < theta;
      f = flag(swept, src);
    } else {
      f = flag(rec, src);
    }
    if (rec.truth) {
      (f ? c.tp : c.fn)++;
    } else {
      (f ? c.fp : c.tn)++;
    }
  }
  return c;
}

PrecisionRecall rates(const Counts& c) {
  PrecisionRecall pr;
  pr.counts = c;
  if (c.tp + c.fp > 0) pr.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) pr.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return pr;
}

bool point_less(const CurvePoint& a, const CurvePoint& b) {
  if (a.fpr != b.fpr) return a.fpr < b.fpr;
  return a.tpr < b.tpr;
}

}  // namespace

PrecisionRecall precision_recall(std::span<const VerdictRecord> records, Source src) {
  return rates(count_flags(records, src, 0.0, false));
}

std::vector<double> theta_grid(int n) {
  if (n < 2) throw InvalidInput("theta_grid: need at least 2 points");
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) g[k] = static_cast<double>(k) / (n - 1);
  return g;
}

double auc_trapezoid(std::span<const CurvePoint> points) {
  std::vector<std::pair<double, double>> xy;
  xy.reserve(points.size() + 2);
  xy.emplace_back(0.0, 0.0);
  for (const CurvePoint& p : points) xy.emplace_back(p.fpr, p.tpr);
  xy.emplace_back(1.0, 1.0);
  std::sort(xy.begin(), xy.end());
  double area = 0.0;
  for (std::size_t k = 1; k < xy.size(); ++k) {
    area += (xy[k].first - xy[k - 1].first) * (xy[k].second + xy[k - 1].second) / 2.0;
  }
  return area;
}

Curve roc_sweep(std::span<const VerdictRecord> records, Source src,
                std::span<const double> grid) {
  std::vector<double> thetas(grid.begin(), grid.end());
  if (thetas.empty()) {
    std::set<double> distinct;
    for (const VerdictRecord& rec : records) {
      if (!rec.residual_score) {
        throw InvalidInput("roc_sweep: item '" + rec.item_id + "' has no residual score");
      }
      distinct.insert(*rec.residual_score);
    }
    thetas.assign(distinct.begin(), distinct.end());
    thetas.push_back(std::numeric_limits<double>::infinity());
  }
  Curve curve;
  curve.name = to_string(src);
  for (double theta : thetas) {
    const Counts c = count_flags(records, src, theta, true);
    const PrecisionRecall pr = rates(c);
    CurvePoint p;
    p.theta = theta;
    p.tpr = pr.recall.value_or(0.0);
    p.recall = p.tpr;
    p.precision = pr.precision;
    p.fpr = (c.fp + c.tn) > 0 ? static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn) : 0.0;
    curve.points.push_back(p);
  }
  std::stable_sort(curve.points.begin(), curve.points.end(), point_less);
  curve.auc = auc_trapezoid(curve.points);
  return curve;
}

namespace {

/// A monotone ROC polyline reduced to the segments used by the envelope.
struct Polyline {
  std::vector<double> x;
  std::vector<double> lo;  // lowest tpr reached at x (arrival)
  std::vector<double> hi;  // highest tpr reached at x (departure)

  explicit Polyline(const Curve& c) {
    std::vector<CurvePoint> pts = c.points;
    CurvePoint origin, corner;
    corner.fpr = corner.tpr = 1.0;
    pts.push_back(origin);
    pts.push_back(corner);
    std::sort(pts.begin(), pts.end(), point_less);
    for (const CurvePoint& p : pts) {
      if (!x.empty() && x.back() == p.fpr) {
        lo.back() = std::min(lo.back(), p.tpr);
        hi.back() = std::max(hi.back(), p.tpr);
      } else {
        x.push_back(p.fpr);
        lo.push_back(p.tpr);
        hi.push_back(p.tpr);
      }
    }
  }

  /// Departure value at t (the upper end of a vertical run).
  double at(double t) const {
    const auto it = std::upper_bound(x.begin(), x.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - x.begin()) - 1;
    if (x[k] == t || k + 1 == x.size()) return hi[k];
    const double s = (t - x[k]) / (x[k + 1] - x[k]);
    return hi[k] + s * (lo[k + 1] - hi[k]);
  }
  /// Arrival value at t (the lower end of a vertical run).
  double arrival(double t) const {
    const auto it = std::lower_bound(x.begin(), x.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - x.begin());
    if (k < x.size() && x[k] == t) return lo[k];
    return at(t);
  }
};

}  // namespace

Curve roc_envelope(std::span<const Curve> curves) {
  Curve env;
  env.name = "envelope";
  if (curves.empty()) {
    env.auc = auc_trapezoid(env.points);
    return env;
  }
  std::vector<Polyline> lines;
  std::set<double> xs;
  for (const Curve& c : curves) {
    lines.emplace_back(c);
    xs.insert(lines.back().x.begin(), lines.back().x.end());
  }
  const std::vector<double> bx(xs.begin(), xs.end());
  auto emit = [&](double x, double y) {
    CurvePoint p;
    p.theta = std::numeric_limits<double>::quiet_NaN();
    p.fpr = x;
    p.tpr = y;
    p.recall = y;
    if (!env.points.empty() && env.points.back().fpr == x && env.points.back().tpr == y) return;
    env.points.push_back(p);
  };
  for (std::size_t k = 0; k < bx.size(); ++k) {
    const double a = bx[k];
    double top_arrival = 0.0, top = 0.0;
    for (const Polyline& l : lines) {
      top_arrival = std::max(top_arrival, l.arrival(a));
      top = std::max(top, l.at(a));
    }
    emit(a, top_arrival);
    emit(a, top);
    if (k + 1 == bx.size()) break;
    const double b = bx[k + 1];
    // Each polyline is linear on (a, b); the max has kinks only at crossings.
    std::vector<double> cross;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const double ya_i = lines[i].at(a), yb_i = lines[i].arrival(b);
      for (std::size_t j = i + 1; j < lines.size(); ++j) {
        const double ya_j = lines[j].at(a), yb_j = lines[j].arrival(b);
        const double da = ya_i - ya_j, db = yb_i - yb_j;
        if ((da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0)) {
          cross.push_back(a + (b - a) * da / (da - db));
        }
      }
    }
    std::sort(cross.begin(), cross.end());
    for (double t : cross) {
      if (!(t > a && t < b)) continue;
      double y = 0.0;
      for (const Polyline& l : lines) y = std::max(y, l.at(t));
      emit(t, y);
    }
  }
  env.auc = auc_trapezoid(env.points);
  return env;
}

std::vector<VerdictRecord> join(std::span<const std::vector<VerdictRecord>> parts) {
  if (parts.empty()) return {};
  std::vector<VerdictRecord> out = parts.front();
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (!index.emplace(out[k].item_id, k).second) {
      throw InvalidInput("join: duplicate item_id '" + out[k].item_id + "'");
    }
  }
  for (std::size_t p = 1; p < parts.size(); ++p) {
    const auto& part = parts[p];
    if (part.size() != out.size()) throw InvalidInput("join: verdict files cover different items");
    std::set<std::string> seen;
    for (const VerdictRecord& rec : part) {
      const auto it = index.find(rec.item_id);
      if (it == index.end()) throw InvalidInput("join: unknown item_id '" + rec.item_id + "'");
      if (!seen.insert(rec.item_id).second) {
        throw InvalidInput("join: duplicate item_id '" + rec.item_id + "'");
      }
      VerdictRecord& dst = out[it->second];
      if (dst.truth != rec.truth) throw InvalidInput("join: truth disagrees for '" + rec.item_id + "'");
      auto merge = [&](std::optional<bool>& d, const std::optional<bool>& s, const char* name) {
        if (!s) return;
        if (d && *d != *s) {
          throw InvalidInput(fmt::format("join: conflicting {} verdict for '{}'", name, rec.item_id));
        }
        d = s;
      };
      merge(dst.r, rec.r, "reg");
      merge(dst.h, rec.h, "hist");
      merge(dst.i, rec.i, "resid");
      if (rec.residual_score) {
        if (dst.residual_score && *dst.residual_score != *rec.residual_score) {
          throw InvalidInput("join: conflicting residual score for '" + rec.item_id + "'");
        }
        dst.residual_score = rec.residual_score;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- CSV

namespace {

void check_id(const std::string& id) {
  if (id.empty() || id.find_first_of(",\"\r\n") != std::string::npos) {
    throw InvalidInput("item_id must be non-empty and free of commas, quotes and line breaks");
  }
}

std::string opt_bool(const std::optional<bool>& v) { return v ? (*v ? "1" : "0") : ""; }

std::optional<bool> parse_opt_bool(const std::string& s, std::size_t line) {
  if (s.empty()) return std::nullopt;
  if (s == "1") return true;
  if (s == "0") return false;
  throw InvalidInput(fmt::format("csv line {}: expected 0, 1 or empty, got '{}'", line, s));
}

std::vector<std::string> split_fields(const std::string& line) {
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

}  // namespace

std::string format_csv(std::span<const CsvRow> rows) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const CsvRow& row : rows) {
    const VerdictRecord& r = row.record;
    check_id(r.item_id);
    if (row.rule.find_first_of(",\"\r\n") != std::string::npos) {
      throw InvalidInput("csv rule label must not contain commas, quotes or line breaks");
    }
    out += fmt::format("{},{},{},{},{},{},{},{}\n", r.item_id, r.truth ? 1 : 0, opt_bool(r.r),
                       opt_bool(r.h), opt_bool(r.i),
                       r.residual_score ? fmt::format("{:.17g}", *r.residual_score) : "", row.rule,
                       row.flag ? 1 : 0);
  }
  return out;
}

std::vector<CsvRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw InvalidInput("csv: missing or unexpected header");
  }
  std::vector<CsvRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 8) throw InvalidInput(fmt::format("csv line {}: expected 8 fields", line_no));
    CsvRow row;
    row.record.item_id = f[0];
    check_id(f[0]);
    const auto truth = parse_opt_bool(f[1], line_no);
    const auto fl = parse_opt_bool(f[7], line_no);
    if (!truth || !fl) throw InvalidInput(fmt::format("csv line {}: truth and flag are required", line_no));
    row.record.truth = *truth;
    row.record.r = parse_opt_bool(f[2], line_no);
    row.record.h = parse_opt_bool(f[3], line_no);
    row.record.i = parse_opt_bool(f[4], line_no);
    if (!f[5].empty()) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(f[5], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != f[5].size()) throw InvalidInput(fmt::format("csv line {}: bad resid_score", line_no));
      row.record.residual_score = v;
    }
    row.rule = f[6];
    row.flag = *fl;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_csv(const std::filesystem::path& path, std::span<const CsvRow> rows) {
  const std::string text = format_csv(rows);
  detail::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<CsvRow> read_csv(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return parse_csv(std::string(bytes.begin(), bytes.end()));
}

std::vector<CsvRow> rule_rows(std::span<const VerdictRecord> records,
                              std::span<const Rule> rules) {
  std::vector<CsvRow> rows;
  rows.reserve(records.size() * rules.size());
  for (const VerdictRecord& rec : records) {
    for (Rule rule : rules) rows.push_back({rec, to_string(rule), combine(rec, rule)});
  }
  return rows;
}

std::vector<VerdictRecord> records_from_rows(std::span<const CsvRow> rows) {
  std::vector<VerdictRecord> out;
  std::unordered_map<std::string, std::size_t> index;
  for (const CsvRow& row : rows) {
    const auto [it, fresh] = index.emplace(row.record.item_id, out.size());
    if (fresh) {
      out.push_back(row.record);
      continue;
    }
    const VerdictRecord& a = out[it->second];
    const VerdictRecord& b = row.record;
    if (a.truth != b.truth || a.r != b.r || a.h != b.h || a.i != b.i ||
        a.residual_score != b.residual_score) {
      throw InvalidInput("csv: rows for item '" + b.item_id + "' disagree");
    }
  }
  return out;
}

}  // namespace advforge::eval
