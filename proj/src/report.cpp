// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

#include "lec/report.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "lec/errors.h"
#include "lec/rng.h"

namespace lec {

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string md_cell(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct CurvePoint {
  std::size_t train_size;
  double mean, min, max;
  std::size_t n;
};

std::vector<CurvePoint> curve(const SweepResult& r, std::size_t layer) {
  std::vector<CurvePoint> out;
  for (std::size_t size : r.train_sizes) {
    CurvePoint p{size, 0.0, 0.0, 0.0, 0};
    double sum = 0.0;
    for (const auto& c : r.cells) {
      if (c.layer != layer || c.train_size != size) continue;
      p.min = p.n ? std::min(p.min, c.weighted_f1) : c.weighted_f1;
      p.max = p.n ? std::max(p.max, c.weighted_f1) : c.weighted_f1;
      sum += c.weighted_f1;
      ++p.n;
    }
    if (p.n == 0) continue;
    p.mean = sum / static_cast<double>(p.n);
    out.push_back(p);
  }
  return out;
}

constexpr std::string_view kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                         "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                         "#bcbd22", "#17becf"};

}  // namespace

std::vector<SweepResult> merge_results(std::vector<SweepResult> results) {
  if (results.empty()) throw ValidationError("no result files to merge");
  for (std::size_t i = 1; i < results.size(); ++i)
    if (results[i].test_hash != results[0].test_hash || results[i].test_n != results[0].test_n)
      throw ValidationError(fmt::format(
          "refusing to merge results evaluated on different test sets: {} (n={}, {}) vs {} (n={}, {})",
          hex64(results[0].test_hash), results[0].test_n, result_label(results[0]),
          hex64(results[i].test_hash), results[i].test_n, result_label(results[i])));
  return results;
}

std::string format_crossing_cell(const std::optional<Crossing>& crossing) {
  if (!crossing) return "never";
  return fmt::format("{:.2f} ({})", crossing->f1, crossing->train_size);
}

std::string result_label(const SweepResult& result) {
  if (result.mode == RunMode::sweep) return result.model_id;
  return fmt::format("{} [{}]", result.model_id, to_string(result.mode));
}

std::string crossing_table_markdown(std::span<const SweepResult> results,
                                    std::span<const Baseline> baselines) {
  std::string out = "| Model | Layer | Max Weighted F1 |";
  std::string rule = "|---|---:|---:|";
  for (const auto& b : baselines) {
    out += fmt::format(" F1 at # Examples to Beat {} ({:.2f}) |", md_cell(b.name), b.f1);
    rule += "---:|";
  }
  out += "\n" + rule + "\n";
  for (const auto& r : results) {
    const auto summary = summarize_crossings(r, baselines);
    for (const auto& ls : summary.layers) {
      out += fmt::format("| {} | {} | {:.2f} |", md_cell(result_label(r)), ls.layer, ls.max_f1);
      for (const auto& c : ls.crossings) out += fmt::format(" {} |", format_crossing_cell(c));
      out += '\n';
    }
  }
  return out;
}

std::string crossing_table_csv(std::span<const SweepResult> results,
                               std::span<const Baseline> baselines) {
  std::string out =
      "model,mode,layer,max_f1,baseline,baseline_f1,crossing_train_size,crossing_f1\n";
  for (const auto& r : results) {
    const auto summary = summarize_crossings(r, baselines);
    const std::string model = csv_field(r.model_id);
    const auto mode = to_string(r.mode);
    for (const auto& ls : summary.layers) {
      const std::string head = fmt::format("{},{},{},{:.6f}", model, mode, ls.layer, ls.max_f1);
      if (baselines.empty()) {
        out += head + ",,,,\n";
        continue;
      }
      for (std::size_t b = 0; b < baselines.size(); ++b) {
        out += fmt::format("{},{},{:.6f},", head, csv_field(baselines[b].name), baselines[b].f1);
        if (const auto& c = ls.crossings[b])
          out += fmt::format("{},{:.6f}\n", c->train_size, c->f1);
        else
          out += ",\n";
      }
    }
  }
  return out;
}

std::string learning_curves_csv(std::span<const SweepResult> results) {
  std::string out = "model,mode,layer,train_size,mean_f1,min_f1,max_f1,n_seeds\n";
  for (const auto& r : results) {
    const std::string model = csv_field(r.model_id);
    for (std::size_t layer : r.layers)
      for (const auto& p : curve(r, layer))
        out += fmt::format("{},{},{},{},{:.6f},{:.6f},{:.6f},{}\n", model, to_string(r.mode), layer,
                           p.train_size, p.mean, p.min, p.max, p.n);
  }
  return out;
}

std::string learning_curves_svg(const SweepResult& result, std::span<const Baseline> baselines) {
  constexpr double width = 760, height = 480;
  constexpr double left = 60, right = 170, top = 40, bottom = 50;
  constexpr double plot_w = width - left - right, plot_h = height - top - bottom;

  double lo = 1.0, hi = 10.0;
  if (!result.train_sizes.empty()) {
    lo = static_cast<double>(result.train_sizes.front());
    hi = static_cast<double>(result.train_sizes.back());
  }
  double log_lo = std::log10(std::max(lo, 1.0));
  double log_hi = std::log10(std::max(hi, 1.0));
  if (log_hi - log_lo < 1e-9) {
    log_lo -= 0.5;
    log_hi += 0.5;
  }
  auto x_of = [&](double size) {
    return left + (std::log10(size) - log_lo) / (log_hi - log_lo) * plot_w;
  };
  auto y_of = [&](double f1) { return top + (1.0 - std::clamp(f1, 0.0, 1.0)) * plot_h; };

  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "viewBox=\"0 0 {:.0f} {:.0f}\" font-family=\"sans-serif\" font-size=\"11\">\n",
      width, height, width, height);
  s += fmt::format("<rect width=\"{:.0f}\" height=\"{:.0f}\" fill=\"white\"/>\n", width, height);
  s += fmt::format("<text x=\"{:.1f}\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
                   left + plot_w / 2, xml_escape(result_label(result)));

  // Axes and grid.
  s += fmt::format(
      "<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" "
      "stroke=\"black\"/>\n",
      left, top, plot_w, plot_h);
  for (int i = 0; i <= 10; i += 2) {
    const double f1 = i / 10.0;
    const double y = y_of(f1);
    s += fmt::format(
        "<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#dddddd\"/>\n", left,
        y, left + plot_w, y);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.1f}</text>\n",
                     left - 6, y + 4, f1);
  }
  for (std::size_t size : result.train_sizes) {
    const double x = x_of(static_cast<double>(size));
    s += fmt::format(
        "<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#eeeeee\"/>\n", x,
        top, x, top + plot_h);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\" font-size=\"9\">{}</text>\n",
                     x, top + plot_h + 14, size);
  }
  s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">training examples (log scale)</text>\n",
                   left + plot_w / 2, height - 12);
  s += fmt::format(
      "<text x=\"16\" y=\"{:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1f})\">"
      "weighted F1</text>\n",
      top + plot_h / 2, top + plot_h / 2);

  double legend_y = top + 8;
  const double legend_x = left + plot_w + 16;
  for (std::size_t b = 0; b < baselines.size(); ++b) {
    const double y = y_of(baselines[b].f1);
    s += fmt::format(
        "<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"black\" "
        "stroke-dasharray=\"{}\"/>\n",
        left, y, left + plot_w, y, b % 2 ? "2,3" : "6,4");
    s += fmt::format(
        "<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"black\" "
        "stroke-dasharray=\"{}\"/>\n",
        legend_x, legend_y, legend_x + 20, legend_y, b % 2 ? "2,3" : "6,4");
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{} ({:.2f})</text>\n", legend_x + 26,
                     legend_y + 4, xml_escape(baselines[b].name), baselines[b].f1);
    legend_y += 16;
  }

  for (std::size_t i = 0; i < result.layers.size(); ++i) {
    const auto points = curve(result, result.layers[i]);
    const auto color = kPalette[i % std::size(kPalette)];
    std::string coords;
    for (const auto& p : points)
      coords += fmt::format("{}{:.1f},{:.1f}", coords.empty() ? "" : " ",
                            x_of(static_cast<double>(p.train_size)), y_of(p.mean));
    s += fmt::format(
        "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", color,
        coords);
    s += fmt::format(
        "<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"{}\" "
        "stroke-width=\"2\"/>\n",
        legend_x, legend_y, legend_x + 20, legend_y, color);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">layer {}</text>\n", legend_x + 26,
                     legend_y + 4, result.layers[i]);
    legend_y += 16;
  }
  s += "</svg>\n";
  return s;
}

}  // namespace lec
