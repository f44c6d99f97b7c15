#include "vinlab/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace vinlab {

namespace {

constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s = buf;
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

// Full round-trip precision for the recorded data range.
std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string escape(const std::string& s) {
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

std::string unescape(const std::string& s) {
  std::string out = s;
  for (auto [from, to] : {std::pair{"&lt;", "<"}, {"&gt;", ">"}, {"&quot;", "\""}, {"&amp;", "&"}}) {
    for (std::size_t p = 0; (p = out.find(from, p)) != std::string::npos; p += std::string(to).size()) {
      out.replace(p, std::string(from).size(), to);
    }
  }
  return out;
}

}  // namespace

std::string render_line_chart(const std::vector<Series>& series, const ChartOptions& o) {
  if (series.empty()) throw std::invalid_argument("plot: no series");
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    if (s.x.empty() || s.x.size() != s.y.size()) throw std::invalid_argument("plot: series '" + s.label + "' is empty or ragged");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) throw std::invalid_argument("plot: non-finite point");
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  // degenerate ranges get a unit span so the mapping stays defined
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;

  const double W = o.width, H = o.height;
  const double pw = W - kLeft - kRight, ph = H - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return kTop + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << o.width << "\" height=\"" << o.height
     << "\" viewBox=\"0 0 " << o.width << ' ' << o.height << "\" data-x-min=\"" << exact(x0) << "\" data-x-max=\""
     << exact(x1) << "\" data-y-min=\"" << exact(y0) << "\" data-y-max=\"" << exact(y1) << "\" data-plot=\""
     << num(kLeft) << ' ' << num(kTop) << ' ' << num(pw) << ' ' << num(ph) << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << o.width << "\" height=\"" << o.height << "\" fill=\"white\"/>\n";
  if (!o.title.empty()) {
    os << "<text x=\"" << num(W / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(o.title)
       << "</text>\n";
  }
  // axes and ticks
  os << "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n";
  os << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop + ph) << "\" x2=\"" << num(kLeft + pw) << "\" y2=\""
     << num(kTop + ph) << "\"/>\n";
  os << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(kLeft) << "\" y2=\""
     << num(kTop + ph) << "\"/>\n";
  os << "</g>\n<g font-size=\"11\" fill=\"black\">\n";
  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double xv = x0 + (x1 - x0) * i / kTicks;
    const double yv = y0 + (y1 - y0) * i / kTicks;
    os << "<text x=\"" << num(sx(xv)) << "\" y=\"" << num(kTop + ph + 16) << "\" text-anchor=\"middle\">" << num(xv)
       << "</text>\n";
    os << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(sy(yv) + 4) << "\" text-anchor=\"end\">" << num(yv)
       << "</text>\n";
  }
  os << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(H - 12) << "\" text-anchor=\"middle\">"
     << escape(o.x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << num(kTop + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << num(kTop + ph / 2) << ")\">" << escape(o.y_label) << "</text>\n";
  os << "</g>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" data-label=\"" << escape(s.label)
       << "\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) os << ' ';
      os << num(sx(s.x[i])) << ',' << num(sy(s.y[i]));
    }
    os << "\"/>\n";
    const double ly = kTop + 14 + 18 * static_cast<double>(k);
    os << "<line x1=\"" << num(kLeft + pw + 12) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(kLeft + pw + 32)
       << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << num(kLeft + pw + 36) << "\" y=\"" << num(ly) << "\" font-size=\"11\">" << escape(s.label)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

ParsedChart parse_line_chart(const std::string& svg) {
  ParsedChart c;
  auto attr = [&](const std::string& name) {
    const std::regex re(name + "=\"([^\"]*)\"");
    std::smatch m;
    if (!std::regex_search(svg, m, re)) throw std::invalid_argument("plot: missing attribute " + name);
    return m[1].str();
  };
  c.x_min = std::stod(attr("data-x-min"));
  c.x_max = std::stod(attr("data-x-max"));
  c.y_min = std::stod(attr("data-y-min"));
  c.y_max = std::stod(attr("data-y-max"));
  double left = 0, top = 0, pw = 0, ph = 0;
  std::istringstream(attr("data-plot")) >> left >> top >> pw >> ph;

  const std::regex poly("<polyline[^>]*data-label=\"([^\"]*)\" points=\"([^\"]*)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), poly); it != std::sregex_iterator(); ++it) {
    c.labels.push_back(unescape((*it)[1].str()));
    std::vector<std::pair<double, double>> pts;
    std::istringstream ps((*it)[2].str());
    std::string pair;
    while (ps >> pair) {
      const auto comma = pair.find(',');
      const double px = std::stod(pair.substr(0, comma));
      const double py = std::stod(pair.substr(comma + 1));
      pts.emplace_back(c.x_min + (px - left) / pw * (c.x_max - c.x_min),
                       c.y_max - (py - top) / ph * (c.y_max - c.y_min));
    }
    c.polylines.push_back(std::move(pts));
  }
  return c;
}

}  // namespace vinlab
