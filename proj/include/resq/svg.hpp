#pragma once

// Minimal static SVG rendering for report figures.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "resq/core_model.hpp"
#include "resq/tls_analysis.hpp"

namespace resq::svg {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  bool log = false;
  std::string label;

  double unit(double v) const {
    if (log) return (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo));
    return (v - lo) / (hi - lo);
  }

  std::vector<double> ticks() const {
    std::vector<double> t;
    if (log) {
      for (double e = std::ceil(std::log10(lo)); e <= std::floor(std::log10(hi)); e += 1.0) {
        t.push_back(std::pow(10.0, e));
      }
      return t;
    }
    const double raw = (hi - lo) / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double step = raw / mag < 2.0 ? 2.0 * mag : raw / mag < 5.0 ? 5.0 * mag : 10.0 * mag;
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) {
      t.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
    }
    return t;
  }

  /// Range covering the finite (and, for log axes, positive) values with margin.
  static Axis fit(std::span<const double> values, bool log, std::string label) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double v : values) {
      if (!std::isfinite(v) || (log && !(v > 0.0))) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!std::isfinite(lo)) {
      lo = log ? 1.0 : 0.0;
      hi = log ? 10.0 : 1.0;
    }
    if (log) {
      const double l = std::log10(lo);
      const double h = std::log10(hi);
      const double pad = std::max(0.05 * (h - l), 0.1);
      return {std::pow(10.0, l - pad), std::pow(10.0, h + pad), true, std::move(label)};
    }
    const double pad = hi > lo ? 0.05 * (hi - lo) : std::max(std::abs(lo), 1.0) * 0.05;
    return {lo - pad, hi + pad, false, std::move(label)};
  }
};

class Panel {
 public:
  Panel(double x, double y, double w, double h, Axis xa, Axis ya, std::string title)
      : x_(x), y_(y), w_(w), h_(h), xa_(std::move(xa)), ya_(std::move(ya)), title_(std::move(title)) {}

  void line(std::span<const double> xs, std::span<const double> ys, const std::string& color) {
    std::string pts;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!visible(xs[i], ys[i])) continue;
      pts += fmt(px(xs[i])) + "," + fmt(py(ys[i])) + " ";
    }
    body_ += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"" + pts +
             "\"/>\n";
  }

  void points(std::span<const double> xs, std::span<const double> ys, const std::string& color) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!visible(xs[i], ys[i])) continue;
      body_ += "<circle cx=\"" + fmt(px(xs[i])) + "\" cy=\"" + fmt(py(ys[i])) +
               "\" r=\"1.8\" fill=\"" + color + "\"/>\n";
    }
  }

  void error_bars(std::span<const double> xs, std::span<const double> lo, std::span<const double> hi,
                  const std::string& color) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!visible(xs[i], lo[i]) || !visible(xs[i], hi[i])) continue;
      body_ += "<line x1=\"" + fmt(px(xs[i])) + "\" y1=\"" + fmt(py(lo[i])) + "\" x2=\"" +
               fmt(px(xs[i])) + "\" y2=\"" + fmt(py(hi[i])) + "\" stroke=\"" + color + "\"/>\n";
    }
  }

  std::string render() const {
    std::string s = "<g>\n<rect x=\"" + fmt(x_) + "\" y=\"" + fmt(y_) + "\" width=\"" + fmt(w_) +
                    "\" height=\"" + fmt(h_) + "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double t : xa_.ticks()) {
      const double X = px(t);
      s += "<line x1=\"" + fmt(X) + "\" y1=\"" + fmt(y_ + h_) + "\" x2=\"" + fmt(X) + "\" y2=\"" +
           fmt(y_ + h_ + 4) + "\" stroke=\"black\"/>\n";
      s += "<text x=\"" + fmt(X) + "\" y=\"" + fmt(y_ + h_ + 16) +
           "\" font-size=\"10\" text-anchor=\"middle\">" + fmt(t) + "</text>\n";
    }
    for (double t : ya_.ticks()) {
      const double Y = py(t);
      s += "<line x1=\"" + fmt(x_ - 4) + "\" y1=\"" + fmt(Y) + "\" x2=\"" + fmt(x_) + "\" y2=\"" +
           fmt(Y) + "\" stroke=\"black\"/>\n";
      s += "<text x=\"" + fmt(x_ - 6) + "\" y=\"" + fmt(Y + 3) +
           "\" font-size=\"10\" text-anchor=\"end\">" + fmt(t) + "</text>\n";
    }
    s += "<text x=\"" + fmt(x_ + w_ / 2) + "\" y=\"" + fmt(y_ + h_ + 32) +
         "\" font-size=\"12\" text-anchor=\"middle\">" + xa_.label + "</text>\n";
    s += "<text transform=\"translate(" + fmt(x_ - 48) + "," + fmt(y_ + h_ / 2) +
         ") rotate(-90)\" font-size=\"12\" text-anchor=\"middle\">" + ya_.label + "</text>\n";
    s += "<text x=\"" + fmt(x_ + w_ / 2) + "\" y=\"" + fmt(y_ - 8) +
         "\" font-size=\"13\" text-anchor=\"middle\">" + title_ + "</text>\n";
    s += "<svg x=\"" + fmt(x_) + "\" y=\"" + fmt(y_) + "\" width=\"" + fmt(w_) + "\" height=\"" +
         fmt(h_) + "\" viewBox=\"" + fmt(x_) + " " + fmt(y_) + " " + fmt(w_) + " " + fmt(h_) +
         "\" overflow=\"hidden\">\n" + body_ + "</svg>\n</g>\n";
    return s;
  }

 private:
  bool visible(double x, double y) const {
    return std::isfinite(x) && std::isfinite(y) && (!xa_.log || x > 0.0) && (!ya_.log || y > 0.0);
  }
  double px(double v) const { return x_ + w_ * xa_.unit(v); }
  double py(double v) const { return y_ + h_ * (1.0 - ya_.unit(v)); }

  double x_, y_, w_, h_;
  Axis xa_, ya_;
  std::string title_;
  std::string body_;
};

inline std::string document(double width, double height, const std::vector<Panel>& panels) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) + "\" height=\"" +
                  fmt(height) + "\" viewBox=\"0 0 " + fmt(width) + " " + fmt(height) +
                  "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& p : panels) s += p.render();
  s += "</svg>\n";
  return s;
}

inline constexpr const char* kDataColor = "#1f77b4";
inline constexpr const char* kModelColor = "#d62728";

/// Complex-plane view with the fitted model, next to |S21| against detuning.
inline std::string resonance_plot(const ComplexTransmissionTrace& trace, const NotchModelParams& fit) {
  std::vector<double> re, im, df, mag;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    re.push_back(trace.s21[i].real());
    im.push_back(trace.s21[i].imag());
    df.push_back((trace.frequencies[i] - fit.f_r) * 1e-3);
    mag.push_back(std::abs(trace.s21[i]));
  }
  constexpr std::size_t kModelSamples = 800;
  std::vector<double> mre, mim, mdf, mmag;
  const double f0 = trace.frequencies.front();
  const double f1 = trace.frequencies.back();
  for (std::size_t i = 0; i < kModelSamples; ++i) {
    const double f = f0 + (f1 - f0) * static_cast<double>(i) / (kModelSamples - 1);
    const cplx s = s21_notch(fit, f);
    mre.push_back(s.real());
    mim.push_back(s.imag());
    mdf.push_back((f - fit.f_r) * 1e-3);
    mmag.push_back(std::abs(s));
  }

  std::vector<double> both(re);
  both.insert(both.end(), im.begin(), im.end());
  Axis square = Axis::fit(both, false, "");
  Axis ax_re = square;
  ax_re.label = "Re S21";
  Axis ax_im = square;
  ax_im.label = "Im S21";
  Panel circle(70, 40, 360, 360, ax_re, ax_im, "complex plane");
  circle.points(re, im, kDataColor);
  circle.line(mre, mim, kModelColor);

  Panel amplitude(530, 40, 420, 360, Axis::fit(df, false, "f - f_r (kHz)"),
                  Axis::fit(mag, false, "|S21|"), "transmission magnitude");
  amplitude.points(df, mag, kDataColor);
  amplitude.line(mdf, mmag, kModelColor);
  return document(990, 460, {circle, amplitude});
}

/// <Q_i>(n) on log-log axes with +-1 std bars and the fitted loss model.
inline std::string tls_plot(const EnsembleCurve& curve, const TLSParams& fit) {
  std::vector<double> n, q, lo, hi;
  for (const auto& b : curve.bins) {
    n.push_back(b.n_center);
    q.push_back(b.mean_q_i);
    lo.push_back(std::max(b.mean_q_i - b.std_q_i, 1e-300));
    hi.push_back(b.mean_q_i + b.std_q_i);
  }
  Axis xa = Axis::fit(n, true, "photon number n");
  std::vector<double> mn, mq;
  for (int i = 0; i <= 400; ++i) {
    const double x = std::pow(10.0, std::log10(xa.lo) + (std::log10(xa.hi) - std::log10(xa.lo)) * i / 400.0);
    mn.push_back(x);
    mq.push_back(1.0 / tls_delta(x, fit));
  }
  std::vector<double> all(q);
  all.insert(all.end(), hi.begin(), hi.end());
  all.insert(all.end(), lo.begin(), lo.end());
  all.insert(all.end(), mq.begin(), mq.end());
  Panel p(80, 40, 560, 400, xa, Axis::fit(all, true, "internal quality factor Q_i"), "TLS loss model");
  p.error_bars(n, lo, hi, kDataColor);
  p.points(n, q, kDataColor);
  p.line(mn, mq, kModelColor);
  return document(680, 500, {p});
}

}  // namespace resq::svg
