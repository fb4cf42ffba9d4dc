#include "robinspec/errors.hpp"
#include "robinspec/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace robinspec {

namespace {

constexpr int kRootGrid = 200;

struct LineFit {
  double slope = 0.0;
  double sse = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - my - f.slope * (x[i] - mx);
    f.sse += r * r;
  }
  return f;
}

/// Nodes on one side of the root used for the log-log fit: walk away from
/// the root, skip the band itself, stop at other bands, at non-monotone
/// samples or after `window` nodes.
std::vector<int> side_window(const Eigen::VectorXd& xi, const Eigen::VectorXd& arc,
                             const std::vector<char>& in_band, const ZeroBand& band,
                             double root, int step, int window) {
  std::vector<int> nodes;
  const int n = static_cast<int>(xi.size());
  int k = step < 0 ? band.last : band.first;
  for (; k >= 0 && k < n; k += step) {
    const bool own = k >= band.first && k <= band.last;
    if (own && !band.dip) continue;
    if (step < 0 ? arc(k) >= root : arc(k) <= root) continue;
    if (!own && in_band[k]) break;
    if (!(xi(k) > 0.0)) break;
    if (!nodes.empty() && xi(k) < xi(nodes.back())) break;
    nodes.push_back(k);
    if (static_cast<int>(nodes.size()) == window) break;
  }
  return nodes;
}

struct SideFits {
  LineFit left, right;
  bool valid = false;
};

SideFits fit_sides(const Eigen::VectorXd& xi, const Eigen::VectorXd& arc,
                   const std::vector<char>& in_band, const ZeroBand& band, double root,
                   int window) {
  SideFits out;
  const double span = arc(arc.size() - 1) - arc(0);
  const std::vector<int> left = side_window(xi, arc, in_band, band, root, -1, window);
  const std::vector<int> right = side_window(xi, arc, in_band, band, root, +1, window);
  if (left.size() < 2 || right.size() < 2) return out;
  auto fit = [&](const std::vector<int>& nodes, LineFit& f) {
    std::vector<double> x, y;
    for (int k : nodes) {
      const double d = std::abs(arc(k) - root);
      if (d < 1e-12 * span) return false;
      x.push_back(std::log(d));
      y.push_back(std::log(xi(k)));
    }
    f = fit_line(x, y);
    return true;
  };
  out.valid = fit(left, out.left) && fit(right, out.right);
  return out;
}

void classify(const Eigen::VectorXd& xi, const Eigen::VectorXd& arc,
              const std::vector<char>& in_band, ZeroBand& band, int band_id,
              const SignOptions& opt) {
  const double lo = arc(band.first - 1), hi = arc(band.last + 1);
  SideFits best;
  double best_sse = std::numeric_limits<double>::infinity();
  for (int g = 1; g < kRootGrid; ++g) {
    const double root = lo + (hi - lo) * g / kRootGrid;
    const SideFits f = fit_sides(xi, arc, in_band, band, root, opt.fit_window);
    if (!f.valid) continue;
    const double sse = f.left.sse + f.right.sse;
    if (sse < best_sse) {
      best_sse = sse;
      best = f;
      band.root = root;
    }
  }
  const std::string where = "candidate zero at patch nodes " + std::to_string(band.first) + ".." +
                            std::to_string(band.last);
  if (!best.valid)
    throw OrderAmbiguityError(where + " has too few monotone samples for an order fit", band_id);

  band.order_left = best.left.slope;
  band.order_right = best.right.slope;
  const double rl = std::round(band.order_left), rr = std::round(band.order_right);
  if (std::abs(band.order_left - rl) > opt.order_tol ||
      std::abs(band.order_right - rr) > opt.order_tol)
    throw OrderAmbiguityError(where + ": one-sided vanishing orders " +
                                  std::to_string(band.order_left) + ", " +
                                  std::to_string(band.order_right) + " are not near integers",
                              band_id);
  const long pl = std::lround(rl), pr = std::lround(rr);
  band.order = static_cast<int>(std::lround(0.5 * (band.order_left + band.order_right)));
  if ((pl - pr) % 2 != 0 || (band.order - pl) % 2 != 0)
    throw OrderAmbiguityError(where + ": the two sides disagree in vanishing-order parity",
                              band_id);
  band.flip = band.order % 2 != 0;
}

}  // namespace

SignRecovery recover_sign(const Eigen::VectorXd& xi, const Eigen::VectorXd& arc,
                          const SignOptions& opt) {
  const int n = static_cast<int>(xi.size());
  if (n == 0 || arc.size() != n) throw ContractError("recover_sign needs matching xi and arc");
  if ((xi.array() < 0.0).any() || !xi.allFinite())
    throw ContractError("recover_sign needs finite nonnegative magnitudes");
  if (opt.fit_window < 2) throw ContractError("fit_window must be at least 2");

  SignRecovery out;
  const double peak = xi.maxCoeff(&out.anchor);
  if (!(peak > 0.0)) throw ContractError("trace magnitude vanishes on the whole patch");
  const double zero_level = opt.zero_tol * peak;
  const double dip_level = opt.dip_tol * peak;

  // Zero bands (maximal sub-threshold runs) and isolated dips.
  std::vector<ZeroBand> candidates;
  std::vector<char> in_band(n, 0);
  for (int i = 0; i < n;) {
    if (xi(i) >= zero_level) {
      ++i;
      continue;
    }
    int j = i;
    while (j + 1 < n && xi(j + 1) < zero_level) ++j;
    candidates.push_back({i, j, false});
    for (int k = i; k <= j; ++k) in_band[k] = 1;
    i = j + 1;
  }
  for (int i = 1; i + 1 < n; ++i) {
    if (in_band[i] || in_band[i - 1] || in_band[i + 1]) continue;
    if (xi(i) < dip_level && xi(i) <= xi(i - 1) && xi(i) < xi(i + 1))
      candidates.push_back({i, i, true});
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const ZeroBand& a, const ZeroBand& b) { return a.first < b.first; });

  // Bands touching the patch ends separate nothing and are left out.
  for (auto& band : candidates) {
    if (band.first == 0 || band.last == n - 1) continue;
    classify(xi, arc, in_band, band, static_cast<int>(out.bands.size()), opt);
    out.bands.push_back(band);
  }

  out.values = xi;
  const double s_anchor = arc(out.anchor);
  for (int k = 0; k < n; ++k) {
    int flips = 0;
    for (const auto& band : out.bands) {
      if (!band.flip) continue;
      const bool between = arc(k) > s_anchor ? (band.root > s_anchor && band.root < arc(k))
                                              : (band.root < s_anchor && band.root > arc(k));
      if (between) ++flips;
    }
    if (flips % 2 != 0) out.values(k) = -xi(k);
  }
  return out;
}

}  // namespace robinspec
