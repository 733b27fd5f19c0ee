#include "cubature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <queue>
#include <random>

#include "oscint/quadrature.hpp"
#include "parallel.hpp"

namespace oscint {

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  static std::mutex mu;
  static std::map<int, std::pair<std::vector<double>, std::vector<double>>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) {
    std::vector<double> x(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
    for (int i = 0; i < (n + 1) / 2; ++i) {
      double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it2 = 0; it2 < 100; ++it2) {
        double p0 = 1.0, p1 = z;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        if (n == 1) p0 = 1.0;
        dp = n * (z * p1 - p0) / (z * z - 1.0);
        const double dz = p1 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-16) break;
      }
      // Recompute derivative at the converged root.
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const std::size_t a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(n - 1 - i);
      x[a] = -z;
      x[b] = z;
      w[a] = w[b] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    if (n == 1) {
      x[0] = 0.0;
      w[0] = 2.0;
    }
    it = cache.emplace(n, std::make_pair(std::move(x), std::move(w))).first;
  }
  nodes = it->second.first;
  weights = it->second.second;
}

}  // namespace oscint

namespace oscint::detail {

namespace {

struct Panel {
  std::vector<double> lo, hi;
  Complex value{};
  double error = 0.0;
  double mass = 0.0;
};

struct PanelRule {
  int q = 0;
  std::vector<double> xf, wf, xc, wc;
};

// Integrates one panel with orders q and q - 3.
void integrate_panel(const BatchFn& f, const PanelRule& rule, Panel& p, std::int64_t& evals) {
  const std::size_t d = p.lo.size();
  auto run = [&](const std::vector<double>& x1, const std::vector<double>& w1) {
    const std::size_t m = x1.size();
    std::size_t total = 1;
    for (std::size_t i = 0; i < d; ++i) total *= m;
    std::vector<double> pts(total * d);
    std::vector<double> wts(total);
    std::vector<std::size_t> idx(d, 0);
    for (std::size_t t = 0; t < total; ++t) {
      double w = 1.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double half = 0.5 * (p.hi[i] - p.lo[i]);
        pts[t * d + i] = p.lo[i] + half * (x1[idx[i]] + 1.0);
        w *= half * w1[idx[i]];
      }
      wts[t] = w;
      for (std::size_t i = 0; i < d && ++idx[i] == m; ++i) idx[i] = 0;
    }
    std::vector<Complex> out(total);
    f(pts.data(), total, out.data());
    evals += static_cast<std::int64_t>(total);
    Complex s{};
    double ms = 0.0;
    for (std::size_t t = 0; t < total; ++t) {
      s += wts[t] * out[t];
      ms += wts[t] * std::abs(out[t]);
    }
    return std::make_pair(s, ms);
  };
  const auto [fine, mass] = run(rule.xf, rule.wf);
  const Complex coarse = run(rule.xc, rule.wc).first;
  p.mass = mass;
  p.value = fine;
  p.error = std::abs(fine - coarse);
  if (!std::isfinite(p.error)) p.error = std::numeric_limits<double>::infinity();
}

}  // namespace

CubatureResult adaptive_cubature(const BatchFn& f, const std::vector<double>& lo, const std::vector<double>& hi,
                                 const std::vector<int>& initial, double tol, int q, int max_panels,
                                 double rel_tol) {
  const std::size_t d = lo.size();
  PanelRule rule;
  rule.q = q;
  gauss_legendre(q, rule.xf, rule.wf);
  gauss_legendre(std::max(1, q - 3), rule.xc, rule.wc);
  std::vector<double> unit(d);
  for (std::size_t i = 0; i < d; ++i) unit[i] = (hi[i] - lo[i]) / std::max(1, initial[i]);

  CubatureResult res;
  auto cmp = [](const Panel& a, const Panel& b) { return a.error < b.error; };
  std::priority_queue<Panel, std::vector<Panel>, decltype(cmp)> heap(cmp);
  std::vector<int> idx(d, 0);
  for (;;) {
    Panel p;
    p.lo.resize(d);
    p.hi.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
      p.lo[i] = lo[i] + unit[i] * idx[i];
      p.hi[i] = idx[i] + 1 == initial[i] ? hi[i] : lo[i] + unit[i] * (idx[i] + 1);
    }
    integrate_panel(f, rule, p, res.evals);
    heap.push(std::move(p));
    std::size_t i = 0;
    while (i < d && ++idx[i] == std::max(1, initial[i])) idx[i++] = 0;
    if (i == d) break;
  }
  // Sums are recomputed from the heap at the end, so accumulated rounding in
  // the running totals never leaks into the result.
  double err = 0.0, mass = 0.0;
  {
    auto copy = heap;
    while (!copy.empty()) {
      err += copy.top().error;
      mass += copy.top().mass;
      copy.pop();
    }
  }
  auto target = [&] { return std::max(tol, rel_tol * mass); };
  while (err > target() && static_cast<int>(heap.size()) < max_panels) {
    Panel worst = heap.top();
    heap.pop();
    std::size_t axis = 0;
    double widest = -1.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double w = (worst.hi[i] - worst.lo[i]) / unit[i];
      if (w > widest) {
        widest = w;
        axis = i;
      }
    }
    const double mid = 0.5 * (worst.lo[axis] + worst.hi[axis]);
    Panel a = worst, b = worst;
    a.hi[axis] = mid;
    b.lo[axis] = mid;
    integrate_panel(f, rule, a, res.evals);
    integrate_panel(f, rule, b, res.evals);
    err += a.error + b.error - worst.error;
    mass += a.mass + b.mass - worst.mass;
    heap.push(std::move(a));
    heap.push(std::move(b));
    if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
  }
  // Deterministic final sum: order panels by their lower corner.
  std::vector<Panel> all;
  while (!heap.empty()) {
    all.push_back(heap.top());
    heap.pop();
  }
  std::sort(all.begin(), all.end(), [](const Panel& a, const Panel& b) { return a.lo < b.lo; });
  res.error = 0.0;
  for (const auto& p : all) {
    res.value += p.value;
    res.error += p.error;
    res.mass += p.mass;
  }
  res.panels = static_cast<int>(all.size());
  res.converged = res.error <= std::max(tol, rel_tol * res.mass);
  return res;
}

TensorAxis composite_axis(double lo, double hi, int panels, int order) {
  std::vector<double> x, w;
  gauss_legendre(order, x, w);
  TensorAxis ax;
  const double h = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + h * p;
    for (std::size_t i = 0; i < x.size(); ++i) {
      ax.nodes.push_back(a + 0.5 * h * (x[i] + 1.0));
      ax.weights.push_back(0.5 * h * w[i]);
    }
  }
  return ax;
}

Complex tensor_oscillatory(const Tape& tape, const std::vector<TensorAxis>& axes, const std::vector<int>& axis_slot,
                           const std::vector<double>& base, int threads) {
  const std::size_t d = axes.size();
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.nodes.size();
  constexpr std::size_t kBlock = 4096;
  const std::size_t nblocks = (total + kBlock - 1) / kBlock;
  const std::size_t ni = tape.inputs();
  const std::size_t no = tape.outputs();
  std::vector<Complex> partial(nblocks);
  parallel_for(nblocks, threads, [&](std::size_t b) {
    const std::size_t start = b * kBlock;
    const std::size_t count = std::min(kBlock, total - start);
    std::vector<double> in(count * ni);
    std::vector<double> w(count);
    std::vector<std::size_t> idx(d);
    std::size_t lin = start;
    for (std::size_t i = 0; i < d; ++i) {
      idx[i] = lin % axes[i].nodes.size();
      lin /= axes[i].nodes.size();
    }
    for (std::size_t p = 0; p < count; ++p) {
      double* row = in.data() + p * ni;
      std::copy(base.begin(), base.end(), row);
      double wt = 1.0;
      for (std::size_t i = 0; i < d; ++i) {
        row[axis_slot[i]] = axes[i].nodes[idx[i]];
        wt *= axes[i].weights[idx[i]];
      }
      w[p] = wt;
      for (std::size_t i = 0; i < d && ++idx[i] == axes[i].nodes.size(); ++i) idx[i] = 0;
    }
    std::vector<double> out(count * no);
    tape.eval_batch(in, count, out);
    Complex s{};
    for (std::size_t p = 0; p < count; ++p) {
      const double* o = out.data() + p * no;
      if (o[0] == 0.0 && o[1] == 0.0) continue;
      s += w[p] * Complex(o[0], o[1]) * std::polar(1.0, o[2]);
    }
    partial[b] = s;
  });
  Complex sum{};
  for (const auto& p : partial) sum += p;
  return sum;
}

LatticeResult lattice_oscillatory(const Tape& tape, const std::vector<double>& lo, const std::vector<double>& hi,
                                  const std::vector<double>& base, std::int64_t points, int shifts,
                                  std::uint64_t seed, int threads) {
  const std::size_t d = lo.size();
  // Generator: fractional parts of square roots of the first primes.
  static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  if (d > std::size(primes)) throw std::invalid_argument("lattice rule supports at most 16 dimensions");
  std::vector<double> alpha(d);
  double vol = 1.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double r = std::sqrt(static_cast<double>(primes[i]));
    alpha[i] = r - std::floor(r);
    vol *= hi[i] - lo[i];
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<std::vector<double>> shift(static_cast<std::size_t>(shifts), std::vector<double>(d));
  for (auto& sv : shift) {
    for (auto& v : sv) v = uni(rng);
  }
  constexpr std::int64_t kBlock = 4096;
  const std::int64_t nblocks = (points + kBlock - 1) / kBlock;
  const std::size_t ni = tape.inputs(), no = tape.outputs();
  std::vector<Complex> means(static_cast<std::size_t>(shifts));
  for (int sh = 0; sh < shifts; ++sh) {
    std::vector<Complex> partial(static_cast<std::size_t>(nblocks));
    parallel_for(static_cast<std::size_t>(nblocks), threads, [&](std::size_t b) {
      const std::int64_t start = static_cast<std::int64_t>(b) * kBlock;
      const std::size_t count = static_cast<std::size_t>(std::min(kBlock, points - start));
      std::vector<double> in(count * ni), out(count * no);
      for (std::size_t p = 0; p < count; ++p) {
        double* row = in.data() + p * ni;
        std::copy(base.begin(), base.end(), row);
        const double idx = static_cast<double>(start) + static_cast<double>(p);
        for (std::size_t i = 0; i < d; ++i) {
          double u = std::fmod(idx * alpha[i] + shift[static_cast<std::size_t>(sh)][i], 1.0);
          // Baker's transform: the periodized rule converges at O(1/N) for
          // non-periodic integrands.
          u = 1.0 - std::abs(2.0 * u - 1.0);
          row[i] = lo[i] + (hi[i] - lo[i]) * u;
        }
      }
      tape.eval_batch(in, count, out);
      Complex s{};
      for (std::size_t p = 0; p < count; ++p) {
        const double* o = out.data() + p * no;
        if (o[0] == 0.0 && o[1] == 0.0) continue;
        s += Complex(o[0], o[1]) * std::polar(1.0, o[2]);
      }
      partial[b] = s;
    });
    Complex sum{};
    for (const auto& p : partial) sum += p;
    means[static_cast<std::size_t>(sh)] = vol * sum / static_cast<double>(points);
  }
  LatticeResult r;
  for (const auto& m : means) r.value += m;
  r.value /= static_cast<double>(shifts);
  double var = 0.0;
  for (const auto& m : means) var += std::norm(m - r.value);
  r.std_error = std::sqrt(var / (shifts * (shifts - 1.0)));
  r.evals = points * shifts;
  return r;
}

}  // namespace oscint::detail
