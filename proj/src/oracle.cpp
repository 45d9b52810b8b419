#include "mpcnn/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "mpcnn/softmax.hpp"

namespace mpcnn {

double FixedRounding::quantize(double v) const {
  if (!mirror()) return v;
  double s = std::ldexp(1.0, fp.f);
  return std::round(v * s) / s;
}

double FixedRounding::trunc(double v) const {
  if (!mirror()) return v;
  double s = std::ldexp(1.0, fp.f);
  return std::floor(v * s) / s;
}

double FixedRounding::mul(double a, double b) const { return trunc(a * b); }

double FixedRounding::div(double a, double b) const { return quantize(a / b); }

double oracle_relu(double x) { return x > 0 ? x : 0; }

double oracle_max(double a, double b) { return a > b ? a : b; }

std::vector<double> oracle_relu(std::span<const double> x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = oracle_relu(x[i]);
  return out;
}

std::vector<double> oracle_maxpool(std::span<const double> x, std::size_t rows,
                                   std::size_t cols) {
  if (rows % 2 || cols % 2 || x.size() != rows * cols)
    throw ConfigError("maxpool oracle: need an even grid matching the element count");
  std::vector<double> out((rows / 2) * (cols / 2));
  for (std::size_t r = 0; r < rows; r += 2)
    for (std::size_t c = 0; c < cols; c += 2) {
      double top = oracle_max(x[r * cols + c], x[r * cols + c + 1]);
      double bot = oracle_max(x[(r + 1) * cols + c], x[(r + 1) * cols + c + 1]);
      out[(r / 2) * (cols / 2) + c / 2] = oracle_max(top, bot);
    }
  return out;
}

std::vector<double> oracle_softmax_true(std::span<const double> x) {
  if (x.empty()) throw ConfigError("softmax oracle: empty input");
  double m = *std::max_element(x.begin(), x.end());
  std::vector<double> p(x.size());
  double d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    p[i] = std::exp(x[i] - m);
    d += p[i];
  }
  for (double& v : p) v /= d;
  return p;
}

std::vector<double> oracle_softmax_f1(std::span<const double> x) {
  if (x.empty()) throw ConfigError("softmax oracle: empty input");
  std::vector<double> r(x.size());
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    r[i] = oracle_relu(x[i]);
    s += r[i];
  }
  if (s <= 0) throw NumericError("softmax f1: degenerate input, no positive entries");
  for (double& v : r) v /= s;
  return r;
}

std::vector<double> oracle_softmax_f2(std::span<const double> x, int L, double xmax,
                                      const FixedRounding& r) {
  if (x.empty()) throw ConfigError("softmax oracle: empty input");
  if (L < 1) throw ConfigError("softmax f2: L must be >= 1");
  std::vector<double> g(x.size());
  double d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double zt = std::clamp(r.quantize(x[i]), 0.0, xmax);
    g[i] = r.quantize(hat_exp_raw(zt, L));
    d += g[i];
  }
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = r.div(g[i], d);
  return p;
}

namespace {

// C[n x m] += A[n x k] * B[k x m], row major
void matmul_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                std::size_t m) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      double av = a[i * k + t];
      if (av == 0) continue;
      const double* brow = b + t * m;
      double* crow = c + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
}

void apply_trunc(std::vector<double>& v, const FixedRounding& r) {
  if (!r.mirror()) return;
  for (double& x : v) x = r.trunc(x);
}

struct Forward {
  std::vector<double> h, hr, z;
};

Forward forward_pass(const OracleNetwork& net, const std::vector<double>& x, std::size_t bs,
                     const std::vector<double>& w1, const std::vector<double>& b1,
                     const std::vector<double>& w2, const std::vector<double>& b2,
                     const FixedRounding& r) {
  Forward f;
  f.h.assign(bs * net.hidden, 0.0);
  matmul_acc(x.data(), w1.data(), f.h.data(), bs, net.in, net.hidden);
  apply_trunc(f.h, r);
  for (std::size_t i = 0; i < bs; ++i)
    for (std::size_t j = 0; j < net.hidden; ++j) f.h[i * net.hidden + j] += b1[j];
  f.hr.resize(f.h.size());
  for (std::size_t i = 0; i < f.h.size(); ++i) f.hr[i] = oracle_relu(f.h[i]);
  f.z.assign(bs * net.out, 0.0);
  matmul_acc(f.hr.data(), w2.data(), f.z.data(), bs, net.hidden, net.out);
  apply_trunc(f.z, r);
  for (std::size_t i = 0; i < bs; ++i)
    for (std::size_t j = 0; j < net.out; ++j) f.z[i * net.out + j] += b2[j];
  return f;
}

}  // namespace

TrainTrajectory oracle_train(const OracleNetwork& net, std::span<const float> xtr,
                             std::span<const u8> ytr, std::span<const float> xte,
                             std::span<const u8> yte, const OracleTrainConfig& cfg) {
  if (net.in == 0 || net.hidden == 0 || net.out == 0)
    throw ConfigError("oracle_train: zero-sized layer");
  if (xtr.size() != ytr.size() * net.in || xte.size() != yte.size() * net.in)
    throw ConfigError("oracle_train: data shape mismatch");
  if (cfg.batch == 0) throw ConfigError("oracle_train: batch must be positive");
  const FixedRounding& r = cfg.rounding;
  const std::size_t ntr = ytr.size();
  const std::size_t bs = cfg.batch;

  Prg rng(cfg.seed);
  auto uinit = [&](std::size_t n, double fanin) {
    std::vector<double> w(n);
    for (double& v : w) v = r.quantize((2.0 * rng.next_unit() - 1.0) / std::sqrt(fanin));
    return w;
  };
  std::vector<double> w1 = uinit(net.in * net.hidden, double(net.in));
  std::vector<double> b1(net.hidden, 0.0);
  std::vector<double> w2 = uinit(net.hidden * net.out, double(net.hidden));
  std::vector<double> b2(net.out, r.quantize(cfg.b2_init));

  TrainTrajectory traj;
  const auto t0 = std::chrono::steady_clock::now();
  const double step = r.quantize(cfg.lr / double(bs));
  std::vector<u32> perm(ntr);
  std::iota(perm.begin(), perm.end(), 0u);
  std::vector<double> bx(bs * net.in), dz(bs * net.out), dh;
  std::vector<double> dw1(w1.size()), db1(b1.size()), dw2(w2.size()), db2(b2.size());

  for (int ep = 0; ep < cfg.epochs; ++ep) {
    for (std::size_t i = ntr; i > 1; --i)
      std::swap(perm[i - 1], perm[rng.next_below(i)]);
    double ep_loss = 0;
    std::size_t steps = 0;

    for (std::size_t s = 0; s + bs <= ntr; s += bs, ++steps) {
      for (std::size_t bi = 0; bi < bs; ++bi) {
        const float* src = xtr.data() + std::size_t(perm[s + bi]) * net.in;
        for (std::size_t k = 0; k < net.in; ++k)
          bx[bi * net.in + k] = r.quantize(double(src[k]));
      }
      Forward f = forward_pass(net, bx, bs, w1, b1, w2, b2, r);

      double batch_loss = 0;
      for (std::size_t bi = 0; bi < bs; ++bi) {
        const double* z = f.z.data() + bi * net.out;
        double* dzr = dz.data() + bi * net.out;
        u8 label = ytr[perm[s + bi]];
        double py;
        if (cfg.kind == SoftmaxKind::f1) {
          double ssum = 0;
          for (std::size_t j = 0; j < net.out; ++j) ssum += oracle_relu(z[j]);
          double S = std::max(ssum, cfg.f1_floor);
          double wp = 0;
          std::vector<double> p(net.out), w(net.out);
          for (std::size_t j = 0; j < net.out; ++j) {
            p[j] = r.div(oracle_relu(z[j]), S);
            w[j] = (j == label) ? r.div(1.0, p[j] + cfg.f1_eps) : 0.0;
            wp += r.mul(w[j], p[j]);
          }
          py = p[label];
          for (std::size_t j = 0; j < net.out; ++j)
            dzr[j] = z[j] > 0 ? r.mul(-r.div(1.0, S), w[j] - wp) : 0.0;
        } else {
          std::vector<double> zt(net.out), g(net.out);
          double d = 0;
          for (std::size_t j = 0; j < net.out; ++j) {
            zt[j] = std::clamp(z[j], 0.0, cfg.xmax);
            g[j] = r.quantize(hat_exp_raw(zt[j], cfg.L));
            d += g[j];
          }
          py = r.div(g[label], d);
          for (std::size_t j = 0; j < net.out; ++j) {
            double e = r.div(g[j], d) - (j == label ? 1.0 : 0.0);
            bool ind = z[j] > 0 && z[j] < cfg.xmax;
            dzr[j] = ind ? cfg.L * r.div(e, cfg.L + zt[j]) : 0.0;
          }
        }
        if (!std::isfinite(py)) traj.overflow = true;
        batch_loss += -std::log(std::max(py, 1e-12));
      }
      ep_loss += batch_loss / double(bs);

      std::fill(dw2.begin(), dw2.end(), 0.0);
      std::fill(db2.begin(), db2.end(), 0.0);
      for (std::size_t bi = 0; bi < bs; ++bi)
        for (std::size_t j = 0; j < net.hidden; ++j) {
          double hv = f.hr[bi * net.hidden + j];
          if (hv == 0) continue;
          for (std::size_t o = 0; o < net.out; ++o)
            dw2[j * net.out + o] += hv * dz[bi * net.out + o];
        }
      apply_trunc(dw2, r);
      for (std::size_t bi = 0; bi < bs; ++bi)
        for (std::size_t o = 0; o < net.out; ++o) db2[o] += dz[bi * net.out + o];

      dh.assign(bs * net.hidden, 0.0);
      for (std::size_t bi = 0; bi < bs; ++bi)
        for (std::size_t o = 0; o < net.out; ++o) {
          double dv = dz[bi * net.out + o];
          if (dv == 0) continue;
          for (std::size_t j = 0; j < net.hidden; ++j)
            dh[bi * net.hidden + j] += dv * w2[j * net.out + o];
        }
      apply_trunc(dh, r);
      for (std::size_t i = 0; i < dh.size(); ++i)
        if (f.h[i] <= 0) dh[i] = 0;

      std::fill(dw1.begin(), dw1.end(), 0.0);
      std::fill(db1.begin(), db1.end(), 0.0);
      for (std::size_t bi = 0; bi < bs; ++bi)
        for (std::size_t k = 0; k < net.in; ++k) {
          double xv = bx[bi * net.in + k];
          if (xv == 0) continue;
          for (std::size_t j = 0; j < net.hidden; ++j)
            dw1[k * net.hidden + j] += xv * dh[bi * net.hidden + j];
        }
      apply_trunc(dw1, r);
      for (std::size_t bi = 0; bi < bs; ++bi)
        for (std::size_t j = 0; j < net.hidden; ++j) db1[j] += dh[bi * net.hidden + j];

      for (std::size_t i = 0; i < w2.size(); ++i) w2[i] -= r.mul(step, dw2[i]);
      for (std::size_t i = 0; i < b2.size(); ++i) b2[i] -= r.mul(step, db2[i]);
      for (std::size_t i = 0; i < w1.size(); ++i) w1[i] -= r.mul(step, dw1[i]);
      for (std::size_t i = 0; i < b1.size(); ++i) b1[i] -= r.mul(step, db1[i]);
    }
    traj.loss.push_back(steps ? ep_loss / double(steps) : 0.0);

    std::size_t correct = 0;
    const std::size_t nte = yte.size();
    const std::size_t chunk = 256;
    std::vector<double> ex;
    for (std::size_t s = 0; s < nte; s += chunk) {
      std::size_t m = std::min(chunk, nte - s);
      ex.assign(m * net.in, 0.0);
      for (std::size_t i = 0; i < m * net.in; ++i)
        ex[i] = r.quantize(double(xte[s * net.in + i]));
      Forward f = forward_pass(net, ex, m, w1, b1, w2, b2, r);
      for (std::size_t i = 0; i < m; ++i) {
        const double* z = f.z.data() + i * net.out;
        std::size_t best = 0;
        for (std::size_t j = 1; j < net.out; ++j)
          if (z[j] > z[best]) best = j;
        correct += best == yte[s + i];
      }
    }
    traj.accuracy.push_back(nte ? double(correct) / double(nte) : 0.0);
    traj.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }

  traj.w1 = std::move(w1);
  traj.b1 = std::move(b1);
  traj.w2 = std::move(w2);
  traj.b2 = std::move(b2);
  return traj;
}

}  // namespace mpcnn
