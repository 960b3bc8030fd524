#include "tdmr/detector.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace tdmr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t digest_samples(std::span<const double> y) {
  return fnv1a(y.data(), y.size() * sizeof(double));
}

std::vector<double> start_metrics(const Trellis& trellis, const DetectorOptions& options) {
  const auto S = static_cast<std::size_t>(trellis.n_states);
  if (!options.initial_metrics.empty()) {
    if (options.initial_metrics.size() != S) {
      throw std::invalid_argument("detector: initial_metrics size mismatch");
    }
    return options.initial_metrics;
  }
  std::vector<double> alpha(S, kInf);
  alpha[0] = 0.0;  // all-(-1) history
  return alpha;
}

double stage_offset(const DetectorOptions& options, std::size_t t) {
  return options.stage_offsets.empty() ? 0.0 : options.stage_offsets[t];
}

}  // namespace

Trellis build_trellis(const PrTarget& target) {
  const int L = target.length();
  if (L < 1) throw std::invalid_argument("build_trellis: empty target");
  if (L > 16) throw std::invalid_argument("build_trellis: target too long");
  Trellis trellis;
  trellis.target = target;
  trellis.tap_count = L;
  trellis.n_states = 1 << (L - 1);
  const int mask = trellis.n_states - 1;
  trellis.next_state.resize(static_cast<std::size_t>(trellis.n_states));
  trellis.output.resize(static_cast<std::size_t>(trellis.n_states));
  for (int s = 0; s < trellis.n_states; ++s) {
    for (int u = 0; u < 2; ++u) {
      double out = 0.0;
      for (int m = 0; m < L; ++m) {
        out += target.taps[static_cast<std::size_t>(m)] * trellis.hypothesis_bit(s, u, m);
      }
      trellis.output[static_cast<std::size_t>(s)][static_cast<std::size_t>(u)] = out;
      trellis.next_state[static_cast<std::size_t>(s)][static_cast<std::size_t>(u)] =
          ((s << 1) | u) & mask;
    }
  }
  return trellis;
}

SoftDecision maxlog_llr(const Trellis& trellis, std::span<const double> y,
                        const DetectorOptions& options) {
  const std::size_t n = y.size();
  const auto S = static_cast<std::size_t>(trellis.n_states);
  if (n < static_cast<std::size_t>(trellis.tap_count)) {
    throw std::invalid_argument("maxlog_llr: block shorter than target");
  }
  if (!options.stage_offsets.empty() && options.stage_offsets.size() != n) {
    throw std::invalid_argument("maxlog_llr: stage_offsets size mismatch");
  }

  std::vector<double> alpha((n + 1) * S, kInf);
  std::vector<double> beta((n + 1) * S, 0.0);
  std::vector<std::int32_t> pred(n * S, -1);
  std::vector<std::int8_t> succ(n * S, -1);

  {
    const std::vector<double> init = start_metrics(trellis, options);
    for (std::size_t s = 0; s < S; ++s) alpha[s] = init[s];
  }

  // forward min-sum; grouping (alpha + bm) is frozen for exact comparability
  // with the enumeration oracle's running prefix sums
  for (std::size_t t = 0; t < n; ++t) {
    const double off = stage_offset(options, t);
    double* a_next = &alpha[(t + 1) * S];
    const double* a_cur = &alpha[t * S];
    std::int32_t* p = &pred[t * S];
    for (std::size_t s = 0; s < S; ++s) {
      if (a_cur[s] == kInf) continue;
      for (int u = 0; u < 2; ++u) {
        const double bm =
            branch_metric(y[t], trellis.output[s][static_cast<std::size_t>(u)]) + off;
        const double tot = a_cur[s] + bm;
        const auto s2 = static_cast<std::size_t>(
            trellis.next_state[s][static_cast<std::size_t>(u)]);
        if (tot < a_next[s2]) {
          a_next[s2] = tot;
          p[s2] = static_cast<std::int32_t>((s << 1) | static_cast<std::size_t>(u));
        }
      }
    }
  }

  // backward min-sum, free end (beta[n] = 0)
  for (std::size_t t = n; t-- > 0;) {
    const double off = stage_offset(options, t);
    double* b_cur = &beta[t * S];
    const double* b_next = &beta[(t + 1) * S];
    std::int8_t* q = &succ[t * S];
    for (std::size_t s = 0; s < S; ++s) {
      double best = kInf;
      std::int8_t bu = -1;
      for (int u = 0; u < 2; ++u) {
        const double bm =
            branch_metric(y[t], trellis.output[s][static_cast<std::size_t>(u)]) + off;
        const double tot =
            bm + b_next[static_cast<std::size_t>(
                     trellis.next_state[s][static_cast<std::size_t>(u)])];
        if (tot < best) {
          best = tot;
          bu = static_cast<std::int8_t>(u);
        }
      }
      b_cur[s] = best;
      q[s] = bu;
    }
  }

  SoftDecision soft;
  soft.llr.resize(n);
  std::vector<std::array<std::int32_t, 2>> best(n, {-1, -1});
  for (std::size_t t = 0; t < n; ++t) {
    const double off = stage_offset(options, t);
    const double* a_cur = &alpha[t * S];
    const double* b_next = &beta[(t + 1) * S];
    std::array<double, 2> best_tot{kInf, kInf};
    for (std::size_t s = 0; s < S; ++s) {
      if (a_cur[s] == kInf) continue;
      for (int u = 0; u < 2; ++u) {
        const double bm =
            branch_metric(y[t], trellis.output[s][static_cast<std::size_t>(u)]) + off;
        const double tot =
            (a_cur[s] + bm) + b_next[static_cast<std::size_t>(
                                  trellis.next_state[s][static_cast<std::size_t>(u)])];
        if (tot < best_tot[static_cast<std::size_t>(u)]) {
          best_tot[static_cast<std::size_t>(u)] = tot;
          best[t][static_cast<std::size_t>(u)] =
              static_cast<std::int32_t>((s << 1) | static_cast<std::size_t>(u));
        }
      }
    }
    soft.llr[t] = best_tot[0] - best_tot[1];  // positive favors +1
  }

  // hard decisions: traceback of the best full path
  soft.hard.resize(n);
  {
    const double* a_fin = &alpha[n * S];
    std::size_t s_best = 0;
    for (std::size_t s = 1; s < S; ++s) {
      if (a_fin[s] < a_fin[s_best]) s_best = s;
    }
    std::size_t s_cur = s_best;
    for (std::size_t t = n; t-- > 0;) {
      const std::int32_t packed = pred[t * S + s_cur];
      soft.hard[t] = (packed & 1) ? 1 : -1;
      s_cur = static_cast<std::size_t>(packed >> 1);
    }
  }

  soft.final_metrics.assign(alpha.begin() + static_cast<std::ptrdiff_t>(n * S), alpha.end());

  if (!options.dump_state_metrics_csv.empty()) {
    std::ofstream csv(options.dump_state_metrics_csv);
    csv << "stage";
    for (std::size_t s = 0; s < S; ++s) csv << ",alpha" << s;
    for (std::size_t s = 0; s < S; ++s) csv << ",beta" << s;
    csv << '\n';
    for (std::size_t t = 0; t <= n; ++t) {
      csv << t;
      for (std::size_t s = 0; s < S; ++s) csv << ',' << alpha[t * S + s];
      for (std::size_t s = 0; s < S; ++s) csv << ',' << beta[t * S + s];
      csv << '\n';
    }
  }

  if (options.keep_bookkeeping) {
    SoftDecision::Bookkeeping book;
    book.n_states = trellis.n_states;
    book.y_digest = digest_samples(y);
    std::uint64_t sig = fnv1a(pred.data(), pred.size() * sizeof(pred[0]));
    sig = fnv1a(succ.data(), succ.size() * sizeof(succ[0]), sig);
    sig = fnv1a(best.data(), best.size() * sizeof(best[0]), sig);
    book.choice_digest = sig;
    book.alpha = std::move(alpha);
    book.beta = std::move(beta);
    book.pred = std::move(pred);
    book.succ = std::move(succ);
    book.best = std::move(best);
    soft.book = std::move(book);
  }
  return soft;
}

std::vector<std::int8_t> viterbi_hard(const Trellis& trellis, std::span<const double> y,
                                      const DetectorOptions& options) {
  const std::size_t n = y.size();
  const auto S = static_cast<std::size_t>(trellis.n_states);
  if (n < static_cast<std::size_t>(trellis.tap_count)) {
    throw std::invalid_argument("viterbi_hard: block shorter than target");
  }
  std::vector<double> cur = start_metrics(trellis, options);
  std::vector<double> next(S);
  std::vector<std::int32_t> pred(n * S, -1);
  for (std::size_t t = 0; t < n; ++t) {
    const double off = stage_offset(options, t);
    next.assign(S, kInf);
    std::int32_t* p = &pred[t * S];
    for (std::size_t s = 0; s < S; ++s) {
      if (cur[s] == kInf) continue;
      for (int u = 0; u < 2; ++u) {
        const double bm =
            branch_metric(y[t], trellis.output[s][static_cast<std::size_t>(u)]) + off;
        const double tot = cur[s] + bm;
        const auto s2 = static_cast<std::size_t>(
            trellis.next_state[s][static_cast<std::size_t>(u)]);
        if (tot < next[s2]) {
          next[s2] = tot;
          p[s2] = static_cast<std::int32_t>((s << 1) | static_cast<std::size_t>(u));
        }
      }
    }
    cur.swap(next);
  }
  std::size_t s_best = 0;
  for (std::size_t s = 1; s < S; ++s) {
    if (cur[s] < cur[s_best]) s_best = s;
  }
  std::vector<std::int8_t> bits(n);
  std::size_t s_cur = s_best;
  for (std::size_t t = n; t-- > 0;) {
    const std::int32_t packed = pred[t * S + s_cur];
    bits[t] = (packed & 1) ? 1 : -1;
    s_cur = static_cast<std::size_t>(packed >> 1);
  }
  return bits;
}

SoftDecision brute_force_llr(const Trellis& trellis, std::span<const double> y,
                             const DetectorOptions& options) {
  const std::size_t n = y.size();
  if (n > 16) throw std::invalid_argument("brute_force_llr: block too long");
  if (n < static_cast<std::size_t>(trellis.tap_count)) {
    throw std::invalid_argument("brute_force_llr: block shorter than target");
  }
  if (!options.stage_offsets.empty() && options.stage_offsets.size() != n) {
    throw std::invalid_argument("brute_force_llr: stage_offsets size mismatch");
  }
  const std::vector<double> init = start_metrics(trellis, options);

  SoftDecision soft;
  soft.llr.assign(n, 0.0);
  soft.hard.assign(n, -1);

  std::vector<std::array<double, 2>> best(n, {kInf, kInf});
  double best_total = kInf;
  std::uint64_t best_seq = 0;

  std::vector<double> bm(n), pre(n + 1), suf(n + 1);
  const std::uint64_t count = 1ull << n;
  const auto n_states = static_cast<std::size_t>(trellis.n_states);
  // start states ascending, then sequences with the earliest bit as MSB and
  // -1 before +1, so "first strict minimum wins" is a fixed deterministic
  // tie-break; prefix sums run forward and suffix sums backward to mirror the
  // min-sum recursions' floating-point grouping exactly
  for (std::size_t start = 0; start < n_states; ++start) {
    if (init[start] == kInf) continue;
    for (std::uint64_t seq = 0; seq < count; ++seq) {
      std::size_t state = start;
      pre[0] = init[start];
      for (std::size_t t = 0; t < n; ++t) {
        const auto u = static_cast<std::size_t>((seq >> (n - 1 - t)) & 1);
        bm[t] = branch_metric(y[t], trellis.output[state][u]) + stage_offset(options, t);
        pre[t + 1] = pre[t] + bm[t];
        state = static_cast<std::size_t>(trellis.next_state[state][u]);
      }
      suf[n] = 0.0;
      for (std::size_t t = n; t-- > 0;) suf[t] = bm[t] + suf[t + 1];
      if (pre[n] < best_total) {
        best_total = pre[n];
        best_seq = seq;
      }
      for (std::size_t t = 0; t < n; ++t) {
        const auto u = static_cast<std::size_t>((seq >> (n - 1 - t)) & 1);
        const double tot = (pre[t] + bm[t]) + suf[t + 1];
        if (tot < best[t][u]) best[t][u] = tot;
      }
    }
  }

  for (std::size_t t = 0; t < n; ++t) {
    soft.llr[t] = best[t][0] - best[t][1];
    soft.hard[t] = ((best_seq >> (n - 1 - t)) & 1) ? 1 : -1;
  }
  return soft;
}

LlrGradients llr_backward(const Trellis& trellis, std::span<const double> y,
                          const SoftDecision& soft, std::span<const double> upstream) {
  if (!soft.book) throw std::invalid_argument("llr_backward: bookkeeping not kept");
  const SoftDecision::Bookkeeping& book = *soft.book;
  const std::size_t n = y.size();
  const auto S = static_cast<std::size_t>(book.n_states);
  if (book.n_states != trellis.n_states || soft.llr.size() != n || upstream.size() != n) {
    throw std::invalid_argument("llr_backward: size mismatch");
  }
  if (book.y_digest != digest_samples(y)) {
    throw std::invalid_argument("llr_backward: stale bookkeeping (samples changed)");
  }

  LlrGradients grads;
  grads.d_samples.assign(n, 0.0);
  grads.d_taps.assign(static_cast<std::size_t>(trellis.tap_count), 0.0);

  const int L = trellis.tap_count;
  auto contribute = [&](std::size_t m, std::int32_t packed, double coeff) {
    const auto s = static_cast<std::size_t>(packed >> 1);
    const auto u = static_cast<std::size_t>(packed & 1);
    const double e = y[m] - trellis.output[s][u];
    grads.d_samples[m] += coeff * 2.0 * e;
    const double tap_coeff = coeff * -2.0 * e;
    for (int j = 0; j < L; ++j) {
      grads.d_taps[static_cast<std::size_t>(j)] +=
          tap_coeff * trellis.hypothesis_bit(static_cast<int>(s), static_cast<int>(u), j);
    }
  };

  for (std::size_t t = 0; t < n; ++t) {
    const double f = upstream[t];
    if (f == 0.0) continue;
    const std::int32_t bm_minus = book.best[t][0];
    const std::int32_t bm_plus = book.best[t][1];
    // llr = PM(minus path) - PM(plus path)
    contribute(t, bm_minus, +f);
    contribute(t, bm_plus, -f);

    // prefix: walk both argmin paths back until they merge (equal states take
    // identical survivor branches, so their contributions cancel exactly)
    std::size_t sa = static_cast<std::size_t>(bm_minus) >> 1;
    std::size_t sb = static_cast<std::size_t>(bm_plus) >> 1;
    for (std::size_t m = t; m-- > 0 && sa != sb;) {
      const std::int32_t pa = book.pred[m * S + sa];
      const std::int32_t pb = book.pred[m * S + sb];
      contribute(m, pa, +f);
      contribute(m, pb, -f);
      sa = static_cast<std::size_t>(pa >> 1);
      sb = static_cast<std::size_t>(pb >> 1);
    }

    // suffix: follow the backward-pass survivors until the states merge
    sa = static_cast<std::size_t>(
        trellis.next_state[static_cast<std::size_t>(bm_minus >> 1)]
                          [static_cast<std::size_t>(bm_minus & 1)]);
    sb = static_cast<std::size_t>(
        trellis.next_state[static_cast<std::size_t>(bm_plus >> 1)]
                          [static_cast<std::size_t>(bm_plus & 1)]);
    for (std::size_t m = t + 1; m < n && sa != sb; ++m) {
      const auto ua = static_cast<std::size_t>(book.succ[m * S + sa]);
      const auto ub = static_cast<std::size_t>(book.succ[m * S + sb]);
      contribute(m, static_cast<std::int32_t>((sa << 1) | ua), +f);
      contribute(m, static_cast<std::int32_t>((sb << 1) | ub), -f);
      sa = static_cast<std::size_t>(trellis.next_state[sa][ua]);
      sb = static_cast<std::size_t>(trellis.next_state[sb][ub]);
    }
  }
  return grads;
}

}  // namespace tdmr
