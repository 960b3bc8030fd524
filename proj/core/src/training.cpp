#include "tdmr/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

namespace tdmr {

namespace {

// Window t of a sector is centered at sample k = t + (d_in-1)/2.
struct SectorView {
  const Sector* sector;
  int d_in;
  int half;
  std::size_t windows;

  SectorView(const Sector& s, int d_in_)
      : sector(&s), d_in(d_in_), half((d_in_ - 1) / 2) {
    if (d_in_ < 1 || d_in_ % 2 == 0) throw std::invalid_argument("d_in must be odd");
    if (s.frame.size() < static_cast<std::size_t>(d_in_)) {
      throw std::invalid_argument("sector shorter than d_in");
    }
    windows = s.frame.size() - static_cast<std::size_t>(d_in) + 1;
  }

  void gather(std::size_t t, std::span<double> out) const {
    const auto w = static_cast<std::size_t>(d_in);
    const std::size_t first = t;  // center - half
    for (std::size_t j = 0; j < w; ++j) {
      out[j] = sector->frame.samples[0][first + j];
      out[w + j] = sector->frame.samples[1][first + j];
    }
  }

  std::int8_t label(std::size_t t, int delay) const {
    const auto idx = static_cast<std::ptrdiff_t>(t) + half - delay;
    if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(sector->bits.size())) return -1;
    return sector->bits[static_cast<std::size_t>(idx)];
  }

  double reference(const PrTarget& target, std::size_t t, int delay) const {
    return reference_output_padded(target, sector->bits,
                                   static_cast<std::ptrdiff_t>(t) + half - delay);
  }

  std::int8_t bit_at(std::size_t t, int delay, int lag) const {
    const auto idx = static_cast<std::ptrdiff_t>(t) + half - delay - lag;
    if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(sector->bits.size())) return -1;
    return sector->bits[static_cast<std::size_t>(idx)];
  }
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ull * (a + 1) + 0xc2b2ae3d27d4eb4full * (b + 1);
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdull;
  x ^= x >> 33;
  return x;
}

PrTarget make_target(const TargetMode& mode, std::uint64_t seed) {
  PrTarget target;
  if (mode.adaptive) {
    if (mode.adaptive_len < 1) throw std::invalid_argument("adaptive target length must be >= 1");
    target.monic = true;
    target.taps.assign(static_cast<std::size_t>(mode.adaptive_len), 0.0);
    target.taps[0] = 1.0;
    std::mt19937_64 rng(mix_seed(seed, 0x7a6e, 0));
    std::uniform_real_distribution<double> uni(-0.5, 0.5);
    for (std::size_t m = 1; m < target.taps.size(); ++m) target.taps[m] = uni(rng);
  } else {
    if (mode.fixed_taps.empty()) throw std::invalid_argument("fixed target needs taps");
    target.monic = false;
    target.taps = mode.fixed_taps;
  }
  return target;
}

int resolve_delay(const TrainConfig& config, const MlpSpec& spec, const PrTarget& target,
                  std::span<const Sector> sectors) {
  if (config.auto_delay) return pick_decision_delay(sectors[0], target, spec.d_in());
  if (config.decision_delay >= 0) return config.decision_delay;
  return default_decision_delay(spec.d_in(), target.length());
}

struct MlpGradLayout {
  // leaf ids in make_param_set order
  std::vector<Tape::NodeId> leaves;
};

MlpGradLayout layout_from_binding(const MlpTapeBinding& binding) {
  MlpGradLayout layout;
  for (std::size_t l = 0; l < binding.weights.size(); ++l) {
    layout.leaves.insert(layout.leaves.end(), binding.weights[l].begin(),
                         binding.weights[l].end());
    layout.leaves.insert(layout.leaves.end(), binding.biases[l].begin(),
                         binding.biases[l].end());
  }
  return layout;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("adam betas must be in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (!(llr_clip > 0.0)) throw std::invalid_argument("llr_clip must be positive");
}

int default_decision_delay(int d_in, int target_len) {
  return (d_in - 1) / 2 - target_len / 2;
}

int pick_decision_delay(const Sector& sector, const PrTarget& target, int d_in) {
  const SectorView view(sector, d_in);
  const int half = view.half;
  double best = -1.0;
  int best_d = 0;
  for (int d = 0; d <= half; ++d) {
    double acc = 0.0;
    for (std::size_t t = 0; t < view.windows; ++t) {
      const std::size_t k = t + static_cast<std::size_t>(half);
      const double r = sector.frame.samples[0][k] + sector.frame.samples[1][k];
      acc += r * view.reference(target, t, d);
    }
    if (std::abs(acc) > best) {
      best = std::abs(acc);
      best_d = d;
    }
  }
  return best_d;
}

double mse_loss(std::span<const double> errors) {
  if (errors.empty()) throw std::invalid_argument("mse_loss: empty error sequence");
  double acc = 0.0;
  for (double e : errors) acc += e * e;
  return acc / static_cast<double>(errors.size());
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double ce_loss(std::span<const double> llr, std::span<const std::int8_t> bits, double clip) {
  if (llr.size() != bits.size()) throw std::invalid_argument("ce_loss: size mismatch");
  if (llr.empty()) throw std::invalid_argument("ce_loss: empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < llr.size(); ++i) {
    const double l = std::clamp(llr[i], -clip, clip);
    acc += softplus(bits[i] > 0 ? -l : l);
  }
  return acc / static_cast<double>(llr.size());
}

double dce_dllr(double llr, std::int8_t bit) {
  const double s = llr >= 0.0 ? 1.0 / (1.0 + std::exp(-llr)) : std::exp(llr) / (1.0 + std::exp(llr));
  return bit > 0 ? -(1.0 - s) : s;
}

void adam_step(ParamSet& params, std::span<const double> grads, AdamState& state,
               const TrainConfig& config) {
  if (grads.size() != params.size()) throw std::invalid_argument("adam_step: size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.frozen(i)) continue;
    const double g = grads[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params.set(i, params.get(i) - config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon));
  }
}

void MetricsRecord::write_csv(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("MetricsRecord::write_csv: cannot open " + file.string());
  out << "epoch,sector,mse,ce,ber\n";
  char line[160];
  for (const Row& r : rows) {
    std::snprintf(line, sizeof(line), "%d,%d,%.10g,%.10g,%.10g\n", r.epoch, r.sector, r.mse, r.ce,
                  r.ber);
    out << line;
  }
}

int MetricsRecord::last_epoch() const {
  int e = 0;
  for (const Row& r : rows) e = std::max(e, r.epoch);
  return e;
}

double MetricsRecord::final_epoch_mean(double Row::* field) const {
  if (rows.empty()) throw std::logic_error("MetricsRecord: empty");
  const int last = last_epoch();
  double acc = 0.0;
  std::size_t n = 0;
  for (const Row& r : rows) {
    if (r.epoch == last) {
      acc += r.*field;
      ++n;
    }
  }
  return acc / static_cast<double>(n);
}

int MetricsRecord::epochs_to_convergence(double rel_tol) const {
  if (rows.empty()) return 0;
  const int n_epochs = last_epoch() + 1;
  std::vector<double> mean(static_cast<std::size_t>(n_epochs), 0.0);
  std::vector<int> count(static_cast<std::size_t>(n_epochs), 0);
  for (const Row& r : rows) {
    mean[static_cast<std::size_t>(r.epoch)] += r.ber;
    ++count[static_cast<std::size_t>(r.epoch)];
  }
  for (int e = 0; e < n_epochs; ++e) {
    mean[static_cast<std::size_t>(e)] /= std::max(1, count[static_cast<std::size_t>(e)]);
  }
  for (int e = 0; e < n_epochs; ++e) {
    double best_future = mean[static_cast<std::size_t>(e)];
    for (int f = e + 1; f < n_epochs; ++f) {
      best_future = std::min(best_future, mean[static_cast<std::size_t>(f)]);
    }
    if (best_future >= mean[static_cast<std::size_t>(e)] * (1.0 - rel_tol)) return e + 1;
  }
  return n_epochs;
}

ParamSet make_param_set(MlpParams& params, PrTarget* target) {
  ParamSet ps;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    ps.push_group("w" + std::to_string(l), params.weights[l]);
    ps.push_group("b" + std::to_string(l), params.biases[l]);
  }
  if (target) {
    ps.push_scalar("g0", &target->taps[0], target->monic);
    ps.push_group("g", std::span<double>(target->taps).subspan(1));
  }
  return ps;
}

namespace {

struct CeSpanValues {
  std::vector<double> y;
  std::vector<std::int8_t> labels;
  SoftDecision soft;
  double ce = 0.0;
  std::vector<double> upstream;
};

CeSpanValues ce_span_from_samples(const Trellis& trellis, std::vector<double> y,
                                  std::vector<std::int8_t> labels, double clip,
                                  std::span<const double> warm, bool keep_book) {
  CeSpanValues out;
  out.y = std::move(y);
  out.labels = std::move(labels);
  DetectorOptions opts;
  opts.keep_bookkeeping = keep_book;
  if (!warm.empty()) opts.initial_metrics.assign(warm.begin(), warm.end());
  out.soft = maxlog_llr(trellis, out.y, opts);
  const std::size_t n = out.y.size();
  out.upstream.assign(n, 0.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double l = out.soft.llr[i];
    const double lc = std::clamp(l, -clip, clip);
    acc += softplus(out.labels[i] > 0 ? -lc : lc);
    // straight-through inside the clip range, zero gradient outside
    if (std::abs(l) <= clip) {
      out.upstream[i] = dce_dllr(l, out.labels[i]) / static_cast<double>(n);
    }
  }
  out.ce = acc / static_cast<double>(n);
  return out;
}

}  // namespace

CeChainResult ce_chain_gradient(MlpParams& params, PrTarget& target, bool adaptive_target,
                                const Sector& sector, std::size_t first_window,
                                std::size_t window_count, int delay, double clip) {
  const SectorView view(sector, params.spec.d_in());
  if (first_window + window_count > view.windows) {
    throw std::invalid_argument("ce_chain_gradient: span out of range");
  }
  const Trellis trellis = build_trellis(target);

  Tape tape;
  const MlpTapeBinding binding = bind_mlp(tape, params);
  const MlpGradLayout layout = layout_from_binding(binding);

  std::vector<Tape::NodeId> y_nodes(window_count);
  std::vector<double> y(window_count);
  std::vector<std::int8_t> labels(window_count);
  std::vector<double> window(static_cast<std::size_t>(params.spec.input_size()));
  for (std::size_t i = 0; i < window_count; ++i) {
    view.gather(first_window + i, window);
    y_nodes[i] = mlp_forward(tape, binding, params.spec, window);
    y[i] = tape.value(y_nodes[i]);
    labels[i] = view.label(first_window + i, delay);
  }

  CeSpanValues span = ce_span_from_samples(trellis, std::move(y), std::move(labels), clip, {},
                                           /*keep_book=*/true);
  const LlrGradients lg = llr_backward(trellis, span.y, span.soft, span.upstream);

  std::vector<std::pair<Tape::NodeId, double>> seeds(window_count);
  for (std::size_t i = 0; i < window_count; ++i) seeds[i] = {y_nodes[i], lg.d_samples[i]};
  tape.backward_seeded(seeds);

  CeChainResult result;
  result.ce = span.ce;
  result.gradient.reserve(layout.leaves.size() + (adaptive_target ? target.taps.size() : 0));
  for (Tape::NodeId id : layout.leaves) result.gradient.push_back(tape.adjoint(id));
  if (adaptive_target) {
    result.gradient.insert(result.gradient.end(), lg.d_taps.begin(), lg.d_taps.end());
  }
  result.argmin_signature = span.soft.book->choice_digest;
  return result;
}

CeProbe ce_span_probe(const MlpParams& params, const PrTarget& target, const Sector& sector,
                      std::size_t first_window, std::size_t window_count, int delay, double clip) {
  const SectorView view(sector, params.spec.d_in());
  if (first_window + window_count > view.windows) {
    throw std::invalid_argument("ce_span_probe: span out of range");
  }
  const Trellis trellis = build_trellis(target);
  std::vector<double> y(window_count);
  std::vector<std::int8_t> labels(window_count);
  std::vector<double> window(static_cast<std::size_t>(params.spec.input_size()));
  for (std::size_t i = 0; i < window_count; ++i) {
    view.gather(first_window + i, window);
    y[i] = mlp_forward(params, window);
    labels[i] = view.label(first_window + i, delay);
  }
  CeSpanValues span =
      ce_span_from_samples(trellis, std::move(y), std::move(labels), clip, {}, /*keep_book=*/true);
  return {span.ce, span.soft.book->choice_digest};
}

SectorEval evaluate_sector(const MlpParams& params, const PrTarget& target, const Sector& sector,
                           const EvalOptions& options) {
  const SectorView view(sector, params.spec.d_in());
  const int delay = options.decision_delay >= 0
                        ? options.decision_delay
                        : default_decision_delay(params.spec.d_in(), target.length());
  std::size_t margin = options.edge_margin >= 0
                           ? static_cast<std::size_t>(options.edge_margin)
                           : static_cast<std::size_t>(sector.meta.params.span_bits +
                                                      params.spec.d_in());
  margin = std::min(margin, view.windows / 4);

  std::vector<double> y(view.windows);
  std::vector<double> window(static_cast<std::size_t>(params.spec.input_size()));
  for (std::size_t t = 0; t < view.windows; ++t) {
    view.gather(t, window);
    y[t] = mlp_forward(params, window);
  }
  const Trellis trellis = build_trellis(target);
  const SoftDecision soft = maxlog_llr(trellis, y);

  SectorEval ev;
  double mse_acc = 0.0;
  double ce_acc = 0.0;
  std::uint64_t errors = 0;
  std::uint64_t n = 0;
  for (std::size_t t = margin; t + margin < view.windows; ++t) {
    const double e = y[t] - view.reference(target, t, delay);
    mse_acc += e * e;
    const std::int8_t u = view.label(t, delay);
    const double lc = std::clamp(soft.llr[t], -options.llr_clip, options.llr_clip);
    ce_acc += softplus(u > 0 ? -lc : lc);
    if (soft.hard[t] != u) ++errors;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("evaluate_sector: no windows after margins");
  ev.mse = mse_acc / static_cast<double>(n);
  ev.ce = ce_acc / static_cast<double>(n);
  ev.ber = static_cast<double>(errors) / static_cast<double>(n);
  ev.bits = n;
  ev.errors = errors;
  return ev;
}

EvalResult evaluate(const MlpParams& params, const PrTarget& target,
                    std::span<const Sector> sectors, const EvalOptions& options) {
  if (sectors.empty()) throw std::invalid_argument("evaluate: no sectors");
  EvalResult result;
  result.per_sector.resize(sectors.size());

  const std::size_t workers =
      std::min<std::size_t>(sectors.size(),
                            std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::future<void>> futures;
  std::atomic<std::size_t> next{0};
  for (std::size_t w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= sectors.size()) return;
        result.per_sector[i] = evaluate_sector(params, target, sectors[i], options);
      }
    }));
  }
  for (auto& f : futures) f.get();

  double mse_acc = 0.0;
  double ce_acc = 0.0;
  for (const SectorEval& ev : result.per_sector) {
    const auto nb = static_cast<double>(ev.bits);
    mse_acc += ev.mse * nb;
    ce_acc += ev.ce * nb;
    result.bits += ev.bits;
    result.errors += ev.errors;
  }
  result.mse = mse_acc / static_cast<double>(result.bits);
  result.ce = ce_acc / static_cast<double>(result.bits);
  result.ber = static_cast<double>(result.errors) / static_cast<double>(result.bits);
  return result;
}

namespace {

void train_sector_mse(const TrainConfig& config, MlpParams& params, PrTarget& target,
                      bool adaptive, const Sector& sector, int delay, ParamSet& ps,
                      AdamState& adam, Tape& tape, std::mt19937_64& shuffle_rng,
                      std::int64_t& steps) {
  const SectorView view(sector, params.spec.d_in());
  const auto B = static_cast<std::size_t>(config.batch_size);
  const std::size_t n_batches = view.windows / B;
  std::vector<std::uint32_t> order(view.windows);
  std::iota(order.begin(), order.end(), 0u);
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  std::vector<double> window(static_cast<std::size_t>(params.spec.input_size()));
  std::vector<double> grads;
  std::vector<double> ref_bits(target.taps.size());
  const int L = target.length();
  for (std::size_t b = 0; b < n_batches; ++b) {
    tape.clear();
    const MlpTapeBinding binding = bind_mlp(tape, params);
    const MlpGradLayout layout = layout_from_binding(binding);
    std::vector<Tape::NodeId> g_nodes;
    if (adaptive) {
      g_nodes.reserve(target.taps.size());
      for (double tap : target.taps) g_nodes.push_back(tape.leaf(tap));
    }
    const Tape::NodeId zero = tape.constant(0.0);
    Tape::NodeId sum = zero;
    for (std::size_t i = 0; i < B; ++i) {
      const std::size_t t = order[b * B + i];
      view.gather(t, window);
      const Tape::NodeId y = mlp_forward(tape, binding, params.spec, window);
      Tape::NodeId ref;
      if (adaptive) {
        for (int m = 0; m < L; ++m) {
          ref_bits[static_cast<std::size_t>(m)] = view.bit_at(t, delay, m);
        }
        ref = tape.affine(zero, g_nodes, ref_bits);
      } else {
        ref = tape.constant(view.reference(target, t, delay));
      }
      sum = tape.add(sum, tape.square(tape.sub(y, ref)));
    }
    const Tape::NodeId loss = tape.mul(sum, tape.constant(1.0 / static_cast<double>(B)));
    tape.backward(loss);

    grads.clear();
    for (Tape::NodeId id : layout.leaves) grads.push_back(tape.adjoint(id));
    for (Tape::NodeId id : g_nodes) grads.push_back(tape.adjoint(id));
    adam_step(ps, grads, adam, config);
    ++steps;
  }
}

void train_sector_ce(const TrainConfig& config, MlpParams& params, PrTarget& target,
                     bool adaptive, const Sector& sector, int delay, ParamSet& ps,
                     AdamState& adam, Tape& tape, std::int64_t& steps) {
  const SectorView view(sector, params.spec.d_in());
  const auto B = static_cast<std::size_t>(config.batch_size);
  const std::size_t n_batches = view.windows / B;

  std::vector<double> window(static_cast<std::size_t>(params.spec.input_size()));
  std::vector<double> warm;  // empty = known start at sector begin
  std::vector<double> grads;
  std::vector<Tape::NodeId> y_nodes(B);
  std::vector<std::pair<Tape::NodeId, double>> seeds(B);

  for (std::size_t b = 0; b < n_batches; ++b) {
    const std::size_t first = b * B;
    const Trellis trellis = build_trellis(target);

    tape.clear();
    const MlpTapeBinding binding = bind_mlp(tape, params);
    const MlpGradLayout layout = layout_from_binding(binding);
    std::vector<double> y(B);
    std::vector<std::int8_t> labels(B);
    for (std::size_t i = 0; i < B; ++i) {
      view.gather(first + i, window);
      y_nodes[i] = mlp_forward(tape, binding, params.spec, window);
      y[i] = tape.value(y_nodes[i]);
      labels[i] = view.label(first + i, delay);
    }

    CeSpanValues span = ce_span_from_samples(trellis, std::move(y), std::move(labels),
                                             config.llr_clip, warm, /*keep_book=*/true);
    const LlrGradients lg = llr_backward(trellis, span.y, span.soft, span.upstream);
    for (std::size_t i = 0; i < B; ++i) seeds[i] = {y_nodes[i], lg.d_samples[i]};
    tape.backward_seeded(seeds);

    grads.clear();
    for (Tape::NodeId id : layout.leaves) grads.push_back(tape.adjoint(id));
    if (adaptive) grads.insert(grads.end(), lg.d_taps.begin(), lg.d_taps.end());
    adam_step(ps, grads, adam, config);
    ++steps;

    // carry detector state into the next span, rebased so metrics stay small
    warm = span.soft.final_metrics;
    const double lo = *std::min_element(warm.begin(), warm.end());
    for (double& v : warm) v -= lo;
  }
}

}  // namespace

TrainResult train(const TrainConfig& config, const MlpSpec& spec, const TargetMode& target_mode,
                  std::span<const Sector> sectors) {
  config.validate();
  spec.validate();
  if (sectors.empty()) throw std::invalid_argument("train: empty dataset");

  TrainResult result;
  result.params = init_mlp(spec, config.seed);
  result.target = make_target(target_mode, config.seed);
  result.decision_delay = resolve_delay(config, spec, result.target, sectors);

  ParamSet ps = make_param_set(result.params, target_mode.adaptive ? &result.target : nullptr);
  AdamState adam;
  Tape tape;

  EvalOptions eval_opts;
  eval_opts.decision_delay = result.decision_delay;
  eval_opts.llr_clip = config.llr_clip;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t si = 0; si < sectors.size(); ++si) {
      const Sector& sector = sectors[si];
      if (config.criterion == Criterion::Mse) {
        std::mt19937_64 shuffle_rng(
            mix_seed(config.seed, static_cast<std::uint64_t>(epoch), si));
        train_sector_mse(config, result.params, result.target, target_mode.adaptive, sector,
                         result.decision_delay, ps, adam, tape, shuffle_rng, result.steps);
      } else {
        train_sector_ce(config, result.params, result.target, target_mode.adaptive, sector,
                        result.decision_delay, ps, adam, tape, result.steps);
      }
      const SectorEval ev = evaluate_sector(result.params, result.target, sector, eval_opts);
      result.curves.rows.push_back(
          {epoch, static_cast<int>(si), ev.mse, ev.ce, ev.ber});
    }
  }
  enforce_monic(result.target);
  return result;
}

void Histogram::write_csv(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("Histogram::write_csv: cannot open " + file.string());
  out << "bin_left,bin_right,density\n";
  char line[128];
  for (std::size_t i = 0; i < density.size(); ++i) {
    std::snprintf(line, sizeof(line), "%.10g,%.10g,%.10g\n", edges[i], edges[i + 1], density[i]);
    out << line;
  }
  std::snprintf(line, sizeof(line), "# tau=%.10g tail_mass=%.10g count=%llu\n", tau, tail_mass,
                static_cast<unsigned long long>(count));
  out << line;
}

Histogram error_histogram(const MlpParams& params, const PrTarget& target,
                          std::span<const Sector> sectors, int n_bins, double tau,
                          const EvalOptions& options) {
  if (n_bins < 1) throw std::invalid_argument("error_histogram: n_bins must be >= 1");
  const int delay = options.decision_delay >= 0
                        ? options.decision_delay
                        : default_decision_delay(params.spec.d_in(), target.length());
  std::vector<double> errors;
  for (const Sector& sector : sectors) {
    const SectorView view(sector, params.spec.d_in());
    std::size_t margin = options.edge_margin >= 0
                             ? static_cast<std::size_t>(options.edge_margin)
                             : static_cast<std::size_t>(sector.meta.params.span_bits +
                                                        params.spec.d_in());
    margin = std::min(margin, view.windows / 4);
    std::vector<double> window(static_cast<std::size_t>(params.spec.input_size()));
    for (std::size_t t = margin; t + margin < view.windows; ++t) {
      view.gather(t, window);
      errors.push_back(mlp_forward(params, window) - view.reference(target, t, delay));
    }
  }
  if (errors.empty()) throw std::invalid_argument("error_histogram: no samples");

  double max_abs = 0.0;
  for (double e : errors) max_abs = std::max(max_abs, std::abs(e));
  if (max_abs == 0.0) max_abs = 0.5;
  // nudge the range so the extremes fall inside the outer bins
  const double range = std::nextafter(max_abs, max_abs * 2.0 + 1.0);

  Histogram hist;
  hist.tau = tau;
  hist.count = errors.size();
  hist.edges.resize(static_cast<std::size_t>(n_bins) + 1);
  const double width = 2.0 * range / n_bins;
  for (int i = 0; i <= n_bins; ++i) {
    hist.edges[static_cast<std::size_t>(i)] = -range + width * i;
  }
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(n_bins), 0);
  std::uint64_t tail = 0;
  for (double e : errors) {
    auto bin = static_cast<std::ptrdiff_t>((e + range) / width);
    bin = std::clamp<std::ptrdiff_t>(bin, 0, n_bins - 1);
    ++counts[static_cast<std::size_t>(bin)];
    if (std::abs(e) > tau) ++tail;
  }
  hist.density.resize(static_cast<std::size_t>(n_bins));
  const double total = static_cast<double>(errors.size());
  for (int i = 0; i < n_bins; ++i) {
    hist.density[static_cast<std::size_t>(i)] =
        static_cast<double>(counts[static_cast<std::size_t>(i)]) / (total * width);
  }
  hist.tail_mass = static_cast<double>(tail) / total;
  return hist;
}

}  // namespace tdmr
