#include "fedsim/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "fedsim/errors.hpp"

namespace fedsim {

double accuracy(const ParameterSet& params, const EncoderSpec& spec,
                const Dataset& dataset, int batch_size) {
  const std::size_t n = dataset.size();
  if (n == 0) throw UsageError("accuracy over an empty dataset");
  std::vector<int> indices(n);
  for (std::size_t i = 0; i < n; ++i) indices[i] = int(i);

  std::size_t correct = 0;
  Tensor batch;
  std::vector<int> labels;
  for (std::size_t start = 0; start < n; start += std::size_t(batch_size)) {
    const std::size_t count = std::min(std::size_t(batch_size), n - start);
    dataset.gather(indices.data() + start, count, batch, labels);
    const ForwardContext ctx = forward(params, spec, batch, false);
    const std::size_t L = ctx.probabilities.cols();
    for (std::size_t i = 0; i < count; ++i) {
      int best = 0;
      double bv = ctx.probabilities.at(i, 0);
      for (std::size_t c = 1; c < L; ++c)
        if (ctx.probabilities.at(i, c) > bv) {
          bv = ctx.probabilities.at(i, c);
          best = int(c);
        }
      if (best == labels[i]) ++correct;
    }
  }
  return double(correct) / double(n);
}

std::pair<int, double> select_best_snapshot(
    const std::vector<RoundRecord>& history) {
  if (history.empty())
    throw UsageError("select_best_snapshot over an empty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i)
    if (history[i].val_acc > history[best].val_acc) best = i;
  return {history[best].round, history[best].test_acc};
}

BootstrapCi bootstrap_ci(const std::vector<double>& values, double level,
                         int resamples, Rng& rng) {
  if (values.empty()) throw UsageError("bootstrap_ci over no values");
  const int n = int(values.size());
  BootstrapCi ci;
  for (double v : values) ci.mean += v;
  ci.mean /= n;

  std::vector<double> means(resamples);
  for (int b = 0; b < resamples; ++b) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += values[rng.uniform_int(n)];
    means[b] = acc / n;
  }
  std::sort(means.begin(), means.end());
  const double alpha = (1.0 - level) / 2.0;
  auto pick = [&](double q) {
    const double pos = q * double(resamples - 1);
    const std::size_t lo = std::size_t(std::floor(pos));
    const std::size_t hi = std::min(std::size_t(lo + 1), means.size() - 1);
    const double frac = pos - double(lo);
    return means[lo] * (1.0 - frac) + means[hi] * frac;
  };
  ci.low = pick(alpha);
  ci.high = pick(1.0 - alpha);
  return ci;
}

}  // namespace fedsim
