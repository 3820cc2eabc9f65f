#ifndef INK_GRADCHECK_HPP
#define INK_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "ink/graph.hpp"
#include "ink/rng.hpp"

namespace ink {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  Index elements_checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> params;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = true;

  const GradCheckEntry* worst() const {
    const GradCheckEntry* w = nullptr;
    for (const auto& e : params)
      if (!w || e.max_rel_err > w->max_rel_err) w = &e;
    return w;
  }
};

/// Compares analytic gradients against central finite differences.
///
/// `loss` is called as loss(bool with_grad) -> S. With with_grad=true it
/// must run a fresh forward+backward and leave gradients accumulated in
/// `params`; with with_grad=false a plain forward value is enough.
///
/// Relative error per element is |a - n| / max(|a|, |n|, 1e-4); the floor
/// keeps near-zero gradients from amplifying finite-difference noise.
/// If max_elems_per_param > 0, a deterministic random subset of that many
/// elements is probed per parameter.
template <typename S, typename LossFn>
GradCheckReport gradcheck(ParamSet<S>& params, LossFn&& loss, S step, S tolerance,
                          Index max_elems_per_param = -1,
                          std::uint64_t subsample_seed = 0) {
  if (step <= 0) throw UsageError("gradcheck: step must be positive");
  GradCheckReport report;
  report.tolerance = static_cast<double>(tolerance);

  params.zero_grads();
  S base = loss(true);
  if (!std::isfinite(static_cast<double>(base)))
    throw DivergenceError("gradcheck: loss is not finite");

  std::vector<VecX<S>> analytic;
  analytic.reserve(params.size());
  for (std::size_t p = 0; p < params.size(); ++p)
    analytic.push_back(params[p].value.grad());

  for (std::size_t p = 0; p < params.size(); ++p) {
    Parameter<S>& par = params[p];
    GradCheckEntry entry{par.name, 0.0, 0};

    std::vector<Index> elems(static_cast<std::size_t>(par.value.size()));
    std::iota(elems.begin(), elems.end(), Index(0));
    if (max_elems_per_param > 0 &&
        static_cast<Index>(elems.size()) > max_elems_per_param) {
      Rng rng(mix_seed(subsample_seed, p));
      rng.shuffle(elems);
      elems.resize(static_cast<std::size_t>(max_elems_per_param));
      std::sort(elems.begin(), elems.end());
    }

    for (Index i : elems) {
      const S saved = par.value.data()[i];
      par.value.data()[i] = saved + step;
      S plus = loss(false);
      par.value.data()[i] = saved - step;
      S minus = loss(false);
      par.value.data()[i] = saved;
      if (!std::isfinite(static_cast<double>(plus)) ||
          !std::isfinite(static_cast<double>(minus)))
        throw DivergenceError("gradcheck: perturbed loss is not finite at " + par.name);

      const double numeric = static_cast<double>(plus - minus) / (2.0 * static_cast<double>(step));
      const double a = static_cast<double>(analytic[p][i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-4});
      entry.max_rel_err = std::max(entry.max_rel_err, std::abs(a - numeric) / denom);
      ++entry.elements_checked;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.params.push_back(std::move(entry));
  }
  report.pass = report.max_rel_err < static_cast<double>(tolerance);
  return report;
}

}  // namespace ink

#endif  // INK_GRADCHECK_HPP
