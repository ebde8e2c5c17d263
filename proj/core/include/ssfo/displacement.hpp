#pragma once

#include <optional>
#include <vector>

#include "ssfo/data.hpp"
#include "ssfo/model.hpp"
#include "ssfo/objective.hpp"

namespace ssfo {

// Geometry of one probe under a model's unembedding: the direction vector
// between the context-faithful and parametric endings, and every token's
// inner product with it.
struct ProbeGeometry {
  std::vector<double> v_dir;           // W[z_c] - W[z_p]
  std::vector<double> inner_products;  // <W[z], v_dir> per token z
};

ProbeGeometry probe_direction(const ToyLM& model, const TrapProbe& probe);

// Theory mode: treat the prompt's hidden state as the only trainable
// parameter, with single-token responses (z_c) vs (z_p) and policy = ref.
// One gradient step of size eta on h changes the logits by exactly
//
//   dlogit(z) = eta * c1 * <W_z, W[z_c] - lambda*W[z_p] + (lambda-1)*E_pi[W]>
//
// with c1 = beta/2 at initialization; for lambda = 1 this reduces to
// eta*(beta/2)*<W_z, v_dir>. The closed form is exact because logits are
// linear in h.
std::vector<double> hidden_flow_step(const ToyLM& model, const TrapProbe& probe,
                                     const LossConfig& cfg, double eta);

// The same one-step logit change measured by actually taking the gradient
// step on h (gradient via softmax backprop) and re-reading the logits.
std::vector<double> hidden_flow_step_measured(const ToyLM& model, const TrapProbe& probe,
                                              const LossConfig& cfg, double eta);

struct ProbeDelta {
  double dp_zc = 0.0;            // pi_after(z_c) - pi_before(z_c)
  double dp_zp = 0.0;
  double mean_dp_other = 0.0;    // mean over non-special tokens besides z_c/z_p
  double mean_abs_dp_other = 0.0;
  double sum_dp = 0.0;           // conservation check; 0 up to rounding
};

struct Eq3ProbeResult {
  std::optional<double> spearman;  // rank agreement of inner products vs measured change
  bool zc_above_others = false;    // dlogit(z_c) > mean dlogit(others)
  bool zp_below_others = false;    // dlogit(z_p) < mean dlogit(others)
  bool degenerate_geometry = false;  // v_dir == 0
};

struct DisplacementReport {
  std::vector<ProbeDelta> per_probe;
  double mean_dp_zc = 0.0;
  double mean_dp_zp = 0.0;
  double mean_dp_other = 0.0;
  double mean_abs_dp_other = 0.0;
  // Pearson between dp(z_c) and dp(z_p) across probes; nullopt = degenerate
  // (zero variance), never reported as 0 or NaN.
  std::optional<double> pearson_dp;
  // theory-mode results on the `before` model
  std::vector<Eq3ProbeResult> eq3;
  std::optional<double> mean_spearman;
  double frac_zc_above_others = 0.0;
  double frac_zp_below_others = 0.0;
  LossConfig theory_cfg{};
  double theory_eta = 0.0;
};

// Probability changes per probe between two snapshots of the same model.
std::vector<ProbeDelta> measure_displacement(const ToyLM& before, const ToyLM& after,
                                             const std::vector<TrapProbe>& probes);

// Per-probe Eq.-3-style rank check in theory mode.
std::vector<Eq3ProbeResult> verify_eq3_ordering(const ToyLM& model,
                                                const std::vector<TrapProbe>& probes,
                                                const LossConfig& cfg, double eta);

// Full report: empirical displacement between before/after plus the
// theory-mode analysis evaluated on `before`.
DisplacementReport build_displacement_report(const ToyLM& before, const ToyLM& after,
                                             const std::vector<TrapProbe>& probes,
                                             const LossConfig& cfg, double eta);

}  // namespace ssfo
