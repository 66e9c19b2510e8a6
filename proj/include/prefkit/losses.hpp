#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "prefkit/core.hpp"

namespace prefkit {

// Pairwise ranking losses on scalar rewards (r_c, r_r) with analytic partials.
// Except for CE, each loss depends on the margin d = r_c - r_r only.

enum class LossKind { BT, Focal, FocalPenalty, Hinge, MarginMSE, CE, TemperedLog, TemperatureBT };

inline constexpr std::array<LossKind, 8> kAllLossKinds = {
    LossKind::BT,        LossKind::Focal, LossKind::FocalPenalty, LossKind::Hinge,
    LossKind::MarginMSE, LossKind::CE,    LossKind::TemperedLog,  LossKind::TemperatureBT};

inline std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::BT: return "bt";
    case LossKind::Focal: return "focal";
    case LossKind::FocalPenalty: return "focal-penalty";
    case LossKind::Hinge: return "hinge";
    case LossKind::MarginMSE: return "margin-mse";
    case LossKind::CE: return "ce";
    case LossKind::TemperedLog: return "tempered-log";
    case LossKind::TemperatureBT: return "temperature-bt";
  }
  return "?";
}

// Human-readable row label for ablation tables.
inline std::string_view display_name(LossKind k) {
  switch (k) {
    case LossKind::BT: return "Bradley-Terry";
    case LossKind::Focal: return "Focal";
    case LossKind::FocalPenalty: return "Focal with penalty";
    case LossKind::Hinge: return "Hinge";
    case LossKind::MarginMSE: return "Margin MSE";
    case LossKind::CE: return "Cross-entropy";
    case LossKind::TemperedLog: return "Tempered log";
    case LossKind::TemperatureBT: return "Temperature-adjusted Bradley-Terry";
  }
  return "?";
}

inline std::optional<LossKind> parse_loss_kind(std::string_view s) {
  std::string key(s);
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) {
    return c == '_' ? '-' : static_cast<char>(std::tolower(c));
  });
  for (LossKind k : kAllLossKinds) {
    if (key == to_string(k)) return k;
  }
  if (key == "bradley-terry") return LossKind::BT;
  if (key == "cross-entropy") return LossKind::CE;
  return std::nullopt;
}

inline bool is_difference_only(LossKind k) { return k != LossKind::CE; }

// Defaults are placeholders: the ablation's tuned values were never published.
struct LossSpec {
  LossKind kind = LossKind::BT;
  double gamma = 2.0;          // Focal, FocalPenalty
  double margin = 1.0;         // Hinge, MarginMSE
  double tempered_t = -1.0;    // TemperedLog, must differ from 1
  double temperature = 1.0;    // TemperatureBT, must be > 0

  friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

class LossParameterError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Only checks the parameters `kind` actually reads.
inline void validate(const LossSpec& spec) {
  const auto need_finite = [](double v, const char* name) {
    if (!std::isfinite(v)) throw LossParameterError(std::string(name) + " must be finite");
  };
  switch (spec.kind) {
    case LossKind::Focal:
    case LossKind::FocalPenalty:
      need_finite(spec.gamma, "gamma");
      break;
    case LossKind::Hinge:
    case LossKind::MarginMSE:
      need_finite(spec.margin, "margin");
      break;
    case LossKind::TemperedLog:
      need_finite(spec.tempered_t, "tempered_t");
      if (spec.tempered_t == 1.0) throw LossParameterError("tempered_t must differ from 1");
      break;
    case LossKind::TemperatureBT:
      need_finite(spec.temperature, "temperature");
      if (!(spec.temperature > 0.0)) throw LossParameterError("temperature must be > 0");
      break;
    case LossKind::BT:
    case LossKind::CE:
      break;
  }
}

struct LossEval {
  double value = 0.0;
  double grad_chosen = 0.0;
  double grad_rejected = 0.0;
};

// Logistic function without overflow for any finite z.
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(sigmoid(z)) = -softplus(-z), finite for any finite z.
inline double log_sigmoid(double z) {
  return -(std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z))));
}

namespace detail {

// Value and dL/dd for margin losses.
struct MarginLoss {
  double value;
  double slope;
};

inline MarginLoss bt(double d) { return {-log_sigmoid(d), -sigmoid(-d)}; }

inline MarginLoss focal(double d, double gamma) {
  // L = -log s * q^g with s = sigmoid(d), q = 1 - s = sigmoid(-d); dq/dd = -s q.
  const double q = sigmoid(-d);
  const double ls = log_sigmoid(d);
  const double w = std::pow(q, gamma);
  return {-ls * w, w * (gamma * ls * sigmoid(d) - q)};
}

inline MarginLoss focal_penalty(double d, double gamma) {
  // Penalty factor 1 - 2 max(s - 1/2, 0) is 1 for d <= 0 and 2q above.
  const double ls = log_sigmoid(d);
  if (d <= 0.0) return {-ls, -sigmoid(-d)};
  const double q = sigmoid(-d);
  const double p = std::pow(2.0 * q, gamma);
  return {-p * ls, p * (gamma * sigmoid(d) * ls - q)};
}

inline MarginLoss hinge(double d, double m) {
  // Subgradient at the kink d == m is taken from the satisfied side.
  if (d >= m) return {0.0, 0.0};
  return {m - d, -1.0};
}

inline MarginLoss margin_mse(double d, double m) {
  const double e = d - m;
  return {e * e, 2.0 * e};
}

inline MarginLoss tempered_log(double d, double t) {
  // L = -(s^(1-t) - 1) / (1 - t); dL/dd = -s^(1-t) q.
  const double a = 1.0 - t;
  const double s_pow = std::exp(a * log_sigmoid(d));
  return {-(s_pow - 1.0) / a, -s_pow * sigmoid(-d)};
}

inline MarginLoss temperature_bt(double d, double temp) {
  const double z = d / temp;
  return {-log_sigmoid(z), -sigmoid(-z) / temp};
}

}  // namespace detail

inline LossEval loss_eval(const LossSpec& spec, double r_chosen, double r_rejected) {
  validate(spec);
  if (spec.kind == LossKind::CE) {
    // Each reward is classified on its own: chosen as positive, rejected as negative.
    return {-log_sigmoid(r_chosen) - log_sigmoid(-r_rejected), -sigmoid(-r_chosen),
            sigmoid(r_rejected)};
  }
  const double d = r_chosen - r_rejected;
  detail::MarginLoss m{};
  switch (spec.kind) {
    case LossKind::BT: m = detail::bt(d); break;
    case LossKind::Focal: m = detail::focal(d, spec.gamma); break;
    case LossKind::FocalPenalty: m = detail::focal_penalty(d, spec.gamma); break;
    case LossKind::Hinge: m = detail::hinge(d, spec.margin); break;
    case LossKind::MarginMSE: m = detail::margin_mse(d, spec.margin); break;
    case LossKind::TemperedLog: m = detail::tempered_log(d, spec.tempered_t); break;
    case LossKind::TemperatureBT: m = detail::temperature_bt(d, spec.temperature); break;
    case LossKind::CE: break;
  }
  return {m.value, m.slope, -m.slope};
}

struct RewardPoint {
  double chosen;
  double rejected;
};

template <class Eval>
concept LossEvaluator = requires(Eval f, double a, double b) {
  { f(a, b) } -> std::convertible_to<LossEval>;
};

// Max over points and both partials of |analytic - central difference| / max(1, |analytic|).
// Points must stay clear of non-smooth loci (Hinge at d == m, FocalPenalty at d == 0).
template <LossEvaluator Eval>
double grad_check(Eval&& eval, std::span<const RewardPoint> points, double h) {
  double worst = 0.0;
  const auto rel = [](double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
  };
  for (const auto& p : points) {
    const LossEval at = eval(p.chosen, p.rejected);
    const double fd_c =
        (eval(p.chosen + h, p.rejected).value - eval(p.chosen - h, p.rejected).value) / (2.0 * h);
    const double fd_r =
        (eval(p.chosen, p.rejected + h).value - eval(p.chosen, p.rejected - h).value) / (2.0 * h);
    worst = std::max({worst, rel(at.grad_chosen, fd_c), rel(at.grad_rejected, fd_r)});
  }
  return worst;
}

inline double grad_check(const LossSpec& spec, std::span<const RewardPoint> points, double h) {
  validate(spec);
  return grad_check([&spec](double c, double r) { return loss_eval(spec, c, r); }, points, h);
}

// Margins where `spec` is not differentiable.
inline std::vector<double> kinks(const LossSpec& spec) {
  switch (spec.kind) {
    case LossKind::Hinge: return {spec.margin};
    case LossKind::FocalPenalty: return spec.gamma == 0.0 ? std::vector<double>{} : std::vector<double>{0.0};
    default: return {};
  }
}

// Uniform points in [lo, hi]^2 whose margin keeps at least `clearance` from every kink.
inline std::vector<RewardPoint> sample_points(const LossSpec& spec, std::size_t n, std::uint64_t seed,
                                              double lo = -10.0, double hi = 10.0,
                                              double clearance = 1e-3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  const auto avoid = kinks(spec);
  std::vector<RewardPoint> out;
  out.reserve(n);
  while (out.size() < n) {
    const RewardPoint p{u(rng), u(rng)};
    const double d = p.chosen - p.rejected;
    if (std::any_of(avoid.begin(), avoid.end(),
                    [&](double k) { return std::abs(d - k) <= clearance; })) {
      continue;
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace prefkit
