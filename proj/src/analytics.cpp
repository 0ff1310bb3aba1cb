#include "subcellsam/analytics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>

#include <Eigen/Dense>
#include <fmt/format.h>

namespace subcellsam {

namespace {

// Shifted by the first value so a constant group has exactly that mean and SD 0.
double mean_of(std::span<const double> v) {
  double shifted = 0.0;
  for (double x : v) shifted += x - v.front();
  return v.front() + shifted / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (v.size() - 1));
}

}  // namespace

double z_prime(std::span<const double> neutral, std::span<const double> positive, ZPrimeDenominator denominator) {
  if (neutral.size() < 2 || positive.size() < 2) {
    throw Error(ErrorCode::DegenerateControls, "Z' needs at least two wells per control group");
  }
  const double mn = mean_of(neutral);
  const double mp = mean_of(positive);
  const double denom = denominator == ZPrimeDenominator::AsPrinted ? std::abs(mp + mn) : std::abs(mp - mn);
  if (!(denom > 0.0)) throw Error(ErrorCode::DegenerateControls, "Z' denominator is zero");
  return 1.0 - 3.0 * (sample_sd(positive, mp) + sample_sd(neutral, mn)) / denom;
}

// ---------------------------------------------------------------- Hill fit

double hill_value(const HillFit& fit, double concentration) {
  if (!(concentration > 0.0)) return fit.s0;
  const double t = std::pow(fit.ec50 / concentration, fit.n);
  return fit.s0 + (fit.s_inf - fit.s0) / (1.0 + t);
}

namespace {

constexpr double kMinHill = 0.1;
constexpr double kMaxHill = 10.0;
constexpr int kMaxIterations = 200;
constexpr double kRelTolerance = 1e-10;

// Parameters: S0, Sinf, L (log10 ec50 relative to the mean log-concentration), n.
using Params = std::array<double, 4>;

// 1 / (1 + 10^(n (L - x))), evaluated without overflow.
double logistic_share(double n, double L, double x) {
  const double z = n * std::numbers::ln10 * (L - x);
  if (z > 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

struct Problem {
  std::vector<double> x;  // centred log10 concentrations
  std::vector<double> y;
  std::vector<double> w;

  double sse(const Params& p) const {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = p[0] + (p[1] - p[0]) * logistic_share(p[3], p[2], x[i]) - y[i];
      s += w[i] * r * r;
    }
    return s;
  }
};

}  // namespace

HillFit fit_hill(const DoseResponse& dr) {
  std::vector<double> distinct;
  for (std::size_t i = 0; i < dr.points.size(); ++i) {
    const auto& pt = dr.points[i];
    if (!(pt.concentration > 0.0) || !std::isfinite(pt.concentration)) {
      throw Error(ErrorCode::InvalidArgument, "concentrations must be positive");
    }
    if (!std::isfinite(pt.response)) throw Error(ErrorCode::InvalidArgument, "non-finite response");
    if (pt.n_wells < 1) throw Error(ErrorCode::InvalidArgument, "n_wells must be at least 1");
    if (i > 0 && pt.concentration < dr.points[i - 1].concentration) {
      throw Error(ErrorCode::InvalidArgument, "dose points must be sorted by concentration");
    }
    if (distinct.empty() || distinct.back() != pt.concentration) distinct.push_back(pt.concentration);
  }
  if (distinct.size() < 4) {
    throw Error(ErrorCode::NotEnoughPoints, fmt::format("{} distinct concentrations; at least 4 required",
                                                        distinct.size()));
  }

  Problem prob;
  double log_sum = 0.0;
  for (const auto& pt : dr.points) log_sum += std::log10(pt.concentration);
  const double offset = log_sum / dr.points.size();
  for (const auto& pt : dr.points) {
    prob.x.push_back(std::log10(pt.concentration) - offset);
    prob.y.push_back(pt.response);
    prob.w.push_back(pt.n_wells);
  }
  const double x_lo = prob.x.front();
  const double x_hi = prob.x.back();

  // Responses at the extreme concentrations (averaged over replicates).
  auto mean_response_at = [&](double c) {
    double s = 0.0;
    double n = 0.0;
    for (const auto& pt : dr.points) {
      if (pt.concentration == c) {
        s += pt.response * pt.n_wells;
        n += pt.n_wells;
      }
    }
    return s / n;
  };

  Params p = {mean_response_at(distinct.front()), mean_response_at(distinct.back()), (x_lo + x_hi) / 2.0, 1.0};
  auto finish = [&](const Params& q, double sse, int iterations, bool converged) {
    HillFit fit;
    fit.s0 = q[0];
    fit.s_inf = q[1];
    fit.ec50 = std::pow(10.0, q[2] + offset);
    fit.n = q[3];
    fit.residual_sse = sse;
    fit.iterations = iterations;
    fit.converged = converged;
    return fit;
  };

  const auto [y_min, y_max] = std::minmax_element(prob.y.begin(), prob.y.end());
  const double scale = std::max(std::abs(*y_min), std::abs(*y_max));
  if (*y_max - *y_min <= 1e-12 * std::max(scale, 1e-300)) {
    const double level = std::accumulate(prob.y.begin(), prob.y.end(), 0.0) / prob.y.size();
    const Params flat = {level, level, (x_lo + x_hi) / 2.0, 1.0};
    return finish(flat, prob.sse(flat), 0, false);
  }

  // Keeps ec50 within a few decades of the tested range, where it is identifiable.
  const double L_lo = x_lo - 5.0;
  const double L_hi = x_hi + 5.0;
  auto project = [&](Params& q) {
    q[3] = std::clamp(q[3], kMinHill, kMaxHill);
    q[2] = std::clamp(q[2], L_lo, L_hi);
  };

  double weighted_y2 = 0.0;
  for (std::size_t i = 0; i < prob.y.size(); ++i) weighted_y2 += prob.w[i] * prob.y[i] * prob.y[i];
  const double sse_floor = 1e-30 * std::max(weighted_y2, 1e-300);

  double sse = prob.sse(p);
  double lambda = 1e-3;
  bool converged = false;
  int iter = 0;
  const std::size_t m = prob.x.size();
  while (iter < kMaxIterations && !converged) {
    ++iter;
    if (sse <= sse_floor) {
      converged = true;
      break;
    }
    Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
    Eigen::Vector4d g = Eigen::Vector4d::Zero();
    for (std::size_t i = 0; i < m; ++i) {
      const double s = logistic_share(p[3], p[2], prob.x[i]);
      const double r = p[0] + (p[1] - p[0]) * s - prob.y[i];
      const double ds = s * (1.0 - s) * std::numbers::ln10;
      Eigen::Vector4d J;
      J << 1.0 - s, s, -(p[1] - p[0]) * p[3] * ds, -(p[1] - p[0]) * (p[2] - prob.x[i]) * ds;
      A += prob.w[i] * J * J.transpose();
      g += prob.w[i] * r * J;
    }

    bool accepted = false;
    while (!accepted) {
      Eigen::Matrix4d damped = A;
      for (int k = 0; k < 4; ++k) damped(k, k) += lambda * std::max(A(k, k), 1e-12 * A.trace());
      const Eigen::Vector4d step = damped.ldlt().solve(-g);
      Params trial = p;
      for (int k = 0; k < 4; ++k) trial[k] += step[k];
      project(trial);
      const double trial_sse = prob.sse(trial);
      if (std::isfinite(trial_sse) && trial_sse < sse) {
        const double rel = (sse - trial_sse) / sse;
        p = trial;
        sse = trial_sse;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (rel < kRelTolerance) converged = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // No descent direction left: a stationary point.
          converged = true;
          break;
        }
      }
    }
  }

  const double spread = std::abs(p[1] - p[0]);
  if (spread <= 1e-9 * std::max(scale, 1e-300)) converged = false;
  return finish(p, sse, iter, converged);
}

// ---------------------------------------------------------------- features per well

FeatureRef FeatureRef::parse(const std::string& name) {
  const auto dot = name.find('.');
  if (dot == std::string::npos) throw Error(ErrorCode::InvalidArgument, "feature name needs a level: " + name);
  FeatureRef ref{parse_object_level(name.substr(0, dot)), name.substr(dot + 1)};
  if (!FeatureTable::column_index(ref.column)) throw Error(ErrorCode::InvalidArgument, "unknown feature " + name);
  return ref;
}

std::string FeatureRef::name() const { return to_string(level) + "." + column; }

std::map<std::string, double> well_means(const FeatureTable& table, const FeatureRef& feature) {
  const auto col = FeatureTable::column_index(feature.column);
  if (!col) throw Error(ErrorCode::InvalidArgument, "unknown feature column " + feature.column);
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& row : table.rows()) {
    if (row.level != feature.level || row.well_id.empty()) continue;
    const auto& v = row.values[*col];
    if (!v) continue;
    auto& [sum, n] = acc[row.well_id];
    sum += *v;
    ++n;
  }
  std::map<std::string, double> out;
  for (const auto& [well, a] : acc) out[well] = a.first / a.second;
  return out;
}

const std::vector<std::string>& default_lda_features() {
  static const std::vector<std::string> names = {
      "cell.nucleus_intensity_mean", "cell.intensity_mean", "cell.extent",
      "cell.perimeter",              "cell.major_axis",     "cell.minor_axis",
      "cell.nucleus_cell_correlation"};
  return names;
}

LdaResult lda_weighted_feature(const FeatureTable& table, const PlateLayout& layout,
                               const std::vector<std::string>& feature_names) {
  if (feature_names.empty()) throw Error(ErrorCode::InvalidArgument, "LDA needs at least one feature");
  std::vector<std::size_t> cols;
  for (const auto& name : feature_names) {
    const FeatureRef ref = FeatureRef::parse(name);
    if (ref.level != ObjectLevel::Cell) throw Error(ErrorCode::InvalidArgument, "LDA uses cell-level features: " + name);
    cols.push_back(*FeatureTable::column_index(ref.column));
  }
  const auto d = static_cast<Eigen::Index>(cols.size());

  struct Sample {
    std::string well;
    Eigen::VectorXd x;
  };
  std::vector<Sample> samples;
  for (const auto& row : table.rows()) {
    if (row.level != ObjectLevel::Cell || !layout.find_well(row.well_id)) continue;
    Eigen::VectorXd x(d);
    bool complete = true;
    for (Eigen::Index k = 0; k < d; ++k) {
      const auto& v = row.values[cols[k]];
      if (!v) {
        complete = false;
        break;
      }
      x[k] = *v;
    }
    if (complete) samples.push_back({row.well_id, std::move(x)});
  }

  std::vector<const Eigen::VectorXd*> pos;
  std::vector<const Eigen::VectorXd*> neu;
  for (const auto& s : samples) {
    const WellRole role = layout.find_well(s.well)->role;
    if (role == WellRole::PositiveControl) pos.push_back(&s.x);
    if (role == WellRole::NeutralControl) neu.push_back(&s.x);
  }
  if (pos.empty() || neu.empty()) throw Error(ErrorCode::DegenerateControls, "LDA needs cells from both control groups");

  // Standardize by the pooled control population.
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
  for (const auto* x : pos) mu += *x;
  for (const auto* x : neu) mu += *x;
  const double n_ctrl = static_cast<double>(pos.size() + neu.size());
  mu /= n_ctrl;
  Eigen::VectorXd sd = Eigen::VectorXd::Zero(d);
  for (const auto* group : {&pos, &neu}) {
    for (const auto* x : *group) sd += (*x - mu).cwiseAbs2();
  }
  sd = (sd / n_ctrl).cwiseSqrt();
  for (Eigen::Index k = 0; k < d; ++k) {
    if (!(sd[k] > 0.0)) sd[k] = 1.0;
  }
  auto standardize = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return (x - mu).cwiseQuotient(sd); };

  auto group_mean = [&](const std::vector<const Eigen::VectorXd*>& g) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(d);
    for (const auto* x : g) m += standardize(*x);
    return Eigen::VectorXd(m / static_cast<double>(g.size()));
  };
  const Eigen::VectorXd mp = group_mean(pos);
  const Eigen::VectorXd mn = group_mean(neu);
  Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(d, d);
  for (const auto* x : pos) {
    const Eigen::VectorXd z = standardize(*x) - mp;
    sw += z * z.transpose();
  }
  for (const auto* x : neu) {
    const Eigen::VectorXd z = standardize(*x) - mn;
    sw += z * z.transpose();
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(sw);
  lu.setThreshold(1e-10);
  if (lu.rank() < d) {
    const double trace = sw.trace();
    const double lambda = trace > 0.0 ? 1e-6 * trace / d : 1e-6;
    sw += lambda * Eigen::MatrixXd::Identity(d, d);
    lu.compute(sw);
  }
  Eigen::VectorXd w = lu.solve(mp - mn);
  if (w.dot(mp - mn) < 0.0) w = -w;

  LdaResult result;
  result.features = feature_names;
  result.weights.assign(w.data(), w.data() + d);
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& s : samples) {
    auto& [sum, n] = acc[s.well];
    sum += w.dot(standardize(s.x));
    ++n;
  }
  for (const auto& [well, a] : acc) result.well_scores[well] = a.first / a.second;
  return result;
}

BestFeature best_feature_by_zprime(const std::map<std::string, std::map<std::string, double>>& per_well,
                                   const PlateLayout& layout, ZPrimeDenominator denominator) {
  BestFeature best;
  for (const auto& [name, wells] : per_well) {
    std::vector<double> neutral;
    std::vector<double> positive;
    for (const auto& [well_id, value] : wells) {
      const Well* well = layout.find_well(well_id);
      if (!well) continue;
      if (well->role == WellRole::NeutralControl) neutral.push_back(value);
      if (well->role == WellRole::PositiveControl) positive.push_back(value);
    }
    if (neutral.size() < 2 || positive.size() < 2) continue;
    // Unseparated controls carry no signal; the printed denominator would still score them.
    const double mn = mean_of(neutral);
    const double mp = mean_of(positive);
    if (std::abs(mp - mn) <= 1e-12 * std::max({std::abs(mp), std::abs(mn), 1e-300})) continue;
    double z = 0.0;
    try {
      z = z_prime(neutral, positive, denominator);
    } catch (const Error&) {
      continue;
    }
    best.scores.push_back({name, z});
    if (best.feature.empty() || z > best.z_prime) {
      best.feature = name;
      best.z_prime = z;
    }
  }
  return best;
}

BestFeature best_feature_by_zprime(const FeatureTable& table, const PlateLayout& layout,
                                   ZPrimeDenominator denominator) {
  std::map<std::string, std::map<std::string, double>> per_well;
  for (ObjectLevel level : {ObjectLevel::Nucleus, ObjectLevel::Cell, ObjectLevel::Subcellular}) {
    for (const auto& column : FeatureTable::columns()) {
      FeatureRef ref{level, column};
      auto means = well_means(table, ref);
      if (!means.empty()) per_well[ref.name()] = std::move(means);
    }
  }
  try {
    per_well[kLdaCompositeName] = lda_weighted_feature(table, layout).well_scores;
  } catch (const Error&) {
    // Composite unavailable (missing controls or features); raw features still compete.
  }
  return best_feature_by_zprime(per_well, layout, denominator);
}

DoseResponse build_dose_response(const std::map<std::string, double>& well_values, const PlateLayout& layout,
                                 const std::string& compound_id) {
  std::map<double, std::pair<double, int>> by_conc;
  for (const auto& well : layout.wells()) {
    if (well.role != WellRole::Compound || well.compound_id != compound_id) continue;
    auto it = well_values.find(well.well_id);
    if (it == well_values.end()) continue;
    auto& [sum, n] = by_conc[*well.concentration];
    sum += it->second;
    ++n;
  }
  DoseResponse dr{compound_id, {}};
  for (const auto& [c, a] : by_conc) dr.points.push_back({c, a.first / a.second, a.second});
  return dr;
}

}  // namespace subcellsam
