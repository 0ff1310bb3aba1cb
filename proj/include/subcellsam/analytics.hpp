#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "subcellsam/features.hpp"
#include "subcellsam/plate.hpp"

namespace subcellsam {

// AsPrinted: 1 - 3(sp + sn) / |mp + mn|. Conventional: |mp - mn|.
enum class ZPrimeDenominator { AsPrinted, Conventional };

// Sample standard deviations. Throws DegenerateControls for groups smaller
// than two or a zero denominator.
double z_prime(std::span<const double> neutral, std::span<const double> positive,
               ZPrimeDenominator denominator = ZPrimeDenominator::AsPrinted);

struct DosePoint {
  double concentration = 0.0;  // molar
  double response = 0.0;
  int n_wells = 1;
};

struct DoseResponse {
  std::string compound_id;
  std::vector<DosePoint> points;  // ascending concentration
};

struct HillFit {
  double s0 = 0.0;
  double s_inf = 0.0;
  double ec50 = 0.0;
  double n = 1.0;
  double residual_sse = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Y = S0 + (Sinf - S0) / (1 + (ec50 / C)^n)
double hill_value(const HillFit& fit, double concentration);

// Weighted (n_wells) Levenberg-Marquardt in (S0, Sinf, log10 ec50, n).
// Throws NotEnoughPoints (< 4 distinct concentrations) and InvalidArgument.
HillFit fit_hill(const DoseResponse& dr);

// "<level>.<column>", e.g. "cell.area".
struct FeatureRef {
  ObjectLevel level = ObjectLevel::Cell;
  std::string column;

  static FeatureRef parse(const std::string& name);
  std::string name() const;
};

// Mean over the level's objects in each well; wells without values are absent.
std::map<std::string, double> well_means(const FeatureTable& table, const FeatureRef& feature);

const std::vector<std::string>& default_lda_features();

struct LdaResult {
  std::vector<std::string> features;
  std::vector<double> weights;  // on control-standardized features
  std::map<std::string, double> well_scores;
};

// Fisher discriminant on cell-level control rows; cells missing any listed
// feature are skipped. Throws DegenerateControls when a control group is empty.
LdaResult lda_weighted_feature(const FeatureTable& table, const PlateLayout& layout,
                               const std::vector<std::string>& feature_names = default_lda_features());

struct ZPrimeScore {
  std::string feature;
  double z_prime = 0.0;
};

struct BestFeature {
  std::string feature;  // empty when nothing was scorable
  double z_prime = 0.0;
  std::vector<ZPrimeScore> scores;  // sorted by name
};

inline constexpr const char* kLdaCompositeName = "lda_composite";

// Z' of every per-well feature and, when computable, the LDA composite.
// Features whose control means coincide are not scored.
BestFeature best_feature_by_zprime(const FeatureTable& table, const PlateLayout& layout,
                                   ZPrimeDenominator denominator = ZPrimeDenominator::AsPrinted);
BestFeature best_feature_by_zprime(const std::map<std::string, std::map<std::string, double>>& per_well,
                                   const PlateLayout& layout,
                                   ZPrimeDenominator denominator = ZPrimeDenominator::AsPrinted);

// Groups compound wells by concentration; response = mean of per-well values.
DoseResponse build_dose_response(const std::map<std::string, double>& well_values, const PlateLayout& layout,
                                 const std::string& compound_id);

}  // namespace subcellsam
