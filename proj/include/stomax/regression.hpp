#pragma once

#include <span>
#include <string>
#include <vector>

#include "stomax/ensemble.hpp"
#include "stomax/paths.hpp"

namespace stomax {

/// Raw regressor variables, all measurable at the step's left endpoint.
enum class FeatureKind {
  State,         // X_{t_k}
  InverseState,  // 1 / X_{t_k}
  RunningNoise,  // sum of increments over steps < k, one mark
  RunningCount,  // sum of raw counts over steps < k, one mark
  Intensity,     // lambda_{t_k}(z)
  Alive,         // 1 while the mark has no jump strictly before t_k
};

struct FeatureSpec {
  FeatureKind kind;
  int mark = -1;  // -1: expand over all marks
};

/// Basis = intercept + raw variables + (degree 2) squares and cross terms.
struct BasisSpec {
  std::vector<FeatureSpec> vars;
  int degree = 2;
  double ridge_rel = 1e-8;  // ridge = ridge_rel * trace(Gram)/k

  static BasisSpec polynomial(std::vector<FeatureSpec> vars, int degree = 2) {
    BasisSpec b;
    b.vars = std::move(vars);
    b.degree = degree;
    return b;
  }
};

struct FeatureContext {
  const PathEnsemble* ens = nullptr;
  const StatePaths* states = nullptr;
};

/// Materializes the column-major design matrix step by step; running sums
/// advance incrementally, so steps must be visited in non-decreasing order
/// (rewind() restarts).
class DesignBuilder {
 public:
  DesignBuilder(const BasisSpec& spec, const FeatureContext& ctx);

  int n_features() const { return n_features_; }
  int n_paths() const { return n_paths_; }
  const std::vector<std::string>& names() const { return names_; }

  /// Design at the given step; column j occupies [j*n_paths, (j+1)*n_paths).
  const std::vector<double>& at_step(int step);
  void rewind();

 private:
  void advance_to(int step);
  void fill(int step);

  BasisSpec spec_;
  FeatureContext ctx_;
  struct Var {
    FeatureKind kind;
    int mark;
  };
  std::vector<Var> vars_;
  std::vector<std::string> names_;
  int n_features_ = 0;
  int n_paths_ = 0;
  int current_step_ = -1;
  int cum_step_ = 0;
  std::vector<double> cum_noise_;   // n_paths x marks
  std::vector<double> cum_counts_;  // n_paths x marks
  std::vector<double> design_;
};

/// Lower-triangular Cholesky factor of Gram + ridge*I.
struct CholFactor {
  int k = 0;
  std::vector<double> chol;           // row-major lower triangle, k x k
  void solve_in_place(std::span<double> rhs) const;
};

/// Gram = D^T D with a trace-scaled ridge on the diagonal. Throws when the
/// factorization fails even with the ridge.
CholFactor gram_cholesky(const std::vector<double>& design, int n, int k, double ridge_rel);

/// rhs_j = <column j, response>.
std::vector<double> design_rhs(const std::vector<double>& design, int n, int k,
                               std::span<const double> response);

/// Fitted values D * coeffs.
std::vector<double> design_fitted(const std::vector<double>& design, int n, int k,
                                  std::span<const double> coeffs);

/// One-shot ridge least squares; returns coefficients.
std::vector<double> ridge_fit(const std::vector<double>& design, int n, int k,
                              std::span<const double> response, double ridge_rel);

}  // namespace stomax
