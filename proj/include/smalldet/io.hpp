#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "smalldet/montecarlo.hpp"
#include "smalldet/scalar_laws.hpp"

namespace smalldet {

/// %.17g; every float in a report goes through this.
std::string format_real(double x);

/// Whitespace-separated matrix text: "n m" then n rows of m reals.
Eigen::MatrixXd read_matrix(std::istream& in);
Eigen::MatrixXd load_matrix(const std::string& path);
void write_matrix(std::ostream& out, const Eigen::MatrixXd& m);

/// "t,cdf" rows; with_asymptotic appends "asymptotic,ratio" columns, left
/// empty where t >= 0.
void write_product_law_csv(std::ostream& out, const ProductLawTable& table, bool with_asymptotic);
nlohmann::json product_law_sidecar(const ProductLawTable& table);
nlohmann::json product_law_json(const ProductLawTable& table, bool with_asymptotic);

/// eps,n,m,spec_hash,trials,hits,p_hat,ci_low,ci_high,bound,verdict
void write_bound_rows_csv(std::ostream& out, const std::vector<BoundRow>& rows);
nlohmann::json bound_rows_json(const std::vector<BoundRow>& rows);

nlohmann::json to_json(const MonteCarloEstimate& e);
MonteCarloEstimate estimate_from_json(const nlohmann::json& j);

}  // namespace smalldet
