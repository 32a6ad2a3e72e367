#pragma once

#include <Eigen/Dense>

namespace mixborrow {

/// Clamped B-spline basis on equally spaced knots over [lo, hi].
struct SplineConfig {
	int degree = 3;
	int n_basis = 8;      // d, before the centering constraint
	double lo = -1.0;
	double hi = 1.0;

	void validate() const;
	int n_interior_knots() const { return n_basis - degree - 1; }
};

/// Full knot vector with degree+1 repeated boundary knots.
Eigen::VectorXd knot_vector(const SplineConfig& cfg);

/// |u| x d matrix of basis values. Points outside [lo, hi] are clamped to the boundary.
Eigen::MatrixXd bspline_design(const SplineConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& u);

/// Entry (i, l) is the `order`-th derivative of b_l at u_i.
Eigen::MatrixXd bspline_derivative_design(const SplineConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& u,
                                          int order = 1);

struct CenteringResult {
	Eigen::MatrixXd design;     // design * transform
	Eigen::MatrixXd transform;  // d x (d-1), orthonormal columns
};

/** \brief Impose the sum-to-zero constraint on a basis.
 *
 * The transform spans the null space of the column means of `reference_design`
 * (the basis evaluated at the reference values), so every centered column averages
 * to zero over those values. Throws when the reference design is rank deficient.
 */
CenteringResult apply_centering(const Eigen::MatrixXd& design, const Eigen::MatrixXd& reference_design);
CenteringResult apply_centering(const Eigen::MatrixXd& design);

/// Orthonormal basis (d x (d-1)) of the complement of a column-mean row vector.
Eigen::MatrixXd centering_transform(const Eigen::RowVectorXd& column_means);

/// Uncentered d x d matrix of integrated products of second derivatives over [lo, hi].
Eigen::MatrixXd second_derivative_penalty(const SplineConfig& cfg);

/// (L - s) x L matrix of order-s finite differences.
Eigen::MatrixXd difference_matrix(int n_lags, int order);

/// psi^T D_s^T D_s psi, the lag-smoothness precision used by the weight prior.
Eigen::MatrixXd lag_precision(int n_lags, int order, const Eigen::MatrixXd& psi);

/// Natural cubic spline basis (n_knots columns) at the points x, knots equally spaced over [x.min, x.max].
Eigen::MatrixXd natural_spline_basis(const Eigen::VectorXd& x, int n_knots);

/** \brief A centered B-spline basis with its penalty, fixed for the life of a chain.
 *
 * Evaluation uses only the degree+1 nonzero functions per point, so a curve value
 * b(u)^T T beta costs O(degree^2) regardless of d.
 */
class CenteredBasis {
public:
	CenteredBasis() = default;
	CenteredBasis(SplineConfig cfg, Eigen::MatrixXd transform);

	/// Build with the transform computed from the basis evaluated at `reference_values`.
	static CenteredBasis from_reference(const SplineConfig& cfg, const Eigen::VectorXd& reference_values);

	const SplineConfig& config() const { return cfg_; }
	const Eigen::MatrixXd& transform() const { return transform_; }
	const Eigen::MatrixXd& penalty() const { return penalty_; }   // T^T Sigma_0 T
	int dim() const { return static_cast<int>(transform_.cols()); }

	Eigen::MatrixXd design(const Eigen::Ref<const Eigen::VectorXd>& u) const;
	Eigen::MatrixXd derivative_design(const Eigen::Ref<const Eigen::VectorXd>& u) const;

	/// f(u) = b(u)^T T coef for every u.
	Eigen::VectorXd curve(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::VectorXd& coef) const;
	/// f'(u) for every u.
	Eigen::VectorXd curve_derivative(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::VectorXd& coef) const;

private:
	SplineConfig cfg_;
	Eigen::VectorXd knots_;
	Eigen::MatrixXd transform_;
	Eigen::MatrixXd penalty_;
};

} // namespace mixborrow
