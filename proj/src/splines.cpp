#include "mixborrow/splines.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include <boost/math/quadrature/gauss.hpp>

namespace mixborrow {

void SplineConfig::validate() const {
	if (degree < 0) {
		throw std::invalid_argument("spline degree must be non-negative");
	}
	if (n_basis < degree + 1) {
		throw std::invalid_argument("spline needs n_basis >= degree + 1 (got n_basis=" + std::to_string(n_basis) +
		                            ", degree=" + std::to_string(degree) + ")");
	}
	if (!(lo < hi)) {
		throw std::invalid_argument("spline knot range needs lo < hi");
	}
}

Eigen::VectorXd knot_vector(const SplineConfig& cfg) {
	cfg.validate();
	const int p = cfg.degree;
	const int n_interior = cfg.n_interior_knots();
	Eigen::VectorXd t(cfg.n_basis + p + 1);
	const double width = (cfg.hi - cfg.lo) / (n_interior + 1);
	for (int i = 0; i <= p; ++i) {
		t(i) = cfg.lo;
		t(t.size() - 1 - i) = cfg.hi;
	}
	for (int i = 1; i <= n_interior; ++i) {
		t(p + i) = cfg.lo + i * width;
	}
	return t;
}

namespace {

// index of the knot span containing u (u already clamped to [lo, hi])
int find_span(const Eigen::VectorXd& t, int p, int n_basis, double u) {
	const int n = n_basis - 1;
	if (u >= t(n + 1)) {
		return n;
	}
	if (u <= t(p)) {
		return p;
	}
	int low = p;
	int high = n + 1;
	int mid = (low + high) / 2;
	while (u < t(mid) || u >= t(mid + 1)) {
		if (u < t(mid)) {
			high = mid;
		} else {
			low = mid;
		}
		mid = (low + high) / 2;
	}
	return mid;
}

// the p+1 nonzero basis values at u
void basis_funs(const Eigen::VectorXd& t, int span, double u, int p, double* out) {
	std::array<double, 32> left{};
	std::array<double, 32> right{};
	out[0] = 1.0;
	for (int j = 1; j <= p; ++j) {
		left[j] = u - t(span + 1 - j);
		right[j] = t(span + j) - u;
		double saved = 0.0;
		for (int r = 0; r < j; ++r) {
			const double temp = out[r] / (right[r + 1] + left[j - r]);
			out[r] = saved + right[r + 1] * temp;
			saved = left[j - r] * temp;
		}
		out[j] = saved;
	}
}

// nonzero basis derivatives up to order n at u; ders(k, r) is the k-th derivative of b_{span-p+r}
Eigen::MatrixXd ders_basis_funs(const Eigen::VectorXd& t, int span, double u, int p, int n) {
	Eigen::MatrixXd ndu(p + 1, p + 1);
	Eigen::VectorXd left(p + 1);
	Eigen::VectorXd right(p + 1);
	ndu(0, 0) = 1.0;
	for (int j = 1; j <= p; ++j) {
		left(j) = u - t(span + 1 - j);
		right(j) = t(span + j) - u;
		double saved = 0.0;
		for (int r = 0; r < j; ++r) {
			ndu(j, r) = right(r + 1) + left(j - r);
			const double temp = ndu(r, j - 1) / ndu(j, r);
			ndu(r, j) = saved + right(r + 1) * temp;
			saved = left(j - r) * temp;
		}
		ndu(j, j) = saved;
	}
	Eigen::MatrixXd ders = Eigen::MatrixXd::Zero(n + 1, p + 1);
	for (int j = 0; j <= p; ++j) {
		ders(0, j) = ndu(j, p);
	}
	Eigen::MatrixXd a(2, p + 1);
	for (int r = 0; r <= p; ++r) {
		int s1 = 0;
		int s2 = 1;
		a(0, 0) = 1.0;
		for (int k = 1; k <= n; ++k) {
			double d = 0.0;
			const int rk = r - k;
			const int pk = p - k;
			if (r >= k) {
				a(s2, 0) = a(s1, 0) / ndu(pk + 1, rk);
				d = a(s2, 0) * ndu(rk, pk);
			}
			const int j1 = (rk >= -1) ? 1 : -rk;
			const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
			for (int j = j1; j <= j2; ++j) {
				a(s2, j) = (a(s1, j) - a(s1, j - 1)) / ndu(pk + 1, rk + j);
				d += a(s2, j) * ndu(rk + j, pk);
			}
			if (r <= pk) {
				a(s2, k) = -a(s1, k - 1) / ndu(pk + 1, r);
				d += a(s2, k) * ndu(r, pk);
			}
			ders(k, r) = d;
			std::swap(s1, s2);
		}
	}
	double factor = p;
	for (int k = 1; k <= n; ++k) {
		ders.row(k) *= factor;
		factor *= (p - k);
	}
	return ders;
}

double clamp_to(const SplineConfig& cfg, double u) { return std::clamp(u, cfg.lo, cfg.hi); }

} // namespace

Eigen::MatrixXd bspline_design(const SplineConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& u) {
	if (u.size() == 0) {
		throw std::invalid_argument("bspline_design: empty evaluation vector");
	}
	const Eigen::VectorXd t = knot_vector(cfg);
	const int p = cfg.degree;
	Eigen::MatrixXd out = Eigen::MatrixXd::Zero(u.size(), cfg.n_basis);
	std::array<double, 32> vals{};
	for (Eigen::Index i = 0; i < u.size(); ++i) {
		const double x = clamp_to(cfg, u(i));
		const int span = find_span(t, p, cfg.n_basis, x);
		basis_funs(t, span, x, p, vals.data());
		for (int r = 0; r <= p; ++r) {
			out(i, span - p + r) = vals[r];
		}
	}
	return out;
}

Eigen::MatrixXd bspline_derivative_design(const SplineConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& u,
                                          int order) {
	if (u.size() == 0) {
		throw std::invalid_argument("bspline_derivative_design: empty evaluation vector");
	}
	if (order < 0) {
		throw std::invalid_argument("derivative order must be non-negative");
	}
	const Eigen::VectorXd t = knot_vector(cfg);
	const int p = cfg.degree;
	Eigen::MatrixXd out = Eigen::MatrixXd::Zero(u.size(), cfg.n_basis);
	if (order > p) {
		return out;
	}
	for (Eigen::Index i = 0; i < u.size(); ++i) {
		const double x = clamp_to(cfg, u(i));
		const int span = find_span(t, p, cfg.n_basis, x);
		const Eigen::MatrixXd ders = ders_basis_funs(t, span, x, p, order);
		for (int r = 0; r <= p; ++r) {
			out(i, span - p + r) = ders(order, r);
		}
	}
	return out;
}

Eigen::MatrixXd centering_transform(const Eigen::RowVectorXd& column_means) {
	const Eigen::Index d = column_means.size();
	Eigen::HouseholderQR<Eigen::MatrixXd> qr(column_means.transpose());
	const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
	return q.rightCols(d - 1);
}

CenteringResult apply_centering(const Eigen::MatrixXd& design, const Eigen::MatrixXd& reference_design) {
	if (reference_design.rows() == 0) {
		throw std::invalid_argument("apply_centering: reference values are empty");
	}
	if (reference_design.cols() != design.cols()) {
		throw std::invalid_argument("apply_centering: design and reference have different widths");
	}
	Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rank_check(reference_design);
	rank_check.setThreshold(1e-10);
	if (rank_check.rank() < reference_design.cols()) {
		throw std::invalid_argument("apply_centering: degenerate design (rank " + std::to_string(rank_check.rank()) +
		                            " < " + std::to_string(reference_design.cols()) + ")");
	}
	CenteringResult res;
	res.transform = centering_transform(reference_design.colwise().mean());
	res.design = design * res.transform;
	return res;
}

CenteringResult apply_centering(const Eigen::MatrixXd& design) { return apply_centering(design, design); }

Eigen::MatrixXd second_derivative_penalty(const SplineConfig& cfg) {
	cfg.validate();
	if (cfg.degree < 2) {
		throw std::invalid_argument("second_derivative_penalty needs degree >= 2");
	}
	using Rule = boost::math::quadrature::gauss<double, 10>;
	const auto& nodes = Rule::abscissa();
	const auto& weights = Rule::weights();
	const Eigen::VectorXd t = knot_vector(cfg);
	Eigen::MatrixXd pen = Eigen::MatrixXd::Zero(cfg.n_basis, cfg.n_basis);
	for (Eigen::Index s = cfg.degree; s < t.size() - cfg.degree - 1; ++s) {
		const double a = t(s);
		const double b = t(s + 1);
		if (!(b > a)) {
			continue;
		}
		const double half = 0.5 * (b - a);
		const double mid = 0.5 * (a + b);
		for (std::size_t q = 0; q < nodes.size(); ++q) {
			for (const double sign : {-1.0, 1.0}) {
				const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, mid + sign * half * nodes[q]);
				const Eigen::RowVectorXd row = bspline_derivative_design(cfg, x, 2).row(0);
				pen.noalias() += weights[q] * half * row.transpose() * row;
			}
		}
	}
	return 0.5 * (pen + pen.transpose());
}

Eigen::MatrixXd difference_matrix(int n_lags, int order) {
	if (order < 1 || order >= n_lags) {
		throw std::invalid_argument("difference_matrix needs 1 <= s < L");
	}
	Eigen::MatrixXd d = Eigen::MatrixXd::Identity(n_lags, n_lags);
	for (int s = 0; s < order; ++s) {
		d = (d.bottomRows(d.rows() - 1) - d.topRows(d.rows() - 1)).eval();
	}
	return d;
}

Eigen::MatrixXd lag_precision(int n_lags, int order, const Eigen::MatrixXd& psi) {
	if (psi.rows() != n_lags) {
		throw std::invalid_argument("lag_precision: psi must have L rows");
	}
	const Eigen::MatrixXd dpsi = difference_matrix(n_lags, order) * psi;
	const Eigen::MatrixXd prec = dpsi.transpose() * dpsi;
	return 0.5 * (prec + prec.transpose());
}

Eigen::MatrixXd natural_spline_basis(const Eigen::VectorXd& x, int n_knots) {
	if (n_knots < 1) {
		throw std::invalid_argument("natural_spline_basis needs at least one knot");
	}
	const Eigen::Index n = x.size();
	Eigen::MatrixXd basis(n, n_knots);
	basis.col(0).setOnes();
	if (n_knots == 1) {
		return basis;
	}
	basis.col(1) = x;
	const double lo = x.minCoeff();
	const double hi = x.maxCoeff();
	Eigen::VectorXd knots = Eigen::VectorXd::LinSpaced(n_knots, lo, hi);
	auto cube_plus = [](double v) { return v > 0.0 ? v * v * v : 0.0; };
	auto dk = [&](int k, double v) {
		return (cube_plus(v - knots(k)) - cube_plus(v - knots(n_knots - 1))) / (knots(n_knots - 1) - knots(k));
	};
	for (int k = 0; k < n_knots - 2; ++k) {
		for (Eigen::Index i = 0; i < n; ++i) {
			basis(i, k + 2) = dk(k, x(i)) - dk(n_knots - 2, x(i));
		}
	}
	return basis;
}

CenteredBasis::CenteredBasis(SplineConfig cfg, Eigen::MatrixXd transform)
	: cfg_(cfg), knots_(knot_vector(cfg)), transform_(std::move(transform)) {
	if (transform_.rows() != cfg_.n_basis) {
		throw std::invalid_argument("CenteredBasis: transform must have n_basis rows");
	}
	if (cfg_.degree >= 2) {
		const Eigen::MatrixXd raw = second_derivative_penalty(cfg_);
		penalty_ = transform_.transpose() * raw * transform_;
		penalty_ = 0.5 * (penalty_ + penalty_.transpose()).eval();
	} else {
		penalty_ = Eigen::MatrixXd::Identity(transform_.cols(), transform_.cols());
	}
}

CenteredBasis CenteredBasis::from_reference(const SplineConfig& cfg, const Eigen::VectorXd& reference_values) {
	if (reference_values.size() == 0) {
		throw std::invalid_argument("centering needs nonempty reference values");
	}
	const Eigen::MatrixXd ref = bspline_design(cfg, reference_values);
	return CenteredBasis(cfg, centering_transform(ref.colwise().mean()));
}

Eigen::MatrixXd CenteredBasis::design(const Eigen::Ref<const Eigen::VectorXd>& u) const {
	const int p = cfg_.degree;
	Eigen::MatrixXd out(u.size(), transform_.cols());
	std::array<double, 32> vals{};
	for (Eigen::Index i = 0; i < u.size(); ++i) {
		const double x = clamp_to(cfg_, u(i));
		const int span = find_span(knots_, p, cfg_.n_basis, x);
		basis_funs(knots_, span, x, p, vals.data());
		Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(transform_.cols());
		for (int r = 0; r <= p; ++r) {
			row.noalias() += vals[r] * transform_.row(span - p + r);
		}
		out.row(i) = row;
	}
	return out;
}

Eigen::MatrixXd CenteredBasis::derivative_design(const Eigen::Ref<const Eigen::VectorXd>& u) const {
	return bspline_derivative_design(cfg_, u, 1) * transform_;
}

Eigen::VectorXd CenteredBasis::curve(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::VectorXd& coef) const {
	const Eigen::VectorXd gamma = transform_ * coef;
	const int p = cfg_.degree;
	Eigen::VectorXd out(u.size());
	std::array<double, 32> vals{};
	for (Eigen::Index i = 0; i < u.size(); ++i) {
		const double x = clamp_to(cfg_, u(i));
		const int span = find_span(knots_, p, cfg_.n_basis, x);
		basis_funs(knots_, span, x, p, vals.data());
		double acc = 0.0;
		for (int r = 0; r <= p; ++r) {
			acc += vals[r] * gamma(span - p + r);
		}
		out(i) = acc;
	}
	return out;
}

Eigen::VectorXd CenteredBasis::curve_derivative(const Eigen::Ref<const Eigen::VectorXd>& u,
                                                const Eigen::VectorXd& coef) const {
	const Eigen::VectorXd gamma = transform_ * coef;
	const int p = cfg_.degree;
	Eigen::VectorXd out(u.size());
	if (p == 0) {
		out.setZero();
		return out;
	}
	std::array<double, 32> vals{};
	for (Eigen::Index i = 0; i < u.size(); ++i) {
		const double x = clamp_to(cfg_, u(i));
		const int span = find_span(knots_, p, cfg_.n_basis, x);
		// derivative via the degree p-1 basis: f' = sum_r N_{r,p-1} * p (g_r - g_{r-1}) / (t_{r+p} - t_r)
		basis_funs(knots_, span, x, p - 1, vals.data());
		double acc = 0.0;
		for (int r = 0; r < p; ++r) {
			const int idx = span - p + 1 + r;   // coefficient index of the lower-degree function
			const double denom = knots_(idx + p) - knots_(idx);
			if (denom > 0.0) {
				acc += vals[r] * p * (gamma(idx) - gamma(idx - 1)) / denom;
			}
		}
		out(i) = acc;
	}
	return out;
}

} // namespace mixborrow
