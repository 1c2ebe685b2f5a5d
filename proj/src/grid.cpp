#include "adrctl/grid.hpp"

#include <cmath>
#include <numeric>

#include <Eigen/SparseLU>

#include "adrctl/errors.hpp"

namespace adrctl {

std::array<double, 2> RectDomain::center(int cell) const {
    const int i = cell % nx();
    const int j = cell / nx();
    return {(i + 0.5) * spacing[0], dim == 2 ? (j + 0.5) * spacing[1] : 0.0};
}

RectDomain build_grid(int dim, std::span<const double> lengths, std::span<const int> cells) {
    if (dim != 1 && dim != 2) throw ConfigError("grid", "dimension must be 1 or 2");
    if (lengths.size() < static_cast<std::size_t>(dim) || cells.size() < static_cast<std::size_t>(dim))
        throw ConfigError("grid", "need one length and one cell count per axis");
    RectDomain d;
    d.dim = dim;
    for (int k = 0; k < dim; ++k) {
        if (!(lengths[k] > 0.0) || !std::isfinite(lengths[k]))
            throw ConfigError("grid", "lengths must be positive and finite");
        if (cells[k] < 2) throw ConfigError("grid", "need at least two cells per axis");
        d.lengths[k] = lengths[k];
        d.cells[k] = cells[k];
        d.spacing[k] = lengths[k] / cells[k];
    }
    if (dim == 1) {
        d.lengths[1] = 1.0;
        d.cells[1] = 1;
        d.spacing[1] = 1.0;
    }
    return d;
}

RectDomain build_grid_1d(double length, int cells) {
    const double l[1] = {length};
    const int c[1] = {cells};
    return build_grid(1, l, c);
}

void for_each_face(const RectDomain& d, const std::function<void(const Face&)>& fn) {
    const int nx = d.nx(), ny = d.ny();
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i)
            fn(Face{0, i + (nx - 1) * j, d.index(i, j), d.index(i + 1, j)});
    if (d.dim == 2)
        for (int j = 0; j + 1 < ny; ++j)
            for (int i = 0; i < nx; ++i)
                fn(Face{1, i + nx * j, d.index(i, j), d.index(i, j + 1)});
}

ScalarField ScalarField::constant(const RectDomain& domain, double value) {
    return {domain, Eigen::VectorXd::Constant(domain.num_cells(), value)};
}

ScalarField ScalarField::from_function(const RectDomain& domain,
                                       const std::function<double(double, double)>& fn) {
    ScalarField f{domain, Eigen::VectorXd(domain.num_cells())};
    for (int k = 0; k < domain.num_cells(); ++k) {
        const auto c = domain.center(k);
        f.values[k] = fn(c[0], c[1]);
    }
    return f;
}

FaceField FaceField::zeros(const RectDomain& domain) {
    return {domain, Eigen::VectorXd::Zero(domain.num_x_faces()),
            Eigen::VectorXd::Zero(domain.num_y_faces())};
}

double FaceField::max_abs() const {
    double m = 0.0;
    if (x_faces.size()) m = std::max(m, x_faces.cwiseAbs().maxCoeff());
    if (y_faces.size()) m = std::max(m, y_faces.cwiseAbs().maxCoeff());
    return m;
}

bool FaceField::all_finite() const { return x_faces.allFinite() && y_faces.allFinite(); }

FaceField operator+(const FaceField& lhs, const FaceField& rhs) {
    return {lhs.domain, lhs.x_faces + rhs.x_faces, lhs.y_faces + rhs.y_faces};
}

FaceField operator*(double s, const FaceField& f) {
    return {f.domain, s * f.x_faces, s * f.y_faces};
}

double mass(const ScalarField& field) { return field.values.sum() * field.domain.cell_volume(); }

ScalarField normalized(const ScalarField& field) {
    const double m = mass(field);
    if (!(m > 0.0)) throw InputError("grid", "cannot normalise a field with non-positive mass");
    return {field.domain, field.values / m};
}

double l2_norm(const ScalarField& field) {
    return std::sqrt(field.values.squaredNorm() * field.domain.cell_volume());
}

double l1_norm(const ScalarField& field) {
    return field.values.cwiseAbs().sum() * field.domain.cell_volume();
}

double weighted_l2_norm(const ScalarField& u, const ScalarField& a) {
    return std::sqrt((a.values.array() * u.values.array().square()).sum() * u.domain.cell_volume());
}

ScalarField reciprocal(const ScalarField& field) {
    return {field.domain, field.values.cwiseInverse()};
}

namespace {

double inv_h2(const RectDomain& d, int axis) { return 1.0 / (d.spacing[axis] * d.spacing[axis]); }

}  // namespace

SparseOperator divergence_form_operator(const ScalarField& a, const ScalarField& w) {
    if (!(a.min() > 0.0)) throw CoefficientError("grid", "coefficient a must be positive");
    if (!(w.min() > 0.0)) throw CoefficientError("grid", "coefficient w must be positive");
    const RectDomain& d = a.domain;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(4 * (d.num_x_faces() + d.num_y_faces()));
    for_each_face(d, [&](const Face& f) {
        const double wl = w.values[f.low], wh = w.values[f.high];
        const double c = 2.0 * wl * wh / (wl + wh) * inv_h2(d, f.axis);
        const double al = a.values[f.low], ah = a.values[f.high];
        // Flux c (a_h u_h - a_l u_l) enters `low` and leaves `high`.
        trips.emplace_back(f.low, f.high, c * ah);
        trips.emplace_back(f.low, f.low, -c * al);
        trips.emplace_back(f.high, f.low, c * al);
        trips.emplace_back(f.high, f.high, -c * ah);
    });
    SparseOperator op;
    op.matrix.resize(d.num_cells(), d.num_cells());
    op.matrix.setFromTriplets(trips.begin(), trips.end());
    op.assembled_from = "div(w grad(a u))";
    return op;
}

ScalarField neumann_poisson_solve(const ScalarField& rhs) {
    const RectDomain& d = rhs.domain;
    const double m = mass(rhs);
    const double scale = std::max(1.0, l1_norm(rhs));
    if (std::abs(m) > 1e-10 * scale)
        throw CompatibilityError("grid", "Neumann Poisson right-hand side must have zero mass");
    const int n = d.num_cells();
    Eigen::VectorXd b = rhs.values.array() - rhs.values.mean();
    if (b.lpNorm<Eigen::Infinity>() == 0.0) return ScalarField::constant(d, 0.0);

    const ScalarField one = ScalarField::constant(d, 1.0);
    Eigen::SparseMatrix<double> A = -divergence_form_operator(one, one).matrix;
    // Pin cell 0; the dropped equation is implied by the compatible rhs.
    std::vector<Eigen::Triplet<double>> trips;
    for (int k = 0; k < A.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
            if (it.row() != 0) trips.emplace_back(it.row(), it.col(), it.value());
    trips.emplace_back(0, 0, 1.0);
    Eigen::SparseMatrix<double> P(n, n);
    P.setFromTriplets(trips.begin(), trips.end());
    Eigen::VectorXd bp = b;
    bp[0] = 0.0;

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(P);
    if (lu.info() != Eigen::Success) throw NumericalError("grid", "Poisson factorisation failed");
    Eigen::VectorXd phi = lu.solve(bp);
    phi.array() -= phi.mean();

    const double res = (A * phi - b).lpNorm<Eigen::Infinity>();
    if (!(res <= 1e-12 * std::max(1.0, A.coeffs().cwiseAbs().maxCoeff() * phi.lpNorm<Eigen::Infinity>())))
        throw NumericalError("grid", "Poisson residual " + std::to_string(res) + " above tolerance");
    return {d, phi};
}

FaceField face_gradient(const ScalarField& u) {
    FaceField g = FaceField::zeros(u.domain);
    for_each_face(u.domain, [&](const Face& f) {
        g.at(f) = (u.values[f.high] - u.values[f.low]) / u.domain.spacing[f.axis];
    });
    return g;
}

FaceField log_gradient(const ScalarField& u) {
    if (!(u.min() > 0.0)) throw CoefficientError("grid", "log-gradient needs a positive field");
    FaceField g = FaceField::zeros(u.domain);
    for_each_face(u.domain, [&](const Face& f) {
        g.at(f) = std::log(u.values[f.high] / u.values[f.low]) / u.domain.spacing[f.axis];
    });
    return g;
}

Eigen::VectorXd divergence(const FaceField& flux) {
    const RectDomain& d = flux.domain;
    Eigen::VectorXd div = Eigen::VectorXd::Zero(d.num_cells());
    for_each_face(d, [&](const Face& f) {
        const double q = flux.at(f) / d.spacing[f.axis];
        div[f.low] += q;
        div[f.high] -= q;
    });
    return div;
}

Eigen::MatrixXd symmetrized(const SparseOperator& op, const ScalarField& a) {
    const Eigen::VectorXd s = a.values.cwiseSqrt();
    Eigen::MatrixXd L = Eigen::MatrixXd(op.matrix);
    return s.asDiagonal() * L * s.cwiseInverse().asDiagonal();
}

double spectral_gap(const SparseOperator& op, const ScalarField& a) {
    const int n = static_cast<int>(op.matrix.rows());
    const Eigen::VectorXd s = a.values.cwiseSqrt();
    // S = -M^{1/2} L M^{-1/2}, symmetric positive semidefinite, kernel a^{-1/2}.
    Eigen::SparseMatrix<double> S = -(s.asDiagonal() * op.matrix * s.cwiseInverse().asDiagonal());
    Eigen::VectorXd kernel = s.cwiseInverse();
    kernel.normalize();

    const double diag_max = S.diagonal().cwiseAbs().maxCoeff();
    const double shift = 1e-6 * diag_max;
    Eigen::SparseMatrix<double> I(n, n);
    I.setIdentity();
    Eigen::SparseMatrix<double> M = S + shift * I;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(M);
    if (lu.info() != Eigen::Success) throw NumericalError("grid", "spectral-gap factorisation failed");

    Eigen::VectorXd x(n);
    for (int k = 0; k < n; ++k) x[k] = std::sin(0.7 + 1.3 * k) + 0.1 * std::cos(3.1 * k);
    x -= kernel.dot(x) * kernel;
    x.normalize();
    double rq = x.dot(S * x);
    for (int it = 0; it < 2000; ++it) {
        Eigen::VectorXd y = lu.solve(x);
        y -= kernel.dot(y) * kernel;
        y.normalize();
        const double next = y.dot(S * y);
        x = y;
        if (std::abs(next - rq) <= 1e-15 * std::abs(next) && it > 5) {
            rq = next;
            break;
        }
        rq = next;
    }
    return rq;
}

}  // namespace adrctl
