#pragma once

// Rectangular cell-centred finite-volume grids (1D and 2D), the field types
// that live on them, and the conservative divergence-form operators used by
// every solver in the library. Boundary faces always carry zero flux; they
// are never stored.

#include <array>
#include <functional>
#include <span>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace adrctl {

struct RectDomain {
    int dim = 1;
    std::array<double, 2> lengths{1.0, 1.0};
    std::array<int, 2> cells{1, 1};
    std::array<double, 2> spacing{1.0, 1.0};

    int nx() const { return cells[0]; }
    int ny() const { return dim == 2 ? cells[1] : 1; }
    int num_cells() const { return nx() * ny(); }
    double cell_volume() const { return dim == 2 ? spacing[0] * spacing[1] : spacing[0]; }
    double volume() const { return dim == 2 ? lengths[0] * lengths[1] : lengths[0]; }

    int index(int i, int j = 0) const { return i + nx() * j; }
    std::array<double, 2> center(int cell) const;

    // Interior faces normal to x: between (i,j) and (i+1,j), indexed i + (nx-1) j.
    int num_x_faces() const { return (nx() - 1) * ny(); }
    // Interior faces normal to y: between (i,j) and (i,j+1), indexed i + nx j.
    int num_y_faces() const { return dim == 2 ? nx() * (ny() - 1) : 0; }

    bool operator==(const RectDomain&) const = default;
};

/// Builds a validated domain. Throws ConfigError for dim outside {1,2},
/// non-positive lengths or fewer than two cells per axis.
RectDomain build_grid(int dim, std::span<const double> lengths, std::span<const int> cells);
RectDomain build_grid_1d(double length, int cells);

/// One interior face: the two adjacent cells (low, high), the axis it is
/// normal to and its position in that axis' face array.
struct Face {
    int axis;
    int index;
    int low;
    int high;
};

/// Calls `fn(face)` for every interior face, x-faces first, in storage order.
void for_each_face(const RectDomain& domain, const std::function<void(const Face&)>& fn);

struct ScalarField {
    RectDomain domain;
    Eigen::VectorXd values;

    static ScalarField constant(const RectDomain& domain, double value);
    static ScalarField from_function(const RectDomain& domain,
                                     const std::function<double(double, double)>& fn);

    int size() const { return static_cast<int>(values.size()); }
    double min() const { return values.minCoeff(); }
    double max() const { return values.maxCoeff(); }
};

struct FaceField {
    RectDomain domain;
    Eigen::VectorXd x_faces;
    Eigen::VectorXd y_faces;

    static FaceField zeros(const RectDomain& domain);

    double& at(const Face& f) { return f.axis == 0 ? x_faces[f.index] : y_faces[f.index]; }
    double at(const Face& f) const { return f.axis == 0 ? x_faces[f.index] : y_faces[f.index]; }
    double max_abs() const;
    bool all_finite() const;
};

FaceField operator+(const FaceField& lhs, const FaceField& rhs);
FaceField operator*(double s, const FaceField& f);

struct SparseOperator {
    Eigen::SparseMatrix<double> matrix;
    std::string assembled_from;
};

/// Σ values · cell volume.
double mass(const ScalarField& field);

/// Rescales a nonnegative field to unit mass.
ScalarField normalized(const ScalarField& field);

double l2_norm(const ScalarField& field);
double l1_norm(const ScalarField& field);
/// Weighted norm (Σ a u² cellvol)^{1/2}.
double weighted_l2_norm(const ScalarField& u, const ScalarField& a);

ScalarField reciprocal(const ScalarField& field);

/// Discrete L with (L u)_i ≈ ∇·(w ∇(a u)) at cell i and zero flux through ∂Ω.
/// Face coefficient is the harmonic mean of w; the flux is taken on the
/// product a·u, so L (1/a) = 0 and every column sums to zero.
SparseOperator divergence_form_operator(const ScalarField& a, const ScalarField& w);

/// Zero-mean φ solving the discrete Neumann problem -Δφ = rhs.
/// Throws CompatibilityError when mass(rhs) is not zero to 1e-10.
ScalarField neumann_poisson_solve(const ScalarField& rhs);

/// Two-point differences (u_high - u_low)/h on interior faces.
FaceField face_gradient(const ScalarField& u);
/// Face gradient of ln u, i.e. the face-centred evaluation of ∇u/u.
FaceField log_gradient(const ScalarField& u);

/// Cellwise divergence of a face flux with zero boundary flux.
Eigen::VectorXd divergence(const FaceField& flux);

/// Smallest nonzero eigenvalue of -L for L = divergence_form_operator(a, w),
/// by deflated shifted inverse iteration on the a-symmetrised form.
double spectral_gap(const SparseOperator& op, const ScalarField& a);

/// Dense similarity transform M_a^{1/2} L M_a^{-1/2}; symmetric when L was
/// assembled from (a, w).
Eigen::MatrixXd symmetrized(const SparseOperator& op, const ScalarField& a);

}  // namespace adrctl
