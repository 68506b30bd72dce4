#pragma once

#include "kfdmd/core.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace kfdmd {

// How many singular triplets of Y0 to keep.
class RankPolicy {
public:
    enum class Kind { fixed, threshold, energy };

    static RankPolicy fixed(Index r);
    // Keep singular values above tau * sigma_max, tau in (0, 1).
    static RankPolicy threshold(double tau);
    // Smallest rank capturing a fraction eta in (0, 1] of sum sigma_i^2.
    static RankPolicy energy(double eta);

    Kind kind() const { return kind_; }
    double value() const { return value_; }

    // Applies the policy to descending singular values. Throws when a fixed
    // rank exceeds the numerical rank.
    Index select(const Eigen::VectorXd& singular_values, Index rows, Index cols) const;

private:
    RankPolicy(Kind kind, double value) : kind_(kind), value_(value) {}
    Kind kind_;
    double value_;
};

// Everything exact DMD computes on the way to the spectral triple.
struct DmdDecomposition {
    SpectralParams params;
    Eigen::MatrixXd u;                  // d x r left singular vectors
    Eigen::VectorXd singular_values;    // r
    Eigen::MatrixXd v;                  // m x r right singular vectors
    Eigen::MatrixXd reduced_operator;   // r x r, U^T Y1 V Sigma^-1
    Eigen::MatrixXcd reduced_modes;     // r x r eigenvectors, columns in params order
};

// Deterministic eigenvalue order: modulus descending, then real part
// descending, then imaginary part descending (relative tolerance 1e-10 on
// each key).
std::vector<Index> spectral_order(const Eigen::VectorXcd& eigenvalues);

// Least-squares amplitudes b = Phi^+ y0.
Eigen::VectorXcd fit_amplitudes(const Eigen::MatrixXcd& modes, const Eigen::Ref<const Eigen::VectorXd>& y0);

DmdDecomposition exact_dmd_decomposition(const Eigen::Ref<const Eigen::MatrixXd>& y0,
                                         const Eigen::Ref<const Eigen::MatrixXd>& y1, const RankPolicy& policy);

SpectralParams exact_dmd(const Eigen::Ref<const Eigen::MatrixXd>& y0, const Eigen::Ref<const Eigen::MatrixXd>& y1,
                         const RankPolicy& policy);
SpectralParams exact_dmd(const SnapshotSeries& series, const RankPolicy& policy);

// DMD of (C Y0, C Y1) with full-state modes Y1 V' Sigma'^-1 phi'.
// Amplitudes are refit against the uncompressed first snapshot.
DmdDecomposition compressed_dmd_decomposition(const Eigen::Ref<const Eigen::MatrixXd>& y0,
                                              const Eigen::Ref<const Eigen::MatrixXd>& y1,
                                              const Eigen::Ref<const Eigen::MatrixXd>& compression,
                                              const RankPolicy& policy);
SpectralParams compressed_dmd(const Eigen::Ref<const Eigen::MatrixXd>& y0, const Eigen::Ref<const Eigen::MatrixXd>& y1,
                              const Eigen::Ref<const Eigen::MatrixXd>& compression, const RankPolicy& policy);

// c x d matrix with i.i.d. N(0, 1/c) entries.
Eigen::MatrixXd gaussian_compression(Index c, Index d, std::uint64_t seed);

// Pairing of estimated with reference eigenvalues.
enum class Matching { sort_order, greedy_nearest, optimal };

// perm[i] is the index into `estimate` paired with reference[i]. Requires
// estimate.size() >= reference.size().
std::vector<Index> match_eigenvalues(const Eigen::VectorXcd& estimate, const Eigen::VectorXcd& reference,
                                     Matching how);

// Mean |estimate_perm(i) - reference_i| under the optimal pairing.
double mean_eigenvalue_error(const Eigen::VectorXcd& estimate, const Eigen::VectorXcd& reference);

// Observable dictionary for EDMD lifting.
class Dictionary {
public:
    using Lift = std::function<Eigen::VectorXd(const Eigen::Ref<const Eigen::VectorXd>&)>;

    Dictionary(std::string name, Index input_dim, Index lifted_dim, Lift lift);

    static Dictionary identity(Index dim);
    // (x1, x2) -> (x1, x2, x1^2).
    static Dictionary quadratic_pair();
    // u -> [u; u^3].
    static Dictionary cubic(Index dim);

    const std::string& name() const { return name_; }
    Index input_dim() const { return input_dim_; }
    Index lifted_dim() const { return lifted_dim_; }
    Eigen::VectorXd operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;

private:
    std::string name_;
    Index input_dim_;
    Index lifted_dim_;
    Lift lift_;
};

SnapshotSeries lift_series(const SnapshotSeries& series, const Dictionary& dict);

}  // namespace kfdmd
