#pragma once
// Sparse linear algebra behind the solver: stencil matrices and a direct
// sparse solve with a hard relative-residual contract.

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <string>
#include <vector>

#include "kscd/grid.hpp"
#include "kscd/operators.hpp"

namespace kscd {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;

/// Matrix of the finite-volume Laplacian, rows scaled by 1/measure so that
/// (L f)_i equals laplacian(f, bc) at cell i.
inline SpMat laplacian_matrix(const Grid& g, Bc bc) {
  std::vector<Triplet> trip;
  trip.reserve(4 * g.faces.size() + g.bfaces.size());
  for (const Face& fc : g.faces) {
    double t = fc.area / fc.dist;
    trip.emplace_back(fc.p, fc.p, -t / g.measure[static_cast<std::size_t>(fc.p)]);
    trip.emplace_back(fc.p, fc.n, t / g.measure[static_cast<std::size_t>(fc.p)]);
    trip.emplace_back(fc.n, fc.n, -t / g.measure[static_cast<std::size_t>(fc.n)]);
    trip.emplace_back(fc.n, fc.p, t / g.measure[static_cast<std::size_t>(fc.n)]);
  }
  if (bc == Bc::Dirichlet0) {
    for (const BoundaryFace& bf : g.bfaces)
      trip.emplace_back(bf.cell, bf.cell, -bf.area / bf.dist / g.measure[static_cast<std::size_t>(bf.cell)]);
  }
  SpMat L(g.cells(), g.cells());
  L.setFromTriplets(trip.begin(), trip.end());
  return L;
}

struct LinearSolveResult {
  Vec x;
  bool ok = false;
  double rel_residual = 0.0;
  std::string error;
};

/// Direct sparse solve with iterative refinement. Contract: relative residual
/// ||Ax-b|| / ||b|| <= 1e-12, singularity reported. Badly row-scaled systems
/// can hit the double-precision floor above that bound; those are accepted
/// once the componentwise backward error reaches machine level.
inline LinearSolveResult linear_solve(const SpMat& A, const Vec& b) {
  LinearSolveResult res;
  if (A.rows() != A.cols() || A.rows() != b.size()) {
    res.error = "linear_solve: shape mismatch";
    return res;
  }
  double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.x = Vec::Zero(b.size());
    res.ok = true;
    return res;
  }
  Eigen::SparseLU<SpMat> lu;
  lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() != Eigen::Success) {
    res.error = "linear_solve: singular or structurally deficient matrix";
    return res;
  }
  res.x = lu.solve(b);
  Vec r = b - A * res.x;
  res.rel_residual = r.norm() / bnorm;
  for (int pass = 0; pass < 3 && res.rel_residual > 1e-12; ++pass) {
    res.x += lu.solve(r);
    r = b - A * res.x;
    res.rel_residual = r.norm() / bnorm;
  }
  if (!res.x.allFinite()) {
    res.error = "linear_solve: non-finite solution";
    return res;
  }
  if (res.rel_residual > 1e-12) {
    double anorm = 0.0;
    Vec rowsum = A.cwiseAbs() * Vec::Ones(A.cols());
    anorm = rowsum.maxCoeff();
    double backward =
        r.cwiseAbs().maxCoeff() / (anorm * res.x.cwiseAbs().maxCoeff() + b.cwiseAbs().maxCoeff());
    if (backward > 1e-14) {
      res.error = "linear_solve: residual contract violated (ill-conditioned system)";
      return res;
    }
  }
  res.ok = true;
  return res;
}

}  // namespace kscd
