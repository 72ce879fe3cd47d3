#pragma once

#include <span>

namespace coherency {

// Eigenvalues of a small dense symmetric matrix by cyclic Jacobi rotations.
//
// `a` holds the n x n matrix row-major and is overwritten (its diagonal ends up
// holding the eigenvalues). Only the upper triangle is read. Eigenvalues are
// written to `eig` in ascending order. Intended for n up to a few dozen; the
// Gram matrices of atom subsets handled here are usually 2..8.
void jacobi_eigenvalues(std::span<double> a, int n, std::span<double> eig);

// Smallest eigenvalue; same storage contract as jacobi_eigenvalues.
double jacobi_min_eigenvalue(std::span<double> a, int n);

}  // namespace coherency
