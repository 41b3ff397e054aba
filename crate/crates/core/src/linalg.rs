//! Generators, the ⋆-bilinear form, subspace projections, restricted and
//! spanning-tree determinants, M-matrix tests, Green functions and Schur
//! complements.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{StarSystem, VertexField};

/// Subspaces of the vertex space determined by the involution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subspace {
    /// `x_i = -x_{i*}`
    A,
    /// `x_i = x_{i*}`
    S,
    /// `S` intersected with zero-sum vectors
    S0,
    /// zero-sum vectors
    H0,
}

/// Generator `K = W − diag(row sums of W)`.
pub fn generator(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let mut k = w.clone();
    for i in 0..n {
        let mut s = 0.0;
        let mut c = 0.0;
        for j in 0..n {
            if j != i {
                // Kahan summation keeps the row sums at rounding level.
                let y = w[(i, j)] - c;
                let t = s + y;
                c = (t - s) - y;
                s = t;
            }
        }
        k[(i, i)] = -s;
    }
    k
}

/// `(W^u, K^u)`.
pub fn tilted_generator(sys: &StarSystem, u: &VertexField) -> (StarSystem, DMatrix<f64>) {
    let wu = sys.tilt(u);
    let k = generator(&wu.w);
    (wu, k)
}

/// `⟨x, y⟩ = Σ_i x_{i*} y_i`.
pub fn star_bilinear(star: &[usize], x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (0..star.len()).map(|i| x[star[i]] * y[i]).sum()
}

/// Orthogonal projection onto a subspace.
pub fn subspace_project(star: &[usize], x: &DVector<f64>, target: Subspace) -> DVector<f64> {
    let n = star.len();
    match target {
        Subspace::A => DVector::from_fn(n, |i, _| 0.5 * (x[i] - x[star[i]])),
        Subspace::S => DVector::from_fn(n, |i, _| 0.5 * (x[i] + x[star[i]])),
        Subspace::H0 => {
            let m = x.mean();
            x.map(|v| v - m)
        }
        Subspace::S0 => {
            let s = subspace_project(star, x, Subspace::S);
            let m = s.mean();
            s.map(|v| v - m)
        }
    }
}

fn gram_schmidt(cands: Vec<DVector<f64>>, against: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for mut v in cands {
        for _ in 0..2 {
            for q in against.iter().chain(out.iter()) {
                let c = q.dot(&v);
                v -= q * c;
            }
        }
        let nrm = v.norm();
        if nrm > 1e-8 {
            out.push(v / nrm);
        }
    }
    out
}

/// Deterministic orthonormal basis of a subspace, as the columns of an
/// `n × d` matrix (`d` may be 0).
pub fn subspace_basis(star: &[usize], sub: Subspace) -> DMatrix<f64> {
    let n = star.len();
    let e = |i: usize| DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 });
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    let cols: Vec<DVector<f64>> = match sub {
        Subspace::A => (0..n)
            .filter(|&i| star[i] > i)
            .map(|i| (e(i) - e(star[i])) * r2)
            .collect(),
        Subspace::S => (0..n)
            .filter(|&i| star[i] >= i)
            .map(|i| if star[i] == i { e(i) } else { (e(i) + e(star[i])) * r2 })
            .collect(),
        Subspace::S0 => {
            let s = subspace_basis(star, Subspace::S);
            let one = DVector::from_element(n, 1.0 / (n as f64).sqrt());
            gram_schmidt(s.column_iter().map(|c| c.into_owned()).collect(), &[one])
        }
        Subspace::H0 => {
            let one = DVector::from_element(n, 1.0 / (n as f64).sqrt());
            gram_schmidt((0..n).map(e).collect(), &[one])
        }
    };
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Determinant of `P M P` restricted to the subspace, in an orthonormal
/// basis. A zero-dimensional subspace gives 1.
pub fn restricted_determinant(m: &DMatrix<f64>, star: &[usize], sub: Subspace) -> f64 {
    let q = subspace_basis(star, sub);
    if q.ncols() == 0 {
        return 1.0;
    }
    (q.transpose() * m * &q).determinant()
}

/// Inverse of `K` as an operator on `H0` (extended by 0 on constants).
/// Needs `K` to map `H0` into itself, i.e. zero row and column sums.
pub fn inverse_on_h0(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = k.nrows();
    let q = subspace_basis(&(0..n).collect::<Vec<_>>(), Subspace::H0);
    let m = q.transpose() * k * &q;
    let inv = m.try_inverse().ok_or(Error::SingularGenerator)?;
    Ok(&q * inv * q.transpose())
}

/// Principal minor of `−K` with row and column `root` removed.
pub fn minor_det(k: &DMatrix<f64>, root: usize) -> f64 {
    let n = k.nrows();
    if n == 1 {
        return 1.0;
    }
    let idx: Vec<usize> = (0..n).filter(|&i| i != root).collect();
    DMatrix::from_fn(n - 1, n - 1, |a, b| -k[(idx[a], idx[b])]).determinant()
}

/// Spanning-tree determinant `D(W^u)` at the canonical root 0, with the
/// relative spread of the same minor over all roots.
#[derive(Debug, Clone, Copy)]
pub struct TreeDeterminant {
    pub value: f64,
    pub spread: f64,
}

pub fn tree_determinant(sys: &StarSystem, u: &VertexField) -> TreeDeterminant {
    let (_, k) = tilted_generator(sys, u);
    let vals: Vec<f64> = (0..sys.n()).map(|r| minor_det(&k, r)).collect();
    let value = vals[0];
    let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
    let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
    TreeDeterminant { value, spread: (hi - lo) / value.abs() }
}

/// Sum over spanning trees oriented towards `root` of the product of
/// edge weights, by brute-force enumeration of parent maps.
pub fn enumerate_rooted_trees(w: &DMatrix<f64>, root: usize) -> f64 {
    let n = w.nrows();
    let others: Vec<usize> = (0..n).filter(|&i| i != root).collect();
    let choices: Vec<Vec<usize>> = others
        .iter()
        .map(|&i| (0..n).filter(|&j| j != i && w[(i, j)] > 0.0).collect())
        .collect();
    let mut total = 0.0;
    let mut pick = vec![0usize; others.len()];
    if choices.iter().any(|c| c.is_empty()) {
        return 0.0;
    }
    loop {
        let mut parent = vec![usize::MAX; n];
        for (k, &i) in others.iter().enumerate() {
            parent[i] = choices[k][pick[k]];
        }
        let acyclic = others.iter().all(|&i| {
            let mut x = i;
            for _ in 0..n {
                if x == root {
                    return true;
                }
                x = parent[x];
            }
            x == root
        });
        if acyclic {
            total += others.iter().map(|&i| w[(i, parent[i])]).product::<f64>();
        }
        let mut k = 0;
        loop {
            if k == pick.len() {
                return total;
            }
            pick[k] += 1;
            if pick[k] < choices[k].len() {
                break;
            }
            pick[k] = 0;
            k += 1;
        }
    }
}

/// Eigenvalue criterion: all eigenvalues have real part above `1e-10`.
pub fn eigen_positive_stable(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    m.complex_eigenvalues().iter().all(|z| z.re > 1e-10)
}

/// Inverse criterion: invertible with entries `>= -1e-10` relative to the
/// largest entry.
pub fn inverse_nonnegative(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    match m.clone().try_inverse() {
        None => false,
        Some(inv) => {
            if !inv.iter().all(|x| x.is_finite()) {
                return false;
            }
            let scale = inv.amax().max(1e-300);
            inv.iter().all(|&x| x >= -1e-10 * scale)
        }
    }
}

/// Positive stability of a matrix with nonpositive off-diagonal entries.
///
/// Uses the eigenvalue criterion; in debug builds the nonnegative-inverse
/// criterion is asserted to agree.
pub fn positive_stable(m: &DMatrix<f64>) -> bool {
    let e = eigen_positive_stable(m);
    debug_assert!(!e || inverse_nonnegative(m), "eigen and inverse criteria disagree");
    e
}

/// Leading-principal-minor criterion for Z-matrices: Gaussian elimination
/// without pivoting has only positive pivots. Cheap, used in inner loops.
pub fn z_matrix_positive_pivots(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    let mut a = m.clone();
    for k in 0..n {
        let p = a[(k, k)];
        if !(p > 0.0) {
            return false;
        }
        for i in k + 1..n {
            let f = a[(i, k)] / p;
            if f != 0.0 {
                for j in k..n {
                    a[(i, j)] -= f * a[(k, j)];
                }
            }
        }
    }
    true
}

/// `H_β = diag(β) − W`.
pub fn potential_matrix(w: &DMatrix<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
    let mut h = -w.clone();
    for i in 0..w.nrows() {
        h[(i, i)] += beta[i];
    }
    h
}

/// `G_β = H_β^{-1}`, failing unless `H_β` is positive stable.
pub fn green_function(sys: &StarSystem, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let h = potential_matrix(&sys.w, beta);
    if !positive_stable(&h) {
        return Err(Error::NotPositiveStable);
    }
    h.try_inverse().ok_or(Error::NotPositiveStable)
}

/// Sorted complement of `idx` in `0..n`.
pub fn complement(n: usize, idx: &[usize]) -> Vec<usize> {
    (0..n).filter(|i| !idx.contains(i)).collect()
}

pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |a, _| v[idx[a]])
}

/// Check `I* = I`.
pub fn check_self_dual(star: &[usize], idx: &[usize]) -> Result<()> {
    for &i in idx {
        if !idx.contains(&star[i]) {
            return Err(Error::NotSelfDual(i));
        }
    }
    Ok(())
}

/// Block quantities attached to a self-dual subset `I` and its complement
/// `c = I^c`. Vectors indexed by `I` or `c` follow the sorted index order.
#[derive(Debug, Clone)]
pub struct Schur {
    pub i: Vec<usize>,
    pub c: Vec<usize>,
    /// `β_I − W_{I,I}`
    pub h_hat: DMatrix<f64>,
    pub g_hat: DMatrix<f64>,
    /// `W_{c,c} + W_{c,I} Ĝ W_{I,c}`
    pub w_check: DMatrix<f64>,
    /// `η_I + W_{I,c} θ_c`
    pub eta_hat: DVector<f64>,
    /// `η_I + W_{I,c} θ^a_c`
    pub eta_hat_a: DVector<f64>,
    /// `η_c + W_{c,I} θ_I`
    pub eta_hat_c: DVector<f64>,
    /// `η_c + W_{c,I} Ĝ η_I`
    pub eta_check: DVector<f64>,
    /// `θ^a_i = e^{a_{i*}} θ_i` on all of `V`
    pub theta_a: DVector<f64>,
}

/// Schur decomposition for the subset `I` at potential `β` (only `β_I` is
/// read), with `a` an antisymmetric field (only `a_c` matters).
pub fn schur_decomposition(
    sys: &StarSystem,
    beta: &DVector<f64>,
    theta: &DVector<f64>,
    eta: &DVector<f64>,
    a: &DVector<f64>,
    i_set: &[usize],
) -> Result<Schur> {
    let n = sys.n();
    let mut i: Vec<usize> = i_set.to_vec();
    i.sort_unstable();
    i.dedup();
    check_self_dual(&sys.star, &i)?;
    let c = complement(n, &i);
    let w = &sys.w;
    let h_hat = potential_matrix(&submatrix(w, &i, &i), &subvector(beta, &i));
    let g_hat = if i.is_empty() {
        DMatrix::zeros(0, 0)
    } else {
        if !z_matrix_positive_pivots(&h_hat) {
            return Err(Error::NotPositiveStable);
        }
        h_hat.clone().try_inverse().ok_or(Error::NotPositiveStable)?
    };
    let theta_a = DVector::from_fn(n, |k, _| (a[sys.star[k]]).exp() * theta[k]);
    let w_ic = submatrix(w, &i, &c);
    let w_ci = submatrix(w, &c, &i);
    let w_check = submatrix(w, &c, &c) + &w_ci * &g_hat * &w_ic;
    let eta_i = subvector(eta, &i);
    let eta_c = subvector(eta, &c);
    let eta_hat = &eta_i + &w_ic * subvector(theta, &c);
    let eta_hat_a = &eta_i + &w_ic * subvector(&theta_a, &c);
    let eta_hat_c = &eta_c + &w_ci * subvector(theta, &i);
    let eta_check = &eta_c + &w_ci * (&g_hat * &eta_i);
    Ok(Schur { i, c, h_hat, g_hat, w_check, eta_hat, eta_hat_a, eta_hat_c, eta_check, theta_a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::StarSystem;

    fn dual_pair(wa: f64, wb: f64) -> StarSystem {
        StarSystem::new(vec![1, 0], DMatrix::from_row_slice(2, 2, &[0.0, wa, wb, 0.0]))
    }

    #[test]
    fn tilted_generator_examples() {
        let s = dual_pair(2.0, 5.0);
        let (_, k) = tilted_generator(&s, &DVector::zeros(2));
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[-2.0, 2.0, 5.0, -5.0]));
        let (wu, _) = tilted_generator(&s, &DVector::from_vec(vec![1.0, -1.0]));
        assert!((wu.w[(0, 1)] - 2.0 * 2f64.exp()).abs() < 1e-12);
        assert!((wu.w[(1, 0)] - 5.0 * (-2f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn bilinear_and_projections() {
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let y = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(star_bilinear(&[1, 0], &x, &y), 10.0);
        assert_eq!(star_bilinear(&[0, 1], &x, &y), 11.0);
        let x = DVector::from_vec(vec![3.0, 1.0]);
        assert_eq!(subspace_project(&[1, 0], &x, Subspace::A).as_slice(), &[1.0, -1.0]);
        assert_eq!(subspace_project(&[1, 0], &x, Subspace::S).as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn bases_are_orthonormal_with_expected_dimensions() {
        let star = vec![1, 0, 2, 4, 3, 5];
        for (sub, d) in [(Subspace::A, 2), (Subspace::S, 4), (Subspace::S0, 3), (Subspace::H0, 5)] {
            let q = subspace_basis(&star, sub);
            assert_eq!(q.ncols(), d);
            assert!((q.transpose() * &q - DMatrix::identity(d, d)).amax() < 1e-14);
        }
    }

    #[test]
    fn restricted_determinants_dual_pair() {
        let k = DMatrix::from_row_slice(2, 2, &[-2.0, 2.0, 5.0, -5.0]);
        assert!((restricted_determinant(&-&k, &[1, 0], Subspace::A) - 7.0).abs() < 1e-12);
        assert!((restricted_determinant(&-&k, &[1, 0], Subspace::H0) - 7.0).abs() < 1e-12);
        assert_eq!(restricted_determinant(&-&k, &[0, 1], Subspace::A), 1.0);
    }

    #[test]
    fn tree_determinant_examples() {
        let s = dual_pair(2.0, 5.0);
        let (_, k) = tilted_generator(&s, &DVector::zeros(2));
        assert!((minor_det(&k, 0) - 5.0).abs() < 1e-12);
        assert!((minor_det(&k, 1) - 2.0).abs() < 1e-12);
        assert_eq!(enumerate_rooted_trees(&s.w, 0), 5.0);
        let w = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 });
        let s = StarSystem::new(vec![0, 1, 2], w);
        let t = tree_determinant(&s, &DVector::zeros(3));
        assert!((t.value - 3.0).abs() < 1e-12);
        assert!(t.spread < 1e-12);
        assert_eq!(enumerate_rooted_trees(&s.w, 2), 3.0);
    }

    #[test]
    fn positive_stability_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        assert!(positive_stable(&a));
        assert!(a.clone().try_inverse().unwrap().iter().all(|&x| x > 0.0));
        let b = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 1.0]);
        assert!(!positive_stable(&b));
        assert!(!z_matrix_positive_pivots(&b));
        assert!(z_matrix_positive_pivots(&a));
    }

    #[test]
    fn green_function_examples() {
        let s = StarSystem::new(vec![0], DMatrix::zeros(1, 1));
        let g = green_function(&s, &DVector::from_vec(vec![2.0])).unwrap();
        assert_eq!(g[(0, 0)], 0.5);
        let s = StarSystem::new(vec![0, 1], DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let g = green_function(&s, &DVector::from_vec(vec![2.0, 2.0])).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]) / 3.0;
        assert!((g - expect).amax() < 1e-15);
        assert!(green_function(&s, &DVector::from_vec(vec![0.5, 0.5])).is_err());
    }

    #[test]
    fn schur_empty_subset() {
        let s = dual_pair(1.0, 3.0);
        let z = DVector::zeros(2);
        let th = DVector::from_element(2, 1.0);
        let eta = DVector::from_vec(vec![0.3, 0.7]);
        let sc = schur_decomposition(&s, &z, &th, &eta, &z, &[]).unwrap();
        assert_eq!(sc.w_check, s.w);
        assert_eq!(sc.eta_check, eta);
        assert!(schur_decomposition(&s, &z, &th, &eta, &z, &[0]).is_err());
    }
}
