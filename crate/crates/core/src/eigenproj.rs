//! Per-frequency Hermitian eigendecomposition and leading eigenprojections.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::domain;
use crate::spectral::{FrequencyGrid, SpectralField};
use crate::{Error, Result, C64};

/// Eigenvalues in descending order with matching unit eigenvector columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub values: DVector<f64>,
    pub vectors: DMatrix<C64>,
}

impl EigenSystem {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Copy with each eigenvector rotated so that its largest-modulus
    /// entry is real and positive. Only meant for readable dumps.
    pub fn canonical_phase(&self) -> Self {
        let mut vectors = self.vectors.clone();
        for mut col in vectors.column_iter_mut() {
            let pivot = col
                .iter()
                .copied()
                .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                .unwrap_or(C64::new(1.0, 0.0));
            if pivot.norm() > 0.0 {
                let rot = pivot.conj() / pivot.norm();
                col.iter_mut().for_each(|z| *z *= rot);
            }
        }
        Self {
            values: self.values.clone(),
            vectors,
        }
    }
}

/// Eigendecomposition of a Hermitian matrix, symmetrized as `(A + A^*) / 2`.
pub fn hermitian_eig(a: &DMatrix<C64>) -> Result<EigenSystem> {
    if !a.is_square() {
        return Err(Error::Input(format!("matrix is {} x {}, not square", a.nrows(), a.ncols())));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    let sym = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenSystem { values, vectors })
}

/// `sum_{j <= q} p_j p_j^*`, the projection onto the top-`q` eigenvectors.
pub fn leading_projection(e: &EigenSystem, q: usize) -> Result<DMatrix<C64>> {
    check_rank(q, e.n())?;
    let v = e.vectors.columns(0, q);
    Ok(&v * v.adjoint())
}

/// `lambda_q - lambda_{q+1}` (1-based `q`).
pub fn eigengap(e: &EigenSystem, q: usize) -> Result<f64> {
    if q == 0 || q >= e.n() {
        return Err(domain(format!("eigengap needs 1 <= q < n, got q = {q}, n = {}", e.n())));
    }
    Ok((e.values[q - 1] - e.values[q]).max(0.0))
}

/// Largest absolute eigenvalue of a Hermitian matrix, i.e. its operator norm.
pub fn hermitian_op_norm(a: &DMatrix<C64>) -> Result<f64> {
    let e = hermitian_eig(a)?;
    Ok(e.values.iter().fold(0.0, |m: f64, v| m.max(v.abs())))
}

/// `||P1 - P2||_2`, the sine of the largest principal angle between two
/// equal-rank subspaces given by their orthogonal projections.
pub fn subspace_distance(p1: &DMatrix<C64>, p2: &DMatrix<C64>) -> Result<f64> {
    if p1.shape() != p2.shape() {
        return Err(domain("projections have different shapes"));
    }
    let r1 = p1.trace().re.round();
    let r2 = p2.trace().re.round();
    if r1 != r2 {
        return Err(domain(format!("rank mismatch: {r1} vs {r2}")));
    }
    Ok(hermitian_op_norm(&(p1 - p2))?.min(1.0))
}

fn check_rank(q: usize, n: usize) -> Result<()> {
    if q == 0 || q > n {
        return Err(domain(format!("need 1 <= q <= n, got q = {q}, n = {n}")));
    }
    Ok(())
}

/// Leading-`q` eigenprojection at every point of a frequency grid, stored
/// as the `n x q` orthonormal basis `V(theta)`; `P(theta) = V V^*`.
#[derive(Debug, Clone)]
pub struct ProjectionField {
    grid: FrequencyGrid,
    q: usize,
    bases: Vec<DMatrix<C64>>,
    gaps: Vec<f64>,
}

/// Gap below which a grid point is reported as degenerate.
pub const DEGENERATE_GAP: f64 = 1e-10;

impl ProjectionField {
    /// Decomposes `f(theta)` at each grid point. On grids symmetric about
    /// zero only `theta > 0` is decomposed; `P(-theta) = conj(P(theta))`.
    pub fn from_fn<F>(grid: &FrequencyGrid, q: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Result<DMatrix<C64>> + Sync,
    {
        let pts = grid.points();
        let mirrored = (0..pts.len()).all(|k| grid.mirror(k).is_some());
        let solve = |theta: f64| -> Result<(DMatrix<C64>, f64)> {
            let m = f(theta)?;
            let e = hermitian_eig(&m)?;
            check_rank(q, e.n())?;
            let gap = if q < e.n() { e.values[q - 1] - e.values[q] } else { f64::INFINITY };
            Ok((e.vectors.columns(0, q).into_owned(), gap))
        };
        let solved: Vec<(DMatrix<C64>, f64)> = if mirrored {
            let half: Vec<usize> = (0..pts.len()).filter(|&k| pts[k] >= 0.0).collect();
            let done = half
                .par_iter()
                .map(|&k| solve(pts[k]))
                .collect::<Result<Vec<_>>>()?;
            let mut slots: Vec<Option<(DMatrix<C64>, f64)>> = vec![None; pts.len()];
            for (&k, s) in half.iter().zip(done) {
                let m = grid.mirror(k).expect("symmetric grid");
                if m != k {
                    slots[m] = Some((s.0.conjugate(), s.1));
                }
                slots[k] = Some(s);
            }
            slots
                .into_iter()
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| domain("grid is not symmetric about zero"))?
        } else {
            pts.par_iter().map(|&t| solve(t)).collect::<Result<Vec<_>>>()?
        };
        let (bases, gaps) = solved.into_iter().unzip();
        Ok(Self {
            grid: grid.clone(),
            q,
            bases,
            gaps,
        })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.bases.first().map_or(0, |b| b.nrows())
    }

    pub fn basis(&self, k: usize) -> &DMatrix<C64> {
        &self.bases[k]
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn projection(&self, k: usize) -> DMatrix<C64> {
        let v = &self.bases[k];
        v * v.adjoint()
    }

    /// Row `i` of `P(theta_k)`: entries `sum_l p_{l,i} conj(p_{l,j})`.
    pub fn row(&self, k: usize, i: usize) -> Vec<C64> {
        let v = &self.bases[k];
        (0..v.nrows())
            .map(|j| (0..self.q).map(|l| v[(i, l)] * v[(j, l)].conj()).sum())
            .collect()
    }

    /// Entry `(i, j)` of `P(theta_k)`.
    #[inline]
    pub fn entry(&self, k: usize, i: usize, j: usize) -> C64 {
        let v = &self.bases[k];
        (0..self.q).map(|l| v[(i, l)] * v[(j, l)].conj()).sum()
    }

    /// Grid indices where `lambda_q - lambda_{q+1}` falls below `tol`.
    pub fn gap_below(&self, tol: f64) -> Vec<usize> {
        self.gaps
            .iter()
            .enumerate()
            .filter(|(_, &g)| g < tol)
            .map(|(k, _)| k)
            .collect()
    }
}

pub fn projection_field(field: &SpectralField, q: usize) -> Result<ProjectionField> {
    let grid = field.grid();
    let index = |theta: f64| {
        grid.points()
            .binary_search_by(|p| p.total_cmp(&theta))
            .expect("theta taken from the grid")
    };
    ProjectionField::from_fn(grid, q, |theta| Ok(field.at(index(theta)).clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracsim::{analytic_spectrum, Entry, Idiosyncratic, ModelSpec};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
        let a = DMatrix::from_fn(n, n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        (&a + a.adjoint()) * c(0.5, 0.0)
    }

    fn example() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)])
    }

    #[test]
    fn eig_examples() {
        let e = hermitian_eig(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0, 1.0]);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(3.0, 0.0)]));
        let e = hermitian_eig(&d).unwrap();
        assert_relative_eq!(e.values[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(e.vectors[(1, 0)].norm(), 1.0, epsilon = 1e-14);
        let e = hermitian_eig(&example()).unwrap();
        assert_relative_eq!(e.values[0], 3.0, epsilon = 1e-13);
        assert_relative_eq!(e.values[1], 1.0, epsilon = 1e-13);
        let mut bad = example();
        bad[(0, 1)] = c(f64::NAN, 0.0);
        assert!(hermitian_eig(&bad).is_err());
    }

    #[test]
    fn eigen_system_invariants_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random_hermitian(7, &mut rng);
            let e = hermitian_eig(&a).unwrap();
            let v = &e.vectors;
            let av = &a * v;
            for j in 0..7 {
                let r = av.column(j) - v.column(j) * c(e.values[j], 0.0);
                assert!(r.norm() <= 1e-9 * a.norm());
            }
            assert!((v.adjoint() * v - DMatrix::<C64>::identity(7, 7)).norm() <= 1e-9);
            assert!(e.values.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn projection_examples() {
        let e = hermitian_eig(&example()).unwrap();
        let p = leading_projection(&e, 1).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.0, 0.5), c(0.0, -0.5), c(0.5, 0.0)]);
        assert!((p - expect).norm() < 1e-12);
        let full = leading_projection(&e, 2).unwrap();
        assert!((full - DMatrix::<C64>::identity(2, 2)).norm() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![c(3.0, 0.0), c(1.0, 0.0)]));
        let p = leading_projection(&hermitian_eig(&d).unwrap(), 1).unwrap();
        assert!((p[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14 && p[(1, 1)].norm() < 1e-14);
        assert!(leading_projection(&e, 0).is_err());
        assert!(leading_projection(&e, 3).is_err());
    }

    #[test]
    fn gap_examples() {
        let id = hermitian_eig(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(eigengap(&id, 1).unwrap(), 0.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![c(3.0, 0.0), c(1.0, 0.0)]));
        assert_relative_eq!(eigengap(&hermitian_eig(&d).unwrap(), 1).unwrap(), 2.0);
        assert!(eigengap(&id, 3).is_err());
    }

    #[test]
    fn subspace_distance_examples() {
        let e1 = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let e2 = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let diag = DMatrix::from_element(2, 2, c(0.5, 0.0));
        assert_eq!(subspace_distance(&e1, &e1).unwrap(), 0.0);
        assert_relative_eq!(subspace_distance(&e1, &e2).unwrap(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(subspace_distance(&e1, &diag).unwrap(), 0.5f64.sqrt(), epsilon = 1e-14);
        assert!(subspace_distance(&e1, &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn phase_rotation_leaves_projection_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_hermitian(6, &mut rng);
        let e = hermitian_eig(&a).unwrap();
        let p = leading_projection(&e, 3).unwrap();
        let mut rotated = e.clone();
        for j in 0..6 {
            let phase = C64::from_polar(1.0, rng.random::<f64>() * 6.0);
            rotated.vectors.column_mut(j).iter_mut().for_each(|z| *z *= phase);
        }
        let pr = leading_projection(&rotated, 3).unwrap();
        assert!((p - pr).norm() <= 1e-12);
        let canon = e.canonical_phase();
        for col in canon.vectors.column_iter() {
            let pivot = col.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
            assert!(pivot.im.abs() < 1e-14 && pivot.re > 0.0);
        }
    }

    #[test]
    fn davis_kahan_bound_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut tested = 0;
        while tested < 100 {
            let a = random_hermitian(8, &mut rng);
            let ea = hermitian_eig(&a).unwrap();
            let g = eigengap(&ea, 3).unwrap();
            let mut e = random_hermitian(8, &mut rng);
            let target = g / 4.0 * rng.random::<f64>();
            let scale = target / hermitian_op_norm(&e).unwrap();
            e *= c(scale, 0.0);
            let en = hermitian_op_norm(&e).unwrap();
            if en >= g / 4.0 || g <= 0.0 {
                continue;
            }
            let p = leading_projection(&ea, 3).unwrap();
            let pe = leading_projection(&hermitian_eig(&(&a + &e)).unwrap(), 3).unwrap();
            assert!(subspace_distance(&p, &pe).unwrap() <= 2.0 * en / g);
            tested += 1;
        }
    }

    #[test]
    fn weyl_monotonicity_under_psd_addition() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let a = random_hermitian(6, &mut rng);
            let g = DMatrix::from_fn(6, 2, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let b = &g * g.adjoint();
            let ea = hermitian_eig(&a).unwrap();
            let eb = hermitian_eig(&(&a + &b)).unwrap();
            for j in 0..6 {
                assert!(eb.values[j] >= ea.values[j] - 1e-12);
            }
        }
    }

    #[test]
    fn real_embedding_doubles_the_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let a = random_hermitian(5, &mut rng);
        let (re, im) = (a.map(|z| z.re), a.map(|z| z.im));
        let mut big = DMatrix::<f64>::zeros(10, 10);
        big.view_mut((0, 0), (5, 5)).copy_from(&re);
        big.view_mut((5, 5), (5, 5)).copy_from(&re);
        big.view_mut((0, 5), (5, 5)).copy_from(&(-&im));
        big.view_mut((5, 0), (5, 5)).copy_from(&im);
        let mut emb: Vec<f64> = SymmetricEigen::new(big).eigenvalues.iter().copied().collect();
        emb.sort_by(|x, y| y.total_cmp(x));
        let e = hermitian_eig(&a).unwrap();
        for j in 0..5 {
            assert_relative_eq!(emb[2 * j], e.values[j], epsilon = 1e-12);
            assert_relative_eq!(emb[2 * j + 1], e.values[j], epsilon = 1e-12);
        }
    }

    fn homogeneous_field(n: usize, grid: &FrequencyGrid) -> SpectralField {
        let spec = ModelSpec::from_fn(n, 1, Idiosyncratic::WhiteNoise { sigma: 1.0 }, |_, _| {
            Entry::one_pole(0.0, 1.0, 0.0)
        })
        .unwrap();
        SpectralField::from_fn(grid.clone(), |t| analytic_spectrum(&spec, t)).unwrap()
    }

    #[test]
    fn projection_field_of_flat_rank_one_model() {
        let n = 6;
        let grid = FrequencyGrid::midpoint(16).unwrap();
        let field = homogeneous_field(n, &grid);
        let pf = projection_field(&field, 1).unwrap();
        let target = DMatrix::from_element(n, n, c(1.0 / n as f64, 0.0));
        for k in 0..grid.len() {
            let p = pf.projection(k);
            assert!((&p - &target).norm() <= 1e-6);
            assert!((&p * &p - &p).norm() <= 1e-9);
            assert!((&p - p.adjoint()).norm() <= 1e-9);
            assert_relative_eq!(p.trace().re, 1.0, epsilon = 1e-8);
            let row = pf.row(k, 2);
            for j in 0..n {
                assert!((row[j] - p[(2, j)]).norm() < 1e-14);
                assert!((pf.entry(k, 2, j) - p[(2, j)]).norm() < 1e-14);
            }
        }
        assert!(pf.gap_below(DEGENERATE_GAP).is_empty());
    }

    #[test]
    fn projection_field_preserves_conjugate_symmetry() {
        let spec = ModelSpec::from_fn(5, 2, Idiosyncratic::DenseAr1 { sigma: 1.0, phi: 0.4, r_cs: 0.6 }, |i, l| {
            Entry::one_pole(0.3 - 0.1 * l as f64, 1.0, 0.15 * i as f64 - 0.3 * l as f64)
        })
        .unwrap();
        let grid = FrequencyGrid::midpoint(32).unwrap();
        let pf = ProjectionField::from_fn(&grid, 2, |t| analytic_spectrum(&spec, t)).unwrap();
        // compare against an unmirrored solve on the same points
        let custom = FrequencyGrid::custom(grid.points().to_vec()).unwrap();
        let direct = ProjectionField::from_fn(&custom, 2, |t| analytic_spectrum(&spec, t)).unwrap();
        for k in 0..grid.len() {
            let m = grid.mirror(k).unwrap();
            assert!((pf.projection(m) - pf.projection(k).conjugate()).norm() <= 1e-9);
            assert!((pf.projection(k) - direct.projection(k)).norm() <= 1e-9);
        }
    }

    #[test]
    fn identical_matrices_give_identical_projections() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_hermitian(4, &mut rng);
        let grid = FrequencyGrid::custom(vec![0.1, 0.2, 0.3]).unwrap();
        let field = SpectralField::new(grid, vec![a.clone(), a.clone(), a]).unwrap();
        let pf = projection_field(&field, 2).unwrap();
        assert_eq!(pf.projection(0), pf.projection(1));
        assert_eq!(pf.projection(1), pf.projection(2));
    }

    #[test]
    fn tied_eigenvalues_are_flagged() {
        let grid = FrequencyGrid::custom(vec![0.5]).unwrap();
        let pf = ProjectionField::from_fn(&grid, 1, |_| Ok(DMatrix::identity(3, 3))).unwrap();
        assert_eq!(pf.gap_below(DEGENERATE_GAP), vec![0]);
    }
}
