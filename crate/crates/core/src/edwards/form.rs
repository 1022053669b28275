//! The gradient form `ℰ(F, G) = Σ_n E_{ν_{H,g}}[∂F/∂k_n · ∂G/∂k_n]` over a
//! truncated orthonormal basis of Cameron–Martin directions.

use std::sync::Arc;

use rayon::prelude::*;

use crate::cameron_martin::{make_shift_from_target, CMShift};
use crate::edwards::cylinder::CylinderFunction;
use crate::edwards::WeightedEnsemble;
use crate::error::{Error, Result};
use crate::fbm::{GridCovariance, TimeGrid};
use crate::scalar::Real;
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct FormEstimate {
    pub value: f64,
    pub se: f64,
    pub basis_size: usize,
    pub warnings: Vec<String>,
}

/// Modified Gram–Schmidt, two passes, in the discrete inner product `Σ_c w_cᵀ Σ w'_c`.
pub fn orthonormalize<T: Real>(shifts: &[CMShift<T>]) -> Result<Vec<CMShift<T>>> {
    let mut basis: Vec<CMShift<T>> = Vec::with_capacity(shifts.len());
    for (j, s) in shifts.iter().enumerate() {
        let start = s.energy();
        let mut v = s.clone();
        for _ in 0..2 {
            for b in &basis {
                let proj = v.inner(b);
                v = v.combine(T::one(), b, -proj);
            }
        }
        let norm2 = v.energy();
        if !(norm2 > T::lit(1e-10) * start) {
            return Err(Error::InvalidParameter {
                name: "basis",
                reason: format!("direction {j} is linearly dependent on the previous ones"),
            });
        }
        basis.push(v.scaled(T::one() / norm2.sqrt()));
    }
    Ok(basis)
}

/// Orthonormalized `{Σ e_j ⊗ e_c : j = 1..n_trunc, c = 1..d}`: the first
/// `n_trunc` covariance columns placed in every component.
pub fn covcol_basis<T: Real>(
    covariance: &Arc<GridCovariance<T>>,
    grid: &Arc<TimeGrid<T>>,
    dim: usize,
    n_trunc: usize,
) -> Result<Vec<CMShift<T>>> {
    let n = grid.len();
    if n_trunc == 0 || n_trunc > n - 1 {
        return Err(Error::InvalidParameter { name: "n_trunc", reason: format!("must lie in 1..={}", n - 1) });
    }
    let mut raw = Vec::with_capacity(n_trunc * dim);
    for c in 0..dim {
        for j in 0..n_trunc {
            let mut k = vec![T::zero(); n * dim];
            for i in 1..n {
                k[i * dim + c] = covariance.matrix.get(i - 1, j);
            }
            raw.push(make_shift_from_target(covariance, grid, dim, k)?);
        }
    }
    orthonormalize(&raw)
}

/// Weighted Monte Carlo estimate of `ℰ(f, h)` on the ensemble.
///
/// Each replica contributes `Σ_n ∂_n f · ∂_n h` with the products formed in
/// the same order for `(f, h)` and `(h, f)`, so the estimate is symmetric
/// bit for bit and `ℰ(f, f)` is a weighted sum of squares.
pub fn dirichlet_form<T: Real>(
    f: &CylinderFunction<T>,
    h: &CylinderFunction<T>,
    ensemble: &WeightedEnsemble<T>,
    basis: &[CMShift<T>],
) -> Result<FormEstimate> {
    if basis.is_empty() {
        return Err(Error::InvalidParameter { name: "basis", reason: "empty basis".into() });
    }
    // l_i(k_n) does not depend on the path
    let lf: Vec<Vec<f64>> = basis.iter().map(|k| f.functionals_of(k)).collect::<Result<_>>()?;
    let lh: Vec<Vec<f64>> = basis.iter().map(|k| h.functionals_of(k)).collect::<Result<_>>()?;
    let directional = |grad: &[f64], lk: &[f64]| -> f64 { grad.iter().zip(lk).map(|(g, l)| g * l).sum() };
    let per_path: Vec<f64> = ensemble
        .paths
        .par_iter()
        .map(|path| {
            let gf = f.profile.gradient(&f.coordinates(path)?);
            let gh = h.profile.gradient(&h.coordinates(path)?);
            let mut acc = 0.0;
            for (a, b) in lf.iter().zip(&lh) {
                acc += directional(&gf, a) * directional(&gh, b);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let m = stats::weighted_mean_se(&per_path, &ensemble.weights);
    Ok(FormEstimate { value: m.mean, se: m.se, basis_size: basis.len(), warnings: ensemble.warnings.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edwards::cylinder::Profile;
    use crate::edwards::edwards_ensemble;
    use crate::fbm::{FbmSampler, ModelParams};
    use crate::rng::{self, Domain};
    use crate::silt::LadderConfig;

    fn ensemble(g: f64) -> WeightedEnsemble<f64> {
        let p = ModelParams::new(0.5, 2, 1.0, g, 33, 6).unwrap();
        edwards_ensemble(&p, 200, &LadderConfig::new(0.04, 3).unwrap()).unwrap()
    }

    fn basis(e: &WeightedEnsemble<f64>, n: usize) -> Vec<CMShift<f64>> {
        let p = &e.paths[0];
        covcol_basis(&p.covariance, &p.grid, 2, n).unwrap()
    }

    #[test]
    fn basis_is_orthonormal() {
        let e = ensemble(0.0);
        let b = basis(&e, 8);
        assert_eq!(b.len(), 16);
        for i in 0..b.len() {
            for j in 0..b.len() {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((b[i].inner(&b[j]) - target).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dependent_directions_are_rejected() {
        let e = ensemble(0.0);
        let b = basis(&e, 2);
        let dup = vec![b[0].clone(), b[1].clone(), b[0].combine(2.0, &b[1], -1.0)];
        assert!(orthonormalize(&dup).is_err());
    }

    #[test]
    fn constant_has_zero_energy() {
        let e = ensemble(0.1);
        let b = basis(&e, 4);
        let f = CylinderFunction::new(
            vec![crate::edwards::Functional::Coordinate { index: 3, component: 1 }],
            Profile::Constant { arity: 1, value: 2.5 },
        )
        .unwrap();
        let mut rng = rng::domain_rng(9, Domain::User, 0);
        let h = CylinderFunction::random(&mut rng, 33, 2, 2);
        assert_eq!(dirichlet_form(&f, &f, &e, &b).unwrap().value, 0.0);
        assert_eq!(dirichlet_form(&f, &h, &e, &b).unwrap().value, 0.0);
    }

    #[test]
    fn symmetric_and_nonnegative() {
        let e = ensemble(0.1);
        let b = basis(&e, 4);
        let mut rng = rng::domain_rng(10, Domain::User, 0);
        for _ in 0..10 {
            let f = CylinderFunction::random(&mut rng, 33, 2, 2);
            let h = CylinderFunction::random(&mut rng, 33, 2, 3);
            assert_eq!(dirichlet_form(&f, &h, &e, &b).unwrap().value, dirichlet_form(&h, &f, &e, &b).unwrap().value);
            assert!(dirichlet_form(&f, &f, &e, &b).unwrap().value >= 0.0);
        }
    }

    #[test]
    fn bilinear_in_the_first_argument() {
        let e = ensemble(0.1);
        let b = basis(&e, 4);
        let mut rng = rng::domain_rng(11, Domain::User, 0);
        let f1 = CylinderFunction::random(&mut rng, 33, 2, 2);
        let f2 = CylinderFunction::random(&mut rng, 33, 2, 1);
        let h = CylinderFunction::random(&mut rng, 33, 2, 2);
        let comb = CylinderFunction::linear_combination(0.7, &f1, -1.3, &f2);
        let lhs = dirichlet_form(&comb, &h, &e, &b).unwrap().value;
        let rhs = 0.7 * dirichlet_form(&f1, &h, &e, &b).unwrap().value - 1.3 * dirichlet_form(&f2, &h, &e, &b).unwrap().value;
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()), "{lhs} vs {rhs}");
    }

    /// Linear functionals have path-independent gradients: `ℰ(l, l) = Σ_n l(k_n)²`.
    #[test]
    fn gaussian_linear_reference() {
        let e = ensemble(0.0);
        let b = basis(&e, 8);
        let f = CylinderFunction::coordinate(16, 0);
        let v = dirichlet_form(&f, &f, &e, &b).unwrap();
        let exact: f64 = b.iter().map(|k| k.k[16 * 2] * k.k[16 * 2]).sum();
        assert!((v.value - exact).abs() <= 5.0 * v.se + 1e-12 * exact, "{} vs {exact}", v.value);
        // full basis reproduces the variance of the coordinate
        let full = basis(&e, 32);
        let all: f64 = full.iter().map(|k| k.k[16 * 2] * k.k[16 * 2]).sum();
        let sampler = FbmSampler::new(&ModelParams::new(0.5, 2, 1.0, 0.0, 33, 6).unwrap()).unwrap();
        let var = sampler.covariance.matrix.get(15, 15);
        assert!((all - var).abs() < 1e-9, "{all} vs {var}");
    }
}
