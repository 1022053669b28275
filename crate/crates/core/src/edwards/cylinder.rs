//! Smooth cylinder functions `F(ω) = f(l_1(ω), .., l_n(ω))` with linear grid
//! functionals `l_i` and a profile `f` from a small built-in family.

use rand::Rng;

use crate::cameron_martin::CMShift;
use crate::error::{Error, Result};
use crate::fbm::PathLike;
use crate::rng;
use crate::scalar::Real;

/// A linear functional of the grid values.
#[derive(Debug, Clone, PartialEq)]
pub enum Functional<T> {
    /// `ω ↦ ω_component(t_index)`.
    Coordinate { index: usize, component: usize },
    /// `ω ↦ Σ_{i,c} w[i*d + c] ω_c(t_i)`.
    WeightedSum { weights: Vec<T> },
}

impl<T: Real> Functional<T> {
    fn check(&self, n: usize, d: usize) -> Result<()> {
        let ok = match self {
            Functional::Coordinate { index, component } => *index < n && *component < d,
            Functional::WeightedSum { weights } => weights.len() == n * d,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("functional does not fit a {n}×{d} path")))
        }
    }

    /// Applies the functional to row-major `N × d` values.
    pub fn apply(&self, values: &[T], d: usize) -> T {
        match self {
            Functional::Coordinate { index, component } => values[index * d + component],
            Functional::WeightedSum { weights } => weights.iter().zip(values).map(|(&w, &x)| w * x).sum(),
        }
    }
}

/// Profiles `f: Rⁿ → R` with analytic first derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Constant {
        arity: usize,
        value: f64,
    },
    /// `aᵀz` (unbounded; used for the Gaussian reference values).
    Linear {
        coef: Vec<f64>,
    },
    /// `(1 + aᵀz + Σ b_i z_i²) exp(−|z|² / 2w²)`.
    PolyBump {
        linear: Vec<f64>,
        quadratic: Vec<f64>,
        width: f64,
    },
    /// `tanh(aᵀz + b)`.
    Tanh {
        coef: Vec<f64>,
        offset: f64,
    },
    /// `Σ c_j f_j(z[offset_j .. offset_j + arity_j])`.
    Sum(Vec<(f64, Profile, usize)>),
}

impl Profile {
    pub fn arity(&self) -> usize {
        match self {
            Profile::Constant { arity, .. } => *arity,
            Profile::Linear { coef } | Profile::Tanh { coef, .. } => coef.len(),
            Profile::PolyBump { linear, .. } => linear.len(),
            Profile::Sum(parts) => parts.iter().map(|(_, p, o)| o + p.arity()).max().unwrap_or(0),
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Profile::Constant { value, .. } if !value.is_finite() => {
                Err(Error::InvalidParameter { name: "profile", reason: "non-finite constant".into() })
            }
            Profile::Linear { coef } | Profile::Tanh { coef, .. } if !finite(coef) => {
                Err(Error::InvalidParameter { name: "profile", reason: "non-finite coefficient".into() })
            }
            Profile::PolyBump { linear, quadratic, width } => {
                if linear.len() != quadratic.len() || !finite(linear) || !finite(quadratic) || !(*width > 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "profile",
                        reason: "bump needs matching finite coefficients and width > 0".into(),
                    });
                }
                Ok(())
            }
            Profile::Sum(parts) => parts.iter().try_for_each(|(_, p, _)| p.validate()),
            _ => Ok(()),
        }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        match self {
            Profile::Constant { value, .. } => *value,
            Profile::Linear { coef } => coef.iter().zip(z).map(|(a, x)| a * x).sum(),
            Profile::PolyBump { linear, quadratic, width } => {
                let (poly, bump) = poly_bump(linear, quadratic, *width, z);
                poly * bump
            }
            Profile::Tanh { coef, offset } => (coef.iter().zip(z).map(|(a, x)| a * x).sum::<f64>() + offset).tanh(),
            Profile::Sum(parts) => parts.iter().map(|(c, p, o)| c * p.value(&z[*o..o + p.arity()])).sum(),
        }
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Profile::Constant { arity, .. } => vec![0.0; *arity],
            Profile::Linear { coef } => coef.clone(),
            Profile::PolyBump { linear, quadratic, width } => {
                let (poly, bump) = poly_bump(linear, quadratic, *width, z);
                let inv_w2 = 1.0 / (width * width);
                (0..z.len()).map(|i| ((linear[i] + 2.0 * quadratic[i] * z[i]) - poly * z[i] * inv_w2) * bump).collect()
            }
            Profile::Tanh { coef, offset } => {
                let t = (coef.iter().zip(z).map(|(a, x)| a * x).sum::<f64>() + offset).tanh();
                coef.iter().map(|a| a * (1.0 - t * t)).collect()
            }
            Profile::Sum(parts) => {
                let mut g = vec![0.0; self.arity()];
                for (c, p, o) in parts {
                    for (i, v) in p.gradient(&z[*o..o + p.arity()]).into_iter().enumerate() {
                        g[o + i] += c * v;
                    }
                }
                g
            }
        }
    }
}

fn poly_bump(linear: &[f64], quadratic: &[f64], width: f64, z: &[f64]) -> (f64, f64) {
    let mut poly = 1.0;
    let mut r2 = 0.0;
    for i in 0..z.len() {
        poly += linear[i] * z[i] + quadratic[i] * z[i] * z[i];
        r2 += z[i] * z[i];
    }
    (poly, (-r2 / (2.0 * width * width)).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CylinderFunction<T> {
    pub functionals: Vec<Functional<T>>,
    pub profile: Profile,
}

impl<T: Real> CylinderFunction<T> {
    pub fn new(functionals: Vec<Functional<T>>, profile: Profile) -> Result<Self> {
        if functionals.is_empty() {
            return Err(Error::InvalidParameter { name: "n", reason: "need at least one functional".into() });
        }
        if profile.arity() != functionals.len() {
            return Err(Error::InvalidParameter {
                name: "profile",
                reason: format!("arity {} does not match {} functionals", profile.arity(), functionals.len()),
            });
        }
        profile.validate()?;
        Ok(Self { functionals, profile })
    }

    /// `ω ↦ ω_component(t_index)` itself.
    pub fn coordinate(index: usize, component: usize) -> Self {
        Self { functionals: vec![Functional::Coordinate { index, component }], profile: Profile::Linear { coef: vec![1.0] } }
    }

    pub fn n(&self) -> usize {
        self.functionals.len()
    }

    fn check(&self, n: usize, d: usize) -> Result<()> {
        self.functionals.iter().try_for_each(|l| l.check(n, d))
    }

    fn apply_all(&self, values: &[T], d: usize) -> Vec<f64> {
        self.functionals.iter().map(|l| l.apply(values, d).to_f64_lossy()).collect()
    }

    pub fn coordinates<P: PathLike<T>>(&self, path: &P) -> Result<Vec<f64>> {
        self.check(path.grid().len(), path.dim())?;
        Ok(self.apply_all(path.values(), path.dim()))
    }

    /// `l_i(k)` for a shift direction.
    pub fn functionals_of(&self, shift: &CMShift<T>) -> Result<Vec<f64>> {
        self.check(shift.grid.len(), shift.dim)?;
        Ok(self.apply_all(&shift.k, shift.dim))
    }

    pub fn value<P: PathLike<T>>(&self, path: &P) -> Result<f64> {
        Ok(self.profile.value(&self.coordinates(path)?))
    }

    /// `a F + b G` as a cylinder function on the concatenated functionals.
    pub fn linear_combination(a: f64, f: &Self, b: f64, g: &Self) -> Self {
        let mut functionals = f.functionals.clone();
        functionals.extend(g.functionals.iter().cloned());
        let profile = Profile::Sum(vec![(a, f.profile.clone(), 0), (b, g.profile.clone(), f.n())]);
        Self { functionals, profile }
    }

    /// A random member of the built-in family on `n` random functionals.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, grid_points: usize, dim: usize, n: usize) -> Self {
        let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng::uniform::<f64, _>(rng);
        let functionals = (0..n)
            .map(|_| {
                if u(0.0, 1.0) < 0.5 {
                    let index = 1 + (u(0.0, (grid_points - 1) as f64) as usize).min(grid_points - 2);
                    let component = (u(0.0, dim as f64) as usize).min(dim - 1);
                    Functional::Coordinate { index, component }
                } else {
                    let scale = 1.0 / grid_points as f64;
                    let weights = (0..grid_points * dim).map(|_| T::lit(u(-2.0, 2.0) * scale)).collect();
                    Functional::WeightedSum { weights }
                }
            })
            .collect();
        let coef: Vec<f64> = (0..n).map(|_| u(-1.0, 1.0)).collect();
        let profile = match (u(0.0, 3.0) as usize).min(2) {
            0 => Profile::Linear { coef },
            1 => Profile::PolyBump { linear: coef, quadratic: (0..n).map(|_| u(-0.5, 0.5)).collect(), width: u(0.8, 2.5) },
            _ => Profile::Tanh { coef, offset: u(-0.5, 0.5) },
        };
        Self { functionals, profile }
    }
}

/// `∂F/∂k (ω) = Σ_i ∂_i f(l(ω)) l_i(k)`.
pub fn gradient_cylinder<T: Real, P: PathLike<T>>(fcn: &CylinderFunction<T>, shift: &CMShift<T>, path: &P) -> Result<f64> {
    if !path.grid().same_as(&shift.grid) || path.dim() != shift.dim {
        return Err(Error::GridMismatch("path and shift live on different grids".into()));
    }
    let grad = fcn.profile.gradient(&fcn.coordinates(path)?);
    let lk = fcn.functionals_of(shift)?;
    Ok(grad.iter().zip(&lk).map(|(g, l)| g * l).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cameron_martin::{NamedShift, ShiftedPath};
    use crate::fbm::{FbmSampler, ModelParams};
    use crate::rng::Domain;

    fn setup() -> (FbmSampler<f64>, CMShift<f64>) {
        let p = ModelParams::new(0.5, 2, 1.0, 0.0, 33, 8).unwrap();
        let s = FbmSampler::new(&p).unwrap();
        let k = NamedShift::Sine.build(&s.covariance, &s.grid, 2).unwrap();
        (s, k)
    }

    #[test]
    fn linear_coordinate_gradient_is_the_shift_value() {
        let (s, k) = setup();
        let f = CylinderFunction::coordinate(16, 0);
        let path = s.replica(0);
        assert_eq!(gradient_cylinder(&f, &k, &path).unwrap(), k.k[16 * 2]);
    }

    #[test]
    fn zero_direction_gives_zero() {
        let (s, k) = setup();
        let zero = k.scaled(0.0);
        let mut rng = rng::domain_rng(1, Domain::User, 0);
        let f = CylinderFunction::random(&mut rng, 33, 2, 3);
        assert_eq!(gradient_cylinder(&f, &zero, &s.replica(1)).unwrap(), 0.0);
    }

    #[test]
    fn analytic_matches_central_differences() {
        let (s, k) = setup();
        let mut rng = rng::domain_rng(2, Domain::User, 0);
        for r in 0..20 {
            let f = CylinderFunction::random(&mut rng, 33, 2, 1 + r % 4);
            let path = s.replica(r as u64);
            let h = 1e-5;
            let up = f.value(&ShiftedPath::new(&path, &k, h).unwrap()).unwrap();
            let dn = f.value(&ShiftedPath::new(&path, &k, -h).unwrap()).unwrap();
            let fd = (up - dn) / (2.0 * h);
            let an = gradient_cylinder(&f, &k, &path).unwrap();
            assert!((an - fd).abs() <= 1e-6 * an.abs().max(1e-3), "{r}: {an} vs {fd} ({:?})", f.profile);
        }
    }

    #[test]
    fn combination_is_linear() {
        let (s, k) = setup();
        let mut rng = rng::domain_rng(3, Domain::User, 0);
        let f = CylinderFunction::random(&mut rng, 33, 2, 2);
        let g = CylinderFunction::random(&mut rng, 33, 2, 3);
        let h = CylinderFunction::linear_combination(0.3, &f, -1.7, &g);
        let path = s.replica(4);
        let lhs = gradient_cylinder(&h, &k, &path).unwrap();
        let rhs = 0.3 * gradient_cylinder(&f, &k, &path).unwrap() - 1.7 * gradient_cylinder(&g, &k, &path).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
        assert!((h.value(&path).unwrap() - 0.3 * f.value(&path).unwrap() + 1.7 * g.value(&path).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(CylinderFunction::<f64>::new(vec![], Profile::Linear { coef: vec![] }).is_err());
        let l = vec![Functional::<f64>::Coordinate { index: 1, component: 0 }];
        assert!(CylinderFunction::new(l.clone(), Profile::Linear { coef: vec![1.0, 2.0] }).is_err());
        assert!(CylinderFunction::new(l.clone(), Profile::PolyBump { linear: vec![1.0], quadratic: vec![0.0], width: 0.0 }).is_err());
        let f =
            CylinderFunction::new(vec![Functional::Coordinate { index: 40, component: 0 }], Profile::Linear { coef: vec![1.0] }).unwrap();
        let (s, _) = setup();
        assert!(matches!(f.value(&s.replica(0)), Err(Error::GridMismatch(_))));
    }
}
