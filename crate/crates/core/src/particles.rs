//! Dirac masses, dipoles and finite particle configurations as truncated
//! negative-smoothness coefficient families with certified tails.
//!
//! The Dirac mass at `x` is the limit of `1_{Q_j} / |Q_j|` along the cells
//! `Q_0 ⊃ Q_1 ⊃ ...` of `x`. Going from level `j` to `j + 1` only touches the
//! wavelets of `Q_j` whose groups contain `Q_{j+1}`, and each such plain
//! coefficient has modulus at most one. Truncating at level `N` therefore
//! drops a tail of norm at most `C_GR |Q_N|^s / (1 - lambda^s)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::besov::{norm_minus_value, Convention, DistCoeffs, NormReport};
use crate::error::{Error, Result};
use crate::grid::{pseudo_distance, Address, CellId, GoodGrid};
use crate::haar::{normalized_indicator, StepFunction, WaveletId};
use crate::scalar::Scalar;

/// A weighted point mass.
#[derive(Clone, Debug, PartialEq)]
pub struct Particle<S> {
    pub mass: S,
    pub location: Address,
}

/// A finite sum `sum m_i delta_{x_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleConfig<S> {
    pub particles: Vec<Particle<S>>,
}

impl<S: Scalar> Default for ParticleConfig<S> {
    fn default() -> Self {
        ParticleConfig { particles: Vec::new() }
    }
}

impl<S: Scalar> ParticleConfig<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, mass: S, location: Address) {
        self.particles.push(Particle { mass, location });
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn total_mass(&self) -> S {
        self.particles.iter().fold(S::zero(), |acc, p| acc + p.mass.clone())
    }

    /// Masses merged per address, zero masses dropped, sorted by address:
    /// a canonical form for comparing configurations as multisets.
    pub fn canonical(&self) -> Vec<(Address, S)> {
        let mut merged: std::collections::BTreeMap<Address, S> = Default::default();
        for p in &self.particles {
            let e = merged.entry(p.location.clone()).or_insert_with(S::zero);
            *e = e.clone() + p.mass.clone();
        }
        merged.into_iter().filter(|(_, m)| !m.is_zero()).collect()
    }
}

/// A truncated distribution with a bound on the norm of what was cut off.
#[derive(Clone, Debug)]
pub struct TruncatedDist<S> {
    /// Negative-smoothness view of the kept coefficients.
    pub coeffs: DistCoeffs<S>,
    /// Truncation level: only wavelets owned above it are kept.
    pub level: usize,
    /// Certified bound on the norm of the discarded coefficients.
    pub tail_bound: f64,
    /// Whether some address had to be extended by its rule.
    pub extended: bool,
    /// Norm of each level's increment, for a single Dirac mass.
    pub increment_norms: Vec<f64>,
}

impl<S: Scalar> TruncatedDist<S> {
    pub fn norm(&self) -> NormReport {
        NormReport {
            norm: norm_minus_value(&self.coeffs),
            tail_bound: self.tail_bound,
            witness: None,
        }
    }

    /// `self += c * other`, tails added.
    pub fn accumulate(&mut self, other: &Self, c: &S) -> Result<()> {
        crate::haar::ensure_same_grid(self.coeffs.grid(), other.coeffs.grid())?;
        if self.coeffs.s() != other.coeffs.s() {
            return Err(Error::SmoothnessMismatch(self.coeffs.s(), other.coeffs.s()));
        }
        self.coeffs.add_constant(other.coeffs.constant().clone() * c.clone());
        for (w, v) in other.coeffs.terms() {
            self.coeffs.add_term(w, v.clone() * c.clone());
        }
        self.level = self.level.min(other.level);
        self.tail_bound += c.modulus() * other.tail_bound;
        self.extended |= other.extended;
        self.increment_norms.clear();
        Ok(())
    }

    /// `self + c * other`, tails added.
    pub fn add_scaled(&self, other: &Self, c: &S) -> Result<Self> {
        let mut out = self.clone();
        out.accumulate(other, c)?;
        Ok(out)
    }

    pub fn scale(&self, c: &S) -> Self {
        TruncatedDist {
            coeffs: self.coeffs.scale(c),
            tail_bound: c.modulus() * self.tail_bound,
            increment_norms: Vec::new(),
            ..self.clone()
        }
    }
}

/// `C_GR |Q_N|^s / (1 - lambda^s)` for a Dirac truncated at a cell of
/// measure `q`.
pub fn dirac_tail(grid: &GoodGrid, s: f64, q: f64) -> f64 {
    grid.c_gr() as f64 * q.powf(s) / (1.0 - grid.lambda_f64().powf(s))
}

/// `1_{Q_j} / |Q_j|` for the level-`j` cell of `x`.
pub fn dirac_truncate<S: Scalar>(grid: &Arc<GoodGrid>, x: &Address, j: usize) -> Result<StepFunction<S>> {
    let q = grid.locate(x, j)?;
    Ok(normalized_indicator(grid, q))
}

fn check_level(grid: &GoodGrid, n: usize) -> Result<()> {
    if n > grid.depth() {
        Err(Error::DepthInsufficient {
            needed: n,
            depth: grid.depth(),
        })
    } else {
        Ok(())
    }
}

/// Coefficients of `1_{Q_N} / |Q_N|` along `x`.
pub fn dirac_coeffs<S: Scalar>(grid: &Arc<GoodGrid>, x: &Address, s: f64, n: usize) -> Result<TruncatedDist<S>> {
    check_level(grid, n)?;
    let cells = grid.resolve(x, n)?;
    let mut coeffs = DistCoeffs::from_plain(grid.clone(), s, Convention::BesovMinus, S::one(), Default::default());
    let mut increment_norms = Vec::with_capacity(n);
    for j in 0..n {
        let (q, child) = (cells[j], grid.index_in_parent(cells[j + 1]));
        let mut total = 0.0;
        for (index, pair) in grid.pairs(q).iter().enumerate() {
            let sum = &pair.mu1 + &pair.mu2;
            let a = if pair.s1.contains(&child) {
                &pair.mu2 / &sum
            } else if pair.s2.contains(&child) {
                -(&pair.mu1 / &sum)
            } else {
                continue;
            };
            total += crate::scalar::rational_to_f64(&a).abs();
            coeffs.add_term(WaveletId { owner: q, index }, S::from_measure(&a));
        }
        increment_norms.push(total * grid.measure_f64(q).powf(s));
    }
    Ok(TruncatedDist {
        coeffs,
        level: n,
        tail_bound: dirac_tail(grid, s, grid.measure_f64(cells[n])),
        extended: x.is_extended_at(n),
        increment_norms,
    })
}

fn ensure_separated(grid: &GoodGrid, x: &Address, y: &Address, n: usize) -> Result<()> {
    if grid.locate(x, n)? == grid.locate(y, n)? {
        Err(Error::IdenticalAddress(n))
    } else {
        Ok(())
    }
}

/// Coefficients of `delta_x - delta_y` truncated at level `n`.
pub fn dipole_coeffs<S: Scalar>(
    grid: &Arc<GoodGrid>,
    x: &Address,
    y: &Address,
    s: f64,
    n: usize,
) -> Result<TruncatedDist<S>> {
    check_level(grid, n)?;
    ensure_separated(grid, x, y, n)?;
    let dx = dirac_coeffs::<S>(grid, x, s, n)?;
    let dy = dirac_coeffs::<S>(grid, y, s, n)?;
    dx.add_scaled(&dy, &-S::one())
}

/// Coefficients of a finite configuration truncated at level `n`.
pub fn config_coeffs<S: Scalar>(
    grid: &Arc<GoodGrid>,
    config: &ParticleConfig<S>,
    s: f64,
    n: usize,
) -> Result<TruncatedDist<S>> {
    check_level(grid, n)?;
    let mut acc = TruncatedDist {
        coeffs: DistCoeffs::zero(grid.clone(), s, Convention::BesovMinus),
        level: n,
        tail_bound: 0.0,
        extended: false,
        increment_norms: Vec::new(),
    };
    for p in &config.particles {
        acc.accumulate(&dirac_coeffs(grid, &p.location, s, n)?, &p.mass)?;
    }
    Ok(acc)
}

/// Certified two-sided information on `|delta_x - delta_y|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipoleNormBounds {
    /// The infinite dipole's norm lies in `[lower, upper]`.
    pub lower: f64,
    pub upper: f64,
    pub truncated_norm: f64,
    pub tail_bound: f64,
    pub truncation_level: usize,
    pub separation: CellId,
    pub separation_level: usize,
    /// `|P|^s` for the separation cell `P`.
    pub distance_power: f64,
    /// `max(1, 2 C_GR / (1 - lambda^s))`.
    pub constant: f64,
    /// Whether `[lower, upper]` sits inside `[|P|^s / C, C |P|^s]`.
    pub within: bool,
}

impl DipoleNormBounds {
    pub fn ratio(&self) -> f64 {
        self.truncated_norm / self.distance_power
    }
}

/// Norm bounds for a dipole, truncated at `truncation` (grid depth by default).
///
/// Truncation keeps a prefix of the coefficient sequence, so the truncated
/// norm is already a lower bound; the separating wavelet alone contributes
/// `|P|^s`.
pub fn dipole_norm_bounds(
    grid: &Arc<GoodGrid>,
    x: &Address,
    y: &Address,
    s: f64,
    truncation: Option<usize>,
) -> Result<DipoleNormBounds> {
    let n = truncation.unwrap_or(grid.depth());
    let sep = pseudo_distance(grid, x, y)?;
    let distance_power = sep.distance_f64().powf(s);
    let (Some(cell), Some(level)) = (sep.cell, sep.level) else {
        return Err(Error::IdenticalAddress(grid.depth()));
    };
    if level >= n {
        return Err(Error::IdenticalAddress(n));
    }
    let t: TruncatedDist<f64> = dipole_coeffs(grid, x, y, s, n)?;
    let report = t.norm();
    let constant = f64::max(1.0, 2.0 * grid.c_gr() as f64 / (1.0 - grid.lambda_f64().powf(s)));
    let lower = report.norm;
    let upper = report.norm + report.tail_bound;
    Ok(DipoleNormBounds {
        lower,
        upper,
        truncated_norm: report.norm,
        tail_bound: report.tail_bound,
        truncation_level: n,
        separation: cell,
        separation_level: level,
        distance_power,
        constant,
        within: lower >= distance_power / constant * (1.0 - 1e-12) && upper <= constant * distance_power * (1.0 + 1e-12),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::besov::pairing;
    use crate::grid::{build_dyadic, build_uniform};
    use crate::haar::{analyze, synthesize};
    use crate::scalar::{ratio, Rational};
    use num_traits::{One, Signed, Zero};

    fn dyadic(depth: usize) -> Arc<GoodGrid> {
        Arc::new(build_dyadic(depth))
    }

    #[test]
    fn truncation_examples() {
        let g = dyadic(3);
        let x = Address::new(vec![0, 0, 0]);
        let f: StepFunction<Rational> = dirac_truncate(&g, &x, 0).unwrap();
        assert_eq!(f.values(), &[Rational::one()]);
        let f: StepFunction<Rational> = dirac_truncate(&g, &x, 2).unwrap();
        assert_eq!(f.values(), &[ratio(4, 1), ratio(0, 1), ratio(0, 1), ratio(0, 1)]);
        for j in 0..=3 {
            let f: StepFunction<Rational> = dirac_truncate(&g, &Address::new(vec![1, 0, 1]), j).unwrap();
            assert_eq!(f.integral(), Rational::one());
        }
        assert!(dirac_truncate::<Rational>(&g, &x, 4).is_err());
    }

    #[test]
    fn dyadic_increments_are_one_half() {
        let g = dyadic(6);
        let x = Address::new(vec![1, 0, 1, 1, 0, 0]);
        let d: TruncatedDist<Rational> = dirac_coeffs(&g, &x, 0.5, 6).unwrap();
        assert_eq!(d.coeffs.len(), 6);
        for (_, a) in d.coeffs.terms() {
            assert_eq!(a.abs(), ratio(1, 2));
        }
        for (j, v) in d.increment_norms.iter().enumerate() {
            assert!((v - 0.5 * 2f64.powf(-(j as f64) * 0.5)).abs() < 1e-15);
        }
    }

    /// Brute-force projection of the increment `1_{Q_{j+1}}/|Q_{j+1}| - 1_{Q_j}/|Q_j|`.
    #[test]
    fn increments_match_brute_force_projection() {
        for g in [Arc::new(build_uniform(3, 3)), Arc::new(build_uniform(2, 5))] {
            let x = Address::new(vec![2, 1, 0]);
            let n = g.depth();
            let d: TruncatedDist<Rational> = dirac_coeffs(&g, &x, 0.5, n).unwrap();
            let f: StepFunction<Rational> = dirac_truncate(&g, &x, n).unwrap();
            let direct = analyze(&f, 0.5).unwrap();
            assert_eq!(direct.with_convention(Convention::BesovMinus), d.coeffs);
            assert_eq!(synthesize(&d.coeffs, n).unwrap(), f);
        }
    }

    #[test]
    fn dyadic_dirac_norm_against_geometric_series() {
        let g = dyadic(8);
        let d: TruncatedDist<f64> = dirac_coeffs(&g, &Address::new(vec![0; 8]), 0.5, 8).unwrap();
        let oracle = 1.0 + 0.5 * (0..8).map(|j| 2f64.powf(-(j as f64) / 2.0)).sum::<f64>();
        assert!((d.norm().norm - oracle).abs() < 1e-12);
        let limit = 1.0 + 0.5 / (1.0 - 2f64.powf(-0.5));
        assert!(d.norm().norm < limit && limit <= d.norm().norm + d.tail_bound);
    }

    #[test]
    fn dipole_cancellation_and_antisymmetry() {
        let g = dyadic(6);
        let x = Address::new(vec![0, 1, 1, 0, 0, 1]);
        let y = Address::new(vec![0, 1, 0, 1, 1, 1]);
        let xy: TruncatedDist<Rational> = dipole_coeffs(&g, &x, &y, 0.5, 6).unwrap();
        let yx: TruncatedDist<Rational> = dipole_coeffs(&g, &y, &x, 0.5, 6).unwrap();
        assert!(xy.coeffs.constant().is_zero());
        assert!(xy.coeffs.terms().all(|(w, _)| g.level(w.owner) >= 2));
        assert_eq!(xy.coeffs, yx.coeffs.scale(&-Rational::one()));
        assert!(matches!(
            dipole_coeffs::<Rational>(&g, &x, &x, 0.5, 6),
            Err(Error::IdenticalAddress(6))
        ));
    }

    #[test]
    fn root_separated_dipole_norm() {
        let g = dyadic(16);
        let x = Address::new(vec![0]);
        let y = Address::new(vec![1]);
        let b = dipole_norm_bounds(&g, &x, &y, 0.5, None).unwrap();
        let limit = 1.0 + 2f64.powf(-0.5) / (1.0 - 2f64.powf(-0.5));
        assert!(b.lower <= limit && limit <= b.upper);
        assert!((b.truncated_norm - limit).abs() < 2e-2);
        assert_eq!(b.separation, CellId::root());
        assert!(b.within);
    }

    #[test]
    fn config_examples() {
        let g = Arc::new(build_uniform(3, 3));
        let x = Address::new(vec![0, 2, 1]);
        let y = Address::new(vec![1, 1]);
        let s = 0.25;
        let mut one = ParticleConfig::new();
        one.push(Rational::one(), x.clone());
        let c: TruncatedDist<Rational> = config_coeffs(&g, &one, s, 3).unwrap();
        assert_eq!(c.coeffs, dirac_coeffs::<Rational>(&g, &x, s, 3).unwrap().coeffs);

        let mut two = one.clone();
        two.push(-Rational::one(), y.clone());
        let c: TruncatedDist<Rational> = config_coeffs(&g, &two, s, 3).unwrap();
        let d: TruncatedDist<Rational> = dipole_coeffs(&g, &x, &y, s, 3).unwrap();
        assert_eq!(c.coeffs, d.coeffs);
        assert!(c.extended);

        let mut three = two.clone();
        three.push(ratio(5, 2), y);
        let c: TruncatedDist<Rational> = config_coeffs(&g, &three, s, 3).unwrap();
        let one_i = DistCoeffs::from_plain(g.clone(), s, Convention::BesovPlus, Rational::one(), Default::default());
        assert_eq!(pairing(&c.coeffs, &one_i).unwrap(), three.total_mass());
    }
}
