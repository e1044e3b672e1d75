//! Coefficient families, the two Besov norms, the grid Hölder norm and the
//! pairing between them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellId, GoodGrid};
use crate::haar::{ensure_same_grid, StepFunction, WaveletId};
use crate::scalar::{rational_to_f64, Scalar};

/// Which scaling of the plain coefficients a family is viewed in.
///
/// With plain coefficient `a` on a wavelet owned by `Q`:
/// `BesovPlus` shows `a |Q|^{-1-s}`, `BesovMinus` shows `a |Q|^s`, `Plain`
/// shows `a`. The constant term is the same number in all three.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    #[serde(rename = "bplus")]
    BesovPlus,
    #[serde(rename = "bminus")]
    BesovMinus,
    Plain,
}

impl Convention {
    pub fn name(self) -> &'static str {
        match self {
            Convention::BesovPlus => "bplus",
            Convention::BesovMinus => "bminus",
            Convention::Plain => "plain",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "bplus" => Ok(Convention::BesovPlus),
            "bminus" => Ok(Convention::BesovMinus),
            "plain" => Ok(Convention::Plain),
            other => Err(Error::Parse(format!("unknown convention {other:?}"))),
        }
    }

    /// Factor taking a plain coefficient on a cell of measure `q` to this view.
    pub fn factor(self, q: f64, s: f64) -> f64 {
        match self {
            Convention::BesovPlus => q.powf(-1.0 - s),
            Convention::BesovMinus => q.powf(s),
            Convention::Plain => 1.0,
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sparse coefficients `a_I, {a_w}` of `a_I 1_I + sum a_w phi_w`, tagged with
/// a smoothness and a convention. Absent wavelets have coefficient zero.
#[derive(Clone, Debug)]
pub struct DistCoeffs<S> {
    grid: Arc<GoodGrid>,
    s: f64,
    convention: Convention,
    constant: S,
    terms: BTreeMap<WaveletId, S>,
}

impl<S: Scalar> PartialEq for DistCoeffs<S> {
    fn eq(&self, other: &Self) -> bool {
        ensure_same_grid(&self.grid, &other.grid).is_ok()
            && self.s == other.s
            && self.convention == other.convention
            && self.constant == other.constant
            && self.terms == other.terms
    }
}

impl<S: Scalar> DistCoeffs<S> {
    pub fn from_plain(
        grid: Arc<GoodGrid>,
        s: f64,
        convention: Convention,
        constant: S,
        mut terms: BTreeMap<WaveletId, S>,
    ) -> Self {
        terms.retain(|_, v| !v.is_zero());
        DistCoeffs {
            grid,
            s,
            convention,
            constant,
            terms,
        }
    }

    pub fn zero(grid: Arc<GoodGrid>, s: f64, convention: Convention) -> Self {
        Self::from_plain(grid, s, convention, S::zero(), BTreeMap::new())
    }

    /// Build from values given in the `convention` view.
    pub fn from_scaled(
        grid: Arc<GoodGrid>,
        s: f64,
        convention: Convention,
        constant: S,
        scaled: impl IntoIterator<Item = (WaveletId, Complex64)>,
    ) -> Result<Self> {
        let mut terms = BTreeMap::new();
        for (w, v) in scaled {
            let f = convention.factor(grid.measure_f64(w.owner), s);
            terms.insert(w, S::from_c64(v / f)?);
        }
        Ok(Self::from_plain(grid, s, convention, constant, terms))
    }

    pub fn grid(&self) -> &Arc<GoodGrid> {
        &self.grid
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    /// `c_I = d_I = a_I`.
    pub fn constant(&self) -> &S {
        &self.constant
    }

    pub fn plain(&self, w: WaveletId) -> Option<&S> {
        self.terms.get(&w)
    }

    pub fn terms(&self) -> impl Iterator<Item = (WaveletId, &S)> {
        self.terms.iter().map(|(w, v)| (*w, v))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty() && self.constant.is_zero()
    }

    /// Factor from plain to the tagged view for wavelet `w`.
    pub fn factor(&self, w: WaveletId) -> f64 {
        self.convention.factor(self.grid.measure_f64(w.owner), self.s)
    }

    /// The coefficient of `w` in the tagged view.
    pub fn scaled(&self, w: WaveletId) -> Complex64 {
        self.terms
            .get(&w)
            .map_or(Complex64::zero(), |a| a.to_c64() * self.factor(w))
    }

    pub fn scaled_terms(&self) -> impl Iterator<Item = (WaveletId, Complex64)> + '_ {
        self.terms.iter().map(|(w, a)| (*w, a.to_c64() * self.factor(*w)))
    }

    /// Same distribution, viewed in another convention.
    pub fn with_convention(&self, convention: Convention) -> Self {
        DistCoeffs {
            convention,
            ..self.clone()
        }
    }

    /// Deepest owner level in the support.
    pub fn max_owner_level(&self) -> Option<usize> {
        self.terms.keys().map(|w| self.grid.level(w.owner)).max()
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        ensure_same_grid(&self.grid, &other.grid)?;
        if self.s != other.s {
            return Err(Error::SmoothnessMismatch(self.s, other.s));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.constant = out.constant + other.constant.clone();
        for (w, v) in &other.terms {
            out.add_term(*w, v.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(&-S::one()))
    }

    pub fn scale(&self, c: &S) -> Self {
        let terms = self.terms.iter().map(|(w, v)| (*w, v.clone() * c.clone())).collect();
        Self::from_plain(
            self.grid.clone(),
            self.s,
            self.convention,
            self.constant.clone() * c.clone(),
            terms,
        )
    }

    /// Add `v` to the plain coefficient of `w`, dropping it if it cancels.
    pub fn add_term(&mut self, w: WaveletId, v: S) {
        let entry = self.terms.entry(w).or_insert_with(S::zero);
        *entry = entry.clone() + v;
        if entry.is_zero() {
            self.terms.remove(&w);
        }
    }

    pub fn add_constant(&mut self, v: S) {
        self.constant = self.constant.clone() + v;
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> DistCoeffs<T> {
        let terms = self.terms.iter().map(|(w, v)| (*w, f(v))).collect();
        DistCoeffs::from_plain(self.grid.clone(), self.s, self.convention, f(&self.constant), terms)
    }
}

fn require(found: Convention, expected: Convention) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::WrongConvention {
            expected: expected.name(),
            found: found.name(),
        })
    }
}

/// A norm value with the certified size of whatever was truncated away and
/// the cell where the norm is attained (if any).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub norm: f64,
    pub tail_bound: f64,
    pub witness: Option<CellId>,
}

/// `|c_I| + sup |c_w|`.
pub fn norm_plus<S: Scalar>(coeffs: &DistCoeffs<S>) -> Result<NormReport> {
    require(coeffs.convention, Convention::BesovPlus)?;
    let mut sup = 0.0;
    let mut witness = None;
    for (w, c) in coeffs.scaled_terms() {
        if c.norm() > sup {
            sup = c.norm();
            witness = Some(coeffs.grid.cell_id(w.owner));
        }
    }
    Ok(NormReport {
        norm: coeffs.constant.modulus() + sup,
        tail_bound: 0.0,
        witness,
    })
}

/// `|d_I| + sum |d_w|`.
pub fn norm_minus<S: Scalar>(coeffs: &DistCoeffs<S>) -> Result<NormReport> {
    require(coeffs.convention, Convention::BesovMinus)?;
    Ok(NormReport {
        norm: norm_minus_value(coeffs),
        tail_bound: 0.0,
        witness: None,
    })
}

pub(crate) fn norm_minus_value<S: Scalar>(coeffs: &DistCoeffs<S>) -> f64 {
    let s = coeffs.s;
    coeffs.constant.modulus()
        + coeffs
            .terms
            .iter()
            .map(|(w, a)| a.modulus() * Convention::BesovMinus.factor(coeffs.grid.measure_f64(w.owner), s))
            .sum::<f64>()
}

/// `sup |c_w|` over wavelets owned at level `k` or deeper.
pub fn vanishing_modulus<S: Scalar>(coeffs: &DistCoeffs<S>, k: usize) -> Result<f64> {
    require(coeffs.convention, Convention::BesovPlus)?;
    Ok(coeffs
        .scaled_terms()
        .filter(|(w, _)| coeffs.grid.level(w.owner) >= k)
        .map(|(_, c)| c.norm())
        .fold(0.0, f64::max))
}

/// `d_I c_I + sum d_w c_w K_w`, computed exactly from the plain coefficients.
pub fn pairing<S: Scalar>(phi: &DistCoeffs<S>, psi: &DistCoeffs<S>) -> Result<S> {
    require(phi.convention, Convention::BesovMinus)?;
    require(psi.convention, Convention::BesovPlus)?;
    phi.check_compatible(psi)?;
    let mut acc = phi.constant.clone() * psi.constant.clone();
    let (small, large) = if phi.terms.len() <= psi.terms.len() {
        (&phi.terms, &psi.terms)
    } else {
        (&psi.terms, &phi.terms)
    };
    for (w, a) in small {
        if let Some(b) = large.get(w) {
            let k_over_q = S::from_measure(&w.pair(&phi.grid).norm_sq);
            acc = acc + a.clone() * b.clone() * k_over_q;
        }
    }
    Ok(acc)
}

/// `max(1, max K)` over the common support: the factor in
/// `|pairing| <= factor * norm_minus * norm_plus`.
pub fn pairing_bound_factor<S: Scalar>(phi: &DistCoeffs<S>, psi: &DistCoeffs<S>) -> f64 {
    phi.terms
        .keys()
        .filter(|w| psi.terms.contains_key(w))
        .map(|w| rational_to_f64(&w.pair(&phi.grid).k))
        .fold(1.0, f64::max)
}

/// `|pairing| / (norm_minus * norm_plus)`.
pub fn duality_gap<S: Scalar>(phi: &DistCoeffs<S>, psi: &DistCoeffs<S>) -> Result<f64> {
    let p = pairing(phi, psi)?.modulus();
    let denom = norm_minus(phi)?.norm * norm_plus(psi)?.norm;
    if denom == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(p / denom)
}

/// Parts of the grid Hölder norm of a step function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub sup: f64,
    pub seminorm: f64,
    pub norm: f64,
    pub witness: Option<CellId>,
}

/// `sup |psi| + max_P osc_P(psi) / |P|^s`, where `osc_P` is the largest
/// difference between values in two distinct children of `P`.
pub fn holder_norm<S: Scalar>(psi: &StepFunction<S>, s: f64) -> HolderReport {
    let grid = psi.grid();
    let values: Vec<Complex64> = psi.values().iter().map(Scalar::to_c64).collect();
    let sup = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let real = values.iter().all(|v| v.im == 0.0);
    let mut seminorm = 0.0;
    let mut witness = None;
    let n = psi.level();
    for k in 0..n {
        for &cell in grid.level_nodes(k).expect("level below psi") {
            let groups: Vec<&[Complex64]> = grid
                .children(cell)
                .iter()
                .map(|&c| &values[grid.descendant_range(c, n)])
                .collect();
            let osc = if real {
                real_oscillation(&groups)
            } else {
                complex_oscillation(&groups)
            };
            let q = osc / grid.measure_f64(cell).powf(s);
            if q > seminorm {
                seminorm = q;
                witness = Some(grid.cell_id(cell));
            }
        }
    }
    HolderReport {
        sup,
        seminorm,
        norm: sup + seminorm,
        witness,
    }
}

fn real_oscillation(groups: &[&[Complex64]]) -> f64 {
    let bounds: Vec<(f64, f64)> = groups
        .iter()
        .map(|g| {
            g.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.re), hi.max(v.re)))
        })
        .collect();
    let mut best = 0.0;
    for (a, &(_, hi)) in bounds.iter().enumerate() {
        for (b, &(lo, _)) in bounds.iter().enumerate() {
            if a != b {
                best = f64::max(best, hi - lo);
            }
        }
    }
    best
}

fn complex_oscillation(groups: &[&[Complex64]]) -> f64 {
    let mut best = 0.0;
    for (a, ga) in groups.iter().enumerate() {
        for gb in &groups[a + 1..] {
            for u in *ga {
                for v in *gb {
                    best = f64::max(best, (u - v).norm());
                }
            }
        }
    }
    best
}
