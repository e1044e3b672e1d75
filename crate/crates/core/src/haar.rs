//! Unbalanced Haar wavelets on a good grid.
//!
//! Each internal cell `Q` with ordered children `P_0, ..., P_{n-1}` owns `n - 1`
//! pairs `(S1, S2)` of adjacent child groups, produced by repeatedly halving
//! (floor) the children: first the whole list, then each half of size at least
//! two, breadth first. The wavelet of a pair is
//! `1_{S1} / |S1| - 1_{S2} / |S2|`, which has mean zero, and the wavelets of all
//! cells together with `1_I` are orthogonal in `L^2`.
//!
//! Coefficients are stored as plain expansion coefficients `a` of
//! `psi = a_I 1_I + sum a_w phi_w`, which are exact in the rational fields. The
//! smoothness-dependent scalings live in [`crate::besov::Convention`].

use std::collections::{BTreeMap, VecDeque};
use std::ops::Range;
use std::sync::Arc;


use crate::besov::{Convention, DistCoeffs};
use crate::error::{Error, Result};
use crate::grid::{CellId, GoodGrid, NodeId};
use crate::scalar::{rational_to_f64, Rational, Scalar};

/// One pair `(S1, S2)` of a cell's pair recursion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HaarPair {
    pub owner: NodeId,
    /// Child indices of the first group.
    pub s1: Range<usize>,
    /// Child indices of the second group; starts where `s1` ends.
    pub s2: Range<usize>,
    /// Recursion generation `j`.
    pub generation: usize,
    pub mu1: Rational,
    pub mu2: Rational,
    /// `|Q| (1/mu1 + 1/mu2)`.
    pub k: Rational,
    /// `<phi, phi> = 1/mu1 + 1/mu2`.
    pub norm_sq: Rational,
}

impl HaarPair {
    pub fn union(&self) -> Range<usize> {
        self.s1.start..self.s2.end
    }

    pub fn contains_child(&self, index: usize) -> bool {
        self.s1.contains(&index) || self.s2.contains(&index)
    }
}

/// Pair recursion on `n` ordered children: `(S1, S2, generation)` triples in
/// breadth-first order.
pub fn split_children(n: usize) -> Vec<(Range<usize>, Range<usize>, usize)> {
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    let mut queue = VecDeque::new();
    if n >= 2 {
        queue.push_back((0..n, 0));
    }
    while let Some((group, generation)) = queue.pop_front() {
        let mid = group.start + group.len() / 2;
        let (s1, s2) = (group.start..mid, mid..group.end);
        if s1.len() >= 2 {
            queue.push_back((s1.clone(), generation + 1));
        }
        if s2.len() >= 2 {
            queue.push_back((s2.clone(), generation + 1));
        }
        out.push((s1, s2, generation));
    }
    out
}

pub(crate) fn build_pairs(owner: NodeId, measure: &Rational, children: &[Rational]) -> Vec<HaarPair> {
    split_children(children.len())
        .into_iter()
        .map(|(s1, s2, generation)| {
            let mu1: Rational = children[s1.clone()].iter().cloned().sum();
            let mu2: Rational = children[s2.clone()].iter().cloned().sum();
            let norm_sq = mu1.recip() + mu2.recip();
            HaarPair {
                owner,
                s1,
                s2,
                generation,
                k: measure * &norm_sq,
                norm_sq,
                mu1,
                mu2,
            }
        })
        .collect()
}

/// Identifies a wavelet: owner cell plus index into its pair list. Ordering is
/// depth-first by owner, then by pair index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WaveletId {
    pub owner: NodeId,
    pub index: usize,
}

impl WaveletId {
    pub fn new(grid: &GoodGrid, owner: NodeId, index: usize) -> Result<Self> {
        if index >= grid.pairs(owner).len() {
            return Err(Error::InvalidWavelet {
                cell: grid.cell_id(owner),
                index,
            });
        }
        Ok(WaveletId { owner, index })
    }

    pub fn from_cell(grid: &GoodGrid, cell: &CellId, index: usize) -> Result<Self> {
        Self::new(grid, grid.node(cell)?, index)
    }

    pub fn pair<'g>(&self, grid: &'g GoodGrid) -> &'g HaarPair {
        &grid.pairs(self.owner)[self.index]
    }
}

/// All wavelets of the grid in depth-first order.
pub fn all_wavelets(grid: &GoodGrid) -> Vec<WaveletId> {
    grid.nodes()
        .flat_map(|owner| (0..grid.pairs(owner).len()).map(move |index| WaveletId { owner, index }))
        .collect()
}

/// Wavelets whose owner sits at a level below `level`.
pub fn wavelets_above(grid: &GoodGrid, level: usize) -> Vec<WaveletId> {
    all_wavelets(grid)
        .into_iter()
        .filter(|w| grid.level(w.owner) < level)
        .collect()
}

/// Haar pairs of a cell.
pub fn haar_pairs<'g>(grid: &'g GoodGrid, cell: &CellId) -> Result<&'g [HaarPair]> {
    let id = grid.node(cell)?;
    if grid.is_leaf(id) {
        return Err(Error::LeafCell(cell.clone()));
    }
    Ok(grid.pairs(id))
}

/// `K = |Q| (1/mu1 + 1/mu2)`.
pub fn k_constant(grid: &GoodGrid, w: WaveletId) -> Rational {
    w.pair(grid).k.clone()
}

/// Extremes of `K` over all wavelets of a grid.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct KBoundReport {
    pub wavelets: usize,
    pub min_k: f64,
    pub max_k: f64,
    /// `2 / lambda_star`, which every `K` must respect.
    pub derivable_bound: f64,
    /// `1 / lambda_star`, exceeded by e.g. the dyadic grid (`K = 4`).
    pub narrow_bound: f64,
    pub exceeding_narrow_bound: usize,
    pub within_bounds: bool,
}

pub fn k_bound_report(grid: &GoodGrid) -> KBoundReport {
    let two = Rational::from_integer(2.into());
    let derivable = &two / grid.lambda_star();
    let narrow = grid.lambda_star().recip();
    let mut min_k: Option<Rational> = None;
    let mut max_k: Option<Rational> = None;
    let mut exceeding = 0;
    let mut within = true;
    let mut count = 0;
    for w in all_wavelets(grid) {
        let k = &w.pair(grid).k;
        count += 1;
        if k < &two || k > &derivable {
            within = false;
        }
        if k > &narrow {
            exceeding += 1;
        }
        if min_k.as_ref().is_none_or(|m| k < m) {
            min_k = Some(k.clone());
        }
        if max_k.as_ref().is_none_or(|m| k > m) {
            max_k = Some(k.clone());
        }
    }
    KBoundReport {
        wavelets: count,
        min_k: min_k.map_or(f64::NAN, |k| rational_to_f64(&k)),
        max_k: max_k.map_or(f64::NAN, |k| rational_to_f64(&k)),
        derivable_bound: rational_to_f64(&derivable),
        narrow_bound: rational_to_f64(&narrow),
        exceeding_narrow_bound: exceeding,
        within_bounds: within,
    }
}

/// A function constant on the cells of one level, values in depth-first cell order.
#[derive(Clone, Debug)]
pub struct StepFunction<S> {
    grid: Arc<GoodGrid>,
    level: usize,
    values: Vec<S>,
}

impl<S: PartialEq> PartialEq for StepFunction<S> {
    fn eq(&self, other: &Self) -> bool {
        same_grid(&self.grid, &other.grid) && self.level == other.level && self.values == other.values
    }
}

pub(crate) fn same_grid(a: &Arc<GoodGrid>, b: &Arc<GoodGrid>) -> bool {
    Arc::ptr_eq(a, b) || (a.fingerprint() == b.fingerprint() && **a == **b)
}

pub(crate) fn ensure_same_grid(a: &Arc<GoodGrid>, b: &Arc<GoodGrid>) -> Result<()> {
    if same_grid(a, b) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

impl<S: Scalar> StepFunction<S> {
    pub fn new(grid: Arc<GoodGrid>, level: usize, values: Vec<S>) -> Result<Self> {
        let expected = grid.level_nodes(level)?.len();
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: values.len(),
            });
        }
        Ok(StepFunction { grid, level, values })
    }

    pub fn constant(grid: Arc<GoodGrid>, level: usize, value: S) -> Result<Self> {
        let n = grid.level_nodes(level)?.len();
        Self::new(grid, level, vec![value; n])
    }

    /// `value * 1_cell` as a level-`level(cell)` step function.
    pub fn indicator(grid: Arc<GoodGrid>, cell: NodeId, value: S) -> Self {
        let level = grid.level(cell);
        let pos = grid.position_in_level(cell);
        let mut values = vec![S::zero(); grid.level_nodes(level).expect("cell level").len()];
        values[pos] = value;
        StepFunction { grid, level, values }
    }

    pub fn from_fn(grid: Arc<GoodGrid>, level: usize, mut f: impl FnMut(NodeId) -> S) -> Result<Self> {
        let values = grid.level_nodes(level)?.iter().map(|&n| f(n)).collect();
        Ok(StepFunction { grid, level, values })
    }

    pub fn grid(&self) -> &Arc<GoodGrid> {
        &self.grid
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    /// The same function on the finer level `level`.
    pub fn refine(&self, level: usize) -> Result<Self> {
        if level < self.level {
            return Err(Error::Parse(format!(
                "cannot refine level {} to coarser level {level}",
                self.level
            )));
        }
        let mut values = self.values.clone();
        for k in self.level..level {
            let mut next = Vec::new();
            for (&cell, v) in self.grid.level_nodes(k)?.iter().zip(&values) {
                next.extend(std::iter::repeat_n(v.clone(), self.grid.children(cell).len()));
            }
            values = next;
        }
        Self::new(self.grid.clone(), level, values)
    }

    /// `f * |cell|` per cell.
    pub fn cell_integrals(&self) -> Vec<S> {
        let nodes = self.grid.level_nodes(self.level).expect("own level");
        nodes
            .iter()
            .zip(&self.values)
            .map(|(&n, v)| v.clone() * S::from_measure(self.grid.measure(n)))
            .collect()
    }

    pub fn integral(&self) -> S {
        self.cell_integrals().into_iter().fold(S::zero(), |a, b| a + b)
    }

    pub fn scale(&self, c: &S) -> Self {
        StepFunction {
            grid: self.grid.clone(),
            level: self.level,
            values: self.values.iter().map(|v| v.clone() * c.clone()).collect(),
        }
    }

    /// Pointwise sum, on the finer of the two levels.
    pub fn add(&self, other: &Self) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        let level = self.level.max(other.level);
        let (a, b) = (self.refine(level)?, other.refine(level)?);
        let values = a.values.into_iter().zip(b.values).map(|(x, y)| x + y).collect();
        Self::new(self.grid.clone(), level, values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(Scalar::modulus).fold(0.0, f64::max)
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> StepFunction<T> {
        StepFunction {
            grid: self.grid.clone(),
            level: self.level,
            values: self.values.iter().map(f).collect(),
        }
    }
}

/// The wavelet as a step function on the children of its owner.
pub fn wavelet_values<S: Scalar>(grid: &Arc<GoodGrid>, w: WaveletId) -> Result<StepFunction<S>> {
    let pair = w.pair(grid);
    let level = grid.level(w.owner) + 1;
    let up = S::from_measure(&pair.mu1.recip());
    let down = -S::from_measure(&pair.mu2.recip());
    let children = grid.children(w.owner);
    let mut values = vec![S::zero(); grid.level_nodes(level)?.len()];
    for (i, &c) in children.iter().enumerate() {
        let pos = grid.position_in_level(c);
        if pair.s1.contains(&i) {
            values[pos] = up.clone();
        } else if pair.s2.contains(&i) {
            values[pos] = down.clone();
        }
    }
    StepFunction::new(grid.clone(), level, values)
}

/// `∫ f g dμ` (bilinear, no conjugation).
pub fn inner_product<S: Scalar>(f: &StepFunction<S>, g: &StepFunction<S>) -> Result<S> {
    ensure_same_grid(&f.grid, &g.grid)?;
    let level = f.level.max(g.level);
    let (f, g) = (f.refine(level)?, g.refine(level)?);
    let nodes = f.grid.level_nodes(level)?;
    Ok(nodes
        .iter()
        .zip(f.values.iter().zip(&g.values))
        .fold(S::zero(), |acc, (&n, (a, b))| {
            acc + a.clone() * b.clone() * S::from_measure(f.grid.measure(n))
        }))
}

/// Integrals `∫_P psi` for every cell `P` of levels `0..=level(psi)`, indexed
/// by level then depth-first position.
pub(crate) fn level_integrals<S: Scalar>(psi: &StepFunction<S>) -> Vec<Vec<S>> {
    let grid = &psi.grid;
    let mut out = vec![Vec::new(); psi.level + 1];
    out[psi.level] = psi.cell_integrals();
    for k in (0..psi.level).rev() {
        let finer = &out[k + 1];
        let mut cursor = 0;
        let mut coarse = Vec::with_capacity(grid.level_nodes(k).expect("level").len());
        for &cell in grid.level_nodes(k).expect("level") {
            let n = grid.children(cell).len();
            let sum = finer[cursor..cursor + n].iter().cloned().fold(S::zero(), |a, b| a + b);
            cursor += n;
            coarse.push(sum);
        }
        out[k] = coarse;
    }
    out
}

/// `∫ psi phi_w` from the integrals of `psi` over the owner's children.
fn pair_projection<S: Scalar>(pair: &HaarPair, child_integrals: &[S]) -> S {
    let sum = |r: &Range<usize>| child_integrals[r.clone()].iter().cloned().fold(S::zero(), |a, b| a + b);
    sum(&pair.s1) / S::from_measure(&pair.mu1) - sum(&pair.s2) / S::from_measure(&pair.mu2)
}

/// Wavelet analysis of a step function. The result is tagged with the
/// positive-smoothness convention; zero coefficients are omitted.
pub fn analyze<S: Scalar>(psi: &StepFunction<S>, s: f64) -> Result<DistCoeffs<S>> {
    let grid = psi.grid.clone();
    if psi.level > grid.depth() {
        return Err(Error::DepthInsufficient {
            needed: psi.level,
            depth: grid.depth(),
        });
    }
    let integrals = level_integrals(psi);
    let mut terms = BTreeMap::new();
    for k in 0..psi.level {
        let mut cursor = 0;
        for &cell in grid.level_nodes(k)? {
            let n = grid.children(cell).len();
            let child_integrals = &integrals[k + 1][cursor..cursor + n];
            cursor += n;
            for (index, pair) in grid.pairs(cell).iter().enumerate() {
                let a = pair_projection(pair, child_integrals) / S::from_measure(&pair.norm_sq);
                if !a.is_zero() {
                    terms.insert(WaveletId { owner: cell, index }, a);
                }
            }
        }
    }
    let constant = integrals[0][0].clone();
    Ok(DistCoeffs::from_plain(grid, s, Convention::BesovPlus, constant, terms))
}

/// Evaluate `a_I 1_I + sum a_w phi_w` as a level-`level` step function.
pub fn synthesize<S: Scalar>(coeffs: &DistCoeffs<S>, level: usize) -> Result<StepFunction<S>> {
    let grid = coeffs.grid().clone();
    if level > grid.depth() {
        return Err(Error::DepthInsufficient {
            needed: level,
            depth: grid.depth(),
        });
    }
    if let Some(deepest) = coeffs.max_owner_level() {
        if deepest >= level {
            return Err(Error::DepthInsufficient {
                needed: deepest + 1,
                depth: level,
            });
        }
    }
    let mut values = vec![coeffs.constant().clone()];
    for k in 0..level {
        let mut next = Vec::new();
        for (&cell, v) in grid.level_nodes(k)?.iter().zip(&values) {
            let n = grid.children(cell).len();
            let mut child_values = vec![v.clone(); n];
            for (index, pair) in grid.pairs(cell).iter().enumerate() {
                let Some(a) = coeffs.plain(WaveletId { owner: cell, index }) else {
                    continue;
                };
                let up = a.clone() / S::from_measure(&pair.mu1);
                let down = a.clone() / S::from_measure(&pair.mu2);
                for c in pair.s1.clone() {
                    child_values[c] = child_values[c].clone() + up.clone();
                }
                for c in pair.s2.clone() {
                    child_values[c] = child_values[c].clone() - down.clone();
                }
            }
            next.extend(child_values);
        }
        values = next;
    }
    StepFunction::new(grid, level, values)
}

/// `1 / |cell|` on the cell, as a level-`level(cell)` step function.
pub fn normalized_indicator<S: Scalar>(grid: &Arc<GoodGrid>, cell: NodeId) -> StepFunction<S> {
    StepFunction::indicator(grid.clone(), cell, S::from_measure(&grid.measure(cell).recip()))
}

/// `1_cell` as a step function.
pub fn indicator<S: Scalar>(grid: &Arc<GoodGrid>, cell: NodeId) -> StepFunction<S> {
    StepFunction::indicator(grid.clone(), cell, S::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_dyadic, build_uniform};
    use crate::scalar::ratio;
    use num_traits::{One, Zero};

    fn ranges(n: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
        split_children(n)
            .into_iter()
            .map(|(a, b, _)| (a.collect(), b.collect()))
            .collect()
    }

    #[test]
    fn pair_recursion_small_cases() {
        assert_eq!(ranges(2), vec![(vec![0], vec![1])]);
        assert_eq!(ranges(3), vec![(vec![0], vec![1, 2]), (vec![1], vec![2])]);
        assert_eq!(
            ranges(4),
            vec![(vec![0, 1], vec![2, 3]), (vec![0], vec![1]), (vec![2], vec![3])]
        );
        assert!(ranges(1).is_empty());
        for n in 2..20 {
            assert_eq!(split_children(n).len(), n - 1);
        }
    }

    #[test]
    fn generations_follow_the_recursion() {
        let gens: Vec<usize> = split_children(5).into_iter().map(|(_, _, j)| j).collect();
        // 5 -> (2,3); 2 -> (1,1); 3 -> (1,2); 2 -> (1,1)
        assert_eq!(gens, vec![0, 1, 1, 2]);
    }

    #[test]
    fn leaf_cell_has_no_pairs() {
        let g = build_dyadic(1);
        assert!(matches!(haar_pairs(&g, &CellId(vec![0])), Err(Error::LeafCell(_))));
        assert_eq!(haar_pairs(&g, &CellId::root()).unwrap().len(), 1);
    }

    #[test]
    fn wavelet_value_examples() {
        let g = Arc::new(build_dyadic(1));
        let w = WaveletId::new(&g, NodeId::ROOT, 0).unwrap();
        let f: StepFunction<Rational> = wavelet_values(&g, w).unwrap();
        assert_eq!(f.values(), &[ratio(2, 1), ratio(-2, 1)]);

        let t = Arc::new(build_uniform(1, 3));
        let w = WaveletId::new(&t, NodeId::ROOT, 0).unwrap();
        let f: StepFunction<Rational> = wavelet_values(&t, w).unwrap();
        assert_eq!(f.values(), &[ratio(3, 1), ratio(-3, 2), ratio(-3, 2)]);
        assert!(f.integral().is_zero());
    }

    #[test]
    fn k_constant_examples() {
        let g = build_dyadic(1);
        assert_eq!(k_constant(&g, WaveletId { owner: NodeId::ROOT, index: 0 }), ratio(4, 1));
        let t = build_uniform(1, 3);
        assert_eq!(k_constant(&t, WaveletId { owner: NodeId::ROOT, index: 0 }), ratio(9, 2));
        assert_eq!(k_constant(&t, WaveletId { owner: NodeId::ROOT, index: 1 }), ratio(6, 1));
    }

    #[test]
    fn self_inner_product_is_k_over_measure() {
        let g = Arc::new(build_uniform(2, 3));
        for w in all_wavelets(&g) {
            let f: StepFunction<Rational> = wavelet_values(&g, w).unwrap();
            let ip = inner_product(&f, &f).unwrap();
            assert_eq!(ip, k_constant(&g, w) / g.measure(w.owner));
        }
    }

    #[test]
    fn inner_product_rejects_other_grids() {
        let a = Arc::new(build_dyadic(2));
        let b = Arc::new(build_uniform(2, 3));
        let f = StepFunction::<Rational>::constant(a, 0, Rational::one()).unwrap();
        let g = StepFunction::<Rational>::constant(b, 0, Rational::one()).unwrap();
        assert!(matches!(inner_product(&f, &g), Err(Error::GridMismatch)));
    }

    #[test]
    fn analyze_half_indicator() {
        let g = Arc::new(build_dyadic(1));
        let psi = StepFunction::new(g.clone(), 1, vec![Rational::one(), Rational::zero()]).unwrap();
        for s in [0.25, 0.5, 0.75] {
            let c = analyze(&psi, s).unwrap();
            assert_eq!(c.constant(), &ratio(1, 2));
            let w = WaveletId { owner: NodeId::ROOT, index: 0 };
            // |Q| = 1, so the scaled coefficient does not depend on s.
            assert!((c.scaled(w).re - 0.25).abs() < 1e-15);
            assert_eq!(synthesize(&c, 1).unwrap(), psi);
        }
    }

    #[test]
    fn analyze_single_wavelet() {
        let g = Arc::new(build_uniform(3, 3));
        let s = 0.5;
        for w in all_wavelets(&g).into_iter().filter(|w| g.level(w.owner) < 2) {
            let psi: StepFunction<Rational> = wavelet_values(&g, w).unwrap();
            let c = analyze(&psi, s).unwrap();
            assert_eq!(c.len(), 1);
            assert!(c.constant().is_zero());
            let expected = g.measure_f64(w.owner).powf(-1.0 - s);
            assert!((c.scaled(w).re - expected).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn synthesize_constant() {
        let g = Arc::new(build_dyadic(3));
        let c = DistCoeffs::from_plain(g.clone(), 0.5, Convention::BesovPlus, ratio(3, 1), BTreeMap::new());
        let f = synthesize(&c, 3).unwrap();
        assert!(f.values().iter().all(|v| *v == ratio(3, 1)));
    }

    #[test]
    fn synthesize_rejects_deep_owners() {
        let g = Arc::new(build_dyadic(3));
        let mut terms = BTreeMap::new();
        let owner = g.level_nodes(2).unwrap()[0];
        terms.insert(WaveletId { owner, index: 0 }, Rational::one());
        let c = DistCoeffs::from_plain(g, 0.5, Convention::BesovPlus, Rational::zero(), terms);
        assert!(matches!(synthesize(&c, 2), Err(Error::DepthInsufficient { .. })));
        assert!(synthesize(&c, 3).is_ok());
    }

    #[test]
    fn step_function_length_is_checked() {
        let g = Arc::new(build_dyadic(2));
        assert!(matches!(
            StepFunction::new(g, 2, vec![Rational::one(); 3]),
            Err(Error::LengthMismatch { expected: 4, found: 3 })
        ));
    }
}
