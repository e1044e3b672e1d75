//! Dipole bases and decompositions of negative-smoothness distributions into
//! Dirac masses and dipoles.
//!
//! The family `F` holds every cell and every group `∪S_1`, `∪S_2` of the pair
//! recursion. A dipole basis picks an anchor point `x_F` in each member such
//! that a member containing the anchor of a larger member reuses it. The
//! basis dipoles are `delta_{x_{P_1}} - delta_{x_{P_2}}`, one per wavelet, plus
//! the Dirac mass at `x_I`.
//!
//! The Riemann configuration `A^i_J = sum |P| delta_{x_P}` over the cells `P`
//! of level `k_0(J) + i` inside `J` tends to `1_J`; each step is a finite sum of
//! basis dipoles. Writing a wavelet as
//! `phi = 1_{P_1}/|P_1| - 1_{P_2}/|P_2|` and expanding both indicators gives
//! its dipole coefficients.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::besov::{Convention, DistCoeffs};
use crate::error::{Error, Result};
use crate::grid::{pseudo_distance, Address, GoodGrid, NodeId};
use crate::haar::{all_wavelets, ensure_same_grid, level_integrals, synthesize, WaveletId};
use crate::particles::{config_coeffs, dirac_coeffs, dirac_tail, ParticleConfig, TruncatedDist};
use crate::scalar::{Rational, Scalar};

/// A member of the family `F`: a cell, or a run of at least two (but not all)
/// children of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Member {
    Cell(NodeId),
    Group { owner: NodeId, start: usize, end: usize },
}

impl Member {
    /// The member made of children `range` of `owner`.
    pub fn of_children(grid: &GoodGrid, owner: NodeId, range: Range<usize>) -> Member {
        let children = grid.children(owner);
        if range.len() == 1 {
            Member::Cell(children[range.start])
        } else if range.len() == children.len() {
            Member::Cell(owner)
        } else {
            Member::Group {
                owner,
                start: range.start,
                end: range.end,
            }
        }
    }

    /// `(P_1, P_2, P_1 ∪ P_2)` for a wavelet.
    pub fn of_pair(grid: &GoodGrid, w: WaveletId) -> (Member, Member, Member) {
        let pair = w.pair(grid);
        (
            Member::of_children(grid, w.owner, pair.s1.clone()),
            Member::of_children(grid, w.owner, pair.s2.clone()),
            Member::of_children(grid, w.owner, pair.union()),
        )
    }

    pub fn measure(&self, grid: &GoodGrid) -> Rational {
        match *self {
            Member::Cell(c) => grid.measure(c).clone(),
            Member::Group { owner, start, end } => grid.children(owner)[start..end]
                .iter()
                .map(|&c| grid.measure(c).clone())
                .sum(),
        }
    }

    /// Level of the partition that the Riemann configurations start from:
    /// the cell's own level, or the owner's level for a group.
    pub fn reference_level(&self, grid: &GoodGrid) -> usize {
        match *self {
            Member::Cell(c) => grid.level(c),
            Member::Group { owner, .. } => grid.level(owner),
        }
    }

    /// Cells of `level` inside the member, as a range of depth-first positions.
    /// `level` must be at least the level of the member's cells.
    pub fn positions_at(&self, grid: &GoodGrid, level: usize) -> Range<usize> {
        match *self {
            Member::Cell(c) => grid.descendant_range(c, level),
            Member::Group { owner, start, end } => {
                let children = grid.children(owner);
                grid.descendant_range(children[start], level).start..grid.descendant_range(children[end - 1], level).end
            }
        }
    }

    /// Positions of the full-depth cells inside the member.
    pub fn leaf_range(&self, grid: &GoodGrid) -> Range<usize> {
        self.positions_at(grid, grid.depth())
    }
}

/// All members of `F`, parents before children.
pub fn family(grid: &GoodGrid) -> Vec<Member> {
    let mut out = Vec::new();
    for cell in grid.nodes() {
        out.push(Member::Cell(cell));
        for w in (0..grid.pairs(cell).len()).map(|index| WaveletId { owner: cell, index }) {
            let (p1, p2, _) = Member::of_pair(grid, w);
            out.extend([p1, p2].into_iter().filter(|m| matches!(m, Member::Group { .. })));
        }
    }
    out
}

/// How anchors are picked for members not constrained by a larger member.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum AnchorRule {
    /// Descend through the first child available.
    Leftmost,
    /// Descend through uniformly drawn children.
    SeededRandom { seed: u64 },
}

/// Anchors for every member of `F`, stored as full-depth cells.
#[derive(Clone, Debug)]
pub struct DipoleBasis {
    grid: Arc<GoodGrid>,
    rule: AnchorRule,
    anchors: HashMap<Member, NodeId>,
}

impl DipoleBasis {
    pub fn grid(&self) -> &Arc<GoodGrid> {
        &self.grid
    }

    pub fn rule(&self) -> AnchorRule {
        self.rule
    }

    /// Full-depth cell of the anchor.
    pub fn anchor_cell(&self, m: Member) -> NodeId {
        self.anchors[&m]
    }

    pub fn anchor(&self, m: Member) -> Address {
        self.grid.address_of(self.anchor_cell(m))
    }

    fn anchor_position(&self, m: Member) -> usize {
        self.grid.position_in_level(self.anchor_cell(m))
    }

    /// Anchors `(x_{P_1}, x_{P_2})` of the basis dipole of `w`.
    pub fn dipole(&self, w: WaveletId) -> (Address, Address) {
        let (p1, p2, _) = Member::of_pair(&self.grid, w);
        (self.anchor(p1), self.anchor(p2))
    }

    /// Checks that each anchor lies in its member, and that a member holding
    /// the anchor of a larger member shares it. Compares all nested pairs.
    pub fn check_compatibility(&self) -> std::result::Result<(), String> {
        let members: Vec<(Member, Range<usize>, usize)> = family(&self.grid)
            .into_iter()
            .map(|m| (m, m.leaf_range(&self.grid), self.anchor_position(m)))
            .collect();
        for (m, range, anchor) in &members {
            if !range.contains(anchor) {
                return Err(format!("anchor of {m:?} lies outside it"));
            }
        }
        for (big, big_range, big_anchor) in &members {
            for (small, small_range, small_anchor) in &members {
                let nested = big != small && big_range.start <= small_range.start && small_range.end <= big_range.end;
                if nested && small_range.contains(big_anchor) && small_anchor != big_anchor {
                    return Err(format!("{small:?} holds the anchor of {big:?} but has another"));
                }
            }
        }
        Ok(())
    }
}

fn descend(grid: &GoodGrid, m: Member, rng: &mut Option<ChaCha8Rng>) -> NodeId {
    let mut cell = match (m, rng.as_mut()) {
        (Member::Cell(c), _) => c,
        (Member::Group { owner, start, .. }, None) => grid.children(owner)[start],
        (Member::Group { owner, start, end }, Some(r)) => grid.children(owner)[r.random_range(start..end)],
    };
    while !grid.is_leaf(cell) {
        let children = grid.children(cell);
        cell = match rng.as_mut() {
            None => children[0],
            Some(r) => children[r.random_range(0..children.len())],
        };
    }
    cell
}

/// Anchors chosen top-down: every member inherits its parent's anchor when it
/// contains it and draws a fresh one by the rule otherwise.
pub fn build_dipole_basis(grid: Arc<GoodGrid>, rule: AnchorRule) -> DipoleBasis {
    let mut rng = match rule {
        AnchorRule::Leftmost => None,
        AnchorRule::SeededRandom { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    let mut anchors = HashMap::new();
    let root = Member::Cell(NodeId::ROOT);
    anchors.insert(root, descend(&grid, root, &mut rng));
    for cell in grid.nodes() {
        let inherit = |m: Member, parent: NodeId, anchors: &mut HashMap<Member, NodeId>, rng: &mut Option<ChaCha8Rng>| {
            let pos = grid.position_in_level(parent);
            let chosen = if m.leaf_range(&grid).contains(&pos) {
                parent
            } else {
                descend(&grid, m, rng)
            };
            anchors.insert(m, chosen);
        };
        for index in 0..grid.pairs(cell).len() {
            let (p1, p2, union) = Member::of_pair(&grid, WaveletId { owner: cell, index });
            let a = anchors[&union];
            inherit(p1, a, &mut anchors, &mut rng);
            inherit(p2, a, &mut anchors, &mut rng);
        }
        let a = anchors[&Member::Cell(cell)];
        for &c in grid.children(cell) {
            if !anchors.contains_key(&Member::Cell(c)) {
                inherit(Member::Cell(c), a, &mut anchors, &mut rng);
            }
        }
    }
    DipoleBasis { grid, rule, anchors }
}

/// `|P_1|` if the union's anchor is that of `P_2`, else `-|P_2|`.
pub fn riemann_coefficient(basis: &DipoleBasis, w: WaveletId) -> Rational {
    let (p1, p2, union) = Member::of_pair(&basis.grid, w);
    if basis.anchor_cell(union) == basis.anchor_cell(p2) {
        p1.measure(&basis.grid)
    } else {
        -p2.measure(&basis.grid)
    }
}

/// `A^i_J`: `|J| delta_{x_J}` for `i = 0`, else `|P| delta_{x_P}` over the
/// cells `P` of level `k_0(J) + i` inside `J`.
pub fn riemann_config<S: Scalar>(basis: &DipoleBasis, j: Member, i: usize) -> Result<ParticleConfig<S>> {
    let grid = &basis.grid;
    let level = j.reference_level(grid) + i;
    if level > grid.depth() {
        return Err(Error::DepthInsufficient {
            needed: level,
            depth: grid.depth(),
        });
    }
    let mut config = ParticleConfig::new();
    if i == 0 {
        config.push(S::from_measure(&j.measure(grid)), basis.anchor(j));
    } else {
        for &p in &grid.level_nodes(level)?[j.positions_at(grid, level)] {
            config.push(S::from_measure(grid.measure(p)), basis.anchor(Member::Cell(p)));
        }
    }
    Ok(config)
}

/// Basis-dipole coefficients of `A^{i+1}_J - A^i_J`.
pub fn riemann_increment(basis: &DipoleBasis, j: Member, i: usize) -> Result<Vec<(Rational, WaveletId)>> {
    let grid = &basis.grid;
    let level = j.reference_level(grid) + i;
    if level + 1 > grid.depth() {
        return Err(Error::DepthInsufficient {
            needed: level + 1,
            depth: grid.depth(),
        });
    }
    let mut out = Vec::new();
    match (j, i) {
        (Member::Group { owner, start, end }, 0) => {
            for (index, pair) in grid.pairs(owner).iter().enumerate() {
                if pair.s1.start >= start && pair.s2.end <= end {
                    let w = WaveletId { owner, index };
                    out.push((riemann_coefficient(basis, w), w));
                }
            }
        }
        _ => {
            for &r in &grid.level_nodes(level)?[j.positions_at(grid, level)] {
                for index in 0..grid.pairs(r).len() {
                    let w = WaveletId { owner: r, index };
                    out.push((riemann_coefficient(basis, w), w));
                }
            }
        }
    }
    Ok(out)
}

/// The configuration `sum m (delta_{x_{P_1}} - delta_{x_{P_2}})` of an increment.
pub fn increment_config<S: Scalar>(basis: &DipoleBasis, terms: &[(Rational, WaveletId)]) -> ParticleConfig<S> {
    let mut config = ParticleConfig::new();
    for (m, w) in terms {
        let (x, y) = basis.dipole(*w);
        config.push(S::from_measure(m), x);
        config.push(-S::from_measure(m), y);
    }
    config
}

/// Coefficients `m_0, {m_w}` of `m_0 delta_{x_I} + sum m_w (delta_{x_{P_1}} - delta_{x_{P_2}})`.
#[derive(Clone, Debug)]
pub struct DCCoeffs<S> {
    basis: Arc<DipoleBasis>,
    s: f64,
    m0: S,
    terms: BTreeMap<WaveletId, S>,
    /// Bound on the dipole-configuration norm of what a truncation dropped.
    pub tail_bound: f64,
}

impl<S: Scalar> PartialEq for DCCoeffs<S> {
    fn eq(&self, other: &Self) -> bool {
        self.s == other.s && self.m0 == other.m0 && self.terms == other.terms
    }
}

impl<S: Scalar> DCCoeffs<S> {
    pub fn new(basis: Arc<DipoleBasis>, s: f64, m0: S, mut terms: BTreeMap<WaveletId, S>) -> Self {
        terms.retain(|_, v| !v.is_zero());
        DCCoeffs {
            basis,
            s,
            m0,
            terms,
            tail_bound: 0.0,
        }
    }

    pub fn basis(&self) -> &Arc<DipoleBasis> {
        &self.basis
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn m0(&self) -> &S {
        &self.m0
    }

    pub fn get(&self, w: WaveletId) -> Option<&S> {
        self.terms.get(&w)
    }

    pub fn terms(&self) -> impl Iterator<Item = (WaveletId, &S)> {
        self.terms.iter().map(|(w, v)| (*w, v))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty() && self.m0.is_zero()
    }

    pub fn add_term(&mut self, w: WaveletId, v: S) {
        let e = self.terms.entry(w).or_insert_with(S::zero);
        *e = e.clone() + v;
        if e.is_zero() {
            self.terms.remove(&w);
        }
    }

    pub fn scale(&self, c: &S) -> Self {
        let terms = self.terms.iter().map(|(w, v)| (*w, v.clone() * c.clone())).collect();
        let mut out = DCCoeffs::new(self.basis.clone(), self.s, self.m0.clone() * c.clone(), terms);
        out.tail_bound = self.tail_bound * c.modulus();
        out
    }

    /// `self += c * other`.
    pub fn accumulate(&mut self, other: &Self, c: &S) {
        self.m0 = self.m0.clone() + other.m0.clone() * c.clone();
        for (w, v) in &other.terms {
            self.add_term(*w, v.clone() * c.clone());
        }
        self.tail_bound += c.modulus() * other.tail_bound;
    }
}

/// `|m_0| + sum |Q|^s |m_w|` with `Q` the owner of `w`.
pub fn dc_norm<S: Scalar>(coeffs: &DCCoeffs<S>) -> f64 {
    let grid = &coeffs.basis.grid;
    coeffs.m0.modulus()
        + coeffs
            .terms
            .iter()
            .map(|(w, m)| grid.measure_f64(w.owner).powf(coeffs.s) * m.modulus())
            .sum::<f64>()
}

/// Weighted norm of a list of increment terms, as in [`dc_norm`].
pub fn increment_norm(grid: &GoodGrid, terms: &[(Rational, WaveletId)], s: f64) -> f64 {
    terms
        .iter()
        .map(|(m, w)| grid.measure_f64(w.owner).powf(s) * crate::scalar::rational_to_f64(m).abs())
        .sum()
}

/// `M |Q_{k_0}|^s lambda^{sL} / (1 - lambda^s)`: bound on the weighted norm
/// of `sum_{i >= L}` increments of `A_J`, divided by `|J|`.
fn riemann_tail(basis: &DipoleBasis, j: Member, steps: usize, s: f64) -> f64 {
    let grid = &basis.grid;
    let q = match j {
        Member::Cell(c) => c,
        Member::Group { owner, .. } => owner,
    };
    let ls = grid.lambda_f64().powf(s);
    grid.max_pairs() as f64 * grid.measure_f64(q).powf(s) * ls.powi(steps as i32) / (1.0 - ls)
}

fn expand_member<S: Scalar>(basis: &DipoleBasis, j: Member, n: usize, sign: &S, out: &mut DCCoeffs<S>) -> Result<()> {
    let grid = &basis.grid;
    let scale = sign.clone() / S::from_measure(&j.measure(grid));
    let steps = n - j.reference_level(grid);
    for i in 0..steps {
        for (m, w) in riemann_increment(basis, j, i)? {
            out.add_term(w, S::from_measure(&m) * scale.clone());
        }
    }
    out.tail_bound += sign.modulus() * riemann_tail(basis, j, steps, out.s);
    Ok(())
}

fn truncation(grid: &GoodGrid, depth: Option<usize>) -> Result<usize> {
    let n = depth.unwrap_or(grid.depth());
    if n > grid.depth() {
        return Err(Error::DepthInsufficient {
            needed: n,
            depth: grid.depth(),
        });
    }
    Ok(n)
}

/// Dipole coefficients of a single wavelet, with increments up to level `depth`.
pub fn wavelet_to_dc<S: Scalar>(
    basis: &Arc<DipoleBasis>,
    w: WaveletId,
    s: f64,
    depth: Option<usize>,
) -> Result<DCCoeffs<S>> {
    let grid = &basis.grid;
    let n = truncation(grid, depth)?;
    if grid.level(w.owner) >= n {
        return Err(Error::DepthInsufficient {
            needed: grid.level(w.owner) + 1,
            depth: n,
        });
    }
    let mut out = DCCoeffs::new(basis.clone(), s, S::zero(), BTreeMap::new());
    out.add_term(w, S::one());
    let (p1, p2, _) = Member::of_pair(grid, w);
    expand_member(basis, p1, n, &S::one(), &mut out)?;
    expand_member(basis, p2, n, &-S::one(), &mut out)?;
    Ok(out)
}

fn check_basis_grid<S: Scalar>(phi: &DistCoeffs<S>, basis: &DipoleBasis) -> Result<()> {
    ensure_same_grid(phi.grid(), &basis.grid)
}

/// Dipole coefficients of a finitely supported distribution.
pub fn dc_decompose<S: Scalar>(
    phi: &DistCoeffs<S>,
    basis: &Arc<DipoleBasis>,
    depth: Option<usize>,
) -> Result<DCCoeffs<S>> {
    if phi.convention() != Convention::BesovMinus {
        return Err(Error::WrongConvention {
            expected: Convention::BesovMinus.name(),
            found: phi.convention().name(),
        });
    }
    check_basis_grid(phi, basis)?;
    let grid = &basis.grid;
    let n = truncation(grid, depth)?;
    let s = phi.s();
    let mut out = DCCoeffs::new(basis.clone(), s, phi.constant().clone(), BTreeMap::new());
    if !phi.constant().is_zero() {
        let root = Member::Cell(NodeId::ROOT);
        expand_member(basis, root, n, phi.constant(), &mut out)?;
    }
    for (w, a) in phi.terms() {
        if grid.level(w.owner) >= n {
            return Err(Error::DepthInsufficient {
                needed: grid.level(w.owner) + 1,
                depth: n,
            });
        }
        out.add_term(w, a.clone());
        let (p1, p2, _) = Member::of_pair(grid, w);
        expand_member(basis, p1, n, a, &mut out)?;
        expand_member(basis, p2, n, &-a.clone(), &mut out)?;
    }
    Ok(out)
}

/// `max(1 + (C_GR - 1)/(1 - lambda^s), 2 C_GR/(1 - lambda^s))`: bounds the
/// negative-smoothness norm of the basis Dirac and of each basis dipole
/// relative to its weight.
pub fn dc_to_dist_constant(grid: &GoodGrid, s: f64) -> f64 {
    let g = 1.0 - grid.lambda_f64().powf(s);
    let c = grid.c_gr() as f64;
    f64::max(1.0 + (c - 1.0) / g, 2.0 * c / g)
}

/// Expands the basis Dirac and dipoles into wavelet coefficients at level `n`.
pub fn dc_to_dist<S: Scalar>(coeffs: &DCCoeffs<S>, n: usize) -> Result<TruncatedDist<S>> {
    let basis = &coeffs.basis;
    let grid = &basis.grid;
    truncation(grid, Some(n))?;
    let s = coeffs.s;
    let mut config = ParticleConfig::new();
    config.push(coeffs.m0.clone(), basis.anchor(Member::Cell(NodeId::ROOT)));
    let mut dropped = 0.0;
    for (w, m) in &coeffs.terms {
        let (x, y) = basis.dipole(*w);
        if grid.level(w.owner) < n {
            config.push(m.clone(), x);
            config.push(-m.clone(), y);
        } else {
            // Both anchors share their level-n cell, so only tails remain.
            let q = grid.measure_f64(grid.locate(&x, n)?);
            dropped += 2.0 * m.modulus() * dirac_tail(grid, s, q);
        }
    }
    let mut out = config_coeffs(grid, &config, s, n)?;
    out.tail_bound += dropped + dc_to_dist_constant(grid, s) * coeffs.tail_bound;
    Ok(out)
}

/// Recovers the dipole coefficients of a level-`n` distribution from its
/// values on indicators, coarse to fine: `m_0 = gamma(1_I)` and
/// `m_w = gamma(1_{P_1}) - m_0 [x_I ∈ P_1] - sum m_{w'} ([x_{P_1'} ∈ P_1] - [x_{P_2'} ∈ P_1])`
/// over the coarser wavelets `w'`.
pub fn dc_recover<S: Scalar>(gamma: &DistCoeffs<S>, basis: &Arc<DipoleBasis>, n: usize) -> Result<DCCoeffs<S>> {
    check_basis_grid(gamma, basis)?;
    let grid = &basis.grid;
    let integrals = level_integrals(&synthesize(gamma, n)?);
    let value_on = |m: Member| -> S {
        match m {
            Member::Cell(c) => integrals[grid.level(c)][grid.position_in_level(c)].clone(),
            Member::Group { owner, start, end } => grid.children(owner)[start..end]
                .iter()
                .fold(S::zero(), |acc, &c| acc + integrals[grid.level(c)][grid.position_in_level(c)].clone()),
        }
    };
    let m0 = value_on(Member::Cell(NodeId::ROOT));
    let root_anchor = basis.anchor_position(Member::Cell(NodeId::ROOT));
    let mut found: BTreeMap<WaveletId, S> = BTreeMap::new();
    let mut anchors: HashMap<WaveletId, (usize, usize)> = HashMap::new();
    for w in all_wavelets(grid).into_iter().filter(|w| grid.level(w.owner) < n) {
        let (p1, p2, _) = Member::of_pair(grid, w);
        anchors.insert(w, (basis.anchor_position(p1), basis.anchor_position(p2)));
        let range = p1.leaf_range(grid);
        let inside = |pos: usize| if range.contains(&pos) { S::one() } else { S::zero() };
        let mut v = value_on(p1) - m0.clone() * inside(root_anchor);
        let mut cell = Some(w.owner);
        while let Some(r) = cell {
            for index in 0..grid.pairs(r).len() {
                let other = WaveletId { owner: r, index };
                if other == w {
                    continue;
                }
                if let Some(m) = found.get(&other) {
                    let (a1, a2) = anchors[&other];
                    v = v - m.clone() * (inside(a1) - inside(a2));
                }
            }
            cell = grid.parent(r);
        }
        if !v.is_zero() {
            found.insert(w, v);
        }
    }
    Ok(DCCoeffs::new(basis.clone(), gamma.s(), m0, found))
}

/// One Dirac term `c delta_z`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiracAtom<S> {
    pub c: S,
    pub z: Address,
}

/// One dipole term `b (delta_y - delta_x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DipoleAtom<S> {
    pub b: S,
    pub y: Address,
    pub x: Address,
}

/// A representation by Dirac masses and dipoles.
#[derive(Clone, Debug, PartialEq)]
pub struct DDRep<S> {
    pub diracs: Vec<DiracAtom<S>>,
    pub dipoles: Vec<DipoleAtom<S>>,
    /// Bound carried over from the decomposition that produced it.
    pub tail_bound: f64,
}

impl<S: Scalar> Default for DDRep<S> {
    fn default() -> Self {
        DDRep {
            diracs: Vec::new(),
            dipoles: Vec::new(),
            tail_bound: 0.0,
        }
    }
}

/// `sum |c_i| + sum |b_j| d(x_j, y_j)^s`.
pub fn dd_cost<S: Scalar>(grid: &GoodGrid, rep: &DDRep<S>, s: f64) -> Result<f64> {
    let mut cost: f64 = rep.diracs.iter().map(|a| a.c.modulus()).sum();
    for a in &rep.dipoles {
        let d = pseudo_distance(grid, &a.x, &a.y)?;
        cost += a.b.modulus() * d.distance_f64().powf(s);
    }
    Ok(cost)
}

/// Dirac and dipole atoms read off the dipole-basis coefficients.
pub fn dd_decompose<S: Scalar>(
    phi: &DistCoeffs<S>,
    basis: &Arc<DipoleBasis>,
    depth: Option<usize>,
) -> Result<DDRep<S>> {
    let dc = dc_decompose(phi, basis, depth)?;
    Ok(dd_from_dc(&dc))
}

pub fn dd_from_dc<S: Scalar>(dc: &DCCoeffs<S>) -> DDRep<S> {
    let basis = &dc.basis;
    let mut rep = DDRep {
        tail_bound: dc.tail_bound,
        ..Default::default()
    };
    if !dc.m0.is_zero() {
        rep.diracs.push(DiracAtom {
            c: dc.m0.clone(),
            z: basis.anchor(Member::Cell(NodeId::ROOT)),
        });
    }
    for (w, m) in &dc.terms {
        let (y, x) = basis.dipole(*w);
        rep.dipoles.push(DipoleAtom { b: m.clone(), y, x });
    }
    rep
}

/// Wavelet coefficients of a representation truncated at level `n`.
pub fn dd_to_dist<S: Scalar>(grid: &Arc<GoodGrid>, rep: &DDRep<S>, s: f64, n: usize) -> Result<TruncatedDist<S>> {
    let mut config = ParticleConfig::new();
    for a in &rep.diracs {
        config.push(a.c.clone(), a.z.clone());
    }
    for a in &rep.dipoles {
        config.push(a.b.clone(), a.y.clone());
        config.push(-a.b.clone(), a.x.clone());
    }
    config_coeffs(grid, &config, s, n)
}

/// Truncated Dirac mass at the basis anchor of the root.
pub fn basis_dirac<S: Scalar>(basis: &DipoleBasis, s: f64, n: usize) -> Result<TruncatedDist<S>> {
    dirac_coeffs(&basis.grid, &basis.anchor(Member::Cell(NodeId::ROOT)), s, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::besov::norm_minus_value;
    use crate::grid::{build_dyadic, build_random, build_uniform, RandomGridParams};
    use crate::haar::{analyze, StepFunction};
    use crate::particles::dipole_coeffs;
    use crate::scalar::ratio;
    use num_traits::{One, Zero};

    fn grids() -> Vec<Arc<GoodGrid>> {
        vec![
            Arc::new(build_dyadic(4)),
            Arc::new(build_uniform(3, 3)),
            Arc::new(
                build_random(&RandomGridParams {
                    seed: 3,
                    depth: 4,
                    max_children: 4,
                    lambda: ratio(7, 10),
                    lambda_star: ratio(1, 10),
                })
                .unwrap(),
            ),
        ]
    }

    fn rules() -> [AnchorRule; 3] {
        [
            AnchorRule::Leftmost,
            AnchorRule::SeededRandom { seed: 1 },
            AnchorRule::SeededRandom { seed: 99 },
        ]
    }

    #[test]
    fn leftmost_anchor_examples() {
        let g = Arc::new(build_dyadic(3));
        let b = build_dipole_basis(g.clone(), AnchorRule::Leftmost);
        assert_eq!(b.anchor(Member::Cell(NodeId::ROOT)).path, vec![0, 0, 0]);
        let one = g.node(&crate::grid::CellId(vec![1])).unwrap();
        assert_eq!(b.anchor(Member::Cell(one)).path, vec![1, 0, 0]);

        let q = Arc::new(build_uniform(2, 4));
        let b = build_dipole_basis(q.clone(), AnchorRule::Leftmost);
        let group = Member::of_children(&q, NodeId::ROOT, 0..2);
        assert_eq!(b.anchor(group).path, vec![0, 0]);
        let group = Member::of_children(&q, NodeId::ROOT, 2..4);
        assert_eq!(b.anchor(group).path, vec![2, 0]);
    }

    #[test]
    fn bases_are_compatible() {
        for g in grids() {
            for rule in rules() {
                let b = build_dipole_basis(g.clone(), rule);
                b.check_compatibility().unwrap();
            }
        }
    }

    #[test]
    fn random_bases_are_deterministic_and_differ_from_leftmost() {
        let g = grids()[2].clone();
        let a = build_dipole_basis(g.clone(), AnchorRule::SeededRandom { seed: 5 });
        let b = build_dipole_basis(g.clone(), AnchorRule::SeededRandom { seed: 5 });
        let l = build_dipole_basis(g.clone(), AnchorRule::Leftmost);
        let fam = family(&g);
        assert!(fam.iter().all(|&m| a.anchor(m) == b.anchor(m)));
        assert!(fam.iter().any(|&m| a.anchor(m) != l.anchor(m)));
    }

    #[test]
    fn broken_anchor_is_reported() {
        let g = Arc::new(build_dyadic(2));
        let mut b = build_dipole_basis(g.clone(), AnchorRule::Leftmost);
        let zero = g.children(NodeId::ROOT)[0];
        let last = g.level_nodes(2).unwrap()[1];
        b.anchors.insert(Member::Cell(zero), last);
        assert!(b.check_compatibility().is_err());
    }

    #[test]
    fn riemann_config_examples() {
        let g = Arc::new(build_dyadic(3));
        let b = build_dipole_basis(g.clone(), AnchorRule::Leftmost);
        let root = Member::Cell(NodeId::ROOT);
        let c0: ParticleConfig<Rational> = riemann_config(&b, root, 0).unwrap();
        assert_eq!(c0.canonical(), vec![(Address::new(vec![0, 0, 0]), Rational::one())]);
        let c1: ParticleConfig<Rational> = riemann_config(&b, root, 1).unwrap();
        assert_eq!(
            c1.canonical(),
            vec![
                (Address::new(vec![0, 0, 0]), ratio(1, 2)),
                (Address::new(vec![1, 0, 0]), ratio(1, 2)),
            ]
        );
        assert!(riemann_config::<Rational>(&b, root, 4).is_err());
    }

    #[test]
    fn dyadic_first_increment() {
        let g = Arc::new(build_dyadic(3));
        let b = build_dipole_basis(g.clone(), AnchorRule::Leftmost);
        let inc = riemann_increment(&b, Member::Cell(NodeId::ROOT), 0).unwrap();
        assert_eq!(inc, vec![(ratio(-1, 2), WaveletId { owner: NodeId::ROOT, index: 0 })]);
    }

    #[test]
    fn riemann_identity_is_exact() {
        for g in grids() {
            for rule in rules() {
                let b = build_dipole_basis(g.clone(), rule);
                for j in family(&g) {
                    let k0 = j.reference_level(&g);
                    for i in 0..g.depth().saturating_sub(k0) {
                        let a: ParticleConfig<Rational> = riemann_config(&b, j, i).unwrap();
                        let next: ParticleConfig<Rational> = riemann_config(&b, j, i + 1).unwrap();
                        let inc = riemann_increment(&b, j, i).unwrap();
                        let mut sum = a.clone();
                        sum.particles.extend(increment_config::<Rational>(&b, &inc).particles);
                        assert_eq!(sum.canonical(), next.canonical(), "{j:?} step {i}");
                        assert_eq!(next.total_mass(), j.measure(&g));
                    }
                }
            }
        }
    }

    #[test]
    fn increment_pair_counts_on_triadic_cells() {
        let g = Arc::new(build_uniform(3, 3));
        let b = build_dipole_basis(g.clone(), AnchorRule::Leftmost);
        for i in 0..3 {
            let inc = riemann_increment(&b, Member::Cell(NodeId::ROOT), i).unwrap();
            assert_eq!(inc.len(), 2 * 3usize.pow(i as u32));
        }
    }

    #[test]
    fn wavelet_round_trip_is_exact() {
        for g in grids() {
            for rule in rules() {
                let b = Arc::new(build_dipole_basis(g.clone(), rule));
                for w in all_wavelets(&g).into_iter().filter(|w| g.level(w.owner) < g.depth()) {
                    let dc: DCCoeffs<Rational> = wavelet_to_dc(&b, w, 0.5, None).unwrap();
                    assert_eq!(dc.get(w), Some(&Rational::one()));
                    let back = dc_to_dist(&dc, g.depth()).unwrap();
                    let mut terms = BTreeMap::new();
                    terms.insert(w, Rational::one());
                    let phi = DistCoeffs::from_plain(g.clone(), 0.5, Convention::BesovMinus, Rational::zero(), terms);
                    assert_eq!(back.coeffs, phi);
                }
            }
        }
    }

    #[test]
    fn dc_norm_examples() {
        let g = Arc::new(build_uniform(3, 3));
        let b = Arc::new(build_dipole_basis(g.clone(), AnchorRule::Leftmost));
        let w = WaveletId { owner: g.level_nodes(1).unwrap()[2], index: 1 };
        let mut terms = BTreeMap::new();
        terms.insert(w, 1.0);
        let dc = DCCoeffs::new(b.clone(), 0.5, 0.0, terms);
        assert!((dc_norm(&dc) - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let m0 = DCCoeffs::new(b.clone(), 0.5, 1.0, BTreeMap::new());
        assert_eq!(dc_norm(&m0), 1.0);
        assert!((dc_norm(&dc.scale(&-2.5)) - 2.5 * dc_norm(&dc)).abs() < 1e-15);
    }

    #[test]
    fn decompose_and_recover() {
        for g in grids() {
            let n = g.depth();
            let s = 0.5;
            let f = StepFunction::from_fn(g.clone(), n, |c| ratio((c.index() * 7 % 11) as i64 - 5, 3)).unwrap();
            let phi = analyze(&f, s).unwrap().with_convention(Convention::BesovMinus);
            for rule in rules() {
                let b = Arc::new(build_dipole_basis(g.clone(), rule));
                let dc = dc_decompose(&phi, &b, None).unwrap();
                assert_eq!(dc_to_dist(&dc, n).unwrap().coeffs, phi);
                let rec = dc_recover(&phi, &b, n).unwrap();
                assert_eq!(rec, dc);
            }
        }
    }

    #[test]
    fn basis_dipole_decomposes_to_itself() {
        let g = grids()[1].clone();
        let b = Arc::new(build_dipole_basis(g.clone(), AnchorRule::SeededRandom { seed: 4 }));
        let n = g.depth();
        for w in all_wavelets(&g).into_iter().filter(|w| g.level(w.owner) < n) {
            let (x, y) = b.dipole(w);
            let d: TruncatedDist<Rational> = dipole_coeffs(&g, &x, &y, 0.5, n).unwrap();
            let dc = dc_decompose(&d.coeffs, &b, None).unwrap();
            assert_eq!(dc.len(), 1);
            assert_eq!(dc.get(w), Some(&Rational::one()));
            assert!(dc.m0().is_zero());
        }
    }

    #[test]
    fn recovery_shortcut_agrees_only_without_the_dirac() {
        let g = grids()[0].clone();
        let n = g.depth();
        let b = Arc::new(build_dipole_basis(g.clone(), AnchorRule::Leftmost));
        let w = WaveletId { owner: NodeId::ROOT, index: 0 };
        let (x, y) = b.dipole(w);
        let d: TruncatedDist<Rational> = dipole_coeffs(&g, &x, &y, 0.5, n).unwrap();
        let rec = dc_recover(&d.coeffs, &b, n).unwrap();
        let (p1, _, _) = Member::of_pair(&g, w);
        let integrals = level_integrals(&synthesize(&d.coeffs, n).unwrap());
        let direct = integrals[g.level(match p1 {
            Member::Cell(c) => c,
            _ => unreachable!(),
        })][0]
            .clone();
        assert_eq!(rec.get(w), Some(&direct));

        let dirac: TruncatedDist<Rational> = basis_dirac(&b, 0.5, n).unwrap();
        let rec = dc_recover(&dirac.coeffs, &b, n).unwrap();
        assert_eq!(rec.m0(), &Rational::one());
        assert!(rec.len() == 0);
        // gamma(1_{P_1}) is 1 here, since the root anchor lies in P_1.
        let integrals = level_integrals(&synthesize(&dirac.coeffs, n).unwrap());
        assert_eq!(integrals[1][0], Rational::one());
    }

    #[test]
    fn dd_cost_examples() {
        let g = Arc::new(build_dyadic(3));
        let mut rep = DDRep::<f64>::default();
        rep.diracs.push(DiracAtom { c: 1.0, z: Address::new(vec![0, 1, 0]) });
        assert_eq!(dd_cost(&g, &rep, 0.5).unwrap(), 1.0);
        let mut rep = DDRep::<f64>::default();
        rep.dipoles.push(DipoleAtom { b: 1.0, y: Address::new(vec![0]), x: Address::new(vec![1]) });
        assert_eq!(dd_cost(&g, &rep, 0.5).unwrap(), 1.0);
        rep.dipoles.push(DipoleAtom { b: -2.0, y: Address::new(vec![0, 0]), x: Address::new(vec![0, 1]) });
        rep.diracs.push(DiracAtom { c: 0.5, z: Address::new(vec![1]) });
        let forward = dd_cost(&g, &rep, 0.5).unwrap();
        rep.dipoles.reverse();
        assert_eq!(forward, dd_cost(&g, &rep, 0.5).unwrap());
    }

    #[test]
    fn dd_cost_of_basis_representation_is_dc_norm() {
        let g = grids()[2].clone();
        let s = 0.75;
        let f = StepFunction::from_fn(g.clone(), g.depth(), |c| (c.index() as f64 * 0.37).cos()).unwrap();
        let phi = analyze(&f, s).unwrap().with_convention(Convention::BesovMinus);
        let b = Arc::new(build_dipole_basis(g.clone(), AnchorRule::SeededRandom { seed: 8 }));
        let dc = dc_decompose(&phi, &b, None).unwrap();
        let rep = dd_from_dc(&dc);
        assert!((dd_cost(&g, &rep, s).unwrap() - dc_norm(&dc)).abs() < 1e-12);
        let back = dd_to_dist(&g, &rep, s, g.depth()).unwrap();
        let diff = back.coeffs.sub(&phi).unwrap();
        assert!(norm_minus_value(&diff) < 1e-10);
    }
}
