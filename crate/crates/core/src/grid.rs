//! Good grids: finite partition trees of a probability space whose child/parent
//! measure ratios lie in `[lambda_star, lambda]`.
//!
//! A [`GoodGrid`] is immutable once built. Cells live in an arena in depth-first
//! preorder, so [`NodeId`] order is the depth-first order used by every dump and
//! merge. Child order is the construction order and is part of the grid's
//! identity: the Haar pair recursion depends on it.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::Range;

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::haar::{self, HaarPair};
use crate::scalar::{rational_to_f64, ratio, Rational};

/// Relative tolerance of the additivity and ratio checks in float mode.
pub const FLOAT_TOLERANCE: f64 = 1e-12;

/// Path of child indices from the root. The root is the empty path.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(pub Vec<usize>);

impl CellId {
    pub fn root() -> Self {
        CellId(Vec::new())
    }

    pub fn level(&self) -> usize {
        self.0.len()
    }

    pub fn child(&self, index: usize) -> Self {
        let mut path = self.0.clone();
        path.push(index);
        CellId(path)
    }

    /// Dot-separated path; the root is the empty string.
    pub fn to_path_text(&self) -> String {
        self.0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(".")
    }

    pub fn from_path_text(text: &str) -> Result<Self> {
        parse_path(text, '.').map(CellId)
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Parse a separator-delimited list of child indices. Empty text is the root.
pub fn parse_path(text: &str, sep: char) -> Result<Vec<usize>> {
    let t = text.trim().trim_start_matches('[').trim_end_matches(']');
    if t.trim().is_empty() {
        return Ok(Vec::new());
    }
    t.split(sep)
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad path component {p:?} in {text:?}")))
        })
        .collect()
}

/// Arena handle of a cell. Handles are only meaningful for the grid that issued them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

/// How an [`Address`] continues below the explicit part of its path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtensionRule {
    #[default]
    AlwaysFirstChild,
}

/// A point of the path space: a root-to-leaf path, continued by an extension
/// rule when it is shorter than the level being asked for.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Address {
    pub path: Vec<usize>,
    #[serde(default)]
    pub rule: ExtensionRule,
}

impl Address {
    pub fn new(path: Vec<usize>) -> Self {
        Address {
            path,
            rule: ExtensionRule::AlwaysFirstChild,
        }
    }

    /// Whether resolving to `level` needs the extension rule.
    pub fn is_extended_at(&self, level: usize) -> bool {
        self.path.len() < level
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.path)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureMode {
    /// Additivity and ratio bounds are checked exactly.
    #[default]
    Rational,
    /// Checks allow a relative error of [`FLOAT_TOLERANCE`].
    Float,
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub level: usize,
    pub index_in_parent: usize,
    pub measure: Rational,
    pub measure_f64: f64,
    pub pairs: Vec<HaarPair>,
}

/// Recursive description of a cell subtree, as stored in grid files.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSpec {
    pub measure: Rational,
    pub children: Vec<CellSpec>,
}

impl CellSpec {
    pub fn leaf(measure: Rational) -> Self {
        CellSpec {
            measure,
            children: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GoodGrid {
    nodes: Vec<Node>,
    levels: Vec<Vec<NodeId>>,
    depth: usize,
    lambda: Rational,
    lambda_star: Rational,
    c_gr: usize,
    mode: MeasureMode,
    fingerprint: u64,
}

impl PartialEq for GoodGrid {
    fn eq(&self, other: &Self) -> bool {
        self.fingerprint == other.fingerprint && self.to_spec() == other.to_spec()
    }
}

impl GoodGrid {
    /// Build a grid from a cell tree without checking the ratio axioms (see
    /// [`validate`]). Null or negative cells and leaves at different levels are
    /// rejected here because nothing downstream can represent them.
    pub fn from_spec(root: &CellSpec, lambda: Rational, lambda_star: Rational, mode: MeasureMode) -> Result<Self> {
        let mut nodes = Vec::new();
        push_subtree(&mut nodes, root, None, 0, 0)?;
        let depth = nodes.iter().map(|n| n.level).max().unwrap_or(0);
        if nodes.iter().any(|n| n.children.is_empty() && n.level != depth) {
            return Err(Error::InvalidGrid(format!(
                "all leaves must sit at the same level (depth {depth})"
            )));
        }
        let mut levels = vec![Vec::new(); depth + 1];
        for (i, n) in nodes.iter().enumerate() {
            levels[n.level].push(NodeId(i));
        }
        let c_gr = nodes.iter().map(|n| n.children.len()).max().unwrap_or(0);
        for i in 0..nodes.len() {
            let child_measures: Vec<Rational> =
                nodes[i].children.iter().map(|c| nodes[c.0].measure.clone()).collect();
            nodes[i].pairs = haar::build_pairs(NodeId(i), &nodes[i].measure, &child_measures);
        }
        let mut grid = GoodGrid {
            nodes,
            levels,
            depth,
            lambda,
            lambda_star,
            c_gr,
            mode,
            fingerprint: 0,
        };
        grid.fingerprint = grid.compute_fingerprint();
        Ok(grid)
    }

    /// Like [`GoodGrid::from_spec`], then rejects grids that fail [`validate`].
    pub fn from_spec_validated(
        root: &CellSpec,
        lambda: Rational,
        lambda_star: Rational,
        mode: MeasureMode,
    ) -> Result<Self> {
        let grid = Self::from_spec(root, lambda, lambda_star, mode)?;
        let report = validate(&grid);
        if !report.pass {
            return Err(Error::InvalidGrid(report.summary()));
        }
        Ok(grid)
    }

    pub fn to_spec(&self) -> CellSpec {
        fn rec(g: &GoodGrid, id: NodeId) -> CellSpec {
            CellSpec {
                measure: g.nodes[id.0].measure.clone(),
                children: g.nodes[id.0].children.iter().map(|&c| rec(g, c)).collect(),
            }
        }
        rec(self, NodeId::ROOT)
    }

    fn compute_fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.lambda.hash(&mut h);
        self.lambda_star.hash(&mut h);
        for n in &self.nodes {
            n.level.hash(&mut h);
            n.children.len().hash(&mut h);
            n.measure.hash(&mut h);
        }
        h.finish()
    }

    /// Structural hash; equal grids have equal fingerprints.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn lambda(&self) -> &Rational {
        &self.lambda
    }

    pub fn lambda_star(&self) -> &Rational {
        &self.lambda_star
    }

    pub fn lambda_f64(&self) -> f64 {
        rational_to_f64(&self.lambda)
    }

    pub fn lambda_star_f64(&self) -> f64 {
        rational_to_f64(&self.lambda_star)
    }

    /// Largest child count.
    pub fn c_gr(&self) -> usize {
        self.c_gr
    }

    /// Largest number of Haar pairs owned by one cell (`c_gr - 1`).
    pub fn max_pairs(&self) -> usize {
        self.nodes.iter().map(|n| n.pairs.len()).max().unwrap_or(0)
    }

    pub fn mode(&self) -> MeasureMode {
        self.mode
    }

    pub fn cell_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn measure(&self, id: NodeId) -> &Rational {
        &self.nodes[id.0].measure
    }

    pub fn measure_f64(&self, id: NodeId) -> f64 {
        self.nodes[id.0].measure_f64
    }

    pub fn level(&self, id: NodeId) -> usize {
        self.nodes[id.0].level
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.0].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].children
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id.0].children.is_empty()
    }

    pub fn index_in_parent(&self, id: NodeId) -> usize {
        self.nodes[id.0].index_in_parent
    }

    /// Haar pairs owned by `id`, in recursion order. Empty for leaves.
    pub fn pairs(&self, id: NodeId) -> &[HaarPair] {
        &self.nodes[id.0].pairs
    }

    /// Cells of level `k` in depth-first order.
    pub fn level_nodes(&self, k: usize) -> Result<&[NodeId]> {
        self.levels
            .get(k)
            .map(Vec::as_slice)
            .ok_or(Error::LevelOutOfRange {
                level: k,
                depth: self.depth,
            })
    }

    /// Position of `id` among the cells of its level.
    pub fn position_in_level(&self, id: NodeId) -> usize {
        let level = &self.levels[self.level(id)];
        level.binary_search(&id).expect("node belongs to its level")
    }

    /// The cells at `level` inside `id`, as a contiguous range of positions in
    /// [`GoodGrid::level_nodes`].
    pub fn descendant_range(&self, id: NodeId, level: usize) -> Range<usize> {
        let mut first = id;
        let mut last = id;
        for _ in self.level(id)..level {
            first = self.children(first)[0];
            last = *self.children(last).last().expect("internal cell");
        }
        self.position_in_level(first)..self.position_in_level(last) + 1
    }

    pub fn cell_id(&self, id: NodeId) -> CellId {
        let mut path = Vec::with_capacity(self.level(id));
        let mut cur = id;
        while let Some(p) = self.parent(cur) {
            path.push(self.index_in_parent(cur));
            cur = p;
        }
        path.reverse();
        CellId(path)
    }

    pub fn node(&self, cell: &CellId) -> Result<NodeId> {
        let mut cur = NodeId::ROOT;
        for &i in &cell.0 {
            cur = *self
                .children(cur)
                .get(i)
                .ok_or_else(|| Error::InvalidCell(cell.clone()))?;
        }
        Ok(cur)
    }

    /// Whether `inner` lies inside (or equals) `outer`.
    pub fn is_within(&self, inner: NodeId, outer: NodeId) -> bool {
        let lo = self.level(outer);
        if self.level(inner) < lo {
            return false;
        }
        let mut cur = inner;
        while self.level(cur) > lo {
            cur = self.parent(cur).expect("non-root has a parent");
        }
        cur == outer
    }

    /// Ancestor of `id` at `level` (`level <= level(id)`).
    pub fn ancestor_at(&self, id: NodeId, level: usize) -> NodeId {
        let mut cur = id;
        while self.level(cur) > level {
            cur = self.parent(cur).expect("non-root has a parent");
        }
        cur
    }

    /// The cells `Q_0 = I, Q_1, ..., Q_level` containing the address.
    pub fn resolve(&self, x: &Address, level: usize) -> Result<Vec<NodeId>> {
        if level > self.depth {
            return Err(Error::LevelOutOfRange {
                level,
                depth: self.depth,
            });
        }
        let mut out = Vec::with_capacity(level + 1);
        let mut cur = NodeId::ROOT;
        out.push(cur);
        for k in 0..level {
            let i = match x.path.get(k) {
                Some(&i) => i,
                None => match x.rule {
                    ExtensionRule::AlwaysFirstChild => 0,
                },
            };
            cur = *self.children(cur).get(i).ok_or_else(|| {
                Error::InvalidCell(CellId(x.path.iter().take(k + 1).copied().collect()))
            })?;
            out.push(cur);
        }
        Ok(out)
    }

    /// Level-`level` cell containing the address.
    pub fn locate(&self, x: &Address, level: usize) -> Result<NodeId> {
        Ok(*self.resolve(x, level)?.last().expect("path is nonempty"))
    }

    /// The address descending from `id` through first children to full depth.
    pub fn leftmost_address(&self, id: NodeId) -> Address {
        let mut path = self.cell_id(id).0;
        path.resize(self.depth, 0);
        Address::new(path)
    }

    /// The full-depth address of a level-`depth` cell.
    pub fn address_of(&self, id: NodeId) -> Address {
        let mut path = self.cell_id(id).0;
        path.resize(self.depth.max(path.len()), 0);
        Address::new(path)
    }

    /// Cell ids of level `k` in depth-first order.
    pub fn cells_at_level(&self, k: usize) -> Result<Vec<CellId>> {
        Ok(self.level_nodes(k)?.iter().map(|&n| self.cell_id(n)).collect())
    }
}

fn push_subtree(
    nodes: &mut Vec<Node>,
    spec: &CellSpec,
    parent: Option<NodeId>,
    level: usize,
    index_in_parent: usize,
) -> Result<NodeId> {
    if !spec.measure.is_positive() {
        return Err(Error::InvalidGrid(format!(
            "cell at level {level} has non-positive measure {}",
            spec.measure
        )));
    }
    let id = NodeId(nodes.len());
    nodes.push(Node {
        parent,
        children: Vec::with_capacity(spec.children.len()),
        level,
        index_in_parent,
        measure_f64: rational_to_f64(&spec.measure),
        measure: spec.measure.clone(),
        pairs: Vec::new(),
    });
    for (i, child) in spec.children.iter().enumerate() {
        let c = push_subtree(nodes, child, Some(id), level + 1, i)?;
        nodes[id.0].children.push(c);
    }
    Ok(id)
}

/// Uniform tree: every internal cell has `branching` children of equal measure.
pub fn build_uniform(depth: usize, branching: usize) -> GoodGrid {
    assert!(branching >= 2, "a cell needs at least two children");
    fn rec(level: usize, depth: usize, b: usize, measure: Rational) -> CellSpec {
        let children = if level == depth {
            Vec::new()
        } else {
            let child = &measure / Rational::from_integer(b.into());
            (0..b).map(|_| rec(level + 1, depth, b, child.clone())).collect()
        };
        CellSpec { measure, children }
    }
    let spec = rec(0, depth, branching, Rational::one());
    let r = ratio(1, branching as i64);
    GoodGrid::from_spec(&spec, r.clone(), r, MeasureMode::Rational).expect("uniform tree is well formed")
}

/// The dyadic grid: binary tree, level-`k` cells of measure `2^-k`.
pub fn build_dyadic(depth: usize) -> GoodGrid {
    build_uniform(depth, 2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomGridParams {
    pub seed: u64,
    pub depth: usize,
    pub max_children: usize,
    #[serde(with = "rational_text")]
    pub lambda: Rational,
    #[serde(with = "rational_text")]
    pub lambda_star: Rational,
}

/// Random grid with rational measures, deterministic in the seed.
///
/// Every cell gets between 2 and `max_children` children whose ratios to the
/// parent lie in `[lambda_star, lambda]`; the child count is drawn among the
/// counts `n` with `n * lambda_star <= 1 <= n * lambda`.
pub fn build_random(params: &RandomGridParams) -> Result<GoodGrid> {
    let RandomGridParams {
        seed,
        depth,
        max_children,
        ref lambda,
        ref lambda_star,
    } = *params;
    if max_children < 2 {
        return Err(Error::InfeasibleConstraints("max_children must be at least 2".into()));
    }
    if !lambda_star.is_positive() || lambda_star > lambda || *lambda >= Rational::one() {
        return Err(Error::InfeasibleConstraints(format!(
            "need 0 < lambda_star <= lambda < 1, got lambda_star={lambda_star}, lambda={lambda}"
        )));
    }
    let feasible: Vec<usize> = (2..=max_children)
        .filter(|&n| {
            let n = Rational::from_integer(n.into());
            &n * lambda_star <= Rational::one() && &n * lambda >= Rational::one()
        })
        .collect();
    if feasible.is_empty() {
        return Err(Error::InfeasibleConstraints(format!(
            "no child count in 2..={max_children} admits ratios in [{lambda_star}, {lambda}] summing to 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fn rec(
        rng: &mut ChaCha8Rng,
        level: usize,
        depth: usize,
        measure: Rational,
        feasible: &[usize],
        lambda: &Rational,
        lambda_star: &Rational,
    ) -> CellSpec {
        if level == depth {
            return CellSpec::leaf(measure);
        }
        let n = feasible[rng.random_range(0..feasible.len())];
        let ratios = random_split(rng, n, lambda, lambda_star);
        let children = ratios
            .into_iter()
            .map(|r| rec(rng, level + 1, depth, &measure * r, feasible, lambda, lambda_star))
            .collect();
        CellSpec { measure, children }
    }
    let spec = rec(&mut rng, 0, depth, Rational::one(), &feasible, lambda, lambda_star);
    GoodGrid::from_spec(&spec, lambda.clone(), lambda_star.clone(), MeasureMode::Rational)
}

/// `n` ratios in `[lambda_star, lambda]` summing to one. Starts every part at
/// `lambda_star` and water-fills the remaining mass by random integer weights.
fn random_split(rng: &mut ChaCha8Rng, n: usize, lambda: &Rational, lambda_star: &Rational) -> Vec<Rational> {
    let mut ratios = vec![lambda_star.clone(); n];
    let weights: Vec<Rational> = (0..n)
        .map(|_| Rational::from_integer(rng.random_range(1..=8u32).into()))
        .collect();
    let mut remaining = Rational::one() - Rational::from_integer(n.into()) * lambda_star;
    let mut active: Vec<usize> = (0..n).collect();
    while remaining.is_positive() && !active.is_empty() {
        let total: Rational = active.iter().map(|&i| weights[i].clone()).sum();
        let share = |i: usize| &remaining * &weights[i] / &total;
        let (capped, free): (Vec<usize>, Vec<usize>) =
            active.iter().partition(|&&i| &ratios[i] + share(i) > *lambda);
        if capped.is_empty() {
            for &i in &free {
                ratios[i] = &ratios[i] + share(i);
            }
            break;
        }
        for &i in &capped {
            remaining -= lambda - &ratios[i];
            ratios[i] = lambda.clone();
        }
        active = free;
    }
    ratios
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ViolationKind {
    RootMeasure {
        #[serde(with = "rational_text")]
        measure: Rational,
    },
    Additivity {
        #[serde(with = "rational_text")]
        measure: Rational,
        #[serde(with = "rational_text")]
        children_sum: Rational,
    },
    RatioAboveLambda {
        #[serde(with = "rational_text")]
        ratio: Rational,
    },
    RatioBelowLambdaStar {
        #[serde(with = "rational_text")]
        ratio: Rational,
    },
    DeclaredConstants,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub cell: CellId,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

/// Outcome of [`validate`]: the verdict plus the tightest constants the grid
/// actually satisfies.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub depth: usize,
    pub cells: usize,
    #[serde(with = "rational_text")]
    pub declared_lambda: Rational,
    #[serde(with = "rational_text")]
    pub declared_lambda_star: Rational,
    #[serde(with = "rational_text")]
    pub empirical_lambda: Rational,
    #[serde(with = "rational_text")]
    pub empirical_lambda_star: Rational,
    pub c_gr: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn summary(&self) -> String {
        match self.violations.first() {
            None => "ok".into(),
            Some(v) => format!(
                "{} violation(s), first at cell {}: {:?}",
                self.violations.len(),
                v.cell,
                v.kind
            ),
        }
    }
}

fn within_tolerance(a: &Rational, b: &Rational, mode: MeasureMode) -> bool {
    match mode {
        MeasureMode::Rational => a == b,
        MeasureMode::Float => {
            let (a, b) = (rational_to_f64(a), rational_to_f64(b));
            (a - b).abs() <= FLOAT_TOLERANCE * a.abs().max(b.abs())
        }
    }
}

fn leq(a: &Rational, b: &Rational, mode: MeasureMode) -> bool {
    a <= b || within_tolerance(a, b, mode)
}

/// Check the grid axioms. Failures are collected, never thrown.
pub fn validate(grid: &GoodGrid) -> ValidationReport {
    let mode = grid.mode;
    let mut violations = Vec::new();
    let zero = Rational::zero();
    let one = Rational::one();
    if !(grid.lambda_star > zero && grid.lambda_star <= grid.lambda && grid.lambda < one) {
        violations.push(Violation {
            cell: CellId::root(),
            kind: ViolationKind::DeclaredConstants,
        });
    }
    let root_measure = grid.measure(NodeId::ROOT);
    if !within_tolerance(root_measure, &one, mode) {
        violations.push(Violation {
            cell: CellId::root(),
            kind: ViolationKind::RootMeasure {
                measure: root_measure.clone(),
            },
        });
    }
    let mut emp_hi: Option<Rational> = None;
    let mut emp_lo: Option<Rational> = None;
    for id in grid.nodes() {
        if grid.is_leaf(id) {
            continue;
        }
        let parent = grid.measure(id);
        let sum: Rational = grid.children(id).iter().map(|&c| grid.measure(c).clone()).sum();
        if !within_tolerance(&sum, parent, mode) {
            violations.push(Violation {
                cell: grid.cell_id(id),
                kind: ViolationKind::Additivity {
                    measure: parent.clone(),
                    children_sum: sum,
                },
            });
        }
        for &c in grid.children(id) {
            let r = grid.measure(c) / parent;
            if !leq(&r, &grid.lambda, mode) {
                violations.push(Violation {
                    cell: grid.cell_id(c),
                    kind: ViolationKind::RatioAboveLambda { ratio: r.clone() },
                });
            }
            if !leq(&grid.lambda_star, &r, mode) {
                violations.push(Violation {
                    cell: grid.cell_id(c),
                    kind: ViolationKind::RatioBelowLambdaStar { ratio: r.clone() },
                });
            }
            if emp_hi.as_ref().is_none_or(|h| &r > h) {
                emp_hi = Some(r.clone());
            }
            if emp_lo.as_ref().is_none_or(|l| &r < l) {
                emp_lo = Some(r);
            }
        }
    }
    ValidationReport {
        pass: violations.is_empty(),
        depth: grid.depth,
        cells: grid.cell_count(),
        declared_lambda: grid.lambda.clone(),
        declared_lambda_star: grid.lambda_star.clone(),
        empirical_lambda: emp_hi.unwrap_or_else(Rational::zero),
        empirical_lambda_star: emp_lo.unwrap_or_else(Rational::zero),
        c_gr: grid.c_gr,
        violations,
    }
}

/// Result of [`pseudo_distance`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Separation {
    /// `|P|` for the deepest common cell `P`, or 0 when not separated.
    #[serde(with = "rational_text")]
    pub distance: Rational,
    /// False when the paths agree down to the grid depth.
    pub separated: bool,
    /// Deepest common cell, when separated.
    pub cell: Option<CellId>,
    pub level: Option<usize>,
}

impl Separation {
    pub fn distance_f64(&self) -> f64 {
        rational_to_f64(&self.distance)
    }
}

/// Pseudo-metric of the cell hierarchy: the measure of the deepest common cell
/// of `x` and `y`, provided they split at the next level within the grid.
pub fn pseudo_distance(grid: &GoodGrid, x: &Address, y: &Address) -> Result<Separation> {
    let px = grid.resolve(x, grid.depth)?;
    let py = grid.resolve(y, grid.depth)?;
    for k in 1..px.len() {
        if px[k] != py[k] {
            let p = px[k - 1];
            return Ok(Separation {
                distance: grid.measure(p).clone(),
                separated: true,
                cell: Some(grid.cell_id(p)),
                level: Some(k - 1),
            });
        }
    }
    Ok(Separation {
        distance: Rational::zero(),
        separated: false,
        cell: None,
        level: None,
    })
}

/// Serde helpers: rationals as `"p/q"` strings (numbers accepted on input).
pub mod rational_text {
    use serde::{Deserialize, Deserializer, Serializer};
    use serde_json::Value;

    use crate::scalar::{Rational, Scalar};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        match r.to_json() {
            Value::String(t) => s.serialize_str(&t),
            _ => unreachable!("rationals serialize as strings"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let v = Value::deserialize(d)?;
        Rational::from_json(&v).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_params(seed: u64) -> RandomGridParams {
        RandomGridParams {
            seed,
            depth: 3,
            max_children: 3,
            lambda: ratio(7, 10),
            lambda_star: ratio(15, 100),
        }
    }

    #[test]
    fn dyadic_depth_zero_is_single_cell() {
        let g = build_dyadic(0);
        assert_eq!(g.cell_count(), 1);
        assert_eq!(g.measure(NodeId::ROOT), &Rational::one());
        assert!(validate(&g).pass);
    }

    #[test]
    fn dyadic_depth_two() {
        let g = build_dyadic(2);
        assert_eq!(g.cell_count(), 7);
        for &n in g.level_nodes(2).unwrap() {
            assert_eq!(g.measure(n), &ratio(1, 4));
        }
    }

    #[test]
    fn dyadic_validates_with_forced_constants() {
        let r = validate(&build_dyadic(3));
        assert!(r.pass);
        assert_eq!(r.empirical_lambda, ratio(1, 2));
        assert_eq!(r.empirical_lambda_star, ratio(1, 2));
        assert_eq!(r.c_gr, 2);
    }

    #[test]
    fn random_grid_validates() {
        let g = build_random(&random_params(1)).unwrap();
        let r = validate(&g);
        assert!(r.pass, "{}", r.summary());
        for id in g.nodes().filter(|&n| !g.is_leaf(n)) {
            let n = g.children(id).len();
            assert!((2..=3).contains(&n));
        }
    }

    #[test]
    fn random_grid_is_deterministic() {
        let a = build_random(&random_params(9)).unwrap();
        let b = build_random(&random_params(9)).unwrap();
        assert_eq!(a, b);
        let c = build_random(&random_params(10)).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn forced_ratios_give_dyadic_measures() {
        for seed in 0..5 {
            let g = build_random(&RandomGridParams {
                seed,
                depth: 3,
                max_children: 2,
                lambda: ratio(1, 2),
                lambda_star: ratio(1, 2),
            })
            .unwrap();
            assert_eq!(g, build_dyadic(3));
        }
    }

    #[test]
    fn infeasible_ratio_bounds_are_rejected() {
        let err = build_random(&RandomGridParams {
            seed: 0,
            depth: 2,
            max_children: 2,
            lambda: ratio(7, 10),
            lambda_star: ratio(6, 10),
        })
        .unwrap_err();
        assert!(matches!(err, Error::InfeasibleConstraints(_)));
    }

    #[test]
    fn ratio_violation_is_reported_with_cell() {
        let spec = CellSpec {
            measure: Rational::one(),
            children: vec![CellSpec::leaf(ratio(9, 10)), CellSpec::leaf(ratio(1, 10))],
        };
        let g = GoodGrid::from_spec(&spec, ratio(7, 10), ratio(1, 20), MeasureMode::Rational).unwrap();
        let r = validate(&g);
        assert!(!r.pass);
        assert_eq!(r.violations[0].cell, CellId(vec![0]));
        assert!(matches!(r.violations[0].kind, ViolationKind::RatioAboveLambda { .. }));
    }

    #[test]
    fn additivity_violation_is_reported() {
        let spec = CellSpec {
            measure: Rational::one(),
            children: vec![CellSpec::leaf(ratio(49, 100)), CellSpec::leaf(ratio(1, 2))],
        };
        for mode in [MeasureMode::Rational, MeasureMode::Float] {
            let g = GoodGrid::from_spec(&spec, ratio(7, 10), ratio(1, 5), mode).unwrap();
            let r = validate(&g);
            assert!(!r.pass);
            assert!(matches!(r.violations[0].kind, ViolationKind::Additivity { .. }));
        }
    }

    #[test]
    fn null_cells_are_rejected_at_build_time() {
        let spec = CellSpec {
            measure: Rational::one(),
            children: vec![CellSpec::leaf(Rational::one()), CellSpec::leaf(Rational::zero())],
        };
        assert!(GoodGrid::from_spec(&spec, ratio(1, 2), ratio(1, 2), MeasureMode::Rational).is_err());
    }

    #[test]
    fn pseudo_distance_examples() {
        let g = build_dyadic(3);
        let d = |a: Vec<usize>, b: Vec<usize>| pseudo_distance(&g, &Address::new(a), &Address::new(b)).unwrap();
        assert_eq!(d(vec![0, 0, 0], vec![1, 0, 0]).distance, Rational::one());
        assert_eq!(d(vec![0, 0, 0], vec![0, 1, 0]).distance, ratio(1, 2));
        let same = d(vec![0, 1, 0], vec![0, 1, 0]);
        assert_eq!(same.distance, Rational::zero());
        assert!(!same.separated);
    }

    #[test]
    fn short_addresses_extend_through_first_children() {
        let g = build_dyadic(3);
        let a = Address::new(vec![1]);
        assert_eq!(g.cell_id(g.locate(&a, 3).unwrap()), CellId(vec![1, 0, 0]));
        assert!(g.resolve(&Address::new(vec![2]), 1).is_err());
    }

    #[test]
    fn cells_at_level_examples() {
        let g = build_dyadic(3);
        assert_eq!(g.cells_at_level(0).unwrap(), vec![CellId::root()]);
        let l2 = g.level_nodes(2).unwrap();
        assert_eq!(l2.len(), 4);
        let total: Rational = l2.iter().map(|&n| g.measure(n).clone()).sum();
        assert_eq!(total, Rational::one());
        assert!(matches!(g.cells_at_level(4), Err(Error::LevelOutOfRange { .. })));

        let r = build_random(&random_params(1)).unwrap();
        for k in 0..=r.depth() {
            let total: Rational = r.level_nodes(k).unwrap().iter().map(|&n| r.measure(n).clone()).sum();
            assert_eq!(total, Rational::one());
        }
    }

    #[test]
    fn descendant_ranges_are_contiguous() {
        let g = build_random(&random_params(3)).unwrap();
        for id in g.nodes() {
            let range = g.descendant_range(id, g.depth());
            for (pos, &leaf) in g.level_nodes(g.depth()).unwrap().iter().enumerate() {
                assert_eq!(range.contains(&pos), g.is_within(leaf, id));
            }
        }
    }
}
