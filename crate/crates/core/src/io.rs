//! File formats: grids and step functions as JSON, coefficient families as
//! CSV, particle configurations and Dirac/dipole representations as JSON.
//!
//! Coefficient CSV rows are `level,cell_path,pair_index,convention,s,re,im`,
//! with the cell path dot-joined (empty for the root). The constant term uses
//! pair index `I`. Plain-convention values are written exactly; the scaled
//! views are written as floats.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::besov::{Convention, DistCoeffs};
use crate::dipole_decomp::{DCCoeffs, DDRep, DipoleAtom, DiracAtom, DipoleBasis};
use crate::error::{Error, Result};
use crate::grid::{rational_text, Address, CellId, CellSpec, GoodGrid, MeasureMode};
use crate::haar::{StepFunction, WaveletId};
use crate::particles::{ParticleConfig, TruncatedDist};
use crate::scalar::{Rational, Scalar};

/// Version tag carried by every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CellJson {
    #[serde(with = "rational_text")]
    measure: Rational,
    #[serde(default)]
    children: Vec<CellJson>,
}

#[derive(Serialize, Deserialize)]
struct GridJson {
    #[serde(with = "rational_text")]
    lambda: Rational,
    #[serde(with = "rational_text")]
    lambda_star: Rational,
    #[serde(default, skip_serializing_if = "is_rational_mode")]
    mode: MeasureMode,
    cell: CellJson,
}

fn is_rational_mode(m: &MeasureMode) -> bool {
    *m == MeasureMode::Rational
}

fn to_cell_json(spec: &CellSpec) -> CellJson {
    CellJson {
        measure: spec.measure.clone(),
        children: spec.children.iter().map(to_cell_json).collect(),
    }
}

fn from_cell_json(cell: CellJson) -> CellSpec {
    CellSpec {
        measure: cell.measure,
        children: cell.children.into_iter().map(from_cell_json).collect(),
    }
}

pub fn grid_to_json(grid: &GoodGrid) -> String {
    let g = GridJson {
        lambda: grid.lambda().clone(),
        lambda_star: grid.lambda_star().clone(),
        mode: grid.mode(),
        cell: to_cell_json(&grid.to_spec()),
    };
    serde_json::to_string(&g).expect("grid serializes")
}

/// Parse a grid file and reject it unless it validates.
pub fn grid_from_json(text: &str) -> Result<GoodGrid> {
    let g: GridJson = serde_json::from_str(text)?;
    GoodGrid::from_spec_validated(&from_cell_json(g.cell), g.lambda, g.lambda_star, g.mode)
}

/// Parse a grid file without the ratio checks (for reporting on bad grids).
pub fn grid_from_json_unchecked(text: &str) -> Result<GoodGrid> {
    let g: GridJson = serde_json::from_str(text)?;
    GoodGrid::from_spec(&from_cell_json(g.cell), g.lambda, g.lambda_star, g.mode)
}

pub fn read_grid(path: &Path) -> Result<GoodGrid> {
    grid_from_json(&fs::read_to_string(path)?)
}

pub fn write_grid(path: &Path, grid: &GoodGrid) -> Result<()> {
    Ok(fs::write(path, grid_to_json(grid))?)
}

pub fn step_to_json<S: Scalar>(f: &StepFunction<S>) -> String {
    let values: Vec<Value> = f.values().iter().map(Scalar::to_json).collect();
    json!({ "level": f.level(), "values": values }).to_string()
}

pub fn step_from_json<S: Scalar>(grid: Arc<GoodGrid>, text: &str) -> Result<StepFunction<S>> {
    #[derive(Deserialize)]
    struct Raw {
        level: usize,
        values: Vec<Value>,
    }
    let raw: Raw = serde_json::from_str(text)?;
    let values = raw.values.iter().map(S::from_json).collect::<Result<Vec<S>>>()?;
    StepFunction::new(grid, raw.level, values)
}

#[derive(Debug, Serialize, Deserialize)]
struct CoeffRow {
    level: usize,
    cell_path: String,
    pair_index: String,
    convention: String,
    s: f64,
    re: String,
    im: String,
}

const CONSTANT_INDEX: &str = "I";

fn float_parts(z: Complex64) -> (String, String) {
    (format!("{:?}", z.re), format!("{:?}", z.im))
}

fn coeff_rows<S: Scalar>(c: &DistCoeffs<S>) -> Vec<CoeffRow> {
    let grid = c.grid();
    let conv = c.convention();
    let exact = conv == Convention::Plain;
    let parts = |v: &S| if exact { v.text_parts() } else { float_parts(v.to_c64()) };
    let mut rows = Vec::with_capacity(c.len() + 1);
    let (re, im) = parts(c.constant());
    rows.push(CoeffRow {
        level: 0,
        cell_path: String::new(),
        pair_index: CONSTANT_INDEX.into(),
        convention: conv.name().into(),
        s: c.s(),
        re,
        im,
    });
    for (w, a) in c.terms() {
        let (re, im) = if exact { a.text_parts() } else { float_parts(c.scaled(w)) };
        rows.push(CoeffRow {
            level: grid.level(w.owner),
            cell_path: grid.cell_id(w.owner).to_path_text(),
            pair_index: w.index.to_string(),
            convention: conv.name().into(),
            s: c.s(),
            re,
            im,
        });
    }
    rows
}

pub fn coeffs_to_csv<S: Scalar>(c: &DistCoeffs<S>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in coeff_rows(c) {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn coeffs_from_rows<S: Scalar>(grid: Arc<GoodGrid>, rows: Vec<CoeffRow>) -> Result<DistCoeffs<S>> {
    let first = rows.first().ok_or_else(|| Error::Parse("no coefficient rows".into()))?;
    let conv = Convention::parse(&first.convention)?;
    let s = first.s;
    let mut constant = S::zero();
    let mut plain = BTreeMap::new();
    let mut scaled = Vec::new();
    for row in &rows {
        if Convention::parse(&row.convention)? != conv || row.s != s {
            return Err(Error::Parse("mixed conventions or smoothness in one file".into()));
        }
        if row.pair_index == CONSTANT_INDEX {
            constant = S::from_text_parts(&row.re, &row.im)?;
            continue;
        }
        let cell = CellId::from_path_text(&row.cell_path)?;
        if cell.level() != row.level {
            return Err(Error::Parse(format!("level {} does not match path {}", row.level, row.cell_path)));
        }
        let index: usize = row
            .pair_index
            .parse()
            .map_err(|_| Error::Parse(format!("bad pair index {:?}", row.pair_index)))?;
        let w = WaveletId::from_cell(&grid, &cell, index)?;
        if conv == Convention::Plain {
            plain.insert(w, S::from_text_parts(&row.re, &row.im)?);
        } else {
            let z = Complex64::from_text_parts(&row.re, &row.im)?;
            scaled.push((w, z));
        }
    }
    if conv == Convention::Plain {
        Ok(DistCoeffs::from_plain(grid, s, conv, constant, plain))
    } else {
        DistCoeffs::from_scaled(grid, s, conv, constant, scaled)
    }
}

pub fn coeffs_from_csv<S: Scalar>(grid: Arc<GoodGrid>, text: &str) -> Result<DistCoeffs<S>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let rows = r.deserialize().collect::<std::result::Result<Vec<CoeffRow>, _>>()?;
    coeffs_from_rows(grid, rows)
}

/// A truncated distribution: the coefficient rows plus truncation metadata.
pub fn truncated_to_json<S: Scalar>(t: &TruncatedDist<S>) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "level": t.level,
        "s": t.coeffs.s(),
        "norm": t.norm().norm,
        "tail_bound": t.tail_bound,
        "extended": t.extended,
        "increment_norms": t.increment_norms,
        "coefficients": coeff_rows(&t.coeffs),
    })
}

/// Coefficients from either a CSV dump or a truncated-distribution JSON file
/// (whose tail bound is returned alongside).
pub fn coeffs_from_text<S: Scalar>(grid: Arc<GoodGrid>, text: &str) -> Result<(DistCoeffs<S>, f64)> {
    if text.trim_start().starts_with('{') {
        #[derive(Deserialize)]
        struct Raw {
            tail_bound: f64,
            coefficients: Vec<CoeffRow>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        Ok((coeffs_from_rows(grid, raw.coefficients)?, raw.tail_bound))
    } else {
        Ok((coeffs_from_csv(grid, text)?, 0.0))
    }
}

fn pair_json<S: Scalar>(v: &S) -> Value {
    let (re, im) = v.text_parts();
    if S::EXACT {
        json!([re, im])
    } else {
        let num = |t: &str| t.parse::<f64>().ok().and_then(serde_json::Number::from_f64).map_or(Value::Null, Value::Number);
        json!([num(&re), num(&im)])
    }
}

pub fn particles_to_json<S: Scalar>(config: &ParticleConfig<S>) -> String {
    let items: Vec<Value> = config
        .particles
        .iter()
        .map(|p| json!({ "mass": pair_json(&p.mass), "path": p.location.path }))
        .collect();
    Value::Array(items).to_string()
}

pub fn particles_from_json<S: Scalar>(text: &str) -> Result<ParticleConfig<S>> {
    #[derive(Deserialize)]
    struct Raw {
        mass: Value,
        path: Vec<usize>,
    }
    let raw: Vec<Raw> = serde_json::from_str(text)?;
    let mut config = ParticleConfig::new();
    for p in raw {
        config.push(S::from_json(&p.mass)?, Address::new(p.path));
    }
    Ok(config)
}

#[derive(Serialize, Deserialize)]
struct DcRow {
    owner_path: String,
    pair_index: String,
    m_re: String,
    m_im: String,
}

const M0_INDEX: &str = "m0";

pub fn dc_to_csv<S: Scalar>(c: &DCCoeffs<S>) -> Result<String> {
    let grid = c.basis().grid();
    let mut w = csv::Writer::from_writer(Vec::new());
    let (re, im) = c.m0().text_parts();
    w.serialize(DcRow {
        owner_path: String::new(),
        pair_index: M0_INDEX.into(),
        m_re: re,
        m_im: im,
    })?;
    for (id, m) in c.terms() {
        let (re, im) = m.text_parts();
        w.serialize(DcRow {
            owner_path: grid.cell_id(id.owner).to_path_text(),
            pair_index: id.index.to_string(),
            m_re: re,
            m_im: im,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn dc_from_csv<S: Scalar>(basis: Arc<DipoleBasis>, s: f64, text: &str) -> Result<DCCoeffs<S>> {
    let grid = basis.grid().clone();
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut m0 = S::zero();
    let mut terms = BTreeMap::new();
    for row in r.deserialize::<DcRow>() {
        let row = row?;
        let v = S::from_text_parts(&row.m_re, &row.m_im)?;
        if row.pair_index == M0_INDEX {
            m0 = v;
            continue;
        }
        let index: usize = row
            .pair_index
            .parse()
            .map_err(|_| Error::Parse(format!("bad pair index {:?}", row.pair_index)))?;
        let w = WaveletId::from_cell(&grid, &CellId::from_path_text(&row.owner_path)?, index)?;
        terms.insert(w, v);
    }
    Ok(DCCoeffs::new(basis, s, m0, terms))
}

pub fn dd_to_json<S: Scalar>(grid: &GoodGrid, rep: &DDRep<S>, s: f64) -> Result<String> {
    let diracs: Vec<Value> = rep
        .diracs
        .iter()
        .map(|a| json!({ "c": pair_json(&a.c), "z": a.z.path }))
        .collect();
    let dipoles: Vec<Value> = rep
        .dipoles
        .iter()
        .map(|a| json!({ "b": pair_json(&a.b), "y": a.y.path, "x": a.x.path }))
        .collect();
    let cost = crate::dipole_decomp::dd_cost(grid, rep, s)?;
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "s": s,
        "cost": cost,
        "tail_bound": rep.tail_bound,
        "diracs": diracs,
        "dipoles": dipoles,
    })
    .to_string())
}

pub fn dd_from_json<S: Scalar>(text: &str) -> Result<DDRep<S>> {
    #[derive(Deserialize)]
    struct RawDirac {
        c: Value,
        z: Vec<usize>,
    }
    #[derive(Deserialize)]
    struct RawDipole {
        b: Value,
        y: Vec<usize>,
        x: Vec<usize>,
    }
    #[derive(Deserialize)]
    struct Raw {
        #[serde(default)]
        tail_bound: f64,
        diracs: Vec<RawDirac>,
        dipoles: Vec<RawDipole>,
    }
    let raw: Raw = serde_json::from_str(text)?;
    let mut rep = DDRep {
        tail_bound: raw.tail_bound,
        ..Default::default()
    };
    for d in raw.diracs {
        rep.diracs.push(DiracAtom {
            c: S::from_json(&d.c)?,
            z: Address::new(d.z),
        });
    }
    for d in raw.dipoles {
        rep.dipoles.push(DipoleAtom {
            b: S::from_json(&d.b)?,
            y: Address::new(d.y),
            x: Address::new(d.x),
        });
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dipole_decomp::{build_dipole_basis, dc_decompose, dd_from_dc, AnchorRule};
    use crate::grid::{build_dyadic, build_random, build_uniform, RandomGridParams};
    use crate::haar::analyze;
    use crate::particles::dirac_coeffs;
    use crate::scalar::{ratio, ComplexRational};

    fn random_grid() -> GoodGrid {
        build_random(&RandomGridParams {
            seed: 11,
            depth: 3,
            max_children: 3,
            lambda: ratio(7, 10),
            lambda_star: ratio(3, 20),
        })
        .unwrap()
    }

    #[test]
    fn grid_round_trip() {
        for g in [build_dyadic(3), build_uniform(2, 3), random_grid()] {
            let text = grid_to_json(&g);
            assert_eq!(grid_from_json(&text).unwrap(), g);
        }
        let text = grid_to_json(&build_dyadic(1));
        assert_eq!(
            text,
            r#"{"lambda":"1/2","lambda_star":"1/2","cell":{"measure":"1","children":[{"measure":"1/2","children":[]},{"measure":"1/2","children":[]}]}}"#
        );
    }

    #[test]
    fn grid_loader_validates() {
        let bad = r#"{"lambda":"1/2","lambda_star":"1/2","cell":{"measure":"1","children":[{"measure":"1/2"},{"measure":"49/100"}]}}"#;
        assert!(matches!(grid_from_json(bad), Err(Error::InvalidGrid(_))));
        assert!(grid_from_json_unchecked(bad).is_ok());
        let float = r#"{"lambda":0.5,"lambda_star":0.5,"mode":"float","cell":{"measure":1,"children":[{"measure":0.5},{"measure":0.5}]}}"#;
        assert_eq!(grid_from_json(float).unwrap().mode(), MeasureMode::Float);
    }

    #[test]
    fn step_function_round_trip() {
        let g = Arc::new(build_uniform(2, 3));
        let f = StepFunction::from_fn(g.clone(), 2, |n| ratio(n.index() as i64 - 4, 7)).unwrap();
        let text = step_to_json(&f);
        assert_eq!(step_from_json::<Rational>(g.clone(), &text).unwrap(), f);
        let z = StepFunction::from_fn(g.clone(), 1, |n| ComplexRational::new(ratio(1, 3), ratio(n.index() as i64, 2))).unwrap();
        assert_eq!(step_from_json::<ComplexRational>(g.clone(), &step_to_json(&z)).unwrap(), z);
        assert!(step_from_json::<Rational>(g, r#"{"level":1,"values":[1,2]}"#).is_err());
    }

    #[test]
    fn coefficient_csv_round_trip() {
        let g = Arc::new(random_grid());
        let f = StepFunction::from_fn(g.clone(), 3, |n| ratio(n.index() as i64 % 5, 3)).unwrap();
        let c = analyze(&f, 0.5).unwrap();
        let plain = c.with_convention(Convention::Plain);
        let back: DistCoeffs<Rational> = coeffs_from_csv(g.clone(), &coeffs_to_csv(&plain).unwrap()).unwrap();
        assert_eq!(back, plain);
        let text = coeffs_to_csv(&c).unwrap();
        assert!(text.starts_with("level,cell_path,pair_index,convention,s,re,im\n0,,I,bplus,0.5,"));
        let back: DistCoeffs<f64> = coeffs_from_csv(g.clone(), &text).unwrap();
        for (w, a) in c.terms() {
            let a = crate::scalar::rational_to_f64(a);
            assert!((back.plain(w).unwrap() - a).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn truncated_json_reads_as_coefficients() {
        let g = Arc::new(build_dyadic(4));
        let t: TruncatedDist<f64> = dirac_coeffs(&g, &Address::new(vec![1, 0, 1, 1]), 0.5, 4).unwrap();
        let text = truncated_to_json(&t).to_string();
        let (c, tail) = coeffs_from_text::<f64>(g, &text).unwrap();
        assert_eq!(tail, t.tail_bound);
        for (w, a) in t.coeffs.terms() {
            assert!((c.plain(w).unwrap() - a).abs() < 1e-12);
        }
    }

    #[test]
    fn particle_json_round_trip() {
        let text = r#"[{"mass":[1,0],"path":[0,1]},{"mass":["-1/2","3"],"path":[]}]"#;
        let c: ParticleConfig<ComplexRational> = particles_from_json(text).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.particles[1].mass, ComplexRational::new(ratio(-1, 2), ratio(3, 1)));
        let again: ParticleConfig<ComplexRational> = particles_from_json(&particles_to_json(&c)).unwrap();
        assert_eq!(again, c);
        assert!(particles_from_json::<Rational>(text).is_err());
    }

    #[test]
    fn dc_and_dd_round_trip() {
        let g = Arc::new(build_uniform(2, 3));
        let f = StepFunction::from_fn(g.clone(), 2, |n| ratio(n.index() as i64 % 4, 5)).unwrap();
        let phi = analyze(&f, 0.5).unwrap().with_convention(Convention::BesovMinus);
        let b = Arc::new(build_dipole_basis(g.clone(), AnchorRule::Leftmost));
        let dc = dc_decompose(&phi, &b, None).unwrap();
        let back: DCCoeffs<Rational> = dc_from_csv(b.clone(), 0.5, &dc_to_csv(&dc).unwrap()).unwrap();
        assert_eq!(back, dc);
        let rep = dd_from_dc(&dc);
        let text = dd_to_json(&g, &rep, 0.5).unwrap();
        let again: DDRep<Rational> = dd_from_json(&text).unwrap();
        assert_eq!(again.diracs, rep.diracs);
        assert_eq!(again.dipoles, rep.dipoles);
    }
}
