//! TOML problem files.
//!
//! ```toml
//! A = [[0.9, 0.1], [0.0, 0.8]]
//! B = [[0.0], [1.0]]
//! Q = [[1.0, 0.0], [0.0, 1.0]]
//! R = [[1.0]]
//! z = [0.0, 0.0]        # optional, zero by default
//! v = [0.0]             # optional
//! c = 0.0               # optional
//!
//! [[constraints]]
//! kind = "box"          # box | interval | halfspace | soc_cone | full_space
//! block = "state"
//! lower = [-1.0, -1.0]
//! upper = [1.0, 1.0]
//!
//! [xtp]                 # optional initial set for `scan`
//! kind = "ball"
//! center = [0.0, 0.0]
//! radius = 1.0
//!
//! [witness]             # optional, defaults to the constant steady control
//! policy = "zero"
//! m = 1
//! horizon = 200
//! skip = 0
//!
//! [tolerances]          # optional overrides
//! ocp_abs = 1e-8
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dissipativity::RateChoice;
use crate::error::{Error, Result};
use crate::model::{Block, ConstraintSet, Piece, Problem};
use crate::ocp::OcpOptions;
use crate::scenarios;
use crate::steady_state::certified_steady_state;
use crate::turnpike::{prepare_scan, turnpike_scan, BuiltinPolicy, InitialSet, TurnpikeReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(default)]
    pub z: Vec<f64>,
    #[serde(default)]
    pub v: Vec<f64>,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub constraints: Vec<PieceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xtp: Option<InitialSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// One constraint piece as written in the file. Indices are 0-based into
/// the stacked vector `(x, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PieceSpec {
    Box {
        block: Block,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Interval {
        coord: usize,
        lower: f64,
        upper: f64,
    },
    Halfspace {
        normal: Vec<f64>,
        offset: f64,
    },
    SocCone {
        axis: usize,
        radial: Vec<usize>,
    },
    FullSpace,
}

impl From<&Piece> for PieceSpec {
    fn from(p: &Piece) -> Self {
        match p.clone() {
            Piece::Box { block, lower, upper } => PieceSpec::Box { block, lower, upper },
            Piece::Interval { coord, lower, upper } => PieceSpec::Interval { coord, lower, upper },
            Piece::Halfspace { normal, offset } => PieceSpec::Halfspace { normal, offset },
            Piece::SecondOrderCone { axis, radial } => PieceSpec::SocCone { axis, radial },
            Piece::FullSpace => PieceSpec::FullSpace,
        }
    }
}

impl From<&PieceSpec> for Piece {
    fn from(p: &PieceSpec) -> Self {
        match p.clone() {
            PieceSpec::Box { block, lower, upper } => Piece::Box { block, lower, upper },
            PieceSpec::Interval { coord, lower, upper } => Piece::Interval { coord, lower, upper },
            PieceSpec::Halfspace { normal, offset } => Piece::Halfspace { normal, offset },
            PieceSpec::SocCone { axis, radial } => Piece::SecondOrderCone { axis, radial },
            PieceSpec::FullSpace => Piece::FullSpace,
        }
    }
}

fn default_witness_horizon() -> usize {
    200
}

/// Feedback law whose closed loop provides the decay envelope of a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessSpec {
    #[serde(flatten)]
    pub policy: BuiltinPolicy,
    #[serde(default = "default_witness_horizon")]
    pub horizon: usize,
    /// Leading steps left out of the envelope fit.
    #[serde(default)]
    pub skip: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub ocp_abs: f64,
    pub ocp_rel: f64,
    /// Membership tolerance of returned trajectories.
    pub admissibility: f64,
    pub ocp_max_iterations: usize,
    /// Sample count of the dissipation check.
    pub samples: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        let ocp = OcpOptions::default();
        Self {
            ocp_abs: ocp.abs_tol,
            ocp_rel: ocp.rel_tol,
            admissibility: ocp.admissibility_tol,
            ocp_max_iterations: ocp.max_iterations,
            samples: crate::dissipativity::DEFAULT_SAMPLES,
        }
    }
}

impl Tolerances {
    pub fn ocp_options(&self) -> OcpOptions {
        OcpOptions {
            abs_tol: self.ocp_abs,
            rel_tol: self.ocp_rel,
            admissibility_tol: self.admissibility,
            max_iterations: self.ocp_max_iterations,
            ..OcpOptions::default()
        }
    }
}

fn bad(msg: String) -> Error {
    Error::Config(msg)
}

fn matrix(field: &str, rows: &[Vec<f64>], want_rows: usize, want_cols: Option<usize>) -> Result<DMatrix<f64>> {
    if rows.len() != want_rows {
        return Err(bad(format!("{field}: expected {want_rows} rows, got {}", rows.len())));
    }
    let cols = want_cols.unwrap_or_else(|| rows.first().map_or(0, Vec::len));
    if cols == 0 {
        return Err(bad(format!("{field}: rows must not be empty")));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(bad(format!("{field}: row {i} has {} entries, expected {cols}", row.len())));
        }
        if let Some(j) = row.iter().position(|x| !x.is_finite()) {
            return Err(bad(format!("{field}: entry ({i}, {j}) is not finite")));
        }
    }
    Ok(DMatrix::from_fn(want_rows, cols, |i, j| rows[i][j]))
}

fn vector(field: &str, values: &[f64], len: usize) -> Result<DVector<f64>> {
    match values.len() {
        0 => Ok(DVector::zeros(len)),
        k if k == len => Ok(DVector::from_column_slice(values)),
        k => Err(bad(format!("{field}: expected {len} entries, got {k}"))),
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| bad(e.to_string()))
    }

    /// Problem data with dimension checks reported per field.
    pub fn problem(&self) -> Result<Problem> {
        let n = self.a.len();
        if n == 0 {
            return Err(bad("A: matrix is empty".into()));
        }
        let a = matrix("A", &self.a, n, Some(n))?;
        let b = matrix("B", &self.b, n, None)?;
        let m = b.ncols();
        let q = matrix("Q", &self.q, n, Some(n))?;
        let r = matrix("R", &self.r, m, Some(m))?;
        let z = vector("z", &self.z, n)?;
        let v = vector("v", &self.v, m)?;
        if !self.c.is_finite() {
            return Err(bad("c: not finite".into()));
        }
        let pieces: Vec<Piece> = self.constraints.iter().map(Piece::from).collect();
        for (i, piece) in pieces.iter().enumerate() {
            ConstraintSet::new(n, m, vec![piece.clone()]).map_err(|e| bad(format!("constraints[{i}]: {e}")))?;
        }
        let set = ConstraintSet::new(n, m, pieces).map_err(|e| bad(format!("constraints: {e}")))?;
        Problem::new(a, b, q, r, z, v, self.c, set).map_err(|e| bad(format!("problem data: {e}")))
    }

    pub fn from_problem(p: &Problem) -> Self {
        Self {
            a: rows_of(p.a()),
            b: rows_of(p.b()),
            q: rows_of(p.q()),
            r: rows_of(p.r()),
            z: p.z().iter().copied().collect(),
            v: p.v().iter().copied().collect(),
            c: p.offset(),
            constraints: p.set().pieces().iter().map(PieceSpec::from).collect(),
            xtp: None,
            witness: None,
            tolerances: Tolerances::default(),
        }
    }

    /// Configuration of a built-in scenario, with its initial set and witness.
    pub fn builtin(name: &str) -> Option<Self> {
        let scenario = scenarios::by_name(name)?;
        let mut config = Self::from_problem(&scenario.problem);
        config.xtp = Some(scenario.initial_set);
        config.witness = Some(match name {
            "example2" => WitnessSpec {
                policy: BuiltinPolicy::ConeFeedback,
                horizon: default_witness_horizon(),
                skip: 5,
            },
            _ => WitnessSpec {
                policy: BuiltinPolicy::Zero { m: scenario.problem.m() },
                horizon: default_witness_horizon(),
                skip: 0,
            },
        });
        Some(config)
    }

    /// Turnpike scan over `samples` draws of `initial_set`, using the
    /// configured witness or else the constant steady control.
    pub fn scan(
        &self,
        p: &Problem,
        initial_set: &InitialSet,
        samples: usize,
        horizons: &[usize],
        eps: &[f64],
        seed: u64,
    ) -> Result<TurnpikeReport> {
        let points = initial_set.sample(p, samples, seed)?;
        let steady = certified_steady_state(p)?;
        let (policy, witness_horizon, skip) = match &self.witness {
            Some(w) => (w.policy.clone(), w.horizon, w.skip),
            None => (BuiltinPolicy::Constant { u: steady.u_e.clone() }, default_witness_horizon(), 0),
        };
        let mut setup = prepare_scan(p, &policy, &points, witness_horizon, skip, RateChoice::Auto)?;
        setup.ocp = self.tolerances.ocp_options();
        turnpike_scan(p, &setup, &points, horizons, eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
A = [[0.5]]
B = [[1.0]]
Q = [[1.0]]
R = [[1.0]]
"#;

    #[test]
    fn minimal_file_defaults() {
        let c = Config::parse(MINIMAL).unwrap();
        let p = c.problem().unwrap();
        assert_eq!((p.n(), p.m()), (1, 1));
        assert_eq!(p.z()[0], 0.0);
        assert!(c.constraints.is_empty() && c.xtp.is_none());
        assert_eq!(c.tolerances, Tolerances::default());
    }

    #[test]
    fn builtin_round_trip() {
        for name in ["example1", "example2"] {
            let config = Config::builtin(name).unwrap();
            let text = config.to_toml().unwrap();
            let back = Config::parse(&text).unwrap();
            assert_eq!(back, config);
            assert_eq!(back.problem().unwrap(), scenarios::by_name(name).unwrap().problem);
        }
    }

    #[test]
    fn dimension_errors_name_the_field() {
        let text = MINIMAL.replace("B = [[1.0]]", "B = [[1.0], [2.0]]");
        let err = Config::parse(&text).unwrap().problem().unwrap_err().to_string();
        assert!(err.contains("B: expected 1 rows"), "{err}");
        let text = format!("{MINIMAL}z = [1.0, 2.0]\n");
        let err = Config::parse(&text).unwrap().problem().unwrap_err().to_string();
        assert!(err.contains("z: expected 1 entries"), "{err}");
        let text = format!("{MINIMAL}[[constraints]]\nkind = \"interval\"\ncoord = 5\nlower = 0.0\nupper = 1.0\n");
        let err = Config::parse(&text).unwrap().problem().unwrap_err().to_string();
        assert!(err.contains("constraints[0]"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = Config::parse("A = [[0.5]\nB = 1").unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
        let err = Config::parse(&format!("{MINIMAL}bogus = 1\n")).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn non_psd_weight_rejected() {
        let text = MINIMAL.replace("Q = [[1.0]]", "Q = [[-1.0]]");
        assert!(Config::parse(&text).unwrap().problem().is_err());
    }
}
