use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Piece, Problem};

const MEMBERSHIP_TOL: f64 = 1e-10;
const MAX_DRAWS_PER_POINT: usize = 10_000;

/// Set of initial states scanned for the turnpike property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSet {
    /// Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `{x ∈ X : x_axis ≤ height}` for the first state cone piece.
    ConeSlice { height: f64 },
    Points { points: Vec<Vec<f64>> },
}

impl InitialSet {
    /// Draw `count` points of the set that also lie in `X`. Explicit point
    /// lists are returned as given.
    pub fn sample(&self, problem: &Problem, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
        let n = problem.n();
        if let InitialSet::Points { points } = self {
            return points
                .iter()
                .map(|p| {
                    if p.len() == n {
                        Ok(DVector::from_column_slice(p))
                    } else {
                        Err(Error::Dimension {
                            context: "initial point",
                            expected: n,
                            got: p.len(),
                        })
                    }
                })
                .collect();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lower, upper) = self.bounding_box(problem)?;
        let set = problem.set();
        let mut out = Vec::with_capacity(count);
        let mut draws = 0;
        while out.len() < count {
            if draws >= MAX_DRAWS_PER_POINT * count.max(1) {
                return Err(Error::Config(format!(
                    "initial set {self:?} has no points in X after {draws} draws"
                )));
            }
            draws += 1;
            let x = DVector::from_fn(n, |i, _| {
                if upper[i] > lower[i] {
                    rng.random_range(lower[i]..=upper[i])
                } else {
                    lower[i]
                }
            });
            if self.contains(problem, &x) && set.contains_state(&x, MEMBERSHIP_TOL) {
                out.push(x);
            }
        }
        Ok(out)
    }

    fn contains(&self, problem: &Problem, x: &DVector<f64>) -> bool {
        match self {
            InitialSet::Ball { center, radius } => {
                (x - DVector::from_column_slice(center)).norm() <= *radius
            }
            InitialSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(xi, (lo, hi))| *lo <= *xi && *xi <= *hi),
            InitialSet::ConeSlice { height } => match state_cone(problem) {
                Some((axis, _)) => x[axis] <= *height,
                None => false,
            },
            InitialSet::Points { points } => points.iter().any(|p| p.as_slice() == x.as_slice()),
        }
    }

    fn bounding_box(&self, problem: &Problem) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = problem.n();
        let check = |len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(Error::Dimension {
                    context: "initial set",
                    expected: n,
                    got: len,
                })
            }
        };
        match self {
            InitialSet::Ball { center, radius } => {
                check(center.len())?;
                Ok((
                    center.iter().map(|c| c - radius).collect(),
                    center.iter().map(|c| c + radius).collect(),
                ))
            }
            InitialSet::Box { lower, upper } => {
                check(lower.len())?;
                check(upper.len())?;
                Ok((lower.clone(), upper.clone()))
            }
            InitialSet::ConeSlice { height } => {
                let (axis, radial) = state_cone(problem).ok_or_else(|| {
                    Error::Config("cone slice requires a second-order cone piece on the state".into())
                })?;
                let bounds = problem.set().coordinate_bounds();
                let mut lower: Vec<f64> = (0..n).map(|i| bounds[i].0.max(-height)).collect();
                let mut upper: Vec<f64> = (0..n).map(|i| bounds[i].1.min(*height)).collect();
                lower[axis] = lower[axis].max(0.0);
                upper[axis] = *height;
                for &r in &radial {
                    lower[r] = lower[r].max(-height);
                    upper[r] = upper[r].min(*height);
                }
                Ok((lower, upper))
            }
            InitialSet::Points { .. } => unreachable!("handled by sample"),
        }
    }
}

fn state_cone(problem: &Problem) -> Option<(usize, Vec<usize>)> {
    let n = problem.n();
    problem.set().pieces().iter().find_map(|p| match p {
        Piece::SecondOrderCone { axis, radial } if *axis < n && radial.iter().all(|&r| r < n) => {
            Some((*axis, radial.clone()))
        }
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    #[test]
    fn ball_samples_are_in_ball_and_reproducible() {
        let s = scenarios::example_rotation_box();
        let a = s.initial_set.sample(&s.problem, 20, 7).unwrap();
        let b = s.initial_set.sample(&s.problem, 20, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| x.norm() <= 1.0));
    }

    #[test]
    fn cone_slice_samples() {
        let s = scenarios::example_cone_scenario();
        let pts = s.initial_set.sample(&s.problem, 30, 1).unwrap();
        for x in pts {
            assert!(x[2] <= 5.0 && x[0].hypot(x[1]) <= x[2] + 1e-12);
        }
    }

    #[test]
    fn explicit_points_checked() {
        let p = scenarios::example_cone();
        let set = InitialSet::Points {
            points: vec![vec![0.0, 0.0]],
        };
        assert!(set.sample(&p, 1, 0).is_err());
    }
}
