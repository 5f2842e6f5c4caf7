//! Box-constrained Nelder-Mead simplex minimisation.
//!
//! The simplex lives in the subspace of free (non-frozen) dimensions, so frozen
//! coordinates are copied verbatim from `x0` into every evaluated point. Trial
//! points are clamped into the box before evaluation; reflection, expansion
//! and contraction therefore never leave the feasible region, and shrinking is
//! a convex combination of feasible points.
//!
//! When the best value stops improving for `2d` consecutive iterations the
//! simplex is rebuilt around the best vertex at half the previous scale, at
//! most `max_restarts` times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ALPHA: f64 = 1.0;
const GAMMA: f64 = 2.0;
const RHO: f64 = 0.5;
const SIGMA: f64 = 0.5;

/// Tolerances and simplex construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmOptions {
    /// Converged once `f(worst) − f(best)` is below this and the
    /// `x_tol` test holds too.
    pub f_tol: f64,
    /// Per-coordinate distance of every vertex from the best one.
    pub x_tol: f64,
    /// Iteration cap; `None` means `200 · d` with `d` the free dimension count.
    pub max_iter: Option<usize>,
    /// Initial simplex edge, in units of the per-dimension step.
    pub scale: f64,
    /// Stall-triggered simplex rebuilds.
    pub max_restarts: usize,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self {
            f_tol: 1e-7,
            x_tol: 1e-7,
            max_iter: None,
            scale: 1.0,
            max_restarts: 2,
        }
    }
}

/// Snapshot of the simplex in full-space coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexState {
    pub vertices: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x_opt: Vec<f64>,
    pub f_opt: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Per-dimension `[lower, upper]`.
pub type Bounds = [(f64, f64)];

fn check_inputs(x0: &[f64], bounds: &Bounds, steps: &[f64]) -> Result<()> {
    for len in [bounds.len(), steps.len()] {
        if len != x0.len() {
            return Err(Error::DimensionMismatch {
                expected: x0.len(),
                actual: len,
            });
        }
    }
    for (j, (&v, &(lo, hi))) in x0.iter().zip(bounds).enumerate() {
        if !(lo <= hi) || !v.is_finite() || v < lo || v > hi {
            return Err(Error::InvalidArgument(format!(
                "x0[{j}] = {v} not inside [{lo}, {hi}]"
            )));
        }
    }
    Ok(())
}

fn free_dims(d: usize, frozen: &[usize]) -> Result<Vec<usize>> {
    if let Some(&j) = frozen.iter().find(|&&j| j >= d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: j + 1,
        });
    }
    let free: Vec<usize> = (0..d).filter(|j| !frozen.contains(j)).collect();
    if free.is_empty() {
        return Err(Error::NothingToOptimize("every dimension is frozen".into()));
    }
    Ok(free)
}

/// Vertex 0 is `x0`; vertex `k` moves free dimension `k` by `scale · step`,
/// clamped into the box, stepping the other way if clamping lands on `x0`.
fn reduced_simplex(
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    steps: &[f64],
    scale: f64,
) -> Result<Vec<Vec<f64>>> {
    let d = x0.len();
    let mut vertices = Vec::with_capacity(d + 1);
    vertices.push(x0.to_vec());
    for k in 0..d {
        let delta = scale * steps[k];
        let mut v = x0.to_vec();
        v[k] = (x0[k] + delta).clamp(lower[k], upper[k]);
        if v[k] == x0[k] {
            v[k] = (x0[k] - delta).clamp(lower[k], upper[k]);
        }
        if v[k] == x0[k] {
            return Err(Error::NothingToOptimize(format!(
                "dimension {k} has no feasible room to move"
            )));
        }
        vertices.push(v);
    }
    Ok(vertices)
}

/// Initial simplex around `x0` over the non-frozen dimensions.
pub fn initial_simplex(
    x0: &[f64],
    bounds: &Bounds,
    steps: &[f64],
    frozen: &[usize],
    scale: f64,
) -> Result<SimplexState> {
    check_inputs(x0, bounds, steps)?;
    let free = free_dims(x0.len(), frozen)?;
    let pick = |src: &[f64]| free.iter().map(|&j| src[j]).collect::<Vec<_>>();
    let lower: Vec<f64> = free.iter().map(|&j| bounds[j].0).collect();
    let upper: Vec<f64> = free.iter().map(|&j| bounds[j].1).collect();
    let reduced = reduced_simplex(&pick(x0), &lower, &upper, &pick(steps), scale)?;
    let vertices = reduced
        .into_iter()
        .map(|r| {
            let mut full = x0.to_vec();
            for (k, &j) in free.iter().enumerate() {
                full[j] = r[k];
            }
            full
        })
        .collect();
    Ok(SimplexState {
        vertices,
        values: Vec::new(),
        iterations: 0,
    })
}

/// A running Nelder-Mead minimisation; [`nelder_mead`] drives it to the end.
pub struct NelderMead<F> {
    objective: F,
    template: Vec<f64>,
    free: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    steps: Vec<f64>,
    opts: NmOptions,
    max_iter: usize,
    vertices: Vec<Vec<f64>>,
    values: Vec<f64>,
    iterations: usize,
    scale: f64,
    restarts_used: usize,
    stalled_for: usize,
    best_seen: f64,
    converged: bool,
}

impl<F: FnMut(&[f64]) -> f64> NelderMead<F> {
    pub fn new(
        objective: F,
        x0: &[f64],
        bounds: &Bounds,
        steps: &[f64],
        frozen: &[usize],
        opts: &NmOptions,
    ) -> Result<Self> {
        check_inputs(x0, bounds, steps)?;
        let free = free_dims(x0.len(), frozen)?;
        let d = free.len();
        let mut nm = Self {
            objective,
            template: x0.to_vec(),
            lower: free.iter().map(|&j| bounds[j].0).collect(),
            upper: free.iter().map(|&j| bounds[j].1).collect(),
            steps: free.iter().map(|&j| steps[j]).collect(),
            free,
            opts: opts.clone(),
            max_iter: opts.max_iter.unwrap_or(200 * d),
            vertices: Vec::new(),
            values: Vec::new(),
            iterations: 0,
            scale: opts.scale,
            restarts_used: 0,
            stalled_for: 0,
            best_seen: f64::INFINITY,
            converged: false,
        };
        let start: Vec<f64> = nm.free.iter().map(|&j| x0[j]).collect();
        let f0 = nm.eval(&start);
        if !f0.is_finite() {
            return Err(Error::NonFinite(format!("objective at x0 is {f0}")));
        }
        nm.rebuild(start, f0)?;
        Ok(nm)
    }

    fn eval(&mut self, reduced: &[f64]) -> f64 {
        for (k, &j) in self.free.iter().enumerate() {
            self.template[j] = reduced[k];
        }
        let v = (self.objective)(&self.template);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    fn project(&self, point: &mut [f64]) {
        for (k, v) in point.iter_mut().enumerate() {
            *v = v.clamp(self.lower[k], self.upper[k]);
        }
    }

    fn rebuild(&mut self, best: Vec<f64>, f_best: f64) -> Result<()> {
        let vertices = reduced_simplex(&best, &self.lower, &self.upper, &self.steps, self.scale)?;
        let mut values = Vec::with_capacity(vertices.len());
        values.push(f_best);
        for v in &vertices[1..] {
            values.push(self.eval(v));
        }
        self.vertices = vertices;
        self.values = values;
        self.sort();
        self.best_seen = self.values[0];
        self.stalled_for = 0;
        Ok(())
    }

    fn sort(&mut self) {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        let mut vertices = std::mem::take(&mut self.vertices);
        self.vertices = order
            .iter()
            .map(|&i| std::mem::take(&mut vertices[i]))
            .collect();
        self.values = order.iter().map(|&i| self.values[i]).collect();
    }

    /// Moves a freshly replaced worst vertex to its sorted position, after any
    /// equal values, matching what a stable sort would do.
    fn sift_worst(&mut self) {
        let last = self.values.len() - 1;
        let v = self.values[last];
        let pos = self.values[..last].partition_point(|&x| x.total_cmp(&v).is_le());
        self.values[pos..].rotate_right(1);
        self.vertices[pos..].rotate_right(1);
    }

    fn within_tolerance(&self) -> bool {
        let n = self.values.len();
        if self.values[n - 1] - self.values[0] >= self.opts.f_tol {
            return false;
        }
        let best = &self.vertices[0];
        self.vertices[1..].iter().all(|v| {
            v.iter()
                .zip(best)
                .all(|(a, b)| (a - b).abs() < self.opts.x_tol)
        })
    }

    pub fn is_done(&self) -> bool {
        self.converged || self.iterations >= self.max_iter
    }

    /// One Nelder-Mead iteration. Returns `false` once finished.
    pub fn step(&mut self) -> bool {
        if self.is_done() {
            return false;
        }
        if self.within_tolerance() {
            self.converged = true;
            return false;
        }
        self.iterations += 1;
        let d = self.free.len();
        let worst = d;

        let mut centroid = vec![0.0; d];
        for v in &self.vertices[..d] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= d as f64;
        }
        let along = |from: &[f64], t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(from)
                .map(|(c, x)| c + t * (x - c))
                .collect()
        };

        let mut reflected = along(&self.vertices[worst], -ALPHA);
        self.project(&mut reflected);
        let f_r = self.eval(&reflected);

        let f_best = self.values[0];
        let f_second = self.values[d - 1];
        let f_worst = self.values[worst];

        let accepted = if f_r < f_best {
            let mut expanded = along(&reflected, GAMMA);
            self.project(&mut expanded);
            let f_e = self.eval(&expanded);
            Some(if f_e < f_r {
                (expanded, f_e)
            } else {
                (reflected, f_r)
            })
        } else if f_r < f_second {
            Some((reflected, f_r))
        } else if f_r < f_worst {
            let mut outside = along(&reflected, RHO);
            self.project(&mut outside);
            let f_c = self.eval(&outside);
            (f_c <= f_r).then_some((outside, f_c))
        } else {
            let mut inside = along(&self.vertices[worst], RHO);
            self.project(&mut inside);
            let f_c = self.eval(&inside);
            (f_c < f_worst).then_some((inside, f_c))
        };

        match accepted {
            Some((point, value)) => {
                self.vertices[worst] = point;
                self.values[worst] = value;
                self.sift_worst();
            }
            None => {
                let best = self.vertices[0].clone();
                for i in 1..=d {
                    let shrunk: Vec<f64> = best
                        .iter()
                        .zip(&self.vertices[i])
                        .map(|(b, x)| b + SIGMA * (x - b))
                        .collect();
                    self.values[i] = self.eval(&shrunk);
                    self.vertices[i] = shrunk;
                }
                self.sort();
            }
        }

        if self.values[0] < self.best_seen - self.opts.f_tol {
            self.best_seen = self.values[0];
            self.stalled_for = 0;
        } else {
            self.stalled_for += 1;
        }
        if self.stalled_for >= 2 * d && self.restarts_used < self.opts.max_restarts {
            self.restarts_used += 1;
            self.scale *= 0.5;
            let best = self.vertices[0].clone();
            let f_best = self.values[0];
            if self.rebuild(best, f_best).is_err() {
                // best vertex pinned at a degenerate spot; keep the current simplex
                self.stalled_for = 0;
            }
        }
        true
    }

    fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = self.template.clone();
        for (k, &j) in self.free.iter().enumerate() {
            full[j] = reduced[k];
        }
        full
    }

    pub fn state(&self) -> SimplexState {
        SimplexState {
            vertices: self.vertices.iter().map(|v| self.expand(v)).collect(),
            values: self.values.clone(),
            iterations: self.iterations,
        }
    }

    pub fn result(&self) -> OptimResult {
        OptimResult {
            x_opt: self.expand(&self.vertices[0]),
            f_opt: self.values[0],
            iterations: self.iterations,
            converged: self.converged,
        }
    }
}

/// Minimises `objective` from `x0` inside `bounds`, never moving the `frozen`
/// dimensions. `steps` sets the per-dimension initial simplex edge (before
/// `opts.scale`).
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    objective: F,
    x0: &[f64],
    bounds: &Bounds,
    steps: &[f64],
    frozen: &[usize],
    opts: &NmOptions,
) -> Result<OptimResult> {
    let mut nm = NelderMead::new(objective, x0, bounds, steps, frozen, opts)?;
    while nm.step() {}
    Ok(nm.result())
}
