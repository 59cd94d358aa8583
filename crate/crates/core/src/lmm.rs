//! Random-intercept linear mixed model fitted by profiled REML.
//!
//! Model: `y = X b + Z u + e` with one random intercept per subject,
//! `u ~ N(0, s2_subject)`, `e ~ N(0, s2_residual)`. With the variance ratio
//! `lambda = s2_subject / s2_residual` held fixed the marginal covariance is
//! `s2_residual * H` where `H` is block diagonal with blocks `I + lambda J`.
//! `H^-1 = I - lambda / (1 + m lambda) J` per block, so the generalised
//! least squares estimate and the residual variance have closed forms and
//! only `lambda` needs a numerical search (golden section on `ln lambda`).

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::StatsError;

pub const LOG_LAMBDA_RANGE: (f64, f64) = (-10.0, 10.0);
pub const BRACKET_TOLERANCE: f64 = 1e-6;
const MAX_ITERATIONS: usize = 200;

/// One observation in long format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmRow {
    pub subject: String,
    pub group: String,
    pub trial: u32,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmFit {
    pub fixed_effects: BTreeMap<String, f64>,
    pub sigma2_subject: f64,
    pub sigma2_residual: f64,
    pub lambda: f64,
    pub reml_loglik: f64,
    pub converged: bool,
}

/// Profiled quantities at a fixed variance ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePoint {
    pub lambda: f64,
    pub beta: Vec<f64>,
    pub sigma2_residual: f64,
    pub reml_loglik: f64,
}

/// Design and grouping for the group x trial model with subject intercepts.
#[derive(Debug, Clone)]
pub struct LmmProblem {
    terms: Vec<String>,
    x: DMatrix<f64>,
    y: DVector<f64>,
    /// Row indices per subject.
    subjects: Vec<Vec<usize>>,
}

impl LmmProblem {
    /// Build the design: intercept, group dummies, trial dummies (trial is
    /// categorical, first level as reference) and their interactions.
    pub fn new(rows: &[LmmRow]) -> Result<Self, StatsError> {
        if rows.is_empty() {
            return Err(StatsError::InvalidInput("no observations".into()));
        }
        if rows.iter().any(|r| !r.y.is_finite()) {
            return Err(StatsError::InvalidInput("non-finite response".into()));
        }
        let groups: Vec<&str> = rows
            .iter()
            .map(|r| r.group.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let trials: Vec<u32> = rows
            .iter()
            .map(|r| r.trial)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();

        let mut subject_index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut subject_group: Vec<&str> = Vec::new();
        let mut subjects: Vec<Vec<usize>> = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            let s = *subject_index.entry(r.subject.as_str()).or_insert_with(|| {
                subjects.push(Vec::new());
                subject_group.push(r.group.as_str());
                subjects.len() - 1
            });
            if subject_group[s] != r.group {
                return Err(StatsError::InvalidInput(format!(
                    "subject `{}` appears in more than one group",
                    r.subject
                )));
            }
            subjects[s].push(i);
        }
        for g in &groups {
            let n = subject_group.iter().filter(|sg| *sg == g).count();
            if n < 2 {
                return Err(StatsError::InvalidInput(format!(
                    "group `{g}` has {n} subject(s); at least 2 are required"
                )));
            }
        }

        let mut terms = vec!["(Intercept)".to_string()];
        terms.extend(groups[1..].iter().map(|g| format!("group[{g}]")));
        terms.extend(trials[1..].iter().map(|t| format!("trial[{t}]")));
        for g in &groups[1..] {
            for t in &trials[1..] {
                terms.push(format!("group[{g}]:trial[{t}]"));
            }
        }
        let p = terms.len();
        let n = rows.len();
        let ng = groups.len() - 1;
        let nt = trials.len() - 1;
        let mut x = DMatrix::zeros(n, p);
        for (i, r) in rows.iter().enumerate() {
            x[(i, 0)] = 1.0;
            let g = groups
                .iter()
                .position(|g| *g == r.group)
                .expect("level exists");
            let t = trials
                .iter()
                .position(|t| *t == r.trial)
                .expect("level exists");
            if g > 0 {
                x[(i, g)] = 1.0;
            }
            if t > 0 {
                x[(i, 1 + ng + t - 1)] = 1.0;
            }
            if g > 0 && t > 0 {
                x[(i, 1 + ng + nt + (g - 1) * nt + (t - 1))] = 1.0;
            }
        }
        if n <= p {
            return Err(StatsError::InvalidInput(format!(
                "{n} observations for {p} fixed effects"
            )));
        }
        check_collinearity(&x, &terms)?;
        Ok(LmmProblem {
            terms,
            x,
            y: DVector::from_iterator(n, rows.iter().map(|r| r.y)),
            subjects,
        })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// GLS fit and restricted log-likelihood at variance ratio `lambda >= 0`.
    pub fn profile(&self, lambda: f64) -> Result<ProfilePoint, StatsError> {
        let n = self.x.nrows();
        let p = self.x.ncols();
        let mut a = self.x.transpose() * &self.x;
        let mut b = self.x.transpose() * &self.y;
        let mut log_det_h = 0.0;
        let mut block = Vec::with_capacity(self.subjects.len());
        for rows in &self.subjects {
            let m = rows.len() as f64;
            let c = lambda / (1.0 + m * lambda);
            log_det_h += (1.0 + m * lambda).ln();
            let mut xs = DVector::zeros(p);
            let mut ys = 0.0;
            for &i in rows {
                xs += self.x.row(i).transpose();
                ys += self.y[i];
            }
            a -= c * &xs * xs.transpose();
            b -= c * ys * &xs;
            block.push(c);
        }
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| StatsError::SingularDesign(self.terms.clone()))?;
        let beta = chol.solve(&b);
        let resid = &self.y - &self.x * &beta;
        let mut rhr = resid.norm_squared();
        for (rows, c) in self.subjects.iter().zip(&block) {
            let s: f64 = rows.iter().map(|&i| resid[i]).sum();
            rhr -= c * s * s;
        }
        let dof = (n - p) as f64;
        let sigma2 = rhr / dof;
        let log_det_a: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let reml_loglik = -0.5
            * (dof * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0) + log_det_h + log_det_a);
        Ok(ProfilePoint {
            lambda,
            beta: beta.iter().copied().collect(),
            sigma2_residual: sigma2,
            reml_loglik,
        })
    }

    /// Maximise the profiled REML likelihood over `ln lambda` in [-10, 10].
    pub fn fit(&self) -> Result<LmmFit, StatsError> {
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = LOG_LAMBDA_RANGE;
        let eval = |t: f64| self.profile(t.exp()).map(|pp| pp.reml_loglik);
        let mut x1 = hi - phi * (hi - lo);
        let mut x2 = lo + phi * (hi - lo);
        let mut f1 = eval(x1)?;
        let mut f2 = eval(x2)?;
        let mut iterations = 0;
        while hi - lo >= BRACKET_TOLERANCE && iterations < MAX_ITERATIONS {
            if f1 >= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - phi * (hi - lo);
                f1 = eval(x1)?;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + phi * (hi - lo);
                f2 = eval(x2)?;
            }
            iterations += 1;
        }
        let converged = hi - lo < BRACKET_TOLERANCE;

        // The optimum may sit on the boundary; keep whichever is best.
        let mut best = self.profile((0.5 * (lo + hi)).exp())?;
        for t in [LOG_LAMBDA_RANGE.0, LOG_LAMBDA_RANGE.1] {
            let edge = self.profile(t.exp())?;
            if edge.reml_loglik > best.reml_loglik {
                best = edge;
            }
        }
        Ok(self.to_fit(best, converged))
    }

    pub fn to_fit(&self, point: ProfilePoint, converged: bool) -> LmmFit {
        LmmFit {
            fixed_effects: self
                .terms
                .iter()
                .cloned()
                .zip(point.beta.iter().copied())
                .collect(),
            sigma2_subject: point.lambda * point.sigma2_residual,
            sigma2_residual: point.sigma2_residual,
            lambda: point.lambda,
            reml_loglik: point.reml_loglik,
            converged,
        }
    }
}

/// Gram-Schmidt over the columns; a column with (numerically) nothing left
/// after projecting out its predecessors is collinear with them.
fn check_collinearity(x: &DMatrix<f64>, terms: &[String]) -> Result<(), StatsError> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for (j, term) in terms.iter().enumerate() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut v = col;
        for q in &basis {
            let proj = q.dot(&v);
            v -= proj * q;
        }
        let rest = v.norm();
        if norm == 0.0 || rest < 1e-9 * norm {
            bad.push(term.clone());
        } else {
            basis.push(v / rest);
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(StatsError::SingularDesign(bad))
    }
}

/// Fit group x trial fixed effects with a by-subject random intercept.
pub fn fit_lmm_random_intercept(rows: &[LmmRow]) -> Result<LmmFit, StatsError> {
    LmmProblem::new(rows)?.fit()
}
