//! Synthetic-control estimators of receiver interference.
//!
//! Training data is a panel: rows are observation rounds, columns are the
//! known links. For link `k` the donors are all other columns, and the
//! estimator is a coefficient vector over those donors. The `Conv` fit is
//! least squares over the probability simplex, so every estimate is a convex
//! combination of the donors' measurements.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::latentnet::{observe_interference, LatentPolicy, LatentPowerVector};
use crate::netgen::NetworkInstance;
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScVariant {
    /// Simplex-constrained least squares.
    Conv,
    /// Unconstrained least squares.
    Free,
    /// Uniform weights: the centroid of the donors.
    Center,
    /// Fresh uniform-Dirichlet weights on every use.
    Dirich,
}

impl ScVariant {
    pub const ALL: [ScVariant; 4] = [
        ScVariant::Conv,
        ScVariant::Free,
        ScVariant::Center,
        ScVariant::Dirich,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScVariant::Conv => "conv",
            ScVariant::Free => "free",
            ScVariant::Center => "center",
            ScVariant::Dirich => "dirich",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SimError::InvalidConfig(format!("unknown sc variant `{s}`")))
    }
}

/// `L x K` matrix of interference measurements, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PanelData {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let l = rows.len();
        if l == 0 {
            return Err(SimError::Data("panel needs at least one row".into()));
        }
        let k = rows[0].len();
        if k < 2 {
            return Err(SimError::Data("panel needs at least two links".into()));
        }
        let mut data = Vec::with_capacity(l * k);
        for row in rows {
            if row.len() != k {
                return Err(SimError::Data("ragged panel rows".into()));
            }
            if row.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(SimError::Data(
                    "panel entries must be finite and nonnegative".into(),
                ));
            }
            data.extend(row);
        }
        Ok(Self {
            rows: l,
            cols: k,
            data,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn num_links(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, link: usize) -> f64 {
        self.data[row * self.cols + link]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, link: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, link)).collect()
    }

    /// Header of link ids, then one row per observation.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record((0..self.cols).map(|k| k.to_string()))?;
        for r in 0..self.rows {
            w.write_record(self.row(r).iter().map(|x| x.to_string()))?;
        }
        w.flush().map_err(|e| SimError::io("<panel csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let width = r.headers()?.len();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != width {
                return Err(SimError::Data("panel row width differs from header".into()));
            }
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| SimError::Data(format!("bad panel entry: {e}")))?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }

    /// Target column and donor matrix (all other columns, in order).
    fn split(&self, k: usize) -> (DVector<f64>, DMatrix<f64>) {
        let x = DVector::from_fn(self.rows, |r, _| self.get(r, k));
        let donors = DMatrix::from_fn(self.rows, self.cols - 1, |r, c| {
            self.get(r, if c < k { c } else { c + 1 })
        });
        (x, donors)
    }
}

/// One panel row together with the powers that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDraw {
    pub p: Vec<f64>,
    pub q: LatentPowerVector,
}

/// Observational panel under randomized known powers: each row draws `p`
/// uniformly in the power box, steps the latent policy once and records the
/// total interference at every known receiver.
pub fn collect_panel(
    net: &NetworkInstance,
    policy: &LatentPolicy,
    rows: usize,
    seed: u64,
) -> Result<PanelData> {
    collect_panel_logged(net, policy, rows, seed).map(|(panel, _)| panel)
}

pub fn collect_panel_logged(
    net: &NetworkInstance,
    policy: &LatentPolicy,
    rows: usize,
    seed: u64,
) -> Result<(PanelData, Vec<PanelDraw>)> {
    if rows == 0 {
        return Err(SimError::InvalidConfig(
            "panel needs at least one row".into(),
        ));
    }
    let mut rng = rng::stream(seed, rng::PANEL);
    let mut data = Vec::with_capacity(rows);
    let mut log = Vec::with_capacity(rows);
    for _ in 0..rows {
        let p: Vec<f64> = net
            .max_power()
            .iter()
            .map(|cap| rng.random_range(0.0..=*cap))
            .collect();
        let q = policy.step(&p, &mut rng);
        data.push(observe_interference(net, &p, &q).total);
        log.push(PanelDraw { p, q });
    }
    Ok((PanelData::from_rows(data)?, log))
}

/// Euclidean projection onto `{b >= 0, sum b = 1}` (sort-and-threshold).
pub fn project_simplex(y: &[f64]) -> Vec<f64> {
    assert!(!y.is_empty(), "cannot project an empty vector");
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = y.iter().map(|v| (v - theta).max(0.0)).collect();
    // absorb rounding so the sum is 1 to machine precision
    let sum: f64 = out.iter().sum();
    if sum > 0.0 {
        out.iter_mut().for_each(|b| *b /= sum);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Relative objective change (or relative duality gap) that stops the
    /// projected-gradient loop.
    pub tol: f64,
    /// Ridge for the unconstrained fit, relative to the mean Gram diagonal.
    pub ridge: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 100_000,
            tol: 1e-10,
            ridge: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub coefficients: Vec<f64>,
    /// `||x_k - X_{-k} b||_2` in panel units.
    pub residual: f64,
    pub iterations: usize,
    /// Frank-Wolfe gap at the returned point (`Conv` only), an upper bound on
    /// the suboptimality of the half squared residual in normalized units.
    pub gap: f64,
}

fn residual_norm(x: &DVector<f64>, a: &DMatrix<f64>, beta: &[f64]) -> f64 {
    (x - a * DVector::from_column_slice(beta)).norm()
}

fn scale_of(x: &DVector<f64>, a: &DMatrix<f64>) -> f64 {
    let m = x.amax().max(a.amax());
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn check_link(panel: &PanelData, k: usize) -> Result<()> {
    if k >= panel.num_links() {
        return Err(SimError::Data(format!("link {k} not in panel")));
    }
    Ok(())
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
fn top_eigenvalue(g: &DMatrix<f64>, steps: usize) -> f64 {
    let n = g.nrows();
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..steps {
        let y = g * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = x.dot(&y);
        x = y / norm;
    }
    lambda.max((g * &x).norm())
}

/// Exact least squares on the face spanned by `support`, or `None` when the
/// solution leaves the simplex.
fn polish_on_support(
    g: &DMatrix<f64>,
    b: &DVector<f64>,
    support: &[usize],
    dim: usize,
) -> Option<Vec<f64>> {
    let s = support.len();
    let mut kkt = DMatrix::zeros(s + 1, s + 1);
    let mut rhs = DVector::zeros(s + 1);
    for (i, &si) in support.iter().enumerate() {
        for (j, &sj) in support.iter().enumerate() {
            kkt[(i, j)] = g[(si, sj)];
        }
        kkt[(i, s)] = 1.0;
        kkt[(s, i)] = 1.0;
        rhs[i] = b[si];
    }
    rhs[s] = 1.0;
    let sol = kkt.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut beta = vec![0.0; dim];
    for (i, &si) in support.iter().enumerate() {
        if sol[i] < 0.0 {
            return None;
        }
        beta[si] = sol[i];
    }
    Some(project_simplex(&beta))
}

/// Simplex-constrained least squares for link `k`.
///
/// Projected gradient with step `1 / L` (`L` the top eigenvalue of the donor
/// Gram matrix), followed by an exact solve on the identified support that is
/// kept only if it lowers the residual.
pub fn fit_conv(panel: &PanelData, k: usize, opts: &SolverOptions) -> Result<Fit> {
    check_link(panel, k)?;
    let (x_raw, a_raw) = panel.split(k);
    let m = a_raw.ncols();
    if m == 1 {
        let residual = residual_norm(&x_raw, &a_raw, &[1.0]);
        return Ok(Fit {
            coefficients: vec![1.0],
            residual,
            iterations: 0,
            gap: 0.0,
        });
    }
    let scale = scale_of(&x_raw, &a_raw);
    let x = &x_raw / scale;
    let a = &a_raw / scale;
    let g = a.transpose() * &a;
    let b = a.transpose() * &x;
    let c = 0.5 * x.norm_squared();
    let half_obj = |beta: &DVector<f64>| 0.5 * beta.dot(&(&g * beta)) - b.dot(beta) + c;

    let mut lip = top_eigenvalue(&g, 100);
    if lip <= 0.0 {
        // all-zero donors: any simplex point is optimal
        let coefficients = vec![1.0 / m as f64; m];
        let residual = residual_norm(&x_raw, &a_raw, &coefficients);
        return Ok(Fit {
            coefficients,
            residual,
            iterations: 0,
            gap: 0.0,
        });
    }

    let mut beta = DVector::from_element(m, 1.0 / m as f64);
    let mut f = half_obj(&beta);
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let grad = &g * &beta - &b;
        gap = grad.dot(&beta) - grad.min();
        if gap <= opts.tol * (f.abs() + 1e-12 * c) {
            break;
        }
        let trial = DVector::from_vec(project_simplex((&beta - &grad / lip).as_slice()));
        let f_new = half_obj(&trial);
        if f_new > f + 1e-15 * c {
            // step too long for the estimated curvature
            lip *= 2.0;
            continue;
        }
        let rel = (f - f_new).abs() / f.abs().max(1e-300);
        beta = trial;
        f = f_new;
        if rel < opts.tol {
            break;
        }
    }

    let mut coefficients = project_simplex(beta.as_slice());
    let mut residual = residual_norm(&x_raw, &a_raw, &coefficients);
    let support: Vec<usize> = (0..m).filter(|&i| coefficients[i] > 1e-9).collect();
    if !support.is_empty() {
        if let Some(polished) = polish_on_support(&g, &b, &support, m) {
            let r = residual_norm(&x_raw, &a_raw, &polished);
            if r <= residual {
                coefficients = polished;
                residual = r;
            }
        }
    }
    let final_beta = DVector::from_column_slice(&coefficients);
    let grad = &g * &final_beta - &b;
    gap = gap.min(grad.dot(&final_beta) - grad.min()).max(0.0);
    Ok(Fit {
        coefficients,
        residual,
        iterations,
        gap,
    })
}

/// Unconstrained least squares via ridge-stabilized normal equations.
pub fn fit_free(panel: &PanelData, k: usize, opts: &SolverOptions) -> Result<Fit> {
    check_link(panel, k)?;
    let (x_raw, a_raw) = panel.split(k);
    let m = a_raw.ncols();
    let scale = scale_of(&x_raw, &a_raw);
    let x = &x_raw / scale;
    let a = &a_raw / scale;
    let mut g = a.transpose() * &a;
    let b = a.transpose() * &x;
    let mean_diag = (g.trace() / m as f64).max(f64::MIN_POSITIVE);
    for i in 0..m {
        g[(i, i)] += opts.ridge * mean_diag;
    }
    let beta = g
        .cholesky()
        .map(|ch| ch.solve(&b))
        .ok_or_else(|| SimError::Data(format!("normal equations of link {k} are singular")))?;
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let residual = residual_norm(&x_raw, &a_raw, &coefficients);
    Ok(Fit {
        coefficients,
        residual,
        iterations: 1,
        gap: 0.0,
    })
}

/// `nu^T mu`.
pub fn infer(coefficients: &[f64], mu: &[f64]) -> f64 {
    assert_eq!(
        coefficients.len(),
        mu.len(),
        "coefficient/donor length mismatch"
    );
    coefficients.iter().zip(mu).map(|(a, b)| a * b).sum()
}

/// Uniform draw from the probability simplex of dimension `n`.
pub fn dirichlet_uniform(n: usize, rng: &mut SimRng) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|x| x / sum).collect()
}

/// Trained per-link coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ScEstimator {
    variant: ScVariant,
    coefficients: Vec<Vec<f64>>,
    /// Per-link training RMS error in panel units.
    residuals: Vec<f64>,
}

impl ScEstimator {
    /// Fits every link. `Dirich` stores the centroid (the Dirichlet mean) for
    /// reporting; its inference draws fresh weights.
    pub fn train(panel: &PanelData, variant: ScVariant, opts: &SolverOptions) -> Result<Self> {
        use rayon::prelude::*;
        let k = panel.num_links();
        let rows = panel.num_rows() as f64;
        let fits: Vec<Fit> = (0..k)
            .into_par_iter()
            .map(|link| match variant {
                ScVariant::Conv => fit_conv(panel, link, opts),
                ScVariant::Free => fit_free(panel, link, opts),
                ScVariant::Center | ScVariant::Dirich => {
                    let (x, a) = panel.split(link);
                    let coefficients = vec![1.0 / (k - 1) as f64; k - 1];
                    let residual = residual_norm(&x, &a, &coefficients);
                    Ok(Fit {
                        coefficients,
                        residual,
                        iterations: 0,
                        gap: 0.0,
                    })
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            variant,
            residuals: fits.iter().map(|f| f.residual / rows.sqrt()).collect(),
            coefficients: fits.into_iter().map(|f| f.coefficients).collect(),
        })
    }

    /// Hand-built estimator, mainly for tests and imported weights.
    pub fn from_coefficients(variant: ScVariant, coefficients: Vec<Vec<f64>>) -> Result<Self> {
        let k = coefficients.len();
        if coefficients.iter().any(|c| c.len() + 1 != k) {
            return Err(SimError::Data("each link needs K-1 coefficients".into()));
        }
        Ok(Self {
            variant,
            residuals: vec![0.0; k],
            coefficients,
        })
    }

    pub fn variant(&self) -> ScVariant {
        self.variant
    }

    pub fn num_links(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self, k: usize) -> &[f64] {
        &self.coefficients[k]
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// Counterfactual estimate for link `k` from the other links' current
    /// measurements `mu` (link order, `k` omitted). `rng` is only touched by
    /// the `Dirich` variant.
    pub fn estimate(&self, k: usize, mu: &[f64], rng: &mut SimRng) -> f64 {
        match self.variant {
            ScVariant::Dirich => infer(&dirichlet_uniform(mu.len(), rng), mu),
            _ => infer(&self.coefficients[k], mu),
        }
    }

    /// One row per link: `link,residual,w0..w{K-1}` with a zero self weight.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let k = self.num_links();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["link".to_string(), "residual".to_string()];
        header.extend((0..k).map(|j| format!("w{j}")));
        w.write_record(&header)?;
        for link in 0..k {
            let mut rec = vec![link.to_string(), self.residuals[link].to_string()];
            let mut donors = self.coefficients[link].iter();
            for j in 0..k {
                let v = if j == link {
                    0.0
                } else {
                    *donors.next().unwrap()
                };
                rec.push(v.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| SimError::io("<estimator csv>", e))?;
        Ok(())
    }
}

/// Builds the donor vector `mu_k` from a full per-link vector.
pub fn donors_of(values: &[f64], k: usize) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, v)| *v)
        .collect()
}
