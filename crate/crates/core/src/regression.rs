//! Least-squares conditional-expectation estimators.
//!
//! Two basis families are available: global polynomials of bounded total
//! degree (fitted in coordinates standardized to the sample cloud of each
//! step) and local-linear functions on a uniform hypercube partition of the
//! domain box. Fitted functions are constant-extrapolated outside the box.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows per block in the normal-equation reduction.
const ROW_BLOCK: usize = 4096;
/// Relative singular-value cutoff on the Gram matrix.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisFamily {
    /// All monomials of total degree at most `degree`.
    Polynomial { degree: usize },
    /// Local-linear functions on `bins` cells per axis.
    LocalHypercube { bins: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionBasis {
    pub family: BasisFamily,
    /// Per-axis `(lo, hi)`; `None` uses the inflated empirical range of the
    /// path bundle.
    pub domain: Option<Vec<(f64, f64)>>,
}

impl RegressionBasis {
    pub fn polynomial(degree: usize) -> Self {
        RegressionBasis {
            family: BasisFamily::Polynomial { degree },
            domain: None,
        }
    }

    pub fn local_hypercube(bins: usize) -> Self {
        RegressionBasis {
            family: BasisFamily::LocalHypercube { bins: bins.max(1) },
            domain: None,
        }
    }

    pub fn with_domain(mut self, domain: Vec<(f64, f64)>) -> Self {
        self.domain = Some(domain);
        self
    }

    /// Dimension of the span in `dim` state dimensions.
    pub fn span_dim(&self, dim: usize) -> usize {
        match self.family {
            BasisFamily::Polynomial { degree } => exponents(dim, degree).len(),
            BasisFamily::LocalHypercube { bins } => bins.pow(dim as u32) * (dim + 1),
        }
    }

    /// Fits `targets` against the points `xs` (flattened `[m][j]`).
    pub fn fit(
        &self,
        domain: &[(f64, f64)],
        xs: &[f64],
        targets: &[f64],
        step: usize,
    ) -> Result<FittedFunction> {
        let dim = domain.len();
        match self.family {
            BasisFamily::Polynomial { degree } => {
                fit_polynomial(domain, degree, xs, targets, step).map(FittedFunction::Polynomial)
            }
            BasisFamily::LocalHypercube { bins } => Ok(FittedFunction::Local(fit_local(
                domain, bins, dim, xs, targets,
            ))),
        }
    }
}

/// Inflates the per-axis range of `xs` by 10% of its width.
pub fn empirical_domain(xs: &[f64], dim: usize) -> Vec<(f64, f64)> {
    (0..dim)
        .map(|j| {
            let (lo, hi) = xs
                .iter()
                .skip(j)
                .step_by(dim)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                    (a.min(v), b.max(v))
                });
            let w = hi - lo;
            let pad = if w > 0.0 { 0.05 * w } else { 0.5 };
            (lo - pad, hi + pad)
        })
        .collect()
}

fn exponents(dim: usize, degree: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut cur = vec![0u8; dim];
    fn rec(axis: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if axis == cur.len() {
            out.push(cur.clone());
            return;
        }
        for p in 0..=left {
            cur[axis] = p as u8;
            rec(axis + 1, left - p, cur, out);
        }
        cur[axis] = 0;
    }
    rec(0, degree, &mut cur, &mut out);
    out.sort_by_key(|e| e.iter().map(|&p| p as usize).sum::<usize>());
    out
}

fn clamp_to(domain: &[(f64, f64)], x: &[f64], out: &mut [f64]) -> bool {
    let mut outside = false;
    for ((o, &v), &(lo, hi)) in out.iter_mut().zip(x).zip(domain) {
        *o = if v < lo {
            outside = true;
            lo
        } else if v > hi {
            outside = true;
            hi
        } else {
            v
        };
    }
    outside
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialFit {
    domain: Vec<(f64, f64)>,
    center: Vec<f64>,
    scale: Vec<f64>,
    degree: usize,
    exponents: Vec<Vec<u8>>,
    pub coeffs: Vec<f64>,
    pub rank: usize,
    pub residual_rms: f64,
}

impl PolynomialFit {
    fn features(&self, x: &[f64], powers: &mut Vec<f64>, out: &mut [f64]) {
        let d = x.len();
        let stride = self.degree + 1;
        powers.clear();
        for j in 0..d {
            let z = (x[j] - self.center[j]) / self.scale[j];
            let mut p = 1.0;
            for _ in 0..stride {
                powers.push(p);
                p *= z;
            }
        }
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            let mut v = 1.0;
            for (j, &p) in e.iter().enumerate() {
                if p > 0 {
                    v *= powers[j * stride + p as usize];
                }
            }
            *o = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    domain: Vec<(f64, f64)>,
    bins: usize,
    /// `bins^d` cells, `d + 1` coefficients each.
    pub coeffs: Vec<f64>,
    pub residual_rms: f64,
}

impl LocalFit {
    fn cell(&self, x: &[f64], local: &mut [f64]) -> usize {
        let mut idx = 0;
        for (j, (&v, &(lo, hi))) in x.iter().zip(&self.domain).enumerate() {
            let w = (hi - lo) / self.bins as f64;
            let c = (((v - lo) / w).floor().max(0.0) as usize).min(self.bins - 1);
            local[j] = (v - (lo + (c as f64 + 0.5) * w)) / w;
            idx = idx * self.bins + c;
        }
        idx
    }
}

/// A fitted conditional-expectation estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedFunction {
    Polynomial(PolynomialFit),
    Local(LocalFit),
}

impl FittedFunction {
    /// Value at `x` and whether `x` was outside the domain box.
    pub fn evaluate(&self, x: &[f64]) -> (f64, bool) {
        let mut xc = [0.0f64; 8];
        let mut heap;
        let xc: &mut [f64] = if x.len() <= 8 {
            &mut xc[..x.len()]
        } else {
            heap = vec![0.0; x.len()];
            &mut heap
        };
        match self {
            FittedFunction::Polynomial(p) => {
                let outside = clamp_to(&p.domain, x, xc);
                let mut powers = Vec::with_capacity(x.len() * (p.degree + 1));
                let mut feats = vec![0.0; p.exponents.len()];
                p.features(xc, &mut powers, &mut feats);
                let v = feats.iter().zip(&p.coeffs).map(|(a, b)| a * b).sum();
                (v, outside)
            }
            FittedFunction::Local(l) => {
                let outside = clamp_to(&l.domain, x, xc);
                let mut local = vec![0.0; x.len()];
                let c = l.cell(xc, &mut local);
                let k = x.len() + 1;
                let co = &l.coeffs[c * k..(c + 1) * k];
                let v = co[0] + co[1..].iter().zip(&local).map(|(a, b)| a * b).sum::<f64>();
                (v, outside)
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.evaluate(x).0
    }

    pub fn residual_rms(&self) -> f64 {
        match self {
            FittedFunction::Polynomial(p) => p.residual_rms,
            FittedFunction::Local(l) => l.residual_rms,
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        match self {
            FittedFunction::Polynomial(p) => &p.coeffs,
            FittedFunction::Local(l) => &l.coeffs,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coefficients().iter().all(|c| c.is_finite())
    }

    /// A constant function on `domain`.
    pub fn constant(domain: Vec<(f64, f64)>, value: f64) -> Self {
        let d = domain.len();
        FittedFunction::Polynomial(PolynomialFit {
            center: vec![0.0; d],
            scale: vec![1.0; d],
            degree: 0,
            exponents: exponents(d, 0),
            coeffs: vec![value],
            rank: 1,
            residual_rms: 0.0,
            domain,
        })
    }
}

fn count_distinct(xs: &[f64], dim: usize, cap: usize) -> usize {
    let mut seen: Vec<&[f64]> = Vec::new();
    for p in xs.chunks(dim) {
        if !seen.contains(&p) {
            seen.push(p);
            if seen.len() >= cap {
                break;
            }
        }
    }
    seen.len()
}

fn fit_polynomial(
    domain: &[(f64, f64)],
    degree: usize,
    xs: &[f64],
    targets: &[f64],
    step: usize,
) -> Result<PolynomialFit> {
    let dim = domain.len();
    let m = targets.len();
    let exps = exponents(dim, degree);
    let k = exps.len();

    let mut clamped = vec![0.0; xs.len()];
    for (src, dst) in xs.chunks(dim).zip(clamped.chunks_mut(dim)) {
        clamp_to(domain, src, dst);
    }
    let mut center = vec![0.0; dim];
    let mut scale = vec![0.0; dim];
    for p in clamped.chunks(dim) {
        for j in 0..dim {
            center[j] += p[j];
        }
    }
    center.iter_mut().for_each(|c| *c /= m as f64);
    for p in clamped.chunks(dim) {
        for j in 0..dim {
            scale[j] += (p[j] - center[j]).powi(2);
        }
    }
    for s in scale.iter_mut() {
        *s = (*s / m as f64).sqrt();
        if !(*s > 1e-300) {
            *s = 1.0;
        }
    }

    let mut fit = PolynomialFit {
        domain: domain.to_vec(),
        center,
        scale,
        degree,
        exponents: exps,
        coeffs: vec![0.0; k],
        rank: 0,
        residual_rms: 0.0,
    };

    // normal equations, reduced in fixed block order
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = clamped
        .par_chunks(ROW_BLOCK * dim)
        .zip(targets.par_chunks(ROW_BLOCK))
        .map(|(xb, yb)| {
            let mut g = vec![0.0; k * k];
            let mut r = vec![0.0; k];
            let mut powers = Vec::new();
            let mut phi = vec![0.0; k];
            for (x, &y) in xb.chunks(dim).zip(yb) {
                fit.features(x, &mut powers, &mut phi);
                for a in 0..k {
                    r[a] += phi[a] * y;
                    for b in a..k {
                        g[a * k + b] += phi[a] * phi[b];
                    }
                }
            }
            (g, r)
        })
        .collect();
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for (g, r) in &blocks {
        for a in 0..k {
            rhs[a] += r[a];
            for b in a..k {
                gram[(a, b)] += g[a * k + b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    if gram.iter().any(|v| !v.is_finite()) || rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Blowup {
            step,
            what: "regression target",
        });
    }

    let svd = gram.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * RANK_TOL;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < k {
        let distinct = count_distinct(&clamped, dim, k);
        if distinct >= k {
            return Err(Error::RankDeficient {
                step,
                rank,
                dim: k,
                distinct,
            });
        }
    }
    let sol = svd
        .solve(&rhs, tol.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Invalid(format!("least squares: {e}")))?;
    fit.coeffs = sol.iter().copied().collect();
    fit.rank = rank;
    if fit.coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Blowup {
            step,
            what: "regression coefficient",
        });
    }

    let sq: f64 = clamped
        .par_chunks(ROW_BLOCK * dim)
        .zip(targets.par_chunks(ROW_BLOCK))
        .map(|(xb, yb)| {
            let mut powers = Vec::new();
            let mut phi = vec![0.0; k];
            let mut s = 0.0;
            for (x, &y) in xb.chunks(dim).zip(yb) {
                fit.features(x, &mut powers, &mut phi);
                let v: f64 = phi.iter().zip(&fit.coeffs).map(|(a, b)| a * b).sum();
                s += (y - v).powi(2);
            }
            s
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .sum();
    fit.residual_rms = (sq / m as f64).sqrt();
    Ok(fit)
}

fn fit_local(
    domain: &[(f64, f64)],
    bins: usize,
    dim: usize,
    xs: &[f64],
    targets: &[f64],
) -> LocalFit {
    let cells = bins.pow(dim as u32);
    let k = dim + 1;
    let mut fit = LocalFit {
        domain: domain.to_vec(),
        bins,
        coeffs: vec![0.0; cells * k],
        residual_rms: 0.0,
    };
    let mut grams = vec![0.0; cells * k * k];
    let mut rhs = vec![0.0; cells * k];
    let mut counts = vec![0usize; cells];
    let mut sums = vec![0.0; cells];
    let mut xc = vec![0.0; dim];
    let mut local = vec![0.0; dim];
    let mut phi = vec![0.0; k];
    for (x, &y) in xs.chunks(dim).zip(targets) {
        clamp_to(domain, x, &mut xc);
        let c = fit.cell(&xc, &mut local);
        phi[0] = 1.0;
        phi[1..].copy_from_slice(&local);
        counts[c] += 1;
        sums[c] += y;
        for a in 0..k {
            rhs[c * k + a] += phi[a] * y;
            for b in 0..k {
                grams[(c * k + a) * k + b] += phi[a] * phi[b];
            }
        }
    }
    let mut filled = vec![false; cells];
    for c in 0..cells {
        if counts[c] == 0 {
            continue;
        }
        filled[c] = true;
        let mean = sums[c] / counts[c] as f64;
        let co = &mut fit.coeffs[c * k..(c + 1) * k];
        co.fill(0.0);
        co[0] = mean;
        if counts[c] > k {
            let g = DMatrix::from_row_slice(k, k, &grams[c * k * k..(c + 1) * k * k]);
            let r = DVector::from_column_slice(&rhs[c * k..(c + 1) * k]);
            let svd = g.svd(true, true);
            let tol = svd.singular_values.max() * 1e-10;
            if svd.singular_values.iter().all(|&s| s > tol) {
                if let Ok(sol) = svd.solve(&r, tol) {
                    co.copy_from_slice(sol.as_slice());
                }
            }
        }
    }
    // empty cells copy the nearest filled cell, in index-space distance
    let unravel = |mut c: usize| {
        let mut idx = vec![0usize; dim];
        for j in (0..dim).rev() {
            idx[j] = c % bins;
            c /= bins;
        }
        idx
    };
    for c in 0..cells {
        if filled[c] {
            continue;
        }
        let ic = unravel(c);
        let src = (0..cells).filter(|&o| filled[o]).min_by_key(|&o| {
            unravel(o)
                .iter()
                .zip(&ic)
                .map(|(a, b)| a.abs_diff(*b).pow(2))
                .sum::<usize>()
        });
        if let Some(o) = src {
            // keep the neighbour's constant part only: its slope is centred elsewhere
            let v = fit.coeffs[o * k];
            let co = &mut fit.coeffs[c * k..(c + 1) * k];
            co.fill(0.0);
            co[0] = v;
        }
    }
    let ff = FittedFunction::Local(fit.clone());
    let sq: f64 = xs
        .chunks(dim)
        .zip(targets)
        .map(|(x, &y)| (y - ff.value(x)).powi(2))
        .sum();
    fit.residual_rms = (sq / targets.len().max(1) as f64).sqrt();
    fit
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_count() {
        assert_eq!(exponents(1, 3).len(), 4);
        assert_eq!(exponents(2, 2).len(), 6);
        assert_eq!(RegressionBasis::polynomial(3).span_dim(3), 20);
    }

    #[test]
    fn recovers_cubic_exactly() {
        let xs: Vec<f64> = (0..200).map(|i| -2.0 + i as f64 * 0.02).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - x + 0.5 * x * x * x).collect();
        let dom = empirical_domain(&xs, 1);
        let f = RegressionBasis::polynomial(3)
            .fit(&dom, &xs, &ys, 0)
            .unwrap();
        for x in [-1.7, 0.0, 0.3, 1.9] {
            let want = 1.0 - x + 0.5 * x * x * x;
            assert!((f.value(&[x]) - want).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_data_gives_constant() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 7.0).collect();
        let ys = vec![3.25; 50];
        let dom = empirical_domain(&xs, 1);
        let f = RegressionBasis::polynomial(0)
            .fit(&dom, &xs, &ys, 0)
            .unwrap();
        for x in [-3.0, 0.5, 99.0] {
            assert!((f.value(&[x]) - 3.25).abs() < 1e-12);
        }
    }

    #[test]
    fn dirac_cloud_fits_mean() {
        let xs = vec![0.5; 10];
        let ys: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let dom = empirical_domain(&xs, 1);
        let f = RegressionBasis::polynomial(3)
            .fit(&dom, &xs, &ys, 0)
            .unwrap();
        assert!((f.value(&[0.5]) - 4.5).abs() < 1e-12);
    }

    #[test]
    fn too_few_paths_for_span() {
        // three distinct points cannot support a quadratic in two variables
        let xs = vec![
            0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 2.0, 2.0, 0.5, 0.3,
        ];
        let ys = vec![1.0; 8];
        let dom = empirical_domain(&xs, 2);
        let err = RegressionBasis::polynomial(2).fit(&dom, &xs, &ys, 4);
        // 5 distinct points < 6 monomials: minimum-norm fit, not an error
        assert!(err.is_ok());
        let xs: Vec<f64> = (0..12).flat_map(|i| [i as f64, 2.0 * i as f64]).collect();
        let ys = vec![1.0; 12];
        let dom = empirical_domain(&xs, 2);
        let err = RegressionBasis::polynomial(2).fit(&dom, &xs, &ys, 4);
        assert!(matches!(err, Err(Error::RankDeficient { step: 4, .. })));
    }

    #[test]
    fn outside_box_is_flagged_and_flat() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let ys: Vec<f64> = xs.clone();
        let f = RegressionBasis::polynomial(1)
            .fit(&[(0.0, 1.0)], &xs, &ys, 0)
            .unwrap();
        let (v, out) = f.evaluate(&[3.0]);
        assert!(out);
        assert!((v - 1.0).abs() < 1e-12);
        assert!(!f.evaluate(&[0.5]).1);
    }

    #[test]
    fn local_linear_reproduces_affine() {
        let xs: Vec<f64> = (0..400).map(|i| -1.0 + i as f64 / 200.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let f = RegressionBasis::local_hypercube(8)
            .fit(&[(-1.0, 1.0)], &xs, &ys, 0)
            .unwrap();
        for x in [-0.9, 0.01, 0.77] {
            assert!((f.value(&[x]) - (2.0 * x + 1.0)).abs() < 1e-9);
        }
    }
}
