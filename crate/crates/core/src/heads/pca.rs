use lessvit_tensor::Tensor;

use crate::error::{LessError, Result};

const MAX_ITERS: usize = 10_000;
const TOLERANCE: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-norm components, strongest first.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Projections min-max scaled to `[0, 1]` per component, `[n, k]`.
    pub scores: Tensor,
}

fn covariance(x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, d) = x.dims2()?;
    let mut mean = vec![0.0; d];
    for row in x.data().chunks(d) {
        row.iter().zip(&mut mean).for_each(|(v, m)| *m += v / n as f64);
    }
    let mut cov = vec![0.0; d * d];
    for row in x.data().chunks(d) {
        for i in 0..d {
            let a = row[i] - mean[i];
            for j in 0..d {
                cov[i * d + j] += a * (row[j] - mean[j]);
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    cov.iter_mut().for_each(|v| *v /= denom);
    Ok((mean, cov))
}

/// Sample covariance `[d, d]` with the `n − 1` denominator.
pub fn covariance_matrix(x: &Tensor) -> Result<Tensor> {
    let (_, d) = x.dims2()?;
    Ok(Tensor::new(&[d, d], covariance(x)?.1)?)
}

fn matvec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d)
        .map(|i| m[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Top principal components of the rows of `x` by power iteration with
/// deflation. Stops early, with a warning, when the residual variance runs out.
pub fn pca_patch_features(x: &Tensor, n_components: usize) -> Result<Pca> {
    let (n, d) = x.dims2()?;
    if n < n_components || n == 0 {
        return Err(LessError::Contract(format!("{n} samples for {n_components} components")));
    }
    let (mean, mut cov) = covariance(x)?;
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let floor = trace.abs() * 1e-12;
    let mut components: Vec<Vec<f64>> = Vec::new();
    let mut eigenvalues = Vec::new();
    for c in 0..n_components.min(d) {
        let mut v: Vec<f64> = (0..d).map(|i| 1.0 + ((i * 7 + c * 13) % 11) as f64 * 0.1).collect();
        let mut lambda = 0.0;
        for _ in 0..MAX_ITERS {
            let mut w = matvec(&cov, &v);
            for u in &components {
                let dot: f64 = w.iter().zip(u).map(|(a, b)| a * b).sum();
                w.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
            }
            let norm = normalize(&mut w);
            if norm <= floor {
                lambda = 0.0;
                break;
            }
            let delta = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = w;
            lambda = norm;
            if delta < TOLERANCE {
                break;
            }
        }
        if lambda <= floor {
            log::warn!(
                "covariance has rank {} below the {n_components} requested components",
                components.len()
            );
            break;
        }
        let rayleigh: f64 = matvec(&cov, &v).iter().zip(&v).map(|(a, b)| a * b).sum();
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] -= rayleigh * v[i] * v[j];
            }
        }
        eigenvalues.push(rayleigh);
        components.push(v);
    }
    let k = components.len();
    let mut raw = vec![0.0; n * k];
    for (r, row) in x.data().chunks(d).enumerate() {
        for (j, u) in components.iter().enumerate() {
            raw[r * k + j] = row.iter().zip(&mean).zip(u).map(|((v, m), w)| (v - m) * w).sum();
        }
    }
    for j in 0..k {
        let col = (0..n).map(|r| raw[r * k + j]);
        let lo = col.clone().fold(f64::INFINITY, f64::min);
        let hi = col.fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for r in 0..n {
            raw[r * k + j] = if span > 0.0 { (raw[r * k + j] - lo) / span } else { 0.0 };
        }
    }
    Ok(Pca {
        mean,
        components,
        eigenvalues,
        scores: Tensor::new(&[n, k], raw)?,
    })
}

/// Binary PPM of a `rows × cols` patch grid; components map to R, G, B.
pub fn scores_to_ppm(scores: &Tensor, rows: usize, cols: usize) -> Result<Vec<u8>> {
    let (n, k) = scores.dims2()?;
    if n != rows * cols {
        return Err(LessError::Dimension(format!("{n} scores for a {rows}x{cols} grid")));
    }
    let mut out = format!("P6\n{cols} {rows}\n255\n").into_bytes();
    for r in 0..n {
        for ch in 0..3 {
            let v = if ch < k { scores.data()[r * k + ch] } else { 0.0 };
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Ok(out)
}

/// One line per grid row, components separated by `/` within a cell.
pub fn scores_to_text(scores: &Tensor, rows: usize, cols: usize) -> Result<String> {
    let (n, k) = scores.dims2()?;
    if n != rows * cols {
        return Err(LessError::Dimension(format!("{n} scores for a {rows}x{cols} grid")));
    }
    let mut lines = Vec::with_capacity(rows);
    for r in 0..rows {
        let cells: Vec<String> = (0..cols)
            .map(|c| {
                let i = r * cols + c;
                (0..k)
                    .map(|j| format!("{:.3}", scores.data()[i * k + j]))
                    .collect::<Vec<_>>()
                    .join("/")
            })
            .collect();
        lines.push(cells.join(" "));
    }
    Ok(lines.join("\n") + "\n")
}
