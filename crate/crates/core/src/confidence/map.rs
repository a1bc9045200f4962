use super::{ConfidenceError, ConfidenceParams};
use crate::imaging::Grid;

const EPS_WEIGHT: f64 = 1e-5;

/// Symmetric positive-definite band matrix stored by lower-triangle rows.
struct BandMatrix {
    n: usize,
    bw: usize,
    /// Row `i`, column `j` (`i − bw ≤ j ≤ i`) at `i·(bw+1) + j + bw − i`.
    data: Vec<f64>,
}

impl BandMatrix {
    fn new(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    #[inline]
    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        debug_assert!(j <= i && i - j <= self.bw);
        &mut self.data[i * (self.bw + 1) + j + self.bw - i]
    }

    /// In-place Cholesky factorisation `A = L·Lᵀ`.
    fn factor(&mut self) -> Result<(), ConfidenceError> {
        let bw = self.bw;
        let stride = bw + 1;
        for i in 0..self.n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let ri = i * stride + bw - i;
                let rj = j * stride + bw - j;
                let s = self.data[ri + j] - dot(&self.data[ri + lo..ri + j], &self.data[rj + lo..rj + j]);
                if i == j {
                    if !(s > 0.0) {
                        return Err(ConfidenceError::Numerical {
                            residual: s,
                            detail: format!("pivot {i} not positive"),
                        });
                    }
                    self.data[ri + i] = s.sqrt();
                } else {
                    self.data[ri + j] = s / self.data[rj + j];
                }
            }
        }
        Ok(())
    }

    /// Solves `L·Lᵀ x = b` after `factor`.
    fn solve(&self, b: &mut [f64]) {
        let bw = self.bw;
        let stride = bw + 1;
        for i in 0..self.n {
            let ri = i * stride + bw - i;
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.data[ri + k] * b[k];
            }
            b[i] = s / self.data[ri + i];
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + bw + 1).min(self.n) {
                s -= self.data[k * stride + bw - k + i] * b[k];
            }
            b[i] = s / self.data[i * stride + bw - i + i];
        }
    }
}

/// Dot product over four independent accumulators, which vectorises.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

type Edge = (usize, usize, f64);

/// 8-connected edges with their raw cost `|Δg|/pixel_step + penalty`, where
/// `g` is the depth-attenuated intensity. Each edge appears once.
fn edge_costs(img: &Grid<f64>, p: &ConfidenceParams, pixel_step: f64) -> Vec<Edge> {
    let (rows, cols) = (img.height(), img.width());
    let depth_norm = (rows - 1) as f64;
    let g = Grid::from_fn(cols, rows, |h, w| {
        img.get(h, w) * (-p.alpha * h as f64 / depth_norm).exp()
    });
    // right, down-left, down, down-right
    let steps: [(isize, isize, f64); 4] = [
        (0, 1, p.gamma),
        (1, -1, std::f64::consts::SQRT_2 * p.gamma),
        (1, 0, 0.0),
        (1, 1, std::f64::consts::SQRT_2 * p.gamma),
    ];
    let mut edges = Vec::with_capacity(rows * cols * 4);
    for h in 0..rows {
        for w in 0..cols {
            for &(dh, dw, pen) in &steps {
                let (h2, w2) = (h as isize + dh, w as isize + dw);
                if h2 < 0 || w2 < 0 || h2 >= rows as isize || w2 >= cols as isize {
                    continue;
                }
                let (h2, w2) = (h2 as usize, w2 as usize);
                edges.push((
                    h * cols + w,
                    h2 * cols + w2,
                    (g.get(h, w) - g.get(h2, w2)).abs() / pixel_step + pen,
                ));
            }
        }
    }
    edges
}

/// Min and max edge cost, the range the weights are normalised over.
pub(super) fn cost_range(img: &Grid<f64>, p: &ConfidenceParams) -> (f64, f64) {
    edge_costs(img, p, 1.0)
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e.2), hi.max(e.2)))
}

/// Random-walk confidence at the image's own resolution.
///
/// `pixel_step` is how many original pixels one grid step spans; intensity
/// differences are divided by it so a shrunk image keeps the per-pixel
/// gradients of the original. `range` overrides the cost normalisation so a
/// shrunk image can reuse the original's.
pub(super) fn solve_full(
    img: &Grid<f64>,
    p: &ConfidenceParams,
    pixel_step: f64,
    range: Option<(f64, f64)>,
) -> Result<Grid<f64>, ConfidenceError> {
    let (rows, cols) = (img.height(), img.width());
    if rows < 2 || cols < 1 {
        return Err(ConfidenceError::InvalidArgument(
            "image needs at least 2 rows".into(),
        ));
    }
    let mut out = Grid::filled(cols, rows, 0.0);
    for w in 0..cols {
        out.set(0, w, 1.0);
    }
    if rows == 2 {
        return Ok(out);
    }

    let mut edges = edge_costs(img, p, pixel_step);
    let (lo, hi) = range.unwrap_or_else(|| {
        edges
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e.2), hi.max(e.2)))
    });
    let span = if hi > lo { hi - lo } else { 1.0 };
    for e in &mut edges {
        e.2 = (-p.beta * (e.2 - lo).max(0.0) / span).exp() + EPS_WEIGHT;
    }

    // Unknowns are the interior rows, numbered row by row.
    let n = (rows - 2) * cols;
    let unknown = |idx: usize| -> Option<usize> {
        let h = idx / cols;
        (h > 0 && h < rows - 1).then(|| idx - cols)
    };
    let mut a = BandMatrix::new(n, cols + 1);
    let mut rhs = vec![0.0; n];
    for &(i, j, wt) in &edges {
        match (unknown(i), unknown(j)) {
            (Some(ui), Some(uj)) => {
                *a.at(ui, ui) += wt;
                *a.at(uj, uj) += wt;
                let (r, c) = if ui > uj { (ui, uj) } else { (uj, ui) };
                *a.at(r, c) -= wt;
            }
            (Some(u), None) | (None, Some(u)) => {
                *a.at(u, u) += wt;
                let other = if unknown(i).is_some() { j } else { i };
                if other < cols {
                    rhs[u] += wt;
                }
            }
            (None, None) => {}
        }
    }
    let original = rhs.clone();
    let diag: Vec<f64> = (0..n).map(|i| a.data[i * (a.bw + 1) + a.bw]).collect();
    a.factor()?;
    a.solve(&mut rhs);

    // Cheap sanity residual on the diagonal-dominant system.
    let bad = rhs.iter().any(|v| !v.is_finite());
    if bad {
        let r = original.iter().zip(&diag).map(|(b, d)| (b / d).abs()).fold(0.0, f64::max);
        return Err(ConfidenceError::Numerical {
            residual: r,
            detail: "non-finite solution".into(),
        });
    }
    for (u, v) in rhs.iter().enumerate() {
        let idx = u + cols;
        out.set(idx / cols, idx % cols, v.clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Area-weighted resampling taps mapping `n` source samples onto `m`.
fn area_taps(n: usize, m: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n as f64 / m as f64;
    (0..m)
        .map(|j| {
            let (a, b) = (j as f64 * scale, (j + 1) as f64 * scale);
            let mut taps = Vec::new();
            let mut k = a.floor() as usize;
            while (k as f64) < b && k < n {
                let overlap = (b.min(k as f64 + 1.0) - a.max(k as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push((k, overlap / scale));
                }
                k += 1;
            }
            taps
        })
        .collect()
}

pub(super) fn downsample(img: &Grid<f64>, factor: usize) -> Grid<f64> {
    let (h, w) = (img.height(), img.width());
    let (hs, ws) = (h.div_ceil(factor).max(2), w.div_ceil(factor).max(1));
    let rt = area_taps(h, hs);
    let ct = area_taps(w, ws);
    Grid::from_fn(ws, hs, |i, j| {
        let mut s = 0.0;
        for &(r, wr) in &rt[i] {
            for &(c, wc) in &ct[j] {
                s += wr * wc * img.get(r, c);
            }
        }
        s
    })
}

/// Bilinear upsampling with corners aligned.
pub(super) fn upsample(small: &Grid<f64>, width: usize, height: usize) -> Grid<f64> {
    let (hs, ws) = (small.height(), small.width());
    let coord = |i: usize, n: usize, ns: usize| -> (usize, usize, f64) {
        if n <= 1 || ns <= 1 {
            return (0, 0, 0.0);
        }
        let x = i as f64 * (ns - 1) as f64 / (n - 1) as f64;
        let i0 = (x.floor() as usize).min(ns - 1);
        let i1 = (i0 + 1).min(ns - 1);
        (i0, i1, x - i0 as f64)
    };
    Grid::from_fn(width, height, |h, w| {
        let (h0, h1, fh) = coord(h, height, hs);
        let (w0, w1, fw) = coord(w, width, ws);
        let top = small.get(h0, w0) * (1.0 - fw) + small.get(h0, w1) * fw;
        let bot = small.get(h1, w0) * (1.0 - fw) + small.get(h1, w1) * fw;
        top * (1.0 - fh) + bot * fh
    })
}
