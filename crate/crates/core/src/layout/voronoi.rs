//! Area-proportional power diagrams inside a convex region.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::geometry::{area, bounds, centroid, contains, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop once every cell is within this relative error of its target.
    pub tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerDiagram {
    pub sites: Vec<Point>,
    pub weights: Vec<f64>,
    pub cells: Vec<Vec<Point>>,
    pub iterations: usize,
    pub max_relative_error: f64,
    pub converged: bool,
}

/// Power-diagram cells of `sites` clipped to the convex `region`.
pub fn power_cells(region: &[Point], sites: &[Point], weights: &[f64]) -> Vec<Vec<Point>> {
    labeled_cells(region, sites, weights)
        .into_iter()
        .map(|c| c.vertices)
        .collect()
}

/// Seeded jittered grid: `n` distinct points inside the convex `region`.
pub fn jittered_sites(region: &[Point], n: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = bounds(region);
    let (w, h) = (hi.x - lo.x, hi.y - lo.y);
    let mut k = ((n as f64).sqrt().ceil() as usize).max(1);
    loop {
        let cols = ((k as f64 * (w / h).sqrt()).ceil() as usize).max(1);
        let rows = ((k as f64 * (h / w).sqrt()).ceil() as usize).max(1);
        let (cw, ch) = (w / cols as f64, h / rows as f64);
        let mut centers = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let p = Point::new(lo.x + (c as f64 + 0.5) * cw, lo.y + (r as f64 + 0.5) * ch);
                if contains(region, p) {
                    centers.push(p);
                }
            }
        }
        if centers.len() >= n {
            let stride = centers.len() as f64 / n as f64;
            return (0..n)
                .map(|i| {
                    let base = centers[(i as f64 * stride) as usize];
                    let p = Point::new(
                        base.x + rng.gen_range(-0.3..0.3) * cw,
                        base.y + rng.gen_range(-0.3..0.3) * ch,
                    );
                    if contains(region, p) {
                        p
                    } else {
                        base
                    }
                })
                .collect();
        }
        k += 1;
    }
}

/// A cell with, for each edge starting at vertex k, the neighbouring site
/// that produced it (`None` on the region boundary).
#[derive(Debug, Clone, Default)]
struct LabeledCell {
    vertices: Vec<Point>,
    edges: Vec<Option<usize>>,
}

fn clip_labeled(cell: &LabeledCell, a: f64, b: f64, c: f64, label: usize) -> LabeledCell {
    let n = cell.vertices.len();
    let mut out = LabeledCell::default();
    for k in 0..n {
        let p = cell.vertices[k];
        let q = cell.vertices[(k + 1) % n];
        let fp = a * p.x + b * p.y - c;
        let fq = a * q.x + b * q.y - c;
        if fp <= 0.0 {
            out.vertices.push(p);
            out.edges.push(cell.edges[k]);
        }
        if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
            let t = fp / (fp - fq);
            out.vertices
                .push(Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)));
            // leaving the half-plane starts an edge on the clipping line
            out.edges.push(if fp < 0.0 { Some(label) } else { cell.edges[k] });
        }
    }
    if out.vertices.len() < 3 {
        return LabeledCell::default();
    }
    out
}

fn labeled_cell(
    region: &[Point],
    sites: &[Point],
    weights: &[f64],
    i: usize,
    order: &mut Vec<(f64, usize)>,
    w_max: f64,
) -> LabeledCell {
    let s = sites[i];
    let wi = weights[i];
    order.clear();
    order.extend(
        sites
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, p)| (s.dist2(*p), j)),
    );
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut cell = LabeledCell {
        vertices: region.to_vec(),
        edges: vec![None; region.len()],
    };
    for &(d2, j) in order.iter() {
        if cell.vertices.is_empty() {
            break;
        }
        let d = d2.sqrt();
        if d > 0.0 {
            let reach = (d2 + wi - w_max) / (2.0 * d);
            let radius2 = cell.vertices.iter().map(|p| s.dist2(*p)).fold(0.0, f64::max);
            if reach > 0.0 && reach * reach > radius2 {
                break;
            }
        }
        let o = sites[j];
        let a = 2.0 * (o.x - s.x);
        let b = 2.0 * (o.y - s.y);
        if a == 0.0 && b == 0.0 {
            if weights[j] > wi || (weights[j] == wi && j < i) {
                cell = LabeledCell::default();
            }
            continue;
        }
        let c = o.x * o.x + o.y * o.y - s.x * s.x - s.y * s.y - weights[j] + wi;
        cell = clip_labeled(&cell, a, b, c, j);
    }
    cell
}

fn labeled_cells(region: &[Point], sites: &[Point], weights: &[f64]) -> Vec<LabeledCell> {
    let w_max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut order = Vec::with_capacity(sites.len());
    (0..sites.len())
        .map(|i| labeled_cell(region, sites, weights, i, &mut order, w_max))
        .collect()
}

/// Fits a power diagram of `region` whose cell areas are proportional to
/// `targets` (shares summing to 1).
///
/// Sites start on a seeded jittered grid. While the error is large, each
/// iteration moves sites to their cell centroids and rescales weights by the
/// clamped ratio of target to actual share, capping weights by the squared
/// nearest-neighbour distance so no site leaves its own cell. This shapes the
/// cells but stalls for uneven targets, so once it stops improving the sites
/// are frozen and the weights are refined with damped Newton steps, using the
/// fact that ∂area_i/∂w_j = -|edge_ij| / (2·|s_i - s_j|).
pub fn fit(region: &[Point], targets: &[f64], seed: u64, opts: SolverOptions) -> PowerDiagram {
    let n = targets.len();
    let total = area(region);
    if n == 1 {
        return PowerDiagram {
            sites: vec![centroid(region).expect("non-empty region")],
            weights: vec![0.0],
            cells: vec![region.to_vec()],
            iterations: 0,
            max_relative_error: 0.0,
            converged: true,
        };
    }
    let mut sites = jittered_sites(region, n, seed);
    let mut weights: Vec<f64> = targets
        .iter()
        .map(|t| t * total / std::f64::consts::PI * 0.25)
        .collect();
    cap_weights(&sites, &mut weights);
    let shaping = (opts.max_iterations / 5).max(1);
    let mut iterations = 0;
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    let mut cells = labeled_cells(region, &sites, &weights);
    let mut err = errors(&cells, targets, total);
    // shaping phase
    while err >= opts.tolerance && iterations < shaping && stalled < 10 {
        iterations += 1;
        for (i, c) in cells.iter().enumerate() {
            if let Some(p) = centroid(&c.vertices) {
                sites[i] = p;
            }
            let share = area(&c.vertices) / total;
            let ratio = if share > 0.0 { targets[i] / share } else { 2.0 };
            weights[i] *= ratio.clamp(0.5, 2.0);
        }
        cap_weights(&sites, &mut weights);
        cells = labeled_cells(region, &sites, &weights);
        err = errors(&cells, targets, total);
        if err < best * 0.99 {
            best = err;
            stalled = 0;
        } else {
            stalled += 1;
        }
    }
    // refinement phase: sites fixed, Newton steps on the weights
    while err >= opts.tolerance && iterations < opts.max_iterations {
        iterations += 1;
        let residual: Vec<f64> = cells
            .iter()
            .zip(targets)
            .map(|(c, &t)| t * total - area(&c.vertices))
            .collect();
        let step = newton_direction(&cells, &sites, &residual);
        let mut tau = 1.0;
        loop {
            let trial: Vec<f64> = weights.iter().zip(&step).map(|(w, d)| w + tau * d).collect();
            let trial_cells = labeled_cells(region, &sites, &trial);
            let trial_err = errors(&trial_cells, targets, total);
            let all_present = trial_cells.iter().all(|c| !c.vertices.is_empty());
            if (all_present && trial_err < err) || tau < 1e-4 {
                weights = trial;
                cells = trial_cells;
                err = trial_err;
                break;
            }
            tau *= 0.5;
        }
    }
    PowerDiagram {
        converged: err < opts.tolerance,
        sites,
        weights,
        cells: cells.into_iter().map(|c| c.vertices).collect(),
        iterations,
        max_relative_error: err,
    }
}

fn errors(cells: &[LabeledCell], targets: &[f64], total: f64) -> f64 {
    cells
        .iter()
        .zip(targets)
        .map(|(c, &t)| ((area(&c.vertices) / total) - t).abs() / t)
        .fold(0.0, f64::max)
}

/// Solves H·δ = residual where H is the (graph-Laplacian) Jacobian of the
/// cell areas with respect to the weights, by conjugate gradients.
fn newton_direction(cells: &[LabeledCell], sites: &[Point], residual: &[f64]) -> Vec<f64> {
    let n = cells.len();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut diag = vec![0.0; n];
    for (i, c) in cells.iter().enumerate() {
        let m = c.vertices.len();
        for k in 0..m {
            if let Some(j) = c.edges[k] {
                let len = c.vertices[k].dist2(c.vertices[(k + 1) % m]).sqrt();
                let d = sites[i].dist2(sites[j]).sqrt();
                if len > 0.0 && d > 0.0 {
                    let h = len / (2.0 * d);
                    rows[i].push((j, h));
                    diag[i] += h;
                }
            }
        }
    }
    // symmetrise: each shared edge is seen from both sides
    let mean = diag.iter().sum::<f64>() / n as f64;
    let reg = mean.max(1e-300) * 1e-9;
    let apply = |x: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let mut v = (diag[i] + reg) * x[i];
            for &(j, h) in &rows[i] {
                v -= h * x[j];
            }
            out[i] = v;
        }
    };
    let mut x = vec![0.0; n];
    let mut r = residual.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let stop = rr * 1e-20;
    for _ in 0..(4 * n).max(50) {
        if rr <= stop {
            break;
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

fn cap_weights(sites: &[Point], weights: &mut [f64]) {
    for i in 0..sites.len() {
        let nn = sites
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, p)| sites[i].dist2(*p))
            .fold(f64::INFINITY, f64::min);
        weights[i] = weights[i].min(nn).max(1e-12);
    }
}
