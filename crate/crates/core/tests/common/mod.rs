#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use ne_seek::{Graph, QuadraticGame};
use rand::Rng;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data").join(name)
}

/// One row of the 50-digit gain-schedule fixture.
#[derive(Debug, Clone, Copy, serde::Deserialize)]
pub struct GainRow {
    pub tp: f64,
    pub t: f64,
    pub k: f64,
    pub ln_q: f64,
}

pub fn gain_fixture() -> Vec<GainRow> {
    let mut r = csv::Reader::from_path(data_path("gain_schedule.csv")).expect("fixture present");
    r.deserialize().map(|row| row.expect("well-formed fixture row")).collect()
}

/// Adaptive Cash–Karp 4(5) integration of a scalar ODE `y' = f(t, y)` from
/// `t0` to `t1`, with local error per step kept below `tol · (1 + |y|)`.
pub fn cash_karp<F: Fn(f64, f64) -> f64>(f: F, t0: f64, y0: f64, t1: f64, tol: f64) -> f64 {
    const A: [[f64; 5]; 6] = [
        [0.0; 5],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
        [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
        [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
        [1631.0 / 55296.0, 175.0 / 512.0, 575.0 / 13824.0, 44275.0 / 110592.0, 253.0 / 4096.0],
    ];
    const C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 3.0 / 5.0, 1.0, 7.0 / 8.0];
    const B5: [f64; 6] = [37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0];
    const B4: [f64; 6] = [
        2825.0 / 27648.0,
        0.0,
        18575.0 / 48384.0,
        13525.0 / 55296.0,
        277.0 / 14336.0,
        1.0 / 4.0,
    ];
    let (mut t, mut y) = (t0, y0);
    let mut h = (t1 - t0) / 100.0;
    while t < t1 {
        if t + h > t1 {
            h = t1 - t;
        }
        let mut k = [0.0; 6];
        for s in 0..6 {
            let acc: f64 = (0..s).map(|j| A[s][j] * k[j]).sum();
            k[s] = f(t + C[s] * h, y + h * acc);
        }
        let y5 = y + h * (0..6).map(|j| B5[j] * k[j]).sum::<f64>();
        let y4 = y + h * (0..6).map(|j| B4[j] * k[j]).sum::<f64>();
        let err = (y5 - y4).abs() / (tol * (1.0 + y5.abs()));
        if err <= 1.0 {
            t += h;
            y = y5;
        }
        h *= (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
    }
    y
}

/// Erdős–Rényi graph with random positive weights; may be disconnected.
pub fn random_graph<R: Rng>(rng: &mut R, nodes: usize, p: f64) -> Graph {
    let mut w = DMatrix::zeros(nodes, nodes);
    for i in 0..nodes {
        for j in i + 1..nodes {
            if rng.random_bool(p) {
                let v = rng.random_range(0.2..2.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    Graph::new(w).expect("structurally valid")
}

/// Random connected graph: a random spanning tree plus extra edges.
pub fn random_connected_graph<R: Rng>(rng: &mut R, nodes: usize) -> Graph {
    let mut edges = Vec::new();
    for i in 1..nodes {
        edges.push((rng.random_range(0..i), i, rng.random_range(0.5..1.5)));
    }
    for _ in 0..nodes / 2 {
        let (i, j) = (rng.random_range(0..nodes), rng.random_range(0..nodes));
        if i != j {
            edges.push((i, j, rng.random_range(0.5..1.5)));
        }
    }
    Graph::from_edges(nodes, &edges).expect("valid edges")
}

/// Random feasible deviation of player `i` around `x_star`.
pub fn random_deviation<R: Rng>(rng: &mut R, game: &QuadraticGame, x_star: &DVector<f64>, i: usize) -> DVector<f64> {
    let mut x = x_star.clone();
    let (off, d) = (game.offset(i), game.dims()[i]);
    let radius = 10f64.powf(rng.random_range(-4.0..1.0));
    for r in off..off + d {
        x[r] += rng.random_range(-radius..radius);
    }
    if let Some(c) = game.constraint(i) {
        let g = c.value(x.rows(off, d));
        if g > 0.0 {
            let shift = &c.coeff * (g / c.coeff.norm_squared());
            let mut own = x.rows_mut(off, d);
            own -= shift;
        }
    }
    x
}
