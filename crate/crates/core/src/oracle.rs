//! Ground truth for the seeking dynamics: the exact Nash equilibrium with its
//! KKT multipliers, a projected-gradient cross-check, and the constants of
//! the Lyapunov analysis (edge-gain threshold, rate matrix, decay envelope).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen};
use serde::Serialize;

use crate::dynamics::{GainSchedule, SeekerState};
use crate::error::{Error, Result};
use crate::game::QuadraticGame;
use crate::network::Graph;

/// Slack on the KKT sign and feasibility checks of a candidate pattern.
const KKT_TOL: f64 = 1e-10;

/// Exact equilibrium of a strongly monotone game with affine constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub x_star: DVector<f64>,
    /// One multiplier per player; zero for unconstrained or inactive players.
    pub multipliers: DVector<f64>,
    pub active_set: Vec<bool>,
    /// `‖M x* + m + Σ λ_i E_i a_i‖`.
    pub stationarity: f64,
}

/// Enumerates every active/inactive pattern over the constrained players and
/// returns the one satisfying all KKT conditions.
pub fn solve_kkt(game: &QuadraticGame) -> Result<KktSolution> {
    let players = game.n_players();
    let n = game.total_dim();
    let constrained: Vec<usize> = (0..players).filter(|&i| game.constraint(i).is_some()).collect();
    if constrained.len() > 24 {
        return Err(Error::InvalidGame(format!(
            "{} constrained players is too many for pattern enumeration",
            constrained.len()
        )));
    }

    let mut best: Option<(f64, KktSolution)> = None;
    let mut best_violation = f64::INFINITY;
    for pattern in 0u32..(1u32 << constrained.len()) {
        let active: Vec<usize> = constrained
            .iter()
            .enumerate()
            .filter(|(bit, _)| pattern & (1 << bit) != 0)
            .map(|(_, &i)| i)
            .collect();
        let size = n + active.len();
        let mut kkt = DMatrix::zeros(size, size);
        let mut rhs = DVector::zeros(size);
        kkt.view_mut((0, 0), (n, n)).copy_from(game.matrix());
        rhs.rows_mut(0, n).copy_from(&(-game.shift()));
        for (row, &i) in active.iter().enumerate() {
            let c = game.constraint(i).expect("active players are constrained");
            let o = game.offset(i);
            for (k, a) in c.coeff.iter().enumerate() {
                kkt[(o + k, n + row)] = *a;
                kkt[(n + row, o + k)] = *a;
            }
            rhs[n + row] = c.offset;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };

        let x = sol.rows(0, n).into_owned();
        let mut multipliers = DVector::zeros(players);
        let mut active_set = vec![false; players];
        let mut violation = 0.0f64;
        for (row, &i) in active.iter().enumerate() {
            let lambda = sol[n + row];
            violation = violation.max(-lambda);
            multipliers[i] = lambda.max(0.0);
            active_set[i] = true;
        }
        for &i in &constrained {
            if !active_set[i] {
                let g = game.constraint_value(i, game.block(i, &x)).unwrap();
                violation = violation.max(g);
            }
        }
        best_violation = best_violation.min(violation);
        if violation > KKT_TOL {
            continue;
        }
        let stationarity = kkt_stationarity(game, &x, &multipliers);
        let candidate = KktSolution { x_star: x, multipliers, active_set, stationarity };
        if best.as_ref().is_none_or(|(v, _)| violation < *v) {
            best = Some((violation, candidate));
        }
    }
    best.map(|(_, s)| s).ok_or(Error::NoKktPattern { best_residual: best_violation })
}

fn kkt_stationarity(game: &QuadraticGame, x: &DVector<f64>, multipliers: &DVector<f64>) -> f64 {
    let mut r = game.matrix() * x + game.shift();
    for i in 0..game.n_players() {
        if let Some(c) = game.constraint(i) {
            r.rows_mut(game.offset(i), game.dims()[i]).axpy(multipliers[i], &c.coeff, 1.0);
        }
    }
    r.norm()
}

/// Fixed-point iteration `x ← Π_Ω(x − step·F(x))`, stopping once
/// `‖x_{k+1} − x_k‖ ≤ 1e-12`.
pub fn projected_pseudo_gradient(game: &QuadraticGame, step: f64, iters: usize) -> Result<DVector<f64>> {
    let (mu, l) = game.monotonicity_constants();
    if !(step > 0.0 && step < 2.0 * mu / (l * l)) {
        return Err(Error::Domain(format!(
            "step {step} outside (0, 2mu/l^2 = {})",
            2.0 * mu / (l * l)
        )));
    }
    let mut x = DVector::zeros(game.total_dim());
    game.project(&mut x);
    let mut delta = f64::INFINITY;
    for _ in 0..iters {
        let mut next = &x - (game.matrix() * &x + game.shift()) * step;
        game.project(&mut next);
        delta = (&next - &x).norm();
        x = next;
        if delta <= 1e-12 {
            return Ok(x);
        }
    }
    Err(Error::NotConverged { iters, residual: delta })
}

/// `ω̲ = (l² + lμ) / (μ λ2²)`.
pub fn omega_lower_bound(mu: f64, l: f64, lambda2: f64) -> f64 {
    (l * l + l * mu) / (mu * lambda2 * lambda2)
}

/// The rate matrix of the Lyapunov bound `V̇ ≤ −k(t) θ V`, with
/// `θ = λ_min(Ξ)`.
pub fn xi_matrix(players: usize, mu: f64, l: f64, omega_star: f64, lambda2: f64) -> Result<(Matrix4<f64>, f64)> {
    let nf = players as f64;
    let off = -l / nf.sqrt();
    let xi = Matrix4::new(
        mu / nf, off, 0.0, 0.0,
        off, omega_star * lambda2 * lambda2 - l, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    );
    let theta = SymmetricEigen::new(xi).eigenvalues.min();
    let omega_bar = omega_lower_bound(mu, l, lambda2);
    if omega_star <= omega_bar || theta <= 0.0 {
        return Err(Error::Threshold { omega_star, omega_bar, lambda_min: theta });
    }
    Ok((xi, theta))
}

/// `(1/M) exp(−(2θTp/π) tan(πt / 2Tp)) V0` with `M = ½`.
pub fn decay_envelope(v0: f64, theta: f64, schedule: &GainSchedule, t: f64) -> Result<f64> {
    let tp = schedule.tp();
    let s = crate::integrator::reparameterize(tp, t)?;
    Ok(2.0 * (-2.0 * theta * tp / PI * s).exp() * v0)
}

/// `V = ½‖X − 1⊗x*‖² + (1/2q)(‖σ − σ̃‖² + ‖ω − ω̃‖²_{Γ⁻¹})`.
pub fn lyapunov_value(
    state: &SeekerState,
    x_star: &DVector<f64>,
    sigma_ref: &DVector<f64>,
    omega_ref: &DVector<f64>,
    schedule: &GainSchedule,
) -> f64 {
    let n = x_star.len();
    let mut estimate_sq = 0.0;
    for i in 0..state.n_players() {
        estimate_sq += (state.x.rows(i * n, n) - x_star).norm_squared();
    }
    let sigma_sq = (&state.sigma - sigma_ref).norm_squared();
    let omega_sq: f64 = state
        .omega
        .iter()
        .zip(omega_ref.iter())
        .zip(schedule.gamma().iter())
        .map(|((w, r), g)| (w - r).powi(2) / g)
        .sum();
    0.5 * estimate_sq + (sigma_sq + omega_sq) / (2.0 * state.q)
}

/// Equilibrium plus the analysis constants for one game on one graph.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub x_star: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub active_set: Vec<bool>,
    pub kkt_stationarity: f64,
    pub mu: f64,
    pub l: f64,
    pub lambda2: f64,
    pub omega_bar: f64,
    /// `ω*` used for `Ξ`, when one was supplied.
    pub omega_star: Option<f64>,
    pub theta: Option<f64>,
    pub xi: Option<[[f64; 4]; 4]>,
}

impl EquilibriumReport {
    /// Solves for the equilibrium and, when `omega_star` exceeds `ω̲`, also
    /// evaluates `Ξ` and `θ`.
    pub fn build(game: &QuadraticGame, graph: &Graph, omega_star: Option<f64>) -> Result<Self> {
        let kkt = solve_kkt(game)?;
        let (mu, l) = game.monotonicity_constants();
        let lambda2 = graph.lambda2()?;
        let omega_bar = omega_lower_bound(mu, l, lambda2);
        let (theta, xi) = match omega_star {
            Some(w) if w > omega_bar => {
                let (xi, theta) = xi_matrix(game.n_players(), mu, l, w, lambda2)?;
                let rows = std::array::from_fn(|r| std::array::from_fn(|c| xi[(r, c)]));
                (Some(theta), Some(rows))
            }
            _ => (None, None),
        };
        Ok(Self {
            x_star: kkt.x_star.iter().copied().collect(),
            multipliers: kkt.multipliers.iter().copied().collect(),
            active_set: kkt.active_set,
            kkt_stationarity: kkt.stationarity,
            mu,
            l,
            lambda2,
            omega_bar,
            omega_star,
            theta,
            xi,
        })
    }

    pub fn x_star(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x_star)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::PlayerCost;
    use approx::assert_relative_eq;

    fn scalar(q: f64, b: f64) -> PlayerCost {
        PlayerCost::new(DMatrix::from_element(1, 1, q), DVector::from_element(1, b))
    }

    fn hand_game() -> QuadraticGame {
        // J_1 = (x_1 − 1)², x_1 ≤ 0.5;  J_2 = (x_2 + 1)², x_2 ≤ 10 (inactive).
        let p1 = scalar(2.0, -2.0).with_constraint(DVector::from_element(1, 1.0), 0.5);
        let p2 = scalar(2.0, 2.0).with_constraint(DVector::from_element(1, 1.0), 10.0);
        QuadraticGame::new(vec![p1, p2], vec![]).unwrap()
    }

    #[test]
    fn kkt_hand_example() {
        let sol = solve_kkt(&hand_game()).unwrap();
        assert_relative_eq!(sol.x_star[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(sol.x_star[1], -1.0, epsilon = 1e-14);
        assert_relative_eq!(sol.multipliers[0], 1.0, epsilon = 1e-14);
        assert_eq!(sol.multipliers[1], 0.0);
        assert_eq!(sol.active_set, vec![true, false]);
        assert!(sol.stationarity < 1e-12);
    }

    #[test]
    fn kkt_unconstrained_is_linear_solve() {
        let p = |b: f64| scalar(2.0, b).with_constraint(DVector::from_element(1, 1.0), 1e9);
        let game = QuadraticGame::new(vec![p(-2.0), p(2.0)], vec![]).unwrap();
        let sol = solve_kkt(&game).unwrap();
        let direct = game.matrix().clone().lu().solve(&(-game.shift())).unwrap();
        assert_relative_eq!((sol.x_star - direct).norm(), 0.0, epsilon = 1e-14);
        assert_eq!(sol.multipliers, DVector::zeros(2));
    }

    #[test]
    fn projected_gradient_examples() {
        let game = QuadraticGame::new(vec![scalar(2.0, -2.0)], vec![]).unwrap();
        let x = projected_pseudo_gradient(&game, 0.25, 10_000).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-10);

        let x = projected_pseudo_gradient(&hand_game(), 0.25, 10_000).unwrap();
        assert_relative_eq!(x[0], 0.5, epsilon = 1e-6);
        assert_relative_eq!(x[1], -1.0, epsilon = 1e-6);

        assert!(projected_pseudo_gradient(&game, 1.0, 10).is_err());
    }

    #[test]
    fn omega_lower_bound_examples() {
        assert_eq!(omega_lower_bound(1.0, 2.0, 1.0), 6.0);
        assert_eq!(omega_lower_bound(1.0, 1.0, 1.0), 2.0);
        assert_eq!(omega_lower_bound(1.0, 2.0, 2.0), 1.5);
    }

    #[test]
    fn xi_examples() {
        let (xi, theta) = xi_matrix(1, 1.0, 1.0, 2.0, 2.0).unwrap();
        assert_eq!(xi[(1, 1)], 7.0);
        assert_eq!(xi[(0, 1)], -1.0);
        assert_relative_eq!(theta, 4.0 - 10f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(theta, 0.837_722_339_831_620_7, epsilon = 1e-14);

        let bar = omega_lower_bound(1.0, 2.0, 1.0);
        assert!(matches!(xi_matrix(3, 1.0, 2.0, bar, 1.0), Err(Error::Threshold { .. })));
    }

    #[test]
    fn envelope_examples() {
        let sched = GainSchedule::uniform(10.0, 0.001, 1.0, 1).unwrap();
        assert_eq!(decay_envelope(3.0, 0.4, &sched, 0.0).unwrap(), 6.0);
        let theta = PI / 20.0;
        assert_relative_eq!(
            decay_envelope(1.5, theta, &sched, 5.0).unwrap(),
            3.0 * (-1.0f64).exp(),
            max_relative = 1e-14
        );
        let mut prev = f64::INFINITY;
        for k in 0..100 {
            let e = decay_envelope(1.0, 0.3, &sched, 9.99 * k as f64 / 100.0).unwrap();
            assert!(e < prev);
            prev = e;
        }
        assert!(decay_envelope(1.0, 0.3, &sched, 9.999).unwrap() < 1e-100);
    }

    #[test]
    fn lyapunov_examples() {
        let sched = GainSchedule::uniform(10.0, 0.001, 1.0, 2).unwrap();
        let x_star = DVector::from_vec(vec![0.5, -1.0]);
        let sigma = DVector::from_vec(vec![1.0, 2.0]);
        let omega = DVector::from_vec(vec![3.0, 4.0]);
        let at_ref = SeekerState::consensus(&x_star, sigma.clone(), omega.clone(), 1.0);
        assert_eq!(lyapunov_value(&at_ref, &x_star, &sigma, &omega, &sched), 0.0);

        let mut bumped = at_ref.clone();
        bumped.sigma[0] += 1.0;
        assert_eq!(lyapunov_value(&bumped, &x_star, &sigma, &omega, &sched), 0.5);
    }

    #[test]
    fn report_for_hand_game() {
        let r = EquilibriumReport::build(&hand_game(), &Graph::path(2), Some(100.0)).unwrap();
        assert_eq!(r.mu, 2.0);
        assert_relative_eq!(r.omega_bar, (4.0 + 4.0) / (2.0 * 4.0), epsilon = 1e-12);
        assert!(r.theta.unwrap() > 0.0);
        let r = EquilibriumReport::build(&hand_game(), &Graph::path(2), None).unwrap();
        assert!(r.theta.is_none());
    }
}
