//! State, gain schedule and vector field of the seeking dynamics.
//!
//! Every player `i` keeps an estimate `x^i ∈ R^n` of the whole action
//! profile; its own block of `x^i` is its actual action `x_i`. With the local
//! disagreement `ρ^i = Σ_j a_ij (x^i − x^j)` and the time gain `k(t)` the
//! dynamics read
//!
//! ```text
//! ẋ^i   = −k(t) [ E_i(∇_i J_i(x^i) + σ_i η_i(x_i)) + Σ_j a_ij (ω_i ρ^i − ω_j ρ^j) ]
//! σ̇_i   =  k(t) q G_i(x_i)
//! ω̇_i   =  k(t) q γ_i ‖ρ^i‖²
//! q̇     =  k(t) q
//! ```
//!
//! where `E_i` embeds a player block into `R^n`. The flat layout used by the
//! integrator is `[X (N·n), σ (N), ω (N), q]`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::game::QuadraticGame;
use crate::network::Graph;

/// Prescribed time `Tp`, initial integrator gain `q(0)` and the per-player
/// adaptation rates `γ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    tp: f64,
    q0: f64,
    gamma: DVector<f64>,
}

impl GainSchedule {
    pub fn new(tp: f64, q0: f64, gamma: DVector<f64>) -> Result<Self> {
        if !(tp > 0.0 && tp.is_finite()) {
            return Err(Error::Domain(format!("prescribed time must be positive, got {tp}")));
        }
        if !(q0 > 0.0 && q0.is_finite()) {
            return Err(Error::Domain(format!("q(0) must be positive, got {q0}")));
        }
        if gamma.is_empty() || gamma.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::Domain("every gamma_i must be positive".into()));
        }
        Ok(Self { tp, q0, gamma })
    }

    pub fn uniform(tp: f64, q0: f64, gamma: f64, players: usize) -> Result<Self> {
        Self::new(tp, q0, DVector::from_element(players, gamma))
    }

    pub fn tp(&self) -> f64 {
        self.tp
    }

    pub fn q0(&self) -> f64 {
        self.q0
    }

    pub fn gamma(&self) -> &DVector<f64> {
        &self.gamma
    }

    pub(crate) fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..self.tp).contains(&t) {
            return Err(Error::Domain(format!("t = {t} outside [0, Tp = {})", self.tp)));
        }
        Ok(())
    }

    /// `k(t) = sec²(πt / 2Tp)` on `[0, Tp)`.
    pub fn time_gain(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let c = (FRAC_PI_2 * t / self.tp).cos();
        Ok(1.0 / (c * c))
    }
}

/// Full dynamical state: stacked estimates, penalty gains, edge gains and
/// the integrator gain.
#[derive(Debug, Clone, PartialEq)]
pub struct SeekerState {
    pub x: DVector<f64>,
    pub sigma: DVector<f64>,
    pub omega: DVector<f64>,
    pub q: f64,
}

impl SeekerState {
    /// Everyone's estimate equals `profile`.
    pub fn consensus(
        profile: &DVector<f64>,
        sigma: DVector<f64>,
        omega: DVector<f64>,
        q: f64,
    ) -> Self {
        let players = sigma.len();
        let n = profile.len();
        let x = DVector::from_fn(players * n, |r, _| profile[r % n]);
        Self { x, sigma, omega, q }
    }

    pub fn n_players(&self) -> usize {
        self.sigma.len()
    }

    /// Action dimension `n` of a single estimate.
    pub fn profile_dim(&self) -> usize {
        self.x.len() / self.n_players().max(1)
    }

    /// Player `i`'s estimate `x^i` of the full profile.
    pub fn estimate(&self, i: usize) -> DVectorView<'_, f64> {
        let n = self.profile_dim();
        self.x.rows(i * n, n)
    }

    /// Actual actions: the own block of every estimate.
    pub fn actions(&self, game: &QuadraticGame) -> DVector<f64> {
        own_actions(game, self.x.as_slice())
    }

    pub fn flat_len(players: usize, n: usize) -> usize {
        players * n + 2 * players + 1
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.x.len() + 2 * self.sigma.len() + 1);
        out.extend_from_slice(self.x.as_slice());
        out.extend_from_slice(self.sigma.as_slice());
        out.extend_from_slice(self.omega.as_slice());
        out.push(self.q);
        out
    }

    pub fn from_flat(flat: &[f64], players: usize) -> Self {
        let xn = flat.len() - 2 * players - 1;
        Self {
            x: DVector::from_column_slice(&flat[..xn]),
            sigma: DVector::from_column_slice(&flat[xn..xn + players]),
            omega: DVector::from_column_slice(&flat[xn + players..xn + 2 * players]),
            q: flat[xn + 2 * players],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite()
            && self.x.iter().chain(self.sigma.iter()).chain(self.omega.iter()).all(|v| v.is_finite())
    }

    /// `‖(L ⊗ I_n) X‖`.
    pub fn consensus_error(&self, graph: &Graph) -> f64 {
        let n = self.profile_dim();
        let rho = stacked_disagreement(graph, self.x.as_slice(), n);
        rho.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `max_i ‖x^i − x*‖`.
    pub fn max_distance_to(&self, x_star: &DVector<f64>) -> f64 {
        (0..self.n_players())
            .map(|i| (self.estimate(i) - x_star).norm())
            .fold(0.0, f64::max)
    }

    pub(crate) fn check(&self, game: &QuadraticGame, graph: &Graph) -> Result<()> {
        let players = game.n_players();
        if graph.n_nodes() != players {
            return Err(Error::DimensionMismatch {
                what: "graph nodes",
                expected: players,
                found: graph.n_nodes(),
            });
        }
        for (what, found) in [("sigma", self.sigma.len()), ("omega", self.omega.len())] {
            if found != players {
                return Err(Error::DimensionMismatch { what, expected: players, found });
            }
        }
        let expected = players * game.total_dim();
        if self.x.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "stacked estimates",
                expected,
                found: self.x.len(),
            });
        }
        Ok(())
    }
}

/// Own-block action `x_i` selected out of a full-profile vector (`R_i v`).
pub fn select_own(game: &QuadraticGame, i: usize, v: &DVector<f64>) -> Result<DVector<f64>> {
    check_selection(game, i, v)?;
    Ok(v.rows(game.offset(i), game.dims()[i]).into_owned())
}

/// Everything but player `i`'s block, in index order (`S_i v`).
pub fn select_others(game: &QuadraticGame, i: usize, v: &DVector<f64>) -> Result<DVector<f64>> {
    check_selection(game, i, v)?;
    let (o, d) = (game.offset(i), game.dims()[i]);
    Ok(DVector::from_iterator(
        v.len() - d,
        v.iter().enumerate().filter(|(r, _)| *r < o || *r >= o + d).map(|(_, x)| *x),
    ))
}

fn check_selection(game: &QuadraticGame, i: usize, v: &DVector<f64>) -> Result<()> {
    if i >= game.n_players() {
        return Err(Error::IndexOutOfRange { index: i, players: game.n_players() });
    }
    if v.len() != game.total_dim() {
        return Err(Error::DimensionMismatch {
            what: "profile vector",
            expected: game.total_dim(),
            found: v.len(),
        });
    }
    Ok(())
}

/// `ρ^i = Σ_j a_ij (x^i − x^j)`.
pub fn local_disagreement(state: &SeekerState, graph: &Graph, i: usize) -> DVector<f64> {
    let mut rho = DVector::zeros(state.profile_dim());
    for &(j, a) in graph.neighbors(i) {
        rho += (state.estimate(i) - state.estimate(j)) * a;
    }
    rho
}

fn stacked_disagreement(graph: &Graph, x: &[f64], n: usize) -> Vec<f64> {
    let mut rho = vec![0.0; x.len()];
    for i in 0..graph.n_nodes() {
        let xi = &x[i * n..(i + 1) * n];
        let out = &mut rho[i * n..(i + 1) * n];
        for &(j, a) in graph.neighbors(i) {
            let xj = &x[j * n..(j + 1) * n];
            for ((r, a_i), b_j) in out.iter_mut().zip(xi).zip(xj) {
                *r += a * (a_i - b_j);
            }
        }
    }
    rho
}

fn own_actions(game: &QuadraticGame, x: &[f64]) -> DVector<f64> {
    let n = game.total_dim();
    let mut out = DVector::zeros(n);
    for i in 0..game.n_players() {
        let (o, d) = (game.offset(i), game.dims()[i]);
        out.rows_mut(o, d).copy_from_slice(&x[i * n + o..i * n + o + d]);
    }
    out
}

/// Which element of the penalty subdifferential a player uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyMode {
    /// `η_i = 0`.
    Inactive,
    /// `η_i = a_i`.
    Active,
    /// `η_i = θ a_i` with `θ ∈ [0, 1]` chosen so that the player stays on
    /// its constraint boundary.
    Sliding,
}

/// See [`SeekerSystem::switching`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Switching {
    pub g: f64,
    pub theta: f64,
}

/// Time derivative of [`SeekerState`], same shape.
pub type StateDerivative = SeekerState;

/// The seeking dynamics on a fixed game, graph and schedule.
#[derive(Debug, Clone, Copy)]
pub struct SeekerSystem<'a> {
    pub game: &'a QuadraticGame,
    pub graph: &'a Graph,
    pub schedule: &'a GainSchedule,
}

impl<'a> SeekerSystem<'a> {
    pub fn new(game: &'a QuadraticGame, graph: &'a Graph, schedule: &'a GainSchedule) -> Result<Self> {
        if graph.n_nodes() != game.n_players() {
            return Err(Error::DimensionMismatch {
                what: "graph nodes",
                expected: game.n_players(),
                found: graph.n_nodes(),
            });
        }
        if schedule.gamma().len() != game.n_players() {
            return Err(Error::DimensionMismatch {
                what: "gamma",
                expected: game.n_players(),
                found: schedule.gamma().len(),
            });
        }
        Ok(Self { game, graph, schedule })
    }

    pub fn flat_len(&self) -> usize {
        SeekerState::flat_len(self.game.n_players(), self.game.total_dim())
    }

    /// The field with `k(t)` factored out, on the flat layout.
    ///
    /// Assembled player by player; the compact Kronecker form lives in
    /// [`SeekerSystem::compact_field`]. The penalty subgradient is `a_i`
    /// where `g_i > 0` and zero otherwise.
    pub fn unit_field(&self, y: &[f64], dy: &mut [f64]) {
        self.field_impl(y, dy, |_, g| if g > 0.0 { PenaltyMode::Active } else { PenaltyMode::Inactive }, None);
    }

    /// Same as [`SeekerSystem::unit_field`] with each player's penalty
    /// selection fixed by `modes`.
    pub fn modal_field(&self, y: &[f64], modes: &[PenaltyMode], dy: &mut [f64]) {
        self.field_impl(y, dy, |i, _| modes[i], None);
    }

    /// Constraint value `g_i` and the sliding multiplier `θ_i` of every
    /// constrained player at `y`; `None` for unconstrained players.
    ///
    /// `θ_i` is the penalty weight in `[0, 1]` that keeps `g_i` stationary,
    /// extended linearly outside that interval. `θ_i ≤ 0` means the field
    /// without penalty already points inward, `θ_i ≥ 1` that even the full
    /// penalty cannot hold the player on the boundary.
    pub fn switching(&self, y: &[f64]) -> Vec<Option<Switching>> {
        let mut out = vec![None; self.game.n_players()];
        let mut dy = vec![0.0; y.len()];
        self.field_impl(y, &mut dy, |_, _| PenaltyMode::Inactive, Some(&mut out));
        out
    }

    fn field_impl<M>(&self, y: &[f64], dy: &mut [f64], mode: M, mut switching: Option<&mut [Option<Switching>]>)
    where
        M: Fn(usize, f64) -> PenaltyMode,
    {
        let game = self.game;
        let players = game.n_players();
        let n = game.total_dim();
        let xn = players * n;
        let x = &y[..xn];
        let sigma = &y[xn..xn + players];
        let omega = &y[xn + players..xn + 2 * players];
        let q = y[xn + 2 * players];

        let rho = stacked_disagreement(self.graph, x, n);
        let (dx, rest) = dy.split_at_mut(xn);
        for i in 0..players {
            let out = &mut dx[i * n..(i + 1) * n];
            out.fill(0.0);
            let rho_i = &rho[i * n..(i + 1) * n];
            for &(j, a) in self.graph.neighbors(i) {
                let rho_j = &rho[j * n..(j + 1) * n];
                let (wi, wj) = (a * omega[i], a * omega[j]);
                for ((o, ri), rj) in out.iter_mut().zip(rho_i).zip(rho_j) {
                    *o -= wi * ri - wj * rj;
                }
            }

            let (off, d) = (game.offset(i), game.dims()[i]);
            let est = DVectorView::from_slice(&x[i * n..(i + 1) * n], n);
            let grad = game.partial_gradient_unchecked(i, est);
            let own = est.rows(off, d);
            let own_out = &mut out[off..off + d];
            for (o, g) in own_out.iter_mut().zip(grad.iter()) {
                *o -= g;
            }
            let penalty = match game.constraint(i) {
                Some(c) => {
                    let g = c.value(own);
                    let drift: f64 = own_out.iter().zip(c.coeff.iter()).map(|(o, a)| o * a).sum();
                    let hold = sigma[i] * c.coeff.norm_squared();
                    let theta_eq = if hold > 0.0 {
                        drift / hold
                    } else if drift > 0.0 {
                        f64::INFINITY
                    } else {
                        f64::NEG_INFINITY
                    };
                    if let Some(sw) = switching.as_deref_mut() {
                        sw[i] = Some(Switching { g, theta: theta_eq });
                    }
                    let (weight, value) = match mode(i, g) {
                        PenaltyMode::Inactive => (0.0, 0.0),
                        PenaltyMode::Active => (1.0, g.max(0.0)),
                        PenaltyMode::Sliding => (theta_eq.clamp(0.0, 1.0), 0.0),
                    };
                    if weight != 0.0 {
                        for (o, a) in own_out.iter_mut().zip(c.coeff.iter()) {
                            *o -= weight * sigma[i] * a;
                        }
                    }
                    value
                }
                None => 0.0,
            };
            rest[i] = q * penalty;
            let rho_sq: f64 = rho_i.iter().map(|v| v * v).sum();
            rest[players + i] = q * self.schedule.gamma()[i] * rho_sq;
        }
        rest[2 * players] = q;
    }

    /// `d(state)/dt` at model time `t`.
    pub fn vector_field(&self, t: f64, state: &SeekerState) -> Result<StateDerivative> {
        state.check(self.game, self.graph)?;
        let k = self.schedule.time_gain(t)?;
        let y = state.to_flat();
        let mut dy = vec![0.0; y.len()];
        self.unit_field(&y, &mut dy);
        dy.iter_mut().for_each(|v| *v *= k);
        Ok(SeekerState::from_flat(&dy, self.game.n_players()))
    }

    /// Same derivative assembled from the compact matrix form
    /// `Ẋ = −k [Rᵀ(F(X) + η σ) + (L⊗I) Z (L⊗I) X]`,
    /// `ω̇ = k q D(ρ)ᵀ (Γ⊗I) ρ`. Dense and slow; used for cross-checks.
    pub fn compact_field(&self, t: f64, state: &SeekerState) -> Result<StateDerivative> {
        state.check(self.game, self.graph)?;
        let k = self.schedule.time_gain(t)?;
        let game = self.game;
        let players = game.n_players();
        let n = game.total_dim();
        let xn = players * n;

        let selection = selection_matrix(game);
        let big_l = kron_identity(&self.graph.laplacian(), n);
        let z = DMatrix::from_diagonal(&DVector::from_fn(xn, |r, _| state.omega[r / n]));
        let gamma_big = DMatrix::from_diagonal(&DVector::from_fn(xn, |r, _| self.schedule.gamma()[r / n]));

        let actions = &selection * &state.x;
        let estimates: Vec<DVector<f64>> = (0..players).map(|i| state.estimate(i).into_owned()).collect();
        let f = game.stacked_pseudo_gradient(&estimates)?;
        let mut eta_sigma = DVector::zeros(n);
        let mut g = DVector::zeros(players);
        for i in 0..players {
            let (o, d) = (game.offset(i), game.dims()[i]);
            let xi = actions.rows(o, d);
            eta_sigma.rows_mut(o, d).copy_from(&(game.penalty_subgradient(i, xi) * state.sigma[i]));
            g[i] = game.penalty_value(i, xi);
        }

        let rho = &big_l * &state.x;
        let dx = -(selection.transpose() * (f + eta_sigma) + &big_l * (&z * &rho)) * k;

        let mut d_rho = DMatrix::zeros(xn, players);
        for i in 0..players {
            d_rho.view_mut((i * n, i), (n, 1)).copy_from(&rho.rows(i * n, n));
        }
        let domega = d_rho.transpose() * (gamma_big * &rho) * (k * state.q);

        Ok(SeekerState {
            x: dx,
            sigma: g * (k * state.q),
            omega: domega,
            q: k * state.q,
        })
    }
}

/// `R = diag{R_1, …, R_N}`, the `n × N·n` matrix picking each player's own
/// block out of its estimate.
pub fn selection_matrix(game: &QuadraticGame) -> DMatrix<f64> {
    let n = game.total_dim();
    let mut r = DMatrix::zeros(n, game.n_players() * n);
    for i in 0..game.n_players() {
        let (o, d) = (game.offset(i), game.dims()[i]);
        for k in 0..d {
            r[(o + k, i * n + o + k)] = 1.0;
        }
    }
    r
}

/// `A ⊗ I_n`.
pub fn kron_identity(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    a.kronecker(&DMatrix::identity(n, n))
}

/// Split `X` into its consensus component `P_C X` (block average repeated)
/// and the orthogonal remainder.
pub fn consensus_decompose(x: &DVector<f64>, players: usize) -> (DVector<f64>, DVector<f64>) {
    let n = x.len() / players;
    let mut mean = DVector::zeros(n);
    for i in 0..players {
        mean += x.rows(i * n, n);
    }
    mean /= players as f64;
    let parallel = DVector::from_fn(x.len(), |r, _| mean[r % n]);
    let perp = x - &parallel;
    (parallel, perp)
}

/// Distance of `(X, σ)` from the equilibrium conditions of the dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumResidual {
    /// `‖Rᵀ(F(X) + η σ)‖`, with `η` ranging over the whole subdifferential
    /// for players sitting on their constraint boundary.
    pub stationarity: f64,
    /// `‖G(x)‖`.
    pub feasibility: f64,
    /// `‖(L⊗I) X‖`.
    pub consensus: f64,
}

impl EquilibriumResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.consensus)
    }
}

/// A constraint with `|g| ≤ BOUNDARY_TOL` is treated as active.
pub const BOUNDARY_TOL: f64 = 1e-10;

pub fn equilibrium_residual(
    game: &QuadraticGame,
    graph: &Graph,
    x: &DVector<f64>,
    sigma: &DVector<f64>,
) -> Result<EquilibriumResidual> {
    let players = game.n_players();
    let n = game.total_dim();
    if x.len() != players * n || sigma.len() != players || graph.n_nodes() != players {
        return Err(Error::DimensionMismatch {
            what: "equilibrium candidate",
            expected: players * n,
            found: x.len(),
        });
    }
    let actions = own_actions(game, x.as_slice());
    let mut stat_sq = 0.0;
    let mut feas_sq = 0.0;
    for i in 0..players {
        let (o, d) = (game.offset(i), game.dims()[i]);
        let grad = game.partial_gradient_unchecked(i, x.rows(i * n, n));
        let xi = actions.rows(o, d);
        let residual = match game.constraint(i) {
            Some(c) => {
                let g = c.value(xi);
                let push = &c.coeff * sigma[i];
                if g > BOUNDARY_TOL {
                    feas_sq += g * g;
                    grad + push
                } else if g >= -BOUNDARY_TOL {
                    // Best element of the segment {grad + θ σ a : θ ∈ [0, 1]}.
                    let denom = push.norm_squared();
                    let theta = if denom > 0.0 { (-grad.dot(&push) / denom).clamp(0.0, 1.0) } else { 0.0 };
                    feas_sq += g.max(0.0).powi(2);
                    grad + push * theta
                } else {
                    grad
                }
            }
            None => grad,
        };
        stat_sq += residual.norm_squared();
    }
    let consensus = stacked_disagreement(graph, x.as_slice(), n).iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(EquilibriumResidual {
        stationarity: stat_sq.sqrt(),
        feasibility: feas_sq.sqrt(),
        consensus,
    })
}
