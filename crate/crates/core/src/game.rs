//! Constrained noncooperative games with quadratic costs.
//!
//! Player `i` controls `x_i ∈ R^{n_i}` and minimizes
//!
//! ```text
//! J_i(x) = ½ x_iᵀ Q_i x_i + Σ_{j≠i} x_iᵀ C_ij x_j + b_iᵀ x_i
//! ```
//!
//! subject to at most one affine inequality `g_i(x_i) = a_iᵀ x_i − β_i ≤ 0`.
//! The pseudo-gradient is affine, `F(x) = M x + m`, with `Q_i` on the
//! diagonal blocks of `M` and `C_ij` off the diagonal.
//!
//! Player indices are zero-based throughout the crate.

use nalgebra::{DMatrix, DVector, DVectorView, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};

/// Affine inequality `coeff · x_i − offset ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeff: DVector<f64>,
    pub offset: f64,
}

impl Constraint {
    pub fn new(coeff: DVector<f64>, offset: f64) -> Self {
        Self { coeff, offset }
    }

    /// `g(x) = coeff · x − offset`.
    pub fn value(&self, x: DVectorView<'_, f64>) -> f64 {
        self.coeff.dot(&x) - self.offset
    }
}

/// Own-action part of one player's cost plus its private constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerCost {
    /// Symmetric positive definite `Q_i`.
    pub quad: DMatrix<f64>,
    /// Linear term `b_i`.
    pub linear: DVector<f64>,
    pub constraint: Option<Constraint>,
}

impl PlayerCost {
    pub fn new(quad: DMatrix<f64>, linear: DVector<f64>) -> Self {
        Self {
            quad,
            linear,
            constraint: None,
        }
    }

    pub fn with_constraint(mut self, coeff: DVector<f64>, offset: f64) -> Self {
        self.constraint = Some(Constraint::new(coeff, offset));
        self
    }

    fn dim(&self) -> usize {
        self.linear.len()
    }
}

/// Bilinear cross term `x_iᵀ C_ij x_j` in player `i`'s cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub player: usize,
    pub other: usize,
    pub matrix: DMatrix<f64>,
}

/// A validated strongly monotone quadratic game. Immutable once built.
#[derive(Debug, Clone)]
pub struct QuadraticGame {
    players: Vec<PlayerCost>,
    dims: Vec<usize>,
    offsets: Vec<usize>,
    /// `M`, the pseudo-gradient matrix.
    matrix: DMatrix<f64>,
    /// `m`, the stacked linear terms.
    shift: DVector<f64>,
    mu: f64,
    lipschitz: f64,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl QuadraticGame {
    /// Validates the player data and assembles `M`, rejecting games whose
    /// symmetrized pseudo-gradient matrix is not positive definite.
    pub fn new(players: Vec<PlayerCost>, couplings: Vec<Coupling>) -> Result<Self> {
        if players.is_empty() {
            return Err(Error::InvalidGame("a game needs at least one player".into()));
        }
        let dims: Vec<usize> = players.iter().map(PlayerCost::dim).collect();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0;
        for (i, (p, &d)) in players.iter().zip(&dims).enumerate() {
            if d == 0 {
                return Err(Error::InvalidGame(format!("player {i} has an empty action")));
            }
            if p.quad.shape() != (d, d) {
                return Err(Error::InvalidGame(format!(
                    "player {i}: quadratic term is {}x{}, expected {d}x{d}",
                    p.quad.nrows(),
                    p.quad.ncols()
                )));
            }
            let scale = p.quad.amax().max(1.0);
            if (&p.quad - p.quad.transpose()).amax() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidGame(format!(
                    "player {i}: quadratic term is not symmetric"
                )));
            }
            if let Some(c) = &p.constraint {
                if c.coeff.len() != d {
                    return Err(Error::DimensionMismatch {
                        what: "constraint coefficients",
                        expected: d,
                        found: c.coeff.len(),
                    });
                }
                if c.coeff.amax() == 0.0 || !c.offset.is_finite() {
                    return Err(Error::InvalidGame(format!(
                        "player {i}: degenerate constraint"
                    )));
                }
            }
            offsets.push(total);
            total += d;
        }

        let mut matrix = DMatrix::zeros(total, total);
        let mut shift = DVector::zeros(total);
        for (i, p) in players.iter().enumerate() {
            let (o, d) = (offsets[i], dims[i]);
            matrix.view_mut((o, o), (d, d)).copy_from(&p.quad);
            shift.rows_mut(o, d).copy_from(&p.linear);
        }
        for c in &couplings {
            let n_players = players.len();
            if c.player >= n_players || c.other >= n_players {
                return Err(Error::IndexOutOfRange {
                    index: c.player.max(c.other),
                    players: n_players,
                });
            }
            if c.player == c.other {
                return Err(Error::InvalidGame(format!(
                    "coupling block ({0},{0}) is on the diagonal",
                    c.player
                )));
            }
            let (di, dj) = (dims[c.player], dims[c.other]);
            if c.matrix.shape() != (di, dj) {
                return Err(Error::InvalidGame(format!(
                    "coupling ({},{}) is {}x{}, expected {di}x{dj}",
                    c.player,
                    c.other,
                    c.matrix.nrows(),
                    c.matrix.ncols()
                )));
            }
            let mut block = matrix.view_mut((offsets[c.player], offsets[c.other]), (di, dj));
            block += &c.matrix;
        }
        if !matrix.iter().chain(shift.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidGame("non-finite coefficient".into()));
        }

        let (mu, lipschitz) = monotonicity_of(&matrix);
        if mu <= 0.0 {
            return Err(Error::NotMonotone { mu });
        }
        // Every Q_i is a principal block of sym(M), so mu > 0 makes it PD too.
        Ok(Self {
            players,
            dims,
            offsets,
            matrix,
            shift,
            mu,
            lipschitz,
        })
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total action dimension `n = Σ n_i`.
    pub fn total_dim(&self) -> usize {
        self.shift.len()
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn player(&self, i: usize) -> &PlayerCost {
        &self.players[i]
    }

    pub fn constraint(&self, i: usize) -> Option<&Constraint> {
        self.players[i].constraint.as_ref()
    }

    /// The pseudo-gradient matrix `M`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// The pseudo-gradient offset `m`.
    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }

    /// Player `i`'s block of a stacked action profile.
    pub fn block<'a>(&self, i: usize, x: &'a DVector<f64>) -> DVectorView<'a, f64> {
        x.rows(self.offsets[i], self.dims[i])
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n_players() {
            return Err(Error::IndexOutOfRange {
                index: i,
                players: self.n_players(),
            });
        }
        Ok(())
    }

    fn check_profile(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.total_dim() {
            return Err(Error::DimensionMismatch {
                what: "action profile",
                expected: self.total_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `J_i(x)`.
    pub fn cost(&self, i: usize, x: &DVector<f64>) -> Result<f64> {
        self.check_index(i)?;
        self.check_profile(x)?;
        let p = &self.players[i];
        let xi = self.block(i, x);
        let mut value = 0.5 * xi.dot(&(&p.quad * xi)) + p.linear.dot(&xi);
        // Cross terms are the off-diagonal part of M's block row.
        let row = self.matrix.rows(self.offsets[i], self.dims[i]);
        for (j, (&o, &d)) in self.offsets.iter().zip(&self.dims).enumerate() {
            if j != i {
                value += xi.dot(&(row.columns(o, d) * x.rows(o, d)));
            }
        }
        Ok(value)
    }

    /// `∇_{x_i} J_i(x) = Q_i x_i + Σ_{j≠i} C_ij x_j + b_i`.
    pub fn partial_gradient(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_index(i)?;
        self.check_profile(x)?;
        Ok(self.partial_gradient_unchecked(i, x.rows(0, x.len())))
    }

    pub(crate) fn partial_gradient_unchecked(
        &self,
        i: usize,
        x: DVectorView<'_, f64>,
    ) -> DVector<f64> {
        let (o, d) = (self.offsets[i], self.dims[i]);
        self.matrix.rows(o, d) * x + self.shift.rows(o, d)
    }

    /// `F(x) = M x + m`.
    pub fn pseudo_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_profile(x)?;
        Ok(&self.matrix * x + &self.shift)
    }

    /// Row block `i` is `∇_i J_i` evaluated at player `i`'s own estimate
    /// `x^i` of the full profile.
    pub fn stacked_pseudo_gradient(&self, estimates: &[DVector<f64>]) -> Result<DVector<f64>> {
        if estimates.len() != self.n_players() {
            return Err(Error::DimensionMismatch {
                what: "estimate count",
                expected: self.n_players(),
                found: estimates.len(),
            });
        }
        let mut out = DVector::zeros(self.total_dim());
        for (i, est) in estimates.iter().enumerate() {
            self.check_profile(est)?;
            let g = self.partial_gradient_unchecked(i, est.rows(0, est.len()));
            out.rows_mut(self.offsets[i], self.dims[i]).copy_from(&g);
        }
        Ok(out)
    }

    /// `g_i(x_i)`, or `None` for an unconstrained player.
    pub fn constraint_value(&self, i: usize, xi: DVectorView<'_, f64>) -> Option<f64> {
        self.players[i].constraint.as_ref().map(|c| c.value(xi))
    }

    /// Exact penalty `G_i(x_i) = max(0, g_i(x_i))`.
    pub fn penalty_value(&self, i: usize, xi: DVectorView<'_, f64>) -> f64 {
        self.constraint_value(i, xi).map_or(0.0, |g| g.max(0.0))
    }

    /// Subgradient selection `η_i ∈ ∂G_i(x_i)`: `a_i` where the constraint is
    /// violated, zero otherwise (including on the boundary).
    pub fn penalty_subgradient(&self, i: usize, xi: DVectorView<'_, f64>) -> DVector<f64> {
        match &self.players[i].constraint {
            Some(c) if c.value(xi) > 0.0 => c.coeff.clone(),
            _ => DVector::zeros(self.dims[i]),
        }
    }

    /// `(μ, l)`: `λ_min((M+Mᵀ)/2)` and the largest singular value of `M`.
    pub fn monotonicity_constants(&self) -> (f64, f64) {
        (self.mu, self.lipschitz)
    }

    /// Euclidean projection of a full profile onto `Ω = Ω_1 × … × Ω_N`.
    pub fn project(&self, x: &mut DVector<f64>) {
        for i in 0..self.n_players() {
            if let Some(c) = &self.players[i].constraint {
                let mut xi = x.rows_mut(self.offsets[i], self.dims[i]);
                let g = c.coeff.dot(&xi) - c.offset;
                if g > 0.0 {
                    xi.axpy(-g / c.coeff.norm_squared(), &c.coeff, 1.0);
                }
            }
        }
    }

    /// A random strongly monotone game with `players` players, action
    /// dimensions in `1..=max_dim` and one random constraint per player.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, players: usize, max_dim: usize) -> Self {
        let dims: Vec<usize> = (0..players).map(|_| rng.random_range(1..=max_dim)).collect();
        let mut costs: Vec<PlayerCost> = dims
            .iter()
            .map(|&d| {
                let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
                let quad = b.transpose() * &b
                    + DMatrix::identity(d, d) * rng.random_range(0.5..1.5);
                let linear = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
                let mut coeff: DVector<f64> = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                coeff[0] += coeff[0].signum() * 0.1;
                PlayerCost::new(quad, linear)
                    .with_constraint(coeff, rng.random_range(-1.0..1.0))
            })
            .collect();
        let mut couplings = Vec::new();
        for i in 0..players {
            for j in 0..players {
                if i != j {
                    couplings.push(Coupling {
                        player: i,
                        other: j,
                        matrix: DMatrix::from_fn(dims[i], dims[j], |_, _| {
                            rng.random_range(-0.3..0.3)
                        }),
                    });
                }
            }
        }
        let n: usize = dims.iter().sum();
        let mut m = DMatrix::zeros(n, n);
        let mut offs = Vec::new();
        let mut o = 0;
        for &d in &dims {
            offs.push(o);
            o += d;
        }
        for (i, c) in costs.iter().enumerate() {
            m.view_mut((offs[i], offs[i]), (dims[i], dims[i])).copy_from(&c.quad);
        }
        for c in &couplings {
            m.view_mut((offs[c.player], offs[c.other]), (dims[c.player], dims[c.other]))
                .copy_from(&c.matrix);
        }
        let (mu, _) = monotonicity_of(&m);
        if mu < 0.2 {
            let lift = 0.2 - mu + rng.random_range(0.0..0.3);
            for c in &mut costs {
                let d = c.dim();
                c.quad += DMatrix::identity(d, d) * lift;
            }
        }
        Self::new(costs, couplings).expect("lifted random game is strongly monotone")
    }
}

pub(crate) fn monotonicity_of(matrix: &DMatrix<f64>) -> (f64, f64) {
    let sym = (matrix + matrix.transpose()) * 0.5;
    let mu = SymmetricEigen::new(sym).eigenvalues.min();
    let lipschitz = matrix.clone().svd(false, false).singular_values.max();
    (mu, lipschitz)
}
