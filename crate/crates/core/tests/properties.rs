mod common;

use nalgebra::{DMatrix, DVector};
use ne_seek::dynamics::{
    consensus_decompose, kron_identity, local_disagreement, select_others, select_own, GainSchedule, SeekerState,
    SeekerSystem,
};
use ne_seek::integrator::{inverse_reparameterize, reparameterize};
use ne_seek::oracle::{decay_envelope, lyapunov_value, omega_lower_bound, xi_matrix};
use ne_seek::{solve_kkt, Graph, QuadraticGame};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn game_from_seed(seed: u64, max_players: usize, max_dim: usize) -> (QuadraticGame, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let players = rng.random_range(1..=max_players);
    (QuadraticGame::random(&mut rng, players, max_dim), rng)
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize, r: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-r..r))
}

fn random_state(rng: &mut ChaCha8Rng, players: usize, n: usize) -> SeekerState {
    SeekerState {
        x: random_vec(rng, players * n, 5.0),
        sigma: DVector::from_fn(players, |_, _| rng.random_range(0.0..10.0)),
        omega: DVector::from_fn(players, |_, _| rng.random_range(0.0..10.0)),
        q: rng.random_range(0.001..10.0),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>()) {
        let (game, mut rng) = game_from_seed(seed, 4, 3);
        let h = 1e-5;
        for _ in 0..100 {
            let x = random_vec(&mut rng, game.total_dim(), 3.0);
            for i in 0..game.n_players() {
                let g = game.partial_gradient(i, &x).unwrap();
                for (r, gr) in g.iter().enumerate() {
                    let idx = game.offset(i) + r;
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[idx] += h;
                    xm[idx] -= h;
                    let fd = (game.cost(i, &xp).unwrap() - game.cost(i, &xm).unwrap()) / (2.0 * h);
                    prop_assert!((fd - gr).abs() <= 1e-6 * gr.abs().max(1.0), "fd {fd} vs {gr}");
                }
            }
        }
    }

    #[test]
    fn stacked_gradient_is_per_player_gradients(seed in any::<u64>()) {
        let (game, mut rng) = game_from_seed(seed, 5, 3);
        let estimates: Vec<DVector<f64>> =
            (0..game.n_players()).map(|_| random_vec(&mut rng, game.total_dim(), 4.0)).collect();
        let stacked = game.stacked_pseudo_gradient(&estimates).unwrap();
        for (i, est) in estimates.iter().enumerate() {
            let g = game.partial_gradient(i, est).unwrap();
            let block = stacked.rows(game.offset(i), game.dims()[i]);
            prop_assert!((block - g).amax() <= 1e-12);
        }
    }

    #[test]
    fn penalty_is_convex_with_valid_subgradients(seed in any::<u64>()) {
        let (game, mut rng) = game_from_seed(seed, 3, 3);
        for i in 0..game.n_players() {
            let d = game.dims()[i];
            for _ in 0..50 {
                let (u, v) = (random_vec(&mut rng, d, 3.0), random_vec(&mut rng, d, 3.0));
                let lam = rng.random_range(0.0..=1.0);
                let mix = &u * lam + &v * (1.0 - lam);
                let lhs = game.penalty_value(i, mix.as_view());
                let rhs = lam * game.penalty_value(i, u.as_view()) + (1.0 - lam) * game.penalty_value(i, v.as_view());
                prop_assert!(lhs <= rhs + 1e-12);
                let eta = game.penalty_subgradient(i, u.as_view());
                let lower = game.penalty_value(i, u.as_view()) + eta.dot(&(&v - &u));
                prop_assert!(game.penalty_value(i, v.as_view()) >= lower - 1e-12);
            }
        }
    }

    #[test]
    fn monotonicity_constants_bound_sampled_pairs(seed in any::<u64>()) {
        let (game, mut rng) = game_from_seed(seed, 5, 3);
        let (mu, l) = game.monotonicity_constants();
        prop_assert!(mu > 0.0 && l >= mu);
        for _ in 0..200 {
            let (x, y) = (random_vec(&mut rng, game.total_dim(), 5.0), random_vec(&mut rng, game.total_dim(), 5.0));
            let df = game.pseudo_gradient(&x).unwrap() - game.pseudo_gradient(&y).unwrap();
            let dx = &x - &y;
            let scale = dx.norm_squared().max(1e-300);
            prop_assert!(dx.dot(&df) >= mu * dx.norm_squared() - 1e-10 * scale);
            prop_assert!(df.norm() <= l * dx.norm() * (1.0 + 1e-10));
        }
    }

    #[test]
    fn own_and_other_selections_partition(seed in any::<u64>()) {
        let (game, mut rng) = game_from_seed(seed, 5, 3);
        let v = random_vec(&mut rng, game.total_dim(), 10.0);
        for i in 0..game.n_players() {
            let mut joined: Vec<f64> = select_own(&game, i, &v).unwrap().iter().copied().collect();
            joined.extend(select_others(&game, i, &v).unwrap().iter());
            let mut a = joined.clone();
            let mut b: Vec<f64> = v.iter().copied().collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn lambda2_positive_iff_connected(seed in any::<u64>(), nodes in 2usize..10, p in 0.1f64..0.8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_graph(&mut rng, nodes, p);
        let spectrum = g.laplacian_spectrum();
        prop_assert!(spectrum[0].abs() < 1e-9);
        prop_assert_eq!(spectrum[1] > 1e-9, g.is_connected());
        prop_assert_eq!(g.lambda2().is_ok(), g.is_connected());
        let ones = DVector::from_element(nodes, 1.0);
        prop_assert!((g.laplacian() * ones).amax() < 1e-12);
    }

    #[test]
    fn laplacian_kernel_and_spectral_gap(seed in any::<u64>(), nodes in 2usize..8, n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_connected_graph(&mut rng, nodes);
        let big_l = kron_identity(&g.laplacian(), n);
        let v = random_vec(&mut rng, n, 5.0);
        let consensus = DVector::from_fn(nodes * n, |r, _| v[r % n]);
        let at_consensus = SeekerState::consensus(&v, DVector::zeros(nodes), DVector::from_element(nodes, 1.0), 1.0);
        prop_assert_eq!(at_consensus.consensus_error(&g), 0.0);
        prop_assert!((&big_l * &consensus).amax() <= 1e-12 * v.amax().max(1.0));

        let x = random_vec(&mut rng, nodes * n, 5.0);
        let (_, perp) = consensus_decompose(&x, nodes);
        let lambda2 = g.lambda2().unwrap();
        let lx = &big_l * &perp;
        prop_assert!(lx.norm_squared() >= lambda2 * lambda2 * perp.norm_squared() - 1e-9);

        let state = SeekerState {
            x: x.clone(),
            sigma: DVector::zeros(nodes),
            omega: DVector::from_fn(nodes, |_, _| rng.random_range(0.1..10.0)),
            q: 1.0,
        };
        for i in 0..nodes {
            let rho = local_disagreement(&state, &g, i);
            prop_assert!((rho - (&big_l * &x).rows(i * n, n)).amax() <= 1e-12);
        }
        let z = kron_identity(&DMatrix::from_diagonal(&state.omega), n);
        let quad = perp.dot(&(&big_l * &z * &big_l * &perp));
        let bound = state.omega.min() * lambda2 * lambda2 * perp.norm_squared();
        prop_assert!(quad >= bound - 1e-9 * quad.abs().max(1.0));
    }

    #[test]
    fn decomposition_is_orthogonal(seed in any::<u64>(), players in 1usize..7, n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_vec(&mut rng, players * n, 10.0);
        let (par, perp) = consensus_decompose(&x, players);
        let scale = x.norm_squared().max(1.0);
        prop_assert!(par.dot(&perp).abs() <= 1e-12 * scale);
        prop_assert!((&par + &perp - &x).amax() <= 1e-12 * scale.sqrt());
    }

    #[test]
    fn per_player_and_compact_fields_agree(seed in any::<u64>()) {
        let (game, mut rng) = game_from_seed(seed, 5, 3);
        let players = game.n_players();
        let graph = common::random_connected_graph(&mut rng, players);
        let sched = GainSchedule::uniform(10.0, 0.01, rng.random_range(0.5..2.0), players).unwrap();
        let sys = SeekerSystem::new(&game, &graph, &sched).unwrap();
        let state = random_state(&mut rng, players, game.total_dim());
        let t = rng.random_range(0.0..9.0);
        let a = sys.vector_field(t, &state).unwrap().to_flat();
        let b = sys.compact_field(t, &state).unwrap().to_flat();
        let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn consensus_at_unconstrained_equilibrium_is_stationary(seed in any::<u64>()) {
        let (game, mut rng) = game_from_seed(seed, 4, 3);
        let costs: Vec<_> = (0..game.n_players()).map(|i| {
            let p = game.player(i);
            ne_seek::PlayerCost::new(p.quad.clone(), p.linear.clone())
        }).collect();
        let couplings = couplings_of(&game);
        let free = QuadraticGame::new(costs, couplings).unwrap();
        let x_star = solve_kkt(&free).unwrap().x_star;
        let players = free.n_players();
        let graph = common::random_connected_graph(&mut rng, players);
        let sched = GainSchedule::uniform(10.0, 0.01, 1.0, players).unwrap();
        let sys = SeekerSystem::new(&free, &graph, &sched).unwrap();
        let state = SeekerState::consensus(
            &x_star,
            DVector::from_element(players, 3.0),
            DVector::from_element(players, 2.0),
            0.5,
        );
        let d = sys.vector_field(rng.random_range(0.0..9.0), &state).unwrap();
        prop_assert!(d.x.amax() <= 1e-9, "{}", d.x);
        prop_assert_eq!(d.sigma.amax(), 0.0);
        prop_assert_eq!(d.omega.amax(), 0.0);
    }

    #[test]
    fn reparameterization_round_trip(tp in 0.1f64..100.0, frac in 0.0f64..0.999) {
        let t = frac * tp;
        let back = inverse_reparameterize(tp, reparameterize(tp, t).unwrap()).unwrap();
        prop_assert!((back - t).abs() <= 1e-12 * tp.max(1.0));
    }

    #[test]
    fn gains_are_monotone_in_time(tp in 0.5f64..50.0, a in 0.0f64..0.99, b in 0.0f64..0.99) {
        let sched = GainSchedule::uniform(tp, 0.001, 1.0, 1).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(sched.time_gain(lo * tp).unwrap() <= sched.time_gain(hi * tp).unwrap());
        let env_lo = decay_envelope(1.0, 0.3, &sched, lo * tp).unwrap();
        let env_hi = decay_envelope(1.0, 0.3, &sched, hi * tp).unwrap();
        prop_assert!(env_hi <= env_lo);
    }

    #[test]
    fn xi_is_symmetric_and_positive_above_threshold(
        players in 1usize..8,
        mu in 0.05f64..3.0,
        ratio in 1.0f64..5.0,
        lambda2 in 0.1f64..4.0,
        excess in 1.0001f64..20.0,
    ) {
        let l = mu * ratio;
        let bar = omega_lower_bound(mu, l, lambda2);
        let (xi, theta) = xi_matrix(players, mu, l, bar * excess, lambda2).unwrap();
        prop_assert_eq!(xi, xi.transpose());
        prop_assert!(theta > 0.0 && theta <= 1.0);
        let (xi2, theta2) = xi_matrix(players, mu, l, bar * excess * 1.5, lambda2).unwrap();
        prop_assert!(xi2[(1, 1)] > xi[(1, 1)]);
        prop_assert!(theta2 >= theta - 1e-12);
        prop_assert!(xi_matrix(players, mu, l, bar, lambda2).is_err());
    }

    #[test]
    fn lyapunov_dominates_estimate_error(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let players = rng.random_range(1..6);
        let n = rng.random_range(1..4);
        let state = random_state(&mut rng, players, n);
        let x_star = random_vec(&mut rng, n, 3.0);
        let sched = GainSchedule::uniform(10.0, 0.001, rng.random_range(0.5..2.0), players).unwrap();
        let sigma_ref = DVector::from_fn(players, |_, _| rng.random_range(0.0..5.0));
        let omega_ref = DVector::from_fn(players, |_, _| rng.random_range(0.0..5.0));
        let v = lyapunov_value(&state, &x_star, &sigma_ref, &omega_ref, &sched);
        let err: f64 = (0..players).map(|i| (state.estimate(i) - &x_star).norm_squared()).sum();
        prop_assert!(v >= 0.5 * err);
    }
}

fn couplings_of(game: &QuadraticGame) -> Vec<ne_seek::Coupling> {
    let mut out = Vec::new();
    for i in 0..game.n_players() {
        for j in (0..game.n_players()).filter(|&j| j != i) {
            let m = game
                .matrix()
                .view((game.offset(i), game.offset(j)), (game.dims()[i], game.dims()[j]))
                .into_owned();
            out.push(ne_seek::Coupling { player: i, other: j, matrix: m });
        }
    }
    out
}

#[test]
fn kkt_point_beats_unilateral_deviations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let players = rng.random_range(1..=5);
        let game = QuadraticGame::random(&mut rng, players, 3);
        let x_star = solve_kkt(&game).unwrap().x_star;
        for i in 0..players {
            let base = game.cost(i, &x_star).unwrap();
            for _ in 0..100 {
                let dev = common::random_deviation(&mut rng, &game, &x_star, i);
                assert!(base <= game.cost(i, &dev).unwrap() + 1e-9);
            }
        }
    }
}

#[test]
fn cycle_graph_connectivity() {
    let g = Graph::cycle(5);
    let expected = 2.0 * (1.0 - (2.0 * std::f64::consts::PI / 5.0).cos());
    assert!((g.lambda2().unwrap() - expected).abs() < 1e-12);
}
