#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use utilearn::correlated::{build_correlated_game, CoalitionSpec};
use utilearn::estimation::{Entry, FeasibleSet, Observation, ObservationSet, RegressionSystem};
use utilearn::forecast::{forecast, score_forecast};
use utilearn::game::{solve_nash, Basis, ConstraintSet, Game, KnownTerm, Player, SolverParams, UtilitySpec};
use utilearn::io::GameModel;
use utilearn::pipeline::{simulate, SimulateConfig};

/// Curvature, coupling per player of the three-player box game.
pub const THETA3: [[f64; 2]; 3] = [[-1.0, 0.3], [-1.2, 0.2], [-0.8, 0.4]];

pub fn three_player_json() -> String {
    let players: Vec<String> = THETA3
        .iter()
        .enumerate()
        .map(|(i, t)| {
            format!(
                r#"{{"name": "p{i}", "bounds": {{"lower": 0.0, "upper": 20.0}},
                 "basis": [{{"kind": "own_quadratic", "weight": {}, "upper": -1e-6}},
                           {{"kind": "cross_bilinear", "weight": {}}}],
                 "known_part": [{{"kind": "own_linear", "weight": 10.0, "incentive_range": [5.0, 15.0]}}]}}"#,
                t[0], t[1]
            )
        })
        .collect();
    format!(r#"{{"format_version": 1, "players": [{}]}}"#, players.join(","))
}

pub fn three_player() -> GameModel {
    GameModel::parse(&three_player_json()).unwrap()
}

pub fn sim(model: &GameModel, n: usize, sigma: f64, seed: u64) -> ObservationSet {
    simulate(
        model,
        &SimulateConfig {
            n,
            sigma_obs: sigma,
            participation: 1.0,
            seed,
            solver: SolverParams::default(),
        },
    )
    .unwrap()
}

pub fn theta_error(model: &GameModel, truth: &[[f64; 2]]) -> f64 {
    model
        .game
        .players()
        .iter()
        .zip(truth)
        .flat_map(|(p, t)| p.utility.theta().iter().zip(t).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

pub fn player(basis: Vec<Basis>, theta: Vec<f64>, known: Vec<KnownTerm>, lo: f64, hi: f64) -> Player {
    Player {
        utility: UtilitySpec::new(basis, theta, known).unwrap(),
        constraints: ConstraintSet::interval(lo, hi).unwrap(),
    }
}

pub fn known(basis: Basis, weight: f64) -> KnownTerm {
    KnownTerm { basis, weight }
}

/// `f_i = -x_i^2 + 0.5 x_i x_j + x_i` on `[0, 1]^2`.
pub fn coupled_game() -> Game {
    let p = || {
        player(
            vec![Basis::OwnQuadratic, Basis::CrossBilinear],
            vec![-1.0, 0.5],
            vec![known(Basis::OwnLinear, 1.0)],
            0.0,
            1.0,
        )
    };
    Game::new(vec![p(), p()]).unwrap()
}

/// `f_i = -(x_i - a_i)^2` up to a constant, on `[0, 1]`.
pub fn decoupled_game(a: &[f64]) -> Game {
    Game::new(
        a.iter()
            .map(|&ai| {
                player(
                    vec![Basis::OwnQuadratic, Basis::OwnLinear],
                    vec![-1.0, 2.0 * ai],
                    vec![],
                    0.0,
                    1.0,
                )
            })
            .collect(),
    )
    .unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const THETA2: [[f64; 2]; 2] = [[-1.0, 0.3], [-1.2, 0.2]];

/// Two-player box game on `[0, 20]` with incentives drawn from `[5, 15]`.
pub fn two_player() -> GameModel {
    let json = three_player_json();
    let mut file: serde_json::Value = serde_json::from_str(&json).unwrap();
    file["players"].as_array_mut().unwrap().truncate(2);
    GameModel::parse(&file.to_string()).unwrap()
}

/// Stationarity and slackness residuals computed from the game directly.
pub fn kkt_residual_sq(game: &Game, obs: &ObservationSet, sys: &RegressionSystem, beta: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for o in obs.records() {
        let inst = o.instance(game).unwrap();
        let x = o.actions();
        for block in &sys.layout.blocks {
            let Some(pos) = o.position(block.player) else { continue };
            let theta = sys.layout.theta_of(block.player, beta).unwrap().to_vec();
            let mu = sys.layout.mu_of(block.player, beta).unwrap();
            let p = &inst.players()[pos];
            let u = p.utility.with_theta(theta).unwrap();
            let cons = p.constraints.constraints();
            let mut rs = u.d_own(x, pos).unwrap();
            for (h, m) in cons.iter().zip(mu) {
                rs += m * h.derivative();
                total += (m * h.value(x[pos])).powi(2);
            }
            total += rs * rs;
        }
    }
    total
}

pub fn random_game(seed: u64) -> (Game, ObservationSet) {
    let mut r = rng(seed);
    let bases = vec![
        Basis::OwnQuadratic,
        Basis::CrossBilinear,
        Basis::OwnLogShifted { shift: 1.0 },
        Basis::MeanOthersLinear,
        Basis::Constant,
    ];
    let players: Vec<Player> = (0..3)
        .map(|_| {
            let theta = (0..bases.len()).map(|_| r.random_range(-2.0..2.0)).collect();
            let k = vec![known(Basis::OwnLinear, 1.0), known(Basis::OwnQuadratic, -0.5)];
            let mut p = player(bases.clone(), theta, k, 0.0, 10.0);
            p.utility = p.utility.with_known_scale(r.random_range(0.5..2.0)).unwrap();
            p
        })
        .collect();
    let game = Game::new(players).unwrap();
    let records = (0..12)
        .map(|k| {
            let mut entries = Vec::new();
            for i in 0..3 {
                if r.random_bool(0.7) {
                    let w = vec![r.random_range(0.0..5.0), r.random_range(-1.0..1.0)];
                    entries.push(Entry::with_known_weights(i, r.random_range(0.0..10.0), w));
                }
            }
            if entries.is_empty() {
                entries.push(Entry::new(0, 3.0));
            }
            Observation::new(k, entries).unwrap()
        })
        .collect();
    (game, ObservationSet::new(records).unwrap())
}

pub fn random_feasible(r: &mut impl Rng, f: &FeasibleSet) -> DVector<f64> {
    DVector::from_fn(f.len(), |j, _| {
        let lo = if f.lower[j].is_finite() { f.lower[j] } else { -3.0 };
        let hi = if f.upper[j].is_finite() { f.upper[j] } else { lo.max(0.0) + 3.0 };
        if hi > lo { r.random_range(lo..hi) } else { lo }
    })
}

/// Stopping index from dense powers of `I - nu H`.
pub fn brute_force_m_hat(x: &DMatrix<f64>, y: &DVector<f64>, nu: f64, m_max: usize) -> usize {
    let n = x.nrows();
    let h = x * (x.transpose() * x).try_inverse().unwrap() * x.transpose();
    let step = DMatrix::identity(n, n) - h * nu;
    let mut r = DMatrix::identity(n, n);
    let mut best = (1, f64::INFINITY);
    for m in 1..m_max {
        r = &r * &step;
        let b = DMatrix::identity(n, n) - &r;
        let sigma2 = (y - &b * y).norm_squared() / n as f64;
        let tr = b.trace();
        let denom = 1.0 - (tr + 2.0) / n as f64;
        if denom <= 0.0 {
            continue;
        }
        let aic = sigma2.ln() + (1.0 + tr / n as f64) / denom;
        if aic < best.1 {
            best = (m, aic);
        }
    }
    best.0
}

/// Brute-force re-enumeration of the grid with nested loops.
pub fn oracle_best(m: &GameModel, est: &[Vec<f64>], coalition: &CoalitionSpec, values: &[f64], eval: &ObservationSet, x0: &[f64]) -> (Vec<f64>, f64) {
    let pairs = [(0, 0), (0, 1), (1, 0), (1, 1)];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &a in values {
        for &b in values {
            for &c in values {
                for &d in values {
                    let cell = [a, b, c, d];
                    let map: BTreeMap<_, _> = pairs.iter().copied().zip(cell).collect();
                    let game = build_correlated_game(&m.game, est, &coalition.with_scalings(&map).unwrap()).unwrap();
                    let eq = solve_nash(&game, x0, &SolverParams::default()).unwrap();
                    if !eq.converged {
                        continue;
                    }
                    let fc = forecast(&game, eval, &SolverParams::default(), Some(x0)).unwrap();
                    if fc.n_failed > 0 {
                        continue;
                    }
                    let rmse = score_forecast(&fc, eval, &[]).unwrap().rmse.unwrap();
                    if best.as_ref().is_none_or(|(_, r)| rmse < *r) {
                        best = Some((cell.to_vec(), rmse));
                    }
                }
            }
        }
    }
    best.unwrap()
}
