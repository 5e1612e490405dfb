//! Oracle-equivalence suite: random voting instances solved in closed form
//! and by derivative-free search, compared on objective value and position.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::Exec;
use crate::geom::{Point3, UnitVector3, Vec3, DEFAULT_RANK_TOLERANCE};
use crate::oracle;
use crate::synth::derive_seed;
use crate::voting::{accumulate_normal_system, solve_keypoint};

pub const OBJECTIVE_SLACK: f64 = 1e-8;
pub const POSITION_TOLERANCE_M: f64 = 1e-6;

/// One random single-keypoint instance.
#[derive(Clone, Debug, PartialEq)]
pub struct VoteInstance {
    pub points: Vec<Point3>,
    pub vectors: Vec<UnitVector3>,
    pub weights: Vec<f64>,
    pub keypoint: Point3,
}

/// `M ∈ [3, 200]` points in a 0.2 m cube voting for a keypoint inside it,
/// with up to 5° of direction noise, 10% random directions and weights in `(0, 1]`.
pub fn random_instance(seed: u64, index: u64) -> VoteInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index, "selftest"));
    let m = rng.random_range(3..=200);
    let mut coord = |r: f64| Vec3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r));
    let keypoint = coord(0.05);
    let points: Vec<Point3> = (0..m).map(|_| coord(0.1)).collect();
    let mut vectors = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for p in &points {
        let dir = (keypoint - *p).normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0));
        let v = if rng.random_bool(0.1) {
            Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        } else {
            let jitter = 5f64.to_radians().tan();
            dir + Vec3::new(
                rng.random_range(-jitter..jitter),
                rng.random_range(-jitter..jitter),
                rng.random_range(-jitter..jitter),
            ) * (1.0 / 3f64.sqrt())
        };
        vectors.push(UnitVector3::from_vec(v).unwrap_or(UnitVector3::from_vec(dir).expect("unit")));
        weights.push(1.0 - rng.random::<f64>());
    }
    VoteInstance {
        points,
        vectors,
        weights,
        keypoint,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub index: u64,
    pub point_count: usize,
    pub closed_form_objective: f64,
    pub oracle_objective: f64,
    pub position_gap_m: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.closed_form_objective <= self.oracle_objective + OBJECTIVE_SLACK
            && self.position_gap_m <= POSITION_TOLERANCE_M
    }
}

pub fn check_instance(seed: u64, index: u64) -> Result<OracleCheck> {
    let inst = random_instance(seed, index);
    let system = accumulate_normal_system(&inst.points, &inst.vectors, &inst.weights)?;
    let closed = solve_keypoint(&system, DEFAULT_RANK_TOLERANCE)?.position;
    let searched = oracle::minimize_objective(&inst.points, &inst.vectors, &inst.weights);
    Ok(OracleCheck {
        index,
        point_count: inst.points.len(),
        closed_form_objective: oracle::objective(&inst.points, &inst.vectors, &inst.weights, closed),
        oracle_objective: oracle::objective(&inst.points, &inst.vectors, &inst.weights, searched),
        position_gap_m: closed.distance(searched),
    })
}

pub fn oracle_equivalence(instances: usize, seed: u64, exec: Exec) -> Result<Vec<OracleCheck>> {
    exec.map_range(instances, |i| check_instance(seed, i as u64))
        .into_iter()
        .collect()
}
