#![allow(dead_code)]

use nalgebra::{DMatrix, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rigid_formation::controller::{EdgeDesign, FormationController, Gains};
use rigid_formation::dynamics::AgentState;
use rigid_formation::envelopes::{DistanceEnvelope, ExpPerf, SymmetricEnvelope};
use rigid_formation::graph::{EdgeSpec, FormationGraph};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum::<f64>().max(1.0);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Edges of the labeled tree on `n = seq.len() + 2` nodes with Prüfer sequence `seq`.
pub fn prufer_tree(seq: &[usize]) -> Vec<(usize, usize)> {
    let n = seq.len() + 2;
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &s in seq {
        let leaf = (0..n).find(|&i| degree[i] == 1).unwrap();
        edges.push((leaf.min(s), leaf.max(s)));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Every labeled tree on `n ≥ 2` nodes.
pub fn all_trees(n: usize) -> impl Iterator<Item = Vec<(usize, usize)>> {
    let len = n - 2;
    let total = n.pow(len as u32);
    (0..total).map(move |mut code| {
        let mut seq = vec![0; len];
        for s in seq.iter_mut() {
            *s = code % n;
            code /= n;
        }
        prufer_tree(&seq)
    })
}

pub fn random_tree<R: Rng>(rng: &mut R, n: usize) -> Vec<(usize, usize)> {
    if n == 2 {
        return vec![(0, 1)];
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.gen_range(0..n)).collect();
    prufer_tree(&seq)
}

pub fn cycle(n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i, (i + 1) % n)).collect()
}

pub fn unit_vector<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// A random tree formation, states strictly inside every edge envelope at
/// time `t`, and generous velocity envelopes.
pub struct Admissible {
    pub controller: FormationController,
    pub states: Vec<AgentState>,
    pub t: f64,
}

pub fn random_admissible(seed: u64) -> Admissible {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=7);
    let tree = random_tree(&mut rng, n);
    let t = rng.gen_range(0.0..3.0);
    let rho_q = ExpPerf::new(std::f64::consts::FRAC_PI_2, 0.1, 1.0).unwrap();

    let mut p = vec![None::<Vector3<f64>>; n];
    let mut q = vec![Vector3::zeros(); n];
    for qi in q.iter_mut() {
        *qi = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.2..1.2), rng.gen_range(-3.0..3.0));
    }
    p[0] = Some(Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)));

    let mut specs = Vec::new();
    let mut design_params = Vec::new();
    // Place agents outward from node 0 so every edge gets a controlled length.
    let mut pending = tree.clone();
    while !pending.is_empty() {
        let idx = pending.iter().position(|&(a, b)| p[a].is_some() || p[b].is_some()).unwrap();
        let (a, b) = pending.remove(idx);
        let d_des: f64 = rng.gen_range(1.5..3.0);
        let c_col = rng.gen_range(0.3..0.9) * d_des * d_des;
        let c_con = rng.gen_range(2.0..12.0);
        let env = DistanceEnvelope::new(c_col, c_con, 0.1, 1.0).unwrap();
        let (lo, hi) = env.bounds(t);
        let e_p = rng.gen_range(0.9 * lo..0.9 * hi);
        let dist = (d_des * d_des + e_p).sqrt();
        let (known, new) = if p[a].is_some() { (a, b) } else { (b, a) };
        p[new] = Some(p[known].unwrap() + dist * unit_vector(&mut rng));
        let bound = rho_q.value(t);
        let e_q = Vector3::from_fn(|_, _| rng.gen_range(-0.9 * bound..0.9 * bound));
        let q_des = q[a] - q[b] - e_q;
        specs.push(EdgeSpec {
            a,
            b,
            d_des,
            q_des: q_des.into(),
            d_col: env.collision_distance(d_des),
            d_con: env.connectivity_distance(d_des),
        });
        design_params.push(env);
    }
    let graph = FormationGraph::new(n, &specs).unwrap();
    let design: Vec<EdgeDesign> = graph
        .targets()
        .iter()
        .zip(&design_params)
        .map(|(target, env)| EdgeDesign { target: *target, distance: *env, orientation: SymmetricEnvelope { rho: rho_q } })
        .collect();
    let states: Vec<AgentState> = (0..n)
        .map(|i| AgentState {
            p: p[i].unwrap(),
            q: q[i],
            v: Vector6::from_fn(|_, _| rng.gen_range(-1.0..1.0)),
        })
        .collect();
    let velocity = vec![[ExpPerf::new(1e6, 1e5, 1.0).unwrap(); 6]; n];
    let gains = Gains::new((0..n).map(|_| rng.gen_range(1.0..10.0)).collect()).unwrap();
    let controller = FormationController::new(graph, design, velocity, gains).unwrap();
    Admissible { controller, states, t }
}

pub const FD_STEP: f64 = 1e-6;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1e-300)
}

/// Worst relative error of `r^p` against a central difference of `ε^p` over `n` points.
pub fn distance_gradient_worst(seed: u64, n: usize) -> f64 {
    use rigid_formation::envelopes::barrier_p;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let env = DistanceEnvelope::new(rng.gen_range(0.5..20.0), rng.gen_range(0.5..20.0), 0.1, 1.0).unwrap();
        let xi = rng.gen_range(-0.99 * env.c_col..0.99 * env.c_con);
        let (_, r) = barrier_p(xi, &env).unwrap();
        let fd = (barrier_p(xi + FD_STEP, &env).unwrap().0 - barrier_p(xi - FD_STEP, &env).unwrap().0) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(r, fd));
    }
    worst
}

/// Same for the componentwise barrier in dimension `D`.
pub fn symmetric_gradient_worst<const D: usize>(seed: u64, n: usize) -> f64 {
    use nalgebra::SVector;
    use rigid_formation::envelopes::barrier_sym;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let xi = SVector::<f64, D>::from_fn(|_, _| rng.gen_range(-0.99..0.99));
        let (_, r) = barrier_sym(&xi).unwrap();
        for m in 0..D {
            let (mut up, mut down) = (xi, xi);
            up[m] += FD_STEP;
            down[m] -= FD_STEP;
            let fd = (barrier_sym(&up).unwrap().0[m] - barrier_sym(&down).unwrap().0[m]) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(r[m], fd));
        }
    }
    worst
}

/// Observed RK4 orders on `ẏ = A y`, `A = [[−1, 2], [−2, −1]]`, over halving steps.
pub fn rk4_orders() -> Vec<f64> {
    use nalgebra::{DVector, Matrix2, Vector2};
    use rigid_formation::sim::rk4;
    let y0 = Vector2::new(1.0, 0.5);
    let t_end: f64 = 2.0;
    let (s, c) = (2.0 * t_end).sin_cos();
    let exact = (-t_end).exp() * Matrix2::new(c, s, -s, c) * y0;
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -2.0, -1.0]);
    let errors: Vec<f64> = [0.1, 0.05, 0.025, 0.0125]
        .iter()
        .map(|&dt: &f64| {
            let mut y = DVector::from_column_slice(y0.as_slice());
            let n = (t_end / dt).round() as usize;
            for k in 0..n {
                y = rk4(|_, y: &DVector<f64>| Ok::<_, ()>(&a * y), k as f64 * dt, &y, dt).unwrap();
            }
            (Vector2::new(y[0], y[1]) - exact).norm()
        })
        .collect();
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Largest `|per-agent − stacked|` entry over `n` random admissible configurations.
pub fn stacked_equivalence_worst(n: u64) -> f64 {
    use rigid_formation::controller::reference_velocity_stacked;
    let mut worst = 0.0f64;
    for seed in 0..n {
        let a = random_admissible(seed);
        let c = &a.controller;
        let per_agent = c.reference_velocities(&a.states, a.t).unwrap();
        let stacked = reference_velocity_stacked(c.graph(), &a.states, c.design(), a.t).unwrap();
        for (i, v) in per_agent.iter().enumerate() {
            for m in 0..6 {
                worst = worst.max((v[m] - stacked[6 * i + m]).abs());
            }
        }
    }
    worst
}

/// Smallest edge-Laplacian eigenvalue over every labeled tree with 2..=`max_n` nodes.
pub fn tree_laplacian_min(max_n: usize) -> f64 {
    use rigid_formation::graph::Topology;
    let mut worst = f64::INFINITY;
    for n in 2..=max_n {
        for edges in all_trees(n) {
            let l = Topology::new(n, &edges).unwrap().edge_laplacian();
            worst = worst.min(jacobi_eigenvalues(&l)[0]);
        }
    }
    worst
}

/// Largest over C3..=C`max_n` of the smallest |eigenvalue| of the edge Laplacian.
pub fn cycle_laplacian_null(max_n: usize) -> f64 {
    use rigid_formation::graph::Topology;
    (3..=max_n)
        .map(|n| {
            let l = Topology::new(n, &cycle(n)).unwrap().edge_laplacian();
            jacobi_eigenvalues(&l).iter().fold(f64::INFINITY, |m, x| m.min(x.abs()))
        })
        .fold(0.0, f64::max)
}

/// Smallest λ_min(P) over `n` random admissible tree configurations, by the Jacobi oracle.
pub fn random_tree_p_min(n: u64) -> f64 {
    use rigid_formation::controller::p_matrix;
    (0..n)
        .map(|seed| {
            let a = random_admissible(1000 + seed);
            jacobi_eigenvalues(&p_matrix(a.controller.graph(), &a.states))[0]
        })
        .fold(f64::INFINITY, f64::min)
}
