//! Exact Earth Mover's Distance between normalized weight vectors on a
//! shared sphere lattice, solved as a dense transportation problem by
//! successive shortest paths with node potentials.

const EPS: f64 = 1e-15;

/// Exact transport solution: objective plus a primal/dual certificate
/// (the certificate fields back the optimality checks in tests).
#[derive(Debug)]
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct Transport {
    pub cost: f64,
    /// Row-major supply × demand flow matrix.
    pub flow: Vec<f64>,
    /// Feasible dual: u_i + v_j ≤ C_ij with equality on support.
    pub dual_u: Vec<f64>,
    pub dual_v: Vec<f64>,
}

/// Solves min Σ F_ij·C_ij subject to row sums = supply, column sums =
/// demand, F ≥ 0. Supplies and demands must be non-negative with equal
/// totals (up to rounding).
pub(crate) fn solve_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> Transport {
    let n = supply.len();
    let m = demand.len();
    assert_eq!(cost.len(), n * m, "cost matrix shape");

    let mut remaining = supply.to_vec();
    let mut deficit = demand.to_vec();
    let mut flow = vec![0.0; n * m];
    // Johnson potentials: reduced cost C_ij + pot_s[i] − pot_d[j] stays ≥ 0.
    let mut pot_s = vec![0.0; n];
    let mut pot_d = vec![0.0; m];

    let mut dist_s = vec![0.0f64; n];
    let mut dist_d = vec![0.0f64; m];
    let mut done_s = vec![false; n];
    let mut done_d = vec![false; m];
    // Predecessor of demand j is a supply (forward arc); predecessor of a
    // supply i is a demand (residual backward arc).
    let mut prev_d = vec![usize::MAX; m];
    let mut prev_s = vec![usize::MAX; n];

    let max_iters = 8 * (n + m) * (n + m);
    let mut iters = 0;
    while let Some(src) = (0..n).find(|&i| remaining[i] > EPS) {
        // Rounding can leave a vanishing supply/demand imbalance behind.
        if !(0..m).any(|j| deficit[j] > EPS) {
            break;
        }
        iters += 1;
        assert!(iters <= max_iters, "transport solver failed to converge");

        dist_s.fill(f64::INFINITY);
        dist_d.fill(f64::INFINITY);
        done_s.fill(false);
        done_d.fill(false);
        prev_d.fill(usize::MAX);
        prev_s.fill(usize::MAX);
        dist_s[src] = 0.0;

        // Dense Dijkstra over the bipartite residual graph; stops when the
        // nearest demand with outstanding deficit is settled.
        let target = loop {
            let mut best = f64::INFINITY;
            let mut pick_supply = true;
            let mut pick = usize::MAX;
            for i in 0..n {
                if !done_s[i] && dist_s[i] < best {
                    best = dist_s[i];
                    pick_supply = true;
                    pick = i;
                }
            }
            for j in 0..m {
                if !done_d[j] && dist_d[j] < best {
                    best = dist_d[j];
                    pick_supply = false;
                    pick = j;
                }
            }
            assert!(pick != usize::MAX, "deficit demand unreachable");

            if pick_supply {
                let i = pick;
                done_s[i] = true;
                for j in 0..m {
                    if done_d[j] {
                        continue;
                    }
                    let reduced = cost[i * m + j] + pot_s[i] - pot_d[j];
                    let cand = dist_s[i] + reduced;
                    if cand < dist_d[j] {
                        dist_d[j] = cand;
                        prev_d[j] = i;
                    }
                }
            } else {
                let j = pick;
                done_d[j] = true;
                if deficit[j] > EPS {
                    break j;
                }
                for i in 0..n {
                    if done_s[i] || flow[i * m + j] <= EPS {
                        continue;
                    }
                    let reduced = -cost[i * m + j] + pot_d[j] - pot_s[i];
                    let cand = dist_d[j] + reduced;
                    if cand < dist_s[i] {
                        dist_s[i] = cand;
                        prev_s[i] = j;
                    }
                }
            }
        };

        // Potential update keeps all residual reduced costs non-negative.
        let reach = dist_d[target];
        for i in 0..n {
            pot_s[i] += dist_s[i].min(reach);
        }
        for j in 0..m {
            pot_d[j] += dist_d[j].min(reach);
        }

        // Bottleneck along the augmenting path.
        let mut delta = remaining[src].min(deficit[target]);
        let mut j = target;
        loop {
            let i = prev_d[j];
            if i == src {
                break;
            }
            let back_j = prev_s[i];
            delta = delta.min(flow[i * m + back_j]);
            j = back_j;
        }

        let mut j = target;
        loop {
            let i = prev_d[j];
            flow[i * m + j] += delta;
            if i == src {
                break;
            }
            let back_j = prev_s[i];
            flow[i * m + back_j] -= delta;
            j = back_j;
        }
        remaining[src] -= delta;
        deficit[target] -= delta;
    }

    let total_cost = flow.iter().zip(cost).map(|(f, c)| f * c).sum();
    Transport {
        cost: total_cost,
        flow,
        dual_u: pot_s.iter().map(|p| -p).collect(),
        dual_v: pot_d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cost<R: Rng>(rng: &mut R, n: usize, m: usize) -> Vec<f64> {
        (0..n * m).map(|_| rng.gen_range(0.0..2.0)).collect()
    }

    fn random_dist<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    }

    /// Weak LP duality: a feasible dual matching the primal objective
    /// certifies optimality independently of the solver's own bookkeeping.
    fn assert_certificate(t: &Transport, supply: &[f64], demand: &[f64], cost: &[f64]) {
        let (n, m) = (supply.len(), demand.len());
        for i in 0..n {
            for j in 0..m {
                assert!(
                    t.dual_u[i] + t.dual_v[j] <= cost[i * m + j] + 1e-9,
                    "dual infeasible at ({i},{j})"
                );
                assert!(t.flow[i * m + j] >= -1e-12, "negative flow");
            }
        }
        for i in 0..n {
            let row: f64 = (0..m).map(|j| t.flow[i * m + j]).sum();
            assert!((row - supply[i]).abs() < 1e-9, "row {i} marginal");
        }
        for j in 0..m {
            let col: f64 = (0..n).map(|i| t.flow[i * m + j]).sum();
            assert!((col - demand[j]).abs() < 1e-9, "col {j} marginal");
        }
        let dual: f64 = supply.iter().zip(&t.dual_u).map(|(a, u)| a * u).sum::<f64>()
            + demand.iter().zip(&t.dual_v).map(|(b, v)| b * v).sum::<f64>();
        assert!(
            (t.cost - dual).abs() < 1e-9,
            "duality gap: primal {} vs dual {dual}",
            t.cost
        );
    }

    #[test]
    fn point_mass_transport_is_forced() {
        let cost = vec![0.0, 1.25, 0.75, 0.0];
        let t = solve_transport(&[1.0, 0.0], &[0.0, 1.0], &cost);
        assert!((t.cost - 1.25).abs() < 1e-12);
        assert_certificate(&t, &[1.0, 0.0], &[0.0, 1.0], &cost);
    }

    #[test]
    fn identical_distributions_cost_zero_with_zero_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 16;
        let mut cost = random_cost(&mut rng, n, n);
        for i in 0..n {
            cost[i * n + i] = 0.0;
        }
        let a = random_dist(&mut rng, n);
        let t = solve_transport(&a, &a, &cost);
        assert!(t.cost.abs() < 1e-12);
        assert_certificate(&t, &a, &a, &cost);
    }

    #[test]
    fn random_instances_satisfy_duality_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for trial in 0..25 {
            let n = rng.gen_range(2..20);
            let m = rng.gen_range(2..20);
            let cost = random_cost(&mut rng, n, m);
            let a = random_dist(&mut rng, n);
            let b = random_dist(&mut rng, m);
            let t = solve_transport(&a, &b, &cost);
            assert!(t.cost.is_finite(), "trial {trial}");
            assert_certificate(&t, &a, &b, &cost);
        }
    }

    #[test]
    fn symmetric_cost_gives_symmetric_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let n = 24;
        // Symmetric cost with zero diagonal, like a distance matrix.
        let mut cost = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let c = rng.gen_range(0.0..2.0);
                cost[i * n + j] = c;
                cost[j * n + i] = c;
            }
        }
        let a = random_dist(&mut rng, n);
        let b = random_dist(&mut rng, n);
        let ab = solve_transport(&a, &b, &cost);
        let ba = solve_transport(&b, &a, &cost);
        assert!((ab.cost - ba.cost).abs() < 1e-9);
    }
}
