use super::{check_instance, objective_of, Decomposition};
use crate::capacity::{Assignment, BsPartition, DeIterations, DeModel, ThetaMatrix};
use crate::error::{Error, Result};
use crate::fairness::AlphaParam;

/// Largest search space `M^K` accepted by [`brute_force_decompose`].
pub const MAX_ENUMERATION: f64 = 1e6;

/// Each user goes to the largest entry of its row (lowest index on ties).
/// Empty subnetworks are then filled one at a time, lowest index first, by
/// moving the user of the currently largest subnetwork with the highest
/// relaxed weight for the empty one.
pub fn round_assignment(x: &Assignment, partition: &BsPartition) -> Result<Decomposition> {
    let (k, m) = (x.k(), x.m());
    if m != partition.num_groups() {
        return Err(Error::InvalidArgument(format!(
            "assignment has {m} columns but the partition has {} groups",
            partition.num_groups()
        )));
    }
    if k < m {
        return Err(Error::Infeasible(format!("{k} users cannot fill {m} subnetworks")));
    }
    let xa = x.as_array();
    let mut user_of: Vec<usize> = xa
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    loop {
        let mut sizes = vec![0usize; m];
        for &s in &user_of {
            sizes[s] += 1;
        }
        let Some(empty) = sizes.iter().position(|c| *c == 0) else {
            break;
        };
        let mut donor = 0;
        for (j, &c) in sizes.iter().enumerate() {
            if c > sizes[donor] {
                donor = j;
            }
        }
        let mut chosen: Option<usize> = None;
        for u in (0..k).filter(|&u| user_of[u] == donor) {
            if chosen.is_none_or(|c| xa[[u, empty]] > xa[[c, empty]]) {
                chosen = Some(u);
            }
        }
        user_of[chosen.expect("the largest subnetwork has at least two users")] = empty;
    }
    Decomposition::new(user_of, partition.clone())
}

/// Scans every surjective map of `k` users onto `m` subnetworks and keeps
/// the one with the smallest score (first on ties). Returns the map, its
/// score and the number of maps scored.
pub fn enumerate_best<F>(k: usize, m: usize, mut score: F) -> Result<(Vec<usize>, f64, usize)>
where
    F: FnMut(&[usize]) -> Result<f64>,
{
    if m == 0 || k < m {
        return Err(Error::Infeasible(format!("{k} users cannot fill {m} subnetworks")));
    }
    let size = (m as f64).powi(k as i32);
    if size > MAX_ENUMERATION {
        return Err(Error::TooLarge { size, bound: MAX_ENUMERATION });
    }
    let mut map = vec![0usize; k];
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut count = 0;
    let mut seen = vec![0usize; m];
    loop {
        seen.iter_mut().for_each(|c| *c = 0);
        for &s in &map {
            seen[s] += 1;
        }
        if seen.iter().all(|c| *c > 0) {
            count += 1;
            let v = score(&map)?;
            if best.as_ref().is_none_or(|(_, b)| v < *b) {
                best = Some((map.clone(), v));
            }
        }
        // Odometer increment, last user fastest.
        let mut i = k;
        loop {
            if i == 0 {
                let (map, v) = best.expect("at least one surjective map exists");
                return Ok((map, v, count));
            }
            i -= 1;
            map[i] += 1;
            if map[i] < m {
                break;
            }
            map[i] = 0;
        }
    }
}

/// Exhaustive optimum of the discrete problem under converged DE.
#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub decomposition: Decomposition,
    /// `F_alpha` for finite alpha, `max_m f_m` for the max-min problem.
    pub objective: f64,
    pub enumerated: usize,
}

/// Enumerates every decomposition with no empty subnetwork and returns the
/// minimizer of `F_alpha` (or of `max_m f_m` when alpha is infinite).
pub fn brute_force_decompose(theta: &ThetaMatrix, partition: &BsPartition, alpha: AlphaParam) -> Result<BruteForceResult> {
    check_instance(theta, partition)?;
    let m = partition.num_groups();
    let model = DeModel::new(theta, partition, DeIterations::CONVERGED)?;
    let (user_of, objective, enumerated) = enumerate_best(theta.k(), m, |map| {
        let x = Assignment::from_users(map, m)?;
        objective_of(&model, x.view(), alpha)
    })?;
    Ok(BruteForceResult { decomposition: Decomposition::new(user_of, partition.clone())?, objective, enumerated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::alpha_utility;
    use ndarray::array;
    use proptest::prelude::*;

    fn two() -> BsPartition {
        BsPartition::new(vec![vec![0], vec![1]], 2).unwrap()
    }

    #[test]
    fn integral_rows_round_to_themselves() {
        let x = Assignment::from_users(&[1, 0, 1, 1], 2).unwrap();
        assert_eq!(round_assignment(&x, &two()).unwrap().user_of, vec![1, 0, 1, 1]);
    }

    #[test]
    fn argmax_and_ties() {
        let x = Assignment::new(array![[0.6, 0.4], [0.5, 0.5], [0.1, 0.9]]).unwrap();
        assert_eq!(round_assignment(&x, &two()).unwrap().user_of, vec![0, 0, 1]);
    }

    #[test]
    fn repair_moves_the_strongest_candidate() {
        let x = Assignment::new(array![[0.7, 0.3], [0.6, 0.4]]).unwrap();
        assert_eq!(round_assignment(&x, &two()).unwrap().user_of, vec![0, 1]);
        let x = Assignment::new(array![[0.55, 0.45], [0.9, 0.1]]).unwrap();
        assert_eq!(round_assignment(&x, &two()).unwrap().user_of, vec![1, 0]);
    }

    #[test]
    fn too_few_users() {
        let x = Assignment::new(array![[0.5, 0.5]]).unwrap();
        assert!(round_assignment(&x, &two()).is_err());
    }

    #[test]
    fn enumeration_counts() {
        let theta = ThetaMatrix::new(array![[1.0, 2.0, 0.5], [0.3, 1.0, 2.0]]).unwrap();
        let two_users = ThetaMatrix::new(array![[1.0, 2.0], [0.3, 1.0]]).unwrap();
        let a = AlphaParam::integer(0);
        assert_eq!(brute_force_decompose(&two_users, &two(), a).unwrap().enumerated, 2);
        assert_eq!(brute_force_decompose(&theta, &two(), a).unwrap().enumerated, 6);
        let three = BsPartition::new(vec![vec![0], vec![1], vec![2]], 3).unwrap();
        let t3 = ThetaMatrix::new(Array2::from_elem((3, 4), 1.0)).unwrap();
        // 3^4 - 3 * 2^4 + 3 = 36 surjections
        assert_eq!(brute_force_decompose(&t3, &three, a).unwrap().enumerated, 36);
    }

    use ndarray::Array2;

    #[test]
    fn single_subnetwork() {
        let theta = ThetaMatrix::new(array![[3.0]]).unwrap();
        let part = BsPartition::single(1).unwrap();
        let a = AlphaParam::integer(2);
        let r = brute_force_decompose(&theta, &part, a).unwrap();
        assert_eq!(r.enumerated, 1);
        let c = crate::capacity::c_m_constant(&theta, &part, 0, DeIterations::CONVERGED).unwrap();
        assert!((r.objective + alpha_utility(c, a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rejects_large_instances() {
        let theta = ThetaMatrix::new(Array2::from_elem((2, 21), 1.0)).unwrap();
        assert!(matches!(
            brute_force_decompose(&theta, &two(), AlphaParam::integer(0)),
            Err(Error::TooLarge { .. })
        ));
    }

    proptest! {
        #[test]
        fn scaling_capacities_keeps_the_argmax(
            weights in prop::collection::vec(0.1f64..5.0, 10),
            scale in 0.01f64..100.0,
        ) {
            // Synthetic capacities: each subnetwork earns the weights of its users.
            let caps = |map: &[usize], s: f64| {
                let mut c = [0.0; 2];
                for (u, &j) in map.iter().enumerate() {
                    c[j] += weights[u] * (1.0 + j as f64 * weights[u + 5]);
                }
                c.map(|v| v * s)
            };
            let sum = |s: f64| enumerate_best(5, 2, |map| Ok(-caps(map, s).iter().sum::<f64>())).unwrap().0;
            let maxmin = |s: f64| enumerate_best(5, 2, |map| Ok(-caps(map, s).iter().copied().fold(f64::INFINITY, f64::min))).unwrap().0;
            prop_assert_eq!(sum(1.0), sum(scale));
            prop_assert_eq!(maxmin(1.0), maxmin(scale));
        }
    }
}
