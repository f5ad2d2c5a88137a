//! Weighted K-means over feature or embedding rows.

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Distance-weighted seeding.
    #[default]
    PlusPlus,
    /// `k` distinct positive-weight rows chosen uniformly.
    Random,
    /// Caller-supplied `k x D` starting centers.
    #[serde(skip)]
    Centers(Array2<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tol: f64,
    pub init: Init,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 300,
            tol: 1e-6,
            init: Init::PlusPlus,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster index per row, including zero-weight rows.
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    /// `sum_i w_i * |row_i - center(label_i)|^2`.
    pub objective: f64,
    pub iterations: usize,
    /// Objective after every Lloyd iteration.
    pub history: Vec<f64>,
}

impl ClusterAssignment {
    pub fn k(&self) -> usize {
        self.centers.nrows()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("row,label\n");
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(&format!("{i},{l}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center and its squared distance; ties go to the lowest index.
fn nearest(row: ArrayView1<f64>, centers: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.rows().into_iter().enumerate() {
        let d = sq_dist(row, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// `sum_i w_i |row_i - center(label_i)|^2`.
pub fn objective(rows: ArrayView2<f64>, weights: &[f64], labels: &[usize], centers: &Array2<f64>) -> f64 {
    rows.rows()
        .into_iter()
        .zip(weights)
        .zip(labels)
        .map(|((r, &w), &l)| if w > 0.0 { w * sq_dist(r, centers.row(l)) } else { 0.0 })
        .sum()
}

fn distinct_rows_at_least(rows: ArrayView2<f64>, active: &[usize], k: usize) -> bool {
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    for &i in active {
        seen.insert(rows.row(i).iter().map(|v| (v + 0.0).to_bits()).collect());
        if seen.len() >= k {
            return true;
        }
    }
    false
}

fn weighted_pick(rng: &mut ChaCha8Rng, candidates: &[usize], mass: &[f64]) -> usize {
    let total: f64 = mass.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (&i, &m) in candidates.iter().zip(mass) {
        if m > 0.0 {
            if target < m {
                return i;
            }
            target -= m;
        }
    }
    // rounding left a sliver of mass; take the last candidate that had any
    candidates
        .iter()
        .zip(mass)
        .rev()
        .find(|(_, &m)| m > 0.0)
        .map(|(&i, _)| i)
        .unwrap_or(candidates[0])
}

fn init_centers(rows: ArrayView2<f64>, weights: &[f64], active: &[usize], cfg: &KMeansConfig) -> Result<Array2<f64>> {
    let d = rows.ncols();
    let k = cfg.k;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centers = Array2::zeros((k, d));
    match &cfg.init {
        Init::Centers(c) => {
            if c.dim() != (k, d) {
                return Err(Error::param(
                    "init",
                    format!("given centers are {:?}, expected ({k}, {d})", c.dim()),
                ));
            }
            centers.assign(c);
        }
        Init::Random => {
            let mut chosen: Vec<usize> = Vec::with_capacity(k);
            let mut picked_rows: HashSet<Vec<u64>> = HashSet::new();
            while chosen.len() < k {
                let i = active[rng.random_range(0..active.len())];
                let key: Vec<u64> = rows.row(i).iter().map(|v| (v + 0.0).to_bits()).collect();
                if picked_rows.insert(key) {
                    chosen.push(i);
                }
            }
            for (j, &i) in chosen.iter().enumerate() {
                centers.row_mut(j).assign(&rows.row(i));
            }
        }
        Init::PlusPlus => {
            let mass: Vec<f64> = active.iter().map(|&i| weights[i]).collect();
            let first = weighted_pick(&mut rng, active, &mass);
            centers.row_mut(0).assign(&rows.row(first));
            let mut best_d: Vec<f64> = active.iter().map(|&i| sq_dist(rows.row(i), rows.row(first))).collect();
            for j in 1..k {
                let mass: Vec<f64> = active.iter().zip(&best_d).map(|(&i, &dd)| weights[i] * dd).collect();
                let next = if mass.iter().sum::<f64>() > 0.0 {
                    weighted_pick(&mut rng, active, &mass)
                } else {
                    active[rng.random_range(0..active.len())]
                };
                centers.row_mut(j).assign(&rows.row(next));
                for (bd, &i) in best_d.iter_mut().zip(active) {
                    *bd = bd.min(sq_dist(rows.row(i), rows.row(next)));
                }
            }
        }
    }
    Ok(centers)
}

/// Lloyd iterations on the positive-weight rows; zero-weight rows are
/// attached to their nearest final center afterwards.
pub fn kmeans(rows: ArrayView2<f64>, weights: &[f64], cfg: &KMeansConfig) -> Result<ClusterAssignment> {
    let n = rows.nrows();
    let d = rows.ncols();
    let k = cfg.k;
    if weights.len() != n {
        return Err(Error::param(
            "weights",
            format!("{} weights for {n} rows", weights.len()),
        ));
    }
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::param("weights", format!("{w} is not a finite non-negative weight")));
    }
    if rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("rows", "non-finite entry"));
    }
    let active: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
    if !distinct_rows_at_least(rows, &active, k) {
        return Err(Error::Degenerate(format!(
            "{k} clusters requested but fewer than {k} distinct positive-weight rows"
        )));
    }

    let mut centers = init_centers(rows, weights, &active, cfg)?;
    let mut labels = vec![0usize; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut prev = f64::INFINITY;

    while iterations < cfg.max_iter {
        iterations += 1;
        let assigned: Vec<(usize, f64)> = active
            .par_iter()
            .map(|&i| nearest(rows.row(i), &centers))
            .collect();
        let mut changed = iterations == 1;
        for (&i, &(l, _)) in active.iter().zip(&assigned) {
            if labels[i] != l {
                labels[i] = l;
                changed = true;
            }
        }

        let mut sums = Array2::<f64>::zeros((k, d));
        let mut mass = vec![0.0; k];
        for &i in &active {
            let l = labels[i];
            let w = weights[i];
            mass[l] += w;
            sums.row_mut(l).scaled_add(w, &rows.row(i));
        }
        for (j, &m) in mass.iter().enumerate() {
            if m > 0.0 {
                centers.row_mut(j).assign(&sums.row(j).mapv(|v| v / m));
            }
        }
        // an empty cluster takes over the row lying farthest from its center
        while let Some(empty) = (0..k).find(|&j| mass[j] == 0.0) {
            let far = active
                .iter()
                .copied()
                .filter(|&i| mass[labels[i]] > weights[i])
                .max_by(|&a, &b| {
                    let da = weights[a] * sq_dist(rows.row(a), centers.row(labels[a]));
                    let db = weights[b] * sq_dist(rows.row(b), centers.row(labels[b]));
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .ok_or_else(|| Error::Degenerate("cannot refill an empty cluster".into()))?;
            let old = labels[far];
            labels[far] = empty;
            mass[old] -= weights[far];
            mass[empty] = weights[far];
            centers.row_mut(empty).assign(&rows.row(far));
            let mut s = Array2::<f64>::zeros((1, d));
            let mut m = 0.0;
            for &i in &active {
                if labels[i] == old {
                    s.row_mut(0).scaled_add(weights[i], &rows.row(i));
                    m += weights[i];
                }
            }
            centers.row_mut(old).assign(&s.row(0).mapv(|v| v / m));
            changed = true;
        }

        let obj = objective(rows, weights, &labels, &centers);
        history.push(obj);
        let converged = !changed || obj == 0.0 || (prev.is_finite() && prev - obj <= cfg.tol * prev);
        prev = obj;
        if converged {
            break;
        }
    }

    let idle: Vec<usize> = (0..n).filter(|&i| weights[i] <= 0.0).collect();
    let attached: Vec<usize> = idle.par_iter().map(|&i| nearest(rows.row(i), &centers).0).collect();
    for (&i, l) in idle.iter().zip(attached) {
        labels[i] = l;
    }

    let objective = objective(rows, weights, &labels, &centers);
    Ok(ClusterAssignment {
        labels,
        centers,
        objective,
        iterations,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn rows_1d(v: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()
    }

    /// Best objective over every 2-partition, by enumeration.
    fn exhaustive_two_partition(v: &[f64]) -> (f64, Vec<f64>) {
        let n = v.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1..(1u32 << n) - 1 {
            let mut groups = [vec![], vec![]];
            for (i, x) in v.iter().enumerate() {
                groups[((mask >> i) & 1) as usize].push(*x);
            }
            let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
            let obj: f64 = groups
                .iter()
                .zip(&means)
                .map(|(g, m)| g.iter().map(|x| (x - m).powi(2)).sum::<f64>())
                .sum();
            if obj < best.0 {
                let mut m = means.clone();
                m.sort_by(f64::total_cmp);
                best = (obj, m);
            }
        }
        best
    }

    #[test]
    fn four_points_match_exhaustive_optimum() {
        let v = [0.0, 0.1, 10.0, 10.1];
        let (oracle_obj, oracle_centers) = exhaustive_two_partition(&v);
        assert!((oracle_obj - 0.01).abs() < 1e-12);
        let a = kmeans(rows_1d(&v).view(), &[1.0; 4], &KMeansConfig::new(2, 0)).unwrap();
        let mut c: Vec<f64> = a.centers.column(0).to_vec();
        c.sort_by(f64::total_cmp);
        assert!((c[0] - oracle_centers[0]).abs() < 1e-12 && (c[1] - oracle_centers[1]).abs() < 1e-12);
        assert!((a.objective - oracle_obj).abs() < 1e-12);
        assert!((c[0] - 0.05).abs() < 1e-12 && (c[1] - 10.05).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_is_weighted_mean() {
        let rows = Array2::from_shape_vec((3, 2), vec![0.0, 0.0, 2.0, 4.0, 4.0, 8.0]).unwrap();
        let w = [1.0, 1.0, 2.0];
        let a = kmeans(rows.view(), &w, &KMeansConfig::new(1, 3)).unwrap();
        assert!((a.centers[[0, 0]] - 2.5).abs() < 1e-12);
        assert!((a.centers[[0, 1]] - 5.0).abs() < 1e-12);
        assert!(a.labels.iter().all(|&l| l == 0));
    }

    fn two_clouds(seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 200;
        let mut data = Vec::new();
        let mut truth = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let offset = if c == 0 { 0.0 } else { 100.0 };
            for _ in 0..3 {
                let e: f64 = rng.sample(StandardNormal);
                data.push(offset + 0.3 * e);
            }
            truth.push(c);
        }
        (Array2::from_shape_vec((n, 3), data).unwrap(), truth)
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        a.iter().zip(b).all(|(x, y)| (*x == a[0]) == (*y == b[0]))
    }

    #[test]
    fn separated_clouds_recovered_exactly() {
        for seed in 0..5 {
            let (rows, truth) = two_clouds(seed);
            let a = kmeans(rows.view(), &vec![1.0; rows.nrows()], &KMeansConfig::new(2, seed)).unwrap();
            assert!(same_partition(&a.labels, &truth));
            let mut r = KMeansConfig::new(2, seed);
            r.init = Init::Random;
            let b = kmeans(rows.view(), &vec![1.0; rows.nrows()], &r).unwrap();
            assert!(same_partition(&b.labels, &truth));
        }
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows = Array2::from_shape_fn((500, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let w: Vec<f64> = (0..500).map(|i| if i % 7 == 0 { 0.0 } else { 1.0 + (i % 3) as f64 }).collect();
        let mut cfg = KMeansConfig::new(6, 1);
        cfg.tol = 0.0;
        cfg.init = Init::Random;
        let a = kmeans(rows.view(), &w, &cfg).unwrap();
        for pair in a.history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12 * pair[0], "{pair:?}");
        }
        let recomputed = objective(rows.view(), &w, &a.labels, &a.centers);
        assert!((recomputed - a.objective).abs() <= 1e-9 * a.objective.max(1.0));
        assert!(a.labels.iter().all(|&l| l < 6));
    }

    #[test]
    fn degenerate_input_rejected() {
        let rows = rows_1d(&[1.0, 1.0, 1.0, 5.0]);
        let err = kmeans(rows.view(), &[1.0, 1.0, 1.0, 0.0], &KMeansConfig::new(2, 0)).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
        let err = kmeans(rows.view(), &[1.0; 4], &KMeansConfig::new(3, 0)).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn zero_weight_rows_attach_to_nearest_center() {
        let rows = rows_1d(&[0.0, 0.2, 10.0, 10.2, 9.0, 1.0]);
        let w = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        let a = kmeans(rows.view(), &w, &KMeansConfig::new(2, 0)).unwrap();
        assert_eq!(a.labels[4], a.labels[2]);
        assert_eq!(a.labels[5], a.labels[0]);
        // weightless rows do not move the centers
        let mut c: Vec<f64> = a.centers.column(0).to_vec();
        c.sort_by(f64::total_cmp);
        assert!((c[0] - 0.1).abs() < 1e-12 && (c[1] - 10.1).abs() < 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows = Array2::from_shape_fn((300, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let w = vec![1.0; 300];
        let a = kmeans(rows.view(), &w, &KMeansConfig::new(4, 9)).unwrap();
        let b = kmeans(rows.view(), &w, &KMeansConfig::new(4, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rotation_leaves_labels_unchanged() {
        let (rows, _) = two_clouds(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let extra = Array2::from_shape_fn((60, 3), |_| 50.0 + 20.0 * rng.sample::<f64, _>(StandardNormal));
        let rows = ndarray::concatenate![ndarray::Axis(0), rows, extra];
        let (th, ph) = (0.7f64, -1.1f64);
        let rz = ndarray::arr2(&[[th.cos(), -th.sin(), 0.0], [th.sin(), th.cos(), 0.0], [0.0, 0.0, 1.0]]);
        let rx = ndarray::arr2(&[[1.0, 0.0, 0.0], [0.0, ph.cos(), -ph.sin()], [0.0, ph.sin(), ph.cos()]]);
        let rot = rz.dot(&rx);
        let rotated = rows.dot(&rot.t());
        let w = vec![1.0; rows.nrows()];
        let mut cfg = KMeansConfig::new(3, 5);
        cfg.init = Init::Centers(rows.select(ndarray::Axis(0), &[0, 1, 250]));
        let a = kmeans(rows.view(), &w, &cfg).unwrap();
        cfg.init = Init::Centers(cfg_centers(&cfg).dot(&rot.t()));
        let b = kmeans(rotated.view(), &w, &cfg).unwrap();
        assert_eq!(a.labels, b.labels);
        // k-means++ seeding only sees distances
        let c = kmeans(rows.view(), &w, &KMeansConfig::new(3, 5)).unwrap();
        let d = kmeans(rotated.view(), &w, &KMeansConfig::new(3, 5)).unwrap();
        assert_eq!(c.labels, d.labels);
    }

    fn cfg_centers(cfg: &KMeansConfig) -> Array2<f64> {
        match &cfg.init {
            Init::Centers(c) => c.clone(),
            _ => unreachable!(),
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn row_permutation_keeps_objective(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 60;
            let rows = Array2::from_shape_fn((n, 2), |_| rng.sample::<f64, _>(StandardNormal));
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let permuted = rows.select(ndarray::Axis(0), &perm);
            let pw: Vec<f64> = perm.iter().map(|&i| w[i]).collect();
            let mut cfg = KMeansConfig::new(3, seed);
            cfg.init = Init::Centers(rows.select(ndarray::Axis(0), &[0, 1, 2]));
            cfg.tol = 0.0;
            let a = kmeans(rows.view(), &w, &cfg).unwrap();
            let b = kmeans(permuted.view(), &pw, &cfg).unwrap();
            proptest::prop_assert!((a.objective - b.objective).abs() <= 1e-9 * a.objective.max(1.0));
        }
    }
}
