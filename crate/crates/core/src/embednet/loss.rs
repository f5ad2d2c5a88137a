//! Affinity loss `|Theta Theta^T - Y Y^T|_F^2` in its expanded `K x K` form.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::masking::LabelMatrix;

fn check(theta: ArrayView2<f64>, labels: &LabelMatrix) -> Result<()> {
    if theta.nrows() != labels.onehot.nrows() || labels.weights.len() != theta.nrows() {
        return Err(Error::param(
            "labels",
            format!(
                "{} embedding rows, {} label rows, {} weights",
                theta.nrows(),
                labels.onehot.nrows(),
                labels.weights.len()
            ),
        ));
    }
    Ok(())
}

fn weighted(m: ArrayView2<f64>, w: &[f64]) -> Array2<f64> {
    let mut out = m.to_owned();
    for (mut row, &wi) in out.rows_mut().into_iter().zip(w) {
        if wi != 1.0 {
            row *= wi;
        }
    }
    out
}

/// Squares summed in ascending order, so the result depends only on the
/// multiset of entries and label column permutations are bitwise exact.
fn frob2(m: &Array2<f64>) -> f64 {
    let mut sq: Vec<f64> = m.iter().map(|v| v * v).collect();
    sq.sort_unstable_by(f64::total_cmp);
    sq.iter().sum()
}

/// Loss and its gradient with respect to `theta`. Rows are scaled by their
/// weight in both factors, so weight-0 rows drop out.
pub(crate) fn loss_and_grad(theta: ArrayView2<f64>, y: ArrayView2<f64>, w: &[f64]) -> (f64, Array2<f64>) {
    let tw = weighted(theta, w);
    let yw = weighted(y, w);
    let tt = tw.t().dot(&tw);
    let ty = tw.t().dot(&yw);
    let yy = yw.t().dot(&yw);
    let loss = frob2(&tt) - 2.0 * frob2(&ty) + frob2(&yy);
    let mut grad = (tw.dot(&tt) - yw.dot(&ty.t())) * 4.0;
    for (mut row, &wi) in grad.rows_mut().into_iter().zip(w) {
        if wi != 1.0 {
            row *= wi;
        }
    }
    (loss.max(0.0), grad)
}

/// `|Theta^T Theta|^2 - 2 |Theta^T Y|^2 + |Y^T Y|^2` over weighted rows.
pub fn dc_loss(theta: ArrayView2<f64>, labels: &LabelMatrix) -> Result<f64> {
    check(theta, labels)?;
    let tw = weighted(theta, &labels.weights);
    let yw = weighted(labels.onehot.view(), &labels.weights);
    let loss = frob2(&tw.t().dot(&tw)) - 2.0 * frob2(&tw.t().dot(&yw)) + frob2(&yw.t().dot(&yw));
    Ok(loss.max(0.0))
}

/// `4 (Theta (Theta^T Theta) - Y (Y^T Theta))` over weighted rows.
pub fn dc_loss_grad(theta: ArrayView2<f64>, labels: &LabelMatrix) -> Result<Array2<f64>> {
    check(theta, labels)?;
    Ok(loss_and_grad(theta, labels.onehot.view(), &labels.weights).1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels_from(y: Array2<f64>) -> LabelMatrix {
        let n = y.nrows();
        LabelMatrix {
            onehot: y,
            weights: vec![1.0; n],
        }
    }

    fn random_onehot(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Array2<f64> {
        let mut y = Array2::zeros((n, c));
        for i in 0..n {
            y[[i, rng.random_range(0..c)]] = 1.0;
        }
        y
    }

    fn direct(theta: &Array2<f64>, y: &Array2<f64>) -> f64 {
        let d = theta.dot(&theta.t()) - y.dot(&y.t());
        d.iter().map(|v| v * v).sum()
    }

    #[test]
    fn one_hot_embedding_has_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = random_onehot(&mut rng, 40, 3);
        let l = labels_from(y.clone());
        assert_eq!(dc_loss(y.view(), &l).unwrap(), 0.0);
        let g = dc_loss_grad(y.view(), &l).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn label_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let theta = Array2::from_shape_fn((30, 4), |_| rng.random_range(-1.0..1.0));
        let y = random_onehot(&mut rng, 30, 3);
        let yp = y.select(ndarray::Axis(1), &[2, 0, 1]);
        assert_eq!(
            dc_loss(theta.view(), &labels_from(y)).unwrap(),
            dc_loss(theta.view(), &labels_from(yp)).unwrap()
        );
    }

    #[test]
    fn expanded_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = Array2::from_shape_fn((50, 4), |_| rng.random_range(-1.0..1.0));
        let y = random_onehot(&mut rng, 50, 3);
        let a = dc_loss(theta.view(), &labels_from(y.clone())).unwrap();
        let b = direct(&theta, &y);
        assert!((a - b).abs() <= 1e-8 * b);
    }

    #[test]
    fn zero_weight_rows_ignored() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let theta = Array2::from_shape_fn((20, 3), |_| rng.random_range(-1.0..1.0));
        let y = random_onehot(&mut rng, 20, 2);
        let mut l = labels_from(y.clone());
        for i in 10..20 {
            l.weights[i] = 0.0;
        }
        let kept = dc_loss(theta.slice(ndarray::s![..10, ..]), &labels_from(y.slice(ndarray::s![..10, ..]).to_owned())).unwrap();
        assert!((dc_loss(theta.view(), &l).unwrap() - kept).abs() < 1e-12 * kept.max(1.0));
        let g = dc_loss_grad(theta.view(), &l).unwrap();
        assert!(g.slice(ndarray::s![10.., ..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let theta = Array2::from_shape_fn((20, 3), |_| rng.random_range(-1.0..1.0));
        let l = labels_from(random_onehot(&mut rng, 20, 2));
        let g = dc_loss_grad(theta.view(), &l).unwrap();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for idx in 0..theta.len() {
            let (r, c) = (idx / 3, idx % 3);
            let mut p = theta.clone();
            p[[r, c]] += h;
            let mut m = theta.clone();
            m[[r, c]] -= h;
            let fd = (dc_loss(p.view(), &l).unwrap() - dc_loss(m.view(), &l).unwrap()) / (2.0 * h);
            worst = worst.max((fd - g[[r, c]]).abs() / g[[r, c]].abs().max(1e-3));
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn minimum_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = random_onehot(&mut rng, 15, 3);
        let l = labels_from(y.clone());
        let h = 1e-5;
        for _ in 0..10 {
            let dir = Array2::from_shape_fn((15, 3), |_| rng.random_range(-1.0..1.0));
            let p = &y + &(&dir * h);
            let m = &y - &(&dir * h);
            let d = (dc_loss(p.view(), &l).unwrap() - dc_loss(m.view(), &l).unwrap()) / (2.0 * h);
            assert!(d.abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_scales_with_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let theta = Array2::from_shape_fn((12, 3), |_| rng.random_range(-1.0..1.0));
        let y = random_onehot(&mut rng, 12, 2);
        let w = vec![1.0; 12];
        let (l1, g1) = loss_and_grad(theta.view(), y.view(), &w);
        let c = 0.37;
        // c * loss, differentiated by finite differences on the scaled function
        let h = 1e-6;
        let mut p = theta.clone();
        p[[3, 1]] += h;
        let mut m = theta.clone();
        m[[3, 1]] -= h;
        let fd = c * (loss_and_grad(p.view(), y.view(), &w).0 - loss_and_grad(m.view(), y.view(), &w).0) / (2.0 * h);
        assert!((fd - c * g1[[3, 1]]).abs() < 1e-5 * (c * g1[[3, 1]]).abs().max(1.0));
        assert!(l1 >= 0.0);
    }
}
