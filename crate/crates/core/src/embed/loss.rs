//! Per-pair skip-gram loss and its gradients.
//!
//! For a center input vector `v`, context output vector `u_c`, negative
//! output vectors `u_1..u_k` and pair weight `w`:
//!
//! ```text
//! L = −w · [ log σ(u_c·v) + Σ_i log σ(−u_i·v) ]
//! ∂L/∂v   = −w · [ (1 − σ(u_c·v)) u_c − Σ_i σ(u_i·v) u_i ]
//! ∂L/∂u_c = −w · (1 − σ(u_c·v)) v
//! ∂L/∂u_i =  w · σ(u_i·v) v
//! ```

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log σ(x)` without overflow for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn pair_loss(center: &[f64], context: &[f64], negatives: &[&[f64]], weight: f64) -> f64 {
    let positive = log_sigmoid(dot(context, center));
    let negative: f64 = negatives.iter().map(|u| log_sigmoid(-dot(u, center))).sum();
    -weight * (positive + negative)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairGradient {
    pub loss: f64,
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// [`pair_loss`] with its analytic gradient.
pub fn pair_loss_grad(
    center: &[f64],
    context: &[f64],
    negatives: &[&[f64]],
    weight: f64,
) -> PairGradient {
    let pos_score = dot(context, center);
    let pos_coef = -weight * (1.0 - sigmoid(pos_score));
    let mut g_center: Vec<f64> = context.iter().map(|u| pos_coef * u).collect();
    let g_context: Vec<f64> = center.iter().map(|v| pos_coef * v).collect();
    let mut g_negatives = Vec::with_capacity(negatives.len());
    for u in negatives {
        let coef = weight * sigmoid(dot(u, center));
        for (g, x) in g_center.iter_mut().zip(*u) {
            *g += coef * x;
        }
        g_negatives.push(center.iter().map(|v| coef * v).collect());
    }
    PairGradient {
        loss: pair_loss(center, context, negatives, weight),
        center: g_center,
        context: g_context,
        negatives: g_negatives,
    }
}

/// Full-softmax loss `−w · log softmax(U v)_target` over all output rows.
pub fn softmax_loss(center: &[f64], outputs: &[&[f64]], target: usize, weight: f64) -> f64 {
    let scores: Vec<f64> = outputs.iter().map(|u| dot(u, center)).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    -weight * (scores[target] - log_z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;
    use std::f64::consts::LN_2;

    #[test]
    fn zero_vectors() {
        let z = [0.0; 4];
        assert!((pair_loss(&z, &z, &[&z], 1.0) - 2.0 * LN_2).abs() < 1e-15);
        assert!((pair_loss(&z, &z, &[&z], 0.5) - LN_2).abs() < 1e-15);
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) + LN_2).abs() < 1e-15);
        assert_eq!(log_sigmoid(800.0), 0.0);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seeded(42);
        let d = 8;
        let vec = |rng: &mut crate::rng::Rng| {
            (0..d)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect::<Vec<f64>>()
        };
        let center = vec(&mut rng);
        let context = vec(&mut rng);
        let negs: Vec<Vec<f64>> = (0..3).map(|_| vec(&mut rng)).collect();
        let w = 0.64;
        let refs: Vec<&[f64]> = negs.iter().map(|n| n.as_slice()).collect();
        let g = pair_loss_grad(&center, &context, &refs, w);
        let h = 1e-5;
        for k in 0..d {
            let mut plus = center.clone();
            let mut minus = center.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd = (pair_loss(&plus, &context, &refs, w) - pair_loss(&minus, &context, &refs, w))
                / (2.0 * h);
            assert!(
                (fd - g.center[k]).abs() <= 1e-6 * fd.abs().max(1e-3),
                "{fd} vs {}",
                g.center[k]
            );
        }
    }

    #[test]
    fn softmax_matches_closed_form() {
        let outputs = [[1.0, 0.0], [0.0, 1.0]];
        let refs: Vec<&[f64]> = outputs.iter().map(|o| o.as_slice()).collect();
        let v = [2.0, 0.0];
        let expected = -(2.0 - (2f64.exp() + 1.0).ln());
        assert!((softmax_loss(&v, &refs, 0, 1.0) - expected).abs() < 1e-12);
    }
}
