//! A straight-line transcription of the attention merge,
//! `alpha = sigmoid(FC2(BN(FC1(concat(f1, f2, f3)))))`,
//! `merged = sum_i alpha_i * f_i`, evaluated in eval mode.

use super::randn;
use leadwise::model::LeadAttention;
use leadwise::{Mode, Stream, Tensor3};

fn fc(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    (0..b.len())
        .map(|o| b[o] + (0..n_in).map(|i| w[o * n_in + i] * x[i]).sum::<f64>())
        .collect()
}

/// Eval-mode reference for one batch row.
pub fn reference(att: &LeadAttention<f64>, f: &[Vec<f64>; 3]) -> (Vec<f64>, [f64; 3]) {
    let concat: Vec<f64> = f.concat();
    let p1 = &att.fc1.params;
    let h = fc(&concat, &p1.weight, p1.bias.as_ref().unwrap());
    let s = &att.bn.state;
    let h: Vec<f64> = (0..h.len())
        .map(|j| (h[j] - s.running_mean[j]) / (s.running_var[j] + s.eps).sqrt() * s.gamma[j] + s.beta[j])
        .collect();
    let p2 = &att.fc2.params;
    let z = fc(&h, &p2.weight, p2.bias.as_ref().unwrap());
    let alpha = [0, 1, 2].map(|i| 1.0 / (1.0 + (-z[i]).exp()));
    let merged = (0..f[0].len()).map(|d| alpha[0] * f[0][d] + alpha[1] * f[1][d] + alpha[2] * f[2][d]).collect();
    (merged, alpha)
}

/// Worst absolute difference between `LeadAttention::forward` and the
/// reference over `cases` random sizes, weights and BN statistics, and
/// whether every alpha stayed inside `(0, 1)`.
pub fn attention_max_error(seed: u64, cases: usize) -> (f64, bool) {
    let mut rng = Stream::new(seed);
    let mut worst = 0.0f64;
    let mut bounded = true;
    for _ in 0..cases {
        let dim = 1 + rng.below(12);
        let hidden = 1 + rng.below(10);
        let batch = 1 + rng.below(4);
        let mut att = LeadAttention::<f64>::new(dim, hidden, 0.3, &mut rng);
        let s = &mut att.bn.state;
        for j in 0..hidden {
            s.gamma[j] = rng.uniform_range(0.5, 1.5);
            s.beta[j] = rng.normal() * 0.2;
            s.running_mean[j] = rng.normal() * 0.3;
            s.running_var[j] = rng.uniform_range(0.3, 2.0);
        }
        let feats: Vec<Tensor3<f64>> = (0..3).map(|_| randn((batch, dim, 1), &mut rng)).collect();
        let (merged, alpha) = att.forward(&feats, Mode::Eval, &mut Stream::new(0)).unwrap();
        for b in 0..batch {
            let f = [0, 1, 2].map(|i| feats[i].row(b).to_vec());
            let (m_ref, a_ref) = reference(&att, &f);
            for i in 0..3 {
                let a = alpha.at(b, i, 0);
                worst = worst.max((a - a_ref[i]).abs());
                bounded &= a > 0.0 && a < 1.0;
            }
            for d in 0..dim {
                worst = worst.max((merged.at(b, d, 0) - m_ref[d]).abs());
            }
        }
    }
    (worst, bounded)
}
