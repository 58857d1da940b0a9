#![allow(dead_code)]

use palms_core::ClassLabel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 3-D pool with labels from a curved boundary plus a little label noise.
pub fn pool(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<ClassLabel>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut one = x[0] * x[0] + 0.5 * x[1] > 1.0;
        if rng.gen_bool(0.05) {
            one = !one;
        }
        ys.push(if one { ClassLabel::One } else { ClassLabel::Zero });
        xs.push(x);
    }
    (xs, ys)
}

pub fn csv(xs: &[Vec<f64>], labels: Option<&[ClassLabel]>) -> String {
    let n = xs[0].len();
    let mut out: Vec<String> = (1..=n).map(|i| format!("f{i}")).collect();
    if labels.is_some() {
        out.push("label".into());
    }
    let mut text = out.join(",") + "\n";
    for (i, x) in xs.iter().enumerate() {
        let mut row: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
        if let Some(l) = labels {
            row.push(l[i].index().to_string());
        }
        text += &(row.join(",") + "\n");
    }
    text
}
