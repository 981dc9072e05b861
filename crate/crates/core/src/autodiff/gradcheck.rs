//! Central-finite-difference verification of tape gradients.

use super::{Tape, Tensor, Var};

/// Maximum relative disagreement between the tape gradient of `f` and
/// central finite differences, over every coordinate of every leaf.
///
/// `f` must build a scalar loss from freshly created leaves each call (any
/// randomness inside must be frozen by seed). The step for coordinate `x`
/// is `eps * max(1, |x|)`.
pub fn grad_check<F>(f: F, leaves: &[Tensor], eps: f64) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    assert!(eps > 0.0);
    let eval = |inputs: &[Tensor]| -> (f64, Vec<Option<Tensor>>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        let value = tape.value(loss).item();
        let grads = tape.backward(loss).expect("loss must be scalar");
        (value, vars.iter().map(|&v| grads.get(v).cloned()).collect())
    };

    let (_, analytic) = eval(leaves);

    let mut worst = 0.0f64;
    for (li, leaf) in leaves.iter().enumerate() {
        let ga = analytic[li]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(leaf.rows, leaf.cols));
        for ci in 0..leaf.data.len() {
            let h = eps * leaf.data[ci].abs().max(1.0);
            let mut plus = leaves.to_vec();
            plus[li].data[ci] += h;
            let (fp, _) = eval(&plus);
            let mut minus = leaves.to_vec();
            minus[li].data[ci] -= h;
            let (fm, _) = eval(&minus);
            let fd = (fp - fm) / (2.0 * h);
            let ad = ga.data[ci];
            let rel = (fd - ad).abs() / (fd.abs() + ad.abs() + 1e-6);
            if rel > worst {
                worst = rel;
            }
        }
    }
    worst
}
