use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|a − n| / max(1, |a|, |n|)` over all coordinates.
    pub max_rel_error: f64,
    /// `(parameter index, coordinate)` of the largest error.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }
}

/// Compares tape gradients of `loss_fn` with central finite differences.
///
/// `loss_fn` receives a fresh tape and one trainable leaf per entry of
/// `params` and must return a scalar node.
pub fn grad_check<F>(loss_fn: F, params: &[Tensor], eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let loss = loss_fn(&mut tape, &vars)?;
        Ok(tape.scalar(loss))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = loss_fn(&mut tape, &vars)?;
    let grads = tape.backward(loss);
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.get(&tape, v)).collect();

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
        tol,
    };
    for (pi, a) in analytic.iter().enumerate() {
        for ci in 0..a.len() {
            let orig = work[pi].data()[ci];
            work[pi].data_mut()[ci] = orig + eps;
            let up = eval(&work)?;
            work[pi].data_mut()[ci] = orig - eps;
            let down = eval(&work)?;
            work[pi].data_mut()[ci] = orig;

            let numeric = (up - down) / (2.0 * eps);
            let an = a.data()[ci];
            let rel = (an - numeric).abs() / 1f64.max(an.abs()).max(numeric.abs());
            report.coordinates += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((pi, ci));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn quadratic_is_exact() {
        let p = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let report = grad_check(
            |tape, v| {
                let sq = tape.mul(v[0], v[0])?;
                Ok(tape.sum(sq))
            },
            &[p],
            1e-4,
            1e-6,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.coordinates, 2);
    }

    #[test]
    fn cosine_against_constant() {
        let p = Tensor::vector(vec![0.3, -1.2, 0.8]).unwrap();
        let c = Tensor::vector(vec![1.0, 0.5, -0.25]).unwrap();
        let report = grad_check(
            |tape, v| {
                let k = tape.constant(c.clone());
                let cs = tape.cosine_rows(v[0], k)?;
                Ok(tape.sum(cs))
            },
            &[p],
            1e-4,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // a coarse step on a curved function cannot meet a zero tolerance
        let p = Tensor::vector(vec![0.7]).unwrap();
        let report = grad_check(
            |tape, v| {
                let t = tape.tanh(v[0]);
                Ok(tape.sum(t))
            },
            &[p],
            1e-1,
            0.0,
        )
        .unwrap();
        assert!(!report.passed());
    }

    /// Every tape primitive against central differences on random inputs.
    #[test]
    fn every_primitive_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..100 {
            let n = rng.random_range(1..=4);
            let d = rng.random_range(1..=16);
            let a = random_tensor(&mut rng, &[n, d]);
            let b = random_tensor(&mut rng, &[n, d]);
            let r = random_tensor(&mut rng, &[d]);
            let w = random_tensor(&mut rng, &[3, d]);
            let s = Tensor::scalar(rng.random_range(0.5..2.0));
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let report = grad_check(
                move |tape, v| {
                    let (a, b, r, w, s) = (v[0], v[1], v[2], v[3], v[4]);
                    let x = tape.add_row(a, r)?;
                    let x = tape.tanh(x);
                    let y = tape.sub(x, b)?;
                    let y = tape.mul(y, b)?;
                    let y = tape.add(y, a)?;
                    let yn = tape.normalize_rows(y)?;
                    let logits = tape.matmul_t(yn, w)?;
                    let logits = tape.div_scalar(logits, s)?;
                    let ls = tape.log_softmax_rows(logits);
                    let picked = tape.pick(ls, idx.clone())?;
                    let t1 = tape.mean(picked);
                    let g = tape.gather_rows(w, idx.clone())?;
                    let cs = tape.cosine_rows(g, a)?;
                    let t2 = tape.sum(cs);
                    let tr = tape.transpose(logits);
                    let trl = tape.log_softmax_rows(tr);
                    let t3 = tape.mean(trl);
                    let cat = tape.concat_rows(a, b)?;
                    let sq = tape.mul(cat, cat)?;
                    let t4 = tape.mean(sq);
                    let dots = tape.row_dot(a, g)?;
                    let t5 = tape.sum(dots);
                    let t5 = tape.scale(t5, 0.3);
                    tape.weighted_sum(&[(1.0, t1), (0.5, t2), (1.0, t3), (2.0, t4), (1.0, t5)])
                },
                &[a, b, r, w, s],
                1e-4,
                1e-4,
            )
            .unwrap();
            assert!(report.passed(), "trial {trial}: {report:?}");
        }
    }

    #[test]
    fn abs_away_from_kink() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 50 {
            let a = random_tensor(&mut rng, &[2, 5]);
            if a.data().iter().any(|x| x.abs() < 1e-3) {
                continue;
            }
            let report = grad_check(
                |tape, v| {
                    let ab = tape.abs(v[0]);
                    Ok(tape.sum(ab))
                },
                &[a],
                1e-4,
                1e-4,
            )
            .unwrap();
            assert!(report.passed());
            checked += 1;
        }
    }

    #[test]
    fn gradients_are_linear_in_the_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_tensor(&mut rng, &[3, 4]);
        let b = random_tensor(&mut rng, &[3, 4]);
        let build = |tape: &mut Tape, which: u8| -> (Var, Var) {
            let pa = tape.param(a.clone());
            let kb = tape.constant(b.clone());
            let c = tape.cosine_rows(pa, kb).unwrap();
            let l1 = tape.mean(c);
            let sq = tape.mul(pa, pa).unwrap();
            let l2 = tape.sum(sq);
            let out = match which {
                0 => l1,
                1 => l2,
                _ => tape.add(l1, l2).unwrap(),
            };
            (pa, out)
        };
        let grad = |which| {
            let mut tape = Tape::new();
            let (p, l) = build(&mut tape, which);
            tape.backward(l).get(&tape, p)
        };
        let (g1, g2, g12) = (grad(0), grad(1), grad(2));
        for i in 0..g12.len() {
            let sum = g1.data()[i] + g2.data()[i];
            assert!((g12.data()[i] - sum).abs() <= 4.0 * f64::EPSILON * sum.abs().max(1.0));
        }
    }
}
