use rand::seq::index::sample;

use super::{AutodiffError, ParamSet, Tape, Var};
use crate::rng::{stream_rng, STREAM_GRADCHECK};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Coordinates probed per parameter (all of them when the parameter is smaller).
    pub samples_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            samples_per_param: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(parameter name, max relative error)` in parameter order.
    pub per_param: Vec<(String, f64)>,
    pub coordinates_checked: usize,
    /// Coordinates left out because `θ ± ε` switched a ReLU on or off,
    /// where the loss has no derivative to compare against.
    pub kinks_skipped: usize,
}

/// Compares tape gradients with central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε` on sampled coordinates. Relative errors use the
/// denominator `max(|analytic|, |numeric|, 1e-8)`.
///
/// `build` must be deterministic: any dropout has to be disabled or reseeded
/// identically on every call.
pub fn grad_check<F, E>(
    mut build: F,
    params: &mut ParamSet,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, E>
where
    F: FnMut(&mut Tape, &ParamSet) -> Result<Var, E>,
    E: From<AutodiffError>,
{
    if !(1e-7..=1e-4).contains(&opts.epsilon) {
        return Err(AutodiffError::InvalidEpsilon(opts.epsilon).into());
    }
    params.zero_grad();
    let mut tape = Tape::new();
    let loss = build(&mut tape, params)?;
    tape.backward(loss, params)?;
    let analytic: Vec<_> = params.iter().map(|p| p.grad.clone()).collect();

    let mut eval = |params: &ParamSet| -> Result<(f64, Vec<bool>), E> {
        let mut tape = Tape::new();
        let loss = build(&mut tape, params)?;
        let v = tape.value(loss);
        if v.shape() != (1, 1) {
            return Err(AutodiffError::NonScalarLoss { shape: v.shape() }.into());
        }
        Ok((v.get(0, 0), tape.relu_pattern()))
    };

    let mut rng = stream_rng(opts.seed, STREAM_GRADCHECK);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        per_param: Vec::with_capacity(params.len()),
        coordinates_checked: 0,
        kinks_skipped: 0,
    };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let len = params.get(id).value.len();
        let coords: Vec<usize> = if len <= opts.samples_per_param {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, opts.samples_per_param).into_vec();
            c.sort_unstable();
            c
        };
        let mut worst = 0.0_f64;
        for c in coords {
            let original = params.get(id).value.values()[c];
            params.get_mut(id).value.values_mut()[c] = original + opts.epsilon;
            let (plus, plus_pattern) = eval(params)?;
            params.get_mut(id).value.values_mut()[c] = original - opts.epsilon;
            let (minus, minus_pattern) = eval(params)?;
            params.get_mut(id).value.values_mut()[c] = original;
            if plus_pattern != minus_pattern {
                report.kinks_skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * opts.epsilon);
            let a = analytic[id.index()].values()[c];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
            report.coordinates_checked += 1;
        }
        report.max_relative_error = report.max_relative_error.max(worst);
        report.per_param.push((params.get(id).name.clone(), worst));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Activation;
    use crate::linalg::DenseMatrix;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DenseMatrix {
        DenseMatrix::from_vec(
            r,
            c,
            (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn linear_model_is_exact() {
        let mut rng = stream_rng(1, 0);
        let x = random_matrix(&mut rng, 6, 4).map(|v| 1.0 + 0.5 * v);
        let mut params = ParamSet::new();
        let w = params.weight("w", random_matrix(&mut rng, 4, 3));
        let report = grad_check(
            |t: &mut Tape, p: &ParamSet| -> Result<Var, AutodiffError> {
                let xv = t.constant(x.clone());
                let wv = t.param(p, w);
                let y = t.matmul(xv, wv)?;
                Ok(t.sum(y))
            },
            &mut params,
            &GradCheckOptions {
                epsilon: 1e-4,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.max_relative_error <= 1e-9, "{report:?}");
        assert_eq!(report.coordinates_checked, 12);
    }

    #[test]
    fn epsilon_out_of_range_is_rejected() {
        let mut params = ParamSet::new();
        let opts = GradCheckOptions {
            epsilon: 1e-2,
            ..Default::default()
        };
        let r = grad_check(
            |t: &mut Tape, _p: &ParamSet| -> Result<Var, AutodiffError> {
                Ok(t.constant(DenseMatrix::zeros(1, 1)))
            },
            &mut params,
            &opts,
        );
        assert!(matches!(r, Err(AutodiffError::InvalidEpsilon(_))));
    }

    /// Every recorded op composed into a scalar, checked on random small shapes.
    #[test]
    fn every_op_passes_on_random_shapes() {
        for seed in 0..100u64 {
            let mut rng = stream_rng(seed, 9);
            let n = rng.random_range(1..=8);
            let f = rng.random_range(1..=8);
            let g = rng.random_range(2..=8);
            let x = random_matrix(&mut rng, n, f);
            let target = random_matrix(&mut rng, n, g);
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..g)).collect();
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i..n {
                    if rng.random_bool(0.4) {
                        edges.push((i, j, rng.random_range(0.1..1.0)));
                    }
                }
            }
            let s = std::sync::Arc::new(crate::linalg::build_csr(n, &edges).unwrap());
            let mut params = ParamSet::new();
            let w = params.weight("w", random_matrix(&mut rng, f, g));
            let b = params.bias("b", random_matrix(&mut rng, 1, g));
            let v = params.weight("v", random_matrix(&mut rng, g, g));
            let split = rng.random_range(1..=n);
            let build = |t: &mut Tape, p: &ParamSet| -> Result<Var, AutodiffError> {
                let xv = t.constant(x.clone());
                let (wv, bv, vv) = (t.param(p, w), t.param(p, b), t.param(p, v));
                let h = t.matmul(xv, wv)?;
                let h = t.spmm(&s, h)?;
                let h = t.add_row(h, bv)?;
                let sig = t.activation(h, Activation::Sigmoid);
                let h2 = t.matmul(sig, vv)?;
                let h2 = t.scale(h2, 0.7);
                let h3 = t.add(h2, sig)?;
                let ce =
                    t.masked_softmax_xent(h3, &labels, &(0..n).step_by(2).collect::<Vec<_>>())?;
                let mse = t.mse(h3, &target)?;
                let offsets = if split < n {
                    vec![0, split, n]
                } else {
                    vec![0, n]
                };
                let pooled = t.segment_mean(h3, &offsets)?;
                let pooled_sum = t.sum(pooled);
                let mean = t.row_mean(sig)?;
                let mean_sum = t.sum(mean);
                let l2 = t.l2_penalty(&[wv, vv], 0.3);
                let total = t.add(ce, mse)?;
                let total = t.add(total, pooled_sum)?;
                let total = t.add(total, mean_sum)?;
                t.add(total, l2)
            };
            let report = grad_check(
                build,
                &mut params,
                &GradCheckOptions {
                    seed,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(report.max_relative_error <= 1e-5, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn relu_away_from_kink_passes() {
        let mut rng = stream_rng(4, 0);
        let x = random_matrix(&mut rng, 5, 3);
        let mut params = ParamSet::new();
        let w = params.weight("w", random_matrix(&mut rng, 3, 4));
        let report = grad_check(
            |t: &mut Tape, p: &ParamSet| -> Result<Var, AutodiffError> {
                let xv = t.constant(x.clone());
                let wv = t.param(p, w);
                let h = t.matmul(xv, wv)?;
                let h = t.activation(h, Activation::Relu);
                let sq = t.mse(h, &DenseMatrix::zeros(5, 4))?;
                Ok(sq)
            },
            &mut params,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_relative_error <= 1e-5, "{report:?}");
    }

    #[test]
    fn probe_across_a_relu_kink_is_skipped() {
        let mut params = ParamSet::new();
        let w = params.weight("w", DenseMatrix::from_rows(&[vec![1e-6, 0.5]]));
        let report = grad_check(
            |t: &mut Tape, p: &ParamSet| -> Result<Var, AutodiffError> {
                let wv = t.param(p, w);
                let h = t.activation(wv, Activation::Relu);
                Ok(t.sum(h))
            },
            &mut params,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(report.kinks_skipped, 1);
        assert_eq!(report.coordinates_checked, 1);
        assert!(report.max_relative_error <= 1e-9, "{report:?}");
    }
}
