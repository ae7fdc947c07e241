//! Central finite-difference oracle for tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NumericsError, ParamSet, Tape, Var};

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    /// Perturbation applied on each side of a coordinate.
    pub step: f64,
    /// Number of randomly drawn coordinates; `None` checks every coordinate.
    pub coordinates: Option<usize>,
    /// Denominator floor for the relative error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck { step: 1e-5, coordinates: None, floor: 1e-6, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// Compares reverse-mode gradients of `build` against central differences.
///
/// `build` records a scalar loss on the given tape; it must be deterministic.
/// Relative error is `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
pub fn check_gradients<F>(params: &ParamSet<f64>, cfg: GradCheck, build: F) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var, NumericsError>,
{
    let eval = |p: &ParamSet<f64>| -> Result<f64, NumericsError> {
        let mut tape = Tape::with_params(p);
        let loss = build(&mut tape)?;
        Ok(tape.value(loss).data()[0])
    };
    let analytic = {
        let mut tape = Tape::with_params(params);
        let loss = build(&mut tape)?;
        tape.backward(loss)?
    };

    let all: Vec<(String, usize)> = params.iter().flat_map(|(name, t)| (0..t.len()).map(move |i| (name.to_string(), i))).collect();
    let coords = match cfg.coordinates {
        Some(n) if n < all.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..n).map(|_| all[rng.gen_range(0..all.len())].clone()).collect()
        }
        _ => all,
    };

    let mut probe = params.clone();
    let mut report = GradCheckReport { checked: 0, max_rel_error: 0.0, worst: None };
    for (name, i) in coords {
        let original = params.require(&name)?.clone();
        let mut bumped = original.clone();
        bumped.data_mut()[i] = original.data()[i] + cfg.step;
        probe.set(&name, bumped.clone())?;
        let plus = eval(&probe)?;
        bumped.data_mut()[i] = original.data()[i] - cfg.step;
        probe.set(&name, bumped)?;
        let minus = eval(&probe)?;
        probe.set(&name, original)?;

        let numeric = (plus - minus) / (2.0 * cfg.step);
        let exact = analytic.get(&name).map(|g| g.data()[i]).unwrap_or(0.0);
        let rel = (exact - numeric).abs() / exact.abs().max(numeric.abs()).max(cfg.floor);
        report.checked += 1;
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((name, i));
        }
    }
    Ok(report)
}
