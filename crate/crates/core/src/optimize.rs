//! Derivative-free minimization with the Nelder–Mead simplex.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct NelderMeadOptions {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Stop once the objective spread over the simplex is below this...
    pub value_tolerance: f64,
    /// ...and every vertex lies within this relative distance of the best one.
    pub parameter_tolerance: f64,
    pub max_iterations: usize,
    /// Optional box; vertices are projected into it.
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            value_tolerance: 1e-6,
            parameter_tolerance: 1e-4,
            max_iterations: 200,
            lower: None,
            upper: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` starting from a simplex spanned by `x0` and `x0 + step_i e_i`.
///
/// Running out of iterations is not an error: the best vertex is returned
/// with `converged == false`. Errors from `f` abort the search.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], step: &[f64], opts: &NelderMeadOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let dim = x0.len();
    if dim == 0 || step.len() != dim {
        return Err(Error::InvalidParameter("starting point and step must have equal, nonzero length".into()));
    }
    for bound in [&opts.lower, &opts.upper].into_iter().flatten() {
        if bound.len() != dim {
            return Err(Error::InvalidParameter("bounds must match the problem dimension".into()));
        }
    }
    let project = |x: &mut Vec<f64>| {
        for i in 0..dim {
            if let Some(lo) = &opts.lower {
                x[i] = x[i].max(lo[i]);
            }
            if let Some(hi) = &opts.upper {
                x[i] = x[i].min(hi[i]);
            }
        }
    };

    let mut evaluations = 0;
    let mut eval = |x: &[f64]| -> Result<f64> {
        evaluations += 1;
        let v = f(x)?;
        if v.is_nan() {
            return Err(Error::NonFinite(format!("objective is NaN at {x:?}")));
        }
        Ok(v)
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let mut start = x0.to_vec();
    project(&mut start);
    let v = eval(&start)?;
    simplex.push((start.clone(), v));
    for i in 0..dim {
        let mut x = start.clone();
        x[i] += step[i];
        project(&mut x);
        if x[i] == start[i] {
            // Pinned against a bound: step the other way.
            x[i] -= 2.0 * step[i];
            project(&mut x);
        }
        let v = eval(&x)?;
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if has_converged(&simplex, opts) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        let worst = simplex[dim].clone();
        let centroid: Vec<f64> =
            (0..dim).map(|i| simplex[..dim].iter().map(|(x, _)| x[i]).sum::<f64>() / dim as f64).collect();
        let toward = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect();
            project(&mut x);
            x
        };

        let xr = toward(opts.reflection);
        let fr = eval(&xr)?;
        if fr < simplex[0].1 {
            let xe = toward(opts.reflection * opts.expansion);
            let fe = eval(&xe)?;
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let x = toward(opts.reflection * opts.contraction);
            let v = eval(&x)?;
            (x, v)
        } else {
            let x = toward(-opts.contraction);
            let v = eval(&x)?;
            (x, v)
        };
        if fc < fr.min(worst.1) {
            simplex[dim] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let mut x: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, v)| b + opts.shrink * (v - b)).collect();
            project(&mut x);
            let v = eval(&x)?;
            *vertex = (x, v);
        }
    }

    let (point, value) = simplex.swap_remove(0);
    Ok(Minimum { point, value, iterations, evaluations, converged })
}

fn has_converged(simplex: &[(Vec<f64>, f64)], opts: &NelderMeadOptions) -> bool {
    let best = &simplex[0];
    let spread = simplex.last().map(|v| v.1).unwrap_or(best.1) - best.1;
    if !(spread <= opts.value_tolerance) {
        return false;
    }
    simplex
        .iter()
        .skip(1)
        .all(|(x, _)| x.iter().zip(&best.0).all(|(a, b)| (a - b).abs() <= opts.parameter_tolerance * b.abs().max(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bowl(x: &[f64]) -> Result<f64> {
        Ok((x[0] - 1.0).powi(2) + 10.0 * (x[1] - 2.0).powi(2))
    }

    fn tight() -> NelderMeadOptions {
        NelderMeadOptions {
            value_tolerance: 1e-16,
            parameter_tolerance: 1e-9,
            max_iterations: 2000,
            ..NelderMeadOptions::default()
        }
    }

    #[test]
    fn finds_the_bowl_minimum() {
        let m = nelder_mead(bowl, &[-7.0, 9.0], &[1.0, 1.0], &tight()).unwrap();
        assert!(m.converged);
        assert!((m.point[0] - 1.0).abs() < 1e-6 && (m.point[1] - 2.0).abs() < 1e-6, "{:?}", m.point);
    }

    #[test]
    fn default_tolerances_stop_early() {
        let m = nelder_mead(bowl, &[0.0, 0.0], &[0.5, 0.5], &NelderMeadOptions::default()).unwrap();
        assert!(m.converged);
        assert!(m.value < 1e-5);
    }

    #[test]
    fn iteration_limit_is_reported() {
        let opts = NelderMeadOptions { max_iterations: 3, ..tight() };
        let m = nelder_mead(bowl, &[-7.0, 9.0], &[1.0, 1.0], &opts).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 3);
    }

    #[test]
    fn bounds_are_respected() {
        let opts = NelderMeadOptions { lower: Some(vec![2.0, -10.0]), ..tight() };
        let m = nelder_mead(bowl, &[5.0, 0.0], &[1.0, 1.0], &opts).unwrap();
        assert!(m.converged);
        assert!((m.point[0] - 2.0).abs() < 1e-9);
        assert!((m.point[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn one_dimensional() {
        let m = nelder_mead(|x| Ok((x[0] + 3.0).powi(2)), &[10.0], &[1.0], &tight()).unwrap();
        assert!((m.point[0] + 3.0).abs() < 1e-6);
    }

    #[test]
    fn objective_errors_propagate() {
        let err = nelder_mead(|_| Err(Error::Fit("boom".into())), &[0.0], &[1.0], &tight());
        assert!(err.is_err());
        assert!(nelder_mead(|_| Ok(f64::NAN), &[0.0], &[1.0], &tight()).is_err());
        assert!(nelder_mead(bowl, &[0.0, 0.0], &[1.0], &tight()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn converges_from_any_start(x in -10.0f64..10.0, y in -10.0f64..10.0) {
            let m = nelder_mead(bowl, &[x, y], &[1.0, 1.0], &tight()).unwrap();
            prop_assert!(m.converged);
            prop_assert!((m.point[0] - 1.0).abs() < 1e-6);
            prop_assert!((m.point[1] - 2.0).abs() < 1e-6);
        }
    }
}
