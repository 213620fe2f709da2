use rand::seq::index::sample;
use serde::Serialize;

use super::{Gradients, ParamStore};
use crate::error::Result;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub h: f64,
    /// Maximum tolerated relative error.
    pub tol: f64,
    /// Coordinates sampled per parameter tensor (all of them if smaller).
    pub coords_per_param: usize,
    /// Denominator floor, so near-zero gradients are compared absolutely.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            tol: 1e-4,
            coords_per_param: 16,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_param: Option<String>,
    pub worst_index: Option<usize>,
    /// Set when two evaluations at the same point disagree, e.g. when dropout
    /// draws fresh masks per call.
    pub nondeterministic: bool,
    pub passed: bool,
    pub params: Vec<ParamCheck>,
}

pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Compare `analytic` against central differences of `loss` on a sampled
/// subset of coordinates of every parameter.
pub fn grad_check<F>(
    params: &ParamStore,
    analytic: &Gradients,
    loss: F,
    config: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<f64>,
{
    let base = loss(params)?;
    let nondeterministic = loss(params)? != base;
    let dense = analytic.to_dense(params);
    let mut work = params.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst_param: None,
        worst_index: None,
        nondeterministic,
        passed: true,
        params: Vec::new(),
    };
    let mut r = rng::stream(config.seed, "gradcheck", 0);
    let ids: Vec<_> = params.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        let n = params.get(id).len();
        let take = config.coords_per_param.min(n);
        let mut coords = sample(&mut r, n, take).into_vec();
        coords.sort_unstable();
        let mut pc = ParamCheck {
            name: params.name(id).to_string(),
            checked: 0,
            max_rel_error: 0.0,
        };
        for j in coords {
            let orig = work.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = orig + config.h;
            let up = loss(&work)?;
            work.get_mut(id).data_mut()[j] = orig - config.h;
            let down = loss(&work)?;
            work.get_mut(id).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * config.h);
            let err = relative_error(dense[k][j], numeric, config.floor);
            pc.checked += 1;
            pc.max_rel_error = pc.max_rel_error.max(err);
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = err;
                report.worst_param = Some(pc.name.clone());
                report.worst_index = Some(j);
            }
        }
        report.checked += pc.checked;
        report.params.push(pc);
    }
    report.passed = !nondeterministic && report.max_rel_error <= config.tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use std::cell::Cell;

    use super::*;
    use crate::autodiff::{ParamId, Tape, Tensor};

    fn linear_store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::vector(vec![0.3, -0.7, 1.1]));
        s
    }

    fn linear_loss(s: &ParamStore) -> Result<(f64, Gradients)> {
        let mut t = Tape::new();
        let w = t.param(ParamId(0), s.get(ParamId(0)));
        let x = t.constant(Tensor::vector(vec![2.0, -1.0, 0.5]));
        let l = t.matmul(w, x)?;
        Ok((t.scalar(l), t.backward(l)?))
    }

    #[test]
    fn linear_is_exact() {
        let s = linear_store();
        let (_, g) = linear_loss(&s).unwrap();
        let rep = grad_check(&s, &g, |p| Ok(linear_loss(p)?.0), &GradCheckConfig::default()).unwrap();
        assert_eq!(rep.checked, 3);
        assert!(rep.max_rel_error < 1e-9, "{}", rep.max_rel_error);
        assert!(rep.passed && !rep.nondeterministic);
    }

    #[test]
    fn fresh_dropout_masks_are_flagged() {
        let s = linear_store();
        let calls = Cell::new(0u64);
        let noisy = |p: &ParamStore| -> Result<f64> {
            calls.set(calls.get() + 1);
            let mut t = Tape::new();
            let w = t.param(ParamId(0), p.get(ParamId(0)));
            let d = t.dropout(w, 0.5, true, calls.get())?;
            let l = t.sum(d);
            Ok(t.scalar(l))
        };
        let (_, g) = linear_loss(&s).unwrap();
        let rep = grad_check(&s, &g, noisy, &GradCheckConfig::default()).unwrap();
        assert!(rep.nondeterministic);
        assert!(!rep.passed);
    }

    #[test]
    fn wrong_gradient_fails() {
        let s = linear_store();
        let rep = grad_check(&s, &Gradients::default(), |p| Ok(linear_loss(p)?.0), &GradCheckConfig::default())
            .unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.worst_param.as_deref(), Some("w"));
    }
}
