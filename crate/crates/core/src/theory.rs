//! First-pick probability of a useful feature under the simulated selector, in closed
//! form and by Monte Carlo.
//!
//! A first pick is made by drawing `S_0` (`n_t` features uniformly from the
//! `n_m`-feature useful pool), then picking from `S_0` with probability `p` and from
//! the other `n_f - n_t` features otherwise. For a fixed useful feature the pick
//! probability is
//!
//! ```text
//! p0 = ((n_f - n_m) p + (n_m - n_t)) / (n_m (n_f - n_t))
//! ```
//!
//! and `p0 - 1/n_f` has the sign of `n_f p - n_t`.

use num_rational::Ratio;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstPickInputs {
    pub n_f: usize,
    pub n_t: usize,
    pub n_m: usize,
    pub p: f64,
}

impl FirstPickInputs {
    pub fn new(n_f: usize, n_t: usize, n_m: usize, p: f64) -> Result<Self> {
        let inputs = Self { n_f, n_t, n_m, p };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_f == self.n_t {
            return Err(Error::invalid("n_f == n_t leaves no feature outside S_0"));
        }
        if !(0 < self.n_t && self.n_t <= self.n_m && self.n_m <= self.n_f) {
            return Err(Error::invalid(format!(
                "need 0 < n_t ({}) <= n_m ({}) <= n_f ({})",
                self.n_t, self.n_m, self.n_f
            )));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::invalid(format!("p = {} is outside [0, 1]", self.p)));
        }
        Ok(())
    }
}

pub fn p0_closed_form(inputs: &FirstPickInputs) -> Result<f64> {
    inputs.validate()?;
    let (nf, nt, nm) = (inputs.n_f as f64, inputs.n_t as f64, inputs.n_m as f64);
    Ok(((nf - nm) * inputs.p + (nm - nt)) / (nm * (nf - nt)))
}

/// Exact rational evaluation of the closed form.
pub fn p0_exact(n_f: usize, n_t: usize, n_m: usize, p: Ratio<i128>) -> Result<Ratio<i128>> {
    let zero = Ratio::from_integer(0);
    let one = Ratio::from_integer(1);
    if p < zero || p > one {
        return Err(Error::invalid("p must lie in [0, 1]"));
    }
    FirstPickInputs::new(n_f, n_t, n_m, 0.5)?;
    let (nf, nt, nm) = (n_f as i128, n_t as i128, n_m as i128);
    Ok((p * (nf - nm) + Ratio::from_integer(nm - nt)) / Ratio::from_integer(nm * (nf - nt)))
}

/// `p0 - 1/n_f = (n_f - n_m)(n_f p - n_t) / (n_m n_f (n_f - n_t))`, exactly.
pub fn p0_minus_uniform_exact(
    n_f: usize,
    n_t: usize,
    n_m: usize,
    p: Ratio<i128>,
) -> Result<Ratio<i128>> {
    p0_exact(n_f, n_t, n_m, p)?;
    let (nf, nt, nm) = (n_f as i128, n_t as i128, n_m as i128);
    Ok(
        Ratio::from_integer(nf - nm) * (p * nf - Ratio::from_integer(nt))
            / Ratio::from_integer(nm * nf * (nf - nt)),
    )
}

/// The critical value `n_t / n_f`.
pub fn preference_threshold(n_f: usize, n_t: usize) -> Result<f64> {
    if n_f == 0 {
        return Err(Error::invalid("n_f must be positive"));
    }
    Ok(n_t as f64 / n_f as f64)
}

/// Trials per independent block of the Monte Carlo estimate.
const MC_BLOCK: usize = 1 << 16;

/// Fraction of simulated first picks that hit feature 0 (a member of the useful pool).
///
/// Trials are split into fixed-size blocks on derived streams, so the estimate does
/// not depend on the worker count.
pub fn p0_monte_carlo(inputs: &FirstPickInputs, trials: usize, rng: &RngStream) -> Result<f64> {
    inputs.validate()?;
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    let FirstPickInputs { n_f, n_t, n_m, p } = *inputs;
    let target = 0usize;
    let blocks = trials.div_ceil(MC_BLOCK);
    let hits: usize = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng.derive(b as u64);
            let n = MC_BLOCK.min(trials - b * MC_BLOCK);
            // Floyd's algorithm with a stamped membership table, reused across trials
            let mut stamp = vec![0u32; n_m];
            let mut s0 = Vec::with_capacity(n_t);
            let mut hits = 0usize;
            for trial in 0..n {
                let mark = trial as u32 + 1;
                s0.clear();
                for j in (n_m - n_t)..n_m {
                    let t = rng.gen_range(0..=j);
                    let pick = if stamp[t] == mark { j } else { t };
                    stamp[pick] = mark;
                    s0.push(pick);
                }
                let hit = if rng.gen_bool(p) {
                    s0[rng.gen_range(0..n_t)] == target
                } else {
                    // r-th smallest feature outside S_0; it is >= r
                    let r = rng.gen_range(0..n_f - n_t);
                    r == target && nth_outside(&s0, r) == target
                };
                hits += usize::from(hit);
            }
            hits
        })
        .sum();
    Ok(hits as f64 / trials as f64)
}

fn nth_outside(excluded: &[usize], r: usize) -> usize {
    let mut sorted = excluded.to_vec();
    sorted.sort_unstable();
    let mut candidate = r;
    for &e in &sorted {
        if e <= candidate {
            candidate += 1;
        } else {
            break;
        }
    }
    candidate
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `p > n_t / n_f`: useful features are favoured over the uniform selector.
    Above,
    Boundary,
    Below,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub inputs: FirstPickInputs,
    pub p0_closed: f64,
    pub p0_mc: f64,
    pub trials: usize,
    pub standard_error: f64,
    pub threshold: f64,
    pub uniform_probability: f64,
    pub verdict: Verdict,
    /// `sign(p0 - 1/n_f) == sign(p - n_t/n_f)` for the closed form.
    pub sign_consistent: bool,
    /// Monte Carlo within four standard errors of the closed form.
    pub mc_consistent: bool,
}

/// Evaluates both routes and the threshold for one input tuple.
pub fn theorem_check(
    inputs: &FirstPickInputs,
    trials: usize,
    rng: &RngStream,
) -> Result<TheoremCheck> {
    let p0_closed = p0_closed_form(inputs)?;
    let p0_mc = p0_monte_carlo(inputs, trials, rng)?;
    let threshold = preference_threshold(inputs.n_f, inputs.n_t)?;
    let uniform = 1.0 / inputs.n_f as f64;
    let standard_error = (p0_closed * (1.0 - p0_closed) / trials as f64).sqrt();
    let verdict = match inputs.p.partial_cmp(&threshold) {
        Some(std::cmp::Ordering::Greater) => Verdict::Above,
        Some(std::cmp::Ordering::Less) => Verdict::Below,
        _ => Verdict::Boundary,
    };
    let gap = p0_closed - uniform;
    let tol = 1e-12;
    let sign_consistent = match verdict {
        Verdict::Above => gap > 0.0 || inputs.n_m == inputs.n_f,
        Verdict::Below => gap < 0.0 || inputs.n_m == inputs.n_f,
        Verdict::Boundary => gap.abs() <= tol,
    };
    let mc_consistent = (p0_mc - p0_closed).abs() <= 4.0 * standard_error.max(f64::EPSILON);
    Ok(TheoremCheck {
        inputs: *inputs,
        p0_closed,
        p0_mc,
        trials,
        standard_error,
        threshold,
        uniform_probability: uniform,
        verdict,
        sign_consistent,
        mc_consistent,
    })
}
