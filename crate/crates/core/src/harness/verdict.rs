use serde::Serialize;

use super::experiment::AggregateResult;
use crate::Scalar;

/// Deviations at or below this (relative to the compared magnitude) count as
/// exact agreement, which matters at `t = 0` where every run shares `e_0`.
const EXACT_TOL: f64 = 1e-10;

/// Number of standard errors allowed between simulation and the mean model.
pub const FIRST_MOMENT_SIGMAS: f64 = 4.0;
/// Number of standard errors allowed above the second-moment bound.
pub const SECOND_MOMENT_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstMomentVerdict {
    /// `max_t |fig1 - ‖p_t‖²/n| / SE(fig1)`.
    pub max_fig1_deviation_se: f64,
    /// `max_t |‖ē_t‖ - ‖p_t‖| / ‖SE(ē_t)‖`.
    pub max_norm_deviation_se: f64,
    /// `max_{t,k} |ē_t[k] - p_t[k]| / SE(ē_t[k])`.
    pub max_component_deviation_se: f64,
    pub worst_t: u64,
    /// Norm and componentwise deviations both within the allowed band.
    pub within_band: bool,
    /// Slope of `log ‖p_t‖` against `t` over the second half of the horizon.
    pub predicted_log_slope: Option<f64>,
    pub log_rho_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondMomentVerdict {
    pub applicable: bool,
    /// Limit of `E‖e_t‖²` divided by `n`.
    pub bound_per_agent: Option<f64>,
    pub tail_start: u64,
    pub tail_fig2: f64,
    pub tail_stderr: f64,
    pub within_bound: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeSummary {
    pub fig1_initial: f64,
    pub fig1_final: f64,
    /// `log10(fig1_initial / fig1_final)`.
    pub fig1_decades: f64,
    pub fig2_tail_mean: f64,
    /// `(max - min) / mean` of recorded `fig2` values in the tail window.
    pub fig2_tail_relative_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub runs: usize,
    pub first_moment_feasible: bool,
    pub second_moment_feasible: bool,
    /// Absent when no mean-error prediction was attached.
    pub first_moment: Option<FirstMomentVerdict>,
    pub second_moment: SecondMomentVerdict,
    pub shape: ShapeSummary,
    pub notes: Vec<String>,
}

fn ratio(dev: f64, se: f64, scale: f64) -> f64 {
    if dev <= EXACT_TOL * (1.0 + scale) {
        0.0
    } else if se > 0.0 {
        dev / se
    } else {
        f64::INFINITY
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

fn first_moment<T: Scalar + Serialize>(res: &AggregateResult<T>) -> Option<FirstMomentVerdict> {
    let pred = res.lti_prediction.as_ref()?;
    let n = res.agents as f64;
    let mut worst = (0.0f64, 0u64);
    let mut max_fig1 = 0.0f64;
    let mut max_norm = 0.0f64;
    let mut max_comp = 0.0f64;
    for (k, &t) in res.t.iter().enumerate() {
        let p = &pred[k];
        let mean = &res.mean_error[k];
        let se = &res.mean_error_stderr[k];
        let p_norm = p.norm().as_f64();

        let lti = p.norm_squared().as_f64() / n;
        let fig1 = res.fig1[k].as_f64();
        let z1 = ratio((fig1 - lti).abs(), res.fig1_stderr[k].as_f64(), lti.max(fig1));
        max_fig1 = max_fig1.max(z1);

        let dev = (mean.norm().as_f64() - p_norm).abs();
        let zn = ratio(dev, se.norm().as_f64(), p_norm);
        max_norm = max_norm.max(zn);

        let mut zc = 0.0f64;
        for j in 0..p.len() {
            let pj = p[j].as_f64();
            let d = (mean[j].as_f64() - pj).abs();
            zc = zc.max(ratio(d, se[j].as_f64(), pj.abs()));
        }
        max_comp = max_comp.max(zc);
        let z = zn.max(zc);
        if z > worst.0 {
            worst = (z, t);
        }
    }

    // decay of the mean model over the second half, where the slowest mode dominates
    let half = res.iterations / 2;
    let (xs, ys): (Vec<f64>, Vec<f64>) = res
        .t
        .iter()
        .zip(pred)
        .filter(|(&t, p)| t >= half && p.norm().as_f64() > 0.0)
        .map(|(&t, p)| (t as f64, p.norm().as_f64().ln()))
        .unzip();

    Some(FirstMomentVerdict {
        max_fig1_deviation_se: max_fig1,
        max_norm_deviation_se: max_norm,
        max_component_deviation_se: max_comp,
        worst_t: worst.1,
        within_band: max_norm <= FIRST_MOMENT_SIGMAS && max_comp <= FIRST_MOMENT_SIGMAS,
        predicted_log_slope: fit_slope(&xs, &ys),
        log_rho_q: res.spectral.rho_q.as_f64().ln(),
    })
}

/// Compares aggregated simulation output with the mean-error model and the
/// second-moment bound.
pub fn compare_to_theory<T: Scalar + Serialize>(res: &AggregateResult<T>) -> Verdict {
    let n = res.agents as f64;
    let spec = &res.spectral;
    let mut notes = Vec::new();

    let first = first_moment(res);
    if first.is_none() {
        notes.push("no mean-error prediction attached; first-moment comparison skipped".into());
    }
    if res.runs < 2 {
        notes.push("a single run gives no standard error estimate".into());
    }

    let tail_fig2 = res.tail.mean.as_f64();
    let tail_stderr = res.tail.stderr.as_f64();
    let bound = spec.second_moment_bound.map(|b| b.as_f64() / n);
    let second = SecondMomentVerdict {
        applicable: bound.is_some(),
        bound_per_agent: bound,
        tail_start: res.tail.start,
        tail_fig2,
        tail_stderr,
        within_bound: bound.map(|b| tail_fig2 <= b + SECOND_MOMENT_SIGMAS * tail_stderr),
        note: bound.is_none().then(|| {
            format!(
                "bound not applicable at this α: α = {} is not below the second-moment threshold {}",
                spec.alpha.as_f64(),
                spec.alpha_second_moment_max.as_f64()
            )
        }),
    };

    let fig1_initial = res.fig1.first().map_or(0.0, |v| v.as_f64());
    let fig1_final = res.fig1.last().map_or(0.0, |v| v.as_f64());
    let tail: Vec<f64> = res
        .t
        .iter()
        .zip(&res.fig2)
        .filter(|(&t, _)| t >= res.tail.start)
        .map(|(_, v)| v.as_f64())
        .collect();
    let tail_mean = if tail.is_empty() {
        0.0
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shape = ShapeSummary {
        fig1_initial,
        fig1_final,
        fig1_decades: (fig1_initial / fig1_final).log10(),
        fig2_tail_mean: tail_mean,
        fig2_tail_relative_spread: if tail_mean > 0.0 { (hi - lo) / tail_mean } else { 0.0 },
    };

    Verdict {
        runs: res.runs,
        first_moment_feasible: spec.first_moment_feasible,
        second_moment_feasible: spec.second_moment_feasible,
        first_moment: first,
        second_moment: second,
        shape,
        notes,
    }
}
