use serde_json::{json, Value};

use super::{Command, Report, RowSeed, RunConfig};
use crate::coset::{
    ball_sites, canonicalize, coset_entropy_upper_bound, coset_law, lamp_window,
    stabilized_projection_check, transition_probability, CosetClass, SiteSet,
};
use crate::entropy::{
    bowen_entropy_estimate, entropy_series, mixture_prediction, rw_entropy_estimate, EntropyError,
};
use crate::group::{GroupContext, Lamplighter};
use crate::lift::{abramov_ratio_check, empirical_hitting_stats, lifting_identity_check};
use crate::measure::{FiniteMeasure, Homomorphism, MeasureError};
use crate::numeric::derive_seed;
use crate::percolation::{closed_frequency, mixed_frequency, IrsSpec, PercolationParams, PercolationSample};
use crate::runner::config::Resolved;

/// Slack for comparisons between exactly computed entropies.
const EXACT_TOL: f64 = 1e-9;
/// Largest horizon at which coset-check evaluates the upper bound.
const UPPER_BOUND_MAX_N: usize = 3;

pub(crate) fn execute(
    command: Command,
    config: &RunConfig,
    resolved: &Resolved,
    hex: bool,
) -> Result<Report, String> {
    match command {
        Command::EntropySeries => entropy_series_cmd(config, resolved, hex),
        Command::Realize => realize(config, resolved, hex),
        Command::PercolationStats => percolation_stats(config, hex),
        Command::HittingStats => hitting_stats(config, resolved, hex),
        Command::LiftCheck => lift_check(config, resolved, hex),
        Command::CosetCheck => coset_check(config, resolved, hex),
    }
}

fn joint_se(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

fn entropy_series_cmd(config: &RunConfig, r: &Resolved, hex: bool) -> Result<Report, String> {
    let mut rep = Report::new(&["n", "H_n", "H_n_over_n", "increment"], hex);
    let series = match entropy_series(&r.mu, r.sites.as_ref(), config.n_max, r.budget) {
        Ok(s) => s,
        Err(e) => {
            rep.failures.push(format!("entropy series: {e}"));
            return Ok(rep);
        }
    };
    let mut prev = 0.0;
    for p in &series.points {
        let row = vec![
            p.n.to_string(),
            rep.table.float(p.value),
            rep.table.float(p.value / p.n as f64),
            rep.table.float(p.value - prev),
        ];
        rep.table.push(row);
        prev = p.value;
    }
    if series.truncated {
        rep.budget_exhausted = true;
        rep.warnings.push(format!(
            "atom budget stopped the series after n = {}",
            series.points.len()
        ));
    }
    if let Some(rate) = rw_entropy_estimate(&series) {
        rep.diagnostics.insert(
            "rate".into(),
            json!({
                "inf_ratio": rate.inf_ratio,
                "argmin": rate.argmin,
                "last_increment": rate.last_increment,
                "n": rate.n,
            }),
        );
    }
    Ok(rep)
}

struct RealizeRow {
    p: f64,
    m: u32,
    estimate: Option<(f64, f64)>,
}

fn realize(config: &RunConfig, r: &Resolved, hex: bool) -> Result<Report, String> {
    let mut rep = Report::new(
        &[
            "p", "m", "n", "k_samples", "estimate", "stderr", "h_full", "h_base", "mixture",
            "deviation", "status", "seed",
        ],
        hex,
    );
    let n = config.n;
    let endpoint = |s: SiteSet| {
        bowen_entropy_estimate(
            &IrsSpec::PointMass(s),
            &r.mu,
            n,
            1,
            config.seed,
            r.budget,
            config.site_query_cap,
        )
    };
    let ends = endpoint(SiteSet::empty(r.dim)).and_then(|f| Ok((f, endpoint(SiteSet::everything(r.dim))?)));
    let (h_full, h_base) = match ends {
        Ok((f, b)) => (f.value, b.value),
        Err(EntropyError::Measure(MeasureError::BudgetExceeded { atoms, cap })) => {
            rep.budget_exhausted = true;
            rep.warnings
                .push(format!("μ^{n} needs {atoms} atoms, over the budget of {cap}"));
            return Ok(rep);
        }
        Err(e) => return Err(e.to_string()),
    };
    let mut rows = Vec::new();
    for &p in &config.p_grid {
        for &m in &config.m_grid {
            let spec = if p == 0.0 {
                IrsSpec::PointMass(SiteSet::everything(r.dim))
            } else if p == 1.0 {
                IrsSpec::PointMass(SiteSet::empty(r.dim))
            } else {
                IrsSpec::LongRange(PercolationParams::new(p, m, r.dim)?)
            };
            let mixture = mixture_prediction(p, h_full, h_base).map_err(|e| e.to_string())?;
            let est = bowen_entropy_estimate(
                &spec,
                &r.mu,
                n,
                config.k_samples,
                config.seed,
                r.budget,
                config.site_query_cap,
            );
            let row_index = rows.len();
            let t = &rep.table;
            let mut row = vec![
                t.float(p),
                m.to_string(),
                n.to_string(),
                config.k_samples.to_string(),
            ];
            let estimate = match est {
                Ok(e) => {
                    if e.value < h_base - EXACT_TOL || e.value > h_full + EXACT_TOL {
                        rep.failures.push(format!(
                            "row {row_index} (p={p}, m={m}): estimate {} outside [{h_base}, {h_full}]",
                            e.value
                        ));
                    }
                    row.extend([
                        t.float(e.value),
                        t.float(e.stderr),
                        t.float(h_full),
                        t.float(h_base),
                        t.float(mixture),
                        t.float((e.value - mixture).abs()),
                        "ok".into(),
                    ]);
                    Some((e.value, e.stderr))
                }
                Err(e @ (EntropyError::SiteQueryBudget { .. }
                | EntropyError::Measure(MeasureError::BudgetExceeded { .. }))) => {
                    rep.warnings.push(format!("row {row_index} (p={p}, m={m}) skipped: {e}"));
                    rep.skipped += 1;
                    rep.budget_exhausted = true;
                    row.extend([
                        String::new(),
                        String::new(),
                        t.float(h_full),
                        t.float(h_base),
                        t.float(mixture),
                        String::new(),
                        "skipped".into(),
                    ]);
                    None
                }
                Err(e) => return Err(e.to_string()),
            };
            row.push(config.seed.to_string());
            rep.table.push(row);
            rep.row_seeds.push(RowSeed {
                row: row_index,
                seed: config.seed,
            });
            rows.push(RealizeRow { p, m, estimate });
        }
    }
    realize_trends(&rows, h_full, h_base, &mut rep)?;
    Ok(rep)
}

/// Deviation from the mixture non-increasing in `m`, and estimates
/// non-decreasing in `p`, both within three joint standard errors.
fn realize_trends(rows: &[RealizeRow], h_full: f64, h_base: f64, rep: &mut Report) -> Result<(), String> {
    let interior = |p: f64| p > 0.0 && p < 1.0;
    let mut ps: Vec<f64> = rows.iter().map(|r| r.p).filter(|&p| interior(p)).collect();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    let mut ms: Vec<u32> = rows.iter().map(|r| r.m).collect();
    ms.sort_unstable();
    ms.dedup();
    let lookup = |p: f64, m: u32| {
        rows.iter()
            .find(|r| r.p == p && r.m == m)
            .and_then(|r| r.estimate)
    };
    let mut checks = Vec::new();
    for &p in &ps {
        let mixture = mixture_prediction(p, h_full, h_base).map_err(|e| e.to_string())?;
        let series: Vec<(u32, f64, f64)> = ms
            .iter()
            .filter_map(|&m| lookup(p, m).map(|(v, se)| (m, (v - mixture).abs(), se)))
            .collect();
        for w in series.windows(2) {
            let (slack, ok) = step_check(w[0].1, w[0].2, w[1].1, w[1].2);
            checks.push(json!({"kind": "deviation_in_m", "p": p, "m_from": w[0].0, "m_to": w[1].0, "slack": slack, "ok": ok}));
            if !ok {
                rep.failures.push(format!(
                    "deviation at p={p} rose from {} (m={}) to {} (m={}) beyond 3 stderr",
                    w[0].1, w[0].0, w[1].1, w[1].0
                ));
            }
        }
    }
    for &m in &ms {
        let series: Vec<(f64, f64, f64)> = ps
            .iter()
            .filter_map(|&p| lookup(p, m).map(|(v, se)| (p, v, se)))
            .collect();
        for w in series.windows(2) {
            let (slack, ok) = step_check(-w[0].1, w[0].2, -w[1].1, w[1].2);
            checks.push(json!({"kind": "estimate_in_p", "m": m, "p_from": w[0].0, "p_to": w[1].0, "slack": slack, "ok": ok}));
            if !ok {
                rep.failures.push(format!(
                    "estimate at m={m} fell from {} (p={}) to {} (p={}) beyond 3 stderr",
                    w[0].1, w[0].0, w[1].1, w[1].0
                ));
            }
        }
    }
    rep.diagnostics.insert("trend_checks".into(), Value::Array(checks));
    Ok(())
}

/// `b ≤ a + 3·√(se_a² + se_b²)`, with the remaining slack.
fn step_check(a: f64, se_a: f64, b: f64, se_b: f64) -> (f64, bool) {
    let slack = a + 3.0 * joint_se(se_a, se_b) - b;
    (slack, slack >= 0.0)
}

fn percolation_stats(config: &RunConfig, hex: bool) -> Result<Report, String> {
    let mut rep = Report::new(
        &[
            "p", "m", "d", "seed_count", "closed_freq", "closed_se", "closed_ok", "mixed_freq",
            "mixed_se", "window_descriptor", "seed",
        ],
        hex,
    );
    let window_descriptor = format!("l1-ball:r={}", config.window_radius);
    let mut mixed: Vec<(f64, usize, u32, f64, f64)> = Vec::new();
    for &p in &config.p_grid {
        if p <= 0.0 || p >= 1.0 {
            rep.warnings
                .push(format!("p = {p} has a deterministic percolation law and was skipped"));
            continue;
        }
        for &d in &config.percolation_dims {
            let window = ball_sites(d, config.window_radius);
            for &m in &config.m_grid {
                let params = PercolationParams::new(p, m, d)?;
                let row_index = rep.table.len();
                let seed = derive_seed(config.seed, row_index as u64);
                let closed = closed_frequency(params, config.percolation_samples, seed);
                let closed_se = closed.binomial_se(p);
                let closed_ok = (closed.value() - p).abs() <= 3.0 * closed_se;
                if !closed_ok {
                    rep.failures.push(format!(
                        "row {row_index} (p={p}, m={m}, d={d}): closed frequency {} is more than 3 SE from p",
                        closed.value()
                    ));
                }
                let cost = PercolationSample::new(params, seed).window_cost(&window);
                let t = &rep.table;
                let (mixed_freq, mixed_se) = if cost > config.site_query_cap {
                    rep.warnings.push(format!(
                        "row {row_index}: mixed-window query needs {cost} sites, over the cap of {}",
                        config.site_query_cap
                    ));
                    (String::new(), String::new())
                } else {
                    let f = mixed_frequency(params, &window, config.mixed_samples, seed);
                    let v = f.value();
                    let se = f.binomial_se(v);
                    mixed.push((p, d, m, v, se));
                    (t.float(v), t.float(se))
                };
                let row = vec![
                    t.float(p),
                    m.to_string(),
                    d.to_string(),
                    config.percolation_samples.to_string(),
                    t.float(closed.value()),
                    t.float(closed_se),
                    closed_ok.to_string(),
                    mixed_freq,
                    mixed_se,
                    window_descriptor.clone(),
                    seed.to_string(),
                ];
                rep.table.push(row);
                rep.row_seeds.push(RowSeed { row: row_index, seed });
            }
        }
    }
    let mut checks = Vec::new();
    let mut groups: Vec<(f64, usize)> = mixed.iter().map(|r| (r.0, r.1)).collect();
    groups.dedup();
    for (p, d) in groups {
        let mut series: Vec<(u32, f64, f64)> = mixed
            .iter()
            .filter(|r| r.0 == p && r.1 == d)
            .map(|r| (r.2, r.3, r.4))
            .collect();
        series.sort_by_key(|s| s.0);
        for w in series.windows(2) {
            let (slack, ok) = step_check(w[0].1, w[0].2, w[1].1, w[1].2);
            checks.push(json!({"p": p, "d": d, "m_from": w[0].0, "m_to": w[1].0, "slack": slack, "ok": ok}));
            if !ok {
                rep.failures.push(format!(
                    "mixed frequency at p={p}, d={d} rose from {} (m={}) to {} (m={}) beyond 3 SE",
                    w[0].1, w[0].0, w[1].1, w[1].0
                ));
            }
        }
    }
    rep.diagnostics.insert("mixed_trend_checks".into(), Value::Array(checks));
    Ok(rep)
}

fn hitting_stats(config: &RunConfig, r: &Resolved, hex: bool) -> Result<Report, String> {
    let mut rep = Report::new(
        &[
            "index", "N", "mean_tau", "se_tau", "mean_len", "se_len", "C1", "bound_ok",
            "capped_frac", "inexact_len_frac", "seed",
        ],
        hex,
    );
    let h = empirical_hitting_stats(&r.mu, &r.subgroup, config.hitting_samples, config.seed, config.tau_cap)
        .map_err(|e| e.to_string())?;
    let t = &rep.table;
    let row = vec![
        h.index.to_string(),
        h.samples.to_string(),
        t.float(h.mean_tau),
        t.float(h.se_tau),
        t.float(h.mean_len),
        t.float(h.se_len),
        t.float(h.c1),
        h.bound_ok.to_string(),
        t.float(h.capped_frac),
        t.float(h.inexact_len_frac),
        config.seed.to_string(),
    ];
    rep.table.push(row);
    rep.row_seeds.push(RowSeed {
        row: 0,
        seed: config.seed,
    });
    if (h.mean_tau - h.index as f64).abs() > 3.0 * h.se_tau {
        rep.failures.push(format!(
            "row 0: mean hitting time {} is more than 3 SE from the index {}",
            h.mean_tau, h.index
        ));
    }
    if !h.bound_ok {
        rep.failures.push(format!(
            "row 0: mean entry length {} exceeds index·C1 = {} by more than 3 SE",
            h.mean_len,
            h.index as f64 * h.c1
        ));
    }
    if h.capped_frac >= 1e-3 {
        rep.failures
            .push(format!("row 0: {} of the walks hit the step cap", h.capped_frac));
    }
    if h.inexact_len_frac > 0.0 {
        rep.warnings.push(format!(
            "{} of the entry lengths are heuristic and were left out of mean_len",
            h.inexact_len_frac
        ));
    }
    rep.diagnostics.insert(
        "increments".into(),
        json!({"mean": h.mean_increment, "se": h.se_increment, "within_first_moment": h.increment_ok}),
    );
    if config.abramov_n > 0 {
        let seed = derive_seed(config.seed, 1);
        match abramov_ratio_check(
            &r.mu,
            &r.subgroup,
            config.abramov_n,
            config.abramov_samples,
            seed,
            config.tau_cap,
            r.budget,
        ) {
            Ok(a) => {
                rep.diagnostics.insert(
                    "abramov".into(),
                    json!({
                        "n": a.n,
                        "index": a.index,
                        "theta_increment": a.theta_increment,
                        "theta_increment_se": a.theta_increment_se,
                        "mu_increment": a.mu_increment,
                        "ratio": a.ratio,
                        "ratio_se": a.ratio_se,
                        "capped": a.capped,
                        "seed": seed,
                    }),
                );
            }
            Err(e) => rep.warnings.push(format!("hitting-measure entropy diagnostic: {e}")),
        }
    }
    Ok(rep)
}

fn lift_check(config: &RunConfig, r: &Resolved, hex: bool) -> Result<Report, String> {
    if !matches!(r.ctx, GroupContext::Lamplighter(_)) {
        return Err("lift-check needs a lamplighter group".into());
    }
    let lambdas = match &r.irs {
        Some(spec) => vec![spec.clone()],
        None => vec![
            IrsSpec::EvenOdd { dim: r.dim },
            IrsSpec::PointMass(SiteSet::origin(r.dim)),
        ],
    };
    if let Some(l) = lambdas.iter().find(|l| l.atoms().is_none()) {
        return Err(format!("irs: {l} has infinitely many atoms; lift-check needs a finite law"));
    }
    let mut rep = Report::new(
        &[
            "lambda", "n", "lifted_average", "decomposed_average", "max_exchange_deviation",
            "average_deviation", "max_deviation",
        ],
        hex,
    );
    for lambda in &lambdas {
        for n in 1..=config.n {
            let report = match lifting_identity_check(lambda, &r.mu, &r.subgroup, n, r.budget) {
                Ok(x) => x,
                Err(crate::lift::LiftError::Measure(MeasureError::BudgetExceeded { atoms, cap })) => {
                    rep.budget_exhausted = true;
                    rep.warnings.push(format!(
                        "{lambda} at n = {n} needs {atoms} atoms, over the budget of {cap}"
                    ));
                    break;
                }
                Err(e) => return Err(e.to_string()),
            };
            let row_index = rep.table.len();
            let max = report.max_deviation();
            if max > EXACT_TOL {
                rep.failures.push(format!(
                    "row {row_index} ({lambda}, n={n}): deviation {max} exceeds {EXACT_TOL}"
                ));
            }
            let t = &rep.table;
            let row = vec![
                lambda.to_string(),
                n.to_string(),
                t.float(report.lifted_average),
                t.float(report.decomposed_average),
                t.float(report.max_exchange_deviation),
                t.float(report.average_deviation),
                t.float(max),
            ];
            rep.table.push(row);
        }
    }
    Ok(rep)
}

/// The measure on the lamplighter that coset representatives see.
fn lamplighter_image(mu: &FiniteMeasure) -> Result<FiniteMeasure, String> {
    match mu.ctx() {
        GroupContext::Lamplighter(_) => Ok(mu.clone()),
        GroupContext::Free(_) => mu
            .pushforward(&Homomorphism::Phi(Lamplighter::z2_wr_z3()))
            .map_err(|e| e.to_string()),
    }
}

fn coset_check(config: &RunConfig, r: &Resolved, hex: bool) -> Result<Report, String> {
    let mut rep = Report::new(
        &["n", "sites", "H", "H_upper", "monotone_ok", "upper_ok"],
        hex,
    );
    let dim = r.dim;
    let chain = [
        SiteSet::empty(dim),
        SiteSet::origin(dim),
        SiteSet::ball(dim, 1),
        SiteSet::ball(dim, 2),
        SiteSet::everything(dim),
    ];
    let image = lamplighter_image(&r.mu)?;
    let base = image
        .pushforward(&Homomorphism::Projection)
        .map_err(|e| e.to_string())?;
    let ctx = r.mu.ctx();
    let mut law = FiniteMeasure::dirac(ctx.clone(), ctx.identity()).map_err(|e| e.to_string())?;
    let mut image_law = FiniteMeasure::dirac(image.ctx().clone(), image.ctx().identity()).map_err(|e| e.to_string())?;
    let mut base_law = FiniteMeasure::dirac(base.ctx().clone(), base.ctx().identity()).map_err(|e| e.to_string())?;
    let mut endpoint_dev: f64 = 0.0;
    for n in 1..=config.n_max {
        let next = law
            .convolve(&r.mu, r.budget)
            .and_then(|l| Ok((l, image_law.convolve(&image, r.budget)?, base_law.convolve(&base, r.budget)?)));
        (law, image_law, base_law) = match next {
            Ok(x) => x,
            Err(MeasureError::BudgetExceeded { atoms, cap }) => {
                rep.budget_exhausted = true;
                rep.warnings.push(format!(
                    "stopped before n = {n}: {atoms} atoms exceed the budget of {cap}"
                ));
                break;
            }
            Err(e) => return Err(e.to_string()),
        };
        let mut prev: Option<f64> = None;
        for (i, s) in chain.iter().enumerate() {
            let coset = coset_law(&law, s).map_err(|e| e.to_string())?;
            let h = coset.entropy();
            let monotone_ok = prev.is_none_or(|p| h <= p + EXACT_TOL);
            let upper = if n <= UPPER_BOUND_MAX_N {
                Some(coset_entropy_upper_bound(&law, &coset, s).map_err(|e| e.to_string())?)
            } else {
                None
            };
            let upper_ok = upper.is_none_or(|u| h <= u + EXACT_TOL);
            let row_index = rep.table.len();
            if !monotone_ok {
                rep.failures.push(format!("row {row_index} (n={n}, S={s}): entropy rose along the chain"));
            }
            if !upper_ok {
                rep.failures.push(format!("row {row_index} (n={n}, S={s}): entropy above the upper bound"));
            }
            if i == 0 {
                endpoint_dev = endpoint_dev.max((h - image_law.entropy()).abs());
            }
            if i + 1 == chain.len() {
                endpoint_dev = endpoint_dev.max((h - base_law.entropy()).abs());
            }
            let t = &rep.table;
            let row = vec![
                n.to_string(),
                s.to_string(),
                t.float(h),
                upper.map(|u| t.float(u)).unwrap_or_default(),
                monotone_ok.to_string(),
                upper_ok.to_string(),
            ];
            rep.table.push(row);
            prev = Some(h);
        }
    }
    if endpoint_dev > EXACT_TOL {
        rep.failures.push(format!(
            "endpoint entropies differ from the walk and the projected walk by {endpoint_dev}"
        ));
    }
    rep.diagnostics.insert("endpoint_deviation".into(), json!(endpoint_dev));

    let min_slack = transition_floor_slack(&r.mu, &chain)?;
    if min_slack < -1e-12 {
        rep.failures.push(format!(
            "a return probability falls below the reverse step mass by {}",
            -min_slack
        ));
    }
    rep.diagnostics.insert("transition_floor_min_slack".into(), json!(min_slack));

    let window = lamp_window(&image).map_err(|e| e.to_string())?;
    let stable = SiteSet::finite(dim, window);
    let proj = stabilized_projection_check(&stable, &image).map_err(|e| e.to_string())?;
    if proj.max_deviation > 1e-12 {
        rep.failures.push(format!(
            "transitions from K_S with S = {stable} differ from the projected step by {}",
            proj.max_deviation
        ));
    }
    rep.diagnostics.insert(
        "stabilized_projection".into(),
        json!({"sites": stable.to_string(), "max_deviation": proj.max_deviation}),
    );
    Ok(rep)
}

/// `min P_{K_S}(K_S g, K_S) − μ(g⁻¹)` over atoms `g` and sets `S`.
fn transition_floor_slack(mu: &FiniteMeasure, chain: &[SiteSet]) -> Result<f64, String> {
    let ctx = mu.ctx();
    let target = match crate::coset::coset_context(ctx).map_err(|e| e.to_string())? {
        GroupContext::Lamplighter(l) => l,
        GroupContext::Free(_) => unreachable!("coset representatives live in a lamplighter"),
    };
    let home = CosetClass::identity(&target);
    let mut slack = f64::INFINITY;
    for s in chain {
        for (g, _) in mu.atoms() {
            let from = canonicalize(ctx, g, s).map_err(|e| e.to_string())?;
            let back = transition_probability(s, &from, &home, mu).map_err(|e| e.to_string())?;
            let reverse = mu.mass(&ctx.inv(g).map_err(|e| e.to_string())?);
            slack = slack.min(back - reverse);
        }
    }
    Ok(slack)
}
