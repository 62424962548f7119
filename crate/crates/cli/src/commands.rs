use serde_json::{json, Value};

use misalign_core::analytics::{closed_forms_app, closed_forms_pear_limit, misalignment_report};
use misalign_core::distributions::NicheDistribution;
use misalign_core::policies::PolicySpec;
use misalign_core::sim::{
    run_monte_carlo, EstimateWithCI, ModelParams, MonteCarloReport, SimConfig, SimMode,
    UserSampling,
};

use crate::args::{ModeArg, NicheArg, PolicyArg, SamplingArg};
use crate::error::{CliError, CliResult};
use crate::output::{Cell, Table};
use crate::settings::Settings;
use crate::svg::{self, BarGroup, LabeledPoint};

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub table: Table,
    pub config: Value,
    pub svg: Option<String>,
    /// Warnings that should turn into a nonzero exit status.
    pub flagged: bool,
}

pub fn run_table1(s: &Settings) -> CliResult<Outcome> {
    let report = misalignment_report(s.vp, &s.deltas)?;
    let mut table = Table::new(vec!["delta", "d_eng_pct", "d_util_pct"]);
    for row in &report.rows {
        table.push(vec![
            Cell::Num(row.delta),
            Cell::Num(row.d_eng_pct),
            Cell::Num(row.d_util_pct),
        ]);
    }
    let groups: Vec<BarGroup> = report
        .rows
        .iter()
        .map(|r| BarGroup {
            label: format!("δ={}", r.delta),
            values: vec![r.d_eng_pct, r.d_util_pct],
        })
        .collect();
    Ok(Outcome {
        table,
        config: json!({
            "command": "table1",
            "vp": s.vp,
            "deltas": s.deltas,
            "util_ratio_limit": report.util_ratio_limit,
        }),
        svg: Some(svg::grouped_bars(
            "PEAR vs APP",
            &["engagement change %", "utility change %"],
            &groups,
            "percent",
        )),
        flagged: false,
    })
}

pub fn run_figure1(s: &Settings) -> CliResult<Outcome> {
    let delta = s.single_delta("figure1")?;
    let app = closed_forms_app(s.vp, delta)?;
    let pear = closed_forms_pear_limit(s.vp, delta)?;
    let d_eng = (pear.per_period_eng / app.per_period_eng - 1.0) * 100.0;
    let d_util = (pear.per_period_util / app.per_period_util - 1.0) * 100.0;

    let mut table = Table::new(vec![
        "policy",
        "per_period_eng",
        "per_period_util",
        "d_eng_pct",
        "d_util_pct",
    ]);
    table.push(vec![
        Cell::Text("APP".into()),
        Cell::Num(app.per_period_eng),
        Cell::Num(app.per_period_util),
        Cell::Num(0.0),
        Cell::Num(0.0),
    ]);
    table.push(vec![
        Cell::Text("PEAR".into()),
        Cell::Num(pear.per_period_eng),
        Cell::Num(pear.per_period_util),
        Cell::Num(d_eng),
        Cell::Num(d_util),
    ]);

    let points = [
        LabeledPoint {
            label: "APP (engagement optimal)".into(),
            x: app.per_period_eng,
            y: app.per_period_util,
        },
        LabeledPoint {
            label: "PEAR (utility aware)".into(),
            x: pear.per_period_eng,
            y: pear.per_period_util,
        },
    ];
    let annotations = [
        format!("{:.2}% gain in utility", d_util),
        format!("{:.2}% loss in engagement", -d_eng),
    ];
    Ok(Outcome {
        table,
        config: json!({ "command": "figure1", "vp": s.vp, "delta": delta }),
        svg: Some(svg::scatter(
            &format!("Per-period engagement and utility (δ = {delta})"),
            &points,
            &annotations,
        )),
        flagged: false,
    })
}

fn sim_config(s: &Settings, policy: PolicySpec) -> SimConfig {
    let mut cfg = SimConfig::new(policy);
    cfg.episodes = s.episodes;
    cfg.master_seed = s.seed;
    cfg.mode = match s.mode {
        ModeArg::Pathwise => SimMode::Pathwise,
        ModeArg::Conditional => SimMode::Conditional,
    };
    cfg.user_sampling = match s.user_sampling {
        SamplingArg::Natural => UserSampling::Natural,
        SamplingArg::Weighted => UserSampling::Weighted,
    };
    cfg.workers = s.workers;
    cfg
}

/// `a / b` with a first-order standard error treating the two as independent.
fn ratio(a: &EstimateWithCI, b: &EstimateWithCI) -> (f64, f64) {
    let r = a.mean / b.mean;
    let rel = ((a.std_error / a.mean).powi(2) + (b.std_error / b.mean).powi(2)).sqrt();
    (r, (r * rel).abs())
}

const Z95: f64 = 1.959_963_984_540_054;

pub fn run_figure34(s: &Settings) -> CliResult<Outcome> {
    let lens = s.explore_lens.clone().ok_or_else(|| {
        CliError::usage("figure34 needs --explore-len <T,...> or --explore-sweep")
    })?;
    let mut table = Table::new(vec![
        "xi",
        "eng_ratio",
        "util_ratio",
        "eng_ci",
        "util_ci",
        "delta",
        "explore_len",
        "warning",
    ]);
    let mut groups = Vec::new();
    let mut flagged = false;
    for &delta in &s.deltas {
        for &xi in &s.xis {
            let params = ModelParams::new(s.vp, delta, NicheDistribution::Gpd { xi })?;
            let app = run_monte_carlo(&params, &sim_config(s, PolicySpec::App))?;
            for &explore_len in &lens {
                let dice =
                    run_monte_carlo(&params, &sim_config(s, PolicySpec::Dice { explore_len }))?;
                let (eng_ratio, eng_se) = ratio(&dice.engagement, &app.engagement);
                let (util_ratio, util_se) = ratio(&dice.utility, &app.utility);
                let (eng_ci, util_ci) = (Z95 * eng_se, Z95 * util_se);
                let warn = eng_ci > s.ci_threshold
                    || util_ci > s.ci_threshold
                    || dice.flagged_episodes + app.flagged_episodes > 0;
                flagged |= warn;
                table.push(vec![
                    Cell::Num(xi),
                    Cell::Num(eng_ratio),
                    Cell::Num(util_ratio),
                    Cell::Num(eng_ci),
                    Cell::Num(util_ci),
                    Cell::Num(delta),
                    Cell::Int(explore_len),
                    Cell::Int(warn as u64),
                ]);
                groups.push(BarGroup {
                    label: format!("ξ={xi} T={explore_len} δ={delta}"),
                    values: vec![eng_ratio - 1.0, util_ratio - 1.0],
                });
            }
        }
    }
    Ok(Outcome {
        table,
        config: json!({
            "command": "figure34",
            "vp": s.vp,
            "deltas": s.deltas,
            "xis": s.xis,
            "explore_lens": lens,
            "episodes": s.episodes,
            "seed": s.seed,
            "mode": s.mode_name(),
            "user_sampling": s.sampling_name(),
            "ci_threshold": s.ci_threshold,
        }),
        svg: Some(svg::grouped_bars(
            "DICE relative to APP",
            &["engagement ratio - 1", "utility ratio - 1"],
            &groups,
            "ratio - 1",
        )),
        flagged,
    })
}

pub fn run_simulate(s: &Settings) -> CliResult<Outcome> {
    let policy = match s.policy {
        PolicyArg::App => PolicySpec::App,
        PolicyArg::Pear => PolicySpec::Pear { prior: s.p },
        PolicyArg::Oracle => PolicySpec::Oracle,
        PolicyArg::Dice => match s.explore_lens.as_deref() {
            Some([t]) => PolicySpec::Dice { explore_len: *t },
            _ => {
                return Err(CliError::usage(
                    "DICE needs exactly one --explore-len value",
                ))
            }
        },
    };
    let niche = match s.niche {
        NicheArg::TwoPoint => NicheDistribution::TwoPoint { p: s.p },
        NicheArg::Gpd => match s.xis.as_slice() {
            [xi] => NicheDistribution::Gpd { xi: *xi },
            _ => return Err(CliError::usage("--niche gpd needs exactly one --xi")),
        },
    };
    let niche_label = match niche {
        NicheDistribution::TwoPoint { p } => format!("two-point(p={p})"),
        NicheDistribution::Gpd { xi } => format!("gpd(xi={xi})"),
    };

    let mut table = Table::new(vec![
        "policy",
        "niche",
        "delta",
        "episodes",
        "eng",
        "eng_se",
        "util",
        "util_se",
        "per_period_eng",
        "per_period_util",
        "flagged_episodes",
    ]);
    let mut flagged = false;
    let mut reports: Vec<(f64, MonteCarloReport)> = Vec::new();
    for &delta in &s.deltas {
        let params = ModelParams::new(s.vp, delta, niche)?;
        let r = run_monte_carlo(&params, &sim_config(s, policy))?;
        flagged |= r.flagged_episodes > 0;
        table.push(vec![
            Cell::Text(policy.to_string()),
            Cell::Text(niche_label.clone()),
            Cell::Num(delta),
            Cell::Int(s.episodes),
            Cell::Num(r.engagement.mean),
            Cell::Num(r.engagement.std_error),
            Cell::Num(r.utility.mean),
            Cell::Num(r.utility.std_error),
            Cell::Num(r.engagement.mean * (1.0 - delta)),
            Cell::Num(r.utility.mean * (1.0 - delta)),
            Cell::Int(r.flagged_episodes),
        ]);
        reports.push((delta, r));
    }
    let groups: Vec<BarGroup> = reports
        .iter()
        .map(|(delta, r)| BarGroup {
            label: format!("δ={delta}"),
            values: vec![
                r.engagement.mean * (1.0 - delta),
                r.utility.mean * (1.0 - delta),
            ],
        })
        .collect();
    Ok(Outcome {
        table,
        config: json!({
            "command": "simulate",
            "policy": policy,
            "niche": niche,
            "vp": s.vp,
            "deltas": s.deltas,
            "episodes": s.episodes,
            "seed": s.seed,
            "mode": s.mode_name(),
            "user_sampling": s.sampling_name(),
        }),
        svg: Some(svg::grouped_bars(
            &format!("{policy}, {niche_label}"),
            &["per-period engagement", "per-period utility"],
            &groups,
            "per period",
        )),
        flagged,
    })
}

impl Settings {
    fn mode_name(&self) -> &'static str {
        match self.mode {
            ModeArg::Pathwise => "pathwise",
            ModeArg::Conditional => "conditional",
        }
    }

    fn sampling_name(&self) -> &'static str {
        match self.user_sampling {
            SamplingArg::Natural => "natural",
            SamplingArg::Weighted => "weighted",
        }
    }
}
