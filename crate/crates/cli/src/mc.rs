//! Batch Monte Carlo experiments over the sweep grid, emitting one CSV row
//! per (sweep point, UE label, realization, method) plus per-group summary
//! lines. Deterministic for a fixed config and seed: realizations are
//! parallelized over derived sub-streams and written in index order.

use crate::config::{sweep_points, ExperimentConfig, Method, SweepContext, SweepPoint};
use orix_core::channel::{generate_realization, ChannelRealization, RealizationStreams};
use orix_core::optimizer::{
    achievable_rate, baseline_rate, brute_force_optimum, build_codebook, optimize_iterative,
    optimize_quantized, select_codebook_entry, Codebook,
};
use orix_core::scenario::{InfScenario, InfVariant};
use rayon::prelude::*;
use std::io::Write;

#[derive(Debug, Clone)]
pub struct McRow {
    pub seed: u64,
    pub realization_idx: u64,
    pub variant: InfVariant,
    pub n_elements: u32,
    pub phase_bits: u8,
    pub fc_hz: f64,
    pub pt_dbm: f64,
    pub method: Method,
    pub ue_label: String,
    pub los_flag: bool,
    pub rate_bps_hz: f64,
    pub baseline_rate_bps_hz: f64,
}

/// SNR gain of the row's rate over its no-RIS baseline, in dB:
/// `10 log10((2^rate - 1) / (2^baseline - 1))`.
pub fn gain_db(rate: f64, baseline: f64) -> f64 {
    let num = rate.exp2() - 1.0;
    let den = baseline.exp2() - 1.0;
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        10.0 * (num / den).log10()
    }
}

impl McRow {
    pub fn gain_db(&self) -> f64 {
        gain_db(self.rate_bps_hz, self.baseline_rate_bps_hz)
    }
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub point: SweepPoint,
    pub method: Method,
    pub ue_label: String,
    pub mean_rate: f64,
    pub mean_gain_db: f64,
}

#[derive(Debug, Default)]
pub struct McOutput {
    pub rows: Vec<McRow>,
    pub summaries: Vec<SummaryRow>,
}

pub const CSV_COLUMNS: &str = "seed,realization_idx,variant,n_elements,phase_bits,fc_hz,pt_dbm,method,ue_label,los_flag,rate_bps_hz,baseline_rate_bps_hz,gain_db";

/// Evaluate one realization under every requested method. Returns the
/// realization's LoS flag, the no-RIS baseline, and one rate per method.
pub fn evaluate_realization(
    ctx: &SweepContext,
    scenario_ue: &InfScenario,
    codebook: Option<&Codebook>,
    seed: u64,
    idx: u64,
    methods: &[Method],
) -> Result<(bool, f64, Vec<f64>), String> {
    let streams = RealizationStreams::new(seed, idx);
    let ch = generate_realization(
        scenario_ue,
        scenario_ue.placement(),
        &ctx.ris_spec,
        &ctx.link,
        &streams,
    )
    .map_err(|e| e.to_string())?;
    let baseline = baseline_rate(&ch, &ctx.power);
    let mut rates = Vec::with_capacity(methods.len());
    for method in methods {
        rates.push(method_rate(ctx, codebook, &ch, *method, baseline)?);
    }
    Ok((ch.los_state, baseline, rates))
}

fn method_rate(
    ctx: &SweepContext,
    codebook: Option<&Codebook>,
    ch: &ChannelRealization,
    method: Method,
    baseline: f64,
) -> Result<f64, String> {
    let spec = &ctx.ris_spec;
    let power = &ctx.power;
    match method {
        Method::NoRis => Ok(baseline),
        Method::Quantized => {
            let cfg = optimize_quantized(ch, spec).map_err(|e| e.to_string())?;
            achievable_rate(ch, &cfg, &spec.amp, power).map_err(|e| e.to_string())
        }
        Method::Iterative => {
            let cfg = optimize_iterative(ch, spec, power, &spec.zero_config(), 1)
                .map_err(|e| e.to_string())?;
            achievable_rate(ch, &cfg, &spec.amp, power).map_err(|e| e.to_string())
        }
        Method::Codebook => {
            let codebook = codebook.ok_or("codebook method without a codebook")?;
            select_codebook_entry(ch, codebook, spec, power)
                .map(|(_, _, rate)| rate)
                .map_err(|e| e.to_string())
        }
        Method::BruteForce => brute_force_optimum(ch, spec, power)
            .map(|(_, rate)| rate)
            .map_err(|e| e.to_string()),
    }
}

/// Offline library for a sweep point, built from the configured candidate
/// positions (height-adapted to the point's variant).
pub fn point_codebook(
    cfg: &ExperimentConfig,
    ctx: &SweepContext,
) -> Result<Codebook, String> {
    let positions: Vec<(String, orix_core::geom::Point3)> = cfg
        .codebook_positions
        .iter()
        .map(|(label, pos)| (label.clone(), ctx.ue_position(*pos)))
        .collect();
    build_codebook(
        &ctx.ris_spec,
        &ctx.scenario,
        &positions,
        &ctx.power,
        ctx.link.fc_hz,
    )
    .map_err(|e| e.to_string())
}

/// Run the full experiment grid in memory.
pub fn run_mc(cfg: &ExperimentConfig) -> Result<McOutput, String> {
    let mut out = McOutput::default();
    for point in sweep_points(cfg) {
        let ctx = SweepContext::build(cfg, &point)?;
        let codebook = if cfg.methods.contains(&Method::Codebook) {
            Some(point_codebook(cfg, &ctx)?)
        } else {
            None
        };
        for (label, pos) in &cfg.ue_positions {
            let scenario_ue = ctx
                .scenario
                .with_ue_position(ctx.ue_position(*pos))
                .map_err(|e| e.to_string())?;
            let per_real: Vec<(bool, f64, Vec<f64>)> = (0..cfg.mc.realizations)
                .into_par_iter()
                .map(|idx| {
                    evaluate_realization(
                        &ctx,
                        &scenario_ue,
                        codebook.as_ref(),
                        cfg.mc.seed,
                        idx,
                        &cfg.methods,
                    )
                })
                .collect::<Result<_, _>>()?;

            let mut sums = vec![(0.0f64, 0.0f64); cfg.methods.len()];
            for (idx, (los, baseline, rates)) in per_real.iter().enumerate() {
                for (m, (&rate, method)) in rates.iter().zip(&cfg.methods).enumerate() {
                    out.rows.push(McRow {
                        seed: cfg.mc.seed,
                        realization_idx: idx as u64,
                        variant: point.variant,
                        n_elements: u32::from(point.rows) * u32::from(point.cols),
                        phase_bits: point.phase_bits,
                        fc_hz: point.fc_hz,
                        pt_dbm: point.pt_dbm,
                        method: *method,
                        ue_label: label.clone(),
                        los_flag: *los,
                        rate_bps_hz: rate,
                        baseline_rate_bps_hz: *baseline,
                    });
                    sums[m].0 += rate;
                    sums[m].1 += gain_db(rate, *baseline);
                }
            }
            let n = cfg.mc.realizations as f64;
            for (m, method) in cfg.methods.iter().enumerate() {
                out.summaries.push(SummaryRow {
                    point: point.clone(),
                    method: *method,
                    ue_label: label.clone(),
                    mean_rate: sums[m].0 / n,
                    mean_gain_db: sums[m].1 / n,
                });
            }
        }
    }
    Ok(out)
}

pub fn write_csv_header(w: &mut impl Write, generated_at_us: u64) -> std::io::Result<()> {
    writeln!(w, "# generated_at={generated_at_us}")?;
    writeln!(
        w,
        "# gain_db = 10*log10((2^rate_bps_hz - 1)/(2^baseline_rate_bps_hz - 1)) : SNR gain over the no-RIS baseline"
    )?;
    writeln!(w, "{CSV_COLUMNS}")
}

pub fn write_csv_row(w: &mut impl Write, row: &McRow) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        row.seed,
        row.realization_idx,
        row.variant,
        row.n_elements,
        row.phase_bits,
        row.fc_hz,
        row.pt_dbm,
        row.method.as_str(),
        row.ue_label,
        u8::from(row.los_flag),
        row.rate_bps_hz,
        row.baseline_rate_bps_hz,
        row.gain_db()
    )
}

pub fn write_csv_summary(w: &mut impl Write, s: &SummaryRow) -> std::io::Result<()> {
    writeln!(
        w,
        "# summary variant={} n_elements={} phase_bits={} fc_hz={} pt_dbm={} method={} ue={} mean_rate={} mean_gain_db={}",
        s.point.variant,
        u32::from(s.point.rows) * u32::from(s.point.cols),
        s.point.phase_bits,
        s.point.fc_hz,
        s.point.pt_dbm,
        s.method.as_str(),
        s.ue_label,
        s.mean_rate,
        s.mean_gain_db
    )
}

/// Run the grid and stream the CSV. On failure the partial output ends with
/// a truncation marker and the error is propagated.
pub fn cmd_mc(cfg: &ExperimentConfig, w: &mut impl Write) -> Result<McOutput, String> {
    write_csv_header(w, orix_e2::events::now_us()).map_err(|e| e.to_string())?;
    match run_mc(cfg) {
        Ok(out) => {
            for row in &out.rows {
                write_csv_row(w, row).map_err(|e| e.to_string())?;
            }
            for s in &out.summaries {
                write_csv_summary(w, s).map_err(|e| e.to_string())?;
            }
            Ok(out)
        }
        Err(e) => {
            let _ = writeln!(w, "# truncated error={e}");
            Err(e)
        }
    }
}

/// Mean rate per (method, ue_label) for a single-point output; helper for
/// trend checks.
pub fn summary_mean(out: &McOutput, method: Method, ue_label: &str) -> Option<f64> {
    out.summaries
        .iter()
        .find(|s| s.method == method && s.ue_label == ue_label)
        .map(|s| s.mean_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn small_config(extra: &str) -> ExperimentConfig {
        let base = "ris.rows = 4\nris.cols = 4\nmc.realizations = 20\nmc.seed = 3\n";
        parse_config(&format!("{base}{extra}")).unwrap()
    }

    #[test]
    fn baseline_rows_ignore_ris_parameters() {
        let a = small_config("methods.list = none\n");
        let b = small_config("methods.list = none\nris.phase_bits = 3\n");
        let ra = run_mc(&a).unwrap();
        let rb = run_mc(&b).unwrap();
        let rates_a: Vec<f64> = ra.rows.iter().map(|r| r.rate_bps_hz).collect();
        let rates_b: Vec<f64> = rb.rows.iter().map(|r| r.rate_bps_hz).collect();
        assert_eq!(rates_a, rates_b);
    }

    #[test]
    fn rows_are_in_deterministic_order_and_reproducible() {
        let cfg = small_config("methods.list = none,quantized\n");
        let a = run_mc(&cfg).unwrap();
        let b = run_mc(&cfg).unwrap();
        assert_eq!(a.rows.len(), b.rows.len());
        for (x, y) in a.rows.iter().zip(b.rows.iter()) {
            assert_eq!(x.rate_bps_hz, y.rate_bps_hz);
            assert_eq!(x.realization_idx, y.realization_idx);
            assert_eq!(x.method, y.method);
        }
        // (ue, realization, method) ordering with ue slowest.
        assert_eq!(a.rows[0].ue_label, "near");
        assert_eq!(a.rows[0].method, Method::NoRis);
        assert_eq!(a.rows[1].method, Method::Quantized);
        assert_eq!(a.rows[2].realization_idx, 1);
    }

    #[test]
    fn row_rates_reproducible_from_seed_and_sweep_point() {
        let cfg = small_config("methods.list = quantized\n");
        let out = run_mc(&cfg).unwrap();
        let row = &out.rows[7];
        let point = sweep_points(&cfg)[0].clone();
        let ctx = SweepContext::build(&cfg, &point).unwrap();
        let pos = cfg
            .ue_positions
            .iter()
            .find(|(l, _)| *l == row.ue_label)
            .unwrap()
            .1;
        let scenario_ue = ctx.scenario.with_ue_position(ctx.ue_position(pos)).unwrap();
        let (los, baseline, rates) = evaluate_realization(
            &ctx,
            &scenario_ue,
            None,
            row.seed,
            row.realization_idx,
            &[Method::Quantized],
        )
        .unwrap();
        assert_eq!(los, row.los_flag);
        assert_eq!(baseline, row.baseline_rate_bps_hz);
        assert_eq!(rates[0], row.rate_bps_hz);
    }

    #[test]
    fn codebook_selection_never_beats_best_adaptive_method() {
        let cfg = small_config("methods.list = iterative,quantized,codebook\n");
        let out = run_mc(&cfg).unwrap();
        for label in ["near", "far"] {
            let iter = summary_mean(&out, Method::Iterative, label).unwrap();
            let quant = summary_mean(&out, Method::Quantized, label).unwrap();
            let book = summary_mean(&out, Method::Codebook, label).unwrap();
            assert!(
                book <= iter.max(quant) + 1e-12,
                "{label}: codebook {book} vs iterative {iter} / quantized {quant}"
            );
        }
    }

    #[test]
    fn gain_db_edge_cases() {
        assert_eq!(gain_db(0.0, 0.0), 0.0);
        assert!(gain_db(1.0, 0.0).is_infinite());
        assert_eq!(gain_db(2.5, 2.5), 0.0);
        // Doubling the SNR is +3.01 dB at any rate.
        let r0 = (1.0f64 + 1.0).log2();
        let r1 = (1.0f64 + 2.0).log2();
        assert!((gain_db(r1, r0) - 3.0103).abs() < 1e-3);
    }

    #[test]
    fn csv_rows_have_normative_column_count() {
        let cfg = small_config("methods.list = none\nmc.realizations = 2\n");
        let mut buf = Vec::new();
        cmd_mc(&cfg, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# generated_at="));
        assert!(lines.next().unwrap().starts_with("# gain_db ="));
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS);
        let first = lines.next().unwrap();
        assert_eq!(first.split(',').count(), 13);
        assert!(text.lines().any(|l| l.starts_with("# summary ")));
    }
}
