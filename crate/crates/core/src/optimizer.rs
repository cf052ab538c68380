//! Achievable-rate evaluation and the practical phase-optimization methods:
//! per-element iterative search, quantized ideal-phase alignment, and an
//! offline/online codebook, plus an exhaustive-search oracle for
//! verification on small instances.
//!
//! The objective everywhere is
//! `R = log2(1 + (P_t / P_n) |h_br^T Theta h_ru + h_bu|^2)` in bits/s/Hz,
//! with `Theta` the diagonal matrix of per-element reflection coefficients
//! `rho(theta_i) e^(j theta_i)`.

use crate::channel::{nominal_realization, ChannelRealization};
use crate::geom::Point3;
use crate::ris::{
    self, level_phase, quantize_phase, reflection_coefficient, wrap_phase, AmplitudeParams,
    PhaseConfig, RisFingerprint, RisSpec,
};
use crate::scenario::InfScenario;
use num_complex::Complex64;
use thiserror::Error;

/// Exhaustive search is refused above this many configurations.
pub const BRUTE_FORCE_MAX_CONFIGS: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error("phase config has {got} entries but the channel has {expected} elements")]
    LengthMismatch { got: usize, expected: usize },
    #[error("operation requires a discrete phase resolution (b >= 1)")]
    ContinuousModeUnsupported,
    #[error("search space of {0} configurations exceeds the exhaustive-search cap")]
    SearchSpaceTooLarge(u64),
    #[error("codebook fingerprint ({codebook}) does not match the RIS ({spec})")]
    FingerprintMismatch {
        codebook: RisFingerprint,
        spec: RisFingerprint,
    },
    #[error("codebook must contain at least one entry")]
    EmptyCodebook,
    #[error("codebook entry label {0:?} must be non-empty without whitespace")]
    InvalidLabel(String),
    #[error(transparent)]
    Ris(#[from] ris::RisError),
    #[error(transparent)]
    Channel(#[from] crate::channel::ChannelError),
}

/// Transmit and noise powers in dBm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerConfig {
    pub pt_dbm: f64,
    pub pn_dbm: f64,
}

impl PowerConfig {
    /// Linear transmit-to-noise power ratio `10^((pt - pn)/10)`.
    pub fn snr_factor(&self) -> f64 {
        10f64.powf((self.pt_dbm - self.pn_dbm) / 10.0)
    }
}

/// Per-level complex reflection coefficients for a discrete resolution.
fn level_table(bits: u8, amp: &AmplitudeParams) -> Vec<Complex64> {
    let levels = 1u32 << bits;
    (0..levels)
        .map(|k| reflection_coefficient(level_phase(k as u16, bits), amp))
        .collect()
}

/// Effective scalar channel `sum_n h_br[n] rho(theta_n) e^(j theta_n) h_ru[n] + h_bu`.
pub fn combined_channel(
    ch: &ChannelRealization,
    cfg: &PhaseConfig,
    amp: &AmplitudeParams,
) -> Result<Complex64, OptimizerError> {
    let n = ch.n_elements();
    if cfg.len() != n {
        return Err(OptimizerError::LengthMismatch {
            got: cfg.len(),
            expected: n,
        });
    }
    let mut acc = ch.h_bu;
    match cfg {
        PhaseConfig::Discrete { bits, indices } => {
            let table = level_table(*bits, amp);
            for i in 0..n {
                let ix = indices[i] as usize;
                let coeff = *table.get(ix).ok_or(ris::RisError::IndexOutOfRange {
                    index: indices[i],
                    bits: *bits,
                })?;
                acc += ch.h_br[i] * coeff * ch.h_ru[i];
            }
        }
        PhaseConfig::Continuous(values) => {
            for i in 0..n {
                acc += ch.h_br[i] * reflection_coefficient(values[i], amp) * ch.h_ru[i];
            }
        }
    }
    Ok(acc)
}

/// Achievable rate in bits/s/Hz for a channel realization under a phase
/// configuration.
pub fn achievable_rate(
    ch: &ChannelRealization,
    cfg: &PhaseConfig,
    amp: &AmplitudeParams,
    power: &PowerConfig,
) -> Result<f64, OptimizerError> {
    let gain = combined_channel(ch, cfg, amp)?.norm_sqr();
    Ok((1.0 + power.snr_factor() * gain).log2())
}

/// Rate of the direct link alone (no RIS contribution).
pub fn baseline_rate(ch: &ChannelRealization, power: &PowerConfig) -> f64 {
    (1.0 + power.snr_factor() * ch.h_bu.norm_sqr()).log2()
}

// ---------------------------------------------------------------------------
// Iterative per-element search
// ---------------------------------------------------------------------------

/// Result of the iterative search: the final configuration and the gain
/// trace `|combined|^2` recorded after every per-element update.
#[derive(Debug, Clone)]
pub struct IterativeResult {
    pub config: PhaseConfig,
    /// One entry per element update (sweeps * N entries), non-decreasing.
    pub gain_trace: Vec<f64>,
}

/// Sweep the elements in index order; for each element test every discrete
/// level with the others fixed and keep the best (ties, including with the
/// incumbent level, go to the smaller level index). Discrete mode only.
pub fn optimize_iterative_traced(
    ch: &ChannelRealization,
    spec: &RisSpec,
    power: &PowerConfig,
    init: &PhaseConfig,
    sweeps: u32,
) -> Result<IterativeResult, OptimizerError> {
    let _ = power; // rate ranking is monotone in |combined|^2; powers do not affect the argmax
    if spec.is_continuous() {
        return Err(OptimizerError::ContinuousModeUnsupported);
    }
    let n = ch.n_elements();
    if init.len() != n {
        return Err(OptimizerError::LengthMismatch {
            got: init.len(),
            expected: n,
        });
    }
    let (bits, mut indices) = match init {
        PhaseConfig::Discrete { bits, indices } => {
            if *bits != spec.phase_bits {
                return Err(ris::RisError::ConfigModeMismatch {
                    bits: spec.phase_bits,
                }
                .into());
            }
            (*bits, indices.clone())
        }
        PhaseConfig::Continuous(_) => return Err(OptimizerError::ContinuousModeUnsupported),
    };
    let amp = &spec.amp;
    let table = level_table(bits, amp);
    let cascade: Vec<Complex64> = (0..n).map(|i| ch.h_br[i] * ch.h_ru[i]).collect();

    // Running total including every element's current contribution.
    let mut total = ch.h_bu;
    for i in 0..n {
        let ix = indices[i] as usize;
        let coeff = *table.get(ix).ok_or(ris::RisError::IndexOutOfRange {
            index: indices[i],
            bits,
        })?;
        total += cascade[i] * coeff;
    }

    let mut gain_trace = Vec::with_capacity(n * sweeps as usize);
    let mut current_gain = total.norm_sqr();
    for _ in 0..sweeps.max(1) {
        for i in 0..n {
            let rest = total - cascade[i] * table[indices[i] as usize];
            let mut best_k = 0usize;
            let mut best_gain = f64::NEG_INFINITY;
            for (k, coeff) in table.iter().enumerate() {
                let g = (rest + cascade[i] * coeff).norm_sqr();
                if g > best_gain {
                    best_gain = g;
                    best_k = k;
                }
            }
            indices[i] = best_k as u16;
            total = rest + cascade[i] * table[best_k];
            // The incumbent level is in the candidate set, so the update is
            // monotone; clamping absorbs sub-ulp re-evaluation noise only.
            current_gain = current_gain.max(best_gain);
            gain_trace.push(current_gain);
        }
    }

    Ok(IterativeResult {
        config: PhaseConfig::Discrete { bits, indices },
        gain_trace,
    })
}

/// `optimize_iterative_traced` without the trace.
pub fn optimize_iterative(
    ch: &ChannelRealization,
    spec: &RisSpec,
    power: &PowerConfig,
    init: &PhaseConfig,
    sweeps: u32,
) -> Result<PhaseConfig, OptimizerError> {
    Ok(optimize_iterative_traced(ch, spec, power, init, sweeps)?.config)
}

// ---------------------------------------------------------------------------
// Quantized ideal-phase alignment
// ---------------------------------------------------------------------------

/// Per element, compute the continuous phase aligning the cascaded path with
/// the direct path, `phi_n = angle(h_bu) - angle(h_br[n] h_ru[n])` wrapped
/// into [0, 2*pi), then map to the nearest discrete level (or return the
/// continuous phases unchanged when the spec is continuous). A blocked
/// direct path (`h_bu = 0`) aligns against reference phase 0.
pub fn optimize_quantized(
    ch: &ChannelRealization,
    spec: &RisSpec,
) -> Result<PhaseConfig, OptimizerError> {
    let n = ch.n_elements();
    if spec.n_elements() != n {
        return Err(OptimizerError::LengthMismatch {
            got: spec.n_elements(),
            expected: n,
        });
    }
    let reference = if ch.h_bu == Complex64::ZERO {
        0.0
    } else {
        ch.h_bu.arg()
    };
    let ideal = (0..n).map(|i| {
        let cascade = ch.h_br[i] * ch.h_ru[i];
        wrap_phase(reference - cascade.arg())
    });
    if spec.is_continuous() {
        Ok(PhaseConfig::Continuous(ideal.collect()))
    } else {
        let bits = spec.phase_bits;
        let indices = ideal
            .map(|phi| quantize_phase(phi, bits))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PhaseConfig::Discrete { bits, indices })
    }
}

// ---------------------------------------------------------------------------
// Exhaustive-search oracle
// ---------------------------------------------------------------------------

/// Global maximizer of the rate over all discrete level assignments,
/// enumerated lexicographically (element 0 most significant); ties keep the
/// lexicographically smallest index vector. Refuses search spaces larger
/// than `BRUTE_FORCE_MAX_CONFIGS`.
pub fn brute_force_optimum(
    ch: &ChannelRealization,
    spec: &RisSpec,
    power: &PowerConfig,
) -> Result<(PhaseConfig, f64), OptimizerError> {
    if spec.is_continuous() {
        return Err(OptimizerError::ContinuousModeUnsupported);
    }
    let n = ch.n_elements();
    if spec.n_elements() != n {
        return Err(OptimizerError::LengthMismatch {
            got: spec.n_elements(),
            expected: n,
        });
    }
    let bits = spec.phase_bits;
    let levels = 1u64 << bits;
    let mut total: u64 = 1;
    for _ in 0..n {
        total = total
            .checked_mul(levels)
            .filter(|&t| t <= BRUTE_FORCE_MAX_CONFIGS)
            .ok_or(OptimizerError::SearchSpaceTooLarge(u64::MAX))?;
    }

    let amp = &spec.amp;
    let table = level_table(bits, amp);
    let cascade: Vec<Complex64> = (0..n).map(|i| ch.h_br[i] * ch.h_ru[i]).collect();

    let mut best_gain = f64::NEG_INFINITY;
    let mut best_indices: Vec<u16> = vec![0; n];
    let mut indices = vec![0u16; n];
    for code in 0..total {
        let mut c = code;
        for i in (0..n).rev() {
            indices[i] = (c % levels) as u16;
            c /= levels;
        }
        let mut acc = ch.h_bu;
        for i in 0..n {
            acc += cascade[i] * table[indices[i] as usize];
        }
        let gain = acc.norm_sqr();
        if gain > best_gain {
            best_gain = gain;
            best_indices.copy_from_slice(&indices);
        }
    }

    let config = PhaseConfig::Discrete {
        bits,
        indices: best_indices,
    };
    let rate = (1.0 + power.snr_factor() * best_gain).log2();
    Ok((config, rate))
}

// ---------------------------------------------------------------------------
// Codebook
// ---------------------------------------------------------------------------

/// One stored configuration of the offline library.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookEntry {
    pub label: String,
    pub config: PhaseConfig,
}

/// Offline library of phase configurations, tied to the RIS it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub entries: Vec<CodebookEntry>,
    pub fingerprint: RisFingerprint,
}

#[derive(Debug, Error)]
pub enum CodebookIoError {
    #[error("codebook I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("codebook parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("only discrete codebooks can be persisted")]
    ContinuousNotPersisted,
    #[error(transparent)]
    Invalid(#[from] OptimizerError),
}

impl Codebook {
    /// Serialize to the line-oriented text format:
    /// a `ORIXCB v1 N=.. b=.. rho_min=.. xi=.. omega=..` header, then one
    /// `label idx_0 ... idx_{N-1}` line per entry.
    pub fn to_text(&self) -> Result<String, CodebookIoError> {
        let fp = &self.fingerprint;
        let mut out = format!(
            "ORIXCB v1 N={} b={} rho_min={} xi={} omega={}\n",
            fp.n_elements, fp.phase_bits, fp.rho_min, fp.xi_rad, fp.omega
        );
        for entry in &self.entries {
            let indices = match &entry.config {
                PhaseConfig::Discrete { indices, .. } => indices,
                PhaseConfig::Continuous(_) => {
                    return Err(CodebookIoError::ContinuousNotPersisted)
                }
            };
            out.push_str(&entry.label);
            for ix in indices {
                out.push(' ');
                out.push_str(&ix.to_string());
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Codebook, CodebookIoError> {
        let parse = |line: usize, reason: &str| CodebookIoError::Parse {
            line,
            reason: reason.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| parse(1, "empty file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 7 || fields[0] != "ORIXCB" || fields[1] != "v1" {
            return Err(parse(1, "expected `ORIXCB v1 N=.. b=.. rho_min=.. xi=.. omega=..`"));
        }
        fn kv<'a>(field: &'a str, key: &str, line: usize) -> Result<&'a str, CodebookIoError> {
            field.strip_prefix(key).and_then(|s| s.strip_prefix('=')).ok_or(
                CodebookIoError::Parse {
                    line,
                    reason: format!("expected `{key}=<value>`, got {field:?}"),
                },
            )
        }
        let n: u32 = kv(fields[2], "N", 1)?
            .parse()
            .map_err(|_| parse(1, "bad N"))?;
        let bits: u8 = kv(fields[3], "b", 1)?
            .parse()
            .map_err(|_| parse(1, "bad b"))?;
        let rho_min: f64 = kv(fields[4], "rho_min", 1)?
            .parse()
            .map_err(|_| parse(1, "bad rho_min"))?;
        let xi_rad: f64 = kv(fields[5], "xi", 1)?
            .parse()
            .map_err(|_| parse(1, "bad xi"))?;
        let omega: f64 = kv(fields[6], "omega", 1)?
            .parse()
            .map_err(|_| parse(1, "bad omega"))?;
        if bits == 0 {
            return Err(CodebookIoError::ContinuousNotPersisted);
        }

        let mut entries = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let mut parts = line.split_whitespace();
            let label = parts.next().unwrap().to_string();
            let indices = parts
                .map(|p| p.parse::<u16>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| parse(lineno, "bad phase index"))?;
            if indices.len() != n as usize {
                return Err(parse(lineno, "entry length does not match header N"));
            }
            let levels = 1u32 << bits;
            if indices.iter().any(|&ix| u32::from(ix) >= levels) {
                return Err(parse(lineno, "phase index out of range for b"));
            }
            entries.push(CodebookEntry {
                label,
                config: PhaseConfig::Discrete { bits, indices },
            });
        }
        if entries.is_empty() {
            return Err(OptimizerError::EmptyCodebook.into());
        }
        Ok(Codebook {
            entries,
            fingerprint: RisFingerprint {
                n_elements: n,
                phase_bits: bits,
                rho_min,
                xi_rad,
                omega,
            },
        })
    }

    pub fn write_file(&self, path: &std::path::Path) -> Result<(), CodebookIoError> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn read_file(path: &std::path::Path) -> Result<Codebook, CodebookIoError> {
        Codebook::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Offline codebook construction: for each candidate UE position generate
/// the deterministic nominal realization (LoS forced, no shadow fading,
/// pure-LoS links) and store the iterative optimum from the all-zeros
/// configuration, labelled by position. Entries keep the input order.
pub fn build_codebook(
    spec: &RisSpec,
    scenario: &InfScenario,
    positions: &[(String, Point3)],
    power: &PowerConfig,
    fc_hz: f64,
) -> Result<Codebook, OptimizerError> {
    if spec.is_continuous() {
        return Err(OptimizerError::ContinuousModeUnsupported);
    }
    if positions.is_empty() {
        return Err(OptimizerError::EmptyCodebook);
    }
    let mut entries = Vec::with_capacity(positions.len());
    for (label, ue_pos) in positions {
        if label.is_empty() || label.chars().any(|c| c.is_whitespace()) {
            return Err(OptimizerError::InvalidLabel(label.clone()));
        }
        let placement = crate::scenario::Placement {
            ue_pos: *ue_pos,
            ..*scenario.placement()
        };
        let ch = nominal_realization(scenario, &placement, spec, fc_hz)?;
        let config = optimize_iterative(&ch, spec, power, &spec.zero_config(), 1)?;
        entries.push(CodebookEntry {
            label: label.clone(),
            config,
        });
    }
    Ok(Codebook {
        entries,
        fingerprint: spec.fingerprint(),
    })
}

/// Online codebook selection: evaluate every entry on the realization and
/// return `(entry index, config, rate)` of the best (ties keep the lowest
/// index). Fails when the codebook was built for a different RIS.
pub fn select_codebook_entry(
    ch: &ChannelRealization,
    codebook: &Codebook,
    spec: &RisSpec,
    power: &PowerConfig,
) -> Result<(usize, PhaseConfig, f64), OptimizerError> {
    if codebook.fingerprint != spec.fingerprint() {
        return Err(OptimizerError::FingerprintMismatch {
            codebook: codebook.fingerprint,
            spec: spec.fingerprint(),
        });
    }
    if codebook.entries.is_empty() {
        return Err(OptimizerError::EmptyCodebook);
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, entry) in codebook.entries.iter().enumerate() {
        let rate = achievable_rate(ch, &entry.config, &spec.amp, power)?;
        if best.map(|(_, r)| rate > r).unwrap_or(true) {
            best = Some((i, rate));
        }
    }
    let (index, rate) = best.unwrap();
    Ok((index, codebook.entries[index].config.clone(), rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::SeedTag;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use std::f64::consts::PI;

    const POWER: PowerConfig = PowerConfig {
        pt_dbm: 10.0,
        pn_dbm: -88.0,
    };

    fn ch(h_br: Vec<Complex64>, h_ru: Vec<Complex64>, h_bu: Complex64) -> ChannelRealization {
        ChannelRealization {
            h_br,
            h_ru,
            h_bu,
            los_state: true,
            seed_tag: SeedTag {
                master_seed: 0,
                realization_index: 0,
            },
        }
    }

    fn unit_spec(n: usize, bits: u8, amp: AmplitudeParams) -> RisSpec {
        RisSpec::new(
            1,
            n as u16,
            bits,
            0.005,
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
            0.005,
            amp,
        )
        .unwrap()
    }

    fn random_channel(rng: &mut ChaCha12Rng, n: usize) -> ChannelRealization {
        let mut draw = |rng: &mut ChaCha12Rng| {
            Complex64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
        };
        let h_br = (0..n).map(|_| draw(rng)).collect();
        let h_ru = (0..n).map(|_| draw(rng)).collect();
        let h_bu = draw(rng);
        ch(h_br, h_ru, h_bu)
    }

    const J: Complex64 = Complex64::new(0.0, 1.0);
    const ONE: Complex64 = Complex64::new(1.0, 0.0);

    #[test]
    fn combined_channel_alignment_cases() {
        let ideal = AmplitudeParams::ideal();
        // N=1, everything real and aligned.
        let c = ch(vec![ONE], vec![ONE], ONE);
        let cfg = PhaseConfig::Discrete {
            bits: 1,
            indices: vec![0],
        };
        let v = combined_channel(&c, &cfg, &ideal).unwrap();
        assert!((v - Complex64::new(2.0, 0.0)).norm() < 1e-12);
        // theta = pi cancels perfectly.
        let cfg_pi = PhaseConfig::Discrete {
            bits: 1,
            indices: vec![1],
        };
        let v = combined_channel(&c, &cfg_pi, &ideal).unwrap();
        assert!(v.norm() < 1e-12);
        // N=2 with a continuous config: j * e^{j 3pi/2} = 1.
        let c2 = ch(vec![ONE, J], vec![ONE, ONE], ONE);
        let cfg2 = PhaseConfig::Continuous(vec![0.0, 3.0 * PI / 2.0]);
        let v = combined_channel(&c2, &cfg2, &ideal).unwrap();
        assert!((v - Complex64::new(3.0, 0.0)).norm() < 1e-12, "v = {v}");
    }

    #[test]
    fn combined_channel_rejects_length_mismatch() {
        let c = ch(vec![ONE], vec![ONE], ONE);
        let cfg = PhaseConfig::Discrete {
            bits: 1,
            indices: vec![0, 1],
        };
        assert!(matches!(
            combined_channel(&c, &cfg, &AmplitudeParams::ideal()),
            Err(OptimizerError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn rate_spot_values() {
        // |combined|^2 = 0 gives R = 0.
        let c = ch(vec![ONE], vec![ONE], -ONE);
        let cfg = PhaseConfig::Discrete {
            bits: 1,
            indices: vec![0],
        };
        let r = achievable_rate(&c, &cfg, &AmplitudeParams::ideal(), &POWER).unwrap();
        assert!(r.abs() < 1e-9);

        // pt = 10 dBm, pn = -88 dBm, |combined|^2 = 1:
        // log2(1 + 10^9.8) = 32.5549 (closed form).
        let c1 = ch(vec![ONE], vec![ONE], Complex64::ZERO);
        let r = achievable_rate(&c1, &cfg, &AmplitudeParams::ideal(), &POWER).unwrap();
        let expected = (1.0 + 10f64.powf(9.8)).log2();
        assert!((r - expected).abs() < 1e-12);
        assert!((r - 32.5549).abs() < 1e-3, "r = {r}");

        // Doubling |combined| at high SNR adds ~2 bits.
        let c2 = ch(vec![ONE], vec![ONE], ONE);
        let r2 = achievable_rate(&c2, &cfg, &AmplitudeParams::ideal(), &POWER).unwrap();
        assert!((r2 - r - 2.0).abs() < 1e-6);
    }

    #[test]
    fn baseline_rate_cases() {
        let p0 = PowerConfig {
            pt_dbm: 0.0,
            pn_dbm: 0.0,
        };
        let blocked = ch(vec![ONE], vec![ONE], Complex64::ZERO);
        assert_eq!(baseline_rate(&blocked, &POWER), 0.0);
        let unit = ch(vec![ONE], vec![ONE], ONE);
        assert!((baseline_rate(&unit, &p0) - 1.0).abs() < 1e-12);
        // |h_bu|^2 = 10^-9.8 against a 98 dB SNR factor: product is 1.
        let tiny = ch(
            vec![ONE],
            vec![ONE],
            Complex64::new(10f64.powf(-4.9), 0.0),
        );
        assert!((baseline_rate(&tiny, &POWER) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iterative_single_element() {
        let spec = unit_spec(1, 1, AmplitudeParams::ideal());
        let c = ch(vec![ONE], vec![ONE], ONE);
        let init = PhaseConfig::Discrete {
            bits: 1,
            indices: vec![1],
        };
        let out = optimize_iterative(&c, &spec, &POWER, &init, 1).unwrap();
        assert_eq!(
            out,
            PhaseConfig::Discrete {
                bits: 1,
                indices: vec![0]
            }
        );
    }

    #[test]
    fn iterative_two_elements_reaches_brute_force_optimum() {
        let spec = unit_spec(2, 1, AmplitudeParams::ideal());
        let c = ch(vec![ONE, J], vec![ONE, ONE], ONE);
        let init = spec.zero_config();
        let res = optimize_iterative_traced(&c, &spec, &POWER, &init, 1).unwrap();
        assert_eq!(
            res.config,
            PhaseConfig::Discrete {
                bits: 1,
                indices: vec![0, 0]
            }
        );
        let gain = combined_channel(&c, &res.config, &spec.amp)
            .unwrap()
            .norm_sqr();
        assert!((gain - 5.0).abs() < 1e-12);
        let (bf_cfg, bf_rate) = brute_force_optimum(&c, &spec, &POWER).unwrap();
        assert_eq!(bf_cfg, res.config);
        let it_rate = achievable_rate(&c, &res.config, &spec.amp, &POWER).unwrap();
        assert!((bf_rate - it_rate).abs() < 1e-12);
    }

    #[test]
    fn iterative_trace_non_decreasing_and_improves_on_init() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = 1 + rng.random_range(0..8);
            let c = random_channel(&mut rng, n);
            let spec = unit_spec(n, 2, AmplitudeParams::practical());
            let init = PhaseConfig::Discrete {
                bits: 2,
                indices: (0..n).map(|_| rng.random_range(0..4) as u16).collect(),
            };
            let res = optimize_iterative_traced(&c, &spec, &POWER, &init, 1).unwrap();
            for w in res.gain_trace.windows(2) {
                assert!(w[1] >= w[0]);
            }
            let r_init = achievable_rate(&c, &init, &spec.amp, &POWER).unwrap();
            let r_out = achievable_rate(&c, &res.config, &spec.amp, &POWER).unwrap();
            assert!(r_out >= r_init - 1e-12);
        }
    }

    #[test]
    fn iterative_rejects_continuous() {
        let spec = unit_spec(1, 0, AmplitudeParams::ideal());
        let c = ch(vec![ONE], vec![ONE], ONE);
        let init = PhaseConfig::Continuous(vec![0.0]);
        assert!(matches!(
            optimize_iterative(&c, &spec, &POWER, &init, 1),
            Err(OptimizerError::ContinuousModeUnsupported)
        ));
    }

    #[test]
    fn quantized_continuous_attains_triangle_bound() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..100 {
            let n = 1 + rng.random_range(0..16);
            let c = random_channel(&mut rng, n);
            let spec = unit_spec(n, 0, AmplitudeParams::ideal());
            let cfg = optimize_quantized(&c, &spec).unwrap();
            let got = combined_channel(&c, &cfg, &spec.amp).unwrap().norm();
            let bound: f64 = (0..n)
                .map(|i| (c.h_br[i] * c.h_ru[i]).norm())
                .sum::<f64>()
                + c.h_bu.norm();
            assert!((got - bound).abs() <= 1e-9 * bound.max(1e-300), "{got} vs {bound}");
        }
    }

    #[test]
    fn quantized_tie_rule_example() {
        let spec = unit_spec(2, 1, AmplitudeParams::ideal());
        let c = ch(vec![ONE, J], vec![ONE, ONE], ONE);
        let cfg = optimize_quantized(&c, &spec).unwrap();
        assert_eq!(
            cfg,
            PhaseConfig::Discrete {
                bits: 1,
                indices: vec![0, 0]
            }
        );
    }

    #[test]
    fn quantized_sign_bookkeeping() {
        // h_bu = 3, cascade = -1: ideal phase is pi, combined = 4.
        let spec = unit_spec(1, 0, AmplitudeParams::ideal());
        let c = ch(vec![-ONE], vec![ONE], Complex64::new(3.0, 0.0));
        let cfg = optimize_quantized(&c, &spec).unwrap();
        match &cfg {
            PhaseConfig::Continuous(v) => assert!((v[0] - PI).abs() < 1e-12),
            _ => panic!("expected continuous"),
        }
        let v = combined_channel(&c, &cfg, &spec.amp).unwrap();
        assert!((v - Complex64::new(4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn quantized_blocked_direct_path_uses_zero_reference() {
        let spec = unit_spec(2, 0, AmplitudeParams::ideal());
        let c = ch(vec![ONE, J], vec![ONE, ONE], Complex64::ZERO);
        let cfg = optimize_quantized(&c, &spec).unwrap();
        let v = combined_channel(&c, &cfg, &spec.amp).unwrap();
        // Aligned to phase 0: the sum is real and equals the magnitude sum.
        assert!((v - Complex64::new(2.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn brute_force_small_instance() {
        let spec = unit_spec(2, 1, AmplitudeParams::ideal());
        let c = ch(vec![ONE, J], vec![ONE, ONE], ONE);
        let (cfg, _) = brute_force_optimum(&c, &spec, &POWER).unwrap();
        // Gains are {5, 5, 1, 1}; the lexicographic tie-break picks (0, 0).
        assert_eq!(
            cfg,
            PhaseConfig::Discrete {
                bits: 1,
                indices: vec![0, 0]
            }
        );
    }

    #[test]
    fn brute_force_matches_iterative_at_n1() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for bits in 1..=8u8 {
            for _ in 0..100 {
                let c = random_channel(&mut rng, 1);
                let spec = unit_spec(1, bits, AmplitudeParams::practical());
                let (bf_cfg, bf_rate) = brute_force_optimum(&c, &spec, &POWER).unwrap();
                let init = PhaseConfig::Discrete {
                    bits,
                    indices: vec![rng.random_range(0..(1u16 << bits))],
                };
                let it = optimize_iterative(&c, &spec, &POWER, &init, 1).unwrap();
                assert_eq!(bf_cfg, it);
                let it_rate = achievable_rate(&c, &it, &spec.amp, &POWER).unwrap();
                assert!((bf_rate - it_rate).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn brute_force_refuses_large_spaces() {
        let spec = unit_spec(30, 1, AmplitudeParams::ideal());
        let c = random_channel(&mut ChaCha12Rng::seed_from_u64(1), 30);
        assert!(matches!(
            brute_force_optimum(&c, &spec, &POWER),
            Err(OptimizerError::SearchSpaceTooLarge(_))
        ));
    }

    #[test]
    fn dominance_chain_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..40 {
            let n = 1 + rng.random_range(0..6);
            let c = random_channel(&mut rng, n);
            for amp in [AmplitudeParams::ideal(), AmplitudeParams::practical()] {
                let spec = unit_spec(n, 2, amp);
                let quant = optimize_quantized(&c, &spec).unwrap();
                let r_quant = achievable_rate(&c, &quant, &spec.amp, &POWER).unwrap();
                let iter = optimize_iterative(&c, &spec, &POWER, &quant, 1).unwrap();
                let r_iter = achievable_rate(&c, &iter, &spec.amp, &POWER).unwrap();
                let (_, r_bf) = brute_force_optimum(&c, &spec, &POWER).unwrap();
                assert!(r_bf >= r_iter - 1e-12);
                assert!(r_iter >= r_quant - 1e-12);
            }
        }
    }

    #[test]
    fn global_phase_invariance() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 5;
        let c = random_channel(&mut rng, n);
        let rot = Complex64::from_polar(1.0, 1.2345);
        let rotated = ChannelRealization {
            h_br: c.h_br.iter().map(|h| h * rot).collect(),
            h_bu: c.h_bu * rot,
            ..c.clone()
        };
        let spec = unit_spec(n, 2, AmplitudeParams::practical());
        let q1 = optimize_quantized(&c, &spec).unwrap();
        let q2 = optimize_quantized(&rotated, &spec).unwrap();
        assert_eq!(q1, q2);
        let (b1, r1) = brute_force_optimum(&c, &spec, &POWER).unwrap();
        let (b2, r2) = brute_force_optimum(&rotated, &spec, &POWER).unwrap();
        assert_eq!(b1, b2);
        assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn codebook_selection_is_argmax_with_lowest_index_ties() {
        let spec = unit_spec(2, 1, AmplitudeParams::ideal());
        let c = ch(vec![ONE, J], vec![ONE, ONE], ONE);
        let entry = |indices: Vec<u16>| CodebookEntry {
            label: format!("e{}", indices[0]),
            config: PhaseConfig::Discrete { bits: 1, indices },
        };
        // (0,0) and (0,1) both reach gain 5; the lower index must win.
        let cb = Codebook {
            entries: vec![entry(vec![0, 1]), entry(vec![0, 0]), entry(vec![1, 1])],
            fingerprint: spec.fingerprint(),
        };
        let (idx, _, rate) = select_codebook_entry(&c, &cb, &spec, &POWER).unwrap();
        assert_eq!(idx, 0);
        let (_, bf_rate) = brute_force_optimum(&c, &spec, &POWER).unwrap();
        assert!(rate <= bf_rate + 1e-12);
    }

    #[test]
    fn codebook_fingerprint_mismatch_rejected() {
        let spec = unit_spec(2, 1, AmplitudeParams::ideal());
        let other = unit_spec(2, 2, AmplitudeParams::ideal());
        let cb = Codebook {
            entries: vec![CodebookEntry {
                label: "a".into(),
                config: PhaseConfig::Discrete {
                    bits: 1,
                    indices: vec![0, 0],
                },
            }],
            fingerprint: other.fingerprint(),
        };
        let c = ch(vec![ONE, J], vec![ONE, ONE], ONE);
        assert!(matches!(
            select_codebook_entry(&c, &cb, &spec, &POWER),
            Err(OptimizerError::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn codebook_text_round_trip() {
        let cb = Codebook {
            entries: vec![
                CodebookEntry {
                    label: "near".into(),
                    config: PhaseConfig::Discrete {
                        bits: 2,
                        indices: vec![0, 3, 1],
                    },
                },
                CodebookEntry {
                    label: "far".into(),
                    config: PhaseConfig::Discrete {
                        bits: 2,
                        indices: vec![2, 2, 0],
                    },
                },
            ],
            fingerprint: RisFingerprint {
                n_elements: 3,
                phase_bits: 2,
                rho_min: 0.2,
                xi_rad: 0.43 * PI,
                omega: 1.6,
            },
        };
        let text = cb.to_text().unwrap();
        assert!(text.starts_with("ORIXCB v1 N=3 b=2 "));
        let back = Codebook::from_text(&text).unwrap();
        assert_eq!(cb, back);
    }

    #[test]
    fn codebook_rejects_malformed_text() {
        assert!(Codebook::from_text("").is_err());
        assert!(Codebook::from_text("BOGUS v1 N=1 b=1 rho_min=0 xi=0 omega=0\n").is_err());
        let missing_entry = "ORIXCB v1 N=2 b=1 rho_min=0.2 xi=1.35 omega=1.6\nlabel 0\n";
        assert!(matches!(
            Codebook::from_text(missing_entry),
            Err(CodebookIoError::Parse { line: 2, .. })
        ));
        let out_of_range = "ORIXCB v1 N=2 b=1 rho_min=0.2 xi=1.35 omega=1.6\nlabel 0 2\n";
        assert!(Codebook::from_text(out_of_range).is_err());
    }
}
