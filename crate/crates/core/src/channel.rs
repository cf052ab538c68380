//! Stochastic channel generation for RIS-assisted indoor-factory links.
//!
//! Large-scale behaviour (LoS probability, pathloss, shadow fading) follows
//! the indoor-factory model family; small-scale behaviour is a simplified
//! Rician/Rayleigh substitute: a deterministic-phase line-of-sight ray per
//! link plus an optional circularly-symmetric diffuse term mixed by the
//! Rician K-factor. The AP-RIS and RIS-UE links default to pure LoS
//! (K = +inf); the direct AP-UE link is probabilistically LoS or NLoS.
//!
//! # Randomness
//!
//! Every random quantity is drawn from a named sub-stream derived from a
//! `(master seed, realization index, stream label)` triple via a
//! splitmix-style mixer, so realizations can be generated independently and
//! in parallel while staying bit-reproducible within this implementation.

use crate::geom::{distances, Point3};
use crate::ris::{element_positions, RisSpec};
use crate::scenario::{InfScenario, InfVariant, Placement};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::TAU;
use thiserror::Error;

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Pathloss model validity floor: 3D distances below 1 m are rejected.
pub const MIN_PATHLOSS_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("3D distance {0} m below the 1 m model validity floor")]
    DistanceBelowModelFloor(f64),
    #[error("carrier frequency {0} Hz must be positive and finite")]
    InvalidCarrierFrequency(f64),
    #[error("LoS model degenerate: UE height equals clutter height ({0} m)")]
    UeAtClutterHeight(f64),
    #[error("LoS model degenerate: clutter density {0} too close to 1")]
    ClutterDensitySaturated(f64),
    #[error("RIS element at ({x}, {y}, {z}) falls outside the hall")]
    ElementOutsideHall { x: f64, y: f64, z: f64 },
    #[error("channel vectors must have equal positive length (h_br: {h_br}, h_ru: {h_ru})")]
    VectorLengthMismatch { h_br: usize, h_ru: usize },
    #[error("channel coefficient is not finite")]
    NonFiniteCoefficient,
    #[error(transparent)]
    Ris(#[from] crate::ris::RisError),
}

/// Link-level parameters shared by all realizations of one experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    /// Carrier frequency in Hz.
    pub fc_hz: f64,
    /// Rician K-factor in dB for the AP-RIS and RIS-UE links.
    /// `f64::INFINITY` selects the pure-LoS default.
    pub k_ris_links_db: f64,
    /// Rician K-factor in dB for the AP-UE link while in the LoS state.
    pub k_bu_db: f64,
    pub enable_shadow_fading: bool,
}

impl LinkParams {
    pub fn new(fc_hz: f64) -> Self {
        Self {
            fc_hz,
            k_ris_links_db: f64::INFINITY,
            k_bu_db: 10.0,
            enable_shadow_fading: true,
        }
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT_M_S / self.fc_hz
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.fc_hz > 0.0 && self.fc_hz.is_finite()) {
            return Err(ChannelError::InvalidCarrierFrequency(self.fc_hz));
        }
        Ok(())
    }
}

/// Identity of the RNG streams a realization was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTag {
    pub master_seed: u64,
    pub realization_index: u64,
}

/// One Monte Carlo draw of the channel triple.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// AP -> RIS element coefficients, one per element (row-major order).
    pub h_br: Vec<Complex64>,
    /// RIS element -> UE coefficients, same ordering.
    pub h_ru: Vec<Complex64>,
    /// Direct AP -> UE coefficient.
    pub h_bu: Complex64,
    /// LoS state of the direct AP-UE link for this draw.
    pub los_state: bool,
    pub seed_tag: SeedTag,
}

impl ChannelRealization {
    /// Assemble a realization from raw coefficients (e.g. received over the
    /// wire), checking lengths and finiteness.
    pub fn from_parts(
        h_br: Vec<Complex64>,
        h_ru: Vec<Complex64>,
        h_bu: Complex64,
        los_state: bool,
        seed_tag: SeedTag,
    ) -> Result<Self, ChannelError> {
        if h_br.is_empty() || h_br.len() != h_ru.len() {
            return Err(ChannelError::VectorLengthMismatch {
                h_br: h_br.len(),
                h_ru: h_ru.len(),
            });
        }
        let finite = h_br
            .iter()
            .chain(h_ru.iter())
            .chain(std::iter::once(&h_bu))
            .all(|c| c.re.is_finite() && c.im.is_finite());
        if !finite {
            return Err(ChannelError::NonFiniteCoefficient);
        }
        Ok(Self {
            h_br,
            h_ru,
            h_bu,
            los_state,
            seed_tag,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.h_br.len()
    }
}

// ---------------------------------------------------------------------------
// Named RNG sub-streams
// ---------------------------------------------------------------------------

/// Labels of the independent random streams consumed by one realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamLabel {
    LosDraw = 1,
    ShadowFading = 2,
    DirectDiffuse = 3,
    ApRisDiffuse = 4,
    RisUeDiffuse = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a sub-seed from `(master, parts...)`. The derivation rule is
/// `state = splitmix64(master); state = splitmix64(state ^ splitmix64(part))`
/// folded left over the parts.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &p in parts {
        state = splitmix64(state ^ splitmix64(p));
    }
    state
}

/// Handle for the named sub-streams of one `(seed, realization)` pair.
#[derive(Debug, Clone, Copy)]
pub struct RealizationStreams {
    master_seed: u64,
    realization_index: u64,
}

impl RealizationStreams {
    pub fn new(master_seed: u64, realization_index: u64) -> Self {
        Self {
            master_seed,
            realization_index,
        }
    }

    pub fn tag(&self) -> SeedTag {
        SeedTag {
            master_seed: self.master_seed,
            realization_index: self.realization_index,
        }
    }

    pub fn stream(&self, label: StreamLabel) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(derive_seed(
            self.master_seed,
            &[self.realization_index, label as u64],
        ))
    }
}

// ---------------------------------------------------------------------------
// Large-scale models
// ---------------------------------------------------------------------------

/// Probability that the direct AP-UE link is line-of-sight:
/// `exp(-d_2D / k)` with the clutter-dependent decay constant
/// `k = -d_clutter / ln(1 - r)` for low-AP variants, additionally scaled by
/// `(h_AP - h_UE) / (h_c - h_UE)` for high-AP variants. HH is always LoS.
pub fn los_probability(
    scenario: &InfScenario,
    placement: &Placement,
) -> Result<f64, ChannelError> {
    let variant = scenario.variant();
    if variant == InfVariant::Hh {
        return Ok(1.0);
    }
    let layout = scenario.layout();
    let r = layout.clutter_density_r;
    if 1.0 - r <= 0.0 {
        return Err(ChannelError::ClutterDensitySaturated(r));
    }
    let base = -layout.clutter_size_m / (1.0 - r).ln();
    let k = match variant {
        InfVariant::Sl | InfVariant::Dl => base,
        InfVariant::Sh | InfVariant::Dh => {
            let h_ap = placement.ap_pos.z;
            let h_ue = placement.ue_pos.z;
            let denom = layout.clutter_height_m - h_ue;
            if denom == 0.0 {
                return Err(ChannelError::UeAtClutterHeight(h_ue));
            }
            base * (h_ap - h_ue) / denom
        }
        InfVariant::Hh => unreachable!(),
    };
    let (d_2d, _) = distances(&placement.ap_pos, &placement.ue_pos);
    Ok((-d_2d / k).exp().clamp(0.0, 1.0))
}

/// Indoor-factory pathloss in dB at `d_3d` metres and `fc_ghz` GHz.
///
/// LoS: `31.84 + 21.50 log10(d) + 19.00 log10(fc)`. NLoS takes the maximum
/// of the LoS curve and the variant-specific curve. HH has no NLoS state and
/// always evaluates the LoS branch.
pub fn pathloss_db(
    variant: InfVariant,
    los: bool,
    d_3d_m: f64,
    fc_ghz: f64,
) -> Result<f64, ChannelError> {
    if !(d_3d_m >= MIN_PATHLOSS_DISTANCE_M && d_3d_m.is_finite()) {
        return Err(ChannelError::DistanceBelowModelFloor(d_3d_m));
    }
    if !(fc_ghz > 0.0 && fc_ghz.is_finite()) {
        return Err(ChannelError::InvalidCarrierFrequency(fc_ghz * 1e9));
    }
    let log_d = d_3d_m.log10();
    let log_f = fc_ghz.log10();
    let pl_los = 31.84 + 21.50 * log_d + 19.00 * log_f;
    if los || variant == InfVariant::Hh {
        return Ok(pl_los);
    }
    let pl_nlos = match variant {
        InfVariant::Sl => 33.0 + 25.5 * log_d + 20.0 * log_f,
        InfVariant::Dl => 18.6 + 35.7 * log_d + 20.0 * log_f,
        InfVariant::Sh => 32.4 + 23.0 * log_d + 20.0 * log_f,
        InfVariant::Dh => 33.63 + 21.9 * log_d + 20.0 * log_f,
        InfVariant::Hh => unreachable!(),
    };
    Ok(pl_los.max(pl_nlos))
}

/// Shadow-fading standard deviation in dB for a (variant, LoS-state) pair.
pub fn shadow_fading_sigma_db(variant: InfVariant, los: bool) -> f64 {
    if los || variant == InfVariant::Hh {
        return 4.3;
    }
    match variant {
        InfVariant::Sl => 5.7,
        InfVariant::Dl => 7.2,
        InfVariant::Sh => 5.9,
        InfVariant::Dh => 4.0,
        InfVariant::Hh => unreachable!(),
    }
}

/// One zero-mean Gaussian shadow-fading draw in dB; exactly 0 when disabled.
pub fn sample_shadow_fading_db<R: Rng + ?Sized>(
    variant: InfVariant,
    los: bool,
    enabled: bool,
    rng: &mut R,
) -> f64 {
    if !enabled {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    shadow_fading_sigma_db(variant, los) * z
}

// ---------------------------------------------------------------------------
// Realization generation
// ---------------------------------------------------------------------------

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) / 2f64.sqrt()
}

/// LoS ray with unit amplitude and the deterministic propagation phase
/// `e^(-j 2 pi d / lambda)`.
fn los_ray(d_m: f64, wavelength_m: f64) -> Complex64 {
    Complex64::from_polar(1.0, -(TAU * d_m / wavelength_m).rem_euclid(TAU))
}

/// Mix a deterministic LoS ray with a diffuse draw by the Rician rule
/// `sqrt(K/(K+1)) los + sqrt(1/(K+1)) diffuse`; K in dB, +inf = pure LoS.
fn rician_mix<R: Rng + ?Sized>(los: Complex64, k_db: f64, rng: &mut R) -> Complex64 {
    if k_db.is_infinite() && k_db > 0.0 {
        return los;
    }
    let k = 10f64.powf(k_db / 10.0);
    los * (k / (k + 1.0)).sqrt() + complex_gaussian(rng) * (1.0 / (k + 1.0)).sqrt()
}

fn amplitude_from_pathloss_db(pl_db: f64) -> f64 {
    10f64.powf(-pl_db / 20.0)
}

/// Per-element LoS channel vector for one hop: common amplitude from the
/// centre-to-centre pathloss (far-field), per-element deterministic phase
/// from the exact node-to-element distance, optional diffuse mixing.
fn hop_vector<R: Rng + ?Sized>(
    node: &Point3,
    elements: &[Point3],
    center_amplitude: f64,
    wavelength_m: f64,
    k_db: f64,
    rng: &mut R,
) -> Vec<Complex64> {
    elements
        .iter()
        .map(|e| {
            let d = e.sub(node).norm();
            let ray = los_ray(d, wavelength_m);
            rician_mix(ray, k_db, rng) * center_amplitude
        })
        .collect()
}

/// Draw one channel realization for the scenario.
///
/// The AP-UE link draws its LoS state from `los_probability`, then applies
/// the matching pathloss (plus shadow fading when enabled): Rician with
/// `k_bu_db` in LoS, circularly-symmetric Gaussian with matching mean power
/// in NLoS. The AP-RIS and RIS-UE links use the LoS pathloss of the
/// centre-to-centre hop and per-element deterministic phases; a finite
/// `k_ris_links_db` adds a diffuse term per element.
pub fn generate_realization(
    scenario: &InfScenario,
    placement: &Placement,
    ris_spec: &RisSpec,
    link: &LinkParams,
    streams: &RealizationStreams,
) -> Result<ChannelRealization, ChannelError> {
    link.validate()?;
    let p_los = los_probability(scenario, placement)?;
    let los_state = streams.stream(StreamLabel::LosDraw).random::<f64>() < p_los;
    generate_with_los_state(scenario, placement, ris_spec, link, streams, los_state)
}

/// As `generate_realization` but with the direct-link LoS state forced.
pub fn generate_with_los_state(
    scenario: &InfScenario,
    placement: &Placement,
    ris_spec: &RisSpec,
    link: &LinkParams,
    streams: &RealizationStreams,
    los_state: bool,
) -> Result<ChannelRealization, ChannelError> {
    link.validate()?;
    let lambda = link.wavelength_m();
    let fc_ghz = link.fc_hz / 1e9;
    let variant = scenario.variant();

    let elements = element_positions(ris_spec)?;
    for e in &elements {
        if !scenario.contains(e) {
            return Err(ChannelError::ElementOutsideHall {
                x: e.x,
                y: e.y,
                z: e.z,
            });
        }
    }

    // Direct AP-UE link.
    let (_, d_bu) = distances(&placement.ap_pos, &placement.ue_pos);
    let pl_bu = pathloss_db(variant, los_state, d_bu, fc_ghz)?;
    let sf_db = sample_shadow_fading_db(
        variant,
        los_state,
        link.enable_shadow_fading,
        &mut streams.stream(StreamLabel::ShadowFading),
    );
    let a_bu = amplitude_from_pathloss_db(pl_bu + sf_db);
    let mut direct_rng = streams.stream(StreamLabel::DirectDiffuse);
    let h_bu = if los_state {
        rician_mix(los_ray(d_bu, lambda), link.k_bu_db, &mut direct_rng) * a_bu
    } else {
        complex_gaussian(&mut direct_rng) * a_bu
    };

    // RIS hops: LoS pathloss of the centre-to-centre links.
    let ris_center = &ris_spec.center;
    let (_, d_br) = distances(&placement.ap_pos, ris_center);
    let (_, d_ru) = distances(ris_center, &placement.ue_pos);
    let a_br = amplitude_from_pathloss_db(pathloss_db(variant, true, d_br, fc_ghz)?);
    let a_ru = amplitude_from_pathloss_db(pathloss_db(variant, true, d_ru, fc_ghz)?);

    let h_br = hop_vector(
        &placement.ap_pos,
        &elements,
        a_br,
        lambda,
        link.k_ris_links_db,
        &mut streams.stream(StreamLabel::ApRisDiffuse),
    );
    let h_ru = hop_vector(
        &placement.ue_pos,
        &elements,
        a_ru,
        lambda,
        link.k_ris_links_db,
        &mut streams.stream(StreamLabel::RisUeDiffuse),
    );

    Ok(ChannelRealization {
        h_br,
        h_ru,
        h_bu,
        los_state,
        seed_tag: streams.tag(),
    })
}

/// Fully deterministic nominal realization: LoS forced, shadow fading off,
/// pure-LoS RIS links. Used for offline codebook construction.
pub fn nominal_realization(
    scenario: &InfScenario,
    placement: &Placement,
    ris_spec: &RisSpec,
    fc_hz: f64,
) -> Result<ChannelRealization, ChannelError> {
    let link = LinkParams {
        fc_hz,
        k_ris_links_db: f64::INFINITY,
        k_bu_db: f64::INFINITY,
        enable_shadow_fading: false,
    };
    // No stream is ever sampled on this path; the tag records that.
    let streams = RealizationStreams::new(0, 0);
    generate_with_los_state(scenario, placement, ris_spec, &link, &streams, true)
}
