//! The E2 node: embeds the channel simulator and a live RIS phase state,
//! publishes channel indications on the subscription period, and applies
//! received phase controls, acknowledging each with the rate measured on the
//! held realization.
//!
//! Hold rule: the realization reported in indication `seq = k` stays frozen
//! until the next tick, so a control echoing `k` is rate-measured against
//! exactly the channel it was computed for. Controls echoing older
//! sequences are still applied, but measured against the currently held
//! realization and flagged in the log.

use crate::events::{now_us, Event, EventLog};
use crate::proto::{
    self, AckStatus, ControlPayload, ControlRequest, E2Message, Indication, SetupRequest,
    SetupStatus, StreamDecoder, SubscriptionResponse,
};
use orix_core::channel::{
    generate_realization, ChannelRealization, LinkParams, RealizationStreams,
};
use orix_core::optimizer::{achievable_rate, PowerConfig};
use orix_core::ris::{wrap_phase, PhaseConfig, RisSpec};
use orix_core::scenario::InfScenario;
use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Reconnect backoff cap.
const MAX_BACKOFF: Duration = Duration::from_secs(30);
const INITIAL_BACKOFF: Duration = Duration::from_millis(50);

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("setup rejected by the controller")]
    SetupRejected,
    #[error("channel generation failed: {0}")]
    Channel(#[from] orix_core::channel::ChannelError),
    #[error("shut down before completing any period")]
    Interrupted,
}

/// Static node configuration.
#[derive(Clone)]
pub struct AgentConfig {
    pub ris_id: u32,
    pub scenario: InfScenario,
    pub ris_spec: RisSpec,
    pub link: LinkParams,
    pub power: PowerConfig,
    pub seed: u64,
    /// Reuse the held realization on every tick (deterministic protocol tests).
    pub freeze_channel: bool,
    /// Stop after this many report periods; `None` runs until shutdown.
    pub max_periods: Option<u64>,
    /// Report period used if the controller's subscription never arrives.
    pub fallback_period_ms: u32,
    pub log: EventLog,
}

/// Live node state: current phase configuration, held realization, counters.
pub struct AgentState {
    pub cfg: AgentConfig,
    phase: PhaseConfig,
    seq: u64,
    realization_counter: u64,
    held: Option<(u64, ChannelRealization)>,
}

impl AgentState {
    pub fn new(cfg: AgentConfig) -> Self {
        let phase = cfg.ris_spec.zero_config();
        Self {
            cfg,
            phase,
            seq: 0,
            realization_counter: 0,
            held: None,
        }
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn current_phase(&self) -> &PhaseConfig {
        &self.phase
    }

    pub fn held_realization(&self) -> Option<&ChannelRealization> {
        self.held.as_ref().map(|(_, ch)| ch)
    }

    /// The setup message describing this node's RIS.
    pub fn setup_request(&self) -> SetupRequest {
        let spec = &self.cfg.ris_spec;
        SetupRequest {
            ris_id: self.cfg.ris_id,
            rows: spec.rows,
            cols: spec.cols,
            phase_bits: spec.phase_bits,
            element_aperture_m: spec.element_aperture_m,
            panel_width_m: f64::from(spec.cols) * spec.spacing_m,
            panel_height_m: f64::from(spec.rows) * spec.spacing_m,
            fc_hz: self.cfg.link.fc_hz,
        }
    }

    /// Advance the sequence counter, draw the next channel state (unless
    /// frozen), and emit the indication carrying it.
    pub fn tick(&mut self) -> Result<Indication, AgentError> {
        self.seq += 1;
        let reuse = self.cfg.freeze_channel && self.held.is_some();
        let ch = if reuse {
            self.held.take().unwrap().1
        } else {
            let streams = RealizationStreams::new(self.cfg.seed, self.realization_counter);
            self.realization_counter += 1;
            generate_realization(
                &self.cfg.scenario,
                self.cfg.scenario.placement(),
                &self.cfg.ris_spec,
                &self.cfg.link,
                &streams,
            )?
        };
        let ind = Indication {
            ris_id: self.cfg.ris_id,
            seq: self.seq,
            h_br: ch.h_br.clone(),
            h_ru: ch.h_ru.clone(),
            h_bu: ch.h_bu,
            los: ch.los_state,
            timestamp_us: now_us(),
        };
        self.held = Some((self.seq, ch));
        Ok(ind)
    }

    /// Validate and apply a phase control, returning the ack to send. The
    /// phase state is only replaced on status ok; the applied rate is
    /// measured on the held realization.
    pub fn apply_control(&mut self, ctl: &ControlRequest) -> proto::ControlAck {
        let reject = |status: AckStatus| proto::ControlAck {
            ris_id: self.cfg.ris_id,
            seq_echo: ctl.seq_echo,
            status,
            applied_rate_bps_hz: 0.0,
        };
        if ctl.ris_id != self.cfg.ris_id {
            return reject(AckStatus::UnknownRis);
        }
        let spec = &self.cfg.ris_spec;
        let n = spec.n_elements();
        let config = match &ctl.payload {
            ControlPayload::DiscreteIndices(indices) => {
                if spec.is_continuous() {
                    return reject(AckStatus::UnsupportedMode);
                }
                if indices.len() != n {
                    return reject(AckStatus::BadLength);
                }
                let levels = 1u32 << spec.phase_bits;
                if indices.iter().any(|&ix| u32::from(ix) >= levels) {
                    return reject(AckStatus::BadLength);
                }
                PhaseConfig::Discrete {
                    bits: spec.phase_bits,
                    indices: indices.clone(),
                }
            }
            ControlPayload::ContinuousRadians(values) => {
                if !spec.is_continuous() {
                    return reject(AckStatus::UnsupportedMode);
                }
                if values.len() != n {
                    return reject(AckStatus::BadLength);
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return reject(AckStatus::BadLength);
                }
                PhaseConfig::Continuous(values.iter().map(|&v| wrap_phase(v)).collect())
            }
            ControlPayload::BeamDirection { .. } => {
                return reject(AckStatus::UnsupportedMode);
            }
        };

        self.phase = config;
        let applied_rate = match &self.held {
            Some((held_seq, ch)) => {
                if *held_seq != ctl.seq_echo {
                    self.cfg.log.event(
                        self.cfg.ris_id,
                        Event::Fault,
                        ctl.seq_echo,
                        &format!("stale control (held seq {held_seq}); measured on current hold"),
                    );
                }
                achievable_rate(ch, &self.phase, &spec.amp, &self.cfg.power).unwrap_or(0.0)
            }
            None => {
                self.cfg.log.event(
                    self.cfg.ris_id,
                    Event::Fault,
                    ctl.seq_echo,
                    "control before first indication; rate reported as 0",
                );
                0.0
            }
        };
        proto::ControlAck {
            ris_id: self.cfg.ris_id,
            seq_echo: ctl.seq_echo,
            status: AckStatus::Ok,
            applied_rate_bps_hz: applied_rate,
        }
    }
}

/// Counters of one agent run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AgentStats {
    pub indications_sent: u64,
    pub controls_received: u64,
    pub acks_sent: u64,
    pub reconnects: u64,
}

pub struct AgentHandle {
    shutdown: Arc<AtomicBool>,
    join: JoinHandle<Result<AgentStats, AgentError>>,
}

impl AgentHandle {
    pub fn shutdown_flag(&self) -> Arc<AtomicBool> {
        self.shutdown.clone()
    }

    pub fn stop(self) -> Result<AgentStats, AgentError> {
        self.shutdown.store(true, Ordering::SeqCst);
        self.join()
    }

    pub fn join(self) -> Result<AgentStats, AgentError> {
        self.join
            .join()
            .unwrap_or(Err(AgentError::Interrupted))
    }
}

/// Run the node loop on its own thread: connect (with capped exponential
/// backoff), handshake, then alternate periodic indications with control
/// processing until `max_periods` (or shutdown). Node state survives
/// reconnects.
pub fn run_agent(endpoint: String, state: AgentState) -> AgentHandle {
    let shutdown = Arc::new(AtomicBool::new(false));
    let flag = shutdown.clone();
    let join = std::thread::spawn(move || agent_main(&endpoint, state, &flag));
    AgentHandle { shutdown, join }
}

fn connect_with_backoff(
    endpoint: &str,
    shutdown: &AtomicBool,
) -> Result<TcpStream, AgentError> {
    let mut backoff = INITIAL_BACKOFF;
    loop {
        if shutdown.load(Ordering::SeqCst) {
            return Err(AgentError::Interrupted);
        }
        match TcpStream::connect(endpoint) {
            Ok(stream) => return Ok(stream),
            Err(_) => {
                std::thread::sleep(backoff);
                backoff = (backoff * 2).min(MAX_BACKOFF);
            }
        }
    }
}

fn read_one(
    stream: &mut TcpStream,
    decoder: &mut StreamDecoder,
    deadline: Option<Instant>,
    shutdown: &AtomicBool,
) -> std::io::Result<Option<E2Message>> {
    loop {
        if let Some(msg) = decoder
            .next_message()
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?
        {
            return Ok(Some(msg));
        }
        if shutdown.load(Ordering::SeqCst) {
            return Ok(None);
        }
        if let Some(d) = deadline {
            if Instant::now() >= d {
                return Ok(None);
            }
        }
        let mut buf = [0u8; 64 * 1024];
        match stream.read(&mut buf) {
            Ok(0) => return Err(std::io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => decoder.feed(&buf[..n]),
            Err(e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                continue;
            }
            Err(e) => return Err(e),
        }
    }
}

fn send(stream: &mut TcpStream, msg: &E2Message) -> std::io::Result<()> {
    let bytes = proto::encode(msg)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
    stream.write_all(&bytes)
}

fn agent_main(
    endpoint: &str,
    mut state: AgentState,
    shutdown: &AtomicBool,
) -> Result<AgentStats, AgentError> {
    let mut stats = AgentStats::default();
    let log = state.cfg.log.clone();
    let ris_id = state.cfg.ris_id;

    'reconnect: loop {
        if shutdown.load(Ordering::SeqCst) {
            return Ok(stats);
        }
        let mut stream = connect_with_backoff(endpoint, shutdown)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(Duration::from_millis(20)))?;
        let mut decoder = StreamDecoder::new();

        // Setup.
        send(&mut stream, &E2Message::SetupRequest(state.setup_request()))?;
        let setup_ok = loop {
            match read_one(&mut stream, &mut decoder, None, shutdown) {
                Ok(Some(E2Message::SetupResponse(resp))) => {
                    break resp.status == SetupStatus::Ok
                }
                Ok(Some(_)) => continue,
                Ok(None) => return Ok(stats),
                Err(_) => {
                    stats.reconnects += 1;
                    continue 'reconnect;
                }
            }
        };
        log.event(ris_id, Event::Setup, 0, &format!("accepted={setup_ok}"));
        if !setup_ok {
            return Err(AgentError::SetupRejected);
        }

        // Subscription: the controller chooses the report period.
        let period_ms = loop {
            match read_one(&mut stream, &mut decoder, None, shutdown) {
                Ok(Some(E2Message::SubscriptionRequest(sub))) => {
                    send(
                        &mut stream,
                        &E2Message::SubscriptionResponse(SubscriptionResponse {
                            ris_id,
                            status: SetupStatus::Ok,
                        }),
                    )?;
                    break sub.report_period_ms.max(1);
                }
                Ok(Some(_)) => continue,
                Ok(None) => return Ok(stats),
                Err(_) => {
                    stats.reconnects += 1;
                    continue 'reconnect;
                }
            }
        };
        log.event(ris_id, Event::Sub, 0, &format!("period_ms={period_ms}"));
        let _ = state.cfg.fallback_period_ms; // period always negotiated above
        let period = Duration::from_millis(u64::from(period_ms));

        // Steady state: tick on each period boundary, process controls between.
        loop {
            if shutdown.load(Ordering::SeqCst) {
                return Ok(stats);
            }
            if let Some(max) = state.cfg.max_periods {
                if stats.indications_sent >= max {
                    // Grace window for an in-flight control, then clean close.
                    let deadline = Instant::now() + period;
                    while let Ok(Some(msg)) =
                        read_one(&mut stream, &mut decoder, Some(deadline), shutdown)
                    {
                        if let E2Message::ControlRequest(ctl) = msg {
                            stats.controls_received += 1;
                            let ack = state.apply_control(&ctl);
                            log.event(
                                ris_id,
                                Event::Ack,
                                ack.seq_echo,
                                &format!("status={}", ack.status as u8),
                            );
                            send(&mut stream, &E2Message::ControlAck(ack))?;
                            stats.acks_sent += 1;
                        }
                    }
                    return Ok(stats);
                }
            }

            let ind = state.tick()?;
            let seq = ind.seq;
            if send(&mut stream, &E2Message::Indication(ind)).is_err() {
                stats.reconnects += 1;
                continue 'reconnect;
            }
            stats.indications_sent += 1;
            log.event(ris_id, Event::Ind, seq, "sent");

            let deadline = Instant::now() + period;
            loop {
                match read_one(&mut stream, &mut decoder, Some(deadline), shutdown) {
                    Ok(Some(E2Message::ControlRequest(ctl))) => {
                        stats.controls_received += 1;
                        let ack = state.apply_control(&ctl);
                        log.event(
                            ris_id,
                            Event::Ack,
                            ack.seq_echo,
                            &format!(
                                "status={} applied_rate={}",
                                ack.status as u8, ack.applied_rate_bps_hz
                            ),
                        );
                        if send(&mut stream, &E2Message::ControlAck(ack)).is_err() {
                            stats.reconnects += 1;
                            continue 'reconnect;
                        }
                        stats.acks_sent += 1;
                    }
                    Ok(Some(other)) => {
                        log.event(
                            ris_id,
                            Event::Fault,
                            0,
                            &format!("unexpected {} ignored", other.type_name()),
                        );
                    }
                    Ok(None) => break, // period boundary or shutdown
                    Err(_) => {
                        stats.reconnects += 1;
                        continue 'reconnect;
                    }
                }
            }
        }
    }
}
