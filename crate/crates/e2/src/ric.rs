//! Near-real-time controller: accepts node connections, runs the
//! setup/subscription handshake, and dispatches indications to the xApp
//! selected for each RIS, sending back per-element phase controls.
//!
//! xApps run in-process as registered handlers. Each session owns its own
//! xApp instance and state; the registry itself is read-only, so sessions
//! never share mutable state.

use crate::events::{Event, EventLog};
use crate::proto::{
    self, AckStatus, ControlPayload, ControlRequest, E2Message, Indication,
    SetupRequest, SetupResponse, SetupStatus, StreamDecoder, SubscriptionRequest,
    SubscriptionResponse,
};
use orix_core::channel::{ChannelRealization, SeedTag, SPEED_OF_LIGHT_M_S};
use orix_core::geom::Point3;
use orix_core::optimizer::{
    achievable_rate, optimize_iterative, optimize_quantized, select_codebook_entry, Codebook,
    PowerConfig,
};
use orix_core::ris::{AmplitudeParams, PhaseConfig, RisFingerprint, RisSpec};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RicError {
    #[error("xApp {0:?} is already registered")]
    DuplicateXapp(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// RIS parameters negotiated from the node's SetupRequest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionSpec {
    pub ris_id: u32,
    pub rows: u16,
    pub cols: u16,
    pub phase_bits: u8,
    pub element_aperture_m: f64,
    pub fc_hz: f64,
}

impl SessionSpec {
    pub fn from_setup(req: &SetupRequest) -> Self {
        Self {
            ris_id: req.ris_id,
            rows: req.rows,
            cols: req.cols,
            phase_bits: req.phase_bits,
            element_aperture_m: req.element_aperture_m,
            fc_hz: req.fc_hz,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    /// RIS spec the optimizers run against. The wire does not carry panel
    /// placement, and the optimizers never use it, so the geometry fields
    /// are fixed placeholders.
    pub fn working_ris_spec(&self, amp: AmplitudeParams) -> Result<RisSpec, orix_core::ris::RisError> {
        let spacing = if self.fc_hz > 0.0 && self.fc_hz.is_finite() {
            SPEED_OF_LIGHT_M_S / self.fc_hz / 2.0
        } else {
            0.5
        };
        RisSpec::new(
            self.rows,
            self.cols,
            self.phase_bits,
            spacing,
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
            self.element_aperture_m,
            amp,
        )
    }
}

/// Decision logic invoked once per (non-decimated) indication.
pub trait Xapp: Send {
    /// Compute a phase configuration for the reported channel, or `None` for
    /// monitor-only behaviour. An `Err` is logged as a session warning and
    /// produces no control.
    fn on_indication(
        &mut self,
        ch: &ChannelRealization,
        spec: &SessionSpec,
        ris_spec: &RisSpec,
    ) -> Result<Option<PhaseConfig>, String>;
}

type XappFactory = Arc<dyn Fn() -> Box<dyn Xapp> + Send + Sync>;

/// A named, registrable xApp.
#[derive(Clone)]
pub struct XappDescriptor {
    pub name: String,
    /// Compute a control on every k-th indication only (1 = every one).
    pub decimation: u32,
    /// When set, dispatch requires the session's fingerprint to match.
    pub required_fingerprint: Option<RisFingerprint>,
    factory: XappFactory,
}

impl XappDescriptor {
    pub fn new(
        name: impl Into<String>,
        factory: impl Fn() -> Box<dyn Xapp> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            decimation: 1,
            required_fingerprint: None,
            factory: Arc::new(factory),
        }
    }

    pub fn with_decimation(mut self, decimation: u32) -> Self {
        self.decimation = decimation.max(1);
        self
    }

    pub fn with_required_fingerprint(mut self, fp: RisFingerprint) -> Self {
        self.required_fingerprint = Some(fp);
        self
    }

    pub fn instantiate(&self) -> Box<dyn Xapp> {
        (self.factory)()
    }
}

impl std::fmt::Debug for XappDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("XappDescriptor")
            .field("name", &self.name)
            .field("decimation", &self.decimation)
            .field("required_fingerprint", &self.required_fingerprint)
            .finish()
    }
}

/// Ordered registry of xApps; names are unique, registration order is kept.
#[derive(Default, Clone)]
pub struct XappRegistry {
    entries: Vec<XappDescriptor>,
}

impl XappRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, descriptor: XappDescriptor) -> Result<(), RicError> {
        if self.entries.iter().any(|d| d.name == descriptor.name) {
            return Err(RicError::DuplicateXapp(descriptor.name));
        }
        self.entries.push(descriptor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&XappDescriptor> {
        self.entries.iter().find(|d| d.name == name)
    }

    pub fn list(&self) -> Vec<&str> {
        self.entries.iter().map(|d| d.name.as_str()).collect()
    }
}

// ---------------------------------------------------------------------------
// Built-in xApps
// ---------------------------------------------------------------------------

struct MonitorXapp;

impl Xapp for MonitorXapp {
    fn on_indication(
        &mut self,
        _ch: &ChannelRealization,
        _spec: &SessionSpec,
        _ris_spec: &RisSpec,
    ) -> Result<Option<PhaseConfig>, String> {
        Ok(None)
    }
}

/// Observe-only xApp: advances session state, never emits a control.
pub fn xapp_monitor() -> XappDescriptor {
    XappDescriptor::new("monitor", || Box::new(MonitorXapp))
}

struct QuantizedXapp;

impl Xapp for QuantizedXapp {
    fn on_indication(
        &mut self,
        ch: &ChannelRealization,
        _spec: &SessionSpec,
        ris_spec: &RisSpec,
    ) -> Result<Option<PhaseConfig>, String> {
        optimize_quantized(ch, ris_spec)
            .map(Some)
            .map_err(|e| e.to_string())
    }
}

/// Ideal-phase alignment with nearest-level mapping; the only built-in that
/// also serves continuous-mode sessions.
pub fn xapp_quantized() -> XappDescriptor {
    XappDescriptor::new("quantized", || Box::new(QuantizedXapp))
}

struct IterativeXapp {
    power: PowerConfig,
}

impl Xapp for IterativeXapp {
    fn on_indication(
        &mut self,
        ch: &ChannelRealization,
        _spec: &SessionSpec,
        ris_spec: &RisSpec,
    ) -> Result<Option<PhaseConfig>, String> {
        if ris_spec.is_continuous() {
            return Err("iterative method requires a discrete phase set".into());
        }
        optimize_iterative(ch, ris_spec, &self.power, &ris_spec.zero_config(), 1)
            .map(Some)
            .map_err(|e| e.to_string())
    }
}

/// Per-element sweep initialized from the all-zeros configuration.
pub fn xapp_iterative(power: PowerConfig) -> XappDescriptor {
    XappDescriptor::new("iterative", move || {
        Box::new(IterativeXapp { power })
    })
}

struct CodebookXapp {
    codebook: Codebook,
    power: PowerConfig,
}

impl Xapp for CodebookXapp {
    fn on_indication(
        &mut self,
        ch: &ChannelRealization,
        _spec: &SessionSpec,
        ris_spec: &RisSpec,
    ) -> Result<Option<PhaseConfig>, String> {
        select_codebook_entry(ch, &self.codebook, ris_spec, &self.power)
            .map(|(_, cfg, _)| Some(cfg))
            .map_err(|e| e.to_string())
    }
}

/// Online selection from an offline library; refuses sessions whose
/// fingerprint differs from the one the library was built for.
pub fn xapp_codebook(codebook: Codebook, power: PowerConfig) -> XappDescriptor {
    let fp = codebook.fingerprint;
    XappDescriptor::new("codebook", move || {
        Box::new(CodebookXapp {
            codebook: codebook.clone(),
            power,
        })
    })
    .with_required_fingerprint(fp)
}

// ---------------------------------------------------------------------------
// Session state and indication dispatch
// ---------------------------------------------------------------------------

/// One record of the closed loop: a control decision and the ack it drew.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopRecord {
    pub ris_id: u32,
    pub seq: u64,
    pub xapp: String,
    pub predicted_rate: f64,
    pub applied_rate: Option<f64>,
    pub ack_status: Option<u8>,
}

pub type LoopRecords = Arc<Mutex<Vec<LoopRecord>>>;

/// Per-connection controller state for one RIS.
pub struct RicSession {
    pub spec: SessionSpec,
    pub last_seq: u64,
    pub xapp_name: Option<String>,
    xapp: Option<Box<dyn Xapp>>,
    decimation: u32,
    required_fingerprint: Option<RisFingerprint>,
    indication_count: u64,
    working_spec: Option<RisSpec>,
}

/// A session-fatal condition; the connection is closed, others are untouched.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionFault {
    #[error("indication ris_id {got} does not match session ris_id {expected}")]
    RisIdMismatch { got: u32, expected: u32 },
    #[error("indication carries {got} elements, session negotiated {expected}")]
    SpecMismatch { got: usize, expected: usize },
}

impl RicSession {
    pub fn new(spec: SessionSpec, descriptor: Option<&XappDescriptor>, amp: AmplitudeParams) -> Self {
        let working_spec = spec.working_ris_spec(amp).ok();
        Self {
            spec,
            last_seq: 0,
            xapp_name: descriptor.map(|d| d.name.clone()),
            xapp: descriptor.map(|d| d.instantiate()),
            decimation: descriptor.map(|d| d.decimation).unwrap_or(1),
            required_fingerprint: descriptor.and_then(|d| d.required_fingerprint),
            indication_count: 0,
            working_spec,
        }
    }

    /// Dispatch one indication. Returns the control to send (if any) along
    /// with the rate the controller predicts for it. Stale sequence numbers
    /// drop the indication with a logged warning.
    pub fn handle_indication(
        &mut self,
        ind: &Indication,
        power: &PowerConfig,
        log: &EventLog,
    ) -> Result<Option<(ControlRequest, f64)>, SessionFault> {
        if ind.ris_id != self.spec.ris_id {
            return Err(SessionFault::RisIdMismatch {
                got: ind.ris_id,
                expected: self.spec.ris_id,
            });
        }
        if ind.n_elements() != self.spec.n_elements() || ind.h_ru.len() != ind.h_br.len() {
            return Err(SessionFault::SpecMismatch {
                got: ind.n_elements(),
                expected: self.spec.n_elements(),
            });
        }
        if ind.seq <= self.last_seq {
            log.event(
                self.spec.ris_id,
                Event::Fault,
                ind.seq,
                &format!("stale indication dropped (last seq {})", self.last_seq),
            );
            return Ok(None);
        }
        self.last_seq = ind.seq;
        self.indication_count += 1;
        log.event(
            self.spec.ris_id,
            Event::Ind,
            ind.seq,
            &format!("n={} los={}", ind.n_elements(), u8::from(ind.los)),
        );

        let Some(xapp) = self.xapp.as_mut() else {
            return Ok(None);
        };
        if self.indication_count % u64::from(self.decimation) != 0 {
            return Ok(None);
        }
        let Some(working_spec) = self.working_spec.as_ref() else {
            log.event(
                self.spec.ris_id,
                Event::Fault,
                ind.seq,
                "session spec rejected by the RIS model; monitoring only",
            );
            return Ok(None);
        };
        if let Some(required) = &self.required_fingerprint {
            let session_fp = working_spec.fingerprint();
            if *required != session_fp {
                log.event(
                    self.spec.ris_id,
                    Event::Fault,
                    ind.seq,
                    &format!("fingerprint mismatch: xApp needs {required}, session has {session_fp}"),
                );
                return Ok(None);
            }
        }

        let ch = match ChannelRealization::from_parts(
            ind.h_br.clone(),
            ind.h_ru.clone(),
            ind.h_bu,
            ind.los,
            SeedTag {
                master_seed: 0,
                realization_index: ind.seq,
            },
        ) {
            Ok(ch) => ch,
            Err(e) => {
                log.event(self.spec.ris_id, Event::Fault, ind.seq, &e.to_string());
                return Ok(None);
            }
        };

        let config = match xapp.on_indication(&ch, &self.spec, working_spec) {
            Ok(Some(cfg)) => cfg,
            Ok(None) => return Ok(None),
            Err(warning) => {
                log.event(self.spec.ris_id, Event::Fault, ind.seq, &warning);
                return Ok(None);
            }
        };

        if config.len() != self.spec.n_elements() {
            log.event(
                self.spec.ris_id,
                Event::Fault,
                ind.seq,
                "xApp produced a config of the wrong length",
            );
            return Ok(None);
        }
        let predicted = match achievable_rate(&ch, &config, &working_spec.amp, power) {
            Ok(r) => r,
            Err(e) => {
                log.event(self.spec.ris_id, Event::Fault, ind.seq, &e.to_string());
                return Ok(None);
            }
        };
        let payload = match config {
            PhaseConfig::Discrete { indices, .. } => ControlPayload::DiscreteIndices(indices),
            PhaseConfig::Continuous(values) => ControlPayload::ContinuousRadians(values),
        };
        log.event(
            self.spec.ris_id,
            Event::Ctl,
            ind.seq,
            &format!("predicted_rate={predicted}"),
        );
        Ok(Some((
            ControlRequest {
                ris_id: self.spec.ris_id,
                seq_echo: ind.seq,
                payload,
            },
            predicted,
        )))
    }
}

// ---------------------------------------------------------------------------
// TCP service
// ---------------------------------------------------------------------------

/// Controller-wide configuration shared by every session.
#[derive(Clone)]
pub struct RicConfig {
    /// Amplitude model assumed for rate predictions (not carried on the wire).
    pub amp: AmplitudeParams,
    pub power: PowerConfig,
    /// Report period requested from every node at subscription time.
    pub report_period_ms: u32,
    pub log: EventLog,
    /// Optional sink receiving one record per control exchange.
    pub records: Option<LoopRecords>,
}

/// Running controller service.
pub struct RicHandle {
    local_addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
    sessions: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

impl RicHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// Signal shutdown and wait for the accept loop and every session to
    /// finish their in-flight exchanges.
    pub fn shutdown(mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
        let handles: Vec<_> = self.sessions.lock().unwrap().drain(..).collect();
        for h in handles {
            let _ = h.join();
        }
    }

    pub fn shutdown_flag(&self) -> Arc<AtomicBool> {
        self.shutdown.clone()
    }
}

/// Association of each RIS to its active xApp; switchable while serving.
pub type Policy = Arc<Mutex<HashMap<u32, String>>>;

pub fn policy_from(map: HashMap<u32, String>) -> Policy {
    Arc::new(Mutex::new(map))
}

/// Bind and serve the controller. Each connection is handled on its own
/// thread: setup/subscription handshake, then a strictly serial
/// decode -> dispatch -> respond loop per session.
pub fn serve(
    endpoint: &str,
    registry: XappRegistry,
    policy: Policy,
    config: RicConfig,
) -> Result<RicHandle, RicError> {
    let listener = TcpListener::bind(endpoint)?;
    listener.set_nonblocking(true)?;
    let local_addr = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let sessions: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::new(Mutex::new(Vec::new()));

    let accept_shutdown = shutdown.clone();
    let accept_sessions = sessions.clone();
    let accept_thread = std::thread::spawn(move || {
        while !accept_shutdown.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _peer)) => {
                    let registry = registry.clone();
                    let policy = policy.clone();
                    let config = config.clone();
                    let session_shutdown = accept_shutdown.clone();
                    let handle = std::thread::spawn(move || {
                        let _ = run_session(stream, &registry, &policy, &config, &session_shutdown);
                    });
                    accept_sessions.lock().unwrap().push(handle);
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(_) => break,
            }
        }
    });

    Ok(RicHandle {
        local_addr,
        shutdown,
        accept_thread: Some(accept_thread),
        sessions,
    })
}

fn send_msg(stream: &mut TcpStream, msg: &E2Message) -> std::io::Result<()> {
    let bytes = proto::encode(msg)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
    stream.write_all(&bytes)
}

/// Read until one complete message is available or the timeout/shutdown hits.
fn read_msg(
    stream: &mut TcpStream,
    decoder: &mut StreamDecoder,
    shutdown: &AtomicBool,
    overall_timeout: Option<Duration>,
) -> std::io::Result<Option<E2Message>> {
    let start = std::time::Instant::now();
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
        if let Some(t) = overall_timeout {
            if start.elapsed() >= t {
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

fn run_session(
    mut stream: TcpStream,
    registry: &XappRegistry,
    policy: &Policy,
    config: &RicConfig,
    shutdown: &AtomicBool,
) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(Duration::from_millis(50)))?;
    let mut decoder = StreamDecoder::new();
    let log = &config.log;

    // Handshake: SetupRequest -> SetupResponse.
    let setup = loop {
        match read_msg(&mut stream, &mut decoder, shutdown, None)? {
            Some(E2Message::SetupRequest(req)) => break req,
            Some(other) => {
                log.event(0, Event::Fault, 0, &format!("expected SetupRequest, got {}", other.type_name()));
                return Ok(());
            }
            None => return Ok(()), // shutdown before handshake
        }
    };
    let ris_id = setup.ris_id;
    let acceptable = setup.rows > 0 && setup.cols > 0;
    send_msg(
        &mut stream,
        &E2Message::SetupResponse(SetupResponse {
            ris_id,
            status: if acceptable {
                SetupStatus::Ok
            } else {
                SetupStatus::Rejected
            },
        }),
    )?;
    log.event(
        ris_id,
        Event::Setup,
        0,
        &format!(
            "rows={} cols={} b={} accepted={}",
            setup.rows, setup.cols, setup.phase_bits, acceptable
        ),
    );
    if !acceptable {
        return Ok(());
    }

    // Subscription: the controller asks for periodic reports.
    send_msg(
        &mut stream,
        &E2Message::SubscriptionRequest(SubscriptionRequest {
            ris_id,
            report_period_ms: config.report_period_ms,
        }),
    )?;
    match read_msg(&mut stream, &mut decoder, shutdown, None)? {
        Some(E2Message::SubscriptionResponse(SubscriptionResponse { status, .. }))
            if status == SetupStatus::Ok =>
        {
            log.event(ris_id, Event::Sub, 0, &format!("period_ms={}", config.report_period_ms));
        }
        Some(_) | None => {
            log.event(ris_id, Event::Fault, 0, "subscription not established");
            return Ok(());
        }
    }

    let xapp_name = policy.lock().unwrap().get(&ris_id).cloned();
    let descriptor = xapp_name.as_deref().and_then(|n| registry.get(n));
    if let Some(name) = &xapp_name {
        if descriptor.is_none() {
            log.event(ris_id, Event::Fault, 0, &format!("unknown xApp {name:?}; monitoring only"));
        }
    }
    let mut session = RicSession::new(SessionSpec::from_setup(&setup), descriptor, config.amp);
    let mut outstanding: Vec<u64> = Vec::new();

    loop {
        if shutdown.load(Ordering::SeqCst) && outstanding.is_empty() {
            return Ok(());
        }
        let msg = match read_msg(
            &mut stream,
            &mut decoder,
            &AtomicBool::new(false),
            Some(Duration::from_millis(100)),
        ) {
            Ok(Some(msg)) => msg,
            Ok(None) => continue,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => {
                log.event(ris_id, Event::Fault, 0, &e.to_string());
                return Ok(());
            }
        };
        match msg {
            E2Message::Indication(ind) => {
                if shutdown.load(Ordering::SeqCst) {
                    continue; // draining: no new control exchanges
                }
                match session.handle_indication(&ind, &config.power, log) {
                    Ok(Some((ctl, predicted))) => {
                        let seq = ctl.seq_echo;
                        send_msg(&mut stream, &E2Message::ControlRequest(ctl))?;
                        outstanding.push(seq);
                        if let Some(records) = &config.records {
                            records.lock().unwrap().push(LoopRecord {
                                ris_id,
                                seq,
                                xapp: session.xapp_name.clone().unwrap_or_default(),
                                predicted_rate: predicted,
                                applied_rate: None,
                                ack_status: None,
                            });
                        }
                    }
                    Ok(None) => {}
                    Err(fault) => {
                        log.event(ris_id, Event::Fault, ind.seq, &fault.to_string());
                        return Ok(());
                    }
                }
            }
            E2Message::ControlAck(ack) => {
                outstanding.retain(|&s| s != ack.seq_echo);
                log.event(
                    ris_id,
                    Event::Ack,
                    ack.seq_echo,
                    &format!("status={} applied_rate={}", ack.status as u8, ack.applied_rate_bps_hz),
                );
                if let Some(records) = &config.records {
                    let mut records = records.lock().unwrap();
                    if let Some(rec) = records
                        .iter_mut()
                        .rev()
                        .find(|r| r.ris_id == ris_id && r.seq == ack.seq_echo)
                    {
                        rec.applied_rate = Some(ack.applied_rate_bps_hz);
                        rec.ack_status = Some(ack.status as u8);
                    }
                }
                if ack.status != AckStatus::Ok {
                    log.event(
                        ris_id,
                        Event::Fault,
                        ack.seq_echo,
                        &format!("control rejected with status {}", ack.status as u8),
                    );
                }
            }
            other => {
                log.event(
                    ris_id,
                    Event::Fault,
                    0,
                    &format!("unexpected {} in steady state", other.type_name()),
                );
                return Ok(());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use orix_core::Complex64;

    fn spec() -> SessionSpec {
        SessionSpec {
            ris_id: 1,
            rows: 1,
            cols: 2,
            phase_bits: 1,
            element_aperture_m: 0.005,
            fc_hz: 28e9,
        }
    }

    fn indication(seq: u64, n: usize) -> Indication {
        Indication {
            ris_id: 1,
            seq,
            h_br: vec![Complex64::new(1.0, 0.0); n],
            h_ru: vec![Complex64::new(1.0, 0.0); n],
            h_bu: Complex64::new(1.0, 0.0),
            los: true,
            timestamp_us: 0,
        }
    }

    const POWER: PowerConfig = PowerConfig {
        pt_dbm: 10.0,
        pn_dbm: -88.0,
    };

    #[test]
    fn registry_preserves_order_and_rejects_duplicates() {
        let mut reg = XappRegistry::new();
        reg.register(xapp_quantized()).unwrap();
        reg.register(xapp_iterative(POWER)).unwrap();
        reg.register(xapp_monitor()).unwrap();
        assert_eq!(reg.list(), vec!["quantized", "iterative", "monitor"]);
        assert!(matches!(
            reg.register(xapp_quantized()),
            Err(RicError::DuplicateXapp(_))
        ));
    }

    #[test]
    fn quantized_xapp_matches_direct_optimizer_call() {
        let descriptor = xapp_quantized();
        let mut session = RicSession::new(spec(), Some(&descriptor), AmplitudeParams::ideal());
        let log = EventLog::collecting();
        let ind = indication(1, 2);
        let (ctl, _) = session
            .handle_indication(&ind, &POWER, &log)
            .unwrap()
            .expect("control expected");
        assert_eq!(ctl.seq_echo, 1);
        let ch = ChannelRealization::from_parts(
            ind.h_br.clone(),
            ind.h_ru.clone(),
            ind.h_bu,
            true,
            SeedTag {
                master_seed: 0,
                realization_index: 0,
            },
        )
        .unwrap();
        let ris_spec = spec().working_ris_spec(AmplitudeParams::ideal()).unwrap();
        let direct = optimize_quantized(&ch, &ris_spec).unwrap();
        match (&ctl.payload, &direct) {
            (ControlPayload::DiscreteIndices(got), PhaseConfig::Discrete { indices, .. }) => {
                assert_eq!(got, indices);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn monitor_xapp_advances_seq_without_control() {
        let descriptor = xapp_monitor();
        let mut session = RicSession::new(spec(), Some(&descriptor), AmplitudeParams::ideal());
        let log = EventLog::collecting();
        assert!(session
            .handle_indication(&indication(1, 2), &POWER, &log)
            .unwrap()
            .is_none());
        assert_eq!(session.last_seq, 1);
    }

    #[test]
    fn stale_sequence_dropped_with_warning() {
        let descriptor = xapp_quantized();
        let mut session = RicSession::new(spec(), Some(&descriptor), AmplitudeParams::ideal());
        let log = EventLog::collecting();
        assert!(session
            .handle_indication(&indication(2, 2), &POWER, &log)
            .unwrap()
            .is_some());
        assert!(session
            .handle_indication(&indication(2, 2), &POWER, &log)
            .unwrap()
            .is_none());
        assert!(log.lines().iter().any(|l| l.contains("ev=fault") && l.contains("stale")));
    }

    #[test]
    fn wrong_element_count_is_a_session_fault() {
        let descriptor = xapp_quantized();
        let mut session = RicSession::new(spec(), Some(&descriptor), AmplitudeParams::ideal());
        let log = EventLog::collecting();
        let err = session
            .handle_indication(&indication(1, 3), &POWER, &log)
            .unwrap_err();
        assert!(matches!(err, SessionFault::SpecMismatch { got: 3, expected: 2 }));
    }

    #[test]
    fn iterative_xapp_solves_tiny_instance_optimally() {
        let descriptor = xapp_iterative(POWER);
        let one_element = SessionSpec {
            rows: 1,
            cols: 1,
            ..spec()
        };
        let mut session =
            RicSession::new(one_element, Some(&descriptor), AmplitudeParams::ideal());
        let log = EventLog::collecting();
        let mut ind = indication(1, 1);
        ind.h_br = vec![Complex64::new(-1.0, 0.0)];
        let (ctl, _) = session
            .handle_indication(&ind, &POWER, &log)
            .unwrap()
            .expect("control expected");
        // Cascade is -1, direct is +1: phase pi (index 1) flips the sign.
        assert_eq!(ctl.payload, ControlPayload::DiscreteIndices(vec![1]));
    }

    #[test]
    fn codebook_xapp_rejects_fingerprint_mismatch() {
        let ris_spec = spec().working_ris_spec(AmplitudeParams::ideal()).unwrap();
        let codebook = Codebook {
            entries: vec![orix_core::optimizer::CodebookEntry {
                label: "p1".into(),
                config: PhaseConfig::Discrete {
                    bits: 1,
                    indices: vec![0, 0],
                },
            }],
            fingerprint: RisFingerprint {
                n_elements: 4, // session has 2
                ..ris_spec.fingerprint()
            },
        };
        let descriptor = xapp_codebook(codebook, POWER);
        let mut session = RicSession::new(spec(), Some(&descriptor), AmplitudeParams::ideal());
        let log = EventLog::collecting();
        assert!(session
            .handle_indication(&indication(1, 2), &POWER, &log)
            .unwrap()
            .is_none());
        assert!(log
            .lines()
            .iter()
            .any(|l| l.contains("fingerprint mismatch")));
    }

    #[test]
    fn codebook_xapp_emits_a_library_entry() {
        let ris_spec = spec().working_ris_spec(AmplitudeParams::ideal()).unwrap();
        let entries = vec![
            orix_core::optimizer::CodebookEntry {
                label: "p1".into(),
                config: PhaseConfig::Discrete {
                    bits: 1,
                    indices: vec![0, 1],
                },
            },
            orix_core::optimizer::CodebookEntry {
                label: "p2".into(),
                config: PhaseConfig::Discrete {
                    bits: 1,
                    indices: vec![1, 1],
                },
            },
        ];
        let codebook = Codebook {
            entries: entries.clone(),
            fingerprint: ris_spec.fingerprint(),
        };
        let descriptor = xapp_codebook(codebook, POWER);
        let mut session = RicSession::new(spec(), Some(&descriptor), AmplitudeParams::ideal());
        let log = EventLog::collecting();
        let (ctl, _) = session
            .handle_indication(&indication(1, 2), &POWER, &log)
            .unwrap()
            .expect("control expected");
        let emitted = match ctl.payload {
            ControlPayload::DiscreteIndices(ix) => ix,
            other => panic!("unexpected {other:?}"),
        };
        assert!(entries.iter().any(|e| match &e.config {
            PhaseConfig::Discrete { indices, .. } => *indices == emitted,
            _ => false,
        }));
    }

    #[test]
    fn decimation_skips_indications() {
        let descriptor = xapp_quantized().with_decimation(3);
        let mut session = RicSession::new(spec(), Some(&descriptor), AmplitudeParams::ideal());
        let log = EventLog::collecting();
        let mut controls = 0;
        for seq in 1..=6u64 {
            if session
                .handle_indication(&indication(seq, 2), &POWER, &log)
                .unwrap()
                .is_some()
            {
                controls += 1;
            }
        }
        assert_eq!(controls, 2);
    }
}
