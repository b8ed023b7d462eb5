//! Scenario configuration and world construction.
//!
//! Every parse or validation error carries the 1-based line of the
//! offending value when one can be located.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use super::energy::{EnergyCostTable, LatencyCostTable};
use crate::crypto::kem::LweParameters;
use crate::ids::{LinkId, SimTime};
use crate::qkd::{Eavesdropper, QkdLinkConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{}", fmt_invalid(.line, .message))]
    Invalid { line: Option<usize>, message: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn fmt_invalid(line: &Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("line {l}: {message}"),
        None => message.to_string(),
    }
}

impl ConfigError {
    pub fn is_io(&self) -> bool {
        matches!(self, ConfigError::Io { .. })
    }
}

fn default_horizon() -> SimTime {
    600_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Nothing is scheduled after this time.
    #[serde(default = "default_horizon")]
    pub horizon_ms: SimTime,
    pub network: NetworkConfig,
    #[serde(default)]
    pub mobility: MobilityConfig,
    #[serde(default)]
    pub traffic: TrafficConfig,
    pub placements: Spanned<PlacementConfig>,
    #[serde(default)]
    pub crypto: CryptoConfig,
    #[serde(default)]
    pub qkd: QkdConfig,
    #[serde(default)]
    pub kms: KmsConfig,
    #[serde(default)]
    pub energy: EnergyCostTable,
    #[serde(default)]
    pub latency_us: LatencyCostTable,
    pub adversary: Option<Spanned<AdversaryConfig>>,
}

fn d_air() -> SimTime {
    2
}
fn d_backhaul() -> SimTime {
    1
}
fn d_core_dn() -> SimTime {
    5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub base_stations: Vec<BsSpec>,
    pub ues: Vec<UeSpec>,
    #[serde(default = "d_air")]
    pub air_latency_ms: SimTime,
    #[serde(default = "d_backhaul")]
    pub backhaul_latency_ms: SimTime,
    #[serde(default = "d_core_dn")]
    pub core_dn_latency_ms: SimTime,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsSpec {
    pub id: Spanned<u32>,
    #[serde(default)]
    pub position: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeSpec {
    pub id: Spanned<u32>,
    pub supi: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityConfig {
    #[serde(default)]
    pub ue: Vec<Spanned<UeMobility>>,
}

/// Either an explicit `(time_ms, bs_id)` list or a round-robin generator
/// cycling through the base stations in id order.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeMobility {
    pub ue: u32,
    pub schedule: Option<Vec<(SimTime, u32)>>,
    pub round_robin: Option<RoundRobin>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundRobin {
    #[serde(default)]
    pub start_ms: SimTime,
    pub handovers: u32,
    pub interval_ms: SimTime,
    /// Index into the sorted BS list of the first attachment.
    #[serde(default)]
    pub first: usize,
}

fn d_start() -> SimTime {
    100
}
fn d_interval() -> SimTime {
    100
}
fn d_payload() -> usize {
    64
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    #[serde(default)]
    pub messages_per_ue: u32,
    #[serde(default = "d_start")]
    pub start_ms: SimTime,
    #[serde(default = "d_interval")]
    pub interval_ms: SimTime,
    #[serde(default = "d_payload")]
    pub payload_bytes: usize,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig { messages_per_ue: 0, start_ms: d_start(), interval_ms: d_interval(), payload_bytes: d_payload() }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementConfig {
    pub ue_bs_pqc: bool,
    pub bs_core_qkd: bool,
    pub core_dn_qkd: bool,
    #[serde(default)]
    pub insecure: bool,
}

/// Which segments are protected: option 1 is PQC on UE ↔ BS, option 2 QKD
/// on BS ↔ core, option 3 QKD on core ↔ DN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PlacementSet {
    pub ue_bs_pqc: bool,
    pub bs_core_qkd: bool,
    pub core_dn_qkd: bool,
}

impl PlacementSet {
    pub const OPTION_1: PlacementSet = PlacementSet { ue_bs_pqc: true, bs_core_qkd: false, core_dn_qkd: false };
    pub const OPTION_2: PlacementSet = PlacementSet { ue_bs_pqc: false, bs_core_qkd: true, core_dn_qkd: false };
    pub const OPTION_3: PlacementSet = PlacementSet { ue_bs_pqc: false, bs_core_qkd: false, core_dn_qkd: true };
    pub const ALL: PlacementSet = PlacementSet { ue_bs_pqc: true, bs_core_qkd: true, core_dn_qkd: true };
    pub const NONE: PlacementSet = PlacementSet { ue_bs_pqc: false, bs_core_qkd: false, core_dn_qkd: false };

    pub fn is_empty(&self) -> bool {
        !(self.ue_bs_pqc || self.bs_core_qkd || self.core_dn_qkd)
    }

    pub fn label(&self) -> String {
        match *self {
            PlacementSet::OPTION_1 => "option-1".into(),
            PlacementSet::OPTION_2 => "option-2".into(),
            PlacementSet::OPTION_3 => "option-3".into(),
            PlacementSet::ALL => "all".into(),
            PlacementSet::NONE => "none".into(),
            p => {
                let mut parts = Vec::new();
                if p.ue_bs_pqc {
                    parts.push("1");
                }
                if p.bs_core_qkd {
                    parts.push("2");
                }
                if p.core_dn_qkd {
                    parts.push("3");
                }
                format!("options-{}", parts.join("+"))
            }
        }
    }

    pub fn protects(&self, link: LinkId) -> bool {
        match link {
            LinkId::Backhaul(_) => self.bs_core_qkd,
            LinkId::CoreDn => self.core_dn_qkd,
        }
    }
}

impl fmt::Display for PlacementSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ParamsChoice {
    #[default]
    Shipped,
    Toy,
}

impl ParamsChoice {
    pub fn parameters(self) -> LweParameters {
        match self {
            ParamsChoice::Shipped => LweParameters::shipped(),
            ParamsChoice::Toy => LweParameters::toy(),
        }
    }
}

fn d_true() -> bool {
    true
}
fn d_ots_height() -> u32 {
    10
}
fn d_nonce_limit() -> u64 {
    crate::aka::DEFAULT_NONCE_LIMIT
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CryptoConfig {
    #[serde(default)]
    pub params: ParamsChoice,
    #[serde(default = "d_true")]
    pub concealment: bool,
    #[serde(default)]
    pub hybrid: bool,
    #[serde(default = "d_ots_height")]
    pub ots_height: u32,
    /// Forward the existing key to the new BS instead of rekeying.
    #[serde(default)]
    pub keep_keys_across_handover: bool,
    #[serde(default = "d_nonce_limit")]
    pub nonce_limit: u64,
}

impl Default for CryptoConfig {
    fn default() -> Self {
        CryptoConfig {
            params: ParamsChoice::Shipped,
            concealment: true,
            hybrid: false,
            ots_height: d_ots_height(),
            keep_keys_across_handover: false,
            nonce_limit: d_nonce_limit(),
        }
    }
}

fn d_pulses() -> usize {
    QkdLinkConfig::default().pulses_per_round
}
fn d_threshold() -> f64 {
    QkdLinkConfig::default().qber_abort_threshold
}
fn d_sample() -> f64 {
    QkdLinkConfig::default().sample_fraction
}
fn d_target() -> usize {
    QkdLinkConfig::default().target_block_bits
}
fn d_round_ms() -> SimTime {
    20
}
fn d_pool_target() -> usize {
    8
}
fn d_one() -> u32 {
    1
}
fn d_max_aborts() -> u32 {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QkdConfig {
    #[serde(default = "d_pulses")]
    pub pulses_per_round: usize,
    #[serde(default)]
    pub channel_flip_prob: f64,
    #[serde(default = "d_threshold")]
    pub qber_abort_threshold: f64,
    #[serde(default = "d_sample")]
    pub sample_fraction: f64,
    #[serde(default = "d_target")]
    pub target_block_bits: usize,
    /// Simulated duration of one BB84 round.
    #[serde(default = "d_round_ms")]
    pub round_duration_ms: SimTime,
    /// Refill stops once a pool holds this many keys.
    #[serde(default = "d_pool_target")]
    pub pool_target: usize,
    /// Segment envelopes sealed under one pooled key before it is consumed.
    #[serde(default = "d_one")]
    pub envelopes_per_key: u32,
    /// A link is abandoned after this many aborted rounds in a row.
    #[serde(default = "d_max_aborts")]
    pub max_consecutive_aborts: u32,
}

impl Default for QkdConfig {
    fn default() -> Self {
        toml::from_str("").expect("all QKD fields have defaults")
    }
}

impl QkdConfig {
    pub fn link_config(&self, eavesdropper: Eavesdropper) -> QkdLinkConfig {
        QkdLinkConfig {
            pulses_per_round: self.pulses_per_round,
            channel_flip_prob: self.channel_flip_prob,
            eavesdropper,
            qber_abort_threshold: self.qber_abort_threshold,
            sample_fraction: self.sample_fraction,
            target_block_bits: self.target_block_bits,
        }
    }
}

fn d_watermark() -> usize {
    crate::kms::DEFAULT_LOW_WATERMARK
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmsConfig {
    #[serde(default = "d_watermark")]
    pub low_watermark: usize,
}

impl Default for KmsConfig {
    fn default() -> Self {
        KmsConfig { low_watermark: d_watermark() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversaryConfig {
    #[default]
    None,
    /// Intercept-resend on one QKD link: `"backhaul:<bs id>"` or `"core-dn"`.
    QkdEve { link: String, fraction: Option<f64> },
    /// Flip a bit of every challenge signature sent to this UE.
    ChallengeTamper { ue: u32 },
    /// Flip a bit of every RES this UE sends.
    ResponseTamper { ue: u32 },
}

/// Resolved adversary model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdversaryModel {
    None,
    QkdEve { link: LinkId, eavesdropper: Eavesdropper },
    ChallengeTamper { ue: u32 },
    ResponseTamper { ue: u32 },
}

pub fn parse_link(s: &str) -> Option<LinkId> {
    if s == "core-dn" {
        return Some(LinkId::CoreDn);
    }
    s.strip_prefix("backhaul:").and_then(|n| n.parse().ok()).map(LinkId::Backhaul)
}

#[derive(Debug, Clone)]
pub struct BaseStation {
    pub id: u32,
    pub position: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct UeNode {
    pub id: u32,
    pub supi: String,
}

#[derive(Debug, Clone)]
pub struct Topology {
    pub base_stations: Vec<BaseStation>,
    pub ues: Vec<UeNode>,
    pub air_latency_ms: SimTime,
    pub backhaul_latency_ms: SimTime,
    pub core_dn_latency_ms: SimTime,
}

impl Topology {
    /// One backhaul per BS and the core ↔ DN link.
    pub fn links(&self) -> Vec<LinkId> {
        let mut l: Vec<LinkId> = self.base_stations.iter().map(|b| LinkId::Backhaul(b.id)).collect();
        l.push(LinkId::CoreDn);
        l
    }

    pub fn has_link(&self, link: LinkId) -> bool {
        match link {
            LinkId::Backhaul(i) => self.base_stations.iter().any(|b| b.id == i),
            LinkId::CoreDn => true,
        }
    }
}

/// Per-UE ordered `(time, bs)` attachments; the first is the initial attach.
pub type MobilitySchedule = BTreeMap<u32, Vec<(SimTime, u32)>>;

/// A validated, fully deterministic scenario.
#[derive(Debug, Clone)]
pub struct World {
    pub seed: u64,
    pub horizon_ms: SimTime,
    pub topology: Topology,
    pub schedule: MobilitySchedule,
    pub placements: PlacementSet,
    pub insecure: bool,
    pub traffic: TrafficConfig,
    pub crypto: CryptoConfig,
    pub qkd: QkdConfig,
    pub kms: KmsConfig,
    pub energy: EnergyCostTable,
    pub latency_us: LatencyCostTable,
    pub adversary: AdversaryModel,
}

impl World {
    pub fn with_placements(&self, placements: PlacementSet) -> World {
        World { placements, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> World {
        World { seed, ..self.clone() }
    }

    pub fn handover_count(&self) -> usize {
        self.schedule.values().map(|s| s.len().saturating_sub(1)).sum()
    }
}

struct Lines<'a> {
    starts: Vec<usize>,
    _src: &'a str,
}

impl<'a> Lines<'a> {
    fn new(src: &'a str) -> Self {
        let mut starts = vec![0];
        starts.extend(src.match_indices('\n').map(|(i, _)| i + 1));
        Lines { starts, _src: src }
    }

    fn line_col(&self, offset: usize) -> (usize, usize) {
        let line = self.starts.partition_point(|&s| s <= offset);
        (line, offset - self.starts[line - 1] + 1)
    }

    fn line(&self, span: Range<usize>) -> Option<usize> {
        Some(self.line_col(span.start).0)
    }
}

pub fn parse_config(src: &str) -> Result<ScenarioConfig, ConfigError> {
    toml::from_str(src).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| Lines::new(src).line_col(s.start));
        ConfigError::Parse { line, column, message: e.message().to_string() }
    })
}

pub fn load_world(path: &Path) -> Result<World, ConfigError> {
    let src = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    load_world_str(&src)
}

pub fn load_world_str(src: &str) -> Result<World, ConfigError> {
    let cfg = parse_config(src)?;
    build_scenario_with_source(&cfg, Some(src))
}

pub fn build_scenario(config: &ScenarioConfig) -> Result<World, ConfigError> {
    build_scenario_with_source(config, None)
}

fn build_scenario_with_source(cfg: &ScenarioConfig, src: Option<&str>) -> Result<World, ConfigError> {
    let lines = src.map(Lines::new);
    let invalid = |span: Option<Range<usize>>, message: String| ConfigError::Invalid {
        line: span.and_then(|s| lines.as_ref().and_then(|l| l.line(s))),
        message,
    };

    let net = &cfg.network;
    if net.base_stations.is_empty() {
        return Err(invalid(None, "network.base_stations must not be empty".into()));
    }
    let mut bs_ids = BTreeSet::new();
    for b in &net.base_stations {
        if !bs_ids.insert(*b.id.get_ref()) {
            return Err(invalid(Some(b.id.span()), format!("duplicate base station id {}", b.id.get_ref())));
        }
    }
    let mut ue_ids = BTreeSet::new();
    let mut supis = BTreeSet::new();
    let mut ues = Vec::new();
    for u in &net.ues {
        let id = *u.id.get_ref();
        if !ue_ids.insert(id) {
            return Err(invalid(Some(u.id.span()), format!("duplicate UE id {id}")));
        }
        let supi = u.supi.clone().unwrap_or_else(|| format!("imsi-00101{id:010}"));
        if !supis.insert(supi.clone()) {
            return Err(invalid(Some(u.id.span()), format!("duplicate supi {supi}")));
        }
        ues.push(UeNode { id, supi });
    }
    ues.sort_by_key(|u| u.id);
    let mut base_stations: Vec<BaseStation> =
        net.base_stations.iter().map(|b| BaseStation { id: *b.id.get_ref(), position: b.position }).collect();
    base_stations.sort_by_key(|b| b.id);
    let sorted_bs: Vec<u32> = base_stations.iter().map(|b| b.id).collect();

    let mut schedule = MobilitySchedule::new();
    for m in &cfg.mobility.ue {
        let span = Some(m.span());
        let m = m.get_ref();
        if !ue_ids.contains(&m.ue) {
            return Err(invalid(span, format!("mobility entry for unknown UE {}", m.ue)));
        }
        if schedule.contains_key(&m.ue) {
            return Err(invalid(span, format!("UE {} has more than one mobility entry", m.ue)));
        }
        let entries = match (&m.schedule, &m.round_robin) {
            (Some(s), None) => s.clone(),
            (None, Some(rr)) => {
                if rr.interval_ms == 0 {
                    return Err(invalid(span, "round_robin.interval_ms must be positive".into()));
                }
                if sorted_bs.len() < 2 && rr.handovers > 0 {
                    return Err(invalid(span, "round_robin handovers need at least two base stations".into()));
                }
                (0..=rr.handovers as u64)
                    .map(|k| {
                        (rr.start_ms + k * rr.interval_ms, sorted_bs[(rr.first + k as usize) % sorted_bs.len()])
                    })
                    .collect()
            }
            _ => return Err(invalid(span, format!("UE {}: give exactly one of schedule or round_robin", m.ue))),
        };
        if entries.is_empty() {
            return Err(invalid(span, format!("UE {} has an empty schedule", m.ue)));
        }
        for w in entries.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(invalid(span, format!("UE {}: schedule times must strictly increase", m.ue)));
            }
            if w[1].1 == w[0].1 {
                return Err(invalid(span, format!("UE {}: handover to the same BS {}", m.ue, w[1].1)));
            }
        }
        if let Some((_, bs)) = entries.iter().find(|(_, bs)| !bs_ids.contains(bs)) {
            return Err(invalid(span, format!("UE {} attaches to unknown BS {bs}", m.ue)));
        }
        schedule.insert(m.ue, entries);
    }
    if let Some(u) = net.ues.iter().find(|u| !schedule.contains_key(u.id.get_ref())) {
        return Err(invalid(Some(u.id.span()), format!("UE {} has no mobility schedule", u.id.get_ref())));
    }

    let t = &cfg.traffic;
    if t.messages_per_ue > 0 {
        if t.payload_bytes == 0 || t.payload_bytes > 4096 {
            return Err(invalid(None, "traffic.payload_bytes must be in 1..=4096".into()));
        }
        for (ue, s) in &schedule {
            if t.start_ms <= s[0].0 {
                return Err(invalid(None, format!("UE {ue}: first traffic at {} ms does not follow attach at {} ms", t.start_ms, s[0].0)));
            }
        }
    }

    let p = cfg.placements.get_ref();
    let placements = PlacementSet { ue_bs_pqc: p.ue_bs_pqc, bs_core_qkd: p.bs_core_qkd, core_dn_qkd: p.core_dn_qkd };
    if placements.is_empty() && t.messages_per_ue > 0 && !p.insecure {
        return Err(invalid(
            Some(cfg.placements.span()),
            "all placements disabled with traffic present; set insecure = true to allow".into(),
        ));
    }

    let c = &cfg.crypto;
    if c.ots_height == 0 || c.ots_height > crate::crypto::OtsPool::MAX_HEIGHT {
        return Err(invalid(None, format!("crypto.ots_height must be in 1..={}", crate::crypto::OtsPool::MAX_HEIGHT)));
    }
    if c.nonce_limit == 0 {
        return Err(invalid(None, "crypto.nonce_limit must be positive".into()));
    }

    let q = &cfg.qkd;
    q.link_config(Eavesdropper::None).validate().map_err(|e| invalid(None, format!("qkd: {e}")))?;
    if q.envelopes_per_key == 0 || q.pool_target == 0 || q.max_consecutive_aborts == 0 || q.round_duration_ms == 0 {
        return Err(invalid(
            None,
            "qkd.envelopes_per_key, pool_target, max_consecutive_aborts and round_duration_ms must be positive".into(),
        ));
    }
    if cfg.kms.low_watermark == 0 {
        return Err(invalid(None, "kms.low_watermark must be at least 1".into()));
    }
    if cfg.kms.low_watermark > q.pool_target {
        return Err(invalid(None, "kms.low_watermark must not exceed qkd.pool_target".into()));
    }
    cfg.energy.validate().map_err(|m| invalid(None, format!("energy: {m}")))?;
    cfg.latency_us.validate().map_err(|m| invalid(None, format!("latency_us: {m}")))?;

    let topology = Topology {
        base_stations,
        ues,
        air_latency_ms: net.air_latency_ms,
        backhaul_latency_ms: net.backhaul_latency_ms,
        core_dn_latency_ms: net.core_dn_latency_ms,
    };
    let world = World {
        seed: cfg.seed,
        horizon_ms: cfg.horizon_ms,
        topology,
        schedule,
        placements,
        insecure: p.insecure,
        traffic: t.clone(),
        crypto: c.clone(),
        qkd: q.clone(),
        kms: cfg.kms.clone(),
        energy: cfg.energy.clone(),
        latency_us: cfg.latency_us.clone(),
        adversary: AdversaryModel::None,
    };
    match &cfg.adversary {
        None => Ok(world),
        Some(a) => inject_adversary(world, a.get_ref()).map_err(|e| invalid(Some(a.span()), e.to_string())),
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdversaryError {
    #[error("unknown adversary target {0}")]
    UnknownTarget(String),
    #[error("eavesdropper fraction must be in [0, 1]")]
    BadFraction,
}

/// Places an adversary in the world.
pub fn inject_adversary(mut world: World, model: &AdversaryConfig) -> Result<World, AdversaryError> {
    world.adversary = match model {
        AdversaryConfig::None => AdversaryModel::None,
        AdversaryConfig::QkdEve { link, fraction } => {
            let id = parse_link(link).filter(|l| world.topology.has_link(*l));
            let id = id.ok_or_else(|| AdversaryError::UnknownTarget(link.clone()))?;
            let eavesdropper = match fraction {
                None => Eavesdropper::InterceptResendAll,
                Some(f) if (0.0..=1.0).contains(f) => Eavesdropper::InterceptResendFraction(*f),
                Some(_) => return Err(AdversaryError::BadFraction),
            };
            AdversaryModel::QkdEve { link: id, eavesdropper }
        }
        AdversaryConfig::ChallengeTamper { ue } | AdversaryConfig::ResponseTamper { ue } => {
            if !world.topology.ues.iter().any(|u| u.id == *ue) {
                return Err(AdversaryError::UnknownTarget(format!("ue {ue}")));
            }
            if matches!(model, AdversaryConfig::ChallengeTamper { .. }) {
                AdversaryModel::ChallengeTamper { ue: *ue }
            } else {
                AdversaryModel::ResponseTamper { ue: *ue }
            }
        }
    };
    Ok(world)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 1

[network]
base_stations = [{ id = 0 }]
ues = [{ id = 0 }]

[[mobility.ue]]
ue = 0
schedule = [[0, 0]]

[placements]
ue_bs_pqc = true
bs_core_qkd = false
core_dn_qkd = false
"#;

    #[test]
    fn minimal_config_builds() {
        let w = load_world_str(MINIMAL).unwrap();
        assert_eq!(w.topology.base_stations.len(), 1);
        assert_eq!(w.topology.ues[0].supi, "imsi-001010000000000");
        assert_eq!(w.schedule[&0], vec![(0, 0)]);
        assert_eq!(w.placements, PlacementSet::OPTION_1);
        assert_eq!(w.handover_count(), 0);
    }

    #[test]
    fn duplicate_bs_reports_line() {
        let src = MINIMAL.replace("base_stations = [{ id = 0 }]", "base_stations = [\n  { id = 0 },\n  { id = 0 },\n]");
        let err = load_world_str(&src).unwrap_err();
        let ConfigError::Invalid { line: Some(line), message } = &err else { panic!("{err}") };
        assert_eq!(*line, 7);
        assert!(message.contains("duplicate base station id 0"));
    }

    #[test]
    fn syntax_error_reports_line() {
        let src = MINIMAL.replace("seed = 1", "seed = ");
        let ConfigError::Parse { line, .. } = load_world_str(&src).unwrap_err() else { panic!() };
        assert_eq!(line, 2);
    }

    #[test]
    fn unknown_field_rejected() {
        let src = MINIMAL.replace("seed = 1", "seed = 1\nbogus = 2");
        let err = load_world_str(&src).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn all_flags_off_with_traffic_needs_insecure() {
        let src = MINIMAL.replace("ue_bs_pqc = true", "ue_bs_pqc = false") + "\n[traffic]\nmessages_per_ue = 1\n";
        let err = load_world_str(&src).unwrap_err();
        assert!(err.to_string().contains("insecure"), "{err}");
        let ok = src.replace("core_dn_qkd = false", "core_dn_qkd = false\ninsecure = true");
        assert!(load_world_str(&ok).is_ok());
        let no_traffic = MINIMAL.replace("ue_bs_pqc = true", "ue_bs_pqc = false");
        assert!(load_world_str(&no_traffic).is_ok());
    }

    #[test]
    fn traffic_must_follow_attach() {
        let src = MINIMAL.replace("[[0, 0]]", "[[500, 0]]") + "\n[traffic]\nmessages_per_ue = 1\nstart_ms = 500\n";
        assert!(load_world_str(&src).unwrap_err().to_string().contains("does not follow attach"));
    }

    #[test]
    fn schedule_rules() {
        let two = MINIMAL.replace("[{ id = 0 }]\nues", "[{ id = 0 }, { id = 1 }]\nues");
        assert!(load_world_str(&two.replace("[[0, 0]]", "[[0, 0], [0, 1]]")).is_err());
        assert!(load_world_str(&two.replace("[[0, 0]]", "[[0, 0], [5, 0]]")).is_err());
        assert!(load_world_str(&two.replace("[[0, 0]]", "[[0, 0], [5, 9]]")).is_err());
        let w = load_world_str(&two.replace("[[0, 0]]", "[[0, 0], [5, 1], [9, 0]]")).unwrap();
        assert_eq!(w.handover_count(), 2);
    }

    #[test]
    fn round_robin_generator() {
        let src = MINIMAL
            .replace("[{ id = 0 }]\nues", "[{ id = 2 }, { id = 7 }, { id = 5 }]\nues")
            .replace("schedule = [[0, 0]]", "round_robin = { start_ms = 10, handovers = 4, interval_ms = 100 }");
        let w = load_world_str(&src).unwrap();
        assert_eq!(w.schedule[&0], vec![(10, 2), (110, 5), (210, 7), (310, 2), (410, 5)]);
    }

    #[test]
    fn missing_schedule_rejected() {
        let src = MINIMAL.replace("ues = [{ id = 0 }]", "ues = [{ id = 0 }, { id = 1 }]");
        assert!(load_world_str(&src).unwrap_err().to_string().contains("UE 1 has no mobility schedule"));
    }

    #[test]
    fn adversary_targets_checked() {
        let eve = MINIMAL.to_string() + "\n[adversary]\nmodel = \"qkd_eve\"\nlink = \"backhaul:0\"\n";
        let w = load_world_str(&eve).unwrap();
        assert_eq!(
            w.adversary,
            AdversaryModel::QkdEve { link: LinkId::Backhaul(0), eavesdropper: Eavesdropper::InterceptResendAll }
        );
        assert!(load_world_str(&eve.replace("backhaul:0", "backhaul:3")).is_err());
        let tamper = MINIMAL.to_string() + "\n[adversary]\nmodel = \"challenge_tamper\"\nue = 4\n";
        assert!(load_world_str(&tamper).unwrap_err().to_string().contains("unknown adversary target"));
    }

    #[test]
    fn qkd_section_validated() {
        let src = MINIMAL.to_string() + "\n[qkd]\npulses_per_round = 10\n";
        assert!(load_world_str(&src).unwrap_err().to_string().contains("qkd"));
    }

    #[test]
    fn placement_labels() {
        assert_eq!(PlacementSet::OPTION_2.label(), "option-2");
        assert_eq!(PlacementSet { ue_bs_pqc: true, bs_core_qkd: true, core_dn_qkd: false }.label(), "options-1+2");
    }
}
