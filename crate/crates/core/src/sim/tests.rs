use proptest::prelude::*;

use super::*;
use crate::ids::NodeId;
use crate::kms::AuditEvent;

struct Scenario {
    bss: u32,
    ues: u32,
    schedule: Vec<(u32, String)>,
    messages: u32,
    placements: (bool, bool, bool),
    extra: String,
}

impl Scenario {
    fn new(bss: u32, ues: u32) -> Self {
        let schedule = (0..ues).map(|u| (u, format!("schedule = [[0, {}]]", u % bss))).collect();
        Scenario { bss, ues, schedule, messages: 0, placements: (true, false, false), extra: String::new() }
    }

    fn schedule(mut self, ue: u32, entries: &[(u64, u32)]) -> Self {
        let list: Vec<String> = entries.iter().map(|(t, b)| format!("[{t}, {b}]")).collect();
        self.schedule[ue as usize].1 = format!("schedule = [{}]", list.join(", "));
        self
    }

    fn placements(mut self, p: PlacementSet) -> Self {
        self.placements = (p.ue_bs_pqc, p.bs_core_qkd, p.core_dn_qkd);
        self
    }

    fn messages(mut self, n: u32) -> Self {
        self.messages = n;
        self
    }

    fn extra(mut self, s: &str) -> Self {
        self.extra.push_str(s);
        self.extra.push('\n');
        self
    }

    fn toml(&self) -> String {
        let bss: Vec<String> = (0..self.bss).map(|i| format!("{{ id = {i}, position = [{i}.0, 0.0] }}")).collect();
        let ues: Vec<String> = (0..self.ues).map(|i| format!("{{ id = {i} }}")).collect();
        let mut s = format!(
            "seed = 7\n\n[network]\nbase_stations = [{}]\nues = [{}]\n\n",
            bss.join(", "),
            ues.join(", ")
        );
        for (ue, line) in &self.schedule {
            s += &format!("[[mobility.ue]]\nue = {ue}\n{line}\n\n");
        }
        s += &format!("[traffic]\nmessages_per_ue = {}\nstart_ms = 50\ninterval_ms = 40\npayload_bytes = 48\n\n", self.messages);
        let (a, b, c) = self.placements;
        s += &format!("[placements]\nue_bs_pqc = {a}\nbs_core_qkd = {b}\ncore_dn_qkd = {c}\n\n");
        s += "[qkd]\npulses_per_round = 2000\n\n";
        s += &self.extra;
        s
    }

    fn world(&self) -> World {
        load_world_str(&self.toml()).unwrap_or_else(|e| panic!("{e}\n{}", self.toml()))
    }

    fn run(&self) -> SimOutput {
        run(&self.world())
    }
}

fn wire_steps<'a>(o: &'a SimOutput, hop: &'a str) -> impl Iterator<Item = &'a str> + 'a {
    o.trace.iter().filter_map(move |r| match &r.event {
        TraceEvent::Wire { hop: h, step, .. } if h == hop => Some(step.as_str()),
        _ => None,
    })
}

fn audit_count(o: &SimOutput, ev: AuditEvent) -> u64 {
    o.audit.iter().filter(|r| r.event == ev).count() as u64
}

#[test]
fn four_bs_option_1_handshake_count() {
    let o = Scenario::new(4, 1).schedule(0, &[(0, 0), (300, 1), (600, 2), (900, 3)]).run();
    let ue = o.report.node(NodeId::Ue(0));
    assert_eq!(ue.handshakes, 4);
    assert_eq!(ue.rekeys, 3);
    assert_eq!(ue.established, 4);
    assert_eq!(o.report.node(NodeId::Kms).qkd_rounds, 0);
}

#[test]
fn four_bs_option_2_keys_match_trace() {
    let o = Scenario::new(4, 1)
        .schedule(0, &[(0, 0), (300, 1), (600, 2), (900, 3)])
        .placements(PlacementSet::OPTION_2)
        .messages(20)
        .run();
    let ue = o.report.node(NodeId::Ue(0));
    assert_eq!(ue.handshakes, 1, "registration only");
    assert_eq!(ue.rekeys, 0);
    let backbone_needs = wire_steps(&o, "bs-core").filter(|s| *s == "Key Forward" || *s == "App Data").count();
    assert_eq!(backbone_needs, 21);
    assert_eq!(o.report.total().keys_consumed, backbone_needs as u64);
    assert_eq!(ue.messages_delivered, 20);
}

#[test]
fn static_option_1_energy_is_attach_handshake_only() {
    let o = Scenario::new(1, 1).run();
    let t = o.report.total();
    let e = &o.report.energy_table;
    assert_eq!(t.qkd_rounds, 0);
    assert_eq!(t.traffic_aead_bytes, 0);
    assert_eq!(t.total_energy(e), e.ops(&t.handshake_ops));
    let ue = o.report.node(NodeId::Ue(0)).handshake_ops;
    assert_eq!((ue.kem_encap, ue.ots_verify), (2, 1), "concealment encap plus challenge encap");
    let core = o.report.node(NodeId::Core).handshake_ops;
    assert_eq!((core.kem_keygen, core.kem_decap, core.ots_sign), (1, 2, 1));
}

#[test]
fn rekey_slope_per_placement() {
    let mut rekeys = Vec::new();
    for h in [2u32, 4, 8] {
        let sched: Vec<(u64, u32)> = (0..=h).map(|k| (k as u64 * 100, k % 2)).collect();
        let base = Scenario::new(2, 1).schedule(0, &sched).messages(3);
        let w = base.world();
        let runs = compare_placements(&w);
        let row: Vec<_> = comparison_rows(&runs);
        rekeys.push((h, row[0].rekeys, row[1].rekeys, row[2].rekeys));
        assert_eq!(row[0].rekeys_per_handover, 1.0);
    }
    for (h, r1, r2, r3) in rekeys {
        assert_eq!(r1, h as u64);
        assert_eq!((r2, r3), (0, 0));
    }
}

#[test]
fn option_2_key_establishments_constant_in_ue_count() {
    let total_messages = 12;
    let mut counts = Vec::new();
    for ues in [1u32, 2, 3, 4] {
        let s = Scenario::new(2, ues).placements(PlacementSet::OPTION_2).messages(total_messages / ues);
        let o = s.run();
        assert_eq!(o.report.total().messages_delivered, total_messages as u64);
        counts.push(o.report.segment_key_establishments(false));
    }
    assert!(counts.iter().all(|&c| c == counts[0]), "{counts:?}");
    let o1: Vec<u64> = [1u32, 2, 4]
        .iter()
        .map(|&u| Scenario::new(2, u).messages(12 / u).run().report.segment_key_establishments(true))
        .collect();
    assert_eq!(o1, vec![1, 2, 4]);
}

#[test]
fn option_3_uses_only_core_dn_link() {
    let o = Scenario::new(2, 2).placements(PlacementSet::OPTION_3).messages(4).run();
    assert!(!o.audit.is_empty());
    assert!(o.audit.iter().all(|r| r.link_id == crate::ids::LinkId::CoreDn));
    assert_eq!(o.report.total().keys_consumed, 8);
    assert_eq!(o.report.total().unprotected_forwards, 2);
}

#[test]
fn eve_on_backhaul_blocks_forwarding() {
    let o = Scenario::new(2, 2)
        .placements(PlacementSet::OPTION_2)
        .messages(2)
        .extra("[adversary]\nmodel = \"qkd_eve\"\nlink = \"backhaul:0\"")
        .run();
    let t = o.report.total();
    assert!(t.qkd_aborts >= 1);
    assert!(t.blocked_forwards >= 1);
    assert_eq!(t.key_mismatches, 0);
    assert!(o.sessions.iter().all(|s| s.ue_key == s.core_key && s.core_key == s.bs_key));
    assert!(o.sessions.iter().all(|s| s.bs != 0), "no key reaches bs#0");
    // UE 1 is on the clean link and gets through.
    assert_eq!(o.report.node(NodeId::Ue(1)).messages_delivered, 2);
    assert_eq!(o.report.node(NodeId::Ue(0)).messages_delivered, 0);
}

#[test]
fn challenge_tamper_blocks_target_only() {
    let o = Scenario::new(1, 2)
        .messages(2)
        .extra("[adversary]\nmodel = \"challenge_tamper\"\nue = 0")
        .run();
    assert_eq!(o.report.node(NodeId::Ue(0)).established, 0);
    assert_eq!(o.report.node(NodeId::Ue(0)).failed, 1);
    assert_eq!(o.ue_final_states[&0], crate::aka::UeState::Failed);
    assert_eq!(o.report.node(NodeId::Ue(1)).established, 1);
    assert!(o.sessions.iter().all(|s| s.ue != 0));
}

#[test]
fn response_tamper_rejected_by_core() {
    let o = Scenario::new(1, 1)
        .messages(1)
        .extra("[adversary]\nmodel = \"response_tamper\"\nue = 0")
        .run();
    assert_eq!(o.report.node(NodeId::Core).failed, 1);
    assert_eq!(o.report.node(NodeId::Ue(0)).established, 0);
    assert_eq!(o.ue_final_states[&0], crate::aka::UeState::Failed);
    assert!(wire_steps(&o, "ue-bs-core").any(|s| s == "Auth Reject"));
}

#[test]
fn clean_links_never_abort() {
    let o = Scenario::new(3, 3).placements(PlacementSet::ALL).messages(3).run();
    let t = o.report.total();
    assert!(t.qkd_rounds > 0);
    assert_eq!(t.qkd_aborts, 0);
    assert_eq!(t.keys_ingested, t.qkd_rounds);
}

#[test]
fn aborted_rounds_deliver_no_keys() {
    let o = Scenario::new(1, 1)
        .placements(PlacementSet::OPTION_3)
        .extra("[adversary]\nmodel = \"qkd_eve\"\nlink = \"core-dn\"")
        .run();
    let t = o.report.total();
    assert_eq!(t.qkd_aborts, t.qkd_rounds);
    assert_eq!(t.qkd_rounds, 8, "abandoned after max_consecutive_aborts");
    assert_eq!(audit_count(&o, AuditEvent::Ingest), 0);
}

#[test]
fn full_placement_hides_all_secrets() {
    let o = Scenario::new(2, 3)
        .schedule(0, &[(0, 0), (200, 1)])
        .placements(PlacementSet::ALL)
        .messages(5)
        .run();
    assert_eq!(o.report.total().messages_delivered, 15);
    assert!(!o.secrets.payloads.is_empty() && !o.secrets.session_keys.is_empty());
    assert_eq!(o.secret_occurrences(), 0);
}

#[test]
fn option_1_leaks_payload_on_backbone() {
    // The scan itself must be able to see plaintext.
    let o = Scenario::new(1, 1).messages(1).run();
    assert!(o.secret_occurrences() >= 2, "payload on bs-core and core-dn, key on unprotected forward");
}

#[test]
fn audit_matches_counters() {
    let o = Scenario::new(3, 10).placements(PlacementSet::ALL).messages(3).run();
    let t = o.report.total();
    assert_eq!(t.keys_consumed, audit_count(&o, AuditEvent::Consume));
    assert_eq!(t.segment_keys + t.forward_keys, audit_count(&o, AuditEvent::Grant));
    assert_eq!(t.keys_ingested, audit_count(&o, AuditEvent::Ingest));
    assert!(o.kms_counts.is_conserved());
    let mut granted = std::collections::BTreeMap::new();
    for r in o.audit.iter().filter(|r| r.event == AuditEvent::Grant) {
        *granted.entry(r.key_id).or_insert(0) += 1;
    }
    assert!(granted.values().all(|&n| n == 1));
}

#[test]
fn runs_are_deterministic() {
    let s = Scenario::new(2, 3).schedule(1, &[(0, 1), (120, 0)]).placements(PlacementSet::ALL).messages(4);
    let a = s.run();
    let b = s.run();
    assert_eq!(a.metrics_csv(), b.metrics_csv());
    assert_eq!(a.trace_ndjson(), b.trace_ndjson());
    let c = run(&s.world().with_seed(8));
    assert_ne!(a.trace_ndjson(), c.trace_ndjson());
}

#[test]
fn energy_linearity_in_traffic() {
    let e1 = Scenario::new(2, 2).placements(PlacementSet::ALL).messages(4).run();
    let e2 = Scenario::new(2, 2).placements(PlacementSet::ALL).messages(8).run();
    let (t1, t2) = (e1.report.total(), e2.report.total());
    let tab = &e1.report.energy_table;
    assert_eq!(t2.energy_traffic(tab), 2.0 * t1.energy_traffic(tab));
    assert_eq!(t2.energy_handshake(tab), t1.energy_handshake(tab));
}

#[test]
fn keep_keys_forwards_instead_of_rekeying() {
    let o = Scenario::new(2, 1)
        .schedule(0, &[(0, 0), (200, 1), (400, 0)])
        .messages(10)
        .extra("[crypto]\nkeep_keys_across_handover = true")
        .run();
    let ue = o.report.node(NodeId::Ue(0));
    assert_eq!((ue.handshakes, ue.rekeys), (1, 0));
    assert_eq!(ue.messages_delivered, 10);
    assert_eq!(o.report.node(NodeId::Core).unprotected_forwards, 3);
}

#[test]
fn envelopes_per_key_rations_qkd_keys() {
    let o = Scenario::new(1, 1)
        .placements(PlacementSet::OPTION_3)
        .messages(9)
        .run();
    assert_eq!(o.report.total().segment_keys, 9);
    let src = Scenario::new(1, 1).placements(PlacementSet::OPTION_3).messages(9).toml();
    let src = src.replace("pulses_per_round = 2000", "pulses_per_round = 2000\nenvelopes_per_key = 4");
    let o = run(&load_world_str(&src).unwrap());
    assert_eq!(o.report.total().segment_keys, 3);
    assert_eq!(o.report.total().keys_consumed, 2, "last key only partly used");
    assert_eq!(o.report.total().messages_delivered, 9);
}

#[test]
fn hybrid_sessions_agree() {
    let o = Scenario::new(1, 2).messages(2).extra("[crypto]\nhybrid = true").run();
    assert_eq!(o.sessions.len(), 2);
    assert!(o.trace.iter().any(|r| matches!(&r.event, TraceEvent::SessionEstablished { schedule, .. } if schedule == "Hybrid")));
    assert_eq!(o.report.total().messages_delivered, 4);
}

#[test]
fn handshake_messages_use_codec() {
    let o = Scenario::new(1, 1).run();
    for w in o.wire_messages() {
        crate::aka::WireMessage::decode(&w).expect("every traced message decodes");
    }
    let steps: Vec<&str> = wire_steps(&o, "ue-bs-core").collect();
    assert_eq!(steps, ["AUTH Request", "Authentication Challenge", "Authentication Response"]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rekey_law_holds_for_fuzzed_schedules(gaps in prop::collection::vec((1u64..400, 1u32..3), 0..10)) {
        let mut sched = vec![(0u64, 0u32)];
        for (gap, step) in gaps {
            let (t, b) = *sched.last().unwrap();
            sched.push((t + gap, (b + step) % 3));
        }
        let h = sched.len() as u64 - 1;
        let o = Scenario::new(3, 1).schedule(0, &sched).messages(2).run();
        let ue = o.report.node(NodeId::Ue(0));
        prop_assert_eq!(ue.rekeys, h);
        prop_assert_eq!(ue.handshakes, h + 1);
        prop_assert_eq!(o.report.total().key_mismatches, 0);
    }
}
