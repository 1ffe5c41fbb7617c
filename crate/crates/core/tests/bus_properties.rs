use canmm_core::bus::{
    random_frames, run_scenario, Coupling, NodeKind, NoiseSource, ReceiverReport, Scenario,
};
use canmm_core::MacKey;

fn scenario() -> Scenario {
    let mut s = Scenario::hybrid(MacKey::new([7; 16]), random_frames(21, 20), 21);
    s.noise
        .push(NoiseSource::sine(20e3, 0.15, Coupling::CommonMode));
    s
}

fn receiver_reports(s: &Scenario, node: &str) -> Vec<ReceiverReport> {
    let r = run_scenario(s).unwrap();
    r.frames
        .iter()
        .map(|f| f.receivers.iter().find(|x| x.node == node).unwrap().clone())
        .collect()
}

#[test]
fn receivers_are_independent() {
    let full = scenario();
    let mut no_legacy = full.clone();
    no_legacy.nodes.retain(|n| n.kind != NodeKind::LegacyRx);
    let mut no_mac_rx = full.clone();
    no_mac_rx.nodes.retain(|n| n.kind != NodeKind::CanMmRx);

    assert_eq!(
        receiver_reports(&full, "node2"),
        receiver_reports(&no_legacy, "node2")
    );
    assert_eq!(
        receiver_reports(&full, "node3"),
        receiver_reports(&no_mac_rx, "node3")
    );
}

#[test]
fn equal_seeds_give_equal_reports() {
    let mut s = scenario();
    s.noise.push(NoiseSource::attacker_carrier(5e6, 0.2));
    assert_eq!(run_scenario(&s).unwrap(), run_scenario(&s).unwrap());
    let mut other = s.clone();
    other.seed += 1;
    assert_ne!(
        run_scenario(&s).unwrap().frames,
        run_scenario(&other).unwrap().frames
    );
}
