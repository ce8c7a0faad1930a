mod common;

use etpoisson::comm::DelayModel;
use etpoisson::convergence::{ConvEventKind, RestartRule};
use etpoisson::event::EventParams;
use etpoisson::problems::manufactured_instance;
use etpoisson::runner::{run, run_traced, Backend, Outcome, PolicyKind, RunConfig, RunError};

use common::{delayed_source, oracle_error};

fn event(horizon: f64, decay: f64) -> PolicyKind {
    PolicyKind::EventTriggered(EventParams {
        horizon,
        decay,
        ..Default::default()
    })
}

fn base(n_pes: usize) -> RunConfig {
    RunConfig {
        n_pes,
        ..Default::default()
    }
}

#[test]
fn every_policy_matches_direct_solve() {
    let inst = manufactured_instance(64, 32).unwrap();
    for policy in [PolicyKind::Synchronous, PolicyKind::Asynchronous, event(200.0, 0.8)] {
        let r = run(&inst, &base(4).with_policy(policy)).unwrap();
        assert!(r.passed(), "{}: residual {:e}", policy.name(), r.final_relative_residual);
        let err = oracle_error(&inst, &r);
        assert!(err < 1e-6, "{}: oracle error {err:e}", policy.name());
    }
}

#[test]
fn sync_lockstep_counts() {
    let inst = manufactured_instance(32, 16).unwrap();
    let r = run(&inst, &base(4).with_policy(PolicyKind::Synchronous)).unwrap();
    assert!(r.passed());
    let it = r.pe_iterations[0];
    assert!(r.pe_iterations.iter().all(|&i| i == it));
    assert_eq!(r.halo_messages.len(), 8);
    assert!(r.halo_messages.iter().all(|c| c.count == it));
    assert_eq!(r.virtual_time.is_some(), r.wall_time_ms.is_none());
}

#[test]
fn async_sends_once_per_sweep() {
    let inst = manufactured_instance(32, 16).unwrap();
    let cfg = RunConfig {
        delays: DelayModel::jittered(),
        ..base(4)
    };
    let r = run(&inst, &cfg).unwrap();
    assert!(r.passed());
    for c in &r.halo_messages {
        assert_eq!(c.count, r.pe_iterations[c.sender], "{c:?}");
    }
}

#[test]
fn event_sends_at_most_once_per_sweep_and_fewer_overall() {
    let inst = manufactured_instance(64, 32).unwrap();
    let asynchronous = run(&inst, &base(4)).unwrap();
    let ev = run(&inst, &base(4).with_policy(event(200.0, 0.8))).unwrap();
    assert!(ev.passed());
    for c in &ev.halo_messages {
        assert!(c.count <= ev.pe_iterations[c.sender], "{c:?}");
    }
    assert!(ev.total_halo_messages < asynchronous.total_halo_messages);
}

#[test]
fn zero_horizon_sends_every_sweep() {
    let inst = manufactured_instance(32, 16).unwrap();
    let r = run(&inst, &base(4).with_policy(event(0.0, 0.5))).unwrap();
    assert!(r.passed());
    for c in &r.halo_messages {
        assert_eq!(c.count, r.pe_iterations[c.sender], "{c:?}");
    }
}

#[test]
fn same_seed_same_report() {
    let inst = manufactured_instance(32, 16).unwrap();
    for policy in [PolicyKind::Synchronous, PolicyKind::Asynchronous, event(100.0, 0.8)] {
        let cfg = RunConfig {
            delays: DelayModel::jittered().with_slow(1, 3),
            seed: 11,
            ..base(4).with_policy(policy)
        };
        let a = serde_json::to_string(&run(&inst, &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&run(&inst, &cfg).unwrap()).unwrap();
        assert_eq!(a, b, "{}", policy.name());
    }
}

#[test]
fn slow_pe_favors_async_in_virtual_time() {
    let inst = manufactured_instance(64, 32).unwrap();
    let delays = DelayModel::zero_latency().with_slow(2, 5);
    let cfg = RunConfig { delays, ..base(4) };
    let sync = run(&inst, &cfg.clone().with_policy(PolicyKind::Synchronous)).unwrap();
    let asynchronous = run(&inst, &cfg).unwrap();
    assert!(sync.passed() && asynchronous.passed());
    assert!(
        asynchronous.virtual_time.unwrap() < sync.virtual_time.unwrap(),
        "async {:?} sync {:?}",
        asynchronous.virtual_time,
        sync.virtual_time
    );
}

#[test]
fn late_source_restarts_the_idle_pe() {
    let inst = delayed_source();
    for policy in [PolicyKind::Asynchronous, event(200.0, 0.8)] {
        let cfg = RunConfig {
            delays: DelayModel::zero_latency().with_slow(1, 20),
            ..base(2).with_policy(policy)
        };
        let (r, trace) = run_traced(&inst, &cfg, true).unwrap();
        assert!(r.passed(), "{}: {:e}", policy.name(), r.final_relative_residual);
        let pe0: Vec<ConvEventKind> = trace
            .convergence
            .iter()
            .filter(|e| e.pe == 0 && e.event != ConvEventKind::Global)
            .map(|e| e.event)
            .collect();
        let restart = pe0
            .windows(3)
            .any(|w| w == [ConvEventKind::Converged, ConvEventKind::Nullified, ConvEventKind::Converged]);
        assert!(restart, "{}: {pe0:?}", policy.name());
        assert_eq!(trace.convergence.last().unwrap().event, ConvEventKind::Global);
    }
}

#[test]
fn late_source_log_is_json_lines() {
    let inst = delayed_source();
    let cfg = RunConfig {
        delays: DelayModel::zero_latency().with_slow(1, 20),
        ..base(2)
    };
    let (_, trace) = run_traced(&inst, &cfg, true).unwrap();
    let mut out = Vec::new();
    trace.write_convergence(&mut out).unwrap();
    let lines: Vec<serde_json::Value> = String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), trace.convergence.len());
    assert!(lines.iter().any(|v| v["event"] == "nullified" && v["pe"] == 0));
}

#[test]
fn exact_norm_restart_never_terminates() {
    // A zero threshold nullifies on every fresh message, including ones
    // carrying values identical to the ghost, so the asynchronous policy
    // never settles.
    let inst = manufactured_instance(16, 8).unwrap();
    let cfg = RunConfig {
        restart: RestartRule::NormChange { threshold: 0.0 },
        step_limit: 60_000,
        ..base(2)
    };
    let r = run(&inst, &cfg).unwrap();
    assert!(matches!(r.outcome, Outcome::TimedOut { .. }));
    assert!(r.final_relative_residual < 1e-10);
    assert!(run(&inst, &RunConfig { step_limit: 60_000, ..base(2) }).unwrap().passed());
}

#[test]
fn single_pe_needs_no_messages() {
    let inst = manufactured_instance(16, 8).unwrap();
    for policy in [PolicyKind::Synchronous, PolicyKind::Asynchronous, event(200.0, 0.8)] {
        let r = run(&inst, &base(1).with_policy(policy)).unwrap();
        assert!(r.passed(), "{}", policy.name());
        assert_eq!(r.total_halo_messages, 0);
        assert!(oracle_error(&inst, &r) < 1e-6);
    }
}

#[test]
fn timeout_reports_a_diagnostic() {
    let inst = manufactured_instance(32, 16).unwrap();
    let r = run(&inst, &RunConfig { step_limit: 100, ..base(4) }).unwrap();
    match r.outcome {
        Outcome::TimedOut { diagnostic } => assert_eq!(diagnostic.lines().count(), 4),
        other => panic!("expected a timeout, got {other:?}"),
    }
}

#[test]
fn bad_configs_are_rejected() {
    let inst = manufactured_instance(16, 8).unwrap();
    assert!(matches!(
        run(&inst, &RunConfig { omega: 2.0, ..base(2) }),
        Err(RunError::Config(_))
    ));
    assert!(matches!(run(&inst, &base(3)), Err(RunError::Grid(_))));
    assert!(matches!(
        run(&inst, &base(2).with_policy(event(100.0, 1.0))),
        Err(RunError::Event(_))
    ));
}

#[test]
fn threads_converge_and_async_keeps_up_with_a_slow_pe() {
    let inst = manufactured_instance(64, 32).unwrap();
    let mut delays = DelayModel::zero_latency().with_slow(3, 5);
    delays.tick_us = 20;
    let cfg = RunConfig {
        backend: Backend::Threads,
        delays,
        ..base(8)
    };
    let sync = run(&inst, &cfg.clone().with_policy(PolicyKind::Synchronous)).unwrap();
    let asynchronous = run(&inst, &cfg).unwrap();
    let ev = run(&inst, &cfg.clone().with_policy(event(200.0, 0.8))).unwrap();
    for r in [&sync, &asynchronous, &ev] {
        assert!(r.passed(), "{}: {:e}", r.config.policy.name(), r.final_relative_residual);
        assert!(r.virtual_time.is_none());
        assert!(oracle_error(&inst, r) < 1e-6);
    }
    assert!(
        asynchronous.wall_time_ms.unwrap() <= sync.wall_time_ms.unwrap(),
        "async {:?} ms, sync {:?} ms",
        asynchronous.wall_time_ms,
        sync.wall_time_ms
    );
}
