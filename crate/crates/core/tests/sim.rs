mod common;

use std::collections::BTreeSet;

use common::*;
use osc_core::sim::{check, check_all, run, Entry, RunError, RunOptions, Scenario, SimError, Step, Suite, Trace, Transport};

#[test]
fn empty_scenario_traces_only_bootstrap() {
    let net = run_plain(&Scenario::new(1));
    let kinds: Vec<String> = net
        .trace()
        .entries()
        .iter()
        .map(|e| e.to_term().functor().unwrap().to_string())
        .collect();
    assert_eq!(kinds, ["run", "boot"]);
}

#[test]
fn one_subscriber_gets_exactly_one_post() {
    let mut s = Scenario::new(4);
    s.push(adopt("alice", &["role(manager)", "group(t1)"]))
        .push(adopt("bob", &["group(t1)"]))
        .push(Step::Subscribe {
            subscriber: a("bob"),
            publisher: a("alice"),
        })
        .push(Step::Drain)
        .push(Step::Publish {
            agent: a("alice"),
            kind: "general".into(),
            body: "hi".into(),
        });
    let net = run_plain(&s);
    let posts = net.inbox(&a("bob")).iter().filter(|r| r.msg.is("post", 3)).count();
    assert_eq!(posts, 1);
    assert!(check_all(net.trace()).passed());
}

#[test]
fn trace_text_round_trips() {
    for name in fixture_names() {
        let net = run_fixture(&name, RunOptions::default());
        let text = net.trace().to_text();
        let back = Trace::parse(&text).unwrap();
        assert_eq!(&back, net.trace(), "{name}");
        assert_eq!(back.to_text(), text);
    }
}

#[test]
fn golden_traces_match_and_pass() {
    for name in fixture_names() {
        let golden = std::fs::read_to_string(fixtures_dir().join("golden").join(format!("{name}.trace"))).unwrap();
        let net = run_fixture(&name, RunOptions::default());
        assert_eq!(net.trace().to_text(), golden, "{name} drifted from its golden trace");
        let report = check_all(&Trace::parse(&golden).unwrap());
        assert!(report.passed(), "{name}:\n{report}");
    }
}

#[test]
fn socket_transport_is_bit_exact() {
    for name in ["basic", "two_law", "search"] {
        let sim = run_fixture(name, RunOptions::default());
        let sock = run_fixture(
            name,
            RunOptions {
                transport: Transport::Socket,
                ..Default::default()
            },
        );
        assert_eq!(sim.trace().to_text(), sock.trace().to_text(), "{name}");
    }
}

#[test]
fn same_pair_is_fifo() {
    let mut s = Scenario::new(0);
    s.push(adopt("p", &["group(g)"])).push(adopt("q", &["group(g)"]));
    for i in 0..20 {
        s.push(Step::Dm {
            from: a("p"),
            to: a("q"),
            kind: "m".into(),
            body: format!("{i}"),
        });
    }
    for seed in 0..5 {
        let net = run(
            &s,
            &RunOptions {
                seed: Some(seed),
                ..Default::default()
            },
        )
        .unwrap();
        let bodies: Vec<String> = net
            .inbox(&a("q"))
            .iter()
            .map(|r| r.msg.args()[1].as_str().unwrap().to_string())
            .collect();
        let expected: Vec<String> = (0..20).map(|i| i.to_string()).collect();
        assert_eq!(bodies, expected);
    }
}

#[test]
fn seeds_change_interleaving_not_outcomes() {
    let s = load_fixture("revocation");
    let mut orders = BTreeSet::new();
    for seed in 0..10 {
        let net = run_fixture(
            "revocation",
            RunOptions {
                seed: Some(seed),
                ..Default::default()
            },
        );
        assert!(check_all(net.trace()).passed(), "seed {seed}");
        let arrivals: Vec<u64> = net
            .trace()
            .entries()
            .iter()
            .filter_map(|e| match e {
                Entry::Arrive { env, .. } => Some(*env),
                _ => None,
            })
            .collect();
        orders.insert(arrivals);
        assert!(!net.is_live(&a("ben")));
    }
    assert!(orders.len() > 1, "10 seeds of {} steps never reordered", s.steps.len());
}

#[test]
fn drain_leaves_nothing_pending() {
    let mut net = run_fixture("basic", RunOptions::default());
    assert_eq!(net.pending(), 0);
    net.dm(&a("alice"), &a("bob"), "memo", "x").unwrap();
    assert_eq!(net.pending(), 1);
    net.drain();
    assert_eq!(net.pending(), 0);
    assert!(!net.step());
}

#[test]
fn forged_cross_group_delivery_is_reported() {
    let net = run_fixture("dm", RunOptions::default());
    let mut trace = net.into_trace();
    // the discarded t1 -> t2 message: an arrival evaluation with no rule
    let (pos, eval) = trace
        .entries()
        .iter()
        .enumerate()
        .find_map(|(i, e)| match e {
            Entry::Eval { id, agent, rule: None, event, .. } if agent.as_str() == "nia" && event.is("arrived", 3) => {
                Some((i, *id))
            }
            _ => None,
        })
        .expect("discarded dm");
    assert!(check(&trace, &[Suite::GroupIsolation]).passed());
    trace.entries_mut().insert(
        pos + 1,
        Entry::Deliver {
            eval,
            to: a("nia"),
            from: t("mo"),
            msg: t("dm(#memo#, \"t1 to t2\")"),
        },
    );
    let report = check(&trace, &[Suite::GroupIsolation]);
    let v: Vec<_> = report.violations.iter().collect();
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].index, pos + 1);
}

#[test]
fn unmediated_delivery_is_reported() {
    let net = run_fixture("basic", RunOptions::default());
    let mut trace = net.into_trace();
    let eval = trace
        .entries()
        .iter()
        .find_map(|e| match e {
            Entry::Eval { id, agent, .. } if agent.as_str() == "carol" => Some(*id),
            _ => None,
        })
        .unwrap();
    let at = trace.len();
    trace.entries_mut().push(Entry::Deliver {
        eval,
        to: a("carol"),
        from: t("alice"),
        msg: t("dm(#memo#, \"sneaky\")"),
    });
    let report = check(&trace, &[Suite::DualMediation]);
    assert!(report.violations.iter().any(|v| v.index == at));
}

#[test]
fn tampered_snapshot_breaks_custody() {
    let net = run_fixture("profile", RunOptions::default());
    let mut trace = net.into_trace();
    let at = trace
        .entries()
        .iter()
        .rposition(|e| matches!(e, Entry::Snapshot { .. }))
        .unwrap();
    if let Entry::Snapshot { state, .. } = &mut trace.entries_mut()[at] {
        state.push(t("role(ceo)"));
    }
    let report = check(&trace, &[Suite::StateCustody]);
    assert_eq!(report.violations.len(), 1);
    assert_eq!(report.violations[0].index, at);
}

#[test]
fn unknown_agent_aborts_the_run() {
    let mut s = Scenario::new(0);
    s.push(adopt("x", &["group(g)"])).push(Step::Dm {
        from: a("x"),
        to: a("ghost"),
        kind: "m".into(),
        body: "?".into(),
    });
    match run(&s, &RunOptions::default()) {
        Err(RunError::Step { step: 1, source: SimError::UnknownAgent(n) }) => assert_eq!(n, "ghost"),
        other => panic!("unexpected {:?}", other.map(|_| ())),
    }
}

#[test]
fn malformed_scenarios_are_rejected() {
    assert!(Scenario::parse("adopt(alice").is_err());
    assert!(Scenario::parse("teleport(alice)").is_err());
    assert!(Scenario::parse("search(a, any, -1, 3)").is_err());
    let s = Scenario::parse("community(x, \"missing.law\")\n").unwrap();
    assert!(matches!(run(&s, &RunOptions::default()), Err(RunError::Scenario(_))));
}

#[test]
fn bad_law_file_is_reported() {
    let dir = std::env::temp_dir().join(format!("osc-badlaw-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("bad.law"), "law bad;\nr1: UPON sent(X, M, Y) { forward(X, M, Z); }\n").unwrap();
    let s = Scenario::parse("community(x, \"bad.law\")").unwrap();
    let r = run(
        &s,
        &RunOptions {
            base_dir: Some(dir.clone()),
            ..Default::default()
        },
    );
    assert!(matches!(r, Err(RunError::Scenario(osc_core::sim::scenario::ScenarioError::Law { .. }))));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn scenario_text_round_trips() {
    for name in fixture_names() {
        let s = load_fixture(&name);
        let again = Scenario::parse(&s.to_string()).unwrap();
        assert_eq!(again, s, "{name}");
    }
}

#[test]
fn pool_exhaustion_refuses_adoption() {
    let mut s = Scenario::parse("pool(2)").unwrap();
    s.push(adopt("a", &["group(g)"]))
        .push(adopt("b", &["group(g)"]))
        .push(adopt("c", &["group(g)"]));
    let err = run(&s, &RunOptions::default()).map(|_| ()).unwrap_err();
    assert!(matches!(err, RunError::Step { step: 2, .. }), "{err}");
}
