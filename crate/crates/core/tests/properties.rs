mod common;

use std::sync::Arc;

use commtype::minimpi::{check_compliance, erase_to_trace, parse_program, trace_to_local, EraseError};
use commtype::protocol::{GlobalAtom, Type};
use commtype::sim::{explore_all_tapes_with, replay, simulate, Order, SimConfig, SimVerdict};
use commtype::tape::DecisionTape;
use commtype::{check_wf, parse_protocol, project_all, LocalAtom, LocalType};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_protocol, run_traces, synthesize_program, TraceOutcome};

fn pre_order_messages(t: &commtype::GlobalType) -> Vec<&GlobalAtom> {
    t.atoms().into_iter().filter(|a| matches!(a, GlobalAtom::Message { .. })).collect()
}

/// Changes the length of the first point-to-point atom, if any.
fn perturb(t: &LocalType) -> Option<LocalType> {
    Some(match t {
        Type::End => return None,
        Type::Prefix(LocalAtom::Send { peer, dtype, len }, k) => {
            Type::Prefix(LocalAtom::Send { peer: *peer, dtype: *dtype, len: len + 1 }, k.clone())
        }
        Type::Prefix(LocalAtom::Receive { peer, dtype, len }, k) => {
            Type::Prefix(LocalAtom::Receive { peer: *peer, dtype: *dtype, len: len + 1 }, k.clone())
        }
        Type::Prefix(a, k) => Type::Prefix(a.clone(), Arc::new(perturb(k)?)),
        Type::Loop { body, cont } => match perturb(body) {
            Some(b) => Type::Loop { body: Arc::new(b), cont: cont.clone() },
            None => Type::Loop { body: body.clone(), cont: Arc::new(perturb(cont)?) },
        },
        Type::Choice { yes, no, cont } => match perturb(yes) {
            Some(y) => Type::Choice { yes: Arc::new(y), no: no.clone(), cont: cont.clone() },
            None => Type::Choice { yes: yes.clone(), no: no.clone(), cont: Arc::new(perturb(cont)?) },
        },
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn projection_preserves_messages_collectives_and_structure(seed in any::<u64>()) {
        let (p, inst) = random_protocol(&mut ChaCha8Rng::seed_from_u64(seed));
        let locals = project_all(&p, &inst).unwrap().locals;
        let env = inst.env();
        let global_colls: Vec<LocalAtom> = p
            .body
            .atoms()
            .into_iter()
            .filter_map(|a| match a {
                GlobalAtom::Collective(c) => Some(LocalAtom::Collective(c.try_map(|e| e.eval(env)).unwrap())),
                GlobalAtom::Message { .. } => None,
            })
            .collect();
        let messages = pre_order_messages(&p.body);
        let (mut sends, mut receives) = (0, 0);
        for (r, local) in locals.iter().enumerate() {
            let r = r as i64;
            prop_assert_eq!(local.shape(), p.body.shape());
            let colls: Vec<LocalAtom> = local.atoms().into_iter().filter(|a| a.is_collective()).cloned().collect();
            prop_assert_eq!(&colls, &global_colls);
            // The rank's point-to-point atoms are the messages involving it,
            // in global order.
            let expected: Vec<LocalAtom> = messages
                .iter()
                .filter_map(|m| {
                    let GlobalAtom::Message { src, dst, dtype, len } = m else { unreachable!() };
                    let (s, d, n) = (src.eval(env).unwrap(), dst.eval(env).unwrap(), len.eval(env).unwrap());
                    if s == r {
                        Some(LocalAtom::Send { peer: d, dtype: *dtype, len: n })
                    } else if d == r {
                        Some(LocalAtom::Receive { peer: s, dtype: *dtype, len: n })
                    } else {
                        None
                    }
                })
                .collect();
            let p2p: Vec<LocalAtom> = local.atoms().into_iter().filter(|a| !a.is_collective()).cloned().collect();
            prop_assert_eq!(&p2p, &expected);
            sends += p2p.iter().filter(|a| matches!(a, LocalAtom::Send { .. })).count();
            receives += p2p.iter().filter(|a| matches!(a, LocalAtom::Receive { .. })).count();
        }
        prop_assert_eq!(sends, messages.len());
        prop_assert_eq!(receives, messages.len());
    }

    #[test]
    fn wf_is_deterministic_and_guards_projection(seed in any::<u64>()) {
        let (p, inst) = random_protocol(&mut ChaCha8Rng::seed_from_u64(seed));
        let report = check_wf(&p, &inst);
        prop_assert_eq!(&report, &check_wf(&p, &inst));
        prop_assert!(report.is_ok());
        prop_assert!(project_all(&p, &inst).is_ok());
    }

    #[test]
    fn synthesized_programs_comply_and_never_deadlock(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, inst) = random_protocol(&mut rng);
        let src = synthesize_program(&p);
        let prog = parse_program(&src).unwrap();
        let report = check_compliance(&prog, &p, &inst).unwrap();
        prop_assert!(report.is_compliant(), "{:?}\n{}", report.diagnostics().map(|d| d.report_line()).collect::<Vec<_>>(), src);
        prop_assert_eq!(&report, &check_compliance(&prog, &p, &inst).unwrap());

        // Soundness hook: compliant programs erase to traces that complete
        // under synchronous semantics, whatever the shared decisions.
        for _ in 0..4 {
            let tape = DecisionTape::new((0..24).map(|_| rng.gen_bool(0.4)).collect());
            let traces: Result<Vec<_>, _> = (0..p.nprocs)
                .map(|r| erase_to_trace(&prog, r, p.nprocs, inst.env(), &tape))
                .collect();
            let traces = match traces {
                Ok(t) => t,
                Err(EraseError::TapeExhausted { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            prop_assert_eq!(run_traces(&traces), TraceOutcome::Completed);
            let locals: Vec<LocalType> = traces.iter().map(|t| trace_to_local(t)).collect();
            prop_assert!(simulate(&locals, &DecisionTape::default()).unwrap().is_all_done());
        }
    }

    #[test]
    fn verdicts_agree_across_orders_and_witnesses_replay(seed in any::<u64>(), victim in 0usize..4) {
        let (p, inst) = random_protocol(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut locals = project_all(&p, &inst).unwrap().locals;
        let victim = victim % locals.len();
        if let Some(t) = perturb(&locals[victim]) {
            locals[victim] = t;
        }
        let run = |order| explore_all_tapes_with(&locals, 1, SimConfig { order, ..SimConfig::default() }).unwrap();
        let (fwd, rev) = (run(Order::Forward), run(Order::Reverse));
        prop_assert_eq!(fwd.is_all_done(), rev.is_all_done());
        for v in [fwd, rev] {
            if let SimVerdict::Deadlock(w) = v {
                let text = w.steps_text();
                let steps = commtype::sim::parse_steps(&text).unwrap();
                prop_assert_eq!(&replay(&locals, &steps).unwrap(), &w.state);
            }
        }
    }

    #[test]
    fn parsers_are_total(s in "\\PC{0,80}") {
        let _ = parse_protocol(&s);
        let _ = parse_program(&s);
        let _ = commtype::parse_local_type(&s);
    }

    #[test]
    fn parsers_are_total_on_token_soup(words in proptest::collection::vec(prop_oneof![
        Just("Pi"), Just("nprocs"), Just("loop("), Just("choice("), Just("end"), Just("."), Just(","),
        Just(")"), Just("message(0,1,MPI_INT,1)"), Just("{n:nat|"), Just("}"), Just("3"), Just("-"),
        Just("collloop"), Just("{"), Just("rankif"), Just("(me == 0)"), Just("send"), Just("peer=1"),
        Just("buf=b[1]"), Just("len=1"), Just("init"), Just("finalize"), Just("else"), Just("x:"),
    ], 0..30)) {
        let s = words.join(" ");
        let _ = parse_protocol(&s);
        let _ = parse_program(&s);
        let _ = commtype::parse_local_type(&s);
    }
}

#[test]
fn running_example_erased_traces_complete_for_all_small_tapes() {
    let prog = parse_program(common::FDIFF_MMP).unwrap();
    let params: commtype::Env = [("size".to_string(), 9)].into_iter().collect();
    for iters in 0..=3 {
        for take in [true, false] {
            let tape = DecisionTape::default().loop_iters(iters).choice(take);
            let traces: Vec<_> = (0..3).map(|r| erase_to_trace(&prog, r, 3, &params, &tape).unwrap()).collect();
            assert_eq!(run_traces(&traces), TraceOutcome::Completed);
        }
    }
}

#[test]
fn running_example_projections_under_a_fixed_tape() {
    let p = parse_protocol(common::FDIFF_CTY).unwrap();
    let locals = project_all(&p, &commtype::Instantiation::new().with("size", 9)).unwrap().locals;
    let tape = DecisionTape::default().loop_iters(1).choice(true);
    assert!(simulate(&locals, &tape).unwrap().is_all_done());
}

#[test]
fn cyclic_sends_between_ranks_zero_and_two() {
    let p = parse_protocol(common::FDIFF_CTY).unwrap();
    let mut locals = project_all(&p, &commtype::Instantiation::new().with("size", 9)).unwrap().locals;
    // Both start with a send to the other before anything else.
    let lead = |peer| LocalType::prefix(LocalAtom::Send { peer, dtype: commtype::protocol::DataKind::Int, len: 1 }, LocalType::End);
    locals[0] = (*lead(2).then(Arc::new(locals[0].clone()))).clone();
    locals[2] = (*lead(0).then(Arc::new(locals[2].clone()))).clone();
    let v = simulate(&locals, &DecisionTape::default().loop_iters(1).choice(true)).unwrap();
    let w = v.witness().expect("deadlock");
    assert!(matches!(w.blocked[0], Some(commtype::sim::Head::Atom(LocalAtom::Send { peer: 2, .. }))));
    assert!(matches!(w.blocked[2], Some(commtype::sim::Head::Atom(LocalAtom::Send { peer: 0, .. }))));
}
