use aggrec_core::oracle::{kmeans_reference, markov_reference};
use aggrec_core::{
    evaluate_program, extract_final_delta, parse_program, EvalMode, EvalOptions, FactSet, Value,
};

const MARKOV: &str = "
next(0, Cit, sum<In>) :- mov(Cit, Cit, _), In = 100000.
next(J1, To, sum<In>) :- next(J, Cit, Pop), mov(Cit, To, Perc),
                         In = Pop * Perc, J1 = J + 1, J1 <= 1000.
finalstep(max<J>) :- next(J, _, _).
fpop(Cit, Pop) :- finalstep(J), next(J, Cit, Pop).
";

const KMEANS: &str = "
center(0, Cno, Dim, Val) :- init(Cno, Dim, Val).
dist(J, Pno, Cno, sum<SqDis>) :- point(Pno, Dim, Val), center(J, Cno, Dim, CVal),
                                 SqDis = (Val - CVal) * (Val - CVal).
mindist(J, Pno, min<DCno>) :- dist(J, Pno, Cno, DSm), encd(DSm, Cno, DCno).
center(J1, Cno, Dim, avg<Val>) :- mindist(J, Pno, DmCno), decd(DmCno, _, Cno),
                                  point(Pno, Dim, Val), J1 = J + 1.
";

fn two_cities() -> FactSet {
    let mut f = FactSet::new();
    for (a, b, p) in [
        ("a", "a", 0.9),
        ("a", "b", 0.1),
        ("b", "b", 0.8),
        ("b", "a", 0.2),
    ] {
        f.insert("mov", vec![a.into(), b.into(), p.into()]);
    }
    f
}

fn opts(mode: EvalMode) -> EvalOptions {
    EvalOptions {
        mode,
        ..EvalOptions::default()
    }
}

fn float(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn transitive_closure() {
    let p = parse_program("tc(X, Y) :- e(X, Y). tc(X, Z) :- tc(X, Y), e(Y, Z).").unwrap();
    let mut edb = FactSet::new();
    edb.insert("e", vec!["a".into(), "b".into()]);
    edb.insert("e", vec!["b".into(), "c".into()]);
    let r = evaluate_program(&p, &edb, &EvalOptions::default()).unwrap();
    assert_eq!(r.facts.count("tc"), 3);
    assert!(r
        .facts
        .get("tc")
        .unwrap()
        .contains(&vec!["a".into(), "c".into()]));
}

#[test]
fn five_edge_path_takes_five_iterations() {
    let p = parse_program("tc(X, Y) :- e(X, Y). tc(X, Z) :- tc(X, Y), e(Y, Z).").unwrap();
    let mut edb = FactSet::new();
    for i in 0..5i64 {
        edb.insert("e", vec![i.into(), (i + 1).into()]);
    }
    for mode in [EvalMode::Completed, EvalMode::Naive] {
        let r = evaluate_program(&p, &edb, &opts(mode)).unwrap();
        assert_eq!(r.facts.count("tc"), 15);
        assert_eq!(r.stats.strata[0].iterations, 5, "{mode:?}");
    }
}

#[test]
fn markov_first_step() {
    let p = parse_program(MARKOV).unwrap();
    let r = evaluate_program(&p, &two_cities(), &EvalOptions::default()).unwrap();
    let next = r.facts.get("next").unwrap();
    assert!(next.contains(&vec![1.into(), "a".into(), 110000.0.into()]));
    assert!(next.contains(&vec![1.into(), "b".into(), 90000.0.into()]));
}

#[test]
fn markov_converges_to_stationary_vector() {
    let p = parse_program(MARKOV).unwrap();
    for mode in [
        EvalMode::Completed,
        EvalMode::Naive,
        EvalMode::StratifiedRewrite,
    ] {
        let r = evaluate_program(&p, &two_cities(), &opts(mode)).unwrap();
        let fpop: Vec<_> = r.facts.tuples("fpop").collect();
        assert_eq!(fpop.len(), 2, "{mode:?}");
        assert!((float(&fpop[0][1]) - 133333.33).abs() < 0.01, "{mode:?}");
        assert!((float(&fpop[1][1]) - 66666.67).abs() < 0.01, "{mode:?}");
    }
}

#[test]
fn markov_stages_follow_power_iteration() {
    let p = parse_program(MARKOV).unwrap();
    let r = evaluate_program(&p, &two_cities(), &EvalOptions::default()).unwrap();
    let m = vec![vec![0.9, 0.1], vec![0.2, 0.8]];
    let tr = markov_reference(&m, &[100000.0, 100000.0], 30).unwrap();
    for (j, v) in tr.iter().enumerate() {
        for (c, city) in ["a", "b"].iter().enumerate() {
            let got = r
                .facts
                .tuples("next")
                .find(|t| t[0] == Value::Int(j as i64) && t[1] == Value::from(*city))
                .map(|t| float(&t[2]))
                .unwrap();
            assert!((got - v[c]).abs() <= 1e-9 * v[c].abs());
        }
    }
}

#[test]
fn final_delta_matches_last_stage() {
    let p = parse_program(MARKOV).unwrap();
    let r = evaluate_program(&p, &two_cities(), &EvalOptions::default()).unwrap();
    let last = extract_final_delta("next", &r.deltas);
    let j = r.facts.tuples("finalstep").next().unwrap()[0].clone();
    let naive: Vec<_> = r
        .facts
        .tuples("next")
        .filter(|t| t[0] == j)
        .cloned()
        .collect();
    assert_eq!(last.tuples("next").cloned().collect::<Vec<_>>(), naive);
}

#[test]
fn retain_latest_keeps_two_stages() {
    let p = parse_program(MARKOV).unwrap();
    let o = EvalOptions {
        retain_latest: true,
        ..EvalOptions::default()
    };
    let r = evaluate_program(&p, &two_cities(), &o).unwrap();
    assert!(r.stats.peak_retained["next"] <= 4);
    assert_eq!(r.facts.count("fpop"), 2);
}

#[test]
fn lloyd_one_dimension() {
    let p = parse_program(KMEANS).unwrap();
    let mut edb = FactSet::new();
    for (i, x) in [0.0, 1.0, 10.0, 11.0].iter().enumerate() {
        edb.insert("point", vec![(i as i64).into(), 1.into(), (*x).into()]);
    }
    edb.insert("init", vec![1.into(), 1.into(), 0.0.into()]);
    edb.insert("init", vec![2.into(), 1.into(), 10.0.into()]);
    let pts: Vec<Vec<f64>> = [0.0, 1.0, 10.0, 11.0].iter().map(|&x| vec![x]).collect();
    let oracle = kmeans_reference(&pts, &[vec![0.0], vec![10.0]], 100).unwrap();
    for mode in [
        EvalMode::Completed,
        EvalMode::Naive,
        EvalMode::StratifiedRewrite,
    ] {
        let r = evaluate_program(&p, &edb, &opts(mode)).unwrap();
        let last = r.stats.final_stage["center"];
        let mut centers: Vec<f64> = r
            .facts
            .tuples("center")
            .filter(|t| t[0] == Value::Int(last))
            .map(|t| float(&t[3]))
            .collect();
        centers.sort_by(f64::total_cmp);
        assert_eq!(centers, vec![0.5, 10.5], "{mode:?}");
        let want: Vec<f64> = oracle.final_centers().iter().map(|c| c[0]).collect();
        assert_eq!(centers, want);
    }
}

#[test]
fn iteration_limit_sets_flag() {
    let p = parse_program("s(0, 1). s(J1, sum<X>) :- s(J, Y), X = Y + 1, J1 = J + 1.").unwrap();
    let o = EvalOptions {
        max_iterations: 10,
        ..EvalOptions::default()
    };
    let r = evaluate_program(&p, &FactSet::new(), &o).unwrap();
    assert!(r.limit_reached);
    assert_eq!(r.facts.count("s"), 11);
}
