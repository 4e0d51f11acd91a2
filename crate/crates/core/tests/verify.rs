use rt_core::verify::*;

#[test]
fn suite_names_round_trip() {
    for s in Suite::ALL {
        assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
    }
    assert!("nope".parse::<Suite>().is_err());
}

#[test]
fn levels_halve_spacing() {
    assert_eq!(levels(17), vec![17, 33, 65]);
}

#[test]
fn row_checks() {
    let hs = [0.1, 0.05, 0.025];
    assert!(Row::new("a", vec![4.0, 1.0, 0.25], &hs, Check::OrderAtLeast(1.9)).pass);
    assert!(!Row::new("a", vec![4.0, 2.0, 1.0], &hs, Check::OrderAtLeast(1.9)).pass);
    assert!(Row::new("a", vec![3.0, 2.0, 1.0], &hs, Check::Decays).pass);
    assert!(!Row::new("a", vec![3.0, 3.0, 1.0], &hs, Check::Decays).pass);
    assert!(!Row::new("a", vec![f64::NAN], &hs, Check::AtMost(1.0)).pass);
    let r = Row::new("a", vec![0.5, 2.0], &hs, Check::AtLeast(1.0));
    assert_eq!(r.measured, 0.5);
    assert!(!r.pass);
}

#[test]
fn small_resolution_is_rejected() {
    let opts = VerifyOptions { res: Some(5), ..Default::default() };
    assert!(run_suite(Suite::Calculus, &opts).is_err());
}

#[test]
fn calculus_and_elliptic_suites_pass() {
    for s in [Suite::Calculus, Suite::Elliptic] {
        let rep = run_suite(s, &VerifyOptions::default()).unwrap();
        println!("{}", rep.render());
        assert!(rep.passed());
        assert!(rep.render().contains("overall PASS"));
    }
}

#[test]
fn gauge_and_roundtrip_suites_pass() {
    for s in [Suite::Gauge, Suite::Roundtrip] {
        let rep = run_suite(s, &VerifyOptions { seed: 11, ..Default::default() }).unwrap();
        println!("{}", rep.render());
        assert!(rep.passed());
    }
}

#[test]
fn zero_amplitude_suites_are_trivial() {
    for s in [Suite::Gauge, Suite::Roundtrip] {
        let opts = VerifyOptions { amplitude: Some(0.0), res: Some(17), ..Default::default() };
        let rep = run_suite(s, &opts).unwrap();
        assert!(rep.passed(), "{}", rep.render());
    }
}
