use critlab_core::loewner::{markov_correlation, sample_driving, LoewnerState};

#[test]
fn increments_forget_the_past() {
    let ensemble: Vec<_> = (0..4000)
        .map(|k| sample_driving(6.0, 400, 2.5e-3, 900 + k).unwrap())
        .collect();
    for (t_e, t) in [(0.25, 0.5), (0.5, 1.0), (0.1, 0.9)] {
        let (corr, se) = markov_correlation(&ensemble, t_e, t).unwrap();
        assert!(corr.abs() < 4.0 * se, "corr({t_e}, {t}) = {corr} with se {se}");
    }
}

#[test]
fn normalization_holds_every_thousand_steps() {
    let d = sample_driving(4.0, 5000, 2e-4, 31).unwrap();
    let mut state = LoewnerState::default();
    for k in 1..d.times.len() {
        state.push(d.values[k], d.times[k] - d.times[k - 1]);
        if k % 1000 == 0 {
            let defect = state.normalization_defect(1e4);
            assert!(defect < 1e-6, "defect {defect} after {k} steps");
        }
    }
}
