use proptest::prelude::*;
use safl::learnability::{
    adversarial_select, centralized_baseline, check_positively_related, erm_threshold, impossibility_failure_rate,
    impossibility_trial, pac_rate_experiment, sample_mixture, ImpossibilityInstance, Point, Sample,
    ThresholdInstance,
};
use safl::rng::{Purpose, Stream};

fn unit(t_star: f64) -> ThresholdInstance {
    ThresholdInstance { a: 0.0, b: 1.0, a_d: 0.0, b_d: 1.0, t_star, lambda1: 0.0, lambda2: 1.0 }
}

fn samples(x1: usize, x2: usize) -> Vec<Sample> {
    let mut v = vec![(Point::X1, true); x1];
    v.extend(vec![(Point::X2, false); x2]);
    v
}

fn count(s: &[Sample], p: Point) -> usize {
    s.iter().filter(|(q, _)| *q == p).count()
}

#[test]
fn adversarial_selection_examples() {
    let sel = adversarial_select(&samples(10, 0), 4);
    assert_eq!((sel.len(), count(&sel, Point::X1)), (4, 4));
    let sel = adversarial_select(&samples(7, 3), 7);
    assert_eq!((count(&sel, Point::X1), count(&sel, Point::X2)), (7, 0));
    let sel = adversarial_select(&samples(5, 5), 7);
    assert_eq!((count(&sel, Point::X1), count(&sel, Point::X2)), (5, 2));
}

#[test]
fn full_participation_learns_exactly() {
    let inst = ImpossibilityInstance::full_participation(10, 20, 1.0 / 80.0, 10_000).unwrap();
    assert_eq!(inst.budget, 200);
    let zero = (0..inst.trials)
        .filter(|&t| impossibility_trial(&inst, &mut Stream::new(1, Purpose::Trial, t as u64, 0)).risk == 0.0)
        .count();
    // P[no x2 among 200 draws] = 0.95^200 ≈ 3.5e-5
    assert!(zero as f64 >= 0.99 * inst.trials as f64, "{zero}");
    let report = impossibility_failure_rate(&inst, 1).unwrap();
    assert!(report.failure.fraction <= 0.01);
}

#[test]
fn trials_without_rare_point_lose_its_mass() {
    let inst = ImpossibilityInstance::new(10, 20, 0.5, 1000).unwrap();
    let mut seen = 0;
    for t in 0..2000u64 {
        let out = impossibility_trial(&inst, &mut Stream::new(2, Purpose::Trial, t, 0));
        // the selector keeps no x2 whenever the x1 draws fill the budget
        if inst.total_samples() - out.rare_count >= inst.budget {
            assert_eq!(out.risk, 4.0 * inst.epsilon);
            seen += 1;
        }
    }
    assert!(seen > 0);
}

#[test]
fn half_capacity_mean_risk_and_failure_rate() {
    let inst = ImpossibilityInstance::new(10, 20, 0.5, 10_000).unwrap();
    let report = impossibility_failure_rate(&inst, 3).unwrap();
    assert!(report.mean_risk >= inst.epsilon, "{}", report.mean_risk);
    assert!(report.failure.lower > 1.0 / 20.0, "{:?}", report.failure);
    assert!(report.rare_excess.upper <= 17.0 / 20.0, "{:?}", report.rare_excess);
}

#[test]
fn failure_rate_is_sample_size_independent() {
    for omega in [0.25, 0.5, 0.75] {
        let small = impossibility_failure_rate(&ImpossibilityInstance::new(10, 20, omega, 2000).unwrap(), 4).unwrap();
        let large = impossibility_failure_rate(&ImpossibilityInstance::new(10, 200, omega, 2000).unwrap(), 4).unwrap();
        assert!(small.failure.lower > 0.05 && large.failure.lower > 0.05, "omega {omega}");
        assert!(large.failure.upper >= small.failure.lower, "omega {omega}");
    }
}

#[test]
fn too_few_trials_rejected() {
    let inst = ImpossibilityInstance::new(10, 20, 0.5, 999).unwrap();
    assert!(impossibility_failure_rate(&inst, 0).is_err());
    assert!(ImpossibilityInstance::new(10, 20, 1.0, 1000).is_err());
}

#[test]
fn pure_p_sample_passes_ks_test() {
    let inst = ThresholdInstance { a: -1.0, b: 3.0, a_d: 0.0, b_d: 1.0, t_star: 0.5, lambda1: 0.0, lambda2: 1.0 };
    let n = 2000;
    let mut xs: Vec<f64> = sample_mixture(&inst, n, &mut Stream::new(5, Purpose::Trial, 0, 0)).into_iter().map(|s| s.0).collect();
    xs.sort_by(f64::total_cmp);
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = (x + 1.0) / 4.0;
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 1.358 / (n as f64).sqrt(), "{ks}");
}

#[test]
fn mixture_support_and_labels() {
    let inst = ThresholdInstance::with_counts(0.0, 1.0, 0.2, 0.7, 0.5, 900, 100).unwrap();
    let s = sample_mixture(&inst, 1000, &mut Stream::new(6, Purpose::Trial, 0, 0));
    assert!(s.iter().all(|&(x, _)| (0.0..=1.0).contains(&x)));
    assert!(s.iter().all(|&(x, y)| y == (x >= 0.5)));
    assert_eq!(s[100..].iter().filter(|(x, _)| *x < 0.2 || *x > 0.7).count(), 0);
}

#[test]
fn erm_examples() {
    assert_eq!(erm_threshold(&[(0.2, false), (0.8, true)]).unwrap(), 0.5);
    assert_eq!(erm_threshold(&[(0.3, true), (0.9, true), (0.5, true)]).unwrap(), 0.3);
    assert!(erm_threshold(&[]).is_err());
    let only_neg = erm_threshold(&[(0.4, false), (0.1, false)]).unwrap();
    assert!(only_neg > 0.4 && only_neg < 0.4 + 1e-12);
}

#[test]
fn erm_concentrates() {
    let inst = unit(0.4);
    let trials = 1000;
    let close = (0..trials)
        .filter(|&t| {
            let s = sample_mixture(&inst, 1000, &mut Stream::new(7, Purpose::Trial, t, 0));
            (erm_threshold(&s).unwrap() - 0.4).abs() <= 0.02
        })
        .count();
    assert!(close as f64 >= 0.99 * trials as f64);
}

#[test]
fn pac_slope_on_pure_p() {
    let res = pac_rate_experiment(&unit(0.5), &[100, 1000, 10_000, 100_000], 200, 8).unwrap();
    assert!((-1.25..=-0.8).contains(&res.fit.slope), "{:?}", res.fit);
}

#[test]
fn pac_slope_on_mixture_and_d_only_contrast() {
    let inst = ThresholdInstance::with_counts(0.0, 1.0, 0.2, 0.7, 0.5, 9, 1).unwrap();
    let res = pac_rate_experiment(&inst, &[100, 1000, 10_000, 100_000], 200, 9).unwrap();
    assert!((-1.25..=-0.75).contains(&res.fit.slope), "{:?}", res.fit);
    let d_only = ThresholdInstance { lambda1: 1.0, lambda2: 0.0, ..inst };
    let res = pac_rate_experiment(&d_only, &[100, 1000, 10_000], 200, 9).unwrap();
    assert!(res.mean_excess.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn centralized_baseline_order_statistics() {
    let n_t = 1000;
    let got = centralized_baseline(&unit(0.5), n_t, 2000, 10).unwrap();
    // midpoint of the two order statistics around t*: E|mid − t*| ≈ 1/(2(n+1))
    let oracle = 1.0 / (2.0 * (n_t as f64 + 1.0));
    assert!(got >= oracle / 2.0 && got <= oracle * 2.0, "{got}");
    let coarse = 1.0 / (n_t as f64 + 1.0);
    assert!(got >= coarse / 2.0 && got <= coarse * 2.0, "{got}");
    let grid: Vec<f64> = [10, 100, 1000, 10_000].iter().map(|&n| centralized_baseline(&unit(0.5), n, 500, 10).unwrap()).collect();
    assert!(grid.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn mixture_no_worse_than_centralized() {
    let inst = ThresholdInstance::with_counts(0.0, 1.0, 0.2, 0.7, 0.5, 9, 1).unwrap();
    let grid = [1000, 10_000, 100_000];
    let mixed = pac_rate_experiment(&inst, &grid, 300, 11).unwrap();
    for (&n, &m) in grid.iter().zip(&mixed.mean_excess) {
        let central = centralized_baseline(&inst, n / 10, 300, 11).unwrap();
        assert!(m <= 1.15 * central, "n_T {}: {m} vs {central}", n / 10);
    }
}

#[test]
fn positively_related_examples() {
    let grid: Vec<f64> = (0..41).map(|i| 0.25 + 0.5 * i as f64 / 40.0).collect();
    let pure_d = ThresholdInstance { a: 0.0, b: 1.0, a_d: 0.25, b_d: 0.75, t_star: 0.5, lambda1: 1.0, lambda2: 0.0 };
    let fit = check_positively_related(&pure_d, &grid).unwrap();
    assert!((fit.alpha - 0.5).abs() <= 0.01 && (fit.beta.unwrap() - 1.0).abs() <= 0.01, "{fit:?}");
    let same = ThresholdInstance { a_d: 0.0, b_d: 1.0, ..pure_d };
    let unit_grid: Vec<f64> = (0..21).map(|i| i as f64 / 20.0).collect();
    assert_eq!(check_positively_related(&same, &unit_grid).unwrap().alpha, 0.0);
    let half = ThresholdInstance { lambda1: 0.5, lambda2: 0.5, ..pure_d };
    let fit = check_positively_related(&half, &grid).unwrap();
    assert!((fit.beta.unwrap() - 1.0).abs() <= 0.01, "{fit:?}");
    let outside = ThresholdInstance { t_star: 0.9, ..pure_d };
    assert!(check_positively_related(&outside, &grid).is_err());
}

#[test]
fn analytic_excess_matches_monte_carlo() {
    let inst = ThresholdInstance { a: -0.5, b: 1.5, a_d: 0.0, b_d: 1.0, t_star: 0.3, lambda1: 0.0, lambda2: 1.0 };
    let mut pick = Stream::new(12, Purpose::Trial, 0, 0);
    let n = 1_000_000;
    for k in 0..20u64 {
        let t = pick.uniform_in(inst.a, inst.b);
        let mut rng = Stream::new(12, Purpose::Trial, 1, k);
        let wrong = (0..n).filter(|_| {
            let x = rng.uniform_in(inst.a, inst.b);
            (x >= t) != inst.label(x)
        }).count();
        let p_hat = wrong as f64 / n as f64;
        let p = inst.excess_p(t);
        let se = (p * (1.0 - p) / n as f64).sqrt().max(1.0 / n as f64);
        assert!((p_hat - p).abs() <= 3.0 * se, "t {t}: {p_hat} vs {p}");
    }
}

#[test]
fn disagreement_mass_equals_excess_error() {
    // realizable threshold class: P(h_t ≠ h*) = |t − t*| / (b − a) on [a, b]
    let inst = ThresholdInstance { a: 2.0, b: 6.0, a_d: 3.0, b_d: 5.0, t_star: 4.5, lambda1: 0.0, lambda2: 1.0 };
    for i in 0..=40 {
        let t = 2.0 + 4.0 * i as f64 / 40.0;
        assert!((inst.excess_p(t) - (t - 4.5f64).abs() / 4.0).abs() <= 1e-15);
    }
}

proptest! {
    #[test]
    fn erm_has_zero_empirical_error_on_realizable_data(
        xs in proptest::collection::vec(-100.0f64..100.0, 1..200),
        t_star in -100.0f64..100.0,
    ) {
        let s: Vec<(f64, bool)> = xs.iter().map(|&x| (x, x >= t_star)).collect();
        let t = erm_threshold(&s).unwrap();
        prop_assert!(s.iter().all(|&(x, y)| (x >= t) == y));
    }

    #[test]
    fn selection_counts(x1 in 0usize..50, x2 in 0usize..50, budget_frac in 0.0f64..1.0) {
        let total = x1 + x2;
        let budget = (budget_frac * total as f64) as usize;
        let sel = adversarial_select(&samples(x1, x2), budget);
        prop_assert_eq!(sel.len(), budget);
        prop_assert_eq!(count(&sel, Point::X1), x1.min(budget));
    }
}
