use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recurpred_core::martingale_lab::{estimate_sup_average, DifferenceGenerator, MartingaleSpec};
use recurpred_core::odometer::{
    d_value, membership, sample_odometer_path, special_time_conditional_mean, stage_exponents, values_from_state,
    find_special_time, brute_force_conditional_mean, OdometerSchedule, OdometerSet, OdometerState, TruncatedMap,
    ENUMERATION_CAP,
};
use recurpred_core::predictor::{compute_recurrence_trace, r_k_infinite};
use recurpred_core::processes::{
    derive_seed, hmm_filter_conditional_mean, sample_path, BackwardSampler, DiscreteLaw, MarkovChain, ProcessSpec,
};

fn chain() -> MarkovChain {
    MarkovChain::binary(0.3, 0.8).unwrap()
}

#[test]
fn picked_value_has_stationary_marginal() {
    let spec = ProcessSpec::Markov(chain());
    let mut ones = 0;
    let mut count = 0;
    for seed in 0..10_000u64 {
        let xs = sample_path(&spec, 64, seed).unwrap().values;
        let trace = compute_recurrence_trace(&xs).unwrap();
        if let Some(&x) = trace.picked_values.first() {
            ones += usize::from(x == 1.0);
            count += 1;
        }
    }
    let freq = ones as f64 / count as f64;
    assert!(count > 9_900);
    assert!((freq - 0.6).abs() < 0.025, "X_(-tau_1) frequency of ones {freq}");
}

#[test]
fn markov_marginal_is_stationary_over_time() {
    let spec = ProcessSpec::Markov(chain());
    let (mut first, mut middle) = (0usize, 0usize);
    for seed in 0..10_000u64 {
        let xs = sample_path(&spec, 20, seed).unwrap().values;
        first += usize::from(xs[0] == 1.0);
        middle += usize::from(xs[10] == 1.0);
    }
    let diff = (first as f64 - middle as f64).abs() / 10_000.0;
    assert!(diff < 0.03, "marginals differ by {diff}");
}

#[test]
fn indicator_process_is_finitarily_markov_but_not_order_one() {
    let chain = MarkovChain::new(
        vec![0.0, 1.0, 2.0],
        vec![vec![0.1, 0.2, 0.7], vec![0.5, 0.3, 0.2], vec![0.6, 0.1, 0.3]],
    )
    .unwrap();
    let spec = ProcessSpec::function_of_markov(chain, 1).unwrap();
    let tail = [1.0, 0.0, 0.0];
    let base = hmm_filter_conditional_mean(&spec, &tail).unwrap();
    for prefix in [vec![0.0], vec![1.0], vec![0.0, 0.0, 1.0, 0.0]] {
        let mut h = prefix.clone();
        h.extend_from_slice(&tail);
        let v = hmm_filter_conditional_mean(&spec, &h).unwrap();
        assert!((v - base).abs() < 1e-12, "extension {prefix:?} moved the conditional mean");
    }
    // Without a one in the window the law still depends on how many zeros were seen.
    let a = hmm_filter_conditional_mean(&spec, &[0.0, 0.0]).unwrap();
    let b = hmm_filter_conditional_mean(&spec, &[1.0, 0.0]).unwrap();
    assert!((a - b).abs() > 1e-3);
}

#[test]
fn ar1_conditional_mean_matches_binned_monte_carlo() {
    let spec = ProcessSpec::ar1(0.5, 1.0).unwrap();
    let xs = sample_path(&spec, 400_000, 17).unwrap().values;
    let (mut prev_sum, mut next_sum, mut n) = (0.0, 0.0, 0.0);
    for w in xs.windows(2) {
        if (0.9..1.1).contains(&w[0]) {
            prev_sum += w[0];
            next_sum += w[1];
            n += 1.0;
        }
    }
    let want = 0.5 * prev_sum / n;
    assert!((next_sum / n - want).abs() < 4.0 / n.sqrt(), "binned mean {} vs {want}", next_sum / n);
}

#[test]
fn backward_estimator_is_unbiased_on_iid() {
    let q = 0.3;
    let spec = ProcessSpec::Iid(DiscreteLaw::bernoulli(q).unwrap());
    let runs = 2_000;
    let mut total = 0.0;
    for seed in 0..runs {
        let mut back = BackwardSampler::new(&spec, seed).unwrap();
        total += r_k_infinite(|| back.next_back(), 2, 1_000_000).unwrap();
    }
    let mean = total / runs as f64;
    assert!((mean - q).abs() < 4.0 * (q * (1.0 - q) / 2.0 / runs as f64).sqrt(), "mean {mean}");
}

fn hand() -> OdometerSchedule {
    "5,9,15".parse().unwrap()
}

#[test]
fn e_sets_are_independent() {
    let s = hand();
    let n = 1_000_000u64;
    let (mut e3, mut e5, mut both) = (0u64, 0u64, 0u64);
    for i in 0..n {
        let mut st = OdometerState::from_seed(derive_seed(33, i));
        let a = membership(&mut st, OdometerSet::E(3), &s).unwrap();
        let b = membership(&mut st, OdometerSet::E(5), &s).unwrap();
        e3 += u64::from(a);
        e5 += u64::from(b);
        both += u64::from(a && b);
    }
    let (p3, p5) = (e3 as f64 / n as f64, e5 as f64 / n as f64);
    let joint = both as f64 / n as f64;
    let p = p3 * p5;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((joint - p).abs() <= 3.0 * se, "joint {joint} vs product {p}");
}

#[test]
fn truncated_expectations_match_closed_forms() {
    let s = hand();
    let map = TruncatedMap::new(&s);
    let size = 1u64 << s.width();
    let (mut v_total, mut u_total) = (0.0, 0.0);
    for x in 0..size {
        let f = map.eval(x);
        if f >= 1.0 {
            v_total += f;
        } else {
            u_total += f;
        }
    }
    let ev_exact: f64 = s.stages().map(|k| 3f64.powi(-(stage_exponents(k).unwrap().0 as i32))).sum();
    let eu_exact: f64 = s.stages().map(|k| d_value(k) * 2f64.powi(-(s.l(k).unwrap() as i32 - 1))).sum();
    assert!((v_total / size as f64 - ev_exact).abs() < 1e-12);
    assert!((u_total / size as f64 - eu_exact).abs() < 1e-15);

    // Partial sums increase with K and each equals its closed form.
    let mut prev = 0.0;
    for k in s.stages() {
        let part = s.truncated(k);
        let m = TruncatedMap::new(&part);
        let ev: f64 = (0..1u64 << part.width()).map(|x| m.eval(x)).filter(|f| *f >= 1.0).sum::<f64>()
            / (1u64 << part.width()) as f64;
        let closed: f64 = part.stages().map(|j| 3f64.powi(-(stage_exponents(j).unwrap().0 as i32))).sum();
        assert!((ev - closed).abs() < 1e-12 && ev > prev);
        prev = ev;
    }

    // Monte Carlo mean of v within 3 standard errors.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 1_000_000;
    let samples: Vec<f64> = (0..n)
        .map(|_| {
            let f = map.eval(rng.random::<u64>() & map.mask());
            if f >= 1.0 { f } else { 0.0 }
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - ev_exact).abs() <= 3.0 * (var / n as f64).sqrt(), "mc {mean} vs {ev_exact}");
}

#[test]
fn path_values_lie_in_the_alphabet() {
    let s = hand();
    let mut allowed = vec![0.0];
    for k in s.stages() {
        allowed.push(d_value(k));
        allowed.push(s.c_value(k).unwrap());
    }
    let xs = sample_odometer_path(&s, 100_000, 8).unwrap().values;
    assert!(xs.iter().all(|x| allowed.contains(x)));
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let ev: f64 = s.stages().map(|k| 3f64.powi(-(stage_exponents(k).unwrap().0 as i32))).sum();
    assert!((mean - ev).abs() < 0.1 * ev, "path mean {mean} vs {ev}");
}

#[test]
fn window_mean_respects_bounds_below_the_last_stage() {
    let s = hand();
    for k in [3, 4] {
        let (a, _) = stage_exponents(k).unwrap();
        let l = s.l(k).unwrap() as i32;
        let lower = 0.5 * 2f64.powi(l) * (2.0f64 / 3.0).powi(a as i32 + 1);
        let upper = 4.0 * 2f64.powi(l) * (2.0f64 / 3.0).powi(a as i32);
        for seed in 0..3 {
            let sp = find_special_time(&s, k, seed).unwrap();
            let xs = values_from_state(&s, &mut OdometerState::from_seed(sp.seed), sp.m as usize);
            let w = brute_force_conditional_mean(&s, &xs, ENUMERATION_CAP).unwrap();
            assert!(lower <= w && w <= upper, "k {k}: {lower} <= {w} <= {upper}");
            assert!((w - special_time_conditional_mean(&s, k).unwrap()).abs() < 1e-9);
        }
    }
}

#[test]
fn more_seeds_shrink_the_standard_error() {
    let spec = MartingaleSpec::lp_bounded(2.0, DifferenceGenerator::Feedback { gain: 0.5 }).unwrap();
    let few: Vec<u64> = (0..400).collect();
    let many: Vec<u64> = (0..800).collect();
    let a = estimate_sup_average(&spec, 200, &few, 1.0).unwrap();
    let b = estimate_sup_average(&spec, 200, &many, 1.0).unwrap();
    let ratio = b.std_error / a.std_error;
    let want = std::f64::consts::FRAC_1_SQRT_2;
    assert!((ratio - want).abs() <= 0.3 * want, "ratio {ratio}");
}
